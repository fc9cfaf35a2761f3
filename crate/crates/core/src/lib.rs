pub mod adversarial;
pub mod backbone;
pub mod data;
mod error;
pub mod explain;
pub mod metrics;
pub mod nn;
pub mod training;

pub use error::{Error, Result};

//! Fingerprint databases, samples, preprocessing and paired batching.

mod batcher;
mod catalog;
mod io;
mod preprocess;
pub mod synth;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

pub use batcher::{BatcherState, DomainBatch, DomainBatcher, StreamState};
pub use catalog::{
    load_catalog, load_database, split_target, Catalog, CatalogWarning, DatabaseEntry, Manifest,
    ManifestRow, TargetProtocol,
};
pub use io::{load_sample, save_mask, save_plane};
pub use preprocess::{preprocess, resize_bilinear, resize_nearest, validate_side};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sensing {
    Optical,
    Capacitive,
    Thermal,
    Synthetic,
}

impl std::str::FromStr for Sensing {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "optical" => Ok(Sensing::Optical),
            "capacitive" => Ok(Sensing::Capacitive),
            "thermal" => Ok(Sensing::Thermal),
            "synthetic" => Ok(Sensing::Synthetic),
            other => Err(crate::Error::Invalid(format!("unknown sensing `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Source,
    Target,
}

impl Domain {
    /// Synthetic databases are the annotated source domain; every real
    /// sensor is a target.
    pub fn for_sensing(sensing: Sensing) -> Self {
        match sensing {
            Sensing::Synthetic => Domain::Source,
            _ => Domain::Target,
        }
    }

    /// Discriminator label: 0 for source, 1 for target.
    pub fn label(self) -> f64 {
        match self {
            Domain::Source => 0.0,
            Domain::Target => 1.0,
        }
    }
}

/// One grayscale fingerprint with its optional ROI mask.
#[derive(Clone, Debug, PartialEq)]
pub struct FingerprintSample {
    /// `(height, width)` intensities in `[0, 1]`.
    pub image: Array2<f64>,
    /// Same shape as `image`; 1 marks the foreground ROI.
    pub mask: Option<Array2<u8>>,
    pub domain: Domain,
    pub database: String,
    pub id: String,
    /// `(width, height)` of the image as stored on disk.
    pub native_size: (usize, usize),
}

impl FingerprintSample {
    /// `(width, height)` of the current image.
    pub fn size(&self) -> (usize, usize) {
        let (h, w) = self.image.dim();
        (w, h)
    }

    pub fn with_origin(mut self, database: impl Into<String>, domain: Domain) -> Self {
        self.database = database.into();
        self.domain = domain;
        self
    }
}

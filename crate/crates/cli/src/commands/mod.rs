pub mod eval;
pub mod gradcam;
pub mod report;
pub mod synthdata;
pub mod train;

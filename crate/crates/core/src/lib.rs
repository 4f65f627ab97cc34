//! Volumetric CNN + transformer regression of lung function (FVC, FEV1) from
//! chest CT volumes, with the supporting preprocessing, augmentation,
//! training, phantom-cohort and agreement-statistics machinery.

pub mod augment;
pub mod cohort;
pub mod config;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod model;
pub mod phantom;
pub mod tensor;
pub mod train;
pub mod volume;

pub use error::{Error, Result};

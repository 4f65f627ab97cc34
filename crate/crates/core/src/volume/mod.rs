//! Volumetric scans: canonical on-disk format, NIfTI-1 import, and the
//! preprocessing chain (isotropic resampling, centered pad/crop, HU
//! normalization) that produces the fixed model input grid.

mod io;
mod nifti;
mod preprocess;

use serde::{Deserialize, Serialize};

use crate::error::{contract_err, Result};

pub use io::{load_volume, save_volume, volume_paths, VolumeHeader};
pub use nifti::import_nifti;
pub use preprocess::{
    normalize_intensity, pad_crop_to_cube, preprocess, resample_isotropic, sample_trilinear,
    HU_AIR, HU_CLAMP_HIGH, HU_CLAMP_LOW, ISOTROPIC_MM,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Intensity {
    #[serde(rename = "HU")]
    Hu,
    #[serde(rename = "norm255")]
    Norm255,
}

/// Voxel grid with physical spacing. Axis order is `[z, y, x]` and the flat
/// buffer is x-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    dims: [usize; 3],
    spacing_mm: [f64; 3],
    values: Vec<f32>,
    intensity: Intensity,
}

impl Volume {
    pub fn new(
        dims: [usize; 3],
        spacing_mm: [f64; 3],
        values: Vec<f32>,
        intensity: Intensity,
    ) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(contract_err!("volume dims must be >= 1, got {dims:?}"));
        }
        if spacing_mm.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(contract_err!(
                "volume spacing must be positive, got {spacing_mm:?}"
            ));
        }
        let n = dims.iter().product::<usize>();
        if values.len() != n {
            return Err(contract_err!(
                "dims {dims:?} need {n} values, got {}",
                values.len()
            ));
        }
        Ok(Self {
            dims,
            spacing_mm,
            values,
            intensity,
        })
    }

    pub fn filled(dims: [usize; 3], spacing_mm: [f64; 3], value: f32, intensity: Intensity) -> Result<Self> {
        let n = dims.iter().product();
        Self::new(dims, spacing_mm, vec![value; n], intensity)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing_mm(&self) -> [f64; 3] {
        self.spacing_mm
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    pub fn intensity(&self) -> Intensity {
        self.intensity
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn index(&self, z: usize, y: usize, x: usize) -> usize {
        (z * self.dims[1] + y) * self.dims[2] + x
    }

    #[inline]
    pub fn get(&self, z: usize, y: usize, x: usize) -> f32 {
        self.values[self.index(z, y, x)]
    }

    /// Copy with new values and the same geometry.
    pub fn with_values(&self, values: Vec<f32>) -> Result<Self> {
        Self::new(self.dims, self.spacing_mm, values, self.intensity)
    }

    /// Voxel volume in millilitres.
    pub fn voxel_ml(&self) -> f64 {
        self.spacing_mm.iter().product::<f64>() / 1000.0
    }

    pub fn is_cube(&self, n: usize) -> bool {
        self.dims == [n, n, n]
    }
}

use std::collections::HashMap;

use crate::cohort::CohortSample;
use crate::error::{contract_err, Result};
use crate::volume::{load_volume, preprocess, Intensity, Volume};

/// Supplies the normalized model-input cube for a sample.
pub trait VolumeSource: Sync {
    fn load(&self, sample: &CohortSample) -> Result<Volume>;
}

/// Reads volumes from `sample.volume_path`. HU volumes are preprocessed on
/// the fly; already-normalized volumes must match the cube size.
#[derive(Debug, Clone)]
pub struct DiskSource {
    pub cube: usize,
}

impl VolumeSource for DiskSource {
    fn load(&self, sample: &CohortSample) -> Result<Volume> {
        let v = load_volume(&sample.volume_path)?;
        match v.intensity() {
            Intensity::Hu => preprocess(&v, self.cube),
            Intensity::Norm255 if v.is_cube(self.cube) => Ok(v),
            Intensity::Norm255 => Err(contract_err!(
                "{}: normalized volume is {:?}, expected {}³",
                sample.volume_path.display(),
                v.dims(),
                self.cube
            )),
        }
    }
}

/// Preprocessed volumes held in memory, keyed by (subject, scan).
#[derive(Debug, Clone, Default)]
pub struct MemorySource {
    volumes: HashMap<(String, String), Volume>,
}

impl MemorySource {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, sample: &CohortSample, v: Volume) {
        self.volumes
            .insert((sample.subject_id.clone(), sample.scan_id.clone()), v);
    }

    /// Loads every sample once through `inner`.
    pub fn preload(inner: &dyn VolumeSource, samples: &[CohortSample]) -> Result<Self> {
        let mut s = Self::new();
        for x in samples {
            s.insert(x, inner.load(x)?);
        }
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.volumes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.volumes.is_empty()
    }
}

impl VolumeSource for MemorySource {
    fn load(&self, sample: &CohortSample) -> Result<Volume> {
        self.volumes
            .get(&(sample.subject_id.clone(), sample.scan_id.clone()))
            .cloned()
            .ok_or_else(|| {
                contract_err!(
                    "no volume for subject {} scan {}",
                    sample.subject_id,
                    sample.scan_id
                )
            })
    }
}

//! Cohort records and the manifest CSV that lists them.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{contract_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Fvc,
    Fev1,
}

impl Target {
    pub fn as_str(self) -> &'static str {
        match self {
            Target::Fvc => "fvc",
            Target::Fev1 => "fev1",
        }
    }
}

impl std::str::FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fvc" => Ok(Target::Fvc),
            "fev1" => Ok(Target::Fev1),
            other => Err(Error::Config(vec![format!("unknown target {other:?} (fvc|fev1)")])),
        }
    }
}

/// Patient demographics, coded as sex (female 0, male 1) and smoking status
/// (current 0, former 1). Units: years, inches, pounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemographicsRecord {
    pub age: f64,
    pub sex: u8,
    pub height_in: f64,
    pub weight_lb: f64,
    pub smoking_status: u8,
    pub cigs_per_day: f64,
    pub smoke_years: f64,
}

impl DemographicsRecord {
    pub const FEATURES: usize = 7;

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.age > 0.0) {
            bad.push(format!("age {} must be positive", self.age));
        }
        if !(self.height_in > 0.0) {
            bad.push(format!("height {} must be positive", self.height_in));
        }
        if !(self.weight_lb > 0.0) {
            bad.push(format!("weight {} must be positive", self.weight_lb));
        }
        if self.sex > 1 {
            bad.push(format!("sex code {} not in {{0,1}}", self.sex));
        }
        if self.smoking_status > 1 {
            bad.push(format!("smoking status code {} not in {{0,1}}", self.smoking_status));
        }
        if !(self.cigs_per_day >= 0.0) || !(self.smoke_years >= 0.0) {
            bad.push("smoking history must be non-negative".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(contract_err!("invalid demographics: {}", bad.join("; ")))
        }
    }

    /// Raw feature vector in field order; no standardization.
    pub fn features(&self) -> [f64; Self::FEATURES] {
        [
            self.age,
            f64::from(self.sex),
            self.height_in,
            self.weight_lb,
            f64::from(self.smoking_status),
            self.cigs_per_day,
            self.smoke_years,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PftRecord {
    pub fvc_l: f64,
    pub fev1_l: f64,
}

impl PftRecord {
    pub fn validate(&self) -> Result<()> {
        if !(self.fvc_l.is_finite() && self.fev1_l.is_finite() && self.fev1_l > 0.0 && self.fev1_l <= self.fvc_l) {
            return Err(contract_err!(
                "spirometry must satisfy 0 < FEV1 <= FVC, got FEV1 {} FVC {}",
                self.fev1_l,
                self.fvc_l
            ));
        }
        Ok(())
    }

    pub fn value(&self, target: Target) -> f64 {
        match target {
            Target::Fvc => self.fvc_l,
            Target::Fev1 => self.fev1_l,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CohortSample {
    pub subject_id: String,
    pub scan_id: String,
    pub volume_path: PathBuf,
    pub demographics: DemographicsRecord,
    pub pft: PftRecord,
    /// Optional subgroup label; absent in the base manifest schema.
    pub emphysema: Option<bool>,
}

impl CohortSample {
    pub fn validate(&self) -> Result<()> {
        if self.subject_id.trim().is_empty() {
            return Err(contract_err!("empty subject_id (scan {:?})", self.scan_id));
        }
        self.demographics
            .validate()
            .and_then(|_| self.pft.validate())
            .map_err(|e| contract_err!("subject {} scan {}: {e}", self.subject_id, self.scan_id))
    }
}

/// One manifest row as it appears on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub subject_id: String,
    pub scan_id: String,
    pub volume_path: String,
    pub age: f64,
    pub sex: u8,
    pub height_in: f64,
    pub weight_lb: f64,
    pub smoking_status: u8,
    pub cigs_per_day: f64,
    pub smoke_years: f64,
    pub fvc_l: f64,
    pub fev1_l: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emphysema: Option<u8>,
}

impl ManifestRow {
    pub fn from_sample(s: &CohortSample) -> Self {
        let d = &s.demographics;
        Self {
            subject_id: s.subject_id.clone(),
            scan_id: s.scan_id.clone(),
            volume_path: s.volume_path.to_string_lossy().into_owned(),
            age: d.age,
            sex: d.sex,
            height_in: d.height_in,
            weight_lb: d.weight_lb,
            smoking_status: d.smoking_status,
            cigs_per_day: d.cigs_per_day,
            smoke_years: d.smoke_years,
            fvc_l: s.pft.fvc_l,
            fev1_l: s.pft.fev1_l,
            emphysema: s.emphysema.map(u8::from),
        }
    }

    /// Relative volume paths resolve against `base`.
    pub fn into_sample(self, base: Option<&Path>) -> CohortSample {
        let p = PathBuf::from(&self.volume_path);
        let volume_path = match base {
            Some(b) if p.is_relative() => b.join(p),
            _ => p,
        };
        CohortSample {
            subject_id: self.subject_id,
            scan_id: self.scan_id,
            volume_path,
            demographics: DemographicsRecord {
                age: self.age,
                sex: self.sex,
                height_in: self.height_in,
                weight_lb: self.weight_lb,
                smoking_status: self.smoking_status,
                cigs_per_day: self.cigs_per_day,
                smoke_years: self.smoke_years,
            },
            pft: PftRecord {
                fvc_l: self.fvc_l,
                fev1_l: self.fev1_l,
            },
            emphysema: self.emphysema.map(|e| e != 0),
        }
    }
}

pub const MANIFEST_HEADER: [&str; 12] = [
    "subject_id",
    "scan_id",
    "volume_path",
    "age",
    "sex",
    "height_in",
    "weight_lb",
    "smoking_status",
    "cigs_per_day",
    "smoke_years",
    "fvc_l",
    "fev1_l",
];

/// Reads and validates a manifest. Relative volume paths resolve against
/// `volume_dir` when given, else against the manifest's own directory.
pub fn read_manifest(path: &Path, volume_dir: Option<&Path>) -> Result<Vec<CohortSample>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let headers = rdr.headers().map_err(|e| Error::csv(path, e))?.clone();
    let missing: Vec<&str> = MANIFEST_HEADER
        .iter()
        .copied()
        .filter(|h| !headers.iter().any(|c| c == *h))
        .collect();
    if !missing.is_empty() {
        return Err(Error::Format(format!(
            "{}: manifest header lacks {}",
            path.display(),
            missing.join(", ")
        )));
    }
    let base = volume_dir
        .map(Path::to_path_buf)
        .or_else(|| path.parent().map(Path::to_path_buf));
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<ManifestRow>().enumerate() {
        let row = row.map_err(|e| Error::csv(path, e))?;
        let sample = row.into_sample(base.as_deref());
        sample
            .validate()
            .map_err(|e| Error::Format(format!("{} row {}: {e}", path.display(), i + 2)))?;
        out.push(sample);
    }
    Ok(out)
}

pub fn write_manifest(path: &Path, samples: &[CohortSample]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for s in samples {
        w.serialize(ManifestRow::from_sample(s))
            .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

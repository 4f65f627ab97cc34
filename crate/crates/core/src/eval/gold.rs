//! Spirometric COPD classification and severity staging.

use serde::{Deserialize, Serialize};

use crate::cohort::DemographicsRecord;
use crate::error::{contract_err, Error, Result};

pub const COPD_RATIO: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GoldStage {
    #[serde(rename = "NonCOPD")]
    NonCopd,
    I,
    II,
    III,
    IV,
}

impl GoldStage {
    pub const ALL: [GoldStage; 5] = [
        GoldStage::NonCopd,
        GoldStage::I,
        GoldStage::II,
        GoldStage::III,
        GoldStage::IV,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            GoldStage::NonCopd => "NonCOPD",
            GoldStage::I => "I",
            GoldStage::II => "II",
            GoldStage::III => "III",
            GoldStage::IV => "IV",
        }
    }

    pub fn is_copd(self) -> bool {
        self != GoldStage::NonCopd
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CopdStatus {
    #[serde(rename = "COPD")]
    Copd,
    #[serde(rename = "NonCOPD")]
    NonCopd,
}

/// COPD iff FEV1/FVC is strictly below 0.7.
pub fn gold_copd_classify(fev1: f64, fvc: f64) -> Result<CopdStatus> {
    if !(fvc > 0.0) || !fev1.is_finite() || !fvc.is_finite() {
        return Err(contract_err!("COPD classification needs FVC > 0, got FEV1 {fev1} FVC {fvc}"));
    }
    Ok(if fev1 / fvc < COPD_RATIO {
        CopdStatus::Copd
    } else {
        CopdStatus::NonCopd
    })
}

/// Severity from FEV1 % predicted: I ≥ 80, II ≥ 50, III ≥ 30, IV below.
pub fn gold_stage(fev1: f64, fvc: f64, fev1_pct_predicted: f64) -> Result<GoldStage> {
    if gold_copd_classify(fev1, fvc)? == CopdStatus::NonCopd {
        return Ok(GoldStage::NonCopd);
    }
    if !fev1_pct_predicted.is_finite() || fev1_pct_predicted < 0.0 {
        return Err(contract_err!("FEV1 % predicted {fev1_pct_predicted} is invalid"));
    }
    Ok(match fev1_pct_predicted {
        p if p >= 80.0 => GoldStage::I,
        p if p >= 50.0 => GoldStage::II,
        p if p >= 30.0 => GoldStage::III,
        _ => GoldStage::IV,
    })
}

/// Linear reference equation for predicted-normal FEV1 in litres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceCoefficients {
    pub a0: f64,
    pub a_age: f64,
    pub a_height: f64,
    pub a_sex: f64,
}

pub fn reference_fev1(d: &DemographicsRecord, coeffs: Option<&ReferenceCoefficients>) -> Result<f64> {
    let c = coeffs.ok_or_else(|| {
        Error::Config(vec![
            "eval.reference_fev1 coefficients are required for GOLD staging".into(),
        ])
    })?;
    Ok(c.a0 + c.a_age * d.age + c.a_height * d.height_in + c.a_sex * f64::from(d.sex))
}

pub fn fev1_pct_predicted(fev1: f64, d: &DemographicsRecord, coeffs: Option<&ReferenceCoefficients>) -> Result<f64> {
    let r = reference_fev1(d, coeffs)?;
    if !(r > 0.0) {
        return Err(contract_err!("reference FEV1 {r} is not positive"));
    }
    Ok(100.0 * fev1 / r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    /// `counts[actual][predicted]` in `GoldStage::ALL` order.
    pub counts: [[usize; 5]; 5],
    /// Binary collapse `[[TN, FP], [FN, TP]]` with COPD as positive.
    pub binary: [[usize; 2]; 2],
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
}

pub fn confusion_matrix(actual: &[GoldStage], predicted: &[GoldStage]) -> Result<ConfusionMatrix> {
    if actual.len() != predicted.len() {
        return Err(contract_err!(
            "confusion matrix label counts differ: {} vs {}",
            actual.len(),
            predicted.len()
        ));
    }
    let mut counts = [[0usize; 5]; 5];
    let mut binary = [[0usize; 2]; 2];
    for (&a, &p) in actual.iter().zip(predicted) {
        counts[a.index()][p.index()] += 1;
        binary[usize::from(a.is_copd())][usize::from(p.is_copd())] += 1;
    }
    let [[tn, fp], [fn_, tp]] = binary;
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    Ok(ConfusionMatrix {
        counts,
        binary,
        sensitivity: ratio(tp, tp + fn_),
        specificity: ratio(tn, tn + fp),
    })
}

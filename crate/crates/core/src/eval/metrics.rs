use serde::{Deserialize, Serialize};

use super::PredictionPair;
use crate::error::{contract_err, Result};

pub const BA_ORIENTATION: &str = "predicted - actual";
const LOA_Z: f64 = 1.96;

fn nonempty(pairs: &[PredictionPair], what: &str) -> Result<()> {
    if pairs.is_empty() {
        Err(contract_err!("{what} of zero pairs"))
    } else {
        Ok(())
    }
}

pub fn mae(pairs: &[PredictionPair]) -> Result<f64> {
    nonempty(pairs, "MAE")?;
    Ok(pairs.iter().map(PredictionPair::abs_error).sum::<f64>() / pairs.len() as f64)
}

/// Per-sample `100·|actual − predicted| / actual`.
pub fn percent_errors(pairs: &[PredictionPair]) -> Result<Vec<f64>> {
    let bad: Vec<String> = pairs
        .iter()
        .filter(|p| !(p.actual > 0.0))
        .map(|p| format!("{}/{}", p.subject_id, p.scan_id))
        .collect();
    if !bad.is_empty() {
        return Err(contract_err!(
            "percent error needs positive actual values; offending ids: {}",
            bad.join(", ")
        ));
    }
    Ok(pairs.iter().map(|p| 100.0 * p.abs_error() / p.actual).collect())
}

/// Mean of the per-sample percent errors.
pub fn percent_error(pairs: &[PredictionPair]) -> Result<f64> {
    nonempty(pairs, "percent error")?;
    let e = percent_errors(pairs)?;
    Ok(e.iter().sum::<f64>() / e.len() as f64)
}

pub fn r_squared(pairs: &[PredictionPair]) -> Result<f64> {
    if pairs.len() < 2 {
        return Err(contract_err!("R² needs at least 2 pairs, got {}", pairs.len()));
    }
    let n = pairs.len() as f64;
    let mean = pairs.iter().map(|p| p.actual).sum::<f64>() / n;
    let ss_tot: f64 = pairs.iter().map(|p| (p.actual - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(contract_err!("R² undefined: actual values have zero variance"));
    }
    let ss_res: f64 = pairs.iter().map(|p| (p.actual - p.predicted).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlandAltmanSummary {
    pub mean_diff: f64,
    pub sd_diff: f64,
    pub loa_low: f64,
    pub loa_high: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlandAltmanPoint {
    /// `(actual + predicted) / 2`
    pub mean: f64,
    /// `predicted − actual`
    pub diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlandAltman {
    pub summary: BlandAltmanSummary,
    pub points: Vec<BlandAltmanPoint>,
}

/// Mean difference ± 1.96 sample standard deviations.
pub fn bland_altman(pairs: &[PredictionPair]) -> Result<BlandAltman> {
    if pairs.len() < 2 {
        return Err(contract_err!("Bland-Altman needs at least 2 pairs, got {}", pairs.len()));
    }
    let points: Vec<BlandAltmanPoint> = pairs
        .iter()
        .map(|p| BlandAltmanPoint {
            mean: (p.actual + p.predicted) / 2.0,
            diff: p.predicted - p.actual,
        })
        .collect();
    let n = points.len() as f64;
    let mean_diff = points.iter().map(|p| p.diff).sum::<f64>() / n;
    let var = points.iter().map(|p| (p.diff - mean_diff).powi(2)).sum::<f64>() / (n - 1.0);
    let sd_diff = var.sqrt();
    Ok(BlandAltman {
        summary: BlandAltmanSummary {
            mean_diff,
            sd_diff,
            loa_low: mean_diff - LOA_Z * sd_diff,
            loa_high: mean_diff + LOA_Z * sd_diff,
        },
        points,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub error_pct: f64,
    /// Fraction of samples with percent error at or below `error_pct`.
    pub fraction: f64,
}

/// Empirical CDF of per-sample percent error at `bins + 1` evenly spaced
/// thresholds from 0 to the largest error.
pub fn cumulative_error_distribution(pairs: &[PredictionPair], bins: usize) -> Result<Vec<CdfPoint>> {
    nonempty(pairs, "error distribution")?;
    if bins == 0 {
        return Err(contract_err!("error distribution needs at least one bin"));
    }
    let mut e = percent_errors(pairs)?;
    e.sort_by(f64::total_cmp);
    let max = *e.last().expect("non-empty");
    let n = e.len() as f64;
    let steps = if max == 0.0 { 0 } else { bins };
    Ok((0..=steps)
        .map(|k| {
            let t = if k == steps { max } else { max * k as f64 / bins as f64 };
            let below = e.partition_point(|&x| x <= t);
            CdfPoint {
                error_pct: t,
                fraction: below as f64 / n,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    pub mae_l: f64,
    pub pct_error: f64,
    pub r2: Option<f64>,
    pub bland_altman: Option<BlandAltmanSummary>,
}

/// Headline metrics; R² and Bland–Altman are omitted when undefined.
pub fn metrics_report(pairs: &[PredictionPair]) -> Result<MetricsReport> {
    Ok(MetricsReport {
        n: pairs.len(),
        mae_l: mae(pairs)?,
        pct_error: percent_error(pairs)?,
        r2: r_squared(pairs).ok(),
        bland_altman: bland_altman(pairs).ok().map(|b| b.summary),
    })
}

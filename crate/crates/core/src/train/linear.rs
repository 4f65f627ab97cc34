use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cohort::{CohortSample, DemographicsRecord, Target};
use crate::error::{contract_err, Error, Result};

/// Ordinary least squares on the raw demographic features plus intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearBaseline {
    pub target: Target,
    pub intercept: f64,
    pub coefficients: [f64; DemographicsRecord::FEATURES],
    /// The design matrix was rank deficient; the minimum-norm solution was used.
    pub rank_deficient: bool,
    pub rank: usize,
}

impl LinearBaseline {
    pub fn predict(&self, d: &DemographicsRecord) -> f64 {
        self.intercept
            + self
                .coefficients
                .iter()
                .zip(d.features())
                .map(|(b, x)| b * x)
                .sum::<f64>()
    }
}

pub fn fit_linear_baseline(samples: &[CohortSample], target: Target) -> Result<LinearBaseline> {
    let rows: Vec<([f64; 7], f64)> = samples
        .iter()
        .map(|s| (s.demographics.features(), s.pft.value(target)))
        .collect();
    fit_ols(&rows, target)
}

/// OLS from raw feature rows.
pub fn fit_ols(rows: &[([f64; 7], f64)], target: Target) -> Result<LinearBaseline> {
    let p = DemographicsRecord::FEATURES + 1;
    if rows.len() < p {
        return Err(contract_err!(
            "linear baseline needs at least {p} samples, got {}",
            rows.len()
        ));
    }
    let n = rows.len();
    let x = DMatrix::from_fn(n, p, |i, j| if j == 0 { 1.0 } else { rows[i].0[j - 1] });
    let y = DVector::from_iterator(n, rows.iter().map(|r| r.1));
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("linear baseline inputs contain non-finite values".into()));
    }
    // scale columns to unit max so the rank tolerance is meaningful
    let scales: Vec<f64> = (0..p)
        .map(|j| {
            let m = x.column(j).amax();
            if m > 0.0 {
                m
            } else {
                1.0
            }
        })
        .collect();
    let xs = DMatrix::from_fn(n, p, |i, j| x[(i, j)] / scales[j]);
    let svd = xs.svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * (n.max(p) as f64) * f64::EPSILON;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    let beta = svd
        .solve(&y, tol)
        .map_err(|e| contract_err!("least squares failed: {e}"))?;
    let mut coefficients = [0.0; 7];
    for (j, c) in coefficients.iter_mut().enumerate() {
        *c = beta[j + 1] / scales[j + 1];
    }
    Ok(LinearBaseline {
        target,
        intercept: beta[0] / scales[0],
        coefficients,
        rank_deficient: rank < p,
        rank,
    })
}

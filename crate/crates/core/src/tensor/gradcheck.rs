//! Central finite-difference verification of tape gradients (64-bit only).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand::seq::index::sample;
use serde::Serialize;

use super::{Tape, Tensor, Var};
use crate::error::{contract_err, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CheckMode {
    /// Every element of every tensor.
    Elementwise,
    /// Up to `per_tensor` seeded elements per tensor, plus one random-direction
    /// probe per tensor so every element still participates.
    Sampled { per_tensor: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct GradCheckConfig {
    pub h: f64,
    pub tol: f64,
    /// Denominator floor for the relative error.
    pub abs_floor: f64,
    pub mode: CheckMode,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            h: 1e-5,
            tol: 1e-4,
            abs_floor: 1e-6,
            mode: CheckMode::Elementwise,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ParamCheck {
    pub tensor: usize,
    /// `None` for a random-direction probe over the whole tensor.
    pub element: Option<usize>,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
    /// Failure explained by a slope discontinuity (relu/abs kink) at the probe.
    pub excluded: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct FiniteDiffReport {
    pub checks: Vec<ParamCheck>,
    pub max_rel_err: f64,
    pub excluded: usize,
    pub passed: bool,
}

impl FiniteDiffReport {
    pub fn worst(&self) -> Option<&ParamCheck> {
        self.checks
            .iter()
            .filter(|c| !c.excluded)
            .max_by(|a, b| a.rel_err.total_cmp(&b.rel_err))
    }
}

/// Compares tape gradients of `f` against central differences.
///
/// `f` records a scalar loss on the given tape from the registered parameter
/// vars; it is re-run for every perturbation and must be deterministic.
pub fn finite_diff_check<F>(
    f: F,
    params: &[Tensor<f64>],
    cfg: &GradCheckConfig,
) -> Result<FiniteDiffReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    if !(cfg.h > 0.0) {
        return Err(contract_err!("finite-difference step must be positive"));
    }
    let eval = |ps: &[Tensor<f64>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ps.iter().map(|p| tape.param(p.clone())).collect();
        let loss = f(&mut tape, &vars)?;
        tape.value(loss)
            .item()
            .ok_or_else(|| contract_err!("loss function must return a scalar"))
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    let f0 = tape
        .value(loss)
        .item()
        .ok_or_else(|| contract_err!("loss function must return a scalar"))?;
    let grads = tape.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .map(|&v| grads.data(v).map(<[f64]>::to_vec).unwrap_or_default())
        .collect();
    drop(tape);

    let mut work: Vec<Tensor<f64>> = params.to_vec();
    let mut checks = Vec::new();
    let h = cfg.h;

    let mut rng = match cfg.mode {
        CheckMode::Sampled { seed, .. } => Some(ChaCha8Rng::seed_from_u64(seed)),
        CheckMode::Elementwise => None,
    };

    for (ti, p) in params.iter().enumerate() {
        let n = p.numel();
        let elements: Vec<usize> = match (&cfg.mode, rng.as_mut()) {
            (CheckMode::Sampled { per_tensor, .. }, Some(rng)) if n > *per_tensor => {
                let mut idx = sample(rng, n, *per_tensor).into_vec();
                idx.sort_unstable();
                idx
            }
            _ => (0..n).collect(),
        };
        for e in elements {
            let orig = p.data()[e];
            work[ti].data_mut()[e] = orig + h;
            let fp = eval(&work)?;
            work[ti].data_mut()[e] = orig - h;
            let fm = eval(&work)?;
            work[ti].data_mut()[e] = orig;
            let a = analytic[ti].get(e).copied().unwrap_or(0.0);
            checks.push(judge(ti, Some(e), a, f0, fp, fm, h, cfg));
        }
        if let Some(rng) = rng.as_mut() {
            let dir = Tensor::<f64>::randn(p.shape(), 1.0, rng);
            let a: f64 = analytic[ti]
                .iter()
                .zip(dir.data())
                .map(|(g, u)| g * u)
                .sum();
            for (w, (&o, &u)) in work[ti].data_mut().iter_mut().zip(p.data().iter().zip(dir.data())) {
                *w = o + h * u;
            }
            let fp = eval(&work)?;
            for (w, (&o, &u)) in work[ti].data_mut().iter_mut().zip(p.data().iter().zip(dir.data())) {
                *w = o - h * u;
            }
            let fm = eval(&work)?;
            work[ti].data_mut().copy_from_slice(p.data());
            checks.push(judge(ti, None, a, f0, fp, fm, h, cfg));
        }
    }

    let max_rel_err = checks
        .iter()
        .filter(|c| !c.excluded)
        .map(|c| c.rel_err)
        .fold(0.0, f64::max);
    let excluded = checks.iter().filter(|c| c.excluded).count();
    Ok(FiniteDiffReport {
        passed: max_rel_err < cfg.tol,
        checks,
        max_rel_err,
        excluded,
    })
}

#[allow(clippy::too_many_arguments)]
fn judge(
    tensor: usize,
    element: Option<usize>,
    analytic: f64,
    f0: f64,
    fp: f64,
    fm: f64,
    h: f64,
    cfg: &GradCheckConfig,
) -> ParamCheck {
    let numeric = (fp - fm) / (2.0 * h);
    let rel_err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(cfg.abs_floor);
    let forward = (fp - f0) / h;
    let backward = (f0 - fm) / h;
    let excluded = rel_err >= cfg.tol && (forward - backward).abs() > (analytic - numeric).abs();
    ParamCheck {
        tensor,
        element,
        analytic,
        numeric,
        rel_err,
        excluded,
    }
}

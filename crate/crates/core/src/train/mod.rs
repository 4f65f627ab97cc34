//! Subject-level splitting, Adam, the training loop with best-checkpoint
//! selection, and the demographics-only least-squares baseline.

mod checkpoint;
mod linear;
mod source;

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{apply_plan, sample_plan, sample_seed, AugmentConfig};
use crate::cohort::CohortSample;
use crate::error::{contract_err, Error, Result};
use crate::model::{forward, mae_loss, ModelParams};
use crate::tensor::{Real, Tape, Tensor};
use crate::volume::Volume;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use linear::{fit_linear_baseline, fit_ols, LinearBaseline};
pub use source::{DiskSource, MemorySource, VolumeSource};

/// Environment variable overriding the worker thread count.
pub const THREADS_ENV: &str = "BCT_THREADS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub split_fractions: [f64; 3],
    /// Start the final head bias at the mean training target.
    pub init_output_bias: bool,
    /// Worker threads; `None` defers to the environment, then to rayon.
    pub threads: Option<usize>,
    /// Force a single worker thread.
    pub deterministic: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 2,
            epochs: 100,
            seed: 0,
            split_fractions: [0.8, 0.1, 0.1],
            init_output_bias: true,
            threads: None,
            deterministic: false,
        }
    }
}

impl TrainConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut bad = Vec::new();
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            bad.push(format!("train.lr {} must be positive", self.lr));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            bad.push("train.beta1 and train.beta2 must lie in [0, 1)".into());
        }
        if !(self.eps > 0.0) {
            bad.push("train.eps must be positive".into());
        }
        if self.batch_size == 0 {
            bad.push("train.batch_size must be at least 1".into());
        }
        let f = self.split_fractions;
        if f.iter().any(|&x| !(0.0..=1.0).contains(&x)) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            bad.push(format!("train.split_fractions {f:?} must be in [0,1] and sum to 1"));
        }
        if self.threads == Some(0) {
            bad.push("train.threads must be positive".into());
        }
        bad
    }

    pub fn validate(&self) -> Result<()> {
        let bad = self.violations();
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad))
        }
    }

    /// Single thread when deterministic, else the configured count, else
    /// `BCT_THREADS`, else rayon's default.
    pub fn thread_count(&self) -> Option<usize> {
        if self.deterministic {
            return Some(1);
        }
        self.threads.or_else(|| {
            std::env::var(THREADS_ENV)
                .ok()
                .and_then(|s| s.trim().parse().ok())
                .filter(|&n| n > 0)
        })
    }

    pub fn thread_pool(&self) -> Result<rayon::ThreadPool> {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = self.thread_count() {
            b = b.num_threads(n);
        }
        b.build()
            .map_err(|e| contract_err!("cannot build thread pool: {e}"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<CohortSample>,
    pub val: Vec<CohortSample>,
    pub test: Vec<CohortSample>,
}

/// Subject counts per split: `round(f·n)` for validation and test, the
/// remainder to training.
pub fn split_counts(n_subjects: usize, fractions: [f64; 3]) -> [usize; 3] {
    let n_val = ((fractions[1] * n_subjects as f64).round() as usize).min(n_subjects);
    let n_test = ((fractions[2] * n_subjects as f64).round() as usize).min(n_subjects - n_val);
    [n_subjects - n_val - n_test, n_val, n_test]
}

/// Partitions by unique subject so every scan of a subject lands together.
pub fn split_subjects(samples: &[CohortSample], fractions: [f64; 3], seed: u64) -> Result<Split> {
    if samples.is_empty() {
        return Err(contract_err!("cannot split an empty cohort"));
    }
    let probe = TrainConfig {
        split_fractions: fractions,
        ..TrainConfig::default()
    };
    if let Some(v) = probe.violations().into_iter().find(|v| v.contains("split")) {
        return Err(Error::Config(vec![v]));
    }
    // sorted first so the result does not depend on manifest order
    let mut subjects: Vec<&str> = samples
        .iter()
        .map(|s| s.subject_id.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    subjects.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let [_, n_val, n_test] = split_counts(subjects.len(), fractions);
    let val: BTreeSet<&str> = subjects[..n_val].iter().copied().collect();
    let test: BTreeSet<&str> = subjects[n_val..n_val + n_test].iter().copied().collect();
    let mut split = Split {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for s in samples {
        let id = s.subject_id.as_str();
        let bucket = if val.contains(id) {
            &mut split.val
        } else if test.contains(id) {
            &mut split.test
        } else {
            &mut split.train
        };
        bucket.push(s.clone());
    }
    Ok(split)
}

/// First and second moment estimates, kept in f64.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new<T: Real>(params: &[Tensor<T>]) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|t| vec![0.0; t.numel()]).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// One bias-corrected Adam update at step `t` (1-based).
pub fn adam_step<T: Real>(
    params: &mut [Tensor<T>],
    grads: &[Vec<T>],
    state: &mut AdamState,
    t: u64,
    cfg: &TrainConfig,
) -> Result<()> {
    if t == 0 {
        return Err(contract_err!("adam step counter starts at 1"));
    }
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(contract_err!(
            "adam: {} params, {} grads, {} state slots",
            params.len(),
            grads.len(),
            state.m.len()
        ));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.numel() != g.len() {
            return Err(contract_err!("adam: tensor {i} has {} values but {} grads", p.numel(), g.len()));
        }
        if let Some(j) = g.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!(
                "gradient of tensor {i} element {j} is {:?}",
                g[j]
            )));
        }
    }
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let c1 = 1.0 - b1.powf(t as f64);
    let c2 = 1.0 - b2.powf(t as f64);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        for (k, x) in p.data_mut().iter_mut().enumerate() {
            let gk = g[k].as_f64();
            m[k] = b1 * m[k] + (1.0 - b1) * gk;
            v[k] = b2 * v[k] + (1.0 - b2) * gk * gk;
            let step = cfg.lr * (m[k] / c1) / ((v[k] / c2).sqrt() + cfg.eps);
            *x = T::lit(x.as_f64() - step);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-sample MAE over the epoch; absent for the initial evaluation.
    pub train_loss: Option<f64>,
    pub val_mae: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best: Checkpoint,
    pub last: ModelParams<f32>,
    pub log: Vec<EpochRecord>,
}

/// Predictions for `samples` in order, without augmentation.
pub fn predict_samples(
    params: &ModelParams<f32>,
    samples: &[CohortSample],
    source: &dyn VolumeSource,
) -> Result<Vec<f64>> {
    samples
        .par_iter()
        .map(|s| {
            let v = source.load(s)?;
            crate::model::predict(params, &v, Some(&s.demographics)).map_err(|e| {
                contract_err!("subject {} scan {}: {e}", s.subject_id, s.scan_id)
            })
        })
        .collect()
}

fn mean_abs_error(pred: &[f64], actual: &[f64]) -> f64 {
    pred.iter().zip(actual).map(|(p, a)| (p - a).abs()).sum::<f64>() / pred.len() as f64
}

fn sample_gradient(
    params: &ModelParams<f32>,
    sample: &CohortSample,
    volume: &Volume,
    target: f64,
) -> Result<(f64, Vec<Vec<f32>>)> {
    let mut tape = Tape::new();
    let vars = params.register(&mut tape);
    let y = forward(&mut tape, &vars, params.config(), volume, Some(&sample.demographics))?;
    let loss = mae_loss(&mut tape, &[y], &[target])?;
    let value = tape.value(loss).item().expect("scalar loss").as_f64();
    if !value.is_finite() {
        return Err(Error::NonFinite(format!(
            "loss for subject {} scan {} is {value}",
            sample.subject_id, sample.scan_id
        )));
    }
    let mut grads = tape.backward(loss)?;
    let g = vars
        .all
        .iter()
        .map(|&v| grads.take(v).expect("registered leaf"))
        .collect();
    Ok((value, g))
}

/// Runs the optimization loop. Epoch 0 is the evaluation of the initial
/// parameters; the lowest validation MAE over all epochs is kept.
pub fn train(
    mut params: ModelParams<f32>,
    train_set: &[CohortSample],
    val_set: &[CohortSample],
    cfg: &TrainConfig,
    augment: &AugmentConfig,
    source: &dyn VolumeSource,
    log_path: Option<&Path>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    augment.validate()?;
    if train_set.is_empty() && cfg.epochs > 0 {
        return Err(contract_err!("training split is empty"));
    }
    if val_set.is_empty() {
        return Err(contract_err!("validation split is empty; checkpoint selection needs it"));
    }
    let target = params.config().target;
    let pool = cfg.thread_pool()?;
    let mut log_file = match log_path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            Some(std::fs::File::create(p).map_err(|e| Error::io(p, e))?)
        }
        None => None,
    };
    let mut emit = |rec: &EpochRecord| -> Result<()> {
        log::info!(
            "epoch {} train_loss {:?} val_mae {:.4} ({:.1}s)",
            rec.epoch,
            rec.train_loss,
            rec.val_mae,
            rec.seconds
        );
        if let (Some(f), Some(p)) = (log_file.as_mut(), log_path) {
            let line = serde_json::to_string(rec).map_err(|e| Error::json(p, e))?;
            writeln!(f, "{line}").map_err(|e| Error::io(p, e))?;
        }
        Ok(())
    };

    if cfg.init_output_bias && !train_set.is_empty() {
        let mean = train_set.iter().map(|s| s.pft.value(target)).sum::<f64>() / train_set.len() as f64;
        if let Some(b) = params.get_mut("head.fc3.bias") {
            b.data_mut()[0] = mean as f32;
        }
    }

    let val_actual: Vec<f64> = val_set.iter().map(|s| s.pft.value(target)).collect();
    pool.install(|| {
        let started = Instant::now();
        let val_mae = mean_abs_error(&predict_samples(&params, val_set, source)?, &val_actual);
        let rec0 = EpochRecord {
            epoch: 0,
            train_loss: None,
            val_mae,
            seconds: started.elapsed().as_secs_f64(),
        };
        emit(&rec0)?;
        let mut log = vec![rec0];
        let mut best = Checkpoint {
            params: params.clone(),
            epoch: 0,
            val_mae,
            train: Some(cfg.clone()),
        };
        let mut state = AdamState::new(params.tensors());
        let mut step: u64 = 0;
        let mut order: Vec<usize> = (0..train_set.len()).collect();

        for epoch in 1..=cfg.epochs {
            let started = Instant::now();
            order.sort_unstable();
            let mix = cfg.seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix));
            let mut loss_sum = 0.0;
            for batch in order.chunks(cfg.batch_size) {
                let results: Vec<(f64, Vec<Vec<f32>>)> = batch
                    .par_iter()
                    .map(|&i| {
                        let s = &train_set[i];
                        let v = source.load(s)?;
                        let seed = sample_seed(cfg.seed, &s.subject_id, &s.scan_id, epoch as u64);
                        let plan = sample_plan(augment, seed)?;
                        let v = apply_plan(&v, &plan)?;
                        sample_gradient(&params, s, &v, s.pft.value(target))
                    })
                    .collect::<Result<_>>()?;
                // summed in batch order so the result is schedule independent
                let inv = 1.0 / results.len() as f32;
                let mut grads: Vec<Vec<f32>> =
                    params.tensors().iter().map(|t| vec![0.0; t.numel()]).collect();
                for (loss, g) in &results {
                    loss_sum += loss;
                    for (acc, gi) in grads.iter_mut().zip(g) {
                        for (a, &x) in acc.iter_mut().zip(gi) {
                            *a += x;
                        }
                    }
                }
                grads.iter_mut().flatten().for_each(|a| *a *= inv);
                step += 1;
                adam_step(params.tensors_mut(), &grads, &mut state, step, cfg).map_err(|e| match e {
                    Error::NonFinite(m) => Error::NonFinite(format!("epoch {epoch} step {step}: {m}")),
                    other => other,
                })?;
            }
            let train_loss = loss_sum / train_set.len() as f64;
            let val_mae = mean_abs_error(&predict_samples(&params, val_set, source)?, &val_actual);
            let rec = EpochRecord {
                epoch,
                train_loss: Some(train_loss),
                val_mae,
                seconds: started.elapsed().as_secs_f64(),
            };
            emit(&rec)?;
            log.push(rec);
            if val_mae < best.val_mae {
                best = Checkpoint {
                    params: params.clone(),
                    epoch,
                    val_mae,
                    train: Some(cfg.clone()),
                };
            }
        }
        Ok(TrainOutcome {
            best,
            last: params.clone(),
            log,
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cohort_scale_split_sizes() {
        assert_eq!(split_counts(3619, [0.8, 0.1, 0.1]), [2895, 362, 362]);
        assert_eq!(split_counts(10, [0.8, 0.1, 0.1]), [8, 1, 1]);
        assert_eq!(split_counts(1, [0.8, 0.1, 0.1]), [1, 0, 0]);
    }

    #[test]
    fn thread_count_resolution() {
        let c = TrainConfig {
            deterministic: true,
            threads: Some(8),
            ..Default::default()
        };
        assert_eq!(c.thread_count(), Some(1));
        let c = TrainConfig {
            threads: Some(3),
            ..Default::default()
        };
        assert_eq!(c.thread_count(), Some(3));
    }

    #[test]
    fn bad_config_lists_every_violation() {
        let c = TrainConfig {
            lr: -1.0,
            batch_size: 0,
            split_fractions: [0.5, 0.5, 0.5],
            ..Default::default()
        };
        assert_eq!(c.violations().len(), 3);
    }
}

//! Finite-difference suite over every tape primitive and a whole model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cohort::DemographicsRecord;
use crate::error::Result;
use crate::model::{forward, mae_loss, ModelConfig, ModelParams, ModelVars};
use crate::tensor::{finite_diff_check, FiniteDiffReport, GradCheckConfig, Tape, Tensor, Var};
use crate::volume::{Intensity, Volume};

#[derive(Debug, Clone, Serialize)]
pub struct CaseResult {
    pub name: String,
    pub checks: usize,
    pub excluded: usize,
    pub max_rel_err: f64,
    pub passed: bool,
}

impl CaseResult {
    fn from_report(name: &str, r: &FiniteDiffReport) -> Self {
        Self {
            name: name.to_string(),
            checks: r.checks.len(),
            excluded: r.excluded,
            max_rel_err: r.max_rel_err,
            passed: r.passed,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub cases: Vec<CaseResult>,
    pub max_rel_err: f64,
    pub passed: bool,
}

impl SuiteReport {
    fn new(cases: Vec<CaseResult>) -> Self {
        Self {
            max_rel_err: cases.iter().map(|c| c.max_rel_err).fold(0.0, f64::max),
            passed: cases.iter().all(|c| c.passed),
            cases,
        }
    }
}

type Loss = fn(&mut Tape<f64>, &[Var]) -> Result<Var>;

/// `sum(y ⊙ probe)` where the probe is the last parameter, so every output
/// element gets a distinct upstream gradient.
fn probe(t: &mut Tape<f64>, y: Var, p: Var) -> Result<Var> {
    let z = t.mul(y, p)?;
    Ok(t.sum(z))
}

/// One check per primitive op, each on random inputs in f64.
pub fn primitive_suite(seed: u64, cfg: &GradCheckConfig) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r = |shape: &[usize], std: f64| Tensor::<f64>::randn(shape, std, &mut rng);
    let cases: Vec<(&str, Loss, Vec<Tensor<f64>>)> = vec![
        ("matmul", |t, p| { let y = t.matmul(p[0], p[1])?; probe(t, y, p[2]) }, vec![r(&[3, 4], 1.0), r(&[4, 2], 1.0), r(&[3, 2], 1.0)]),
        ("add", |t, p| { let y = t.add(p[0], p[1])?; probe(t, y, p[2]) }, vec![r(&[2, 3], 1.0), r(&[2, 3], 1.0), r(&[2, 3], 1.0)]),
        ("sub", |t, p| { let y = t.sub(p[0], p[1])?; probe(t, y, p[2]) }, vec![r(&[2, 3], 1.0), r(&[2, 3], 1.0), r(&[2, 3], 1.0)]),
        ("mul", |t, p| { let y = t.mul(p[0], p[1])?; probe(t, y, p[2]) }, vec![r(&[2, 3], 1.0), r(&[2, 3], 1.0), r(&[2, 3], 1.0)]),
        ("scale", |t, p| { let y = t.scale(p[0], -1.7); probe(t, y, p[1]) }, vec![r(&[4], 1.0), r(&[4], 1.0)]),
        ("add_bias", |t, p| { let y = t.add_bias(p[0], p[1])?; probe(t, y, p[2]) }, vec![r(&[3, 4], 1.0), r(&[4], 1.0), r(&[3, 4], 1.0)]),
        ("relu", |t, p| { let y = t.relu(p[0]); probe(t, y, p[1]) }, vec![r(&[10], 1.0), r(&[10], 1.0)]),
        ("gelu", |t, p| { let y = t.gelu(p[0]); probe(t, y, p[1]) }, vec![r(&[10], 2.0), r(&[10], 1.0)]),
        ("abs", |t, p| { let y = t.abs(p[0]); probe(t, y, p[1]) }, vec![r(&[10], 1.0), r(&[10], 1.0)]),
        ("conv3d", |t, p| { let y = t.conv3d(p[0], p[1], p[2], 2)?; probe(t, y, p[3]) },
            vec![r(&[2, 4, 4, 4], 1.0), r(&[3, 2, 2, 2, 2], 0.5), r(&[3], 0.5), r(&[3, 2, 2, 2], 1.0)]),
        ("softmax_lastdim", |t, p| { let y = t.softmax_lastdim(p[0])?; probe(t, y, p[1]) }, vec![r(&[3, 5], 1.0), r(&[3, 5], 1.0)]),
        ("layer_norm", |t, p| { let y = t.layer_norm(p[0], p[1], p[2], 1e-5)?; probe(t, y, p[3]) },
            vec![r(&[3, 6], 2.0), r(&[6], 1.0), r(&[6], 1.0), r(&[3, 6], 1.0)]),
        ("gather", |t, p| { let y = t.gather(p[0], vec![5, 0, 3, 3, 1, 2], vec![2, 3])?; probe(t, y, p[1]) }, vec![r(&[2, 3], 1.0), r(&[2, 3], 1.0)]),
        ("reshape", |t, p| { let y = t.reshape(p[0], &[3, 2])?; probe(t, y, p[1]) }, vec![r(&[2, 3], 1.0), r(&[3, 2], 1.0)]),
        ("transpose", |t, p| { let y = t.transpose(p[0])?; probe(t, y, p[1]) }, vec![r(&[2, 3], 1.0), r(&[3, 2], 1.0)]),
        ("slice_cols", |t, p| { let y = t.slice_cols(p[0], 1, 2)?; probe(t, y, p[1]) }, vec![r(&[3, 4], 1.0), r(&[3, 2], 1.0)]),
        ("concat_rows", |t, p| { let y = t.concat_rows(&[p[0], p[1]])?; probe(t, y, p[2]) }, vec![r(&[1, 3], 1.0), r(&[2, 3], 1.0), r(&[3, 3], 1.0)]),
        ("mean_rows", |t, p| { let y = t.mean_rows(p[0])?; probe(t, y, p[1]) }, vec![r(&[4, 3], 1.0), r(&[1, 3], 1.0)]),
        ("sum", |t, p| { let y = t.sum(p[0]); let sq = t.mul(y, y)?; Ok(t.sum(sq)) }, vec![r(&[2, 3], 1.0)]),
        ("mean", |t, p| { let y = t.mean(p[0]); let sq = t.mul(y, y)?; Ok(t.sum(sq)) }, vec![r(&[2, 3], 1.0)]),
    ];
    let mut out = Vec::with_capacity(cases.len());
    for (name, f, params) in cases {
        let report = finite_diff_check(f, &params, cfg)?;
        out.push(CaseResult::from_report(name, &report));
    }
    Ok(SuiteReport::new(out))
}

fn probe_demographics() -> DemographicsRecord {
    DemographicsRecord {
        age: 63.0,
        sex: 1,
        height_in: 69.0,
        weight_lb: 182.0,
        smoking_status: 1,
        cigs_per_day: 15.0,
        smoke_years: 28.0,
    }
}

/// Checks MAE-loss gradients of the whole model at a seeded random point,
/// with every parameter (biases, gains, shifts included) jittered by ±0.1 so
/// no path is trivially zero.
pub fn model_check(model: &ModelConfig, seed: u64, cfg: &GradCheckConfig) -> Result<FiniteDiffReport> {
    let mut params = ModelParams::<f64>::init(model, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5151);
    for t in params.tensors_mut() {
        for v in t.data_mut() {
            *v += 0.1 * rng.gen_range(-1.0..1.0);
        }
    }
    let n = model.input_cube;
    let values = (0..n * n * n).map(|_| rng.gen_range(0.0..255.0)).collect();
    let volume = Volume::new([n; 3], [1.5; 3], values, Intensity::Norm255)?;
    let demo = probe_demographics();
    finite_diff_check(
        |tape, vars| {
            let mv = ModelVars::bind(model, vars)?;
            let y = forward(tape, &mv, model, &volume, model.use_demographics.then_some(&demo))?;
            mae_loss(tape, &[y], &[3.1])
        },
        params.tensors(),
        cfg,
    )
}

/// Primitive suite plus the given model.
pub fn full_suite(model: &ModelConfig, seed: u64, model_cfg: &GradCheckConfig) -> Result<SuiteReport> {
    let mut s = primitive_suite(seed, &GradCheckConfig::default())?;
    let m = model_check(model, seed, model_cfg)?;
    s.cases.push(CaseResult::from_report("model", &m));
    Ok(SuiteReport::new(s.cases))
}

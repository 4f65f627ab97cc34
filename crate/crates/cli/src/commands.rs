use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use beyondct::augment::{apply_plan, sample_plan, sample_seed};
use beyondct::cohort::{read_manifest, CohortSample, Target};
use beyondct::config::RunConfig;
use beyondct::eval::{
    compare_models, emit_report, evaluate, read_predictions, write_predictions, EvaluationReport,
    PredictionRow,
};
use beyondct::gradcheck::full_suite;
use beyondct::model::{ModelConfig, ModelParams};
use beyondct::phantom::{generate_cohort, write_cohort};
use beyondct::tensor::{CheckMode, GradCheckConfig};
use beyondct::train::{
    fit_linear_baseline, predict_samples, split_subjects, train, Checkpoint, DiskSource,
    MemorySource, VolumeSource,
};
use beyondct::volume::{import_nifti, load_volume, preprocess, save_volume, Volume};
use beyondct::{Error, Result};

use crate::run::{resolve_config, write_manifest};
use crate::{Cli, Command};

/// Volumes above this many bytes in total are read from disk every epoch.
const PRELOAD_BUDGET_BYTES: usize = 2 << 30;

pub fn dispatch(cli: &Cli) -> Result<Value> {
    let cfg = resolve_config(cli)?;
    let out = cfg.paths.output_dir.clone();
    match &cli.command {
        Command::Import { input, output } => {
            cfg.validate(false)?;
            let v = import_nifti(input)?;
            save_volume(output, &v)?;
            let m = write_manifest(&out, "import", &cfg, vec![output.clone()])?;
            Ok(json!({ "dims": v.dims(), "spacing_mm": v.spacing_mm(), "run_manifest": m }))
        }
        Command::Preprocess { input, output, cube } => {
            cfg.validate(false)?;
            let v = read_any_volume(input)?;
            let p = preprocess(&v, cube.unwrap_or(cfg.model.input_cube))?;
            save_volume(output, &p)?;
            let m = write_manifest(&out, "preprocess", &cfg, vec![output.clone()])?;
            Ok(json!({ "dims": p.dims(), "run_manifest": m }))
        }
        Command::PhantomGen { count } => {
            cfg.validate(false)?;
            let phantoms = generate_cohort(&cfg.phantom, *count, cfg.seed)?;
            let manifest = write_cohort(&out, &phantoms)?;
            let m = write_manifest(&out, "phantom-gen", &cfg, vec![manifest.clone()])?;
            Ok(json!({ "count": phantoms.len(), "manifest": manifest, "run_manifest": m }))
        }
        Command::AugmentPreview {
            input,
            output,
            subject,
            scan,
            epoch,
        } => {
            cfg.validate(false)?;
            let v = read_any_volume(input)?;
            let plan = sample_plan(&cfg.augment, sample_seed(cfg.seed, subject, scan, *epoch))?;
            let a = apply_plan(&v, &plan)?;
            save_volume(output, &a)?;
            let plan_path = PathBuf::from(format!("{}.plan.json", output.display()));
            write_json(&plan_path, &plan)?;
            let m = write_manifest(&out, "augment-preview", &cfg, vec![output.clone(), plan_path])?;
            Ok(json!({ "plan": plan, "run_manifest": m }))
        }
        Command::Train { manifest } => run_train(with_manifest(cfg, manifest), &out),
        Command::Predict {
            checkpoint,
            manifest,
            output,
        } => {
            let cfg = with_manifest(cfg, manifest);
            cfg.validate(true)?;
            let ck = Checkpoint::load(checkpoint)?;
            let samples = read_manifest(manifest_path(&cfg)?, cfg.paths.volume_dir.as_deref())?;
            let src = DiskSource {
                cube: ck.config().input_cube,
            };
            let rows = predict_rows(&ck.params, &samples, &src)?;
            write_predictions(output, &rows)?;
            let m = write_manifest(&out, "predict", &cfg, vec![output.clone()])?;
            Ok(json!({ "rows": rows.len(), "output": output, "run_manifest": m }))
        }
        Command::Evaluate {
            predictions,
            compare,
        } => {
            cfg.validate(false)?;
            let rows = read_predictions(predictions)?;
            let (mut report, tables) = evaluate(&rows, &cfg.eval)?;
            if let Some(other) = compare {
                let other_rows = read_predictions(other)?;
                for t in [Target::Fvc, Target::Fev1] {
                    if rows.iter().any(|r| r.target == t) {
                        let label = other.display().to_string();
                        report.comparisons.push(compare_models(&rows, &other_rows, t, &label)?);
                    }
                }
            }
            let mut files = emit_report(&report, &tables, &out)?;
            files.push(write_manifest(&out, "evaluate", &cfg, files.clone())?);
            Ok(json!({ "targets": report.targets, "gold": report.gold, "notes": report.notes, "files": files }))
        }
        Command::Report { runs } => {
            cfg.validate(false)?;
            run_report(runs, &out, &cfg)
        }
        Command::Gradcheck { per_tensor } => {
            cfg.validate(false)?;
            let model = if cli.tiny {
                ModelConfig {
                    use_demographics: true,
                    ..cfg.model.clone()
                }
            } else {
                cfg.model.clone()
            };
            let check = GradCheckConfig {
                mode: CheckMode::Sampled {
                    per_tensor: *per_tensor,
                    seed: cfg.seed,
                },
                ..GradCheckConfig::default()
            };
            let report = full_suite(&model, cfg.seed, &check)?;
            let path = out.join("gradcheck.json");
            write_json(&path, &report)?;
            write_manifest(&out, "gradcheck", &cfg, vec![path])?;
            if !report.passed {
                let failed: Vec<String> = report
                    .cases
                    .iter()
                    .filter(|c| !c.passed)
                    .map(|c| format!("{} (max rel err {:.3e})", c.name, c.max_rel_err))
                    .collect();
                return Err(Error::Contract(format!(
                    "gradient check failed: {}",
                    failed.join(", ")
                )));
            }
            Ok(json!(report))
        }
    }
}

fn with_manifest(mut cfg: RunConfig, manifest: &Option<PathBuf>) -> RunConfig {
    if let Some(m) = manifest {
        cfg.paths.manifest = Some(m.clone());
    }
    cfg
}

fn manifest_path(cfg: &RunConfig) -> Result<&Path> {
    cfg.paths
        .manifest
        .as_deref()
        .ok_or_else(|| Error::Config(vec!["paths.manifest is required".into()]))
}

fn read_any_volume(path: &Path) -> Result<Volume> {
    let name = path.to_string_lossy();
    if name.ends_with(".nii") || name.ends_with(".nii.gz") {
        import_nifti(path)
    } else {
        load_volume(path)
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn predict_rows(
    params: &ModelParams<f32>,
    samples: &[CohortSample],
    src: &dyn VolumeSource,
) -> Result<Vec<PredictionRow>> {
    let target = params.config().target;
    let preds = predict_samples(params, samples, src)?;
    Ok(samples
        .iter()
        .zip(preds)
        .map(|(s, p)| PredictionRow::new(s, target, p))
        .collect())
}

fn ids(v: &[CohortSample]) -> Vec<&str> {
    let mut s: Vec<&str> = v.iter().map(|s| s.subject_id.as_str()).collect();
    s.dedup();
    s
}

fn run_train(cfg: RunConfig, out: &Path) -> Result<Value> {
    cfg.validate(true)?;
    let samples = read_manifest(manifest_path(&cfg)?, cfg.paths.volume_dir.as_deref())?;
    let split = split_subjects(&samples, cfg.train.split_fractions, cfg.seed)?;
    let disk = DiskSource {
        cube: cfg.model.input_cube,
    };
    let voxels = cfg.model.input_cube.pow(3);
    let preloaded;
    let src: &dyn VolumeSource = if samples.len() * voxels * 4 <= PRELOAD_BUDGET_BYTES {
        preloaded = MemorySource::preload(&disk, &samples)?;
        &preloaded
    } else {
        &disk
    };
    let params = ModelParams::<f32>::init(&cfg.model, cfg.seed)?;
    let log_path = out.join("train_log.jsonl");
    let outcome = train(
        params,
        &split.train,
        &split.val,
        &cfg.train,
        &cfg.augment,
        src,
        Some(&log_path),
    )?;

    let best_path = out.join("best.bctk");
    outcome.best.save(&best_path)?;
    let last = Checkpoint {
        params: outcome.last.clone(),
        epoch: cfg.train.epochs,
        val_mae: outcome.log.last().map_or(f64::NAN, |r| r.val_mae),
        train: Some(cfg.train.clone()),
    };
    let last_path = out.join("last.bctk");
    last.save(&last_path)?;

    let split_path = out.join("split.json");
    write_json(
        &split_path,
        &json!({ "train": ids(&split.train), "val": ids(&split.val), "test": ids(&split.test) }),
    )?;
    let mut outputs = vec![best_path, last_path, log_path, split_path];

    let mut summary = json!({
        "best_epoch": outcome.best.epoch,
        "best_val_mae": outcome.best.val_mae,
        "subjects": { "train": ids(&split.train).len(), "val": ids(&split.val).len(), "test": ids(&split.test).len() },
    });
    if !split.test.is_empty() {
        let rows = predict_rows(&outcome.best.params, &split.test, src)?;
        let p = out.join("test_predictions.csv");
        write_predictions(&p, &rows)?;
        outputs.push(p);
        if split.train.len() >= 8 {
            let target = cfg.model.target;
            let lin = fit_linear_baseline(&split.train, target)?;
            let rows: Vec<PredictionRow> = split
                .test
                .iter()
                .map(|s| PredictionRow::new(s, target, lin.predict(&s.demographics)))
                .collect();
            let lp = out.join("linear_baseline.json");
            write_json(&lp, &lin)?;
            let bp = out.join("baseline_predictions.csv");
            write_predictions(&bp, &rows)?;
            outputs.extend([lp, bp]);
        }
    }
    summary["run_manifest"] = json!(write_manifest(out, "train", &cfg, outputs)?);
    Ok(summary)
}

fn run_report(runs: &[PathBuf], out: &Path, cfg: &RunConfig) -> Result<Value> {
    let mut merged = Vec::new();
    let mut csv_rows = vec!["run,target,n,mae_l,pct_error,r2".to_string()];
    for run in runs {
        let path = if run.is_dir() { run.join("report.json") } else { run.clone() };
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let report: EvaluationReport = serde_json::from_str(&text).map_err(|e| Error::json(&path, e))?;
        for t in &report.targets {
            csv_rows.push(format!(
                "{},{},{},{},{},{}",
                run.display(),
                t.target.as_str(),
                t.metrics.n,
                t.metrics.mae_l,
                t.metrics.pct_error,
                t.metrics.r2.map_or(String::new(), |r| r.to_string())
            ));
        }
        merged.push(json!({ "run": run, "report": report }));
    }
    let json_path = out.join("summary.json");
    write_json(&json_path, &merged)?;
    let csv_path = out.join("summary.csv");
    std::fs::write(&csv_path, csv_rows.join("\n") + "\n").map_err(|e| Error::io(&csv_path, e))?;
    let m = write_manifest(out, "report", cfg, vec![json_path.clone(), csv_path.clone()])?;
    Ok(json!({ "runs": runs.len(), "files": [json_path, csv_path], "run_manifest": m }))
}

//! Agreement metrics, GOLD staging, subgroup tests and report emission.

mod gold;
mod metrics;
mod stats;

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cohort::{CohortSample, DemographicsRecord, Target};
use crate::error::{contract_err, Error, Result};

pub use gold::{
    confusion_matrix, fev1_pct_predicted, gold_copd_classify, gold_stage, reference_fev1,
    ConfusionMatrix, CopdStatus, GoldStage, ReferenceCoefficients, COPD_RATIO,
};
pub use metrics::{
    bland_altman, cumulative_error_distribution, mae, metrics_report, percent_error,
    percent_errors, r_squared, BlandAltman, BlandAltmanPoint, BlandAltmanSummary, CdfPoint,
    MetricsReport, BA_ORIENTATION,
};
pub use stats::{
    incomplete_beta, ln_gamma, paired_t_test, student_t_cdf, two_sided_p, welch_t_test,
    Degenerate, TTest,
};

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupLabels {
    pub sex: Option<u8>,
    pub smoking_status: Option<u8>,
    pub emphysema: Option<bool>,
    pub copd: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionPair {
    pub subject_id: String,
    pub scan_id: String,
    pub actual: f64,
    pub predicted: f64,
    pub labels: GroupLabels,
}

impl PredictionPair {
    pub fn new(actual: f64, predicted: f64) -> Self {
        Self {
            subject_id: String::new(),
            scan_id: String::new(),
            actual,
            predicted,
            labels: GroupLabels::default(),
        }
    }

    pub fn abs_error(&self) -> f64 {
        (self.actual - self.predicted).abs()
    }
}

pub fn pairs_from(values: &[(f64, f64)]) -> Vec<PredictionPair> {
    values.iter().map(|&(a, p)| PredictionPair::new(a, p)).collect()
}

/// One line of a predictions CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub subject_id: String,
    pub scan_id: String,
    pub target: Target,
    pub actual: f64,
    pub predicted: f64,
    pub age: f64,
    pub sex: u8,
    pub height_in: f64,
    pub weight_lb: f64,
    pub smoking_status: u8,
    pub cigs_per_day: f64,
    pub smoke_years: f64,
    pub fvc_l: f64,
    pub fev1_l: f64,
    pub emphysema: Option<u8>,
}

impl PredictionRow {
    pub fn new(sample: &CohortSample, target: Target, predicted: f64) -> Self {
        let d = &sample.demographics;
        Self {
            subject_id: sample.subject_id.clone(),
            scan_id: sample.scan_id.clone(),
            target,
            actual: sample.pft.value(target),
            predicted,
            age: d.age,
            sex: d.sex,
            height_in: d.height_in,
            weight_lb: d.weight_lb,
            smoking_status: d.smoking_status,
            cigs_per_day: d.cigs_per_day,
            smoke_years: d.smoke_years,
            fvc_l: sample.pft.fvc_l,
            fev1_l: sample.pft.fev1_l,
            emphysema: sample.emphysema.map(u8::from),
        }
    }

    pub fn demographics(&self) -> DemographicsRecord {
        DemographicsRecord {
            age: self.age,
            sex: self.sex,
            height_in: self.height_in,
            weight_lb: self.weight_lb,
            smoking_status: self.smoking_status,
            cigs_per_day: self.cigs_per_day,
            smoke_years: self.smoke_years,
        }
    }

    pub fn pair(&self) -> PredictionPair {
        PredictionPair {
            subject_id: self.subject_id.clone(),
            scan_id: self.scan_id.clone(),
            actual: self.actual,
            predicted: self.predicted,
            labels: GroupLabels {
                sex: Some(self.sex),
                smoking_status: Some(self.smoking_status),
                emphysema: self.emphysema.map(|e| e != 0),
                copd: gold_copd_classify(self.fev1_l, self.fvc_l)
                    .ok()
                    .map(|s| s == CopdStatus::Copd),
            },
        }
    }
}

pub fn write_predictions(path: &Path, rows: &[PredictionRow]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    r.deserialize()
        .map(|row| row.map_err(|e| Error::csv(path, e)))
        .collect()
}

/// Averages scans per subject (first scan's labels kept), ordered by subject.
pub fn aggregate_per_subject(pairs: &[PredictionPair]) -> Vec<PredictionPair> {
    let mut groups: BTreeMap<&str, Vec<&PredictionPair>> = BTreeMap::new();
    for p in pairs {
        groups.entry(p.subject_id.as_str()).or_default().push(p);
    }
    groups
        .into_iter()
        .map(|(id, ps)| {
            let n = ps.len() as f64;
            PredictionPair {
                subject_id: id.to_string(),
                scan_id: "*".into(),
                actual: ps.iter().map(|p| p.actual).sum::<f64>() / n,
                predicted: ps.iter().map(|p| p.predicted).sum::<f64>() / n,
                labels: ps[0].labels.clone(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    Sex,
    Emphysema,
    GoldBinary,
    Smoking,
}

impl Grouping {
    fn label(self, l: &GroupLabels) -> Option<&'static str> {
        match self {
            Grouping::Sex => l.sex.map(|s| if s == 0 { "female" } else { "male" }),
            Grouping::Smoking => l.smoking_status.map(|s| if s == 0 { "current" } else { "former" }),
            Grouping::Emphysema => l.emphysema.map(|e| if e { "emphysema" } else { "no_emphysema" }),
            Grouping::GoldBinary => l.copd.map(|c| if c { "COPD" } else { "NonCOPD" }),
        }
    }

    fn levels(self) -> [&'static str; 2] {
        match self {
            Grouping::Sex => ["female", "male"],
            Grouping::Smoking => ["current", "former"],
            Grouping::Emphysema => ["emphysema", "no_emphysema"],
            Grouping::GoldBinary => ["COPD", "NonCOPD"],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStat {
    pub label: String,
    pub n: usize,
    pub pct_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupReport {
    pub grouping: Grouping,
    pub groups: Vec<GroupStat>,
    /// Welch test on per-sample percent errors, first group minus second.
    pub test: Option<TTest>,
    pub skipped: Option<String>,
}

pub fn subgroup_report(pairs: &[PredictionPair], grouping: Grouping) -> Result<SubgroupReport> {
    let unlabeled: Vec<String> = pairs
        .iter()
        .filter(|p| grouping.label(&p.labels).is_none())
        .map(|p| format!("{}/{}", p.subject_id, p.scan_id))
        .collect();
    if !unlabeled.is_empty() {
        return Err(contract_err!(
            "{grouping:?} grouping needs a label on every pair; missing for {}",
            unlabeled.join(", ")
        ));
    }
    let errs = percent_errors(pairs)?;
    let levels = grouping.levels();
    let split: Vec<Vec<f64>> = levels
        .iter()
        .map(|lv| {
            pairs
                .iter()
                .zip(&errs)
                .filter(|(p, _)| grouping.label(&p.labels) == Some(lv))
                .map(|(_, &e)| e)
                .collect()
        })
        .collect();
    let groups = levels
        .iter()
        .zip(&split)
        .map(|(lv, e)| GroupStat {
            label: lv.to_string(),
            n: e.len(),
            pct_error: (!e.is_empty()).then(|| e.iter().sum::<f64>() / e.len() as f64),
        })
        .collect();
    let (test, skipped) = if split.iter().any(|g| g.len() < 2) {
        (
            None,
            Some(format!(
                "group sizes {} and {}: each needs at least 2 members",
                split[0].len(),
                split[1].len()
            )),
        )
    } else {
        (Some(welch_t_test(&split[0], &split[1])?), None)
    };
    Ok(SubgroupReport {
        grouping,
        groups,
        test,
        skipped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub reference_fev1: Option<ReferenceCoefficients>,
    pub groupings: Vec<Grouping>,
    pub per_subject: bool,
    pub cdf_bins: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            reference_fev1: None,
            groupings: vec![Grouping::Sex, Grouping::Smoking, Grouping::GoldBinary],
            per_subject: false,
            cdf_bins: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetReport {
    pub target: Target,
    pub metrics: MetricsReport,
    pub subgroups: Vec<SubgroupReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldReport {
    pub n: usize,
    pub confusion: ConfusionMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelComparison {
    pub target: Target,
    pub label: String,
    /// Paired test on absolute errors, this model minus the other.
    pub test: TTest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub version: u32,
    pub bland_altman_orientation: String,
    pub per_subject: bool,
    pub targets: Vec<TargetReport>,
    pub gold: Option<GoldReport>,
    pub comparisons: Vec<ModelComparison>,
    pub notes: Vec<String>,
}

/// Plot-ready tables accompanying a report.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReportTables {
    pub scatter: Vec<(Target, PredictionPair)>,
    pub bland_altman: Vec<(Target, String, String, BlandAltmanPoint)>,
    pub cdf: Vec<(Target, CdfPoint)>,
    pub confusion: Option<ConfusionMatrix>,
}

fn rows_by_target(rows: &[PredictionRow]) -> BTreeMap<&'static str, (Target, Vec<&PredictionRow>)> {
    let mut m: BTreeMap<&'static str, (Target, Vec<&PredictionRow>)> = BTreeMap::new();
    for r in rows {
        m.entry(r.target.as_str())
            .or_insert_with(|| (r.target, Vec::new()))
            .1
            .push(r);
    }
    m
}

pub fn evaluate(rows: &[PredictionRow], cfg: &EvalConfig) -> Result<(EvaluationReport, ReportTables)> {
    if rows.is_empty() {
        return Err(contract_err!("no predictions to evaluate"));
    }
    let mut tables = ReportTables::default();
    let mut targets = Vec::new();
    let mut notes = Vec::new();
    let by_target = rows_by_target(rows);
    for (target, rs) in by_target.values() {
        let mut pairs: Vec<PredictionPair> = rs.iter().map(|r| r.pair()).collect();
        if cfg.per_subject {
            pairs = aggregate_per_subject(&pairs);
        }
        let metrics = metrics_report(&pairs)?;
        let mut subgroups = Vec::new();
        for &g in &cfg.groupings {
            match subgroup_report(&pairs, g) {
                Ok(s) => subgroups.push(s),
                Err(e) => notes.push(format!("{} {g:?} subgroup skipped: {e}", target.as_str())),
            }
        }
        if let Ok(ba) = bland_altman(&pairs) {
            for (p, pt) in pairs.iter().zip(ba.points) {
                tables
                    .bland_altman
                    .push((*target, p.subject_id.clone(), p.scan_id.clone(), pt));
            }
        }
        for c in cumulative_error_distribution(&pairs, cfg.cdf_bins.max(1))? {
            tables.cdf.push((*target, c));
        }
        tables.scatter.extend(pairs.into_iter().map(|p| (*target, p)));
        targets.push(TargetReport {
            target: *target,
            metrics,
            subgroups,
        });
    }
    let gold = match (by_target.get("fvc"), by_target.get("fev1")) {
        (Some((_, fvc)), Some((_, fev1))) => match cfg.reference_fev1.as_ref() {
            Some(coeffs) => {
                let g = gold_from_predictions(fvc, fev1, coeffs)?;
                tables.confusion = Some(g.confusion.clone());
                Some(g)
            }
            None => {
                notes.push("GOLD staging skipped: eval.reference_fev1 not configured".into());
                None
            }
        },
        _ => None,
    };
    Ok((
        EvaluationReport {
            version: REPORT_VERSION,
            bland_altman_orientation: BA_ORIENTATION.into(),
            per_subject: cfg.per_subject,
            targets,
            gold,
            comparisons: Vec::new(),
            notes,
        },
        tables,
    ))
}

/// Stages actual spirometry against staging from the two models' outputs,
/// joined per scan.
fn gold_from_predictions(
    fvc: &[&PredictionRow],
    fev1: &[&PredictionRow],
    coeffs: &ReferenceCoefficients,
) -> Result<GoldReport> {
    let pred_fvc: HashMap<(&str, &str), f64> = fvc
        .iter()
        .map(|r| ((r.subject_id.as_str(), r.scan_id.as_str()), r.predicted))
        .collect();
    let mut actual = Vec::new();
    let mut predicted = Vec::new();
    for r in fev1 {
        let Some(&pf) = pred_fvc.get(&(r.subject_id.as_str(), r.scan_id.as_str())) else {
            continue;
        };
        let d = r.demographics();
        let a = gold_stage(r.fev1_l, r.fvc_l, fev1_pct_predicted(r.fev1_l, &d, Some(coeffs))?)?;
        let p = gold_stage(r.predicted, pf, fev1_pct_predicted(r.predicted, &d, Some(coeffs))?)?;
        actual.push(a);
        predicted.push(p);
    }
    if actual.is_empty() {
        return Err(contract_err!("no scans have both FVC and FEV1 predictions"));
    }
    Ok(GoldReport {
        n: actual.len(),
        confusion: confusion_matrix(&actual, &predicted)?,
    })
}

/// Paired test on absolute errors of two prediction sets for one target,
/// matched by (subject, scan).
pub fn compare_models(
    a: &[PredictionRow],
    b: &[PredictionRow],
    target: Target,
    label: &str,
) -> Result<ModelComparison> {
    let other: HashMap<(&str, &str), &PredictionRow> = b
        .iter()
        .filter(|r| r.target == target)
        .map(|r| ((r.subject_id.as_str(), r.scan_id.as_str()), r))
        .collect();
    let mut ea = Vec::new();
    let mut eb = Vec::new();
    for r in a.iter().filter(|r| r.target == target) {
        if let Some(o) = other.get(&(r.subject_id.as_str(), r.scan_id.as_str())) {
            ea.push((r.actual - r.predicted).abs());
            eb.push((o.actual - o.predicted).abs());
        }
    }
    Ok(ModelComparison {
        target,
        label: label.to_string(),
        test: paired_t_test(&ea, &eb)?,
    })
}

/// Writes `report.json` plus `scatter.csv`, `bland_altman.csv`, `cdf.csv`
/// and, when staged, `confusion.csv` into `dir`.
pub fn emit_report(report: &EvaluationReport, tables: &ReportTables, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let json = dir.join("report.json");
    let text = serde_json::to_string_pretty(report).map_err(|e| Error::json(&json, e))?;
    std::fs::write(&json, text).map_err(|e| Error::io(&json, e))?;
    written.push(json);

    let csv_file = |name: &str, header: &[&str], rows: Vec<Vec<String>>| -> Result<PathBuf> {
        let p = dir.join(name);
        let mut w = csv::Writer::from_path(&p).map_err(|e| Error::csv(&p, e))?;
        w.write_record(header).map_err(|e| Error::csv(&p, e))?;
        for r in rows {
            w.write_record(&r).map_err(|e| Error::csv(&p, e))?;
        }
        w.flush().map_err(|e| Error::io(&p, e))?;
        Ok(p)
    };
    written.push(csv_file(
        "scatter.csv",
        &["target", "subject_id", "scan_id", "actual", "predicted"],
        tables
            .scatter
            .iter()
            .map(|(t, p)| {
                vec![
                    t.as_str().into(),
                    p.subject_id.clone(),
                    p.scan_id.clone(),
                    p.actual.to_string(),
                    p.predicted.to_string(),
                ]
            })
            .collect(),
    )?);
    written.push(csv_file(
        "bland_altman.csv",
        &["target", "subject_id", "scan_id", "mean", "diff"],
        tables
            .bland_altman
            .iter()
            .map(|(t, s, c, p)| {
                vec![
                    t.as_str().into(),
                    s.clone(),
                    c.clone(),
                    p.mean.to_string(),
                    p.diff.to_string(),
                ]
            })
            .collect(),
    )?);
    written.push(csv_file(
        "cdf.csv",
        &["target", "error_pct", "fraction"],
        tables
            .cdf
            .iter()
            .map(|(t, c)| vec![t.as_str().into(), c.error_pct.to_string(), c.fraction.to_string()])
            .collect(),
    )?);
    if let Some(cm) = &tables.confusion {
        let mut header = vec!["actual\\predicted"];
        header.extend(GoldStage::ALL.iter().map(|s| s.label()));
        written.push(csv_file(
            "confusion.csv",
            &header,
            GoldStage::ALL
                .iter()
                .map(|s| {
                    let mut row = vec![s.label().to_string()];
                    row.extend(cm.counts[s.index()].iter().map(|c| c.to_string()));
                    row
                })
                .collect(),
        )?);
    }
    Ok(written)
}

//! Benchmark orchestration: trainers x datasets x seeds, audited on a held
//! out split, with deterministic CSV output.
//!
//! Every run derives its seeds from the plan's root seed and the run key,
//! so datasets are shared across trainers for a given seed index and a
//! rerun of the same plan reproduces the result files byte for byte. Runs
//! execute as an independent work pool; rows are sorted before rendering so
//! the output does not depend on completion order.

use crate::audit::{audit_dataset, AuditReport, SearchBudget};
use crate::classifier::ModelSpec;
use crate::data::gen_dataset;
use crate::error::{Error, Result};
use crate::metric::MetricConfig;
use crate::par;
use crate::rng;
use crate::train::{train, TrainConfig, TrainerKind};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// The audit radii reported by the benchmark tables.
pub const REPORT_RADII: [f64; 3] = [0.05, 0.01, 0.0];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchPlan {
    pub trainers: Vec<TrainerKind>,
    pub datasets: Vec<String>,
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub root_seed: u64,
    /// PGD restarts per search during audits.
    #[serde(default = "default_restarts")]
    pub audit_restarts: usize,
}

fn default_seeds() -> usize {
    10
}
fn default_n() -> usize {
    2000
}
fn default_restarts() -> usize {
    2
}

impl BenchPlan {
    pub fn new(trainers: Vec<TrainerKind>, datasets: Vec<String>) -> Self {
        BenchPlan {
            trainers,
            datasets,
            seeds: default_seeds(),
            n: default_n(),
            root_seed: 0,
            audit_restarts: default_restarts(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trainers.is_empty() || self.datasets.is_empty() || self.seeds == 0 {
            return Err(Error::InvalidPlan(
                "trainers, datasets and seed count must all be nonempty".into(),
            ));
        }
        if self.n == 0 {
            return Err(Error::InvalidPlan("sample count must be positive".into()));
        }
        Ok(())
    }
}

/// Architecture assignment: the linear model for the datasets a linear
/// logit can fit, the width-100 MLP elsewhere.
pub fn model_spec_for(dataset: &str, input_dim: usize) -> ModelSpec {
    match dataset {
        "lin" | "imf" => ModelSpec::Glm { input_dim },
        _ => ModelSpec::default_mlp(input_dim),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRow {
    pub trainer: TrainerKind,
    pub dataset: String,
    pub seed: usize,
    pub accuracy: f64,
    pub mcc: f64,
    pub u_005: f64,
    pub u_001: f64,
    pub cf: f64,
    pub r_005: f64,
    pub r_001: f64,
}

impl RunRow {
    fn from_report(trainer: TrainerKind, dataset: &str, seed: usize, report: &AuditReport) -> Self {
        RunRow {
            trainer,
            dataset: dataset.to_string(),
            seed,
            accuracy: report.accuracy,
            mcc: report.mcc,
            u_005: report.uai_at(0.05).unwrap_or(f64::NAN),
            u_001: report.uai_at(0.01).unwrap_or(f64::NAN),
            cf: report.cf_rate,
            r_005: report.robustness_at(0.05).unwrap_or(f64::NAN),
            r_001: report.robustness_at(0.01).unwrap_or(f64::NAN),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunFailure {
    pub trainer: TrainerKind,
    pub dataset: String,
    pub seed: usize,
    pub message: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchOutcome {
    pub plan: BenchPlan,
    pub rows: Vec<RunRow>,
    pub failures: Vec<RunFailure>,
}

fn name_salt(name: &str) -> u64 {
    // FNV-1a, stable across runs and platforms.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn trainer_salt(kind: TrainerKind) -> u64 {
    name_salt(kind.as_str())
}

/// One benchmark run: generate, split, train, audit the held-out part.
fn execute_run(plan: &BenchPlan, trainer: TrainerKind, dataset: &str, seed: usize) -> Result<RunRow> {
    let data_seed = rng::derive(plan.root_seed, &[name_salt(dataset), seed as u64]);
    let (scm, ds) = gen_dataset(dataset, plan.n, data_seed)?;
    let (train_ds, test_ds) = ds.split(0.8, rng::derive(data_seed, &[0x5b117]));
    let mcfg = MetricConfig::default();
    let mut cfg = TrainConfig::new(trainer);
    cfg.seed = rng::derive(data_seed, &[0x7124]);
    let spec = model_spec_for(dataset, scm.dim());
    let trained = train(&train_ds, &scm, &mcfg, spec, &cfg)?;
    let budget = SearchBudget { restarts: plan.audit_restarts, pgd_steps: 10 };
    let report = audit_dataset(
        &trained.model,
        &scm,
        &mcfg,
        &test_ds,
        &REPORT_RADII,
        budget,
        rng::derive(data_seed, &[0xa0d1, trainer_salt(trainer)]),
    )?;
    Ok(RunRow::from_report(trainer, dataset, seed, &report))
}

/// Runs the full plan. Individual run failures are recorded and the
/// remaining runs proceed.
pub fn run_benchmark(plan: &BenchPlan) -> Result<BenchOutcome> {
    plan.validate()?;
    let mut keys = Vec::new();
    for dataset in &plan.datasets {
        for &trainer in &plan.trainers {
            for seed in 0..plan.seeds {
                keys.push((trainer, dataset.clone(), seed));
            }
        }
    }
    let results = par::map_collect(&keys, |(trainer, dataset, seed)| {
        execute_run(plan, *trainer, dataset, *seed)
    });
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for ((trainer, dataset, seed), result) in keys.into_iter().zip(results) {
        match result {
            Ok(row) => rows.push(row),
            Err(e) => failures.push(RunFailure {
                trainer,
                dataset,
                seed,
                message: e.to_string(),
            }),
        }
    }
    rows.sort_by(|a, b| {
        (a.dataset.as_str(), a.trainer.as_str(), a.seed)
            .cmp(&(b.dataset.as_str(), b.trainer.as_str(), b.seed))
    });
    Ok(BenchOutcome { plan: plan.clone(), rows, failures })
}

const RESULTS_HEADER: &str = "trainer,dataset,seed,A,M,U_005,U_001,CF,R_005,R_001";

/// Per-run rows in the pinned column layout.
pub fn render_results_csv(outcome: &BenchOutcome) -> String {
    let mut out = String::from(RESULTS_HEADER);
    out.push('\n');
    for r in &outcome.rows {
        out.push_str(&format!(
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
            r.trainer, r.dataset, r.seed, r.accuracy, r.mcc, r.u_005, r.u_001, r.cf, r.r_005,
            r.r_001
        ));
    }
    out
}

/// Mean and sample standard deviation of each metric per (dataset, trainer).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryRow {
    pub dataset: String,
    pub trainer: TrainerKind,
    pub runs: usize,
    pub means: MetricVector,
    pub stds: MetricVector,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricVector {
    pub accuracy: f64,
    pub mcc: f64,
    pub u_005: f64,
    pub u_001: f64,
    pub cf: f64,
    pub r_005: f64,
    pub r_001: f64,
}

fn metric_values(row: &RunRow) -> [f64; 7] {
    [row.accuracy, row.mcc, row.u_005, row.u_001, row.cf, row.r_005, row.r_001]
}

pub fn summarize(outcome: &BenchOutcome) -> Vec<SummaryRow> {
    let mut groups: Vec<(String, TrainerKind, Vec<[f64; 7]>)> = Vec::new();
    for row in &outcome.rows {
        let key = (row.dataset.clone(), row.trainer);
        match groups.iter_mut().find(|(d, t, _)| *d == key.0 && *t == key.1) {
            Some((_, _, vals)) => vals.push(metric_values(row)),
            None => groups.push((key.0, key.1, vec![metric_values(row)])),
        }
    }
    groups
        .into_iter()
        .map(|(dataset, trainer, vals)| {
            let k = vals.len() as f64;
            let mut mean = [0.0; 7];
            for v in &vals {
                for i in 0..7 {
                    mean[i] += v[i] / k;
                }
            }
            let mut std = [0.0; 7];
            if vals.len() > 1 {
                for v in &vals {
                    for i in 0..7 {
                        std[i] += (v[i] - mean[i]).powi(2) / (k - 1.0);
                    }
                }
                for s in &mut std {
                    *s = s.sqrt();
                }
            }
            let pack = |a: [f64; 7]| MetricVector {
                accuracy: a[0],
                mcc: a[1],
                u_005: a[2],
                u_001: a[3],
                cf: a[4],
                r_005: a[5],
                r_001: a[6],
            };
            SummaryRow { dataset, trainer, runs: vals.len(), means: pack(mean), stds: pack(std) }
        })
        .collect()
}

pub fn render_summary_csv(outcome: &BenchOutcome) -> String {
    let mut out = String::from(
        "dataset,trainer,runs,A_mean,A_std,M_mean,M_std,U_005_mean,U_005_std,\
         U_001_mean,U_001_std,CF_mean,CF_std,R_005_mean,R_005_std,R_001_mean,R_001_std\n",
    );
    for s in summarize(outcome) {
        out.push_str(&format!(
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
            s.dataset,
            s.trainer,
            s.runs,
            s.means.accuracy,
            s.stds.accuracy,
            s.means.mcc,
            s.stds.mcc,
            s.means.u_005,
            s.stds.u_005,
            s.means.u_001,
            s.stds.u_001,
            s.means.cf,
            s.stds.cf,
            s.means.r_005,
            s.stds.r_005,
            s.means.r_001,
            s.stds.r_001,
        ));
    }
    out
}

/// Dataset-grouped table with one line per trainer, for terminal output.
pub fn render_summary_table(outcome: &BenchOutcome) -> String {
    let summary = summarize(outcome);
    let mut out = String::new();
    let mut datasets: Vec<&str> = summary.iter().map(|s| s.dataset.as_str()).collect();
    datasets.dedup();
    for dataset in datasets {
        out.push_str(&format!("== {dataset} ==\n"));
        out.push_str(&format!(
            "{:<8} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7}\n",
            "trainer", "A", "M", "U_.05", "U_.01", "CF", "R_.05", "R_.01"
        ));
        for s in summary.iter().filter(|s| s.dataset == dataset) {
            out.push_str(&format!(
                "{:<8} {:>7.3} {:>7.3} {:>7.3} {:>7.3} {:>7.3} {:>7.3} {:>7.3}\n",
                s.trainer.as_str(),
                s.means.accuracy,
                s.means.mcc,
                s.means.u_005,
                s.means.u_001,
                s.means.cf,
                s.means.r_005,
                s.means.r_001,
            ));
        }
    }
    out
}

/// Writes results.csv, summary.csv and manifest.json into `out_dir`.
pub fn write_outputs(outcome: &BenchOutcome, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("results.csv"), render_results_csv(outcome))?;
    std::fs::write(out_dir.join("summary.csv"), render_summary_csv(outcome))?;
    std::fs::write(out_dir.join("manifest.json"), serde_json::to_string_pretty(outcome)?)?;
    Ok(())
}

//! Command-line interface: dataset generation, training, fairness audits,
//! label-flip mitigation, benchmark runs, and SCM fitting from CSV data.

use anyhow::{bail, Context, Result};
use capify_core::audit::{
    audit_dataset, counterfactual_mitigate, mitigation_report, FlipDirection, MitigatedModel,
    SearchBudget,
};
use capify_core::bench::{
    render_results_csv, render_summary_table, run_benchmark, write_outputs, BenchPlan,
    REPORT_RADII,
};
use capify_core::classifier::ModelSpec;
use capify_core::data::{gen_dataset, ingest_csv, read_csv, write_csv, DagSpec};
use capify_core::metric::MetricConfig;
use capify_core::scm::ScmSpec;
use capify_core::train::{train, TrainConfig, TrainedModel, TrainerKind};
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::{Path, PathBuf};

/// Causal-fairness-aware adversarial training and auditing toolkit.
#[derive(Parser)]
#[command(name = "capify", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a built-in dataset and its SCM specification.
    Gen(GenArgs),
    /// Train a classifier on a dataset under one of the six objectives.
    Train(TrainArgs),
    /// Audit a trained model for accuracy, unfairness and robustness.
    Audit(AuditArgs),
    /// Post-process a model by flipping labels on the unfair region.
    Mitigate(MitigateArgs),
    /// Run the trainers x datasets x seeds benchmark.
    Bench(BenchArgs),
    /// Fit a linear additive-noise SCM to a CSV file with a declared DAG.
    FitScm(FitScmArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TrainerArg {
    Erm,
    Al,
    Llr,
    Ross,
    Cal,
    Capify,
}

impl From<TrainerArg> for TrainerKind {
    fn from(a: TrainerArg) -> TrainerKind {
        match a {
            TrainerArg::Erm => TrainerKind::Erm,
            TrainerArg::Al => TrainerKind::Al,
            TrainerArg::Llr => TrainerKind::Llr,
            TrainerArg::Ross => TrainerKind::Ross,
            TrainerArg::Cal => TrainerKind::Cal,
            TrainerArg::Capify => TrainerKind::Capify,
        }
    }
}

fn default_out_dir() -> PathBuf {
    std::env::var_os("CAPIFY_OUT_DIR").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."))
}

#[derive(Args)]
struct GenArgs {
    /// One of: lin, nlm, imf, loan.
    #[arg(long)]
    name: String,
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Defaults to $CAPIFY_OUT_DIR, then the current directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// SCM specification (JSON).
    #[arg(long)]
    scm: PathBuf,
    /// Dataset CSV with columns matching the SCM plus a binary `y`.
    #[arg(long)]
    data: PathBuf,
    /// Training configuration JSON; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    trainer: Option<TrainerArg>,
    /// glm | mlp (mlp uses three hidden layers of width 100).
    #[arg(long, default_value = "glm")]
    model: String,
    /// Metric configuration JSON ({"sensitive": ..., "p": ...}).
    #[arg(long)]
    metric: Option<PathBuf>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    mu1: Option<f64>,
    #[arg(long)]
    mu2: Option<f64>,
    #[arg(long)]
    mu3: Option<f64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    pgd_steps: Option<usize>,
    #[arg(long)]
    pgd_step_size: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output path for the trained model JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AuditArgs {
    #[arg(long)]
    scm: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Trained model JSON (as written by `train`).
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    metric: Option<PathBuf>,
    /// Comma-separated audit radii.
    #[arg(long, default_value = "0.05,0.01,0")]
    radii: String,
    /// PGD restarts per search.
    #[arg(long, default_value_t = 2)]
    budget: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report JSON output path.
    #[arg(long)]
    out: PathBuf,
    /// Optionally append one CSV row (pinned column layout) to this file.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct MitigateArgs {
    #[arg(long)]
    scm: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// negative-to-positive (default) or positive-to-negative.
    #[arg(long, default_value = "negative-to-positive")]
    direction: String,
    /// Monte-Carlo samples for the mitigation accounting.
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path for the post-processed model JSON.
    #[arg(long)]
    out: PathBuf,
    /// Output path for the mitigation report JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated trainer list.
    #[arg(long, default_value = "erm,al,llr,ross,cal,capify")]
    trainers: String,
    /// Comma-separated dataset list.
    #[arg(long, default_value = "lin,nlm,imf,loan")]
    datasets: String,
    #[arg(long, default_value_t = 10)]
    seeds: usize,
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2)]
    budget: usize,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct FitScmArgs {
    /// CSV with a header and a binary `y` column.
    #[arg(long)]
    csv: PathBuf,
    /// DAG specification JSON: {"nodes": [{"name": ..., "parents": [...]}]}.
    #[arg(long)]
    dag: PathBuf,
    /// Comma-separated sensitive column names (binary 0/1 coded).
    #[arg(long, default_value = "")]
    sensitive: String,
    /// Output path for the fitted SCM JSON.
    #[arg(long)]
    out: PathBuf,
}

fn load_metric(path: &Option<PathBuf>) -> Result<MetricConfig> {
    match path {
        None => Ok(MetricConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading metric config {}", p.display()))?;
            Ok(serde_json::from_str(&text)?)
        }
    }
}

fn parse_radii(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|e| anyhow::anyhow!("bad radius {s:?}: {e}")))
        .collect()
}

fn run_gen(args: GenArgs) -> Result<()> {
    let out_dir = args.out_dir.unwrap_or_else(default_out_dir);
    std::fs::create_dir_all(&out_dir)?;
    let (scm, ds) = gen_dataset(&args.name, args.n, args.seed)?;
    let scm_path = out_dir.join(format!("{}_scm.json", args.name));
    let data_path = out_dir.join(format!("{}_data.csv", args.name));
    scm.write_json(&scm_path)?;
    write_csv(&ds, &data_path)?;
    println!("wrote {}", scm_path.display());
    println!("wrote {}", data_path.display());
    Ok(())
}

fn run_train(args: TrainArgs) -> Result<()> {
    let scm = ScmSpec::read_json(&args.scm)?;
    let ds = read_csv(&args.data, &scm)?;
    let mcfg = load_metric(&args.metric)?;
    let mut cfg = match &args.config {
        Some(p) => serde_json::from_str::<TrainConfig>(&std::fs::read_to_string(p)?)?,
        None => {
            let kind = args.trainer.context("either --config or --trainer must be given")?;
            TrainConfig::new(kind.into())
        }
    };
    if let Some(kind) = args.trainer {
        cfg.kind = kind.into();
    }
    if let Some(v) = args.delta {
        cfg.delta = v;
    }
    if let Some(v) = args.mu1 {
        cfg.mu1 = v;
    }
    if let Some(v) = args.mu2 {
        cfg.mu2 = v;
    }
    if let Some(v) = args.mu3 {
        cfg.mu3 = v;
    }
    if let Some(v) = args.learning_rate {
        cfg.learning_rate = v;
    }
    if let Some(v) = args.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = args.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = args.pgd_steps {
        cfg.pgd_steps = v;
    }
    if let Some(v) = args.pgd_step_size {
        cfg.pgd_step_size = Some(v);
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    let spec = match args.model.as_str() {
        "glm" => ModelSpec::Glm { input_dim: scm.dim() },
        "mlp" => ModelSpec::default_mlp(scm.dim()),
        other => bail!("unknown model kind {other:?} (expected glm or mlp)"),
    };
    let trained = train(&ds, &scm, &mcfg, spec, &cfg)?;
    trained.write_json(&args.out)?;
    println!(
        "trained {} on {} ({} epochs, final loss {:.6}); wrote {}",
        cfg.kind,
        ds.source,
        cfg.epochs,
        trained.provenance.loss_trace.last().copied().unwrap_or(f64::NAN),
        args.out.display()
    );
    Ok(())
}

fn run_audit(args: AuditArgs) -> Result<()> {
    let scm = ScmSpec::read_json(&args.scm)?;
    let ds = read_csv(&args.data, &scm)?;
    let trained = TrainedModel::read_json(&args.model)?;
    let mcfg = load_metric(&args.metric)?;
    let radii = parse_radii(&args.radii)?;
    let budget = SearchBudget { restarts: args.budget, pgd_steps: 10 };
    let report = audit_dataset(&trained.model, &scm, &mcfg, &ds, &radii, budget, args.seed)?;
    report.write_json(&args.out)?;
    println!("accuracy {:.4}  mcc {:.4}  cf {:.4}", report.accuracy, report.mcc, report.cf_rate);
    for (r, u) in &report.uai {
        println!("U_{r} = {u:.4}");
    }
    for (r, v) in &report.robustness {
        println!("R_{r} = {v:.4}");
    }
    println!("wrote {}", args.out.display());
    if let Some(csv_path) = &args.csv {
        append_report_row(csv_path, &trained, &report)?;
        println!("appended row to {}", csv_path.display());
    }
    Ok(())
}

fn append_report_row(
    path: &Path,
    trained: &TrainedModel,
    report: &capify_core::audit::AuditReport,
) -> Result<()> {
    use std::io::Write;
    let fresh = !path.exists();
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    if fresh {
        writeln!(f, "trainer,dataset,seed,A,M,U_005,U_001,CF,R_005,R_001")?;
    }
    let at = |v: Option<f64>| v.unwrap_or(f64::NAN);
    writeln!(
        f,
        "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
        trained.provenance.config.kind,
        trained.provenance.dataset_id,
        trained.provenance.config.seed,
        report.accuracy,
        report.mcc,
        at(report.uai_at(0.05)),
        at(report.uai_at(0.01)),
        report.cf_rate,
        at(report.robustness_at(0.05)),
        at(report.robustness_at(0.01)),
    )?;
    Ok(())
}

fn run_mitigate(args: MitigateArgs) -> Result<()> {
    let scm = ScmSpec::read_json(&args.scm)?;
    let trained = TrainedModel::read_json(&args.model)?;
    let direction = match args.direction.as_str() {
        "negative-to-positive" | "negative_to_positive" => FlipDirection::NegativeToPositive,
        "positive-to-negative" | "positive_to_negative" => FlipDirection::PositiveToNegative,
        other => bail!("unknown direction {other:?}"),
    };
    let mitigated = counterfactual_mitigate(&trained.model, &scm, direction, None, &[])?;
    let report = mitigation_report(&mitigated, args.samples, args.seed)?;
    println!(
        "cf rate {:.4} -> {:.4} (predicted remaining {:.4} ± {:.4})",
        report.pre_cf_rate,
        report.post_cf_rate,
        report.predicted_remaining,
        2.0 * report.standard_error
    );
    let owned = MitigatedModel { model: trained.model.clone(), direction };
    owned.write_json(&args.out)?;
    println!("wrote {}", args.out.display());
    if let Some(report_path) = &args.report {
        std::fs::write(report_path, serde_json::to_string_pretty(&report)?)?;
        println!("wrote {}", report_path.display());
    }
    Ok(())
}

fn run_bench(args: BenchArgs) -> Result<()> {
    let trainers: Vec<TrainerKind> = args
        .trainers
        .split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<TrainerKind>().map_err(anyhow::Error::from))
        .collect::<Result<_>>()?;
    let datasets: Vec<String> =
        args.datasets.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
    let mut plan = BenchPlan::new(trainers, datasets);
    plan.seeds = args.seeds;
    plan.n = args.n;
    plan.root_seed = args.seed;
    plan.audit_restarts = args.budget;
    let out_dir = args.out_dir.unwrap_or_else(default_out_dir);
    let outcome = run_benchmark(&plan)?;
    write_outputs(&outcome, &out_dir)?;
    print!("{}", render_summary_table(&outcome));
    if !outcome.failures.is_empty() {
        eprintln!("{} run(s) failed:", outcome.failures.len());
        for f in &outcome.failures {
            eprintln!("  {} / {} / seed {}: {}", f.trainer, f.dataset, f.seed, f.message);
        }
    }
    println!(
        "wrote {} rows at radii {:?} to {}",
        render_results_csv(&outcome).lines().count() - 1,
        REPORT_RADII,
        out_dir.display()
    );
    Ok(())
}

fn run_fit_scm(args: FitScmArgs) -> Result<()> {
    let dag = DagSpec::read_json(&args.dag)?;
    let sensitive: Vec<String> = args
        .sensitive
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    let (scm, ds) = ingest_csv(&args.csv, &dag, &sensitive)?;
    scm.write_json(&args.out)?;
    println!("fitted {} nodes from {} rows; wrote {}", scm.dim(), ds.len(), args.out.display());
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Gen(args) => run_gen(args),
        Command::Train(args) => run_train(args),
        Command::Audit(args) => run_audit(args),
        Command::Mitigate(args) => run_mitigate(args),
        Command::Bench(args) => run_bench(args),
        Command::FitScm(args) => run_fit_scm(args),
    }
}

//! Command-line entry point: dataset generation, one-shot training and
//! evaluation, experiment sweeps, and the theory-check suite.
//!
//! Exit codes: 0 success (all checks passed), 1 check failure, 2 usage or
//! I/O error.

mod theory_checks;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use spurlab::analysis::GroupMetrics;
use spurlab::data::{
    gen_explicit, gen_implicit, load_features_csv, write_features_csv, CsvSchema, ExplicitConfig,
    GroupedDataset, ImplicitConfig,
};
use spurlab::optimize::{train_logistic, LinearModel, Objective, TrainConfig};
use spurlab::sweeps::{run_sweep, write_error_vs_size_svg, write_results, SweepSpec};

const OUT_DIR_ENV: &str = "SPURLAB_OUT";

#[derive(Parser)]
#[command(name = "spurlab", version, about = "Worst-group error simulation laboratory")]
struct Cli {
    /// Master seed; all randomness flows from it through named substreams.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory (falls back to $SPURLAB_OUT, then ".").
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker-thread cap for parallel sweeps (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Print progress details.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset and write it as CSV.
    Gen(GenArgs),
    /// Train a linear model on generated or CSV data; saves model JSON.
    Train(TrainArgs),
    /// Evaluate a saved model on a dataset and print group metrics.
    Eval(EvalArgs),
    /// Run a sweep described by a TOML/JSON spec file.
    Sweep(SweepArgs),
    /// Run numerical theory checks and write a JSON report.
    Theory(TheoryArgs),
}

#[derive(Args)]
struct DataSource {
    /// Featurized CSV (header `y,a,f0..`).
    #[arg(long, conflicts_with_all = ["implicit", "explicit"])]
    data: Option<PathBuf>,
    /// Generate implicit-setting data: n,d,p_maj,sigma_core_sq,sigma_spu_sq
    #[arg(long, value_delimiter = ',', conflicts_with = "explicit")]
    implicit: Option<Vec<String>>,
    /// Generate explicit-setting data: n_maj,n_min,N,sigma_core_sq,sigma_spu_sq,sigma_noise_sq
    #[arg(long, value_delimiter = ',')]
    explicit: Option<Vec<String>>,
    /// Label column name for CSV data.
    #[arg(long, default_value = "y")]
    label_col: String,
    /// Attribute column name for CSV data.
    #[arg(long, default_value = "a")]
    attr_col: String,
}

impl DataSource {
    fn load(&self, seed: u64) -> anyhow::Result<GroupedDataset> {
        if let Some(path) = &self.data {
            let schema = CsvSchema {
                label: self.label_col.clone(),
                attribute: self.attr_col.clone(),
                features: None,
            };
            return Ok(load_features_csv(path, &schema)?);
        }
        if let Some(vals) = &self.implicit {
            if vals.len() != 5 {
                bail!("--implicit expects n,d,p_maj,sigma_core_sq,sigma_spu_sq");
            }
            let cfg = ImplicitConfig {
                n: vals[0].parse().context("implicit n")?,
                d: vals[1].parse().context("implicit d")?,
                p_maj: vals[2].parse().context("implicit p_maj")?,
                sigma_core_sq: vals[3].parse().context("implicit sigma_core_sq")?,
                sigma_spu_sq: vals[4].parse().context("implicit sigma_spu_sq")?,
                seed,
            };
            return Ok(gen_implicit(&cfg)?);
        }
        if let Some(vals) = &self.explicit {
            if vals.len() != 6 {
                bail!("--explicit expects n_maj,n_min,N,sigma_core_sq,sigma_spu_sq,sigma_noise_sq");
            }
            let cfg = ExplicitConfig {
                n_maj: vals[0].parse().context("explicit n_maj")?,
                n_min: vals[1].parse().context("explicit n_min")?,
                noise_dim: vals[2].parse().context("explicit N")?,
                sigma_core_sq: vals[3].parse().context("explicit sigma_core_sq")?,
                sigma_spu_sq: vals[4].parse().context("explicit sigma_spu_sq")?,
                sigma_noise_sq: vals[5].parse().context("explicit sigma_noise_sq")?,
                seed,
            };
            return Ok(gen_explicit(&cfg)?);
        }
        bail!("no data source given: use --data, --implicit, or --explicit")
    }
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    source: DataSource,
    /// Output CSV file (relative paths land in the output directory).
    #[arg(long, default_value = "dataset.csv")]
    out_file: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    source: DataSource,
    #[arg(long, value_enum, default_value_t = CliObjective::Reweight)]
    objective: CliObjective,
    /// L2 strength; 1e-9 is the "unregularized" convention.
    #[arg(long, default_value_t = 1e-9)]
    lambda: f64,
    #[arg(long, default_value_t = 1e-8)]
    grad_tol: f64,
    #[arg(long, default_value_t = 1000)]
    max_iters: usize,
    /// Output model JSON.
    #[arg(long, default_value = "model.json")]
    model_out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Model JSON produced by `train`.
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    source: DataSource,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Args)]
struct SweepArgs {
    /// Sweep spec (TOML primary; JSON accepted).
    #[arg(long)]
    spec: PathBuf,
    /// Print the cell/row counts and exit without running.
    #[arg(long)]
    dry_run: bool,
    /// Override the spec's master seed.
    #[arg(long)]
    override_seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Args)]
struct TheoryArgs {
    /// Check to run (see --list); "all" runs every check.
    #[arg(long, default_value = "all")]
    check: String,
    /// Enumerate available checks and exit.
    #[arg(long)]
    list: bool,
    /// Seeds/trials knob for the stochastic checks.
    #[arg(long)]
    trials: Option<usize>,
    /// Report file name inside the output directory.
    #[arg(long, default_value = "theory_report.json")]
    report: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum CliObjective {
    Erm,
    Reweight,
    Subsample,
}

impl From<CliObjective> for Objective {
    fn from(o: CliObjective) -> Self {
        match o {
            CliObjective::Erm => Objective::Erm,
            CliObjective::Reweight => Objective::Reweight,
            CliObjective::Subsample => Objective::Subsample,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Csv,
    Json,
}

/// Saved model file: weights plus everything needed to reproduce the fit.
#[derive(Serialize, Deserialize)]
struct ModelFile {
    tool_version: String,
    model: LinearModel,
    train_config: TrainConfig,
    converged: bool,
    grad_norm: f64,
    iterations: usize,
    n_train: usize,
}

#[derive(Serialize)]
struct Manifest<'a, T: Serialize> {
    tool: &'a str,
    version: &'a str,
    command: &'a str,
    seed: u64,
    payload: &'a T,
}

fn out_dir(cli: &Cli) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn in_out_dir(dir: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        dir.join(p)
    }
}

fn write_manifest<T: Serialize>(dir: &Path, command: &str, seed: u64, payload: &T) -> anyhow::Result<()> {
    let manifest = Manifest {
        tool: "spurlab",
        version: env!("CARGO_PKG_VERSION"),
        command,
        seed,
        payload,
    };
    let path = dir.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.jobs > 0 {
        // Build the global pool before any parallel work.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global();
    }
    match run(&cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: &Cli) -> anyhow::Result<ExitCode> {
    let dir = out_dir(cli);
    std::fs::create_dir_all(&dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;
    match &cli.command {
        Command::Gen(args) => cmd_gen(cli, &dir, args),
        Command::Train(args) => cmd_train(cli, &dir, args),
        Command::Eval(args) => cmd_eval(cli, &dir, args),
        Command::Sweep(args) => cmd_sweep(cli, &dir, args),
        Command::Theory(args) => theory_checks::cmd_theory(cli.seed, &dir, args),
    }
}

fn cmd_gen(cli: &Cli, dir: &Path, args: &GenArgs) -> anyhow::Result<ExitCode> {
    let ds = args.source.load(cli.seed)?;
    let path = in_out_dir(dir, &args.out_file);
    write_features_csv(&ds, &path)?;
    if cli.verbose > 0 {
        eprintln!("wrote {} ({} rows, {} features)", path.display(), ds.n(), ds.dim());
    }
    write_manifest(dir, "gen", cli.seed, &serde_json::json!({ "out_file": path, "n": ds.n(), "dim": ds.dim() }))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_train(cli: &Cli, dir: &Path, args: &TrainArgs) -> anyhow::Result<ExitCode> {
    let ds = args.source.load(cli.seed)?;
    let cfg = TrainConfig {
        objective: args.objective.into(),
        lambda: args.lambda,
        grad_tol: args.grad_tol,
        max_iters: args.max_iters,
        seed: cli.seed,
    };
    let out = train_logistic(&ds, &cfg)?;
    let metrics = match cfg.objective {
        Objective::Subsample => {
            let reduced = spurlab::data::subsample_balanced(&ds, cfg.seed)?;
            spurlab::analysis::group_errors(&out.model, &reduced, None)?
        }
        _ => spurlab::analysis::group_errors(&out.model, &ds, None)?,
    };
    let file = ModelFile {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        model: out.model,
        train_config: cfg,
        converged: out.converged,
        grad_norm: out.grad_norm,
        iterations: out.iterations,
        n_train: out.n_train,
    };
    let path = in_out_dir(dir, &args.model_out);
    std::fs::write(&path, serde_json::to_string_pretty(&file)?)?;
    println!(
        "trained: converged={} grad_norm={:.3e} iters={} train_worst={:.4} train_avg={:.4}",
        file.converged, file.grad_norm, file.iterations, metrics.worst_group_error, metrics.average_error
    );
    write_manifest(dir, "train", cli.seed, &serde_json::json!({ "model": path, "config": file.train_config }))?;
    Ok(ExitCode::SUCCESS)
}

fn print_metrics(m: &GroupMetrics, format: Format) -> anyhow::Result<()> {
    match format {
        Format::Text => {
            println!(
                "per-group errors: g0={:.4} g1={:.4} g2={:.4} g3={:.4}",
                m.per_group_error[0], m.per_group_error[1], m.per_group_error[2], m.per_group_error[3]
            );
            println!("average error:  {:.4}", m.average_error);
            println!("worst group:    {} (error {:.4})", m.worst_group_id, m.worst_group_error);
        }
        Format::Json => println!("{}", serde_json::to_string_pretty(m)?),
        Format::Csv => {
            println!("err_g0,err_g1,err_g2,err_g3,avg,worst,worst_group");
            println!(
                "{},{},{},{},{},{},{}",
                m.per_group_error[0],
                m.per_group_error[1],
                m.per_group_error[2],
                m.per_group_error[3],
                m.average_error,
                m.worst_group_error,
                m.worst_group_id
            );
        }
    }
    Ok(())
}

fn cmd_eval(cli: &Cli, _dir: &Path, args: &EvalArgs) -> anyhow::Result<ExitCode> {
    let raw = std::fs::read_to_string(&args.model)
        .with_context(|| format!("reading model {}", args.model.display()))?;
    let file: ModelFile = serde_json::from_str(&raw).context("parsing model JSON")?;
    let ds = args.source.load(cli.seed)?;
    let metrics = spurlab::analysis::group_errors(&file.model, &ds, None)?;
    print_metrics(&metrics, args.format)?;
    Ok(ExitCode::SUCCESS)
}

fn parse_spec(path: &Path) -> anyhow::Result<SweepSpec> {
    let raw = std::fs::read_to_string(path)
        .with_context(|| format!("reading spec {}", path.display()))?;
    let by_ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    let spec: SweepSpec = match by_ext {
        "json" => serde_json::from_str(&raw).context("parsing JSON spec")?,
        _ => toml::from_str(&raw).or_else(|toml_err| {
            serde_json::from_str(&raw)
                .map_err(|_| anyhow::anyhow!("parsing TOML spec: {toml_err}"))
        })?,
    };
    Ok(spec)
}

fn cmd_sweep(cli: &Cli, dir: &Path, args: &SweepArgs) -> anyhow::Result<ExitCode> {
    let mut spec = parse_spec(&args.spec)?;
    if let Some(seed) = args.override_seed {
        spec.seed = seed;
    }
    spec.validate()?;
    if args.dry_run {
        println!("cells: {}", spec.cell_count());
        println!("rows:  {}", spec.row_count());
        return Ok(ExitCode::SUCCESS);
    }
    let started = std::time::Instant::now();
    let rows = run_sweep(&spec)?;
    if cli.verbose > 0 {
        eprintln!("sweep finished: {} rows in {:.1}s", rows.len(), started.elapsed().as_secs_f64());
    }
    let results_path = dir.join("results.csv");
    write_results(&rows, &results_path)?;
    let plot_path = dir.join("plot.svg");
    write_error_vs_size_svg(&rows, &plot_path)?;
    if matches!(args.format, Format::Json) {
        std::fs::write(dir.join("results.json"), serde_json::to_string_pretty(&rows)?)?;
    }
    write_manifest(dir, "sweep", spec.seed, &serde_json::json!({ "spec": spec, "results": results_path, "plot": plot_path }))?;
    Ok(ExitCode::SUCCESS)
}

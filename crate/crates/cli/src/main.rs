use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Deserialize;
use serde_json::Value;

use langevin_core::bounds::{evaluate, BoundsEvalConfig};
use langevin_core::diffusion::{run_diffusion, DiffusionConfig};
use langevin_core::gibbs::{build_gibbs, gibbs_stats, spectral_gap_numeric, GridConfig, GridMeasure};
use langevin_core::harness::{self, DataSpec, ExperimentConfig, ExperimentKind, ObjectiveSpec};
use langevin_core::oracles::OracleSpec;
use langevin_core::sgld::{run_sgld, EmpiricalMeasure, SgldConfig};
use langevin_core::transport::{w2_empirical, w2_empirical_vs_grid_1d, Method, TransportPlanResult};
use langevin_core::Dataset;

const THREADS_VAR: &str = "LANGEVIN_THREADS";

#[derive(Parser)]
#[command(name = "langevin-lab", version, about = "SGLD simulations checked against their nonasymptotic bounds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate SGLD chains.
    Sgld {
        #[command(subcommand)]
        action: RunAction,
    },
    /// Simulate the Langevin diffusion with fine Euler steps.
    Diffusion {
        #[command(subcommand)]
        action: RunAction,
    },
    /// Gibbs measure quadrature.
    Gibbs {
        #[command(subcommand)]
        action: GibbsAction,
    },
    /// 2-Wasserstein distance between two samples, or a sample and a 1D grid.
    W2 {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Read `b` as a grid written by `gibbs build`.
        #[arg(long)]
        grid: bool,
    },
    /// Theory constants and bounds.
    Bounds {
        #[command(subcommand)]
        action: BoundsAction,
    },
    Discretization(ExperimentArgs),
    Convergence(ExperimentArgs),
    Suboptimality(ExperimentArgs),
    Stability(ExperimentArgs),
    ExcessRisk(ExperimentArgs),
    /// Print the resolved default configuration of an experiment.
    Preset { experiment: String },
}

#[derive(Subcommand)]
enum RunAction {
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum GibbsAction {
    Build {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum BoundsAction {
    Eval {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(clap::Args)]
struct ExperimentArgs {
    /// JSON merged over the experiment preset; the preset alone when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; falls back to `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn full() -> OracleSpec {
    OracleSpec::Full
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SgldFile {
    objective: ObjectiveSpec,
    data: DataSpec,
    #[serde(default = "full")]
    oracle: OracleSpec,
    sgld: SgldConfig,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DiffusionFile {
    objective: ObjectiveSpec,
    data: DataSpec,
    diffusion: DiffusionConfig,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GibbsFile {
    objective: ObjectiveSpec,
    data: DataSpec,
    beta: f64,
    #[serde(default)]
    grid: GridConfig,
}

fn read_json(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn read_config<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_value(read_json(path)?).with_context(|| format!("invalid config {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn print_json(v: &impl serde::Serialize) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v)?;
    writeln!(out)?;
    Ok(())
}

/// Samples from either a headerless CSV (one point per row) or an ensemble
/// written by `sgld run` / `diffusion run`, in which case the `w_*` columns of
/// the last recorded step are used.
fn read_samples(path: &Path) -> Result<EmpiricalMeasure> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let Some(first) = lines.next() else { bail!("{} is empty", path.display()) };
    if !first.starts_with("step") {
        let data = Dataset::from_csv(path).with_context(|| format!("reading {}", path.display()))?;
        return Ok(EmpiricalMeasure::new(data.values().to_vec(), data.sample_dim())?);
    }
    let cols: Vec<usize> =
        first.split(',').enumerate().filter(|(_, h)| h.trim().starts_with("w_")).map(|(i, _)| i).collect();
    if cols.is_empty() {
        bail!("{}: no w_* columns", path.display());
    }
    let mut rows: Vec<(u64, Vec<f64>)> = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        let parse = |j: usize| -> Result<f64> {
            let f = fields.get(j).with_context(|| format!("{}: row {} is short", path.display(), i + 2))?;
            f.trim().parse::<f64>().with_context(|| format!("{}: row {}", path.display(), i + 2))
        };
        let step = fields[0].trim().parse::<u64>().with_context(|| format!("{}: row {}", path.display(), i + 2))?;
        rows.push((step, cols.iter().map(|&j| parse(j)).collect::<Result<_>>()?));
    }
    let last = rows.iter().map(|r| r.0).max().context("no samples")?;
    let points: Vec<f64> = rows.into_iter().filter(|r| r.0 == last).flat_map(|r| r.1).collect();
    Ok(EmpiricalMeasure::new(points, cols.len())?)
}

fn run_experiment(kind: ExperimentKind, args: &ExperimentArgs) -> Result<bool> {
    let user = match &args.config {
        Some(p) => read_json(p)?,
        None => serde_json::json!({}),
    };
    let cfg = ExperimentConfig::resolve(Some(kind), user)?;
    let out = args.out.clone().or_else(|| cfg.output_dir.clone());
    let Some(out) = out else { bail!("no output directory: pass --out or set output_dir") };
    let start = Instant::now();
    let report = harness::run(&cfg)?;
    report.write_dir(&out, start.elapsed())?;
    let s = &report.summary;
    println!(
        "{}: {} rows, {} holds, {} inconclusive, {} violated, {} not applicable -> {}",
        kind,
        s.rows,
        s.holds,
        s.inconclusive,
        s.violated,
        s.not_applicable,
        out.display()
    );
    Ok(!report.any_violated())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Sgld { action: RunAction::Run { config, out } } => {
            let f: SgldFile = read_config(&config)?;
            let obj = f.objective.build()?;
            let data = f.data.load(None, 0)?;
            f.sgld.check_step_size(obj.constants()).unwrap_or_else(|e| log::warn!("{e}"));
            let ens = run_sgld(obj.as_ref(), &data, &f.oracle, &f.sgld)?;
            let mut w = create(&out)?;
            ens.write_csv(&mut w, false)?;
            w.flush()?;
        }
        Command::Diffusion { action: RunAction::Run { config, out } } => {
            let f: DiffusionFile = read_config(&config)?;
            let obj = f.objective.build()?;
            let data = f.data.load(None, 0)?;
            let run = run_diffusion(obj.as_ref(), &data, &f.diffusion)?;
            for warning in &run.warnings {
                log::warn!("{warning}");
            }
            let mut w = create(&out)?;
            run.ensemble.write_csv(&mut w, true)?;
            w.flush()?;
        }
        Command::Gibbs { action: GibbsAction::Build { config, out } } => {
            let f: GibbsFile = read_config(&config)?;
            let obj = f.objective.build()?;
            let data = f.data.load(None, 0)?;
            let g = build_gibbs(obj.as_ref(), &data, f.beta, &f.grid)?;
            let mut w = create(&out)?;
            g.grid.write_csv(&mut w)?;
            w.flush()?;
            let gap = match spectral_gap_numeric(&g.grid) {
                Ok(est) => serde_json::to_value(est)?,
                Err(e) => serde_json::json!({"error": e.to_string()}),
            };
            print_json(&serde_json::json!({
                "log_partition": g.log_partition,
                "half_width": g.half_width,
                "tail_mass_bound": g.tail_mass_bound,
                "resolution_drift": g.resolution_drift,
                "stats": gibbs_stats(&g.grid),
                "spectral_gap": gap,
            }))?;
        }
        Command::W2 { a, b, grid } => {
            let a = read_samples(&a)?;
            let result = if grid {
                let file = File::open(&b).with_context(|| format!("reading {}", b.display()))?;
                let g = GridMeasure::read_csv(file)?;
                TransportPlanResult { w2: w2_empirical_vs_grid_1d(&a, &g)?, method: Method::Grid1dCdf, n: a.len(), subsampled_from: None }
            } else {
                w2_empirical(&a, &read_samples(&b)?)?
            };
            print_json(&result)?;
        }
        Command::Bounds { action: BoundsAction::Eval { config } } => {
            let f: BoundsEvalConfig = read_config(&config)?;
            let report = evaluate(&f.input, &f.options)?;
            print_json(&report)?;
            return Ok(!report.any_violated());
        }
        Command::Discretization(args) => return run_experiment(ExperimentKind::Discretization, &args),
        Command::Convergence(args) => return run_experiment(ExperimentKind::Convergence, &args),
        Command::Suboptimality(args) => return run_experiment(ExperimentKind::Suboptimality, &args),
        Command::Stability(args) => return run_experiment(ExperimentKind::Stability, &args),
        Command::ExcessRisk(args) => return run_experiment(ExperimentKind::ExcessRisk, &args),
        Command::Preset { experiment } => {
            let kind: ExperimentKind = experiment.parse()?;
            print_json(&ExperimentConfig::defaults(kind))?;
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Ok(v) = std::env::var(THREADS_VAR) {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    log::warn!("could not size the thread pool: {e}");
                }
            }
            _ => log::warn!("ignoring {THREADS_VAR}={v}: expected a positive integer"),
        }
    }
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

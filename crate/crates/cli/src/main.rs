//! `pdecast`: generate initial conditions, solve, encode, probe backends, run
//! experiments and turn their output into metric and plot tables.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 backend failure,
//! 3 more than 10% of trials failed.

mod plotdata;

use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use pdecast_core::backend::{probe_tokenization, BackendConfig, OracleMode, TrialContext};
use pdecast_core::codec::{quantize, serialize, QuantRange};
use pdecast_core::experiments::{
    aggregate, read_records, run_experiment, ExperimentConfig, RunManifest, Runner,
};
use pdecast_core::grid_ic::{build_grids, Profile};
use pdecast_core::metrics::{read_metrics_csv, write_metrics_csv};
use pdecast_core::solvers::{solve, Refinement, SchemeId};
use pdecast_core::Error;

use plotdata::Figure;

#[derive(Debug, Parser)]
#[command(name = "pdecast", version, about = "Zero-shot PDE continuation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Experiment {
    OneStepContext,
    OneStepOutput,
    MultiStep,
    Energy,
}

impl Experiment {
    fn sweep_name(self) -> &'static str {
        match self {
            Self::OneStepContext => "context",
            Self::OneStepOutput => "output",
            Self::MultiStep => "multi_step",
            Self::Energy => "energy",
        }
    }
}

/// Backend override for `run` and `probe`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendKind {
    /// Refined solver marched from the decoded first slice.
    Oracle,
    /// Refined solver advancing the decoded last slice.
    OracleStep,
    RepeatLast,
}

impl BackendKind {
    fn config(self, refinement: Refinement) -> BackendConfig {
        match self {
            Self::Oracle => BackendConfig::Oracle {
                refinement,
                mode: OracleMode::Trajectory,
            },
            Self::OracleStep => BackendConfig::Oracle {
                refinement,
                mode: OracleMode::Step,
            },
            Self::RepeatLast => BackendConfig::RepeatLast,
        }
    }
}

#[derive(Debug, clap::Args)]
struct TrialGrid {
    #[arg(long)]
    config: PathBuf,
    /// Trial index whose initial condition is used.
    #[arg(long, default_value_t = 0)]
    trial: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "n-x")]
    n_x: usize,
    #[arg(long = "n-t")]
    n_t: usize,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Emit the initial-condition records of a configuration as JSON lines.
    GenIc {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve one trial's initial condition and write the field as CSV.
    Solve {
        #[command(flatten)]
        grid: TrialGrid,
        /// Classical scheme on the coarse grid; the refined reference if unset.
        #[arg(long)]
        scheme: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Quantize one trial's reference and print its token stream.
    Encode {
        #[command(flatten)]
        grid: TrialGrid,
        /// Number of leading slices to serialize; all `N_T + 1` if unset.
        #[arg(long)]
        slices: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check how the backend tokenizes codes and delimiters.
    Probe {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        backend: Option<BackendKind>,
    },
    /// Run an experiment into a run directory.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Must match the configuration's sweep kind when given.
        #[arg(long, value_enum)]
        experiment: Option<Experiment>,
        /// Defaults to `runs/<run_id>-<unix time>`.
        #[arg(long)]
        run_dir: Option<PathBuf>,
        #[arg(long, value_enum)]
        backend: Option<BackendKind>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Continue the run in `--run-dir`, skipping completed trials.
        #[arg(long)]
        resume: bool,
        /// Record backend traffic to this fixture.
        #[arg(long, conflicts_with = "replay")]
        record: Option<PathBuf>,
        /// Serve backend responses from this fixture only.
        #[arg(long)]
        replay: Option<PathBuf>,
        /// Probe the backend first even when it is not an HTTP backend.
        #[arg(long)]
        probe: bool,
    },
    /// Aggregate records.jsonl into metrics.csv.
    Metrics {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Defaults to the run id in the neighbouring manifest.json.
        #[arg(long)]
        run_id: Option<String>,
        #[arg(long)]
        average_predictions: bool,
    },
    /// Write the CSV behind one figure.
    Plotdata {
        #[arg(long, value_enum)]
        figure: Figure,
        /// metrics.csv, or records.jsonl for temporal-diff, error-correlates and topk.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Keep metrics whose name starts with this prefix.
        #[arg(long)]
        metric: Option<String>,
        #[arg(long)]
        axis_value: Option<usize>,
        #[arg(long, default_value_t = 0)]
        trial: usize,
        #[arg(long, default_value_t = 0)]
        generation: usize,
        /// Predicted slice index for topk.
        #[arg(long, default_value_t = 0)]
        step: usize,
        #[arg(long, default_value_t = 8)]
        k: usize,
    },
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(io::stdout().lock()),
    })
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn gen_ic(config: &Path, seed: Option<u64>, trials: Option<usize>, out: Option<&Path>) -> Result<()> {
    let mut cfg = load_config(config, seed)?;
    if let Some(m) = trials {
        cfg.trials = m;
    }
    let runner = Runner::new(&cfg, BackendConfig::RepeatLast.build()?);
    let mut w = output(out)?;
    for m in 0..cfg.trials {
        let ic = runner.initial_condition(m)?;
        serde_json::to_writer(&mut w, ic.record())?;
        writeln!(w)?;
    }
    Ok(())
}

fn solve_cmd(grid: &TrialGrid, scheme: Option<&str>, out: Option<&Path>) -> Result<()> {
    let cfg = load_config(&grid.config, grid.seed)?;
    let runner = Runner::new(&cfg, BackendConfig::RepeatLast.build()?);
    let ic = runner.initial_condition(grid.trial)?;
    let (spatial, time) = build_grids(cfg.domain.half_width, grid.n_x, cfg.domain.t_final, grid.n_t)?;
    let field = match scheme {
        None => runner.reference(&ic, &spatial, &time)?,
        Some(name) => {
            let scheme = SchemeId::parse(name).map_err(|e| Error::Config(e.to_string()))?;
            scheme.check_compatible(&cfg.pde).map_err(|e| Error::Config(e.to_string()))?;
            solve(&cfg.pde, scheme, &ic.sample_interior(&spatial), &spatial, &time)?
        }
    };
    output(out)?.write_all(field.to_csv().as_bytes())?;
    Ok(())
}

fn encode_cmd(grid: &TrialGrid, slices: Option<usize>, out: Option<&Path>) -> Result<()> {
    let cfg = load_config(&grid.config, grid.seed)?;
    let runner = Runner::new(&cfg, BackendConfig::RepeatLast.build()?);
    let ic = runner.initial_condition(grid.trial)?;
    let (spatial, time) = build_grids(cfg.domain.half_width, grid.n_x, cfg.domain.t_final, grid.n_t)?;
    let q = quantize(runner.reference(&ic, &spatial, &time)?.values())?;
    let j = slices.unwrap_or(grid.n_t + 1);
    let stream = serialize(&q, 0..j)?;
    let mut w = output(out)?;
    writeln!(w, "{}", stream.as_str())?;
    eprintln!("slices: {j}, tokens: {}", stream.token_count());
    Ok(())
}

fn probe_context(cfg: &ExperimentConfig) -> Result<TrialContext> {
    let (n_x, n_t) = cfg.sweep.grids()[0];
    let (spatial, time) = build_grids(cfg.domain.half_width, n_x, cfg.domain.t_final, n_t)?;
    Ok(TrialContext {
        pde: cfg.pde,
        spatial,
        time,
        range: QuantRange::new(0.0, 1.0)?,
    })
}

fn probe_cmd(config: &Path, backend: Option<BackendKind>) -> Result<()> {
    let mut cfg = load_config(config, None)?;
    if let Some(b) = backend {
        cfg.backend = b.config(cfg.reference);
    }
    let report = probe_tokenization(cfg.backend.build()?.as_ref(), &probe_context(&cfg)?)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn unique_run_dir(run_id: &str) -> PathBuf {
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let base = PathBuf::from("runs").join(format!("{run_id}-{secs}"));
    let mut dir = base.clone();
    let mut n = 1;
    while dir.exists() {
        dir = PathBuf::from(format!("{}-{n}", base.display()));
        n += 1;
    }
    dir
}

struct RunArgs<'a> {
    config: Option<&'a Path>,
    experiment: Option<Experiment>,
    run_dir: Option<&'a Path>,
    backend: Option<BackendKind>,
    jobs: usize,
    seed: Option<u64>,
    resume: bool,
    record: Option<&'a Path>,
    replay: Option<&'a Path>,
    probe: bool,
}

fn run_cmd(a: RunArgs<'_>) -> Result<()> {
    let manifest = match (a.resume, a.run_dir) {
        (true, Some(dir)) => Some(
            RunManifest::load(dir)?
                .ok_or_else(|| Error::Config(format!("{} has no manifest.json to resume", dir.display())))?,
        ),
        (true, None) => return Err(Error::Config("--resume needs --run-dir".into()).into()),
        _ => None,
    };
    let mut cfg = match (a.config, &manifest) {
        (Some(path), _) => load_config(path, None)?,
        (None, Some(m)) => m.config.clone(),
        (None, None) => return Err(Error::Config("--config is required".into()).into()),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(b) = a.backend {
        cfg.backend = b.config(cfg.reference);
    }
    if let Some(f) = a.record {
        cfg.backend = BackendConfig::Replay {
            fixture: f.to_path_buf(),
            record: Some(Box::new(cfg.backend)),
        };
    }
    if let Some(f) = a.replay {
        cfg.backend = BackendConfig::Replay {
            fixture: f.to_path_buf(),
            record: None,
        };
    }
    if let Some(e) = a.experiment {
        if e.sweep_name() != cfg.sweep.name() {
            return Err(Error::Config(format!(
                "--experiment {} does not match the configured {} sweep",
                e.sweep_name(),
                cfg.sweep.name()
            ))
            .into());
        }
    }
    cfg.validate()?;
    if let Some(m) = &manifest {
        if m.config != cfg {
            return Err(Error::Config("configuration differs from the run's manifest; refusing to resume".into()).into());
        }
    }

    let run_dir = match a.run_dir {
        Some(d) => d.to_path_buf(),
        None => unique_run_dir(&cfg.run_id),
    };
    if !a.resume && run_dir.join("records.jsonl").exists() {
        return Err(Error::Config(format!("{} already holds a run; pass --resume", run_dir.display())).into());
    }
    fs::create_dir_all(run_dir.join("fixtures"))?;

    let backend = cfg.backend.build()?;
    let probe = if a.probe || matches!(cfg.backend, BackendConfig::Http(_)) {
        let report = probe_tokenization(backend.as_ref(), &probe_context(&cfg)?)?;
        log::info!("tokenization probe: {:?}", report.status);
        Some(report)
    } else {
        manifest.as_ref().and_then(|m| m.probe.clone())
    };
    RunManifest::new(&cfg, a.config, &run_dir, probe).store(&run_dir)?;

    let summary = run_experiment(&cfg, backend, &run_dir, a.jobs, a.resume)?;
    eprintln!(
        "{}: {} units, {} completed, {} failed, {} skipped",
        run_dir.display(),
        summary.total,
        summary.completed,
        summary.failed,
        summary.skipped
    );
    println!("{}", run_dir.display());
    Ok(())
}

fn metrics_cmd(records: &Path, out: Option<&Path>, run_id: Option<&str>, average: bool) -> Result<()> {
    let dir = records.parent().unwrap_or(Path::new("."));
    let manifest = RunManifest::load(dir)?;
    let mut options = manifest.as_ref().map(|m| m.config.metrics).unwrap_or_default();
    options.average_predictions |= average;
    let run_id = run_id
        .map(str::to_string)
        .or_else(|| manifest.as_ref().map(|m| m.config.run_id.clone()))
        .unwrap_or_else(|| "run".into());
    let rows = aggregate(&run_id, &read_records(records)?, options)?;
    let default_out = dir.join("metrics.csv");
    write_metrics_csv(&rows, output(Some(out.unwrap_or(&default_out)))?)?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn plotdata_cmd(
    figure: Figure,
    input: &Path,
    out: Option<&Path>,
    metric: Option<&str>,
    axis_value: Option<usize>,
    trial: usize,
    generation: usize,
    step: usize,
    k: usize,
) -> Result<()> {
    let table = if figure.reads_records() {
        let records = read_records(input)?;
        let record = plotdata::select(&records, axis_value, trial, generation)?;
        match figure {
            Figure::TemporalDiff => plotdata::temporal_diff(record, input.parent().unwrap_or(Path::new(".")))?,
            Figure::ErrorCorrelates => plotdata::error_correlate_table(record)?,
            Figure::Topk => plotdata::topk(record, step, k)?,
            _ => unreachable!("metric figures do not read records"),
        }
    } else {
        let rows = read_metrics_csv(File::open(input).with_context(|| format!("opening {}", input.display()))?)?;
        plotdata::metric_figure(figure, &rows, metric)?
    };
    table.write(output(out)?)
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenIc {
            config,
            seed,
            trials,
            out,
        } => gen_ic(&config, seed, trials, out.as_deref()),
        Command::Solve { grid, scheme, out } => solve_cmd(&grid, scheme.as_deref(), out.as_deref()),
        Command::Encode { grid, slices, out } => encode_cmd(&grid, slices, out.as_deref()),
        Command::Probe { config, backend } => probe_cmd(&config, backend),
        Command::Run {
            config,
            experiment,
            run_dir,
            backend,
            jobs,
            seed,
            resume,
            record,
            replay,
            probe,
        } => run_cmd(RunArgs {
            config: config.as_deref(),
            experiment,
            run_dir: run_dir.as_deref(),
            backend,
            jobs,
            seed,
            resume,
            record: record.as_deref(),
            replay: replay.as_deref(),
            probe,
        }),
        Command::Metrics {
            records,
            out,
            run_id,
            average_predictions,
        } => metrics_cmd(&records, out.as_deref(), run_id.as_deref(), average_predictions),
        Command::Plotdata {
            figure,
            input,
            out,
            metric,
            axis_value,
            trial,
            generation,
            step,
            k,
        } => plotdata_cmd(figure, &input, out.as_deref(), metric.as_deref(), axis_value, trial, generation, step, k),
    }
}

/// Maps an error to the documented exit status.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(e) if e.is_backend() => 2,
        Some(Error::ExcessiveFailures { .. }) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use anyhow::anyhow;
    use pdecast_core::experiments::Sweep;

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into()).into()), 1);
        assert_eq!(exit_code(&Error::Transport("x".into()).into()), 2);
        assert_eq!(exit_code(&Error::FixtureMiss("x".into()).into()), 2);
        assert_eq!(exit_code(&Error::ExcessiveFailures { failed: 2, total: 3 }.into()), 3);
        assert_eq!(exit_code(&anyhow!("plain")), 1);
    }

    #[test]
    fn argument_surface() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
        let cli = Cli::try_parse_from(["pdecast", "run", "--config", "c.toml", "--backend", "oracle", "--jobs", "4"]).unwrap();
        assert!(matches!(cli.command, Command::Run { jobs: 4, backend: Some(BackendKind::Oracle), .. }));
        assert!(Cli::try_parse_from(["pdecast", "run", "--record", "a", "--replay", "b"]).is_err());
        let cli = Cli::try_parse_from(["pdecast", "plotdata", "--figure", "rollout-error", "--input", "m.csv"]).unwrap();
        assert!(matches!(cli.command, Command::Plotdata { figure: Figure::RolloutError, .. }));
    }

    #[test]
    fn experiment_names_match_sweeps() {
        for (e, s) in [
            (Experiment::OneStepContext, Sweep::Context { n_x: 1, n_t: vec![2] }),
            (Experiment::OneStepOutput, Sweep::Output { n_t: 2, n_x: vec![1] }),
            (
                Experiment::MultiStep,
                Sweep::MultiStep {
                    n_x: 1,
                    n_t: 2,
                    generations: 1,
                },
            ),
            (
                Experiment::Energy,
                Sweep::Energy {
                    n_x: 2,
                    n_t: 2,
                    generations: 1,
                },
            ),
        ] {
            assert_eq!(e.sweep_name(), s.name());
        }
    }
}

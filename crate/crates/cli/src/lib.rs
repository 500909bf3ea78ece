//! `pdha-sim`: load or pick a model, simulate it, export the run.

pub mod export;
pub mod model_file;

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use anyhow::Context;
use clap::{Parser, Subcommand};
use log::info;
use pdha_core::automaton::{discretize_model_with, FlowKind};
use pdha_core::executor::{classify_execution, simulate, Integrator, SimOptions};
use pdha_core::models::{heater_description, traffic_description, HeaterConfig, TrafficConfig};
use pdha_core::Error;

use export::{summarize, write_trajectory, write_transitions, RunInfo};
use model_file::{load_model_file, LoadError, LoadedModel, Resolution};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "pdha-sim", version, about = "Simulate discrete-space PDE hybrid automata")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one model and write trajectory.csv, transitions.csv and summary.json.
    Simulate(SimulateArgs),
}

#[derive(Debug, clap::Args)]
pub struct SimulateArgs {
    /// JSON model file.
    #[arg(long, conflicts_with = "builtin", required_unless_present = "builtin")]
    pub model: Option<PathBuf>,
    /// Built-in model: heater or traffic.
    #[arg(long)]
    pub builtin: Option<String>,
    /// Simulation horizon.
    #[arg(long)]
    pub t_end: f64,
    /// Time step; a whole number of cells per step for the characteristic integrator.
    #[arg(long)]
    pub dt: f64,
    /// euler, rk4 or characteristic; characteristic for advection-only models, euler otherwise.
    #[arg(long)]
    pub integrator: Option<String>,
    /// Grid points including the boundary.
    #[arg(long, conflicts_with = "sweep")]
    pub m: Option<usize>,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// Keep every K-th sample of each interval in trajectory.csv.
    #[arg(long, default_value_t = 1)]
    pub sample_every: usize,
    /// Comma-separated grid-point counts, run concurrently into out/m<N>.
    #[arg(long, value_delimiter = ',')]
    pub sweep: Option<Vec<usize>>,
}

#[derive(Debug, thiserror::Error)]
enum RunError {
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error(transparent)]
    Core(#[from] Error),
    #[error(transparent)]
    Io(#[from] anyhow::Error),
    #[error("m = {m}: {source}")]
    Sweep { m: usize, source: Box<RunError> },
}

impl RunError {
    fn exit_code(&self) -> i32 {
        match self {
            Self::Load(LoadError::Io { .. }) | Self::Io(_) => EXIT_IO,
            Self::Load(_) => EXIT_INVALID,
            Self::Core(Error::Divergence { .. }) => EXIT_DIVERGED,
            Self::Core(_) => EXIT_INVALID,
            Self::Sweep { source, .. } => source.exit_code(),
        }
    }
}

fn builtin_model(name: &str) -> Result<LoadedModel, RunError> {
    let (model, h) = match name {
        "heater" => {
            let cfg = HeaterConfig::default();
            (heater_description(&cfg)?, cfg.h)
        }
        "traffic" => {
            let cfg = TrafficConfig::default();
            (traffic_description(&cfg)?, cfg.h)
        }
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown built-in model '{other}' (expected heater or traffic)"
            ))
            .into())
        }
    };
    Ok(LoadedModel {
        model,
        resolution: Some(Resolution::Spacing(h)),
        stencils: None,
    })
}

fn pick_integrator(name: Option<&str>, model: &LoadedModel) -> Result<Integrator, Error> {
    match name {
        Some(n) => n.parse(),
        None => {
            let transport = model.model.modes.iter().all(|m| matches!(m.kind, FlowKind::Advection { .. }));
            Ok(if transport && model.model.merge_rule.is_some() {
                Integrator::Characteristic
            } else {
                Integrator::Euler
            })
        }
    }
}

fn run_one(
    loaded: &LoadedModel,
    m: Option<usize>,
    args: &SimulateArgs,
    integrator: Integrator,
    out: &Path,
) -> Result<(), RunError> {
    let points = loaded.points(m)?;
    let a = discretize_model_with(&loaded.model, points, loaded.stencils.as_deref())?;
    let opts = SimOptions::new(args.dt, integrator, args.t_end);
    let started = Instant::now();
    let (x, reach) = simulate(&a, &opts)?;
    let wall = started.elapsed().as_secs_f64();
    let class = classify_execution(&x, &opts);

    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let create = |name: &str| -> anyhow::Result<BufWriter<File>> {
        let path = out.join(name);
        Ok(BufWriter::new(
            File::create(&path).with_context(|| format!("creating {}", path.display()))?,
        ))
    };
    write_trajectory(create("trajectory.csv")?, &a, &x, args.sample_every)
        .context("writing trajectory.csv")?;
    write_transitions(create("transitions.csv")?, &a, &x).context("writing transitions.csv")?;
    let summary = summarize(
        &a,
        &x,
        &reach,
        class,
        RunInfo {
            integrator: integrator.name(),
            dt: args.dt,
            t_end: args.t_end,
            wall_time_seconds: wall,
        },
    );
    let json = serde_json::to_string_pretty(&summary).context("serializing summary")?;
    fs::write(out.join("summary.json"), json + "\n").context("writing summary.json")?;
    info!(
        "{}: m = {points}, {} transitions, {} ({wall:.3} s)",
        a.record.source_model, summary.transition_count, summary.classification
    );
    Ok(())
}

fn sweep_threads(jobs: usize) -> usize {
    let cap = std::env::var("PDHA_SIM_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|n| *n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    cap.min(jobs).max(1)
}

fn simulate_command(args: &SimulateArgs) -> Result<(), RunError> {
    let loaded = match (&args.model, &args.builtin) {
        (Some(path), _) => load_model_file(path)?,
        (None, Some(name)) => builtin_model(name)?,
        (None, None) => return Err(Error::InvalidArgument("give --model or --builtin".into()).into()),
    };
    let integrator = pick_integrator(args.integrator.as_deref(), &loaded)?;
    let Some(sweep) = &args.sweep else {
        return run_one(&loaded, args.m, args, integrator, &args.out);
    };

    let next = AtomicUsize::new(0);
    let failures: Mutex<Vec<(usize, RunError)>> = Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..sweep_threads(sweep.len()) {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(&m) = sweep.get(k) else { break };
                let dir = args.out.join(format!("m{m}"));
                if let Err(e) = run_one(&loaded, Some(m), args, integrator, &dir) {
                    failures.lock().expect("no worker panics while holding the lock").push((m, e));
                }
            });
        }
    });
    let mut failures: Vec<RunError> = failures
        .into_inner()
        .expect("workers have finished")
        .into_iter()
        .map(|(m, e)| RunError::Sweep { m, source: Box::new(e) })
        .collect();
    failures.sort_by_key(|e| match e {
        RunError::Sweep { m, .. } => *m,
        _ => 0,
    });
    // report all but the most severe here; the caller reports that one
    let Some(worst) = (0..failures.len()).max_by_key(|&k| failures[k].exit_code()) else {
        return Ok(());
    };
    let worst = failures.remove(worst);
    for e in &failures {
        eprintln!("pdha-sim: {e}");
    }
    Err(worst)
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::Simulate(args) => simulate_command(args),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("pdha-sim: {e:#}");
            e.exit_code()
        }
    }
}

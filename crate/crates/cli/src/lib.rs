//! `entrap` command-line front end: fit, simulate, detect, eval.

pub mod config;
mod eval;

use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use entrap_core::bayes::{fit_classifier_models, FitError, TrainingSets};
use entrap_core::simulator::{parse_script, simulate, Scenario, ScenarioKind};
use entrap_core::telemetry::{extract_training_sets, load_trace, round_sig9, write_trace};
use entrap_core::{ClassifierModels, Detector, PriorMode, RoverGeometry, StatusEstimate, Trace};
use serde::Serialize;

use crate::config::{FileConfig, Overrides, RunConfig};
pub use crate::eval::{evaluate, EvalReport, TraceReport, TRANSITION_WINDOW};

#[derive(Debug, Parser)]
#[command(
    name = "entrap",
    version,
    about = "Rover entrapment detection from odometry divergence"
)]
pub struct Cli {
    #[command(flatten)]
    pub shared: SharedArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct SharedArgs {
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Model file (defaults to the bundled reference models).
    #[arg(long, global = true, value_name = "PATH")]
    pub model: Option<PathBuf>,
    /// Simulator seed.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Output file (defaults to stdout).
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the four class-conditional models from labeled traces.
    Fit {
        #[arg(required = true, value_name = "TRACE")]
        traces: Vec<PathBuf>,
        /// Diverged-class samples with Q at or below this are dropped.
        #[arg(long)]
        cutoff: Option<f64>,
    },
    /// Generate a synthetic labeled trace.
    Simulate {
        /// flat, rocky, entrapped_jiggling, high_centered or scripted.
        #[arg(long)]
        kind: Option<String>,
        #[arg(long, value_name = "MS")]
        duration_ms: Option<u64>,
        /// Segments as START_MS:KIND, comma separated; implies --kind scripted.
        #[arg(long)]
        script: Option<String>,
    },
    /// Run the detector over a trace and emit one record per sample.
    Detect {
        #[arg(value_name = "TRACE")]
        trace: PathBuf,
        /// recursive or fixed.
        #[arg(long)]
        prior_mode: Option<String>,
    },
    /// Score detector output against trace labels and ground truth.
    Eval {
        #[arg(required = true, value_name = "TRACE")]
        traces: Vec<PathBuf>,
        #[arg(long)]
        prior_mode: Option<String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Usage = 1,
    Data = 2,
    Degenerate = 3,
}

#[derive(Debug)]
pub struct Failure {
    pub kind: ExitKind,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn usage(error: impl Into<anyhow::Error>) -> Self {
        Self {
            kind: ExitKind::Usage,
            error: error.into(),
        }
    }

    pub fn data(error: impl Into<anyhow::Error>) -> Self {
        Self {
            kind: ExitKind::Data,
            error: error.into(),
        }
    }

    pub fn code(&self) -> u8 {
        self.kind as u8
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

impl From<FitError> for Failure {
    fn from(e: FitError) -> Self {
        let inner = match &e {
            FitError::Class { source, .. } => source.as_ref(),
            other => other,
        };
        let kind = match inner {
            FitError::TooFewSamples { .. } | FitError::ZeroVariance => ExitKind::Degenerate,
            _ => ExitKind::Data,
        };
        Self {
            kind,
            error: e.into(),
        }
    }
}

pub type CmdResult = Result<(), Failure>;

pub fn run(cli: Cli) -> CmdResult {
    let file = match &cli.shared.config {
        Some(path) => FileConfig::load(path).map_err(Failure::usage)?,
        None => FileConfig::default(),
    };
    let mut flags = Overrides {
        model: cli.shared.model,
        out: cli.shared.out,
        seed: cli.shared.seed,
        ..Overrides::default()
    };
    match &cli.command {
        Command::Fit { cutoff, .. } => flags.cutoff = *cutoff,
        Command::Simulate {
            kind,
            duration_ms,
            script,
        } => {
            flags.kind = kind.clone();
            flags.duration_ms = *duration_ms;
            flags.script = script.clone();
        }
        Command::Detect { prior_mode, .. } | Command::Eval { prior_mode, .. } => {
            flags.prior_mode = prior_mode
                .as_deref()
                .map(str::parse::<PriorMode>)
                .transpose()
                .map_err(|e| Failure::usage(anyhow!(e)))?;
        }
    }
    let cfg = RunConfig::resolve(file, flags).map_err(Failure::usage)?;
    log::debug!("resolved config: {cfg:?}");

    match cli.command {
        Command::Fit { traces, .. } => cmd_fit(&traces, &cfg),
        Command::Simulate { .. } => cmd_simulate(&cfg),
        Command::Detect { trace, .. } => cmd_detect(&trace, &cfg),
        Command::Eval { traces, .. } => cmd_eval(&traces, &cfg),
    }
}

fn open_output(out: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match out {
        Some(path) => Box::new(BufWriter::new(
            File::create(path)
                .with_context(|| format!("creating {}", path.display()))
                .map_err(Failure::data)?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_all(out: Option<&Path>, text: &str) -> CmdResult {
    let mut w = open_output(out)?;
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .context("writing output")
        .map_err(Failure::data)
}

pub fn load_models(cfg: &RunConfig) -> Result<ClassifierModels, Failure> {
    match &cfg.model {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading model file {}", path.display()))
                .map_err(Failure::data)?;
            ClassifierModels::from_toml_str(&text)
                .with_context(|| format!("model file {}", path.display()))
                .map_err(Failure::data)
        }
        None => Ok(ClassifierModels::default()),
    }
}

pub fn read_trace(path: &Path, geom: &RoverGeometry) -> Result<Trace, Failure> {
    let trace = load_trace(path).map_err(Failure::data)?;
    if let Some(recorded) = trace.metadata.as_ref().and_then(|m| m.geometry) {
        if recorded != *geom {
            log::warn!(
                "{}: trace was recorded with geometry {recorded:?}; using configured {geom:?}",
                path.display()
            );
        }
    }
    log::info!("{}: {} samples", path.display(), trace.len());
    Ok(trace)
}

fn cmd_fit(traces: &[PathBuf], cfg: &RunConfig) -> CmdResult {
    let geom = &cfg.detector.geometry;
    let mut sets = TrainingSets::default();
    for path in traces {
        let trace = read_trace(path, geom)?;
        let s = extract_training_sets(&trace, geom, &cfg.detector.weights)
            .with_context(|| path.display().to_string())
            .map_err(Failure::data)?;
        sets.extend(s);
    }
    let models = fit_classifier_models(&sets, cfg.cutoff)?;
    let mut summary = String::new();
    for (name, m) in models.entries() {
        summary.push_str(&format!(
            "{name:<22} {:<13} mu = {:<12.6} var = {:.6}\n",
            m.kind().as_str(),
            m.mu(),
            m.var()
        ));
    }
    match &cfg.out {
        Some(path) => {
            write_all(Some(path), &models.to_toml_string())?;
            print!("{summary}");
        }
        None => {
            eprint!("{summary}");
            write_all(None, &models.to_toml_string())?;
        }
    }
    Ok(())
}

pub fn scenario_from(cfg: &RunConfig) -> Result<Scenario, Failure> {
    let sim = &cfg.simulate;
    let kind = match (&sim.kind, &sim.script) {
        (Some(k), _) => k.parse::<ScenarioKind>().map_err(Failure::usage)?,
        (None, Some(_)) => ScenarioKind::Scripted,
        (None, None) => return Err(Failure::usage(anyhow!("simulate needs --kind or --script"))),
    };
    let duration_ms = sim.duration_ms.unwrap_or(60_000);
    let seed = cfg.seed.unwrap_or(0);
    let mut scenario = match (kind, &sim.script) {
        (ScenarioKind::Scripted, Some(text)) => Scenario::scripted(
            parse_script(text).map_err(Failure::usage)?,
            duration_ms,
            seed,
        ),
        (ScenarioKind::Scripted, None) => {
            return Err(Failure::usage(anyhow!("--kind scripted needs --script")))
        }
        (_, Some(_)) => {
            return Err(Failure::usage(anyhow!(
                "--script only applies to --kind scripted"
            )))
        }
        (k, None) => Scenario::new(k, duration_ms, seed),
    };
    if let Some(v) = sim.command_speed {
        scenario.command_speed = v;
    }
    if let Some(v) = sim.steer {
        scenario.steer = v;
    }
    if let Some(v) = sim.free_spin_gain {
        scenario.free_spin_gain = v;
    }
    scenario.noise = sim.noise;
    scenario.validate().map_err(Failure::usage)?;
    Ok(scenario)
}

fn cmd_simulate(cfg: &RunConfig) -> CmdResult {
    let scenario = scenario_from(cfg)?;
    let trace = simulate(&scenario, &cfg.detector.geometry).map_err(Failure::usage)?;
    log::info!("simulated {} samples", trace.len());
    write_all(cfg.out.as_deref(), &write_trace(&trace))
}

/// One line of `detect` output.
#[derive(Debug, Serialize)]
pub struct OutputRecord {
    pub t_ms: u64,
    pub q: Option<f64>,
    pub speed: Option<f64>,
    pub pr_diverged: f64,
    pub pr_stopped: f64,
    pub p_entrapped: f64,
    pub p_slipping: f64,
    pub p_moving: f64,
    pub p_stopped: f64,
    pub status: &'static str,
    pub decided: bool,
    pub degenerate: bool,
}

impl From<&StatusEstimate> for OutputRecord {
    fn from(e: &StatusEstimate) -> Self {
        Self {
            t_ms: e.t_ms,
            q: e.q_value.map(round_sig9),
            speed: e.speed.map(round_sig9),
            pr_diverged: round_sig9(e.belief.p_diverged),
            pr_stopped: round_sig9(e.belief.p_stopped),
            p_entrapped: round_sig9(e.status.p_entrapped),
            p_slipping: round_sig9(e.status.p_slipping),
            p_moving: round_sig9(e.status.p_moving),
            p_stopped: round_sig9(e.status.p_stopped),
            status: e.argmax().as_str(),
            decided: e.decided_entrapped,
            degenerate: e.evidence_degenerate,
        }
    }
}

fn cmd_detect(path: &Path, cfg: &RunConfig) -> CmdResult {
    let models = load_models(cfg)?;
    let trace = read_trace(path, &cfg.detector.geometry)?;
    let mut det = Detector::new(cfg.detector, models).map_err(Failure::usage)?;
    let estimates = det
        .run(&trace.samples)
        .with_context(|| path.display().to_string())
        .map_err(Failure::data)?;
    let mut w = open_output(cfg.out.as_deref())?;
    for e in &estimates {
        let line = serde_json::to_string(&OutputRecord::from(e)).expect("plain record serializes");
        writeln!(w, "{line}")
            .context("writing output")
            .map_err(Failure::data)?;
    }
    w.flush().context("writing output").map_err(Failure::data)
}

fn cmd_eval(paths: &[PathBuf], cfg: &RunConfig) -> CmdResult {
    let models = load_models(cfg)?;
    let traces = paths
        .iter()
        .map(|p| read_trace(p, &cfg.detector.geometry))
        .collect::<Result<Vec<_>, _>>()?;
    let named: Vec<_> = paths
        .iter()
        .map(|p| p.display().to_string())
        .zip(traces)
        .collect();
    let report = evaluate(&named, &cfg.detector, &models).map_err(Failure::data)?;
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    write_all(cfg.out.as_deref(), &format!("{text}\n"))
}

//! Run configuration: one TOML document, every field optional. Command-line
//! flags override file values; file values override built-in defaults.
//!
//! ```toml
//! model = "models.toml"        # paths resolve against this file's directory
//! out = "trace.jsonl"
//! seed = 7
//! cutoff = 0.075
//! prior_mode = "recursive"     # or "fixed"
//! weights = [1.0, 0.0, 0.0, 1.0]
//!
//! [geometry]
//! wheelbase = 0.4
//! track_width = 0.3
//! wheel_radius = 0.09
//!
//! [tolerances]
//! eps_zero = 0.05
//! eps_ag = 0.15
//! eps_mg = 0.02
//! char_length = 0.4            # defaults to the wheelbase
//!
//! [detector]
//! clamp_eps = 0.01
//! decision_threshold = 0.9
//! persistence_steps = 10
//! sample_period_ms = 10
//!
//! [simulate]
//! kind = "flat"
//! duration_ms = 60000
//! script = "0:flat,6000:high_centered"
//! command_speed = 0.25
//! steer = 0.0
//! free_spin_gain = 1.7
//! ```

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use entrap_core::bayes::DEFAULT_DIVERGED_CUTOFF;
use entrap_core::simulator::NoiseParams;
use entrap_core::{DetectorConfig, DivergenceWeights, PriorMode, RoverGeometry, Tolerances};
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub model: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub cutoff: Option<f64>,
    pub prior_mode: Option<PriorMode>,
    pub weights: Option<[f64; 4]>,
    pub geometry: Option<RoverGeometry>,
    #[serde(default)]
    pub tolerances: TolerancesFile,
    #[serde(default)]
    pub detector: DetectorFile,
    #[serde(default)]
    pub simulate: SimulateSettings,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TolerancesFile {
    pub eps_zero: Option<f64>,
    pub eps_ag: Option<f64>,
    pub eps_mg: Option<f64>,
    pub char_length: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorFile {
    pub clamp_eps: Option<f64>,
    pub decision_threshold: Option<f64>,
    pub persistence_steps: Option<usize>,
    pub sample_period_ms: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSettings {
    pub kind: Option<String>,
    pub duration_ms: Option<u64>,
    pub script: Option<String>,
    pub command_speed: Option<f64>,
    pub steer: Option<f64>,
    pub free_spin_gain: Option<f64>,
    pub noise: Option<NoiseParams>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: FileConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.model, &mut cfg.out].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

/// Flags that also have a config-file equivalent.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub model: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub cutoff: Option<f64>,
    pub prior_mode: Option<PriorMode>,
    pub kind: Option<String>,
    pub duration_ms: Option<u64>,
    pub script: Option<String>,
}

/// Fully resolved settings for one command.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub detector: DetectorConfig,
    pub model: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub cutoff: f64,
    pub simulate: SimulateSettings,
}

impl RunConfig {
    pub fn resolve(file: FileConfig, flags: Overrides) -> Result<Self> {
        let geometry = file.geometry.unwrap_or_default();
        geometry.validate().context("invalid [geometry]")?;

        let defaults = Tolerances::default();
        let t = &file.tolerances;
        let tolerances = Tolerances {
            eps_zero: t.eps_zero.unwrap_or(defaults.eps_zero),
            eps_ag: t.eps_ag.unwrap_or(defaults.eps_ag),
            eps_mg: t.eps_mg.unwrap_or(defaults.eps_mg),
            char_length: t.char_length.unwrap_or(geometry.wheelbase),
        };
        tolerances.validate().context("invalid [tolerances]")?;

        let weights = match file.weights {
            Some(w) => DivergenceWeights::from_row_major(w).context("invalid weights")?,
            None => DivergenceWeights::default(),
        };

        let base = DetectorConfig::default();
        let d = &file.detector;
        let detector = DetectorConfig {
            clamp_eps: d.clamp_eps.unwrap_or(base.clamp_eps),
            decision_threshold: d.decision_threshold.unwrap_or(base.decision_threshold),
            persistence_steps: d.persistence_steps.unwrap_or(base.persistence_steps),
            sample_period_ms: d.sample_period_ms.unwrap_or(base.sample_period_ms),
            prior_mode: flags.prior_mode.or(file.prior_mode).unwrap_or_default(),
            weights,
            tolerances,
            geometry,
        };
        detector.validate().context("invalid [detector]")?;

        let cutoff = flags
            .cutoff
            .or(file.cutoff)
            .unwrap_or(DEFAULT_DIVERGED_CUTOFF);
        anyhow::ensure!(
            cutoff.is_finite() && cutoff >= 0.0,
            "cutoff must be finite and nonnegative, got {cutoff}"
        );

        let mut simulate = file.simulate;
        simulate.kind = flags.kind.or(simulate.kind);
        simulate.duration_ms = flags.duration_ms.or(simulate.duration_ms);
        simulate.script = flags.script.or(simulate.script);

        Ok(Self {
            detector,
            model: flags.model.or(file.model),
            out: flags.out.or(file.out),
            seed: flags.seed.or(file.seed),
            cutoff,
            simulate,
        })
    }
}

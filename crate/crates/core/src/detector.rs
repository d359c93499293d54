//! Streaming entrapment detector.
//!
//! Each sample runs kinematics → divergence `Q` → Bayes updates for `D` and
//! `M` → status product. In recursive mode the previous posteriors are the
//! next priors. Beliefs are clamped to `[clamp_eps, 1 − clamp_eps]` after
//! every update so the detector can always recover from saturation. The
//! binary decision fires once `Pr(entrapped)` has stayed at or above the
//! threshold for `persistence_steps` consecutive samples.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bayes::{
    posterior_divergence, posterior_movement, BeliefState, ClassifierModels, RoverStatus,
    StatusDistribution,
};
use crate::criteria::{CriteriaError, DivergenceWeights, Tolerances};
use crate::kinematics::{KinematicsError, RoverGeometry};
use crate::telemetry::TelemetrySample;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DetectorError {
    #[error("clamp_eps must lie in (0, 0.5), got {0}")]
    ClampEps(f64),
    #[error("decision_threshold must lie in (0.5, 1), got {0}")]
    Threshold(f64),
    #[error("persistence_steps must be at least 1")]
    Persistence,
    #[error("sample_period_ms must be positive")]
    SamplePeriod,
    #[error("timestamp {t_ms} ms does not follow previous {prev_t_ms} ms")]
    NonMonotonicTimestamp { t_ms: u64, prev_t_ms: u64 },
    #[error(transparent)]
    Criteria(#[from] CriteriaError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
}

/// Where each step's priors come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorMode {
    /// Previous step's (clamped) posterior.
    #[default]
    Recursive,
    /// Uniform 0.5 every step.
    Fixed,
}

impl std::str::FromStr for PriorMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "recursive" => Ok(PriorMode::Recursive),
            "fixed" => Ok(PriorMode::Fixed),
            _ => Err(format!(
                "unknown prior mode `{s}` (expected recursive or fixed)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorConfig {
    pub clamp_eps: f64,
    pub decision_threshold: f64,
    pub persistence_steps: usize,
    pub weights: DivergenceWeights,
    pub tolerances: Tolerances,
    pub geometry: RoverGeometry,
    /// Nominal sample period; informational, the update has no `dt`.
    pub sample_period_ms: u64,
    pub prior_mode: PriorMode,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            clamp_eps: 0.01,
            decision_threshold: 0.9,
            persistence_steps: 10,
            weights: DivergenceWeights::default(),
            tolerances: Tolerances::default(),
            geometry: RoverGeometry::default(),
            sample_period_ms: 10,
            prior_mode: PriorMode::Recursive,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), DetectorError> {
        if !(self.clamp_eps > 0.0 && self.clamp_eps < 0.5) {
            return Err(DetectorError::ClampEps(self.clamp_eps));
        }
        if !(self.decision_threshold > 0.5 && self.decision_threshold < 1.0) {
            return Err(DetectorError::Threshold(self.decision_threshold));
        }
        if self.persistence_steps == 0 {
            return Err(DetectorError::Persistence);
        }
        if self.sample_period_ms == 0 {
            return Err(DetectorError::SamplePeriod);
        }
        self.tolerances.validate()?;
        self.geometry.validate()?;
        Ok(())
    }
}

/// Snapshot emitted for every input sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatusEstimate {
    pub t_ms: u64,
    /// `None` during a tracker dropout.
    pub q_value: Option<f64>,
    pub speed: Option<f64>,
    pub belief: BeliefState,
    pub status: StatusDistribution,
    pub decided_entrapped: bool,
    pub evidence_degenerate: bool,
}

impl StatusEstimate {
    pub fn argmax(&self) -> RoverStatus {
        self.status.argmax()
    }
}

#[derive(Debug, Clone)]
pub struct Detector {
    config: DetectorConfig,
    models: ClassifierModels,
    belief: BeliefState,
    streak: usize,
    last_t_ms: Option<u64>,
}

impl Detector {
    pub fn new(config: DetectorConfig, models: ClassifierModels) -> Result<Self, DetectorError> {
        config.validate()?;
        Ok(Self {
            config,
            models,
            belief: BeliefState::UNIFORM,
            streak: 0,
            last_t_ms: None,
        })
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    pub fn models(&self) -> &ClassifierModels {
        &self.models
    }

    pub fn belief(&self) -> BeliefState {
        self.belief
    }

    /// Consecutive steps with `Pr(entrapped)` at or above the threshold.
    pub fn streak(&self) -> usize {
        self.streak
    }

    pub fn reset(&mut self) {
        self.belief = BeliefState::UNIFORM;
        self.streak = 0;
        self.last_t_ms = None;
    }

    /// Overwrites the current belief (clamped). Useful for replaying from a
    /// known state.
    pub fn set_belief(&mut self, belief: BeliefState) {
        self.belief = belief.clamped(self.config.clamp_eps);
    }

    pub fn step(&mut self, sample: &TelemetrySample) -> Result<StatusEstimate, DetectorError> {
        if let Some(prev_t_ms) = self.last_t_ms {
            if sample.t_ms <= prev_t_ms {
                return Err(DetectorError::NonMonotonicTimestamp {
                    t_ms: sample.t_ms,
                    prev_t_ms,
                });
            }
        }
        let cfg = &self.config;
        let features = sample.features(&cfg.geometry, &cfg.weights)?;

        let prior = match cfg.prior_mode {
            PriorMode::Recursive => self.belief,
            PriorMode::Fixed => BeliefState::UNIFORM,
        };
        let (belief, degenerate) = match features {
            None => (self.belief, true),
            Some(f) => {
                let d = posterior_divergence(prior.p_diverged, f.q, &self.models);
                let m = posterior_movement(prior.p_stopped, f.speed, &self.models);
                let belief = BeliefState {
                    p_diverged: if d.degenerate {
                        self.belief.p_diverged
                    } else {
                        d.value
                    },
                    p_stopped: if m.degenerate {
                        self.belief.p_stopped
                    } else {
                        m.value
                    },
                };
                (belief.clamped(cfg.clamp_eps), d.degenerate || m.degenerate)
            }
        };

        let status = belief.status();
        if status.p_entrapped >= cfg.decision_threshold {
            self.streak += 1;
        } else {
            self.streak = 0;
        }
        self.belief = belief;
        self.last_t_ms = Some(sample.t_ms);

        Ok(StatusEstimate {
            t_ms: sample.t_ms,
            q_value: features.map(|f| f.q),
            speed: features.map(|f| f.speed),
            belief,
            status,
            decided_entrapped: self.streak >= cfg.persistence_steps,
            evidence_degenerate: degenerate,
        })
    }

    /// Steps through `samples` in order, stopping at the first error.
    pub fn run<'a>(
        &mut self,
        samples: impl IntoIterator<Item = &'a TelemetrySample>,
    ) -> Result<Vec<StatusEstimate>, DetectorError> {
        samples.into_iter().map(|s| self.step(s)).collect()
    }
}

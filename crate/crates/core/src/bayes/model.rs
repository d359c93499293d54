use std::f64::consts::{LN_2, PI};

use serde::{Deserialize, Serialize};
use thiserror::Error;

const DEFAULT_MODELS: &str = include_str!("../../data/default_models.toml");

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("variance must be finite and strictly positive, got {0}")]
    NonPositiveVariance(f64),
    #[error("mean must be finite, got {0}")]
    NonFiniteMean(f64),
    #[error("half_gaussian model must have mu = 0, got {0}")]
    ShiftedHalfGaussian(f64),
    #[error("malformed model file: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Gaussian,
    /// Half-normal on `x ≥ 0`: `2·N(x; 0, σ²)`.
    HalfGaussian,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Gaussian => "gaussian",
            ModelKind::HalfGaussian => "half_gaussian",
        }
    }
}

/// One class-conditional density over a scalar feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModel", into = "RawModel")]
pub struct ConditionalModel {
    kind: ModelKind,
    mu: f64,
    var: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    kind: ModelKind,
    mu: f64,
    var: f64,
}

impl TryFrom<RawModel> for ConditionalModel {
    type Error = ModelError;

    fn try_from(raw: RawModel) -> Result<Self, Self::Error> {
        Self::new(raw.kind, raw.mu, raw.var)
    }
}

impl From<ConditionalModel> for RawModel {
    fn from(m: ConditionalModel) -> Self {
        Self {
            kind: m.kind,
            mu: m.mu,
            var: m.var,
        }
    }
}

impl ConditionalModel {
    pub fn new(kind: ModelKind, mu: f64, var: f64) -> Result<Self, ModelError> {
        if !(var.is_finite() && var > 0.0) {
            return Err(ModelError::NonPositiveVariance(var));
        }
        if !mu.is_finite() {
            return Err(ModelError::NonFiniteMean(mu));
        }
        if kind == ModelKind::HalfGaussian && mu != 0.0 {
            return Err(ModelError::ShiftedHalfGaussian(mu));
        }
        Ok(Self { kind, mu, var })
    }

    pub fn gaussian(mu: f64, var: f64) -> Result<Self, ModelError> {
        Self::new(ModelKind::Gaussian, mu, var)
    }

    pub fn half_gaussian(var: f64) -> Result<Self, ModelError> {
        Self::new(ModelKind::HalfGaussian, 0.0, var)
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn var(&self) -> f64 {
        self.var
    }

    /// Natural log of the density; `-inf` outside the support.
    pub fn log_likelihood(&self, x: f64) -> f64 {
        let log_norm = -0.5 * (2.0 * PI * self.var).ln();
        match self.kind {
            ModelKind::Gaussian => {
                let d = x - self.mu;
                log_norm - d * d / (2.0 * self.var)
            }
            ModelKind::HalfGaussian if x >= 0.0 => LN_2 + log_norm - x * x / (2.0 * self.var),
            ModelKind::HalfGaussian => f64::NEG_INFINITY,
        }
    }

    pub fn likelihood(&self, x: f64) -> f64 {
        self.log_likelihood(x).exp()
    }
}

/// The four class-conditional densities the detector needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifierModels {
    /// `Pr(Q | D = diverged)`
    pub divergence_diverged: ConditionalModel,
    /// `Pr(Q | D = consistent)`
    pub divergence_consistent: ConditionalModel,
    /// `Pr(‖v_m‖ | M = moving)`
    pub movement_moving: ConditionalModel,
    /// `Pr(‖v_m‖ | M = stopped)`
    pub movement_stopped: ConditionalModel,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    divergence: DivergenceEntries,
    movement: MovementEntries,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DivergenceEntries {
    diverged: ConditionalModel,
    consistent: ConditionalModel,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MovementEntries {
    moving: ConditionalModel,
    stopped: ConditionalModel,
}

impl Default for ClassifierModels {
    /// The reference models shipped in `data/default_models.toml`.
    fn default() -> Self {
        Self::from_toml_str(DEFAULT_MODELS).expect("bundled model file is valid")
    }
}

impl ClassifierModels {
    /// Entry names in model-file order.
    pub const ENTRIES: [&'static str; 4] = [
        "divergence.diverged",
        "divergence.consistent",
        "movement.moving",
        "movement.stopped",
    ];

    pub fn from_toml_str(text: &str) -> Result<Self, ModelError> {
        let file: ModelFile = toml::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))?;
        Ok(Self {
            divergence_diverged: file.divergence.diverged,
            divergence_consistent: file.divergence.consistent,
            movement_moving: file.movement.moving,
            movement_stopped: file.movement.stopped,
        })
    }

    pub fn to_toml_string(&self) -> String {
        let file = ModelFile {
            divergence: DivergenceEntries {
                diverged: self.divergence_diverged,
                consistent: self.divergence_consistent,
            },
            movement: MovementEntries {
                moving: self.movement_moving,
                stopped: self.movement_stopped,
            },
        };
        toml::to_string(&file).expect("model file serialization is infallible")
    }

    /// Bundled model file text, byte for byte.
    pub fn default_toml() -> &'static str {
        DEFAULT_MODELS
    }

    pub fn entries(&self) -> [(&'static str, &ConditionalModel); 4] {
        [
            (Self::ENTRIES[0], &self.divergence_diverged),
            (Self::ENTRIES[1], &self.divergence_consistent),
            (Self::ENTRIES[2], &self.movement_moving),
            (Self::ENTRIES[3], &self.movement_stopped),
        ]
    }
}

//! Maximum-likelihood fitting of the class-conditional densities.

use thiserror::Error;

use super::model::{ClassifierModels, ConditionalModel, ModelError};

/// Diverged-class samples at or below this `Q` are transients from control
/// command switching and are dropped before fitting.
pub const DEFAULT_DIVERGED_CUTOFF: f64 = 0.075;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("sample {index} is not finite")]
    NonFinite { index: usize },
    #[error("sample {index} = {value} is negative")]
    NegativeSample { index: usize, value: f64 },
    #[error("samples have zero variance")]
    ZeroVariance,
    #[error("class `{class}`: {source}")]
    Class {
        class: &'static str,
        #[source]
        source: Box<FitError>,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl FitError {
    /// Name of the model entry that failed, when known.
    pub fn class(&self) -> Option<&'static str> {
        match self {
            FitError::Class { class, .. } => Some(class),
            _ => None,
        }
    }
}

fn check_finite(samples: &[f64]) -> Result<(), FitError> {
    match samples.iter().position(|x| !x.is_finite()) {
        Some(index) => Err(FitError::NonFinite { index }),
        None => Ok(()),
    }
}

/// Gaussian MLE: sample mean and divide-by-n variance.
pub fn fit_gaussian(samples: &[f64]) -> Result<ConditionalModel, FitError> {
    if samples.len() < 2 {
        return Err(FitError::TooFewSamples {
            needed: 2,
            got: samples.len(),
        });
    }
    check_finite(samples)?;
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    if var <= 0.0 {
        return Err(FitError::ZeroVariance);
    }
    Ok(ConditionalModel::gaussian(mean, var)?)
}

/// Half-normal MLE: `σ² = mean(x²)`, mode pinned at zero.
pub fn fit_half_gaussian(samples: &[f64]) -> Result<ConditionalModel, FitError> {
    if samples.is_empty() {
        return Err(FitError::TooFewSamples { needed: 1, got: 0 });
    }
    check_finite(samples)?;
    if let Some((index, &value)) = samples.iter().enumerate().find(|(_, x)| **x < 0.0) {
        return Err(FitError::NegativeSample { index, value });
    }
    let var = samples.iter().map(|x| x * x).sum::<f64>() / samples.len() as f64;
    if var <= 0.0 {
        return Err(FitError::ZeroVariance);
    }
    Ok(ConditionalModel::half_gaussian(var)?)
}

/// Drops samples `≤ cutoff`, preserving order.
pub fn preprocess_diverged(samples: &[f64], cutoff: f64) -> Vec<f64> {
    samples.iter().copied().filter(|&q| q > cutoff).collect()
}

/// Feature values grouped by class, ready for fitting.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingSets {
    pub q_diverged: Vec<f64>,
    pub q_consistent: Vec<f64>,
    pub speed_moving: Vec<f64>,
    pub speed_stopped: Vec<f64>,
}

impl TrainingSets {
    pub fn extend(&mut self, other: TrainingSets) {
        self.q_diverged.extend(other.q_diverged);
        self.q_consistent.extend(other.q_consistent);
        self.speed_moving.extend(other.speed_moving);
        self.speed_stopped.extend(other.speed_stopped);
    }
}

/// Fits all four models. The diverged `Q` set is cut at `cutoff` first.
pub fn fit_classifier_models(
    sets: &TrainingSets,
    cutoff: f64,
) -> Result<ClassifierModels, FitError> {
    let tag = |class: &'static str| {
        move |e: FitError| FitError::Class {
            class,
            source: Box::new(e),
        }
    };
    let diverged = preprocess_diverged(&sets.q_diverged, cutoff);
    Ok(ClassifierModels {
        divergence_diverged: fit_gaussian(&diverged).map_err(tag(ClassifierModels::ENTRIES[0]))?,
        divergence_consistent: fit_half_gaussian(&sets.q_consistent)
            .map_err(tag(ClassifierModels::ENTRIES[1]))?,
        movement_moving: fit_gaussian(&sets.speed_moving)
            .map_err(tag(ClassifierModels::ENTRIES[2]))?,
        movement_stopped: fit_half_gaussian(&sets.speed_stopped)
            .map_err(tag(ClassifierModels::ENTRIES[3]))?,
    })
}

/// Sum of log-densities over `samples`.
pub fn log_likelihood(model: &ConditionalModel, samples: &[f64]) -> f64 {
    samples.iter().map(|&x| model.log_likelihood(x)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bayes::model::ModelKind;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn gaussian_hand_example() {
        let m = fit_gaussian(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(m.kind(), ModelKind::Gaussian);
        assert_relative_eq!(m.mu(), 2.0, epsilon = 1e-15);
        assert_relative_eq!(m.var(), 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn gaussian_degenerate_inputs() {
        assert_eq!(fit_gaussian(&[0.3; 7]), Err(FitError::ZeroVariance));
        assert_eq!(
            fit_gaussian(&[1.0]),
            Err(FitError::TooFewSamples { needed: 2, got: 1 })
        );
        assert_eq!(
            fit_gaussian(&[1.0, f64::NAN]),
            Err(FitError::NonFinite { index: 1 })
        );
    }

    #[test]
    fn half_gaussian_hand_example() {
        let m = fit_half_gaussian(&[0.1, 0.2]).unwrap();
        assert_eq!(m.kind(), ModelKind::HalfGaussian);
        assert_eq!(m.mu(), 0.0);
        assert_relative_eq!(m.var(), 0.025, epsilon = 1e-15);
    }

    #[test]
    fn half_gaussian_degenerate_inputs() {
        assert_eq!(fit_half_gaussian(&[0.0]), Err(FitError::ZeroVariance));
        assert_eq!(
            fit_half_gaussian(&[]),
            Err(FitError::TooFewSamples { needed: 1, got: 0 })
        );
        assert!(matches!(
            fit_half_gaussian(&[0.1, -0.2]),
            Err(FitError::NegativeSample { index: 1, .. })
        ));
    }

    #[test]
    fn preprocessing_cutoff_is_inclusive() {
        assert_eq!(
            preprocess_diverged(&[0.05, 0.4, 0.075, 0.5], 0.075),
            vec![0.4, 0.5]
        );
        assert!(preprocess_diverged(&[], 0.3).is_empty());
        assert_eq!(
            preprocess_diverged(&[0.0, 1e-300, 0.2, 0.0], 0.0),
            vec![1e-300, 0.2]
        );
    }

    #[test]
    fn classifier_fit_names_empty_class() {
        let sets = TrainingSets {
            q_diverged: vec![0.01, 0.02],
            q_consistent: vec![0.01, 0.02],
            speed_moving: vec![0.2, 0.3],
            speed_stopped: vec![0.001, 0.002],
        };
        let err = fit_classifier_models(&sets, DEFAULT_DIVERGED_CUTOFF).unwrap_err();
        assert_eq!(err.class(), Some("divergence.diverged"));
        assert!(err.to_string().contains("divergence.diverged"));
    }

    fn perturbed_loglik_never_wins(samples: &[f64], fitted: &ConditionalModel) {
        let base = log_likelihood(fitted, samples);
        let mus: Vec<f64> = match fitted.kind() {
            ModelKind::Gaussian => vec![fitted.mu() * 0.99, fitted.mu(), fitted.mu() * 1.01],
            ModelKind::HalfGaussian => vec![0.0],
        };
        for &mu in &mus {
            for var in [fitted.var() * 0.99, fitted.var(), fitted.var() * 1.01] {
                let m = ConditionalModel::new(fitted.kind(), mu, var).unwrap();
                assert!(log_likelihood(&m, samples) <= base + 1e-9 * base.abs().max(1.0));
            }
        }
    }

    proptest! {
        #[test]
        fn gaussian_fit_is_local_optimum(samples in prop::collection::vec(-5.0..5.0f64, 2..200)) {
            prop_assume!(samples.iter().any(|&x| x != samples[0]));
            let m = fit_gaussian(&samples).unwrap();
            perturbed_loglik_never_wins(&samples, &m);
        }

        #[test]
        fn half_gaussian_fit_is_local_optimum(samples in prop::collection::vec(0.0..3.0f64, 1..200)) {
            prop_assume!(samples.iter().any(|&x| x > 0.0));
            let m = fit_half_gaussian(&samples).unwrap();
            perturbed_loglik_never_wins(&samples, &m);
        }
    }
}

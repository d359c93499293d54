//! Naive Bayes machinery for the divergence (`D`) and movement (`M`)
//! classifiers.
//!
//! Each classifier is a two-class Bayes update over one scalar feature:
//! the weighted divergence `Q` for `D ∈ {diverged, consistent}` and the
//! measured speed `‖v_m‖` for `M ∈ {moving, stopped}`. Their posteriors
//! multiply into the four-way rover status.

mod fit;
mod model;
mod posterior;

pub use fit::{
    fit_classifier_models, fit_gaussian, fit_half_gaussian, log_likelihood, preprocess_diverged,
    FitError, TrainingSets, DEFAULT_DIVERGED_CUTOFF,
};
pub use model::{ClassifierModels, ConditionalModel, ModelError, ModelKind};
pub use posterior::{
    posterior_divergence, posterior_movement, status_distribution, two_class_posterior,
    BeliefState, Posterior, RoverStatus, StatusDistribution,
};

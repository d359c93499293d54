//! Two-class Bayes updates and the four-way status product.

use serde::{Deserialize, Serialize};

use super::model::{ClassifierModels, ConditionalModel};

/// Result of a two-class Bayes update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Posterior {
    /// Posterior of the class the caller asked about.
    pub value: f64,
    /// Posterior of the other class.
    pub complement: f64,
    /// Both class likelihoods were zero (or the observation was unusable);
    /// `value` is then the prior, unchanged.
    pub degenerate: bool,
}

/// `Pr(A | x)` from prior `Pr(A)` and the class log-likelihoods.
///
/// Normalized with log-sum-exp so neither tail underflows to 0/0.
pub fn two_class_posterior(prior: f64, log_lik_a: f64, log_lik_b: f64) -> Posterior {
    let a = prior.ln() + log_lik_a;
    let b = (1.0 - prior).ln() + log_lik_b;
    let m = a.max(b);
    if !m.is_finite() || a.is_nan() || b.is_nan() {
        return Posterior {
            value: prior,
            complement: 1.0 - prior,
            degenerate: true,
        };
    }
    let ea = (a - m).exp();
    let eb = (b - m).exp();
    let total = ea + eb;
    Posterior {
        value: ea / total,
        complement: eb / total,
        degenerate: false,
    }
}

fn update(prior: f64, x: f64, class: &ConditionalModel, other: &ConditionalModel) -> Posterior {
    if !x.is_finite() {
        return two_class_posterior(prior, f64::NAN, f64::NAN);
    }
    two_class_posterior(prior, class.log_likelihood(x), other.log_likelihood(x))
}

/// `Pr(D = diverged | Q = q)`.
pub fn posterior_divergence(prior_diverged: f64, q: f64, models: &ClassifierModels) -> Posterior {
    update(
        prior_diverged,
        q,
        &models.divergence_diverged,
        &models.divergence_consistent,
    )
}

/// `Pr(M = stopped | ‖v_m‖ = speed)`.
pub fn posterior_movement(prior_stopped: f64, speed: f64, models: &ClassifierModels) -> Posterior {
    update(
        prior_stopped,
        speed,
        &models.movement_stopped,
        &models.movement_moving,
    )
}

/// Current marginals over divergence `D` and movement `M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeliefState {
    pub p_diverged: f64,
    pub p_stopped: f64,
}

impl Default for BeliefState {
    fn default() -> Self {
        Self::UNIFORM
    }
}

impl BeliefState {
    pub const UNIFORM: Self = Self {
        p_diverged: 0.5,
        p_stopped: 0.5,
    };

    pub fn clamped(self, eps: f64) -> Self {
        Self {
            p_diverged: self.p_diverged.clamp(eps, 1.0 - eps),
            p_stopped: self.p_stopped.clamp(eps, 1.0 - eps),
        }
    }

    pub fn status(&self) -> StatusDistribution {
        status_distribution(self.p_diverged, self.p_stopped)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoverStatus {
    Entrapped,
    Slipping,
    Moving,
    Stopped,
}

impl RoverStatus {
    pub const ALL: [RoverStatus; 4] = [
        RoverStatus::Entrapped,
        RoverStatus::Slipping,
        RoverStatus::Moving,
        RoverStatus::Stopped,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RoverStatus::Entrapped => "entrapped",
            RoverStatus::Slipping => "slipping",
            RoverStatus::Moving => "moving",
            RoverStatus::Stopped => "stopped",
        }
    }

    /// Whether this status implies diverged odometry.
    pub fn is_diverged(self) -> bool {
        matches!(self, RoverStatus::Entrapped | RoverStatus::Slipping)
    }

    /// Whether this status implies the rover is not moving.
    pub fn is_stopped(self) -> bool {
        matches!(self, RoverStatus::Entrapped | RoverStatus::Stopped)
    }
}

impl std::fmt::Display for RoverStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for RoverStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RoverStatus::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| format!("unknown status `{s}`"))
    }
}

/// Distribution over {entrapped, slipping, moving, stopped}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatusDistribution {
    pub p_entrapped: f64,
    pub p_slipping: f64,
    pub p_moving: f64,
    pub p_stopped: f64,
}

impl StatusDistribution {
    pub fn probability(&self, status: RoverStatus) -> f64 {
        match status {
            RoverStatus::Entrapped => self.p_entrapped,
            RoverStatus::Slipping => self.p_slipping,
            RoverStatus::Moving => self.p_moving,
            RoverStatus::Stopped => self.p_stopped,
        }
    }

    /// Most probable status; ties resolve in [`RoverStatus::ALL`] order.
    pub fn argmax(&self) -> RoverStatus {
        let mut best = RoverStatus::Entrapped;
        for st in RoverStatus::ALL {
            if self.probability(st) > self.probability(best) {
                best = st;
            }
        }
        best
    }

    pub fn total(&self) -> f64 {
        self.p_entrapped + self.p_slipping + self.p_moving + self.p_stopped
    }
}

/// Product rule under conditional independence of `D` and `M`:
/// entrapped = diverged ∧ stopped, slipping = diverged ∧ moving,
/// stopped = consistent ∧ stopped, moving = consistent ∧ moving.
///
/// Slipping and stopped are formed by subtraction so the divergence and
/// movement marginals are reproduced without an extra rounding step.
pub fn status_distribution(p_diverged: f64, p_stopped: f64) -> StatusDistribution {
    // The second subtraction is exact, so entrapped + slipping == diverged
    // holds bit for bit.
    let p_slipping = p_diverged - p_diverged * p_stopped;
    let p_entrapped = p_diverged - p_slipping;
    StatusDistribution {
        p_entrapped,
        p_slipping,
        p_stopped: (p_stopped - p_entrapped).max(0.0),
        p_moving: (1.0 - p_diverged) * (1.0 - p_stopped),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn models() -> ClassifierModels {
        ClassifierModels::default()
    }

    #[test]
    fn uninformative_evidence_returns_prior() {
        for prior in [0.01, 0.3, 0.5, 0.97] {
            let p = two_class_posterior(prior, -1.25, -1.25);
            assert_relative_eq!(p.value, prior, epsilon = 1e-15);
            assert!(!p.degenerate);
        }
    }

    #[test]
    fn divergence_at_diverged_mean() {
        // oracle: 3.768304636 / (3.768304636 + 0.465225574)
        let p = posterior_divergence(0.5, 0.426055, &models());
        assert_relative_eq!(p.value, 0.890_109_305_817_567_8, epsilon = 1e-12);
    }

    #[test]
    fn divergence_at_zero_favors_consistent() {
        let p = posterior_divergence(0.5, 0.0, &models());
        assert_relative_eq!(p.value, 2.976_207_988_958_411_4e-4, max_relative = 1e-10);
    }

    #[test]
    fn movement_examples() {
        let p = posterior_movement(0.5, 0.001, &models());
        assert_relative_eq!(p.value, 0.990_607_917_496_219_2, epsilon = 1e-12);
        let p = posterior_movement(0.5, 0.252618, &models());
        assert_relative_eq!(p.value, 1.806_712_121_843_509e-100, max_relative = 1e-8);
        assert!(p.complement > 1.0 - 1e-15);
    }

    #[test]
    fn degenerate_evidence_keeps_prior() {
        let p = posterior_divergence(0.3, -1.0, &models());
        // Negative Q lies outside the half-normal support; the Gaussian
        // class still carries the update.
        assert!(!p.degenerate);
        let p = two_class_posterior(0.3, f64::NEG_INFINITY, f64::NEG_INFINITY);
        assert!(p.degenerate);
        assert_eq!(p.value, 0.3);
        let p = posterior_movement(0.3, f64::NAN, &models());
        assert!(p.degenerate);
        assert_eq!(p.value, 0.3);
    }

    #[test]
    fn status_examples() {
        let s = status_distribution(1.0, 1.0);
        assert_eq!(
            (s.p_entrapped, s.p_slipping, s.p_stopped, s.p_moving),
            (1.0, 0.0, 0.0, 0.0)
        );

        let s = status_distribution(0.8, 0.9);
        assert_relative_eq!(s.p_entrapped, 0.72, epsilon = 1e-15);
        assert_relative_eq!(s.p_slipping, 0.08, epsilon = 1e-15);
        assert_relative_eq!(s.p_stopped, 0.18, epsilon = 1e-15);
        assert_relative_eq!(s.p_moving, 0.02, epsilon = 1e-15);

        let s = status_distribution(0.5, 0.5);
        for st in RoverStatus::ALL {
            assert_eq!(s.probability(st), 0.25);
        }
    }

    #[test]
    fn argmax_and_status_parsing() {
        assert_eq!(
            status_distribution(0.9, 0.9).argmax(),
            RoverStatus::Entrapped
        );
        assert_eq!(
            status_distribution(0.9, 0.1).argmax(),
            RoverStatus::Slipping
        );
        assert_eq!(status_distribution(0.1, 0.1).argmax(), RoverStatus::Moving);
        assert_eq!(status_distribution(0.1, 0.9).argmax(), RoverStatus::Stopped);
        for st in RoverStatus::ALL {
            assert_eq!(st.as_str().parse::<RoverStatus>().unwrap(), st);
        }
        assert!("stuck".parse::<RoverStatus>().is_err());
    }

    #[test]
    fn divergence_evidence_monotone_below_diverged_mean() {
        let m = models();
        let mut prev = 0.0;
        for i in 0..=4000 {
            let q = 0.426055 * i as f64 / 4000.0;
            let p = posterior_divergence(0.5, q, &m).value;
            assert!(p >= prev, "q = {q}: {p} < {prev}");
            prev = p;
        }
    }

    proptest! {
        #[test]
        fn posteriors_normalize(prior in 1e-6..(1.0 - 1e-6), x in 0.0..2.0f64) {
            let m = models();
            let d = posterior_divergence(prior, x, &m);
            prop_assert!((d.value + d.complement - 1.0).abs() <= 1e-12);
            let s = posterior_movement(prior, x, &m);
            prop_assert!((s.value + s.complement - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn status_marginals(pd in 0.0..=1.0f64, ps in 0.0..=1.0f64) {
            let s = status_distribution(pd, ps);
            prop_assert!((s.total() - 1.0).abs() <= 1e-9);
            prop_assert_eq!(s.p_entrapped + s.p_slipping, pd);
            prop_assert!((s.p_entrapped + s.p_stopped - ps).abs() <= f64::EPSILON);
            for st in RoverStatus::ALL {
                prop_assert!((0.0..=1.0).contains(&s.probability(st)));
            }
        }
    }
}

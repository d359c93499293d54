//! Entrapment predicates and the velocity-divergence feature.
//!
//! A rover is entrapped when it is (nearly) not moving while its actuator
//! odometry says otherwise:
//!
//! ```text
//! ‖ẋ_ref‖ < ε₀   and   ‖ẋ_a − ẋ_ref‖ > ε_ag
//! ```
//!
//! where `ẋ_ref` is ground truth (simulation only) or the measured velocity.
//! The measured variant is meaningful only while `‖ẋ_m − ẋ_g‖ < ε_mg`.
//!
//! Twist norms stack `(v_x, v_y, L_c·ω)`, with the characteristic length
//! `L_c` converting yaw rate to a speed. All comparisons are strict, so a
//! norm exactly at a tolerance does not satisfy the inequality.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::TaskVelocity;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CriteriaError {
    #[error("tolerance `{field}` must be finite and strictly positive, got {value}")]
    NonPositiveTolerance { field: &'static str, value: f64 },
    #[error("eps_mg ({eps_mg}) must be smaller than eps_ag ({eps_ag})")]
    ApproximationTooLoose { eps_mg: f64, eps_ag: f64 },
    #[error("divergence weights contain a non-finite entry")]
    NonFiniteWeights,
    #[error("divergence weights are not symmetric (|R01 - R10| = {0:e})")]
    AsymmetricWeights(f64),
    #[error("divergence weights are not positive semi-definite (min eigenvalue {0:e})")]
    NotPositiveSemiDefinite(f64),
}

const SYMMETRY_TOL: f64 = 1e-12;

/// Maximum tolerable errors (m/s) plus the yaw-to-speed length scale (m).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub eps_zero: f64,
    pub eps_ag: f64,
    pub eps_mg: f64,
    #[serde(default = "default_char_length")]
    pub char_length: f64,
}

fn default_char_length() -> f64 {
    crate::kinematics::RoverGeometry::default().wheelbase
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            eps_zero: 0.05,
            eps_ag: 0.15,
            eps_mg: 0.02,
            char_length: default_char_length(),
        }
    }
}

impl Tolerances {
    pub fn new(
        eps_zero: f64,
        eps_ag: f64,
        eps_mg: f64,
        char_length: f64,
    ) -> Result<Self, CriteriaError> {
        let tol = Self {
            eps_zero,
            eps_ag,
            eps_mg,
            char_length,
        };
        tol.validate()?;
        Ok(tol)
    }

    pub fn validate(&self) -> Result<(), CriteriaError> {
        for (field, value) in [
            ("eps_zero", self.eps_zero),
            ("eps_ag", self.eps_ag),
            ("eps_mg", self.eps_mg),
            ("char_length", self.char_length),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(CriteriaError::NonPositiveTolerance { field, value });
            }
        }
        if self.eps_mg >= self.eps_ag {
            return Err(CriteriaError::ApproximationTooLoose {
                eps_mg: self.eps_mg,
                eps_ag: self.eps_ag,
            });
        }
        Ok(())
    }

    /// Stacked twist norm `‖(v_x, v_y, L_c·ω)‖`.
    pub fn twist_norm(&self, twist: &TaskVelocity) -> f64 {
        let scaled_yaw = self.char_length * twist.omega;
        (twist.v.norm_squared() + scaled_yaw * scaled_yaw).sqrt()
    }
}

/// Split linear/angular disagreement between two twists.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityError {
    pub e_v: f64,
    pub e_omega: f64,
}

impl VelocityError {
    fn as_vector(&self) -> Vector2<f64> {
        Vector2::new(self.e_v, self.e_omega)
    }
}

/// Symmetric PSD weight matrix `R` for the divergence feature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergenceWeights(Matrix2<f64>);

impl Default for DivergenceWeights {
    fn default() -> Self {
        Self(Matrix2::identity())
    }
}

impl DivergenceWeights {
    pub fn new(r: Matrix2<f64>) -> Result<Self, CriteriaError> {
        if r.iter().any(|x| !x.is_finite()) {
            return Err(CriteriaError::NonFiniteWeights);
        }
        let asym = (r[(0, 1)] - r[(1, 0)]).abs();
        if asym > SYMMETRY_TOL {
            return Err(CriteriaError::AsymmetricWeights(asym));
        }
        let min_eig = r.symmetric_eigenvalues().min();
        if min_eig < -SYMMETRY_TOL {
            return Err(CriteriaError::NotPositiveSemiDefinite(min_eig));
        }
        Ok(Self(r))
    }

    /// Builds weights from a row-major `[r00, r01, r10, r11]` array.
    pub fn from_row_major(r: [f64; 4]) -> Result<Self, CriteriaError> {
        Self::new(Matrix2::new(r[0], r[1], r[2], r[3]))
    }

    pub fn diagonal(linear: f64, angular: f64) -> Result<Self, CriteriaError> {
        Self::new(Matrix2::new(linear, 0.0, 0.0, angular))
    }

    pub fn to_row_major(&self) -> [f64; 4] {
        let m = &self.0;
        [m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]]
    }

    pub fn matrix(&self) -> &Matrix2<f64> {
        &self.0
    }
}

pub fn velocity_error(assumed: &TaskVelocity, measured: &TaskVelocity) -> VelocityError {
    VelocityError {
        e_v: (assumed.v - measured.v).norm(),
        e_omega: (assumed.omega - measured.omega).abs(),
    }
}

/// `Q = sqrt(eᵀ R e)` over `e = (e_v, e_ω)`.
pub fn weighted_divergence(err: &VelocityError, weights: &DivergenceWeights) -> f64 {
    let e = err.as_vector();
    let quad = e.dot(&(weights.0 * e));
    // PSD within rounding; a tiny negative quadratic form is zero.
    quad.max(0.0).sqrt()
}

/// Entrapment against the true twist (available in simulation).
pub fn entrapped_ground_truth(
    assumed: &TaskVelocity,
    ground_truth: &TaskVelocity,
    tol: &Tolerances,
) -> bool {
    tol.twist_norm(ground_truth) < tol.eps_zero
        && tol.twist_norm(&(*assumed - *ground_truth)) > tol.eps_ag
}

/// Entrapment with the measured twist standing in for ground truth.
///
/// Only meaningful when [`measurement_valid`] holds; the predicate is
/// evaluated regardless and validity is reported separately.
pub fn entrapped_measured(
    assumed: &TaskVelocity,
    measured: &TaskVelocity,
    tol: &Tolerances,
) -> bool {
    entrapped_ground_truth(assumed, measured, tol)
}

/// `‖ẋ_m − ẋ_g‖ < ε_mg`.
pub fn measurement_valid(
    measured: &TaskVelocity,
    ground_truth: &TaskVelocity,
    tol: &Tolerances,
) -> bool {
    tol.twist_norm(&(*measured - *ground_truth)) < tol.eps_mg
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn err(e_v: f64, e_omega: f64) -> VelocityError {
        VelocityError { e_v, e_omega }
    }

    #[test]
    fn velocity_error_examples() {
        let a = TaskVelocity::new(0.3, -0.1, 0.2);
        assert_eq!(velocity_error(&a, &a), err(0.0, 0.0));
        let e = velocity_error(
            &TaskVelocity::new(0.9, 0.0, 0.1),
            &TaskVelocity::new(0.0, 0.0, 0.1),
        );
        assert_eq!(e, err(0.9, 0.0));
        let e = velocity_error(&TaskVelocity::new(0.3, 0.4, 0.0), &TaskVelocity::ZERO);
        assert_relative_eq!(e.e_v, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn weighted_divergence_examples() {
        let r = DivergenceWeights::from_row_major([2.0, 0.5, 0.5, 1.0]).unwrap();
        assert_eq!(weighted_divergence(&err(0.0, 0.0), &r), 0.0);
        assert_relative_eq!(
            weighted_divergence(&err(3.0, 4.0), &DivergenceWeights::default()),
            5.0,
            epsilon = 1e-15
        );
        // eᵀRe = 4·1 + 1·4 = 8
        let r = DivergenceWeights::diagonal(4.0, 1.0).unwrap();
        assert_relative_eq!(
            weighted_divergence(&err(1.0, 2.0), &r),
            8f64.sqrt(),
            epsilon = 1e-15
        );
        assert_relative_eq!(
            weighted_divergence(&err(1.0, 2.0), &r),
            2.828_427,
            epsilon = 1e-6
        );
    }

    #[test]
    fn weights_validation() {
        assert!(matches!(
            DivergenceWeights::from_row_major([1.0, 0.2, 0.3, 1.0]),
            Err(CriteriaError::AsymmetricWeights(_))
        ));
        assert!(matches!(
            DivergenceWeights::from_row_major([1.0, 2.0, 2.0, 1.0]),
            Err(CriteriaError::NotPositiveSemiDefinite(_))
        ));
        assert!(DivergenceWeights::from_row_major([1.0, 1.0, 1.0, 1.0]).is_ok());
        assert!(DivergenceWeights::from_row_major([0.0; 4]).is_ok());
        assert!(DivergenceWeights::from_row_major([f64::NAN, 0.0, 0.0, 1.0]).is_err());
        let w = DivergenceWeights::from_row_major([2.0, 0.5, 0.5, 1.0]).unwrap();
        assert_eq!(w.to_row_major(), [2.0, 0.5, 0.5, 1.0]);
    }

    #[test]
    fn tolerance_validation() {
        assert!(Tolerances::default().validate().is_ok());
        assert!(Tolerances::new(0.05, 0.15, 0.15, 0.4).is_err());
        assert!(Tolerances::new(0.0, 0.15, 0.02, 0.4).is_err());
        assert!(Tolerances::new(0.05, 0.15, 0.02, f64::INFINITY).is_err());
    }

    #[test]
    fn ground_truth_predicate_examples() {
        let tol = Tolerances::new(0.05, 0.1, 0.02, 0.4).unwrap();
        let zero = TaskVelocity::ZERO;
        let driving = TaskVelocity::new(0.9, 0.0, 0.0);
        assert!(!entrapped_ground_truth(&zero, &zero, &tol));
        assert!(entrapped_ground_truth(&driving, &zero, &tol));
        assert!(!entrapped_ground_truth(&driving, &driving, &tol));
    }

    #[test]
    fn measured_predicate_examples() {
        let tol = Tolerances::default();
        let driving = TaskVelocity::new(0.9, 0.0, 0.0);
        assert!(!entrapped_measured(
            &TaskVelocity::ZERO,
            &TaskVelocity::ZERO,
            &tol
        ));
        assert!(entrapped_measured(&driving, &TaskVelocity::ZERO, &tol));
        // ‖ẋ_m‖ = 0.02 < 0.05 and ‖ẋ_a − ẋ_m‖ = 0.88 > 0.15
        assert!(entrapped_measured(
            &driving,
            &TaskVelocity::new(0.02, 0.0, 0.0),
            &tol
        ));
    }

    #[test]
    fn yaw_is_scaled_by_characteristic_length() {
        let tol = Tolerances::default();
        // 0.1 rad/s · 0.4 m = 0.04 m/s < ε₀
        assert!(entrapped_ground_truth(
            &TaskVelocity::new(0.5, 0.0, 0.0),
            &TaskVelocity::new(0.0, 0.0, 0.1),
            &tol
        ));
        // 0.2 rad/s · 0.4 m = 0.08 m/s > ε₀
        assert!(!entrapped_ground_truth(
            &TaskVelocity::new(0.5, 0.0, 0.0),
            &TaskVelocity::new(0.0, 0.0, 0.2),
            &tol
        ));
    }

    #[test]
    fn measurement_validity_boundaries() {
        let tol = Tolerances::new(0.05, 0.15, 0.025, 0.4).unwrap();
        let gt = TaskVelocity::new(0.25, 0.0, 0.1);
        assert!(measurement_valid(&gt, &gt, &tol));
        // 0.025 is exactly representable, so the error norm lands on the boundary.
        let on_boundary = TaskVelocity::new(0.0, 0.025, 0.0);
        assert_eq!(tol.twist_norm(&on_boundary), 0.025);
        assert!(!measurement_valid(&on_boundary, &TaskVelocity::ZERO, &tol));
        let half = TaskVelocity::new(gt.v.x + tol.eps_mg / 2.0, gt.v.y, gt.omega);
        assert!(measurement_valid(&half, &gt, &tol));
    }

    fn twist() -> impl Strategy<Value = TaskVelocity> {
        (-2.0..2.0f64, -2.0..2.0f64, -3.0..3.0f64).prop_map(|(x, y, w)| TaskVelocity::new(x, y, w))
    }

    proptest! {
        #[test]
        fn scaled_identity_weights(e_v in 0.0..10.0f64, e_w in 0.0..10.0f64, c in 0.0..100.0f64) {
            let e = err(e_v, e_w);
            let q = weighted_divergence(&e, &DivergenceWeights::diagonal(c, c).unwrap());
            let expected = c.sqrt() * (e_v * e_v + e_w * e_w).sqrt();
            prop_assert!((q - expected).abs() <= 1e-12 * expected.max(f64::MIN_POSITIVE));
        }

        #[test]
        fn divergence_monotone_in_linear_error(
            e_v in 0.0..5.0f64, step in 0.0..5.0f64, e_w in 0.0..5.0f64,
            r0 in 0.0..10.0f64, r1 in 0.0..10.0f64,
        ) {
            let w = DivergenceWeights::diagonal(r0, r1).unwrap();
            prop_assert!(weighted_divergence(&err(e_v + step, e_w), &w) >= weighted_divergence(&err(e_v, e_w), &w));
        }

        #[test]
        fn measured_is_ground_truth_substitution(a in twist(), m in twist()) {
            let tol = Tolerances::default();
            prop_assert_eq!(entrapped_measured(&a, &m, &tol), entrapped_ground_truth(&a, &m, &tol));
        }

        #[test]
        fn measured_verdict_bounds_true_speed(
            a in twist(), g in twist(),
            dx in -1.0..1.0f64, dy in -1.0..1.0f64, dw in -1.0..1.0f64, frac in 0.0..0.999f64,
        ) {
            let tol = Tolerances::default();
            // Build a measurement strictly inside the ε_mg ball around ground truth.
            let dir = TaskVelocity::new(dx, dy, dw);
            let n = tol.twist_norm(&dir);
            prop_assume!(n > 1e-9);
            let s = frac * tol.eps_mg / n;
            let m = TaskVelocity::new(g.v.x + s * dx, g.v.y + s * dy, g.omega + s * dw);
            prop_assume!(measurement_valid(&m, &g, &tol));
            if entrapped_measured(&a, &m, &tol) {
                prop_assert!(tol.twist_norm(&g) < tol.eps_zero + tol.eps_mg);
            }
        }
    }
}

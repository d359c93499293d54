//! Locomotion odometry for a four-wheel, front-steered Ackermann rover.
//!
//! The two front steer joints are reduced to a single-track (bicycle) model.
//! Wheel angular rates map linearly to the body-frame twist `(v_x, v_y, ω)`
//! through a 3×4 Jacobian that depends only on the steer angles.
//!
//! Only the velocity-level map is provided. Pose is not a function of joint
//! positions for a nonholonomic wheeled platform, so there is no
//! position-level forward kinematics here.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{SMatrix, Vector2, Vector3, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of driven wheels.
pub const NUM_WHEELS: usize = 4;
/// Number of steer joints (front left, front right).
pub const NUM_STEER_JOINTS: usize = 2;

/// Wheel-rate to body-twist Jacobian, rows `(v_x, v_y, ω)`.
pub type Jacobian = SMatrix<f64, 3, NUM_WHEELS>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KinematicsError {
    #[error("geometry field `{field}` must be finite and strictly positive, got {value}")]
    InvalidGeometry { field: &'static str, value: f64 },
    #[error("steer angle {index} = {value} outside (-pi/2, pi/2)")]
    SteerOutOfRange { index: usize, value: f64 },
    #[error("wheel velocity {index} is not finite")]
    NonFiniteWheel { index: usize },
}

/// Rover chassis dimensions in metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoverGeometry {
    pub wheelbase: f64,
    pub track_width: f64,
    pub wheel_radius: f64,
}

impl Default for RoverGeometry {
    fn default() -> Self {
        Self {
            wheelbase: 0.4,
            track_width: 0.3,
            wheel_radius: 0.09,
        }
    }
}

impl RoverGeometry {
    pub fn new(
        wheelbase: f64,
        track_width: f64,
        wheel_radius: f64,
    ) -> Result<Self, KinematicsError> {
        let geom = Self {
            wheelbase,
            track_width,
            wheel_radius,
        };
        geom.validate()?;
        Ok(geom)
    }

    pub fn validate(&self) -> Result<(), KinematicsError> {
        for (field, value) in [
            ("wheelbase", self.wheelbase),
            ("track_width", self.track_width),
            ("wheel_radius", self.wheel_radius),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(KinematicsError::InvalidGeometry { field, value });
            }
        }
        Ok(())
    }
}

/// Locomotion joint state: wheel rates (rad/s) and front steer angles (rad).
///
/// Wheel order is front-left, front-right, rear-left, rear-right; steer order
/// is front-left, front-right. Positive steer turns left.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointState {
    wheel_velocities: [f64; NUM_WHEELS],
    steer_angles: [f64; NUM_STEER_JOINTS],
}

impl JointState {
    pub fn new(
        wheel_velocities: [f64; NUM_WHEELS],
        steer_angles: [f64; NUM_STEER_JOINTS],
    ) -> Result<Self, KinematicsError> {
        if let Some(index) = wheel_velocities.iter().position(|w| !w.is_finite()) {
            return Err(KinematicsError::NonFiniteWheel { index });
        }
        for (index, &value) in steer_angles.iter().enumerate() {
            if !(value.is_finite() && value.abs() < FRAC_PI_2) {
                return Err(KinematicsError::SteerOutOfRange { index, value });
            }
        }
        Ok(Self {
            wheel_velocities,
            steer_angles,
        })
    }

    pub fn wheel_velocities(&self) -> [f64; NUM_WHEELS] {
        self.wheel_velocities
    }

    pub fn steer_angles(&self) -> [f64; NUM_STEER_JOINTS] {
        self.steer_angles
    }

    /// Same steer angles, different wheel rates.
    pub fn with_wheel_velocities(
        &self,
        wheel_velocities: [f64; NUM_WHEELS],
    ) -> Result<Self, KinematicsError> {
        Self::new(wheel_velocities, self.steer_angles)
    }
}

/// Planar body-frame twist. `v` is (longitudinal, lateral) in m/s, `omega`
/// is yaw rate in rad/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskVelocity {
    pub v: Vector2<f64>,
    pub omega: f64,
}

impl TaskVelocity {
    pub const ZERO: Self = Self {
        v: Vector2::new(0.0, 0.0),
        omega: 0.0,
    };

    pub fn new(vx: f64, vy: f64, omega: f64) -> Self {
        Self {
            v: Vector2::new(vx, vy),
            omega,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.v.iter().all(|c| c.is_finite()) && self.omega.is_finite()
    }

    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.v.x, self.v.y, self.omega)
    }

    /// Linear speed `‖v‖`.
    pub fn speed(&self) -> f64 {
        self.v.norm()
    }
}

impl std::ops::Sub for TaskVelocity {
    type Output = TaskVelocity;

    fn sub(self, rhs: Self) -> Self::Output {
        TaskVelocity {
            v: self.v - rhs.v,
            omega: self.omega - rhs.omega,
        }
    }
}

/// Single-track steering angle equivalent to the two front steer joints.
///
/// Each steer joint alone implies a path curvature `tan(δ_i) / L`. The
/// curvatures are averaged and mapped back to an angle, so the result is a
/// quasi-arithmetic mean of the two joint angles and always lies between them.
pub fn effective_steer_angle(joints: &JointState, geom: &RoverGeometry) -> f64 {
    let [left, right] = joints.steer_angles;
    let mean_curvature = 0.5 * (left.tan() + right.tan()) / geom.wheelbase;
    (geom.wheelbase * mean_curvature).atan()
}

/// Jacobian of the body twist with respect to the wheel rates.
///
/// `v_x = r · mean(q̇)`, `v_y = 0`, `ω = v_x · tan(δ_eff) / L`.
pub fn jacobian(joints: &JointState, geom: &RoverGeometry) -> Jacobian {
    let per_wheel = geom.wheel_radius / NUM_WHEELS as f64;
    let curvature = effective_steer_angle(joints, geom).tan() / geom.wheelbase;
    let mut j = Jacobian::zeros();
    for col in 0..NUM_WHEELS {
        j[(0, col)] = per_wheel;
        j[(2, col)] = per_wheel * curvature;
    }
    j
}

/// Actuator odometry: the twist the wheels claim the rover is making.
pub fn assumed_velocity(joints: &JointState, geom: &RoverGeometry) -> TaskVelocity {
    let rates = Vector4::from(joints.wheel_velocities);
    let twist = jacobian(joints, geom) * rates;
    TaskVelocity::new(twist.x, twist.y, twist.z)
}

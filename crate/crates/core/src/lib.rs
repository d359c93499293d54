//! Rover entrapment detection.
//!
//! Compares actuator odometry (wheel encoders through the steering
//! kinematics) with an independently measured body velocity, and classifies
//! the rover as entrapped, slipping, moving or stopped with two recursive
//! Naive Bayes classifiers. Also ships a seeded scenario simulator and the
//! telemetry record format used to replay traces.

pub mod bayes;
pub mod criteria;
pub mod detector;
pub mod kinematics;
pub mod simulator;
pub mod telemetry;

pub use bayes::{
    BeliefState, ClassifierModels, ConditionalModel, ModelKind, RoverStatus, StatusDistribution,
};
pub use criteria::{DivergenceWeights, Tolerances, VelocityError};
pub use detector::{Detector, DetectorConfig, DetectorError, PriorMode, StatusEstimate};
pub use kinematics::{JointState, RoverGeometry, TaskVelocity};
pub use simulator::{NoiseParams, Scenario, ScenarioKind};
pub use telemetry::{TelemetrySample, Trace};

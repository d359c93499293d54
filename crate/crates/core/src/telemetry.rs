//! Line-delimited telemetry records and traces.
//!
//! One JSON object per line:
//!
//! ```text
//! {"t_ms":0,"wheel_vel":[2.7,2.7,2.7,2.7],"steer":[0.0,0.0],"meas_vx":0.25,"meas_vy":0.0,"meas_omega":0.0,"gt_vx":0.25,"gt_vy":0.0,"gt_omega":0.0,"label":"moving"}
//! ```
//!
//! `meas_*` keys are required; a tracker dropout is written as `null` in all
//! three. `gt_*` keys are optional but come as a set. `label` is optional.
//! A trace file may start with a `{"_meta": {...}}` line. Velocities are
//! body-frame. Numbers are written rounded to 9 significant digits.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bayes::{RoverStatus, TrainingSets};
use crate::criteria::{velocity_error, weighted_divergence, DivergenceWeights};
use crate::kinematics::{
    assumed_velocity, JointState, KinematicsError, RoverGeometry, TaskVelocity,
};

#[derive(Debug, Error)]
pub enum TelemetryError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(
        "line {line}: timestamp {t_ms} does not increase on {prev_t_ms} from line {prev_line}"
    )]
    TimestampRegression {
        line: usize,
        prev_line: usize,
        t_ms: u64,
        prev_t_ms: u64,
    },
    #[error("sample {index} has no label")]
    Unlabeled { index: usize },
    #[error("sample {index} has no measured velocity")]
    MissingMeasurement { index: usize },
    #[error("sample {index} has no ground truth")]
    MissingGroundTruth { index: usize },
    #[error("invalid sample: {0}")]
    Invalid(String),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// One telemetry record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TelemetrySample {
    pub t_ms: u64,
    pub wheel_vel: [f64; 4],
    pub steer: [f64; 2],
    /// `None` marks a tracker dropout.
    pub measured: Option<TaskVelocity>,
    pub ground_truth: Option<TaskVelocity>,
    pub label: Option<RoverStatus>,
}

/// Per-sample classifier inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Features {
    pub assumed: TaskVelocity,
    /// Weighted divergence `Q`.
    pub q: f64,
    /// Measured linear speed `‖v_m‖`.
    pub speed: f64,
}

impl TelemetrySample {
    pub fn joints(&self) -> Result<JointState, KinematicsError> {
        JointState::new(self.wheel_vel, self.steer)
    }

    pub fn validate(&self) -> Result<(), TelemetryError> {
        self.joints()?;
        for (name, twist) in [
            ("measured", self.measured),
            ("ground truth", self.ground_truth),
        ] {
            if twist.is_some_and(|t| !t.is_finite()) {
                return Err(TelemetryError::Invalid(format!(
                    "{name} velocity is not finite"
                )));
            }
        }
        Ok(())
    }

    /// Classifier features, or `None` during a tracker dropout.
    pub fn features(
        &self,
        geom: &RoverGeometry,
        weights: &DivergenceWeights,
    ) -> Result<Option<Features>, KinematicsError> {
        let assumed = assumed_velocity(&self.joints()?, geom);
        Ok(self.measured.map(|measured| Features {
            assumed,
            q: weighted_divergence(&velocity_error(&assumed, &measured), weights),
            speed: measured.speed(),
        }))
    }
}

fn required_nullable<'de, D>(d: D) -> Result<Option<f64>, D::Error>
where
    D: serde::Deserializer<'de>,
{
    Option::<f64>::deserialize(d)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    t_ms: u64,
    wheel_vel: [f64; 4],
    steer: [f64; 2],
    #[serde(deserialize_with = "required_nullable")]
    meas_vx: Option<f64>,
    #[serde(deserialize_with = "required_nullable")]
    meas_vy: Option<f64>,
    #[serde(deserialize_with = "required_nullable")]
    meas_omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gt_vx: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gt_vy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gt_omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<RoverStatus>,
}

/// Rounds to 9 significant digits, the precision records are written at.
pub fn round_sig9(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.8e}")
        .parse()
        .expect("formatted float reparses")
}

fn twist_from(
    vx: Option<f64>,
    vy: Option<f64>,
    omega: Option<f64>,
    what: &str,
) -> Result<Option<TaskVelocity>, String> {
    match (vx, vy, omega) {
        (Some(vx), Some(vy), Some(omega)) => Ok(Some(TaskVelocity::new(vx, vy, omega))),
        (None, None, None) => Ok(None),
        _ => Err(format!("{what} fields must be all present or all absent")),
    }
}

impl TryFrom<Record> for TelemetrySample {
    type Error = String;

    fn try_from(r: Record) -> Result<Self, Self::Error> {
        Ok(Self {
            t_ms: r.t_ms,
            wheel_vel: r.wheel_vel,
            steer: r.steer,
            measured: twist_from(r.meas_vx, r.meas_vy, r.meas_omega, "meas_*")?,
            ground_truth: twist_from(r.gt_vx, r.gt_vy, r.gt_omega, "gt_*")?,
            label: r.label,
        })
    }
}

impl From<&TelemetrySample> for Record {
    fn from(s: &TelemetrySample) -> Self {
        let r = round_sig9;
        Self {
            t_ms: s.t_ms,
            wheel_vel: s.wheel_vel.map(r),
            steer: s.steer.map(r),
            meas_vx: s.measured.map(|m| r(m.v.x)),
            meas_vy: s.measured.map(|m| r(m.v.y)),
            meas_omega: s.measured.map(|m| r(m.omega)),
            gt_vx: s.ground_truth.map(|g| r(g.v.x)),
            gt_vy: s.ground_truth.map(|g| r(g.v.y)),
            gt_omega: s.ground_truth.map(|g| r(g.omega)),
            label: s.label,
        }
    }
}

/// Parses one record. `line` is only used for error messages.
pub fn parse_record(text: &str, line: usize) -> Result<TelemetrySample, TelemetryError> {
    let perr = |message: String| TelemetryError::Parse { line, message };
    let record: Record = serde_json::from_str(text).map_err(|e| perr(e.to_string()))?;
    let sample = TelemetrySample::try_from(record).map_err(perr)?;
    sample.validate().map_err(|e| perr(e.to_string()))?;
    Ok(sample)
}

/// Serializes one record without a trailing newline.
pub fn write_record(sample: &TelemetrySample) -> String {
    serde_json::to_string(&Record::from(sample)).expect("record serialization is infallible")
}

/// Trace provenance carried on the `_meta` line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceMetadata {
    pub scenario: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<RoverGeometry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetaLine {
    #[serde(rename = "_meta")]
    meta: TraceMetadata,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub metadata: Option<TraceMetadata>,
    pub samples: Vec<TelemetrySample>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Checks the timestamp ordering of in-memory samples.
    pub fn check_timestamps(&self) -> Result<(), TelemetryError> {
        for (i, w) in self.samples.windows(2).enumerate() {
            if w[1].t_ms <= w[0].t_ms {
                return Err(TelemetryError::TimestampRegression {
                    line: i + 2,
                    prev_line: i + 1,
                    t_ms: w[1].t_ms,
                    prev_t_ms: w[0].t_ms,
                });
            }
        }
        Ok(())
    }
}

/// Parses a whole trace. Blank lines are skipped; line numbers are 1-based.
pub fn parse_trace(text: &str) -> Result<Trace, TelemetryError> {
    let mut trace = Trace::default();
    let mut prev: Option<(usize, u64)> = None;
    let mut seen_record = false;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.trim();
        if body.is_empty() {
            continue;
        }
        if body.contains("\"_meta\"") {
            if seen_record || trace.metadata.is_some() {
                return Err(TelemetryError::Parse {
                    line,
                    message: "`_meta` is only allowed on the first line".into(),
                });
            }
            let meta: MetaLine = serde_json::from_str(body).map_err(|e| TelemetryError::Parse {
                line,
                message: e.to_string(),
            })?;
            trace.metadata = Some(meta.meta);
            seen_record = true;
            continue;
        }
        seen_record = true;
        let sample = parse_record(body, line)?;
        if let Some((prev_line, prev_t_ms)) = prev {
            if sample.t_ms <= prev_t_ms {
                return Err(TelemetryError::TimestampRegression {
                    line,
                    prev_line,
                    t_ms: sample.t_ms,
                    prev_t_ms,
                });
            }
        }
        prev = Some((line, sample.t_ms));
        trace.samples.push(sample);
    }
    Ok(trace)
}

pub fn load_trace(path: impl AsRef<Path>) -> Result<Trace, TelemetryError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| TelemetryError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_trace(&text)
}

/// Serializes a trace, metadata line first, one record per line.
pub fn write_trace(trace: &Trace) -> String {
    let mut out = String::new();
    if let Some(meta) = &trace.metadata {
        let line = MetaLine { meta: meta.clone() };
        out.push_str(&serde_json::to_string(&line).expect("metadata serialization is infallible"));
        out.push('\n');
    }
    for s in &trace.samples {
        out.push_str(&write_record(s));
        out.push('\n');
    }
    out
}

pub fn save_trace(trace: &Trace, path: impl AsRef<Path>) -> Result<(), TelemetryError> {
    let path = path.as_ref();
    fs::write(path, write_trace(trace)).map_err(|source| TelemetryError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Groups `Q` by divergence class and `‖v_m‖` by movement class, using each
/// sample's label: entrapped/slipping are diverged, moving/stopped are
/// consistent; moving/slipping are moving, entrapped/stopped are stopped.
pub fn extract_training_sets(
    trace: &Trace,
    geom: &RoverGeometry,
    weights: &DivergenceWeights,
) -> Result<TrainingSets, TelemetryError> {
    let mut sets = TrainingSets::default();
    for (index, sample) in trace.samples.iter().enumerate() {
        let label = sample.label.ok_or(TelemetryError::Unlabeled { index })?;
        let f = sample
            .features(geom, weights)?
            .ok_or(TelemetryError::MissingMeasurement { index })?;
        if label.is_diverged() {
            sets.q_diverged.push(f.q);
        } else {
            sets.q_consistent.push(f.q);
        }
        if label.is_stopped() {
            sets.speed_stopped.push(f.speed);
        } else {
            sets.speed_moving.push(f.speed);
        }
    }
    Ok(sets)
}

use anyhow::{anyhow, Context, Result};
use entrap_core::criteria::entrapped_ground_truth;
use entrap_core::kinematics::assumed_velocity;
use entrap_core::{ClassifierModels, Detector, DetectorConfig, RoverStatus, Trace};
use serde::Serialize;

/// Steps after each label change (and after the start of a trace) that are
/// left out of accuracy and agreement scores.
pub const TRANSITION_WINDOW: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceReport {
    pub trace: String,
    pub samples: usize,
    pub scored_steps: usize,
    /// Argmax status against labels; `None` when nothing was scored.
    pub accuracy: Option<f64>,
    pub entrapment_episodes: usize,
    /// Steps from each label flip to the decision, counting the flip step.
    pub latencies: Vec<usize>,
    pub missed_episodes: usize,
    pub false_alarms: usize,
    /// Argmax-is-entrapped against the ground-truth predicate.
    pub ground_truth_agreement: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub traces: Vec<TraceReport>,
    pub scored_steps: usize,
    pub accuracy: Option<f64>,
    pub mean_latency: Option<f64>,
    pub missed_episodes: usize,
    pub false_alarms: usize,
    pub ground_truth_agreement: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn evaluate_one(
    name: &str,
    trace: &Trace,
    config: &DetectorConfig,
    models: &ClassifierModels,
) -> Result<TraceReport> {
    let mut labels = Vec::with_capacity(trace.len());
    let mut truth = Vec::with_capacity(trace.len());
    for (i, s) in trace.samples.iter().enumerate() {
        labels.push(s.label.ok_or_else(|| anyhow!("sample {i} has no label"))?);
        let gt = s
            .ground_truth
            .ok_or_else(|| anyhow!("sample {i} has no ground truth"))?;
        let va = assumed_velocity(&s.joints()?, &config.geometry);
        truth.push(entrapped_ground_truth(&va, &gt, &config.tolerances));
    }

    let mut det = Detector::new(*config, *models)?;
    let est = det.run(&trace.samples)?;

    let (mut scored, mut correct, mut agree) = (0, 0, 0);
    let mut last_change = 0;
    for i in 0..est.len() {
        if i > 0 && labels[i] != labels[i - 1] {
            last_change = i;
        }
        if i < last_change + TRANSITION_WINDOW {
            continue;
        }
        let argmax = est[i].argmax();
        scored += 1;
        correct += usize::from(argmax == labels[i]);
        agree += usize::from((argmax == RoverStatus::Entrapped) == truth[i]);
    }

    let mut latencies = Vec::new();
    let (mut episodes, mut missed) = (0, 0);
    let mut i = 0;
    while i < labels.len() {
        if labels[i] != RoverStatus::Entrapped {
            i += 1;
            continue;
        }
        let start = i;
        while i < labels.len() && labels[i] == RoverStatus::Entrapped {
            i += 1;
        }
        episodes += 1;
        match (start..i).find(|&k| est[k].decided_entrapped) {
            Some(k) => latencies.push(k - start + 1),
            None => missed += 1,
        }
    }

    let false_alarms = (0..est.len())
        .filter(|&k| est[k].decided_entrapped && (k == 0 || !est[k - 1].decided_entrapped))
        .filter(|&k| labels[k] != RoverStatus::Entrapped)
        .count();

    Ok(TraceReport {
        trace: name.to_string(),
        samples: trace.len(),
        scored_steps: scored,
        accuracy: ratio(correct, scored),
        entrapment_episodes: episodes,
        latencies,
        missed_episodes: missed,
        false_alarms,
        ground_truth_agreement: ratio(agree, scored),
    })
}

/// Scores every trace on its own detector, one thread per trace.
pub fn evaluate(
    traces: &[(String, Trace)],
    config: &DetectorConfig,
    models: &ClassifierModels,
) -> Result<EvalReport> {
    let reports = std::thread::scope(|scope| {
        let handles: Vec<_> = traces
            .iter()
            .map(|(name, trace)| {
                scope.spawn(move || {
                    evaluate_one(name, trace, config, models).with_context(|| name.clone())
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("evaluation thread panicked"))
            .collect::<Result<Vec<_>>>()
    })?;

    let scored: usize = reports.iter().map(|r| r.scored_steps).sum();
    let weighted = |f: fn(&TraceReport) -> Option<f64>| {
        let hits: f64 = reports
            .iter()
            .filter_map(|r| f(r).map(|a| a * r.scored_steps as f64))
            .sum();
        (scored > 0).then(|| hits / scored as f64)
    };
    let latencies: Vec<usize> = reports
        .iter()
        .flat_map(|r| r.latencies.iter().copied())
        .collect();
    Ok(EvalReport {
        scored_steps: scored,
        accuracy: weighted(|r| r.accuracy),
        mean_latency: (!latencies.is_empty())
            .then(|| latencies.iter().sum::<usize>() as f64 / latencies.len() as f64),
        missed_episodes: reports.iter().map(|r| r.missed_episodes).sum(),
        false_alarms: reports.iter().map(|r| r.false_alarms).sum(),
        ground_truth_agreement: weighted(|r| r.ground_truth_agreement),
        traces: reports,
    })
}

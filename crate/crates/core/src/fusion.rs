//! Reasoning over detections: sensor fault vs process event, combining the
//! Level IV reconstruction report with the Level VI causal graph.

use crate::causal::{graph_neighbors, CausalGraph, Direction};
use crate::error::{Error, Result};
use crate::scoring::ReconstructionReport;
use crate::verdict::{AnomalyKind, AnomalyVerdict, Label};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReasoningConfig {
    /// Slack, in samples, around the delay-shifted neighbor span.
    pub coincidence_window: usize,
    /// A neighbor corroborates when its mean perr reaches this fraction of
    /// the verdict's score.
    pub neighbor_perr_ratio: f64,
    pub min_corroborating_neighbors: usize,
}

impl Default for ReasoningConfig {
    fn default() -> Self {
        Self {
            coincidence_window: 5,
            neighbor_perr_ratio: 0.5,
            min_corroborating_neighbors: 1,
        }
    }
}

impl ReasoningConfig {
    fn validate(&self) -> Result<()> {
        if self.coincidence_window < 1 {
            return Err(Error::InvalidArgument(
                "coincidence_window must be >= 1".into(),
            ));
        }
        if !(self.neighbor_perr_ratio > 0.0 && self.neighbor_perr_ratio <= 1.0) {
            return Err(Error::InvalidArgument(
                "neighbor_perr_ratio must be in (0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Mean perr of a sensor over the covered samples of an inclusive span;
/// None when no sample is covered.
fn mean_perr(report: &ReconstructionReport, sensor: usize, start: usize, end: usize) -> Option<f64> {
    let t = report.perr.nrows();
    if start >= t {
        return None;
    }
    let end = end.min(t - 1);
    let mut sum = 0.0;
    let mut n = 0usize;
    for i in start..=end {
        if report.coverage[(i, sensor)] {
            sum += report.perr[(i, sensor)];
            n += 1;
        }
    }
    (n > 0).then(|| sum / n as f64)
}

/// Neighbor span for an edge of the given delay: the verdict span shifted
/// along the edge direction and widened by the coincidence window.
fn shifted_span(
    start: usize,
    end: usize,
    delay: isize,
    slack: usize,
) -> (usize, usize) {
    let s = start as isize + delay - slack as isize;
    let e = end as isize + delay + slack as isize;
    (s.max(0) as usize, e.max(0) as usize)
}

/// Applies the rule set in priority order and returns a newly labeled list;
/// input verdicts are never mutated.
///
/// R1: bound violations, stuck and spike detections are sensor faults.
/// R2: a contextual deviation corroborated by enough causal neighbors
///     (delay-shifted, perr at a comparable level) is a process event.
/// R3: a contextual deviation with quiet neighbors is a sensor fault.
/// R4: surviving simulation mismatches are process-event candidates for
///     expert review (invalid-mode samples never reach this point).
pub fn classify(
    verdicts: &[AnomalyVerdict],
    report: &ReconstructionReport,
    graph: &CausalGraph,
    config: &ReasoningConfig,
) -> Result<Vec<AnomalyVerdict>> {
    config.validate()?;
    let s_count = report.perr.ncols();
    let mut out = Vec::with_capacity(verdicts.len());
    for verdict in verdicts {
        for &sensor in &verdict.sensor_ids {
            if sensor >= s_count {
                return Err(Error::Schema(format!(
                    "verdict references unknown sensor {sensor}"
                )));
            }
        }
        let mut labeled = verdict.clone();
        labeled.label = match verdict.kind {
            AnomalyKind::BoundViolation | AnomalyKind::Stuck | AnomalyKind::Spike => {
                Label::SensorFault
            }
            AnomalyKind::ContextualDeviation => {
                let sensor = verdict.sensor_ids[0];
                let mut corroborating = 0usize;
                if graph.nodes.contains(&sensor) {
                    let parents = graph_neighbors(graph, sensor, Direction::Parents, usize::MAX)?;
                    let children = graph_neighbors(graph, sensor, Direction::Children, usize::MAX)?;
                    // A cause flagged at t corroborates an effect at t+delay,
                    // so parents are checked earlier and children later.
                    let candidates = parents
                        .iter()
                        .map(|&(n, d)| (n, -(d as isize)))
                        .chain(children.iter().map(|&(n, d)| (n, d as isize)));
                    for (neighbor, delay) in candidates {
                        let (s0, s1) = shifted_span(
                            verdict.start_index,
                            verdict.end_index,
                            delay,
                            config.coincidence_window,
                        );
                        if let Some(level) = mean_perr(report, neighbor, s0, s1) {
                            if level >= config.neighbor_perr_ratio * verdict.score {
                                corroborating += 1;
                            }
                        }
                    }
                }
                if corroborating >= config.min_corroborating_neighbors {
                    Label::ProcessEvent
                } else {
                    Label::SensorFault
                }
            }
            AnomalyKind::SimulationMismatch => Label::ProcessEvent,
            AnomalyKind::Drift => verdict.label,
        };
        out.push(labeled);
    }
    Ok(out)
}

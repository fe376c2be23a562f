//! Anomaly verdicts shared by every detection level.

use serde::{Deserialize, Serialize};

/// Framework level a verdict originated from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Level {
    L2,
    L3,
    L4,
    L5,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyKind {
    BoundViolation,
    Spike,
    Stuck,
    Drift,
    ContextualDeviation,
    SimulationMismatch,
}

/// Reasoning outcome; stays `Unclassified` until fusion assigns it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Unclassified,
    SensorFault,
    ProcessEvent,
    OutOfModelDomain,
}

/// One detected anomaly over an inclusive sample span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyVerdict {
    pub level: Level,
    pub sensor_ids: Vec<usize>,
    pub start_index: usize,
    pub end_index: usize,
    pub score: f64,
    pub kind: AnomalyKind,
    pub label: Label,
}

impl AnomalyVerdict {
    pub fn new(
        level: Level,
        sensor_ids: Vec<usize>,
        start_index: usize,
        end_index: usize,
        score: f64,
        kind: AnomalyKind,
    ) -> Self {
        debug_assert!(start_index <= end_index);
        debug_assert!(score >= 0.0);
        Self {
            level,
            sensor_ids,
            start_index,
            end_index,
            score,
            kind,
            label: Label::Unclassified,
        }
    }

    /// Number of samples covered (span is inclusive).
    pub fn span_len(&self) -> usize {
        self.end_index - self.start_index + 1
    }
}

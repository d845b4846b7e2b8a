//! Debounced alert lifecycle per stream.
//!
//! A frame is *hot* when its level is at least [`ThreatLevel::Grasped`] and
//! *cold* otherwise (a knife lying on a counter does not hold an alert open).
//! `n_raise` consecutive hot frames raise an alert; `n_clear` consecutive cold
//! frames clear it. Counting is by frames, not wall-clock time.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::{ThreatAssessment, ThreatLevel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemporalConfig {
    pub n_raise: u32,
    pub n_clear: u32,
}

impl Default for TemporalConfig {
    fn default() -> Self {
        Self {
            n_raise: 3,
            n_clear: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("temporal config field `{0}` must be at least 1")]
pub struct TemporalConfigError(pub &'static str);

impl TemporalConfig {
    pub fn validate(&self) -> Result<(), TemporalConfigError> {
        if self.n_raise < 1 {
            return Err(TemporalConfigError("n_raise"));
        }
        if self.n_clear < 1 {
            return Err(TemporalConfigError("n_clear"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    #[default]
    Idle,
    /// Hot streak started but not yet long enough to raise.
    Suspected,
    Active,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AlertState {
    pub phase: Phase,
    pub consecutive_hot: u32,
    pub consecutive_cold: u32,
    pub active_alert_id: Option<String>,
    pub peak_level: ThreatLevel,
    pub peak_score: f64,
    pub escalated: bool,
    pub last_frame_id: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlertKind {
    Raised,
    Escalated,
    Cleared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertEvent {
    pub stream_id: String,
    pub alert_id: String,
    pub kind: AlertKind,
    pub frame_id: u64,
    pub ts_ms: u64,
    /// Triggering frame's level for Raised/Escalated; the alert's peak for Cleared.
    pub level: ThreatLevel,
    pub score: f64,
}

impl AlertEvent {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("alert events always serialize")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("frame {frame_id} is not after frame {last_frame_id}")]
pub struct OutOfOrderFrame {
    pub frame_id: u64,
    pub last_frame_id: u64,
}

pub fn alert_id(stream_id: &str, raise_frame_id: u64) -> String {
    format!("{stream_id}:{raise_frame_id}")
}

fn is_hot(level: ThreatLevel) -> bool {
    level >= ThreatLevel::Grasped
}

/// Advances one stream's state by one assessment.
///
/// On an out-of-order frame the state is returned unchanged inside the error
/// path (the caller keeps its copy).
pub fn step(
    state: &AlertState,
    assessment: &ThreatAssessment,
    cfg: &TemporalConfig,
) -> Result<(AlertState, Option<AlertEvent>), OutOfOrderFrame> {
    if let Some(last) = state.last_frame_id {
        if assessment.frame_id <= last {
            return Err(OutOfOrderFrame {
                frame_id: assessment.frame_id,
                last_frame_id: last,
            });
        }
    }
    let mut next = state.clone();
    next.last_frame_id = Some(assessment.frame_id);
    let event = |kind, level, score, alert_id: &str| AlertEvent {
        stream_id: assessment.stream_id.clone(),
        alert_id: alert_id.to_owned(),
        kind,
        frame_id: assessment.frame_id,
        ts_ms: assessment.ts_ms,
        level,
        score,
    };

    if is_hot(assessment.level) {
        next.consecutive_hot = next.consecutive_hot.saturating_add(1);
        next.consecutive_cold = 0;
        match next.phase {
            Phase::Active => {
                if assessment.level > next.peak_level
                    || (assessment.level == next.peak_level && assessment.score > next.peak_score)
                {
                    next.peak_level = assessment.level;
                    next.peak_score = assessment.score;
                }
                if assessment.level == ThreatLevel::OverhandThreat && !next.escalated {
                    next.escalated = true;
                    let id = next.active_alert_id.clone().unwrap_or_default();
                    let ev = event(
                        AlertKind::Escalated,
                        assessment.level,
                        assessment.score,
                        &id,
                    );
                    return Ok((next, Some(ev)));
                }
                Ok((next, None))
            }
            Phase::Idle | Phase::Suspected => {
                if next.consecutive_hot >= cfg.n_raise {
                    let id = alert_id(&assessment.stream_id, assessment.frame_id);
                    next.phase = Phase::Active;
                    next.active_alert_id = Some(id.clone());
                    next.peak_level = assessment.level;
                    next.peak_score = assessment.score;
                    next.escalated = false;
                    let ev = event(AlertKind::Raised, assessment.level, assessment.score, &id);
                    Ok((next, Some(ev)))
                } else {
                    next.phase = Phase::Suspected;
                    Ok((next, None))
                }
            }
        }
    } else {
        next.consecutive_cold = next.consecutive_cold.saturating_add(1);
        next.consecutive_hot = 0;
        match next.phase {
            Phase::Active if next.consecutive_cold >= cfg.n_clear => {
                let id = next.active_alert_id.take().unwrap_or_default();
                let ev = event(AlertKind::Cleared, next.peak_level, next.peak_score, &id);
                next.phase = Phase::Idle;
                next.peak_level = ThreatLevel::None;
                next.peak_score = 0.0;
                next.escalated = false;
                Ok((next, Some(ev)))
            }
            Phase::Active => Ok((next, None)),
            Phase::Idle | Phase::Suspected => {
                next.phase = Phase::Idle;
                Ok((next, None))
            }
        }
    }
}

/// Closes an open alert at end of stream.
pub fn flush(state: &AlertState, stream_id: &str, ts_ms: u64) -> (AlertState, Option<AlertEvent>) {
    if state.phase != Phase::Active {
        return (state.clone(), None);
    }
    let event = AlertEvent {
        stream_id: stream_id.to_owned(),
        alert_id: state.active_alert_id.clone().unwrap_or_default(),
        kind: AlertKind::Cleared,
        frame_id: state.last_frame_id.unwrap_or_default(),
        ts_ms,
        level: state.peak_level,
        score: state.peak_score,
    };
    let next = AlertState {
        last_frame_id: state.last_frame_id,
        ..AlertState::default()
    };
    (next, Some(event))
}

/// One alert state machine per stream id.
#[derive(Debug, Default)]
pub struct AlertTracker {
    cfg: TemporalConfig,
    streams: BTreeMap<String, (AlertState, u64)>,
}

impl AlertTracker {
    pub fn new(cfg: TemporalConfig) -> Self {
        Self {
            cfg,
            streams: BTreeMap::new(),
        }
    }

    pub fn observe(
        &mut self,
        assessment: &ThreatAssessment,
    ) -> Result<Option<AlertEvent>, OutOfOrderFrame> {
        let cfg = self.cfg;
        let slot = self
            .streams
            .entry(assessment.stream_id.clone())
            .or_default();
        let (next, event) = step(&slot.0, assessment, &cfg)?;
        *slot = (next, assessment.ts_ms);
        Ok(event)
    }

    pub fn state(&self, stream_id: &str) -> Option<&AlertState> {
        self.streams.get(stream_id).map(|(s, _)| s)
    }

    /// Closes every open alert, stamping each with its stream's last frame
    /// time. Streams are visited in id order.
    pub fn flush_all(&mut self) -> Vec<AlertEvent> {
        let mut events = Vec::new();
        for (stream_id, (state, last_ts)) in self.streams.iter_mut() {
            let (next, event) = flush(state, stream_id, *last_ts);
            *state = next;
            events.extend(event);
        }
        events
    }
}

//! Per-patient reward model and per-tick reward accounting.
//!
//! A patient earns a severity-dependent reward when it reaches a hospital,
//! scaled by how much of its survival window is left (`PT`) and by the
//! fraction of its required resource kinds the hospital could supply (`PQ`).
//! Deaths are penalised, with a smaller, level-dependent penalty when the
//! patient dies after being dispatched.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{EventKind, PatientStatus, SimState};
use crate::types::{PatientId, SeverityCode};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RewardError {
    #[error("survival window must be positive, got {0}")]
    NonPositiveWindow(f64),
    #[error("elapsed time must be non-negative, got {0}")]
    NegativeElapsed(f64),
    #[error("matched count {q} exceeds required count {required}")]
    MatchExceedsRequirement { q: u32, required: u32 },
    #[error("hospital level must be 1..=3, got {0:?}")]
    Level(Option<u8>),
    #[error("case {case:?} is inconsistent with severity {severity}")]
    Inconsistent { case: RewardCase, severity: SeverityCode },
    #[error("penalty factor {0} outside [0, 1]")]
    Factor(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardCase {
    /// Died before being dispatched.
    NewlyDeceased,
    Critical,
    Severe,
    Minor,
    /// Died while being transported.
    ExpiredPostAssignment,
}

impl RewardCase {
    pub const ALL: [RewardCase; 5] = [
        RewardCase::NewlyDeceased,
        RewardCase::Critical,
        RewardCase::Severe,
        RewardCase::Minor,
        RewardCase::ExpiredPostAssignment,
    ];

    /// The arrival case for a live patient of this severity.
    pub fn arrival(severity: SeverityCode) -> Option<RewardCase> {
        match severity {
            SeverityCode::Critical => Some(Self::Critical),
            SeverityCode::Severe => Some(Self::Severe),
            SeverityCode::Minor => Some(Self::Minor),
            SeverityCode::Deceased => None,
        }
    }
}

/// `PT = max(0, 1 - t/T)`. An unbounded window (`None`) yields 1.
pub fn time_penalty(elapsed: f64, window: Option<f64>) -> Result<f64, RewardError> {
    if elapsed.is_nan() || elapsed < 0.0 {
        return Err(RewardError::NegativeElapsed(elapsed));
    }
    match window {
        None => Ok(1.0),
        Some(w) if w > 0.0 => Ok((1.0 - elapsed / w).max(0.0)),
        Some(w) => Err(RewardError::NonPositiveWindow(w)),
    }
}

/// `PQ = q/Q`, and 1 when nothing is required.
pub fn resource_penalty(q: u32, required: u32) -> Result<f64, RewardError> {
    if q > required {
        return Err(RewardError::MatchExceedsRequirement { q, required });
    }
    if required == 0 {
        return Ok(1.0);
    }
    Ok(f64::from(q) / f64::from(required))
}

fn level_index(level: Option<u8>) -> Result<usize, RewardError> {
    match level {
        Some(l @ 1..=3) => Ok(usize::from(l) - 1),
        other => Err(RewardError::Level(other)),
    }
}

fn check_factor(x: f64) -> Result<f64, RewardError> {
    if (0.0..=1.0).contains(&x) {
        Ok(x)
    } else {
        Err(RewardError::Factor(x))
    }
}

// Time-term coefficients by level 1, 2, 3.
const CRITICAL_PT: [f64; 3] = [300.0, 150.0, 0.0];
const SEVERE_PT: [f64; 3] = [200.0, 200.0, 100.0];
const MINOR_PT: [f64; 3] = [0.0, 50.0, 100.0];
const EXPIRED_POST_ASSIGNMENT: [f64; 3] = [-300.0, -200.0, -100.0];

/// Reward for one patient. `level` is ignored for `NewlyDeceased`.
pub fn patient_reward(
    case: RewardCase,
    severity: SeverityCode,
    level: Option<u8>,
    pt: f64,
    pq: f64,
) -> Result<f64, RewardError> {
    let inconsistent = || RewardError::Inconsistent { case, severity };
    match case {
        RewardCase::NewlyDeceased => match severity {
            SeverityCode::Critical => Ok(-600.0),
            SeverityCode::Severe => Ok(-400.0),
            _ => Err(inconsistent()),
        },
        RewardCase::ExpiredPostAssignment => {
            if !severity.is_time_critical() {
                return Err(inconsistent());
            }
            Ok(EXPIRED_POST_ASSIGNMENT[level_index(level)?])
        }
        RewardCase::Critical | RewardCase::Severe | RewardCase::Minor => {
            if RewardCase::arrival(severity) != Some(case) {
                return Err(inconsistent());
            }
            let (pt, pq) = (check_factor(pt)?, check_factor(pq)?);
            let h = level_index(level)?;
            let (base, time) = match case {
                RewardCase::Critical => (300.0, CRITICAL_PT[h]),
                RewardCase::Severe => (200.0, SEVERE_PT[h]),
                _ => (100.0, MINOR_PT[h]),
            };
            Ok(base * pq + time * pt)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientReward {
    pub patient_id: PatientId,
    pub reward: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pq: Option<f64>,
    pub case: RewardCase,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub per_patient: Vec<PatientReward>,
    pub total: f64,
}

impl RewardBreakdown {
    fn push(&mut self, entry: PatientReward) {
        self.total += entry.reward;
        self.per_patient.push(entry);
    }

    pub fn extend(&mut self, other: RewardBreakdown) {
        for e in other.per_patient {
            self.push(e);
        }
    }
}

/// Scores the arrivals and deaths in `events`, which must have been produced
/// while moving from `pre` to `post`.
pub fn transition_reward(pre: &SimState, post: &SimState, events: &[crate::engine::Event]) -> RewardBreakdown {
    let scenario = post.scenario();
    let mut out = RewardBreakdown::default();
    for e in events {
        match &e.kind {
            EventKind::Arrived { patient_id, elapsed, .. } => {
                let Some(pi) = scenario.patient_index(*patient_id) else { continue };
                let patient = &scenario.patients[pi];
                let Some(a) = post.patients()[pi].assignment else { continue };
                let Some(case) = RewardCase::arrival(patient.severity) else { continue };
                let level = scenario.hospitals[a.hospital_idx].level;
                let pt = time_penalty(f64::from(*elapsed), patient.survival_window.map(f64::from))
                    .expect("validated window");
                let pq = resource_penalty(a.matched.count_nonzero(), patient.required_count()).expect("matched ⊆ required");
                let reward = patient_reward(case, patient.severity, Some(level), pt, pq).expect("validated level");
                out.push(PatientReward { patient_id: *patient_id, reward, pt: Some(pt), pq: Some(pq), case });
            }
            EventKind::Died { patient_id, severity, hospital_id, .. } => {
                let Some(pi) = scenario.patient_index(*patient_id) else { continue };
                let was_dispatched = pre
                    .patients()
                    .get(pi)
                    .map(|p| matches!(p.status, PatientStatus::InTransit | PatientStatus::Assigned))
                    .unwrap_or(hospital_id.is_some());
                let (case, level) = if was_dispatched {
                    let level = hospital_id.and_then(|h| scenario.hospital_index(h)).map(|j| scenario.hospitals[j].level);
                    (RewardCase::ExpiredPostAssignment, level)
                } else {
                    (RewardCase::NewlyDeceased, None)
                };
                let reward = patient_reward(case, *severity, level, 0.0, 0.0).expect("time-critical death");
                out.push(PatientReward { patient_id: *patient_id, reward, pt: None, pq: None, case });
            }
            _ => {}
        }
    }
    out
}

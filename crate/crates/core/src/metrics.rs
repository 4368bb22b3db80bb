//! Outcome measures computed from an event log: completion time, mortality
//! rate, and resource match rate.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{Event, EventKind};
use crate::types::{HospitalId, PatientId, ResourceVector, SeverityCode};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("malformed log: {0}")]
    MalformedLog(String),
}

fn malformed(msg: impl Into<String>) -> MetricsError {
    MetricsError::MalformedLog(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompletionBasis {
    /// Interactive sessions: real seconds between start and the last decision.
    WallClockSeconds,
    /// Headless runs: simulated minutes, one per tick.
    SimulatedMinutes,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatientOutcome {
    Admitted,
    Deceased,
    Unresolved,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRow {
    pub patient_id: PatientId,
    pub severity: Option<SeverityCode>,
    pub outcome: PatientOutcome,
    pub hospital_id: Option<HospitalId>,
    pub revealed_at: Option<u32>,
    pub resolved_at: Option<u32>,
    pub required: u32,
    pub matched: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeReport {
    pub completion_time: f64,
    pub completion_basis: CompletionBasis,
    pub mortality_rate: f64,
    pub match_rate: f64,
    pub total_patients: u32,
    pub deaths: u32,
    pub admitted: u32,
    pub patients: Vec<PatientRow>,
}

fn session_start(log: &[Event]) -> Result<(u32, u32), MetricsError> {
    log.iter()
        .find_map(|e| match e.kind {
            EventKind::SessionStarted { patient_count, .. } => Some((e.time, patient_count)),
            _ => None,
        })
        .ok_or_else(|| malformed("missing session_started marker"))
}

/// `T_end - T_start`, where `T_end` is the last assignment or, failing that,
/// the end of the session. Units are those of the event timestamps.
pub fn completion_time(log: &[Event]) -> Result<u32, MetricsError> {
    let (start, _) = session_start(log)?;
    let last_assignment = log.iter().rev().find(|e| matches!(e.kind, EventKind::Assigned { .. }));
    let end = match last_assignment {
        Some(e) => e.time,
        None => log
            .iter()
            .rev()
            .find(|e| matches!(e.kind, EventKind::SessionEnded { .. }))
            .ok_or_else(|| malformed("no assignment and no session_ended marker"))?
            .time,
    };
    Ok(end.saturating_sub(start))
}

/// Deaths as a percentage of the whole roster.
pub fn mortality_rate(log: &[Event]) -> Result<f64, MetricsError> {
    let (_, total) = session_start(log)?;
    let deaths = log.iter().filter(|e| matches!(e.kind, EventKind::Died { .. })).count();
    if total == 0 {
        return Ok(0.0);
    }
    Ok(deaths as f64 / f64::from(total) * 100.0)
}

/// Final (required, matched) facts of every patient that was admitted.
fn admitted_matches(log: &[Event]) -> Result<BTreeMap<PatientId, (u32, u32)>, MetricsError> {
    let mut assigned: BTreeMap<PatientId, (ResourceVector, ResourceVector)> = BTreeMap::new();
    let mut admitted = Vec::new();
    for e in log {
        match &e.kind {
            EventKind::Assigned { patient_id, required, matched, .. } => {
                assigned.insert(*patient_id, (*required, *matched));
            }
            EventKind::AssignmentCancelled { patient_id, .. } => {
                assigned.remove(patient_id);
            }
            EventKind::Arrived { patient_id, .. } => admitted.push(*patient_id),
            _ => {}
        }
    }
    admitted
        .into_iter()
        .map(|id| {
            let (req, m) = assigned
                .get(&id)
                .ok_or_else(|| malformed(format!("patient {id} arrived without an assignment")))?;
            Ok((id, (req.count_nonzero(), m.count_nonzero())))
        })
        .collect()
}

/// Mean over admitted patients of matched/required, as a percentage.
/// Patients with no requirements count as fully matched. An empty set scores 0.
pub fn match_rate(log: &[Event]) -> Result<f64, MetricsError> {
    let per_patient = admitted_matches(log)?;
    if per_patient.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = per_patient
        .values()
        .map(|&(req, m)| if req == 0 { 1.0 } else { f64::from(m) / f64::from(req) })
        .sum();
    Ok(sum / per_patient.len() as f64 * 100.0)
}

fn patient_rows(log: &[Event]) -> Vec<PatientRow> {
    let mut rows: BTreeMap<PatientId, PatientRow> = BTreeMap::new();
    let blank = |id| PatientRow {
        patient_id: id,
        severity: None,
        outcome: PatientOutcome::Unresolved,
        hospital_id: None,
        revealed_at: None,
        resolved_at: None,
        required: 0,
        matched: 0,
    };
    for e in log {
        let Some(id) = e.kind.patient_id() else { continue };
        let row = rows.entry(id).or_insert_with(|| blank(id));
        match &e.kind {
            EventKind::PatientRevealed { severity, .. } => {
                row.severity = Some(*severity);
                row.revealed_at = Some(e.time);
            }
            EventKind::Assigned { hospital_id, required, matched, .. } => {
                row.hospital_id = Some(*hospital_id);
                row.required = required.count_nonzero();
                row.matched = matched.count_nonzero();
            }
            EventKind::AssignmentCancelled { .. } => {
                row.hospital_id = None;
                row.required = 0;
                row.matched = 0;
            }
            EventKind::Arrived { .. } => {
                row.outcome = PatientOutcome::Admitted;
                row.resolved_at = Some(e.time);
            }
            EventKind::Died { .. } => {
                row.outcome = PatientOutcome::Deceased;
                row.resolved_at = Some(e.time);
            }
            _ => {}
        }
    }
    rows.into_values().collect()
}

/// All three measures plus per-patient rows, on the simulated-minute basis.
pub fn outcome_report(log: &[Event]) -> Result<OutcomeReport, MetricsError> {
    let (_, total) = session_start(log)?;
    let patients = patient_rows(log);
    let deaths = patients.iter().filter(|r| r.outcome == PatientOutcome::Deceased).count() as u32;
    let admitted = patients.iter().filter(|r| r.outcome == PatientOutcome::Admitted).count() as u32;
    Ok(OutcomeReport {
        completion_time: f64::from(completion_time(log)?),
        completion_basis: CompletionBasis::SimulatedMinutes,
        mortality_rate: mortality_rate(log)?,
        match_rate: match_rate(log)?,
        total_patients: total,
        deaths,
        admitted,
        patients,
    })
}

impl OutcomeReport {
    /// Summary line followed by one row per patient, comma-separated.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str("completion_time,completion_basis,mortality_rate,match_rate,total_patients,deaths,admitted\n");
        let basis = match self.completion_basis {
            CompletionBasis::WallClockSeconds => "wall_clock_seconds",
            CompletionBasis::SimulatedMinutes => "simulated_minutes",
        };
        let _ = writeln!(
            out,
            "{},{},{:.2},{:.2},{},{},{}",
            self.completion_time, basis, self.mortality_rate, self.match_rate, self.total_patients, self.deaths, self.admitted
        );
        out.push('\n');
        out.push_str("patient_id,severity,outcome,hospital_id,revealed_at,resolved_at,required,matched\n");
        let opt = |v: Option<u32>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.patients {
            let outcome = match r.outcome {
                PatientOutcome::Admitted => "admitted",
                PatientOutcome::Deceased => "deceased",
                PatientOutcome::Unresolved => "unresolved",
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.patient_id.0,
                r.severity.map(|s| s.to_string()).unwrap_or_default(),
                outcome,
                opt(r.hospital_id.map(|h| h.0)),
                opt(r.revealed_at),
                opt(r.resolved_at),
                r.required,
                r.matched
            );
        }
        out
    }
}

//! Reconstructing a session from its scenario and the commands applied to it.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{AssignmentSource, EndReason, Event, EventKind, InvalidScenario, Rejection, SimState};
use crate::types::{HospitalId, PatientId, Scenario};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Command {
    Assign { patient: PatientId, hospital: HospitalId, source: AssignmentSource },
    Cancel { patient: PatientId },
    Annotate { event: EventKind },
    End,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedCommand {
    pub at: u32,
    #[serde(flatten)]
    pub command: Command,
}

/// Commands in application order plus the clock the session ended on.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ActionLog {
    pub commands: Vec<TimedCommand>,
    pub final_clock: u32,
}

impl ActionLog {
    pub fn push(&mut self, at: u32, command: Command) {
        self.commands.push(TimedCommand { at, command });
    }

    /// Recovers the command sequence from an exported event log.
    ///
    /// `final_clock` defaults to the timestamp of the last event, which is
    /// exact for any log that ends in `session_ended`.
    pub fn from_events(events: &[Event], final_clock: Option<u32>) -> ActionLog {
        let mut log = ActionLog::default();
        for e in events {
            let command = match &e.kind {
                EventKind::Assigned { patient_id, hospital_id, source, .. } => {
                    Command::Assign { patient: *patient_id, hospital: *hospital_id, source: *source }
                }
                EventKind::AssignmentCancelled { patient_id, .. } => Command::Cancel { patient: *patient_id },
                kind if kind.is_annotation() => Command::Annotate { event: kind.clone() },
                EventKind::SessionEnded { reason: EndReason::Manual } => Command::End,
                _ => continue,
            };
            log.push(e.time, command);
        }
        log.final_clock = final_clock.unwrap_or_else(|| events.last().map_or(0, |e| e.time));
        log
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ReplayError {
    #[error(transparent)]
    Invalid(#[from] InvalidScenario),
    #[error("command {index} at t={at} precedes the clock t={clock}")]
    OutOfOrder { index: usize, at: u32, clock: u32 },
    #[error("command {index} at t={at} was rejected: {rejection}")]
    Rejected { index: usize, at: u32, rejection: Rejection },
}

fn advance_to(state: &mut SimState, t: u32) {
    if t > state.clock() && !state.is_terminal() {
        state.step(t - state.clock()).expect("positive step");
    }
}

/// Re-runs `actions` against a fresh session for `scenario`.
pub fn replay(scenario: Arc<Scenario>, actions: &ActionLog) -> Result<SimState, ReplayError> {
    let mut state = SimState::new(scenario)?;
    for (index, tc) in actions.commands.iter().enumerate() {
        advance_to(&mut state, tc.at);
        if tc.at < state.clock() {
            return Err(ReplayError::OutOfOrder { index, at: tc.at, clock: state.clock() });
        }
        let rejected = |rejection| ReplayError::Rejected { index, at: tc.at, rejection };
        match &tc.command {
            Command::Assign { patient, hospital, source } => {
                state.assign(*patient, *hospital, *source).map_err(rejected)?;
            }
            Command::Cancel { patient } => {
                state.cancel(*patient).map_err(rejected)?;
            }
            Command::Annotate { event } => {
                state.annotate(event.clone()).map_err(rejected)?;
            }
            Command::End => {
                state.end();
            }
        }
    }
    advance_to(&mut state, actions.final_clock);
    Ok(state)
}

use serde::{Deserialize, Serialize};

use crate::types::{HospitalId, PatientId, ResourceVector, SeverityCode, SeverityColor};

/// Lifecycle of a patient inside a session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatientStatus {
    Hidden,
    Unassigned,
    Assigned,
    InTransit,
    Admitted,
    Deceased,
}

impl PatientStatus {
    pub fn is_resolved(self) -> bool {
        matches!(self, Self::Admitted | Self::Deceased)
    }
}

/// Who initiated an assignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignmentSource {
    Manual,
    SuggestionAccepted,
    Policy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndReason {
    AllResolved,
    HorizonReached,
    Manual,
}

/// Why a suggestion points where it does.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestionRationale {
    pub policy: String,
    pub projected_reward: f64,
    pub time_penalty: f64,
    pub resource_penalty: f64,
    pub travel_min: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    SessionStarted {
        scenario_id: String,
        patient_count: u32,
        hospital_count: u32,
    },
    PatientRevealed {
        patient_id: PatientId,
        severity: SeverityCode,
    },
    AmbulanceAvailable {
        available: u32,
        fleet_size: u32,
    },
    CapacityChanged {
        hospital_id: HospitalId,
        effective: ResourceVector,
    },
    Assigned {
        patient_id: PatientId,
        hospital_id: HospitalId,
        required: ResourceVector,
        matched: ResourceVector,
        source: AssignmentSource,
    },
    Departed {
        patient_id: PatientId,
        hospital_id: HospitalId,
        arrival_time: u32,
    },
    Arrived {
        patient_id: PatientId,
        hospital_id: HospitalId,
        /// Minutes from reveal to arrival.
        elapsed: u32,
    },
    AssignmentCancelled {
        patient_id: PatientId,
        hospital_id: HospitalId,
    },
    Died {
        patient_id: PatientId,
        severity: SeverityCode,
        prior_status: PatientStatus,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        hospital_id: Option<HospitalId>,
    },
    SuggestionIssued {
        suggestion_id: u64,
        patient_id: PatientId,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        hospital_id: Option<HospitalId>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rationale: Option<SuggestionRationale>,
    },
    SuggestionAccepted {
        suggestion_id: u64,
        patient_id: PatientId,
        hospital_id: HospitalId,
    },
    SuggestionDeclined {
        suggestion_id: u64,
        patient_id: PatientId,
    },
    SessionEnded {
        reason: EndReason,
    },
    Warning {
        message: String,
    },
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::SessionStarted { .. } => "session_started",
            Self::PatientRevealed { .. } => "patient_revealed",
            Self::AmbulanceAvailable { .. } => "ambulance_available",
            Self::CapacityChanged { .. } => "capacity_changed",
            Self::Assigned { .. } => "assigned",
            Self::Departed { .. } => "departed",
            Self::Arrived { .. } => "arrived",
            Self::AssignmentCancelled { .. } => "assignment_cancelled",
            Self::Died { .. } => "died",
            Self::SuggestionIssued { .. } => "suggestion_issued",
            Self::SuggestionAccepted { .. } => "suggestion_accepted",
            Self::SuggestionDeclined { .. } => "suggestion_declined",
            Self::SessionEnded { .. } => "session_ended",
            Self::Warning { .. } => "warning",
        }
    }

    pub fn patient_id(&self) -> Option<PatientId> {
        match self {
            Self::PatientRevealed { patient_id, .. }
            | Self::Assigned { patient_id, .. }
            | Self::Departed { patient_id, .. }
            | Self::Arrived { patient_id, .. }
            | Self::AssignmentCancelled { patient_id, .. }
            | Self::Died { patient_id, .. }
            | Self::SuggestionIssued { patient_id, .. }
            | Self::SuggestionAccepted { patient_id, .. }
            | Self::SuggestionDeclined { patient_id, .. } => Some(*patient_id),
            _ => None,
        }
    }

    /// Suggestion bookkeeping events carry no engine state change.
    pub fn is_annotation(&self) -> bool {
        matches!(
            self,
            Self::SuggestionIssued { .. } | Self::SuggestionAccepted { .. } | Self::SuggestionDeclined { .. }
        )
    }
}

/// A timestamped, sequenced log record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    /// Simulated minutes since incident start.
    pub time: u32,
    #[serde(flatten)]
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub severity_color: Option<SeverityColor>,
}

impl Event {
    pub fn new(seq: u64, time: u32, kind: EventKind, severity: Option<SeverityCode>) -> Self {
        let severity_color = match &kind {
            EventKind::Died { .. } => Some(SeverityColor::Gray),
            _ => severity.map(SeverityCode::color),
        };
        Self { seq, time, kind, severity_color }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("event serializes")
    }
}

/// Newline-delimited JSON, one event per line.
pub fn events_to_ndjson(events: &[Event]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&e.to_json_line());
        out.push('\n');
    }
    out
}

pub fn events_from_ndjson(text: &str) -> Result<Vec<Event>, serde_json::Error> {
    text.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_shape_is_flat_and_tagged() {
        let e = Event::new(
            3,
            12,
            EventKind::Assigned {
                patient_id: PatientId(4),
                hospital_id: HospitalId(2),
                required: ResourceVector([1, 1, 0, 0, 0, 0, 0, 0]),
                matched: ResourceVector([0, 1, 0, 0, 0, 0, 0, 0]),
                source: AssignmentSource::Manual,
            },
            Some(SeverityCode::Critical),
        );
        let line = e.to_json_line();
        assert_eq!(
            line,
            r#"{"seq":3,"time":12,"kind":"assigned","patient_id":4,"hospital_id":2,"required":[1,1,0,0,0,0,0,0],"matched":[0,1,0,0,0,0,0,0],"source":"manual","severity_color":"red"}"#
        );
        let back: Event = serde_json::from_str(&line).unwrap();
        assert_eq!(back, e);
    }

    #[test]
    fn deaths_are_gray() {
        let e = Event::new(
            0,
            61,
            EventKind::Died {
                patient_id: PatientId(1),
                severity: SeverityCode::Critical,
                prior_status: PatientStatus::Unassigned,
                hospital_id: None,
            },
            Some(SeverityCode::Critical),
        );
        assert_eq!(e.severity_color, Some(SeverityColor::Gray));
    }

    #[test]
    fn ndjson_round_trip() {
        let events = vec![
            Event::new(0, 0, EventKind::SessionStarted { scenario_id: "x".into(), patient_count: 1, hospital_count: 1 }, None),
            Event::new(1, 5, EventKind::SessionEnded { reason: EndReason::Manual }, None),
        ];
        let text = events_to_ndjson(&events);
        assert_eq!(text.lines().count(), 2);
        assert_eq!(events_from_ndjson(&text).unwrap(), events);
        assert_eq!(events_to_ndjson(&events_from_ndjson(&text).unwrap()), text);
    }
}

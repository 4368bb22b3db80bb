//! Structural checks on scenarios. Violations are reported as data.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::generate::SigmoidParams;
use crate::types::{Scenario, SeverityCode, SCHEMA_VERSION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "code", rename_all = "snake_case")]
pub enum Violation {
    SchemaVersion { found: u32 },
    NoHospitals,
    NonPositiveHorizon,
    DuplicatePatientId { patient: u32 },
    DuplicateHospitalId { hospital: u32 },
    HospitalLevel { hospital: u32, level: u8 },
    NonBinaryRequirements { patient: u32 },
    InitialSeverity { patient: u32, severity: SeverityCode },
    SurvivalWindow { patient: u32 },
    RevealAfterHorizon { patient: u32, reveal_time: u32 },
    TravelRows { expected: usize, found: usize },
    TravelColumns { row: usize, expected: usize, found: usize },
    Sigmoid { schedule: String, reason: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::SchemaVersion { found } => write!(f, "unsupported schema_version {found}"),
            Self::NoHospitals => f.write_str("scenario has no hospitals"),
            Self::NonPositiveHorizon => f.write_str("horizon_min must be positive"),
            Self::DuplicatePatientId { patient } => write!(f, "duplicate patient id {patient}"),
            Self::DuplicateHospitalId { hospital } => write!(f, "duplicate hospital id {hospital}"),
            Self::HospitalLevel { hospital, level } => {
                write!(f, "hospital {hospital} has level {level}, expected 1..=3")
            }
            Self::NonBinaryRequirements { patient } => {
                write!(f, "patient {patient} has a non-binary requirement vector")
            }
            Self::InitialSeverity { patient, severity } => {
                write!(f, "patient {patient} starts with severity {severity}")
            }
            Self::SurvivalWindow { patient } => {
                write!(f, "patient {patient} is severe/critical but has no positive survival window")
            }
            Self::RevealAfterHorizon { patient, reveal_time } => {
                write!(f, "patient {patient} revealed at {reveal_time}, after the horizon")
            }
            Self::TravelRows { expected, found } => {
                write!(f, "travel matrix has {found} rows, expected {expected}")
            }
            Self::TravelColumns { row, expected, found } => {
                write!(f, "travel matrix row {row} has {found} columns, expected {expected}")
            }
            Self::Sigmoid { schedule, reason } => write!(f, "{schedule} schedule: {reason}"),
        }
    }
}

pub(crate) fn sigmoid_problem(p: &SigmoidParams) -> Option<String> {
    if !p.steepness.is_finite() || p.steepness <= 0.0 {
        return Some(format!("steepness must be positive, got {}", p.steepness));
    }
    if !p.midpoint.is_finite() {
        return Some("midpoint must be finite".into());
    }
    if !(0.0 <= p.floor && p.floor < p.ceiling && p.ceiling <= 1.0) {
        return Some(format!("need 0 <= floor < ceiling <= 1, got [{}, {}]", p.floor, p.ceiling));
    }
    None
}

/// Returns every invariant breach; an empty list means the scenario is usable.
pub fn validate_scenario(scenario: &Scenario) -> Vec<Violation> {
    let mut out = Vec::new();
    if scenario.schema_version != SCHEMA_VERSION {
        out.push(Violation::SchemaVersion { found: scenario.schema_version });
    }
    if scenario.hospitals.is_empty() {
        out.push(Violation::NoHospitals);
    }
    if scenario.horizon_min == 0 {
        out.push(Violation::NonPositiveHorizon);
    }

    let mut seen = HashSet::new();
    for h in &scenario.hospitals {
        if !seen.insert(h.id) {
            out.push(Violation::DuplicateHospitalId { hospital: h.id.0 });
        }
        if !(1..=3).contains(&h.level) {
            out.push(Violation::HospitalLevel { hospital: h.id.0, level: h.level });
        }
    }

    let mut seen = HashSet::new();
    for p in &scenario.patients {
        if !seen.insert(p.id) {
            out.push(Violation::DuplicatePatientId { patient: p.id.0 });
        }
        if !p.requirements.is_binary() {
            out.push(Violation::NonBinaryRequirements { patient: p.id.0 });
        }
        if p.severity == SeverityCode::Deceased {
            out.push(Violation::InitialSeverity { patient: p.id.0, severity: p.severity });
        }
        if p.severity.is_time_critical() && !matches!(p.survival_window, Some(w) if w > 0) {
            out.push(Violation::SurvivalWindow { patient: p.id.0 });
        }
        if p.reveal_time >= scenario.horizon_min && scenario.horizon_min > 0 {
            out.push(Violation::RevealAfterHorizon { patient: p.id.0, reveal_time: p.reveal_time });
        }
    }

    let rows = scenario.travel_matrix.rows();
    if rows != scenario.patients.len() {
        out.push(Violation::TravelRows { expected: scenario.patients.len(), found: rows });
    }
    for (i, row) in scenario.travel_matrix.0.iter().enumerate() {
        if row.len() != scenario.hospitals.len() {
            out.push(Violation::TravelColumns { row: i, expected: scenario.hospitals.len(), found: row.len() });
        }
    }

    let schedules = [
        ("patients", &scenario.reveal_params.patients),
        ("ambulances", &scenario.reveal_params.ambulances),
        ("capacity", &scenario.reveal_params.capacity),
    ];
    for (name, params) in schedules {
        if let Some(reason) = sigmoid_problem(params) {
            out.push(Violation::Sigmoid { schedule: name.into(), reason });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{generate_scenario, GeneratorConfig};

    fn sample() -> Scenario {
        generate_scenario(&GeneratorConfig::default()).unwrap()
    }

    #[test]
    fn generated_scenario_is_clean() {
        assert_eq!(validate_scenario(&sample()), vec![]);
    }

    #[test]
    fn bad_level_names_the_hospital() {
        let mut s = sample();
        s.hospitals[1].level = 4;
        let id = s.hospitals[1].id;
        let v = validate_scenario(&s);
        assert_eq!(v, vec![Violation::HospitalLevel { hospital: id.0, level: 4 }]);
        assert!(v[0].to_string().contains(&id.0.to_string()));
    }

    #[test]
    fn short_travel_matrix_is_a_dimension_violation() {
        let mut s = sample();
        s.travel_matrix.0.pop();
        let n = s.patients.len();
        assert_eq!(validate_scenario(&s), vec![Violation::TravelRows { expected: n, found: n - 1 }]);
    }

    #[test]
    fn severe_patient_needs_a_window() {
        let mut s = sample();
        let idx = s.patients.iter().position(|p| p.severity.is_time_critical()).unwrap();
        s.patients[idx].survival_window = None;
        assert!(matches!(validate_scenario(&s).as_slice(), [Violation::SurvivalWindow { .. }]));
        s.patients[idx].survival_window = Some(0);
        assert!(matches!(validate_scenario(&s).as_slice(), [Violation::SurvivalWindow { .. }]));
    }

    #[test]
    fn no_hospitals_and_zero_horizon() {
        let mut s = sample();
        s.hospitals.clear();
        s.travel_matrix.0.iter_mut().for_each(|r| r.clear());
        s.horizon_min = 0;
        let v = validate_scenario(&s);
        assert!(v.contains(&Violation::NoHospitals));
        assert!(v.contains(&Violation::NonPositiveHorizon));
    }
}

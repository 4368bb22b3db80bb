//! Myopic suggester: best projected arrival reward for one patient.

use serde::{Deserialize, Serialize};

use crate::engine::{PatientStatus, Rejection, SimState};
use crate::matching::ResourceMatch;
use crate::reward::{patient_reward, resource_penalty, time_penalty, RewardCase};
use crate::types::{HospitalId, PatientId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Suggestion {
    pub patient_id: PatientId,
    pub hospital_id: HospitalId,
    pub projected_reward: f64,
    pub time_penalty: f64,
    pub resource_penalty: f64,
    pub travel_min: u32,
}

/// Reward the patient would earn on arrival if dispatched now with `m`.
pub fn projected_reward(state: &SimState, patient_idx: usize, hospital_idx: usize, m: &ResourceMatch) -> (f64, f64, f64) {
    let scenario = state.scenario();
    let p = &scenario.patients[patient_idx];
    let travel = scenario.travel(patient_idx, hospital_idx);
    let elapsed = f64::from(state.waited(patient_idx).unwrap_or(0) + travel);
    let pt = time_penalty(elapsed, p.survival_window.map(f64::from)).expect("validated window");
    let pq = resource_penalty(m.q, p.required_count()).expect("matched within required");
    let case = RewardCase::arrival(p.severity).expect("live patient");
    let level = scenario.hospitals[hospital_idx].level;
    let r = patient_reward(case, p.severity, Some(level), pt, pq).expect("validated level");
    (r, pt, pq)
}

/// Hospital indices ordered by (travel time, id): the tie-break order.
pub fn hospital_order(state: &SimState, patient_idx: usize) -> Vec<usize> {
    let scenario = state.scenario();
    let mut order: Vec<usize> = (0..scenario.hospitals.len()).collect();
    order.sort_by_key(|&h| (scenario.travel(patient_idx, h), scenario.hospitals[h].id));
    order
}

/// Admissible hospital with the highest projected reward; ties go to the
/// shorter trip, then the lower id. `None` when no hospital is admissible.
pub fn greedy_suggest(state: &SimState, patient: PatientId) -> Result<Option<Suggestion>, Rejection> {
    let pi = state.scenario().patient_index(patient).ok_or(Rejection::PatientNotFound { patient_id: patient })?;
    Ok(suggest_idx(state, pi))
}

pub(crate) fn suggest_idx(state: &SimState, pi: usize) -> Option<Suggestion> {
    let scenario = state.scenario();
    let mut best: Option<Suggestion> = None;
    for hi in hospital_order(state, pi) {
        let Ok(m) = state.check_assignment(pi, hi) else { continue };
        let (r, pt, pq) = projected_reward(state, pi, hi, &m);
        if best.is_none_or(|b| r > b.projected_reward) {
            best = Some(Suggestion {
                patient_id: scenario.patients[pi].id,
                hospital_id: scenario.hospitals[hi].id,
                projected_reward: r,
                time_penalty: pt,
                resource_penalty: pq,
                travel_min: scenario.travel(pi, hi),
            });
        }
    }
    best
}

/// Unassigned patients, most severe first, then longest waiting, then id.
pub fn triage_order(state: &SimState) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..state.patients().len())
        .filter(|&i| state.patients()[i].status == PatientStatus::Unassigned)
        .collect();
    idx.sort_by_key(|&i| {
        let p = &state.patients()[i];
        (std::cmp::Reverse(p.severity), std::cmp::Reverse(state.waited(i).unwrap_or(0)), p.id)
    });
    idx
}

/// The greedy policy's move: the first patient in triage order that has an
/// admissible hospital, sent to its suggested hospital.
pub fn greedy_action(state: &SimState) -> Option<Suggestion> {
    triage_order(state).into_iter().find_map(|pi| suggest_idx(state, pi))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::fixtures::ScenarioBuilder;
    use crate::types::SeverityCode;

    #[test]
    fn critical_prefers_level_one_even_when_far() {
        // Both hospitals match everything, so PQ=1 either way.
        let s = ScenarioBuilder::new()
            .patient(SeverityCode::Critical, [0, 1, 0, 0, 0, 0, 0, 0], 0)
            .hospital(1, [0, 2, 0, 0, 0, 0, 0, 0], 30)
            .hospital(3, [0, 2, 0, 0, 0, 0, 0, 0], 5)
            .build();
        let state = SimState::new(Arc::new(s)).unwrap();
        let sug = greedy_suggest(&state, PatientId(1)).unwrap().unwrap();
        // Level 1: 300 + 300*(1-30/60) = 450. Level 3: 300 + 0 = 300.
        assert_eq!(sug.hospital_id, HospitalId(1));
        assert_eq!(sug.projected_reward, 450.0);
        assert_eq!(sug.time_penalty, 0.5);
    }

    #[test]
    fn ties_break_on_travel_then_id() {
        let s = ScenarioBuilder::new()
            .patient(SeverityCode::Minor, [0, 1, 0, 0, 0, 0, 0, 0], 0)
            .hospital(1, [0, 2, 0, 0, 0, 0, 0, 0], 20)
            .hospital(1, [0, 2, 0, 0, 0, 0, 0, 0], 10)
            .hospital(1, [0, 2, 0, 0, 0, 0, 0, 0], 10)
            .build();
        let state = SimState::new(Arc::new(s)).unwrap();
        // Minor at level 1 scores 100*PQ regardless of travel.
        let sug = greedy_suggest(&state, PatientId(1)).unwrap().unwrap();
        assert_eq!(sug.hospital_id, HospitalId(2));
    }

    #[test]
    fn none_when_nothing_admissible() {
        let s = ScenarioBuilder::new()
            .patient(SeverityCode::Severe, [0, 1, 0, 0, 0, 0, 0, 0], 0)
            .hospital(1, [0, 0, 0, 0, 0, 0, 0, 0], 20)
            .build();
        let state = SimState::new(Arc::new(s)).unwrap();
        assert_eq!(greedy_suggest(&state, PatientId(1)).unwrap(), None);
        assert!(greedy_suggest(&state, PatientId(9)).is_err());
    }

    #[test]
    fn triage_puts_critical_first() {
        let s = ScenarioBuilder::new()
            .patient(SeverityCode::Minor, [0, 1, 0, 0, 0, 0, 0, 0], 0)
            .patient(SeverityCode::Critical, [0, 1, 0, 0, 0, 0, 0, 0], 0)
            .patient(SeverityCode::Severe, [0, 1, 0, 0, 0, 0, 0, 0], 0)
            .hospital(1, [0, 5, 0, 0, 0, 0, 0, 0], 20)
            .build();
        let state = SimState::new(Arc::new(s)).unwrap();
        assert_eq!(triage_order(&state), vec![1, 2, 0]);
        assert_eq!(greedy_action(&state).unwrap().patient_id, PatientId(2));
    }
}

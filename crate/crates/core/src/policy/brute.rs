//! Exhaustive joint assignment for small instances, used as a test oracle.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{AssignmentSource, SimState};
use crate::reward::{patient_reward, resource_penalty, time_penalty, RewardCase};
use crate::types::{HospitalId, PatientId};

use super::greedy::hospital_order;

pub const MAX_JOINT_PATIENTS: usize = 6;
pub const MAX_JOINT_HOSPITALS: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BruteForceError {
    #[error("{patients} patients / {hospitals} hospitals exceeds the 6x4 limit")]
    TooLarge { patients: usize, hospitals: usize },
    #[error("patient {0} not found")]
    PatientNotFound(PatientId),
    #[error("patient {0} listed twice")]
    Duplicate(PatientId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointAssignment {
    pub choices: Vec<(PatientId, Option<HospitalId>)>,
    pub value: f64,
}

/// Arrival reward of a patient that was just dispatched on `state`.
fn dispatched_value(state: &SimState, pi: usize) -> f64 {
    let scenario = state.scenario();
    let p = &scenario.patients[pi];
    let a = state.patients()[pi].assignment.expect("just assigned");
    let waited = state.waited(pi).unwrap_or(0);
    let pt = time_penalty(f64::from(waited + a.arrival - a.departure), p.survival_window.map(f64::from)).unwrap();
    let pq = resource_penalty(a.matched.count_nonzero(), p.required_count()).unwrap();
    let case = RewardCase::arrival(p.severity).unwrap();
    patient_reward(case, p.severity, Some(scenario.hospitals[a.hospital_idx].level), pt, pq).unwrap()
}

struct Search {
    order: Vec<(usize, Vec<usize>)>,
    best: Option<(f64, Vec<Option<usize>>)>,
}

impl Search {
    fn go(&mut self, state: &SimState, depth: usize, value: f64, picked: &mut Vec<Option<usize>>) {
        if depth == self.order.len() {
            if self.best.as_ref().is_none_or(|(b, _)| value > *b) {
                self.best = Some((value, picked.clone()));
            }
            return;
        }
        let (pi, hospitals) = self.order[depth].clone();
        let pid = state.scenario().patients[pi].id;
        for hi in hospitals {
            let mut next = state.without_log();
            let hid = state.scenario().hospitals[hi].id;
            if next.assign(pid, hid, AssignmentSource::Policy).is_err() {
                continue;
            }
            picked.push(Some(hi));
            let v = dispatched_value(&next, pi);
            self.go(&next, depth + 1, value + v, picked);
            picked.pop();
        }
        picked.push(None);
        self.go(state, depth + 1, value, picked);
        picked.pop();
    }
}

/// Maximizes the summed projected arrival reward over every combination of
/// hospital-or-none for `patients`, applying assignments in the given order
/// so capacity and ambulances are shared. Among equal totals the first
/// combination in (travel, id, none-last) order wins.
pub fn brute_force_joint(state: &SimState, patients: &[PatientId]) -> Result<JointAssignment, BruteForceError> {
    let scenario = state.scenario();
    let nh = scenario.hospitals.len();
    if patients.len() > MAX_JOINT_PATIENTS || nh > MAX_JOINT_HOSPITALS {
        return Err(BruteForceError::TooLarge { patients: patients.len(), hospitals: nh });
    }
    let mut order = Vec::with_capacity(patients.len());
    for (i, &pid) in patients.iter().enumerate() {
        if patients[..i].contains(&pid) {
            return Err(BruteForceError::Duplicate(pid));
        }
        let pi = scenario.patient_index(pid).ok_or(BruteForceError::PatientNotFound(pid))?;
        order.push((pi, hospital_order(state, pi)));
    }
    let mut search = Search { order, best: None };
    search.go(&state.without_log(), 0, 0.0, &mut Vec::new());
    let (value, picks) = search.best.expect("the all-none combination always exists");
    let choices = patients
        .iter()
        .zip(picks)
        .map(|(&pid, h)| (pid, h.map(|hi| scenario.hospitals[hi].id)))
        .collect();
    Ok(JointAssignment { choices, value })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::fixtures::ScenarioBuilder;
    use crate::types::SeverityCode;

    #[test]
    fn shared_emergency_slot_goes_to_the_critical_patient() {
        let s = ScenarioBuilder::new()
            .patient(SeverityCode::Minor, [0, 1, 0, 0, 0, 0, 0, 0], 0)
            .patient(SeverityCode::Critical, [0, 1, 0, 0, 0, 0, 0, 0], 0)
            .hospital(1, [0, 1, 0, 0, 0, 0, 0, 0], 10)
            .build();
        let state = SimState::new(Arc::new(s)).unwrap();
        let j = brute_force_joint(&state, &[PatientId(1), PatientId(2)]).unwrap();
        assert_eq!(j.choices, vec![(PatientId(1), None), (PatientId(2), Some(HospitalId(1)))]);
        // 300 + 300 * (1 - 10/60)
        assert_eq!(j.value, 550.0);
    }

    #[test]
    fn limits_are_enforced() {
        let mut b = ScenarioBuilder::new();
        for _ in 0..7 {
            b = b.patient(SeverityCode::Minor, [0, 1, 0, 0, 0, 0, 0, 0], 0);
        }
        let state = SimState::new(Arc::new(b.hospital(1, [0, 1, 0, 0, 0, 0, 0, 0], 10).build())).unwrap();
        let ids: Vec<_> = (1..=7).map(PatientId).collect();
        assert!(matches!(brute_force_joint(&state, &ids), Err(BruteForceError::TooLarge { .. })));
        assert!(brute_force_joint(&state, &[PatientId(1), PatientId(1)]).is_err());
    }
}

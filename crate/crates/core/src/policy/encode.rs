//! Fixed-size numeric view of a [`SimState`] and its action mask.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{PatientStatus, SimState};
use crate::types::{ResourceKind, SeverityCode};

pub const PATIENT_FEATURES: usize = 14;
pub const HOSPITAL_FEATURES: usize = 13;
pub const GLOBAL_FEATURES: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Caps {
    pub max_patients: usize,
    pub max_hospitals: usize,
}

impl Default for Caps {
    fn default() -> Self {
        Self { max_patients: 64, max_hospitals: 8 }
    }
}

impl Caps {
    pub fn new(max_patients: usize, max_hospitals: usize) -> Self {
        Self { max_patients, max_hospitals }
    }

    pub fn observation_len(&self) -> usize {
        self.max_patients * PATIENT_FEATURES + self.max_hospitals * HOSPITAL_FEATURES + GLOBAL_FEATURES
    }

    pub fn action_count(&self) -> usize {
        self.max_patients * self.max_hospitals
    }
}

/// Scales that map raw counts and minutes into roughly [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub capacity_scale: f64,
    pub travel_scale: f64,
    pub window_scale: f64,
}

impl Default for Normalization {
    fn default() -> Self {
        Self { capacity_scale: 10.0, travel_scale: 60.0, window_scale: 240.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("state has {patients} patients and {hospitals} hospitals, caps are {caps:?}")]
pub struct CapsExceeded {
    pub patients: usize,
    pub hospitals: usize,
    pub caps: Caps,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub caps: Caps,
    pub data: Vec<f64>,
}

// Patient slot layout.
pub const P_MASK: usize = 0;
pub const P_SEVERITY: usize = 1;
pub const P_REQ: usize = 4;
pub const P_ELAPSED: usize = 12;
pub const P_WINDOW: usize = 13;
// Hospital slot layout.
pub const H_MASK: usize = 0;
pub const H_LEVEL: usize = 1;
pub const H_CAP: usize = 4;
pub const H_TRAVEL: usize = 12;

impl Observation {
    pub fn patient(&self, slot: usize) -> &[f64] {
        let o = slot * PATIENT_FEATURES;
        &self.data[o..o + PATIENT_FEATURES]
    }

    pub fn hospital(&self, slot: usize) -> &[f64] {
        let o = self.caps.max_patients * PATIENT_FEATURES + slot * HOSPITAL_FEATURES;
        &self.data[o..o + HOSPITAL_FEATURES]
    }

    pub fn global(&self) -> &[f64] {
        &self.data[self.data.len() - GLOBAL_FEATURES..]
    }
}

/// Row-major over (patient slot, hospital slot).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionMask {
    pub caps: Caps,
    pub bits: Vec<bool>,
}

impl ActionMask {
    pub fn get(&self, patient_slot: usize, hospital_slot: usize) -> bool {
        self.bits[patient_slot * self.caps.max_hospitals + hospital_slot]
    }

    pub fn any(&self) -> bool {
        self.bits.iter().any(|b| *b)
    }

    /// Flattened indices of the true entries, ascending.
    pub fn valid(&self) -> Vec<usize> {
        self.bits.iter().enumerate().filter_map(|(i, b)| b.then_some(i)).collect()
    }

    pub fn split(&self, flat: usize) -> (usize, usize) {
        (flat / self.caps.max_hospitals, flat % self.caps.max_hospitals)
    }
}

fn check_caps(state: &SimState, caps: Caps) -> Result<(), CapsExceeded> {
    let patients = state.patients().len();
    let hospitals = state.scenario().hospitals.len();
    if patients > caps.max_patients || hospitals > caps.max_hospitals {
        return Err(CapsExceeded { patients, hospitals, caps });
    }
    Ok(())
}

pub fn action_mask(state: &SimState, caps: Caps) -> Result<ActionMask, CapsExceeded> {
    check_caps(state, caps)?;
    let mut bits = vec![false; caps.action_count()];
    let nh = state.scenario().hospitals.len();
    for pi in 0..state.patients().len() {
        if state.patients()[pi].status != PatientStatus::Unassigned {
            continue;
        }
        for hi in 0..nh {
            bits[pi * caps.max_hospitals + hi] = state.can_assign(pi, hi);
        }
    }
    Ok(ActionMask { caps, bits })
}

pub fn encode(state: &SimState, caps: Caps, norm: &Normalization) -> Result<(Observation, ActionMask), CapsExceeded> {
    let mask = action_mask(state, caps)?;
    let scenario = state.scenario();
    let mut data = vec![0.0; caps.observation_len()];

    for (pi, rec) in state.patients().iter().enumerate() {
        if rec.status != PatientStatus::Unassigned {
            continue;
        }
        let p = &scenario.patients[pi];
        let slot = &mut data[pi * PATIENT_FEATURES..(pi + 1) * PATIENT_FEATURES];
        slot[P_MASK] = 1.0;
        let sev = match rec.severity {
            SeverityCode::Minor => 0,
            SeverityCode::Severe => 1,
            _ => 2,
        };
        slot[P_SEVERITY + sev] = 1.0;
        for k in ResourceKind::ALL {
            slot[P_REQ + k.index()] = f64::from(p.requirements[k].min(1));
        }
        if let Some(window) = p.survival_window {
            let waited = f64::from(state.waited(pi).unwrap_or(0));
            slot[P_ELAPSED] = (waited / f64::from(window)).clamp(0.0, 1.0);
            slot[P_WINDOW] = (f64::from(window) / norm.window_scale).clamp(0.0, 1.0);
        }
    }

    let base = caps.max_patients * PATIENT_FEATURES;
    let np = scenario.patients.len();
    for (hi, h) in scenario.hospitals.iter().enumerate() {
        let slot = &mut data[base + hi * HOSPITAL_FEATURES..base + (hi + 1) * HOSPITAL_FEATURES];
        slot[H_MASK] = 1.0;
        slot[H_LEVEL + usize::from(h.level.clamp(1, 3) - 1)] = 1.0;
        let free = state.unreserved(hi);
        for k in ResourceKind::ALL {
            slot[H_CAP + k.index()] = (f64::from(free[k]) / norm.capacity_scale).clamp(0.0, 1.0);
        }
        if np > 0 {
            let mean = (0..np).map(|pi| f64::from(scenario.travel(pi, hi))).sum::<f64>() / np as f64;
            slot[H_TRAVEL] = (mean / norm.travel_scale).clamp(0.0, 1.0);
        }
    }

    let g = data.len() - GLOBAL_FEATURES;
    data[g] = (f64::from(state.clock()) / f64::from(scenario.horizon_min.max(1))).clamp(0.0, 1.0);
    data[g + 1] = f64::from(state.ambulances_available()) / f64::from(scenario.fleet.size_max.max(1));

    Ok((Observation { caps, data }, mask))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::engine::AssignmentSource;
    use crate::fixtures::ScenarioBuilder;
    use crate::types::{HospitalId, PatientId};

    fn small() -> SimState {
        let s = ScenarioBuilder::new()
            .patient(SeverityCode::Critical, [1, 1, 0, 0, 0, 0, 0, 0], 0)
            .patient(SeverityCode::Minor, [0, 1, 0, 0, 0, 0, 0, 0], 0)
            .patient(SeverityCode::Severe, [0, 1, 1, 0, 0, 0, 0, 0], 50)
            .hospital(1, [1, 1, 1, 0, 0, 0, 0, 0], 10)
            .hospital(3, [0, 0, 0, 0, 0, 0, 0, 0], 5)
            .hospital(2, [0, 3, 0, 0, 0, 0, 0, 0], 5)
            .build();
        SimState::new(Arc::new(s)).unwrap()
    }

    #[test]
    fn fixed_length_and_zeroed_padding() {
        let caps = Caps::new(5, 4);
        let (obs, mask) = encode(&small(), caps, &Normalization::default()).unwrap();
        assert_eq!(obs.data.len(), caps.observation_len());
        assert_eq!(mask.bits.len(), 20);
        assert!(obs.patient(2).iter().all(|x| *x == 0.0), "hidden patient is zeroed");
        assert!(obs.patient(4).iter().all(|x| *x == 0.0));
        assert!(obs.hospital(3).iter().all(|x| *x == 0.0));
        assert_eq!(obs.patient(0)[P_SEVERITY + 2], 1.0);
        assert_eq!(obs.hospital(1)[H_LEVEL + 2], 1.0);
    }

    #[test]
    fn zero_emergency_hospital_column_is_false() {
        let (_, mask) = encode(&small(), Caps::new(5, 4), &Normalization::default()).unwrap();
        assert!(mask.get(0, 0) && mask.get(1, 0));
        assert!(!mask.get(0, 1) && !mask.get(1, 1));
    }

    #[test]
    fn all_hidden_masks_every_patient() {
        let s = ScenarioBuilder::new()
            .patient(SeverityCode::Minor, [0, 1, 0, 0, 0, 0, 0, 0], 30)
            .hospital(1, [1, 2, 1, 0, 0, 0, 0, 0], 10)
            .build();
        let state = SimState::new(Arc::new(s)).unwrap();
        let (obs, mask) = encode(&state, Caps::new(2, 2), &Normalization::default()).unwrap();
        assert!(!mask.any());
        assert_eq!(obs.patient(0)[P_MASK], 0.0);
    }

    #[test]
    fn capacity_change_flips_exactly_its_column() {
        let mut state = small();
        let caps = Caps::new(5, 4);
        let before = action_mask(&state, caps).unwrap();
        state.assign(PatientId(2), HospitalId(1), AssignmentSource::Manual).unwrap();
        let after = action_mask(&state, caps).unwrap();
        // Hospital 1 had one emergency slot; patient 2 is now in transit.
        for p in 0..5 {
            for h in 0..4 {
                let expected = before.get(p, h) && h != 0 && p != 1;
                if p == 0 && h == 2 {
                    assert!(expected);
                }
                assert_eq!(after.get(p, h), expected, "slot ({p},{h})");
            }
        }
    }

    #[test]
    fn caps_exceeded_is_an_error() {
        assert!(encode(&small(), Caps::new(2, 4), &Normalization::default()).is_err());
    }
}

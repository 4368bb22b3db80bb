//! Hand-built scenarios for tests and examples.

use std::sync::Arc;

use rand::Rng;

use crate::engine::{AssignmentSource, SimState};
use crate::generate::SigmoidParams;
use crate::types::{
    Fleet, GeoPoint, Hospital, HospitalId, Patient, PatientId, ResourceVector, RevealParams, Scenario, SeverityCode,
    TravelMatrix, SCHEMA_VERSION,
};

/// Schedule that sits at (effectively) 100% from t=0.
pub fn flat_schedule() -> SigmoidParams {
    SigmoidParams::new(0.0, 1.0, 0.999_999, 1.0)
}

/// Builds small scenarios with flat resource schedules: every hospital has its
/// nominal capacity and the whole fleet from the first minute.
#[derive(Debug, Clone)]
pub struct ScenarioBuilder {
    patients: Vec<Patient>,
    hospitals: Vec<Hospital>,
    travel: Vec<u32>,
    fleet: u32,
    horizon: u32,
}

impl Default for ScenarioBuilder {
    fn default() -> Self {
        Self::new()
    }
}

impl ScenarioBuilder {
    pub fn new() -> Self {
        Self { patients: Vec::new(), hospitals: Vec::new(), travel: Vec::new(), fleet: 4, horizon: 240 }
    }

    pub fn fleet(mut self, size: u32) -> Self {
        self.fleet = size;
        self
    }

    pub fn horizon(mut self, minutes: u32) -> Self {
        self.horizon = minutes;
        self
    }

    /// Adds a patient; window defaults to 60/240/unbounded by severity when `None`.
    pub fn patient(mut self, severity: SeverityCode, requirements: [u32; 8], reveal_time: u32) -> Self {
        let window = match severity {
            SeverityCode::Critical => Some(60),
            SeverityCode::Severe => Some(240),
            _ => None,
        };
        self.patients.push(Patient {
            id: PatientId(self.patients.len() as u32 + 1),
            severity,
            requirements: ResourceVector(requirements),
            survival_window: window,
            reveal_time,
        });
        self
    }

    pub fn window(mut self, minutes: Option<u32>) -> Self {
        if let Some(p) = self.patients.last_mut() {
            p.survival_window = minutes;
        }
        self
    }

    pub fn hospital(mut self, level: u8, capacities: [u32; 8], travel_min: u32) -> Self {
        self.hospitals.push(Hospital {
            id: HospitalId(self.hospitals.len() as u32 + 1),
            location: GeoPoint { lat: 43.65, lon: -79.38 },
            level,
            capacities: ResourceVector(capacities),
        });
        self.travel.push(travel_min);
        self
    }

    pub fn build(self) -> Scenario {
        let flat = flat_schedule();
        Scenario {
            schema_version: SCHEMA_VERSION,
            scenario_id: "fixture".into(),
            incident_location: GeoPoint { lat: 43.65, lon: -79.38 },
            travel_matrix: TravelMatrix(vec![self.travel.clone(); self.patients.len()]),
            patients: self.patients,
            hospitals: self.hospitals,
            reveal_params: RevealParams { patients: flat, ambulances: flat, capacity: flat },
            fleet: Fleet { size_max: self.fleet },
            horizon_min: self.horizon,
            seed: 0,
        }
    }
}

/// Small scenario with independent random travel times per (patient, hospital)
/// and flat resource schedules. Used by fuzz and oracle tests.
pub fn random_small_scenario(rng: &mut impl Rng, max_patients: usize, max_hospitals: usize) -> Scenario {
    let np = rng.gen_range(1..=max_patients);
    let nh = rng.gen_range(1..=max_hospitals);
    let mut b = ScenarioBuilder::new().fleet(rng.gen_range(1..=4));
    for _ in 0..np {
        let severity = SeverityCode::LIVE[rng.gen_range(0..3)];
        let mut req = [0u32; 8];
        for r in &mut req {
            *r = u32::from(rng.gen_bool(0.4));
        }
        b = b.patient(severity, req, rng.gen_range(0..15));
        if severity.is_time_critical() {
            b = b.window(Some(rng.gen_range(20..=240)));
        }
    }
    for _ in 0..nh {
        let mut caps = [0u32; 8];
        for c in &mut caps {
            *c = rng.gen_range(0..=3);
        }
        b = b.hospital(rng.gen_range(1..=3), caps, 0);
    }
    let mut s = b.build();
    s.travel_matrix = TravelMatrix((0..np).map(|_| (0..nh).map(|_| rng.gen_range(1..=60)).collect()).collect());
    s
}

/// Drives a fresh session for `scenario` through a random mix of ticks and
/// admissible assignments, leaving it at a random non-terminal point when
/// possible.
pub fn random_state(rng: &mut impl Rng, scenario: Scenario) -> SimState {
    let mut state = SimState::new(Arc::new(scenario)).expect("fixture scenario is valid");
    for _ in 0..rng.gen_range(0..12) {
        if state.is_terminal() {
            break;
        }
        if rng.gen_bool(0.5) {
            let np = state.patients().len();
            let nh = state.scenario().hospitals.len();
            let (pi, hi) = (rng.gen_range(0..np), rng.gen_range(0..nh));
            if state.can_assign(pi, hi) {
                let (p, h) = (state.scenario().patients[pi].id, state.scenario().hospitals[hi].id);
                state.assign(p, h, AssignmentSource::Manual).expect("checked");
            }
        } else {
            let dt = rng.gen_range(1..=10);
            state.step(dt).expect("positive step");
        }
    }
    state
}

//! Deterministic minute-tick simulation of patients, hospitals, and ambulances.
//!
//! All randomness is consumed by the generator, so a session is a pure
//! function of its scenario and the commands applied to it. Mutations go
//! through [`SimState::step`], [`SimState::assign`], [`SimState::cancel`],
//! [`SimState::annotate`] and [`SimState::end`]; every observable change is
//! recorded in the event log.

mod event;
mod replay;

pub use event::{
    events_from_ndjson, events_to_ndjson, AssignmentSource, EndReason, Event, EventKind, PatientStatus,
    SuggestionRationale,
};
pub use replay::{replay, ActionLog, Command, ReplayError, TimedCommand};

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generate::reveal_fraction;
use crate::matching::{resource_match_count, ResourceMatch};
use crate::types::{HospitalId, PatientId, ResourceKind, ResourceVector, Scenario, SeverityCode};
use crate::validate::{validate_scenario, Violation};

/// Machine-readable reason an engine command was refused.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum Rejection {
    #[error("unknown patient {patient_id}")]
    PatientNotFound { patient_id: PatientId },
    #[error("unknown hospital {hospital_id}")]
    HospitalNotFound { hospital_id: HospitalId },
    #[error("patient is {status:?}")]
    InvalidStatus { status: PatientStatus },
    #[error("hospital has no unreserved emergency capacity")]
    NoEmergencyCapacity,
    #[error("no ambulance available")]
    NoAmbulance,
    #[error("assignment already departed")]
    AlreadyDeparted,
    #[error("session is over")]
    SessionOver,
    #[error("step duration must be positive")]
    InvalidDuration,
    #[error("event kind cannot be recorded as an annotation")]
    NotAnAnnotation,
}

impl Rejection {
    pub fn code(&self) -> &'static str {
        match self {
            Self::PatientNotFound { .. } | Self::HospitalNotFound { .. } => "not_found",
            Self::InvalidStatus { .. } => "invalid_status",
            Self::NoEmergencyCapacity => "no_emergency_capacity",
            Self::NoAmbulance => "no_ambulance",
            Self::AlreadyDeparted => "already_departed",
            Self::SessionOver => "session_over",
            Self::InvalidDuration => "invalid_duration",
            Self::NotAnAnnotation => "not_an_annotation",
        }
    }

    pub fn is_not_found(&self) -> bool {
        matches!(self, Self::PatientNotFound { .. } | Self::HospitalNotFound { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("scenario failed validation with {} violation(s)", .0.len())]
pub struct InvalidScenario(pub Vec<Violation>);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub hospital_id: HospitalId,
    pub hospital_idx: usize,
    /// Required kinds that were available at assignment time.
    pub matched: ResourceVector,
    /// What was taken from the hospital: `matched` plus one emergency slot.
    pub reserved: ResourceVector,
    pub departure: u32,
    pub arrival: u32,
    pub source: AssignmentSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub id: PatientId,
    pub severity: SeverityCode,
    pub status: PatientStatus,
    /// Minute the patient became visible.
    pub entry_time: Option<u32>,
    /// Current or final assignment; kept after admission or death for scoring.
    pub assignment: Option<Assignment>,
    pub death_time: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AmbulanceTrip {
    pub patient_id: PatientId,
    pub return_time: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    scenario: Arc<Scenario>,
    clock: u32,
    patients: Vec<PatientRecord>,
    reservations: Vec<ResourceVector>,
    effective_capacity: Vec<ResourceVector>,
    fleet_size: u32,
    ambulances_busy: Vec<AmbulanceTrip>,
    event_log: Vec<Event>,
    next_seq: u64,
    terminal: bool,
}

/// Validates the scenario and builds the t=0 state.
pub fn init_session(scenario: Arc<Scenario>) -> Result<SimState, InvalidScenario> {
    SimState::new(scenario)
}

fn scaled(nominal: u32, fraction: f64) -> u32 {
    (f64::from(nominal) * fraction).round() as u32
}

impl SimState {
    pub fn new(scenario: Arc<Scenario>) -> Result<Self, InvalidScenario> {
        let violations = validate_scenario(&scenario);
        if !violations.is_empty() {
            return Err(InvalidScenario(violations));
        }
        let patients = scenario
            .patients
            .iter()
            .map(|p| PatientRecord {
                id: p.id,
                severity: p.severity,
                status: PatientStatus::Hidden,
                entry_time: None,
                assignment: None,
                death_time: None,
            })
            .collect();
        let n_hosp = scenario.hospitals.len();
        let mut state = Self {
            patients,
            reservations: vec![ResourceVector::ZERO; n_hosp],
            effective_capacity: vec![ResourceVector::ZERO; n_hosp],
            fleet_size: 0,
            ambulances_busy: Vec::new(),
            event_log: Vec::new(),
            next_seq: 0,
            terminal: false,
            clock: 0,
            scenario,
        };
        state.emit(
            EventKind::SessionStarted {
                scenario_id: state.scenario.scenario_id.clone(),
                patient_count: state.patients.len() as u32,
                hospital_count: n_hosp as u32,
            },
            None,
        );
        state.reveal_due();
        state.update_resources(true);
        state.check_terminal();
        Ok(state)
    }

    pub fn scenario(&self) -> &Arc<Scenario> {
        &self.scenario
    }

    pub fn clock(&self) -> u32 {
        self.clock
    }

    pub fn is_terminal(&self) -> bool {
        self.terminal
    }

    pub fn patients(&self) -> &[PatientRecord] {
        &self.patients
    }

    pub fn patient(&self, id: PatientId) -> Option<&PatientRecord> {
        self.scenario.patient_index(id).map(|i| &self.patients[i])
    }

    pub fn reservations(&self) -> &[ResourceVector] {
        &self.reservations
    }

    pub fn effective_capacity(&self) -> &[ResourceVector] {
        &self.effective_capacity
    }

    /// Capacity not yet committed to an assignment.
    pub fn unreserved(&self, hospital_idx: usize) -> ResourceVector {
        self.effective_capacity[hospital_idx].saturating_sub(&self.reservations[hospital_idx])
    }

    pub fn fleet_size(&self) -> u32 {
        self.fleet_size
    }

    pub fn ambulances_busy(&self) -> &[AmbulanceTrip] {
        &self.ambulances_busy
    }

    pub fn ambulances_available(&self) -> u32 {
        self.fleet_size.saturating_sub(self.ambulances_busy.len() as u32)
    }

    pub fn event_log(&self) -> &[Event] {
        &self.event_log
    }

    pub fn count_status(&self, status: PatientStatus) -> usize {
        self.patients.iter().filter(|p| p.status == status).count()
    }

    pub fn deaths(&self) -> usize {
        self.count_status(PatientStatus::Deceased)
    }

    /// Minutes since the patient became visible, if it has.
    pub fn waited(&self, patient_idx: usize) -> Option<u32> {
        self.patients[patient_idx].entry_time.map(|e| self.clock - e)
    }

    fn emit(&mut self, kind: EventKind, severity: Option<SeverityCode>) {
        let event = Event::new(self.next_seq, self.clock, kind, severity);
        self.next_seq += 1;
        self.event_log.push(event);
    }

    fn events_since(&self, start: usize) -> Vec<Event> {
        self.event_log[start..].to_vec()
    }

    /// Advances the clock by `dt` one-minute ticks.
    ///
    /// On a terminal state this is a no-op that returns a single warning
    /// event, which is not written to the log.
    pub fn step(&mut self, dt: u32) -> Result<Vec<Event>, Rejection> {
        if dt == 0 {
            return Err(Rejection::InvalidDuration);
        }
        if self.terminal {
            let warning = Event::new(
                self.next_seq,
                self.clock,
                EventKind::Warning { message: "step ignored: session is terminal".into() },
                None,
            );
            return Ok(vec![warning]);
        }
        let start = self.event_log.len();
        for _ in 0..dt {
            if self.terminal {
                break;
            }
            self.tick();
        }
        Ok(self.events_since(start))
    }

    fn tick(&mut self) {
        self.clock += 1;
        self.reveal_due();
        self.update_resources(false);
        self.admit_arrivals();
        self.apply_deaths();
        self.return_ambulances();
        self.check_terminal();
    }

    fn reveal_due(&mut self) {
        for i in 0..self.patients.len() {
            let p = &self.scenario.patients[i];
            if self.patients[i].status == PatientStatus::Hidden && p.reveal_time <= self.clock {
                let (id, severity) = (p.id, p.severity);
                let rec = &mut self.patients[i];
                rec.status = PatientStatus::Unassigned;
                rec.entry_time = Some(self.clock);
                self.emit(EventKind::PatientRevealed { patient_id: id, severity }, Some(severity));
            }
        }
    }

    /// Grows fleet and hospital capacity along their schedules. Neither ever shrinks.
    fn update_resources(&mut self, initial: bool) {
        let t = f64::from(self.clock);
        let params = self.scenario.reveal_params;

        let fleet = scaled(self.scenario.fleet.size_max, reveal_fraction(t, &params.ambulances)).max(self.fleet_size);
        if fleet != self.fleet_size || initial {
            self.fleet_size = fleet;
            self.emit(
                EventKind::AmbulanceAvailable { available: self.ambulances_available(), fleet_size: fleet },
                None,
            );
        }

        let frac = reveal_fraction(t, &params.capacity);
        for j in 0..self.effective_capacity.len() {
            let nominal = self.scenario.hospitals[j].capacities;
            let mut next = self.effective_capacity[j];
            for kind in ResourceKind::ALL {
                next[kind] = next[kind].max(scaled(nominal[kind], frac));
            }
            debug_assert!(self.reservations[j].fits_within(&next));
            if next != self.effective_capacity[j] || initial {
                self.effective_capacity[j] = next;
                let hospital_id = self.scenario.hospitals[j].id;
                self.emit(EventKind::CapacityChanged { hospital_id, effective: next }, None);
            }
        }
    }

    fn admit_arrivals(&mut self) {
        for i in 0..self.patients.len() {
            let rec = &self.patients[i];
            let Some(a) = rec.assignment else { continue };
            if rec.status == PatientStatus::InTransit && a.arrival <= self.clock {
                let entry = rec.entry_time.expect("in-transit patient was revealed");
                let (id, severity) = (rec.id, rec.severity);
                self.patients[i].status = PatientStatus::Admitted;
                self.emit(
                    EventKind::Arrived { patient_id: id, hospital_id: a.hospital_id, elapsed: a.arrival - entry },
                    Some(severity),
                );
            }
        }
    }

    fn apply_deaths(&mut self) {
        for i in 0..self.patients.len() {
            let rec = &self.patients[i];
            let alive_and_waiting = matches!(
                rec.status,
                PatientStatus::Unassigned | PatientStatus::Assigned | PatientStatus::InTransit
            );
            if !alive_and_waiting {
                continue;
            }
            let Some(window) = self.scenario.patients[i].survival_window else { continue };
            if !rec.severity.is_time_critical() {
                continue;
            }
            let entry = rec.entry_time.expect("visible patient has an entry time");
            if self.clock - entry <= window {
                continue;
            }
            let prior_status = rec.status;
            let (id, severity) = (rec.id, rec.severity);
            let hospital_id = rec.assignment.map(|a| a.hospital_id);
            if let Some(a) = rec.assignment {
                self.reservations[a.hospital_idx] = self.reservations[a.hospital_idx].saturating_sub(&a.reserved);
            }
            let rec = &mut self.patients[i];
            rec.status = PatientStatus::Deceased;
            rec.death_time = Some(self.clock);
            self.emit(EventKind::Died { patient_id: id, severity, prior_status, hospital_id }, Some(severity));
        }
    }

    fn return_ambulances(&mut self) {
        let before = self.ambulances_busy.len();
        let clock = self.clock;
        self.ambulances_busy.retain(|trip| trip.return_time > clock);
        if self.ambulances_busy.len() != before {
            self.emit(
                EventKind::AmbulanceAvailable { available: self.ambulances_available(), fleet_size: self.fleet_size },
                None,
            );
        }
    }

    fn check_terminal(&mut self) {
        if self.terminal {
            return;
        }
        let reason = if self.patients.iter().all(|p| p.status.is_resolved()) {
            EndReason::AllResolved
        } else if self.clock >= self.scenario.horizon_min {
            EndReason::HorizonReached
        } else {
            return;
        };
        self.terminal = true;
        self.emit(EventKind::SessionEnded { reason }, None);
    }

    fn locate(&self, patient: PatientId, hospital: HospitalId) -> Result<(usize, usize), Rejection> {
        let pi = self.scenario.patient_index(patient).ok_or(Rejection::PatientNotFound { patient_id: patient })?;
        let hi = self.scenario.hospital_index(hospital).ok_or(Rejection::HospitalNotFound { hospital_id: hospital })?;
        Ok((pi, hi))
    }

    /// The admissibility predicate behind [`SimState::assign`], by roster index.
    /// Returns the resource match the assignment would receive.
    pub fn check_assignment(&self, patient_idx: usize, hospital_idx: usize) -> Result<ResourceMatch, Rejection> {
        if self.terminal {
            return Err(Rejection::SessionOver);
        }
        let status = self.patients[patient_idx].status;
        if status != PatientStatus::Unassigned {
            return Err(Rejection::InvalidStatus { status });
        }
        let unreserved = self.unreserved(hospital_idx);
        if unreserved[ResourceKind::Emergency] < 1 {
            return Err(Rejection::NoEmergencyCapacity);
        }
        if self.ambulances_available() < 1 {
            return Err(Rejection::NoAmbulance);
        }
        Ok(resource_match_count(&self.scenario.patients[patient_idx].requirements, &unreserved))
    }

    pub fn can_assign(&self, patient_idx: usize, hospital_idx: usize) -> bool {
        self.check_assignment(patient_idx, hospital_idx).is_ok()
    }

    /// Dispatches an ambulance with `patient` to `hospital`, reserving the
    /// emergency slot and every required kind that is currently available.
    pub fn assign(
        &mut self,
        patient: PatientId,
        hospital: HospitalId,
        source: AssignmentSource,
    ) -> Result<Vec<Event>, Rejection> {
        let (pi, hi) = self.locate(patient, hospital)?;
        let m = self.check_assignment(pi, hi)?;

        let mut reserved = m.matched;
        reserved[ResourceKind::Emergency] = 1;
        self.reservations[hi] = self.reservations[hi].add(&reserved);

        let travel = self.scenario.travel(pi, hi);
        let departure = self.clock;
        let arrival = departure + travel;
        self.ambulances_busy.push(AmbulanceTrip { patient_id: patient, return_time: arrival + travel });

        let severity = self.patients[pi].severity;
        let required = self.scenario.patients[pi].requirements;
        let rec = &mut self.patients[pi];
        rec.status = PatientStatus::InTransit;
        rec.assignment = Some(Assignment {
            hospital_id: hospital,
            hospital_idx: hi,
            matched: m.matched,
            reserved,
            departure,
            arrival,
            source,
        });

        let start = self.event_log.len();
        self.emit(
            EventKind::Assigned { patient_id: patient, hospital_id: hospital, required, matched: m.matched, source },
            Some(severity),
        );
        self.emit(EventKind::Departed { patient_id: patient, hospital_id: hospital, arrival_time: arrival }, Some(severity));
        Ok(self.events_since(start))
    }

    /// Undoes an assignment made during the current tick.
    pub fn cancel(&mut self, patient: PatientId) -> Result<Vec<Event>, Rejection> {
        let pi = self.scenario.patient_index(patient).ok_or(Rejection::PatientNotFound { patient_id: patient })?;
        let rec = &self.patients[pi];
        if self.terminal {
            return Err(Rejection::SessionOver);
        }
        let Some(a) = rec.assignment.filter(|_| rec.status == PatientStatus::InTransit) else {
            return Err(Rejection::InvalidStatus { status: rec.status });
        };
        if a.departure != self.clock {
            return Err(Rejection::AlreadyDeparted);
        }
        let severity = rec.severity;
        self.reservations[a.hospital_idx] = self.reservations[a.hospital_idx].saturating_sub(&a.reserved);
        self.ambulances_busy.retain(|trip| trip.patient_id != patient);
        let rec = &mut self.patients[pi];
        rec.status = PatientStatus::Unassigned;
        rec.assignment = None;
        let start = self.event_log.len();
        self.emit(EventKind::AssignmentCancelled { patient_id: patient, hospital_id: a.hospital_id }, Some(severity));
        Ok(self.events_since(start))
    }

    /// Records a suggestion event at the current clock without touching state.
    pub fn annotate(&mut self, kind: EventKind) -> Result<Event, Rejection> {
        if !kind.is_annotation() {
            return Err(Rejection::NotAnAnnotation);
        }
        let severity = kind
            .patient_id()
            .and_then(|id| self.patient(id))
            .map(|p| p.severity);
        self.emit(kind, severity);
        Ok(self.event_log.last().cloned().expect("just emitted"))
    }

    /// Ends the session now. Idempotent.
    pub fn end(&mut self) -> Vec<Event> {
        if self.terminal {
            return Vec::new();
        }
        self.terminal = true;
        let start = self.event_log.len();
        self.emit(EventKind::SessionEnded { reason: EndReason::Manual }, None);
        self.events_since(start)
    }

    /// Same state with the log stripped, for comparisons that ignore history.
    pub fn without_log(&self) -> SimState {
        let mut s = self.clone();
        s.event_log.clear();
        s.next_seq = 0;
        s
    }
}

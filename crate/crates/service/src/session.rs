//! One live session: engine state, operating mode, suggestions, pacing.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use mci_core::engine::{ActionLog, SuggestionRationale};
use mci_core::metrics::{outcome_report, CompletionBasis, OutcomeReport};
use mci_core::policy::{encode, greedy_suggest, projected_reward, ActMode, Action, PolicyKind, PolicySpec};
use mci_core::{
    AssignmentSource, Event, EventKind, HospitalId, PatientId, PatientStatus, Rejection, ResourceVector, Scenario,
    SimState,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tokio::sync::broadcast;
use tokio::task::JoinHandle;

use crate::error::ApiError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    HumanOnly,
    HumanPlusAi,
    AiOnly,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::HumanOnly => "human_only",
            Mode::HumanPlusAi => "human_plus_ai",
            Mode::AiOnly => "ai_only",
        })
    }
}

impl FromStr for Mode {
    type Err = ApiError;
    fn from_str(s: &str) -> Result<Self, ApiError> {
        match s.trim().to_ascii_lowercase().replace(['-', '+'], "_").as_str() {
            "human_only" => Ok(Mode::HumanOnly),
            "human_plus_ai" | "human_ai" => Ok(Mode::HumanPlusAi),
            "ai_only" => Ok(Mode::AiOnly),
            _ => Err(ApiError::Validation(format!("unknown mode '{s}'"))),
        }
    }
}

/// Commands accepted on `POST /sessions/{id}/commands`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum SessionCommand {
    Start,
    Pause,
    Step {
        #[serde(default = "one")]
        dt: u32,
    },
    Assign { patient: PatientId, hospital: HospitalId },
    Cancel { patient: PatientId },
    RequestSuggestion { patient: PatientId },
    AcceptSuggestion { suggestion_id: u64 },
    DeclineSuggestion { suggestion_id: u64 },
    End,
}

fn one() -> u32 {
    1
}

impl SessionCommand {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Start => "start",
            Self::Pause => "pause",
            Self::Step { .. } => "step",
            Self::Assign { .. } => "assign",
            Self::Cancel { .. } => "cancel",
            Self::RequestSuggestion { .. } => "request_suggestion",
            Self::AcceptSuggestion { .. } => "accept_suggestion",
            Self::DeclineSuggestion { .. } => "decline_suggestion",
            Self::End => "end",
        }
    }

    fn allowed_in(&self, mode: Mode) -> bool {
        let suggestion = matches!(
            self,
            Self::RequestSuggestion { .. } | Self::AcceptSuggestion { .. } | Self::DeclineSuggestion { .. }
        );
        match mode {
            Mode::HumanOnly => !suggestion,
            Mode::HumanPlusAi => true,
            Mode::AiOnly => !suggestion && !matches!(self, Self::Assign { .. } | Self::Cancel { .. }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuggestionStatus {
    Pending,
    Accepted,
    Declined,
    /// Re-validation failed at accept time.
    Stale,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestionRecord {
    pub suggestion_id: u64,
    pub patient_id: PatientId,
    pub hospital_id: Option<HospitalId>,
    pub rationale: Option<SuggestionRationale>,
    pub status: SuggestionStatus,
}

/// What a command produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandAck {
    pub command: String,
    pub events: Vec<Event>,
    pub clock: u32,
    pub terminal: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suggestion: Option<SuggestionRecord>,
}

pub struct Session {
    pub id: String,
    pub mode: Mode,
    /// Ticks per real second; 0 means manual stepping.
    pub pacing: f64,
    pub policy: PolicySpec,
    state: SimState,
    rng: ChaCha8Rng,
    suggestions: BTreeMap<u64, SuggestionRecord>,
    next_suggestion: u64,
    created_at: Instant,
    started_at: Option<Instant>,
    last_decision: Option<Instant>,
    pub(crate) ticker: Option<JoinHandle<()>>,
    report: Option<OutcomeReport>,
    tx: broadcast::Sender<Event>,
}

impl Session {
    pub fn new(id: String, scenario: Arc<Scenario>, mode: Mode, pacing: f64, policy: PolicySpec, seed: u64) -> Result<Self, ApiError> {
        let state = SimState::new(scenario).map_err(|e| ApiError::Validation(e.to_string()))?;
        let caps = policy.caps_for(&state);
        if state.patients().len() > caps.max_patients || state.scenario().hospitals.len() > caps.max_hospitals {
            return Err(ApiError::Validation(format!(
                "scenario exceeds the learned policy's capacity of {} patients and {} hospitals",
                caps.max_patients, caps.max_hospitals
            )));
        }
        let (tx, _) = broadcast::channel(1024);
        Ok(Self {
            id,
            mode,
            pacing,
            policy,
            state,
            rng: ChaCha8Rng::seed_from_u64(seed),
            suggestions: BTreeMap::new(),
            next_suggestion: 1,
            created_at: Instant::now(),
            started_at: None,
            last_decision: None,
            ticker: None,
            report: None,
            tx,
        })
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn report(&self) -> Option<&OutcomeReport> {
        self.report.as_ref()
    }

    pub fn suggestions(&self) -> impl Iterator<Item = &SuggestionRecord> {
        self.suggestions.values()
    }

    pub fn is_running(&self) -> bool {
        self.ticker.as_ref().is_some_and(|t| !t.is_finished())
    }

    pub fn subscribe(&self) -> broadcast::Receiver<Event> {
        self.tx.subscribe()
    }

    /// Logged events from `from` onwards.
    pub fn events_from(&self, from: u64) -> &[Event] {
        let log = self.state.event_log();
        let start = usize::try_from(from).unwrap_or(usize::MAX).min(log.len());
        &log[start..]
    }

    /// Commands applied so far, sufficient to rebuild the state by replay.
    pub fn action_log(&self) -> ActionLog {
        ActionLog::from_events(self.state.event_log(), Some(self.state.clock()))
    }

    pub(crate) fn mark_started(&mut self) {
        self.started_at.get_or_insert_with(Instant::now);
    }

    pub(crate) fn stop_ticker(&mut self) {
        if let Some(t) = self.ticker.take() {
            t.abort();
        }
    }

    /// Applies `cmd`. Start and pause only touch bookkeeping here; the caller
    /// owns the pacing task.
    pub fn apply(&mut self, cmd: &SessionCommand) -> Result<CommandAck, ApiError> {
        if !cmd.allowed_in(self.mode) {
            return Err(ApiError::ModeViolation(format!("{} is not allowed in {} sessions", cmd.name(), self.mode)));
        }
        let before = self.state.event_log().len();
        let mut suggestion = None;
        match cmd {
            SessionCommand::Start => {
                if self.state.is_terminal() {
                    return Err(Rejection::SessionOver.into());
                }
                self.mark_started();
                if self.mode == Mode::AiOnly {
                    self.ai_decide()?;
                }
            }
            SessionCommand::Pause => self.stop_ticker(),
            SessionCommand::Step { dt } => {
                if *dt == 0 {
                    return Err(Rejection::InvalidDuration.into());
                }
                if self.state.is_terminal() {
                    return Err(Rejection::SessionOver.into());
                }
                for _ in 0..*dt {
                    if self.state.is_terminal() {
                        break;
                    }
                    self.tick()?;
                }
            }
            SessionCommand::Assign { patient, hospital } => {
                self.state.assign(*patient, *hospital, AssignmentSource::Manual)?;
                self.last_decision = Some(Instant::now());
            }
            SessionCommand::Cancel { patient } => {
                self.state.cancel(*patient)?;
            }
            SessionCommand::RequestSuggestion { patient } => {
                suggestion = Some(self.suggest(*patient)?);
            }
            SessionCommand::AcceptSuggestion { suggestion_id } => {
                let res = self.accept(*suggestion_id);
                self.publish(before);
                suggestion = self.suggestions.get(suggestion_id).cloned();
                res?;
            }
            SessionCommand::DeclineSuggestion { suggestion_id } => {
                let rec = self.pending(*suggestion_id)?.clone();
                self.state.annotate(EventKind::SuggestionDeclined { suggestion_id: rec.suggestion_id, patient_id: rec.patient_id })?;
                let rec = self.suggestions.get_mut(suggestion_id).expect("checked");
                rec.status = SuggestionStatus::Declined;
                suggestion = Some(rec.clone());
            }
            SessionCommand::End => {
                self.stop_ticker();
                self.state.end();
            }
        }
        self.publish(before);
        Ok(CommandAck {
            command: cmd.name().into(),
            events: self.state.event_log()[before..].to_vec(),
            clock: self.state.clock(),
            terminal: self.state.is_terminal(),
            suggestion,
        })
    }

    /// One simulated minute. AI-only sessions let the policy dispatch first.
    pub fn tick(&mut self) -> Result<(), ApiError> {
        let before = self.state.event_log().len();
        if self.mode == Mode::AiOnly {
            self.ai_decide()?;
        }
        if !self.state.is_terminal() {
            self.state.step(1)?;
        }
        self.publish(before);
        Ok(())
    }

    /// Lets the policy assign until it chooses to wait.
    fn ai_decide(&mut self) -> Result<(), ApiError> {
        let caps = self.policy.caps_for(&self.state);
        let norm = self.policy.normalization();
        while !self.state.is_terminal() {
            let (obs, mask) = encode(&self.state, caps, &norm).map_err(|e| ApiError::Validation(e.to_string()))?;
            if !mask.any() {
                break;
            }
            let out = self.policy.act(&self.state, &obs, &mask, ActMode::Argmax, &mut self.rng);
            let Action::Assign { patient_slot, hospital_slot } = out.action else { break };
            let scenario = self.state.scenario().clone();
            let (p, h) = (scenario.patients[patient_slot].id, scenario.hospitals[hospital_slot].id);
            self.state.assign(p, h, AssignmentSource::Policy)?;
            self.last_decision = Some(Instant::now());
        }
        Ok(())
    }

    fn suggest(&mut self, patient: PatientId) -> Result<SuggestionRecord, ApiError> {
        let scenario = self.state.scenario().clone();
        let pi = scenario.patient_index(patient).ok_or(Rejection::PatientNotFound { patient_id: patient })?;
        let status = self.state.patients()[pi].status;
        if status != PatientStatus::Unassigned {
            return Err(Rejection::InvalidStatus { status }.into());
        }
        let hospital = match &self.policy {
            PolicySpec::Greedy => greedy_suggest(&self.state, patient)?.map(|s| s.hospital_id),
            PolicySpec::Random => {
                let admissible: Vec<usize> =
                    (0..scenario.hospitals.len()).filter(|&h| self.state.can_assign(pi, h)).collect();
                (!admissible.is_empty()).then(|| scenario.hospitals[admissible[self.rng.gen_range(0..admissible.len())]].id)
            }
            PolicySpec::Learned(_) => {
                let caps = self.policy.caps_for(&self.state);
                let (obs, mask) =
                    encode(&self.state, caps, &self.policy.normalization()).map_err(|e| ApiError::Validation(e.to_string()))?;
                let mut best: Option<(usize, f64)> = None;
                for (action, p) in self.policy.distribution(&self.state, &obs, &mask) {
                    if let Action::Assign { patient_slot, hospital_slot } = action {
                        if patient_slot == pi && best.is_none_or(|(_, bp)| p > bp) {
                            best = Some((hospital_slot, p));
                        }
                    }
                }
                best.map(|(h, _)| scenario.hospitals[h].id)
            }
        };
        let rationale = hospital.map(|h| {
            let hi = scenario.hospital_index(h).expect("suggested hospital exists");
            let m = self.state.check_assignment(pi, hi).expect("suggested pair is admissible");
            let (r, pt, pq) = projected_reward(&self.state, pi, hi, &m);
            SuggestionRationale {
                policy: self.policy.kind().to_string(),
                projected_reward: r,
                time_penalty: pt,
                resource_penalty: pq,
                travel_min: scenario.travel(pi, hi),
            }
        });
        let id = self.next_suggestion;
        self.next_suggestion += 1;
        self.state.annotate(EventKind::SuggestionIssued {
            suggestion_id: id,
            patient_id: patient,
            hospital_id: hospital,
            rationale: rationale.clone(),
        })?;
        let rec = SuggestionRecord {
            suggestion_id: id,
            patient_id: patient,
            hospital_id: hospital,
            rationale,
            status: if hospital.is_some() { SuggestionStatus::Pending } else { SuggestionStatus::Stale },
        };
        self.suggestions.insert(id, rec.clone());
        Ok(rec)
    }

    fn pending(&self, id: u64) -> Result<&SuggestionRecord, ApiError> {
        let rec = self.suggestions.get(&id).ok_or_else(|| ApiError::NotFound(format!("unknown suggestion {id}")))?;
        if rec.status != SuggestionStatus::Pending {
            return Err(ApiError::Rejected {
                reason: "suggestion_closed".into(),
                message: format!("suggestion {id} is {:?}", rec.status).to_lowercase(),
            });
        }
        Ok(rec)
    }

    fn accept(&mut self, id: u64) -> Result<(), ApiError> {
        let rec = self.pending(id)?.clone();
        let hospital = rec.hospital_id.expect("pending suggestions name a hospital");
        let scenario = self.state.scenario().clone();
        let pi = scenario.patient_index(rec.patient_id).expect("suggested patient exists");
        let hi = scenario.hospital_index(hospital).expect("suggested hospital exists");
        if let Err(rejection) = self.state.check_assignment(pi, hi) {
            self.suggestions.get_mut(&id).expect("checked").status = SuggestionStatus::Stale;
            return Err(rejection.into());
        }
        self.state.annotate(EventKind::SuggestionAccepted { suggestion_id: id, patient_id: rec.patient_id, hospital_id: hospital })?;
        self.state.assign(rec.patient_id, hospital, AssignmentSource::SuggestionAccepted)?;
        self.last_decision = Some(Instant::now());
        self.suggestions.get_mut(&id).expect("checked").status = SuggestionStatus::Accepted;
        Ok(())
    }

    fn publish(&self, from: usize) {
        for e in &self.state.event_log()[from..] {
            let _ = self.tx.send(e.clone());
        }
    }

    /// Computes the outcome report once the session is over. Interactive
    /// sessions measure completion in wall-clock seconds.
    pub fn finalize(&mut self) -> Option<&OutcomeReport> {
        if !self.state.is_terminal() {
            return None;
        }
        if self.report.is_none() {
            let mut report = outcome_report(self.state.event_log()).expect("engine logs are well formed");
            if self.mode != Mode::AiOnly {
                let start = self.started_at.unwrap_or(self.created_at);
                let end = self.last_decision.unwrap_or_else(Instant::now);
                report.completion_time = end.saturating_duration_since(start).as_secs_f64();
                report.completion_basis = CompletionBasis::WallClockSeconds;
            }
            self.report = Some(report);
        }
        self.report.as_ref()
    }

    pub fn snapshot(&self) -> SessionSnapshot {
        let st = &self.state;
        let scenario = st.scenario();
        let patients = st
            .patients()
            .iter()
            .enumerate()
            .filter(|(_, r)| r.status != PatientStatus::Hidden)
            .map(|(i, r)| {
                let p = &scenario.patients[i];
                let waited = st.waited(i);
                PatientView {
                    patient_id: r.id,
                    severity: r.severity,
                    status: r.status,
                    requirements: p.requirements,
                    survival_window: p.survival_window,
                    entry_time: r.entry_time,
                    remaining: p.survival_window.zip(waited).map(|(w, t)| w.saturating_sub(t)),
                    hospital_id: r.assignment.map(|a| a.hospital_id),
                    arrival: r.assignment.map(|a| a.arrival),
                    travel: scenario.travel_matrix.0[i].clone(),
                }
            })
            .collect();
        let hospitals = scenario
            .hospitals
            .iter()
            .enumerate()
            .map(|(j, h)| HospitalView {
                hospital_id: h.id,
                level: h.level,
                location: [h.location.lat, h.location.lon],
                nominal: h.capacities,
                effective: st.effective_capacity()[j],
                reserved: st.reservations()[j],
                unreserved: st.unreserved(j),
            })
            .collect();
        let count = |s| st.count_status(s) as u32;
        SessionSnapshot {
            session_id: self.id.clone(),
            scenario_id: scenario.scenario_id.clone(),
            mode: self.mode,
            policy: self.policy.kind(),
            pacing: self.pacing,
            running: self.is_running(),
            clock: st.clock(),
            horizon_min: scenario.horizon_min,
            terminal: st.is_terminal(),
            next_seq: st.event_log().len() as u64,
            status_bar: StatusBar {
                total_patients: scenario.patients.len() as u32,
                revealed: scenario.patients.len() as u32 - count(PatientStatus::Hidden),
                unassigned: count(PatientStatus::Unassigned),
                in_transit: count(PatientStatus::InTransit) + count(PatientStatus::Assigned),
                admitted: count(PatientStatus::Admitted),
                deceased: count(PatientStatus::Deceased),
                ambulances_available: st.ambulances_available(),
                fleet_size: st.fleet_size(),
            },
            patients,
            hospitals,
            suggestions: self.suggestions.values().cloned().collect(),
            report: self.report.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientView {
    pub patient_id: PatientId,
    pub severity: mci_core::SeverityCode,
    pub status: PatientStatus,
    pub requirements: ResourceVector,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub survival_window: Option<u32>,
    pub entry_time: Option<u32>,
    /// Minutes left before the survival window lapses.
    pub remaining: Option<u32>,
    pub hospital_id: Option<HospitalId>,
    pub arrival: Option<u32>,
    /// Minutes to each hospital, in hospital order.
    pub travel: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HospitalView {
    pub hospital_id: HospitalId,
    pub level: u8,
    pub location: [f64; 2],
    pub nominal: ResourceVector,
    pub effective: ResourceVector,
    pub reserved: ResourceVector,
    pub unreserved: ResourceVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusBar {
    pub total_patients: u32,
    pub revealed: u32,
    pub unassigned: u32,
    pub in_transit: u32,
    pub admitted: u32,
    pub deceased: u32,
    pub ambulances_available: u32,
    pub fleet_size: u32,
}

/// Everything a client needs to draw the session without replaying events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub session_id: String,
    pub scenario_id: String,
    pub mode: Mode,
    pub policy: PolicyKind,
    pub pacing: f64,
    pub running: bool,
    pub clock: u32,
    pub horizon_min: u32,
    pub terminal: bool,
    pub next_seq: u64,
    pub status_bar: StatusBar,
    pub patients: Vec<PatientView>,
    pub hospitals: Vec<HospitalView>,
    pub suggestions: Vec<SuggestionRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<OutcomeReport>,
}

#[cfg(test)]
mod tests {
    use mci_core::fixtures::ScenarioBuilder;
    use mci_core::SeverityCode;

    use super::*;

    fn session(mode: Mode) -> Session {
        let s = ScenarioBuilder::new()
            .patient(SeverityCode::Critical, [1, 1, 0, 0, 0, 0, 0, 0], 0)
            .patient(SeverityCode::Minor, [0, 1, 0, 0, 0, 0, 0, 0], 0)
            .hospital(1, [1, 1, 1, 0, 0, 0, 0, 0], 10)
            .hospital(2, [1, 2, 1, 0, 0, 0, 0, 0], 20)
            .build();
        Session::new("s".into(), Arc::new(s), mode, 0.0, PolicySpec::Greedy, 0).unwrap()
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("Human+AI".parse::<Mode>().unwrap(), Mode::HumanPlusAi);
        assert_eq!("ai-only".parse::<Mode>().unwrap(), Mode::AiOnly);
        assert!(matches!("commander".parse::<Mode>(), Err(ApiError::Validation(_))));
    }

    #[test]
    fn mode_rules() {
        let mut human = session(Mode::HumanOnly);
        let err = human.apply(&SessionCommand::RequestSuggestion { patient: PatientId(1) }).unwrap_err();
        assert_eq!(err.code(), "mode_violation");
        let mut ai = session(Mode::AiOnly);
        let err = ai.apply(&SessionCommand::Assign { patient: PatientId(1), hospital: HospitalId(1) }).unwrap_err();
        assert_eq!(err.code(), "mode_violation");
        assert!(ai.apply(&SessionCommand::Step { dt: 1 }).is_ok());
    }

    #[test]
    fn suggestion_carries_rationale_and_accepts() {
        let mut s = session(Mode::HumanPlusAi);
        let ack = s.apply(&SessionCommand::RequestSuggestion { patient: PatientId(1) }).unwrap();
        let rec = ack.suggestion.unwrap();
        assert_eq!(rec.hospital_id, Some(HospitalId(1)));
        assert_eq!(rec.rationale.as_ref().unwrap().travel_min, 10);
        assert!(matches!(ack.events[0].kind, EventKind::SuggestionIssued { .. }));
        let ack = s.apply(&SessionCommand::AcceptSuggestion { suggestion_id: rec.suggestion_id }).unwrap();
        let names: Vec<_> = ack.events.iter().map(|e| e.kind.name()).collect();
        assert_eq!(names, ["suggestion_accepted", "assigned", "departed"]);
        match &ack.events[1].kind {
            EventKind::Assigned { source, .. } => assert_eq!(*source, AssignmentSource::SuggestionAccepted),
            other => panic!("{other:?}"),
        }
        let again = s.apply(&SessionCommand::AcceptSuggestion { suggestion_id: rec.suggestion_id }).unwrap_err();
        assert_eq!(again.body().reason, "suggestion_closed");
    }

    #[test]
    fn finalize_waits_for_terminal() {
        let mut s = session(Mode::AiOnly);
        assert!(s.finalize().is_none());
        s.apply(&SessionCommand::Step { dt: 500 }).unwrap();
        assert!(s.state().is_terminal());
        let report = s.finalize().unwrap();
        assert_eq!(report.completion_basis, CompletionBasis::SimulatedMinutes);
        assert_eq!(report.admitted, 2);
    }
}

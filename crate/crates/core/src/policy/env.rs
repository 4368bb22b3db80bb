//! Decision-point environment over the engine.
//!
//! The engine ticks every minute, but the agent is only consulted when it has
//! at least one admissible assignment. Minutes with nothing to decide are
//! simulated automatically and their rewards folded into the next step.

use std::sync::Arc;

use thiserror::Error;

use super::encode::{encode, ActionMask, Caps, CapsExceeded, Normalization, Observation};
use super::Action;
use crate::engine::{AssignmentSource, InvalidScenario, Rejection, SimState};
use crate::reward::{transition_reward, RewardBreakdown};
use crate::types::Scenario;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error(transparent)]
    Invalid(#[from] InvalidScenario),
    #[error(transparent)]
    Caps(#[from] CapsExceeded),
    #[error("action rejected: {0}")]
    Rejected(#[from] Rejection),
    #[error("slot ({0}, {1}) is outside the scenario")]
    BadSlot(usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub reward: RewardBreakdown,
    pub done: bool,
}

#[derive(Debug, Clone)]
pub struct MciEnv {
    state: SimState,
    caps: Caps,
    norm: Normalization,
    /// Reward earned before the first decision.
    pub initial_reward: RewardBreakdown,
    pub total_reward: f64,
    pub decisions: usize,
}

impl MciEnv {
    pub fn new(scenario: Arc<Scenario>, caps: Caps, norm: Normalization) -> Result<Self, EnvError> {
        let state = SimState::new(scenario)?;
        if state.patients().len() > caps.max_patients || state.scenario().hospitals.len() > caps.max_hospitals {
            return Err(CapsExceeded {
                patients: state.patients().len(),
                hospitals: state.scenario().hospitals.len(),
                caps,
            }
            .into());
        }
        let mut env = Self { state, caps, norm, initial_reward: RewardBreakdown::default(), total_reward: 0.0, decisions: 0 };
        let mut r = RewardBreakdown::default();
        env.skip_idle(&mut r);
        env.total_reward = r.total;
        env.initial_reward = r;
        Ok(env)
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn into_state(self) -> SimState {
        self.state
    }

    pub fn caps(&self) -> Caps {
        self.caps
    }

    pub fn is_done(&self) -> bool {
        self.state.is_terminal()
    }

    pub fn observe(&self) -> (Observation, ActionMask) {
        encode(&self.state, self.caps, &self.norm).expect("caps checked at construction")
    }

    fn tick(&mut self, out: &mut RewardBreakdown) {
        let pre = self.state.without_log();
        let events = self.state.step(1).expect("one tick");
        out.extend(transition_reward(&pre, &self.state, &events));
    }

    fn has_decision(&self) -> bool {
        let n = self.state.patients().len();
        let nh = self.state.scenario().hospitals.len();
        (0..n).any(|p| (0..nh).any(|h| self.state.can_assign(p, h)))
    }

    fn skip_idle(&mut self, out: &mut RewardBreakdown) {
        while !self.state.is_terminal() && !self.has_decision() {
            self.tick(out);
        }
    }

    /// Applies `action`. Wait advances one minute; an assignment does not
    /// move the clock. Either way idle minutes after it are skipped.
    pub fn step(&mut self, action: Action) -> Result<StepOutcome, EnvError> {
        let mut reward = RewardBreakdown::default();
        if self.state.is_terminal() {
            return Ok(StepOutcome { reward, done: true });
        }
        match action {
            Action::Wait => self.tick(&mut reward),
            Action::Assign { patient_slot, hospital_slot } => {
                let scenario = self.state.scenario().clone();
                let (Some(p), Some(h)) = (scenario.patients.get(patient_slot), scenario.hospitals.get(hospital_slot))
                else {
                    return Err(EnvError::BadSlot(patient_slot, hospital_slot));
                };
                self.state.assign(p.id, h.id, AssignmentSource::Policy)?;
            }
        }
        self.decisions += 1;
        self.skip_idle(&mut reward);
        self.total_reward += reward.total;
        Ok(StepOutcome { reward, done: self.state.is_terminal() })
    }
}

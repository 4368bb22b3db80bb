//! Assignment policies: a random baseline, the greedy suggester, an
//! exhaustive oracle for small cases, and a PPO-trained actor-critic.

mod brute;
mod encode;
mod env;
mod evaluate;
mod file;
mod greedy;
mod network;
mod ppo;

pub use brute::{brute_force_joint, BruteForceError, JointAssignment, MAX_JOINT_HOSPITALS, MAX_JOINT_PATIENTS};
pub use encode::{
    action_mask, encode, ActionMask, Caps, CapsExceeded, Normalization, Observation, GLOBAL_FEATURES,
    HOSPITAL_FEATURES, H_CAP, H_LEVEL, H_MASK, H_TRAVEL, PATIENT_FEATURES, P_ELAPSED, P_MASK, P_REQ, P_SEVERITY,
    P_WINDOW,
};
pub use env::{EnvError, MciEnv, StepOutcome};
pub use evaluate::{evaluate, rollout, Episode, MetricSummary, EVAL_SEED_BASE};
pub use file::{read_policy, write_policy, PolicyFileError, PolicyHeader, POLICY_FILE_VERSION};
pub use greedy::{greedy_action, greedy_suggest, hospital_order, projected_reward, triage_order, Suggestion};
pub use network::{masked_softmax, ActorCritic, ActorPass, Mlp, PAIR_FEATURES};
pub use ppo::{
    ppo_loss_and_grad, train_ppo, EnvConfig, PpoConfig, PpoSample, TrainError, TrainingCurve, TrainingPoint,
    TRAIN_SEED_SPACE,
};

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::SimState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Random,
    Greedy,
    Learned,
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PolicyKind::Random => "random",
            PolicyKind::Greedy => "greedy",
            PolicyKind::Learned => "learned",
        })
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "random" => Ok(PolicyKind::Random),
            "greedy" => Ok(PolicyKind::Greedy),
            "learned" | "ppo" => Ok(PolicyKind::Learned),
            other => Err(format!("unknown policy '{other}'")),
        }
    }
}

/// Network shape plus its parameters. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnedPolicy {
    pub net: ActorCritic,
    pub params: Vec<f64>,
    pub training_seed: u64,
}

impl LearnedPolicy {
    /// Parameters as stored on disk: rounded through f32.
    pub fn quantized(net: ActorCritic, params: &[f64], training_seed: u64) -> Self {
        let params = params.iter().map(|p| f64::from(*p as f32)).collect();
        Self { net, params, training_seed }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PolicySpec {
    Random,
    Greedy,
    Learned(Arc<LearnedPolicy>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Action {
    Assign { patient_slot: usize, hospital_slot: usize },
    Wait,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ActMode {
    #[default]
    Sample,
    /// Most probable action; used for evaluation and live suggestions.
    Argmax,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActOutput {
    pub action: Action,
    pub log_prob: f64,
    pub value: f64,
}

fn pick_index(probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(probs.len() - 1)
}

fn argmax(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, p) in probs.iter().enumerate() {
        if *p > probs[best] {
            best = i;
        }
    }
    best
}

impl PolicySpec {
    pub fn kind(&self) -> PolicyKind {
        match self {
            PolicySpec::Random => PolicyKind::Random,
            PolicySpec::Greedy => PolicyKind::Greedy,
            PolicySpec::Learned(_) => PolicyKind::Learned,
        }
    }

    /// Caps the policy needs for `state`: fixed for learned, exact otherwise.
    pub fn caps_for(&self, state: &SimState) -> Caps {
        match self {
            PolicySpec::Learned(l) => l.net.caps,
            _ => Caps::new(state.patients().len().max(1), state.scenario().hospitals.len().max(1)),
        }
    }

    pub fn normalization(&self) -> Normalization {
        match self {
            PolicySpec::Learned(l) => l.net.norm,
            _ => Normalization::default(),
        }
    }

    /// Chooses an action. Greedy reads `state` directly; the others use only
    /// the encoded view.
    pub fn act(
        &self,
        state: &SimState,
        obs: &Observation,
        mask: &ActionMask,
        mode: ActMode,
        rng: &mut impl Rng,
    ) -> ActOutput {
        match self {
            PolicySpec::Random => {
                let valid = mask.valid();
                let n = valid.len() + 1;
                let i = rng.gen_range(0..n);
                let action = match valid.get(i) {
                    Some(&a) => {
                        let (p, h) = mask.split(a);
                        Action::Assign { patient_slot: p, hospital_slot: h }
                    }
                    None => Action::Wait,
                };
                ActOutput { action, log_prob: -(n as f64).ln(), value: 0.0 }
            }
            PolicySpec::Greedy => {
                let action = match greedy_action(state) {
                    Some(s) => Action::Assign {
                        patient_slot: state.scenario().patient_index(s.patient_id).unwrap(),
                        hospital_slot: state.scenario().hospital_index(s.hospital_id).unwrap(),
                    },
                    None => Action::Wait,
                };
                ActOutput { action, log_prob: 0.0, value: 0.0 }
            }
            PolicySpec::Learned(l) => {
                let pass = l.net.actor_pass(&l.params, obs, &mask.valid());
                let i = match mode {
                    ActMode::Sample => pick_index(&pass.probs, rng),
                    ActMode::Argmax => argmax(&pass.probs),
                };
                let value = l.net.value(&l.params, obs, &mut Vec::new());
                let a = pass.actions[i];
                let action = if a == mask.caps.action_count() {
                    Action::Wait
                } else {
                    let (p, h) = mask.split(a);
                    Action::Assign { patient_slot: p, hospital_slot: h }
                };
                ActOutput { action, log_prob: pass.probs[i].ln(), value }
            }
        }
    }

    /// Full action distribution over the admissible support plus wait (last).
    pub fn distribution(&self, state: &SimState, obs: &Observation, mask: &ActionMask) -> Vec<(Action, f64)> {
        let valid = mask.valid();
        let to_action = |a: usize| {
            if a == mask.caps.action_count() {
                Action::Wait
            } else {
                let (p, h) = mask.split(a);
                Action::Assign { patient_slot: p, hospital_slot: h }
            }
        };
        match self {
            PolicySpec::Random => {
                let p = 1.0 / (valid.len() + 1) as f64;
                valid.iter().map(|&a| to_action(a)).chain([Action::Wait]).map(|a| (a, p)).collect()
            }
            PolicySpec::Greedy => {
                let chosen = self.act(state, obs, mask, ActMode::Argmax, &mut rand::rngs::mock::StepRng::new(0, 0));
                vec![(chosen.action, 1.0)]
            }
            PolicySpec::Learned(l) => {
                let pass = l.net.actor_pass(&l.params, obs, &valid);
                pass.actions.iter().map(|&a| to_action(a)).zip(pass.probs).collect()
            }
        }
    }
}

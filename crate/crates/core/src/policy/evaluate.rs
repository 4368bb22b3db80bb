//! Closed-loop rollouts and their aggregate metrics.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::env::{EnvError, MciEnv};
use super::{ActMode, PolicySpec};
use crate::engine::SimState;
use crate::metrics::{completion_time, match_rate, mortality_rate};
use crate::types::Scenario;

/// First seed of the held-out evaluation range.
pub const EVAL_SEED_BASE: u64 = super::ppo::TRAIN_SEED_SPACE;

#[derive(Debug, Clone)]
pub struct Episode {
    pub total_reward: f64,
    pub decisions: usize,
    pub state: SimState,
}

/// Runs `policy` on `scenario` until the session ends. Learned policies act
/// in `mode`; the random policy draws from `rng_seed`.
pub fn rollout(policy: &PolicySpec, scenario: Arc<Scenario>, mode: ActMode, rng_seed: u64) -> Result<Episode, EnvError> {
    let probe = SimState::new(scenario.clone())?;
    let caps = policy.caps_for(&probe);
    let mut env = MciEnv::new(scenario, caps, policy.normalization())?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    while !env.is_done() {
        let (obs, mask) = env.observe();
        let out = policy.act(env.state(), &obs, &mask, mode, &mut rng);
        env.step(out.action)?;
    }
    Ok(Episode { total_reward: env.total_reward, decisions: env.decisions, state: env.into_state() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub policy: String,
    pub episodes: usize,
    pub mean_reward: f64,
    pub mortality_pct: f64,
    pub match_pct: f64,
    pub completion_ticks: f64,
    /// Per-episode totals in scenario order.
    pub rewards: Vec<f64>,
    pub mortality: Vec<f64>,
}

/// Mean metrics of `policy` over `scenarios`; episode `i` uses RNG seed
/// `rng_seed + i`. Episodes run in parallel and are reduced in order.
pub fn evaluate(
    policy: &PolicySpec,
    scenarios: &[Arc<Scenario>],
    mode: ActMode,
    rng_seed: u64,
) -> Result<MetricSummary, EnvError> {
    let rows = scenarios
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let ep = rollout(policy, s.clone(), mode, rng_seed.wrapping_add(i as u64))?;
            let log = ep.state.event_log();
            let mortality = mortality_rate(log).expect("engine log");
            let matched = match_rate(log).expect("engine log");
            let ticks = f64::from(completion_time(log).expect("engine log"));
            Ok((ep.total_reward, mortality, matched, ticks))
        })
        .collect::<Result<Vec<_>, EnvError>>()?;
    let n = rows.len().max(1) as f64;
    let mean = |f: fn(&(f64, f64, f64, f64)) -> f64| rows.iter().map(f).sum::<f64>() / n;
    Ok(MetricSummary {
        policy: policy.kind().to_string(),
        episodes: rows.len(),
        mean_reward: mean(|r| r.0),
        mortality_pct: mean(|r| r.1),
        match_pct: mean(|r| r.2),
        completion_ticks: mean(|r| r.3),
        rewards: rows.iter().map(|r| r.0).collect(),
        mortality: rows.iter().map(|r| r.1).collect(),
    })
}

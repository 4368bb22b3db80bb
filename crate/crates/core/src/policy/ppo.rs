//! Clipped-surrogate policy optimisation (PPO) with GAE and Adam.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::encode::{Caps, Normalization, Observation};
use super::env::{EnvError, MciEnv};
use super::network::ActorCritic;
use super::{ActMode, Action, LearnedPolicy, PolicySpec};
use crate::generate::{generate_scenario, GenerateError, GeneratorConfig};

/// Training scenarios draw seeds below this; evaluation uses seeds above it.
pub const TRAIN_SEED_SPACE: u64 = 1_000_000_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub clip: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub learning_rate: f64,
    pub max_grad_norm: f64,
    /// Multiplies environment rewards before they reach the learner.
    pub reward_scale: f64,
    pub n_envs: usize,
    pub rollout_len: usize,
    pub total_steps: usize,
    pub width: usize,
    pub caps: Caps,
    pub normalization: Normalization,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip: 0.2,
            gamma: 0.99,
            gae_lambda: 0.95,
            epochs: 4,
            minibatch: 256,
            entropy_coef: 0.01,
            value_coef: 0.5,
            learning_rate: 3e-4,
            max_grad_norm: 0.5,
            reward_scale: 0.01,
            n_envs: 8,
            rollout_len: 128,
            total_steps: 200_000,
            width: 128,
            caps: Caps::default(),
            normalization: Normalization::default(),
        }
    }
}

impl PpoConfig {
    pub fn steps_per_iteration(&self) -> usize {
        self.n_envs * self.rollout_len
    }

    pub fn iterations(&self) -> usize {
        self.total_steps / self.steps_per_iteration().max(1)
    }
}

/// Scenario family the trainer samples from. The config's seed is ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub generator: GeneratorConfig,
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid hyperparameter {field}: {reason}")]
    Config { field: &'static str, reason: String },
    #[error(transparent)]
    Generate(#[from] GenerateError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("training diverged at iteration {iteration}: non-finite {what}")]
    Diverged { iteration: usize, what: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingPoint {
    pub iteration: usize,
    pub steps: usize,
    pub mean_reward: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingCurve(pub Vec<TrainingPoint>);

impl TrainingCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,steps,mean_reward\n");
        for p in &self.0 {
            out.push_str(&format!("{},{},{:.6}\n", p.iteration, p.steps, p.mean_reward));
        }
        out
    }
}

/// One decision from a rollout, ready for the loss.
#[derive(Debug, Clone, PartialEq)]
pub struct PpoSample {
    pub obs: Observation,
    pub valid: Vec<usize>,
    /// Index into `valid` plus wait (wait is `valid.len()`).
    pub choice: usize,
    pub old_log_prob: f64,
    pub advantage: f64,
    pub ret: f64,
}

/// Per-sample loss `-min(r A, clip(r) A) + c_v (V - R)^2 - c_e H` and its
/// gradient, accumulated into `grad` scaled by `weight`.
pub fn ppo_loss_and_grad(
    net: &ActorCritic,
    params: &[f64],
    sample: &PpoSample,
    cfg: &PpoConfig,
    weight: f64,
    grad: &mut [f64],
) -> f64 {
    let pass = net.actor_pass(params, &sample.obs, &sample.valid);
    let probs = &pass.probs;
    let logp: Vec<f64> = probs.iter().map(|p| p.max(1e-300).ln()).collect();
    let a = sample.choice;
    let ratio = (logp[a] - sample.old_log_prob).exp();
    let adv = sample.advantage;
    let clipped = ratio.clamp(1.0 - cfg.clip, 1.0 + cfg.clip);
    let surrogate = (ratio * adv).min(clipped * adv);
    let entropy: f64 = -probs.iter().zip(&logp).map(|(p, l)| p * l).sum::<f64>();

    let mut acts = Vec::new();
    let v = net.value(params, &sample.obs, &mut acts);
    let loss = -surrogate + cfg.value_coef * (v - sample.ret).powi(2) - cfg.entropy_coef * entropy;

    // d(-surrogate)/d(log p_a): zero when the clipped branch is the active minimum.
    let clip_active = ratio * adv > clipped * adv;
    let g_logp = if clip_active { 0.0 } else { -adv * ratio };
    let dlogits: Vec<f64> = probs
        .iter()
        .zip(&logp)
        .enumerate()
        .map(|(i, (p, l))| {
            let onehot = if i == a { 1.0 } else { 0.0 };
            weight * (g_logp * (onehot - p) + cfg.entropy_coef * p * (l + entropy))
        })
        .collect();
    net.actor_backward(params, &sample.obs, &pass, &dlogits, grad);
    net.value_backward(params, &acts, weight * 2.0 * cfg.value_coef * (v - sample.ret), grad);
    loss
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        self.t += 1;
        let c1 = 1.0 - B1.powi(self.t);
        let c2 = 1.0 - B2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * grad[i];
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * grad[i] * grad[i];
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + 1e-8);
        }
    }
}

struct Worker {
    rng: ChaCha8Rng,
    env: MciEnv,
}

struct Transition {
    obs: Observation,
    valid: Vec<usize>,
    choice: usize,
    log_prob: f64,
    value: f64,
    reward: f64,
    done: bool,
}

struct Segment {
    transitions: Vec<Transition>,
    bootstrap: f64,
    finished: Vec<f64>,
}

fn fresh_env(env_cfg: &EnvConfig, cfg: &PpoConfig, rng: &mut ChaCha8Rng) -> Result<MciEnv, TrainError> {
    loop {
        let mut gen = env_cfg.generator.clone();
        gen.seed = rng.gen_range(0..TRAIN_SEED_SPACE);
        let scenario = Arc::new(generate_scenario(&gen)?);
        let env = MciEnv::new(scenario, cfg.caps, cfg.normalization)?;
        if !env.is_done() {
            return Ok(env);
        }
    }
}

fn collect(
    worker: &mut Worker,
    policy: &PolicySpec,
    net: &ActorCritic,
    params: &[f64],
    env_cfg: &EnvConfig,
    cfg: &PpoConfig,
) -> Result<Segment, TrainError> {
    let mut transitions = Vec::with_capacity(cfg.rollout_len);
    let mut finished = Vec::new();
    for _ in 0..cfg.rollout_len {
        let (obs, mask) = worker.env.observe();
        let valid = mask.valid();
        let out = policy.act(worker.env.state(), &obs, &mask, ActMode::Sample, &mut worker.rng);
        let choice = match out.action {
            Action::Wait => valid.len(),
            Action::Assign { patient_slot, hospital_slot } => {
                let flat = patient_slot * cfg.caps.max_hospitals + hospital_slot;
                valid.iter().position(|v| *v == flat).expect("sampled from the mask")
            }
        };
        let step = worker.env.step(out.action)?;
        transitions.push(Transition {
            obs,
            valid,
            choice,
            log_prob: out.log_prob,
            value: out.value,
            reward: step.reward.total * cfg.reward_scale,
            done: step.done,
        });
        if step.done {
            finished.push(worker.env.total_reward);
            worker.env = fresh_env(env_cfg, cfg, &mut worker.rng)?;
        }
    }
    let bootstrap = {
        let (obs, _) = worker.env.observe();
        net.value(params, &obs, &mut Vec::new())
    };
    Ok(Segment { transitions, bootstrap, finished })
}

fn gae(seg: &Segment, gamma: f64, lambda: f64) -> Vec<(f64, f64)> {
    let n = seg.transitions.len();
    let mut out = vec![(0.0, 0.0); n];
    let mut next_value = seg.bootstrap;
    let mut acc = 0.0;
    for i in (0..n).rev() {
        let t = &seg.transitions[i];
        let nonterminal = if t.done { 0.0 } else { 1.0 };
        let delta = t.reward + gamma * next_value * nonterminal - t.value;
        acc = delta + gamma * lambda * nonterminal * acc;
        out[i] = (acc, acc + t.value);
        next_value = t.value;
    }
    out
}

fn check(cfg: &PpoConfig) -> Result<(), TrainError> {
    let bad = |field, reason: &str| Err(TrainError::Config { field, reason: reason.into() });
    if !(cfg.clip > 0.0 && cfg.clip < 1.0) {
        return bad("clip", "must lie in (0, 1)");
    }
    if !(0.0..=1.0).contains(&cfg.gamma) || !(0.0..=1.0).contains(&cfg.gae_lambda) {
        return bad("gamma", "discount and GAE lambda must lie in [0, 1]");
    }
    if cfg.minibatch == 0 || cfg.n_envs == 0 || cfg.rollout_len == 0 || cfg.width == 0 {
        return bad("minibatch", "batch sizes and width must be positive");
    }
    if cfg.learning_rate.is_nan() || cfg.learning_rate <= 0.0 {
        return bad("learning_rate", "must be positive");
    }
    Ok(())
}

const GRAD_CHUNK: usize = 32;

/// Trains an actor-critic on scenarios drawn from `env_cfg`. Deterministic in
/// `seed`: rollouts and gradient sums are split into fixed chunks and reduced
/// in order, so results do not depend on the thread count.
pub fn train_ppo(env_cfg: &EnvConfig, cfg: &PpoConfig, seed: u64) -> Result<(PolicySpec, TrainingCurve), TrainError> {
    check(cfg)?;
    let net = ActorCritic::new(cfg.caps, cfg.width, cfg.normalization);
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let mut params = net.init_params(&mut master);
    let mut adam = Adam::new(params.len());

    let mut workers = (0..cfg.n_envs)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64 + 1);
            let env = fresh_env(env_cfg, cfg, &mut rng)?;
            Ok(Worker { rng, env })
        })
        .collect::<Result<Vec<_>, TrainError>>()?;

    let mut curve = TrainingCurve::default();
    let mut last_mean = 0.0;
    let iterations = cfg.iterations();
    for iteration in 0..iterations {
        let policy = PolicySpec::Learned(Arc::new(LearnedPolicy { net: net.clone(), params: params.clone(), training_seed: seed }));
        let segments = workers
            .par_iter_mut()
            .map(|w| collect(w, &policy, &net, &params, env_cfg, cfg))
            .collect::<Result<Vec<_>, _>>()?;

        let finished: Vec<f64> = segments.iter().flat_map(|s| s.finished.iter().copied()).collect();
        if !finished.is_empty() {
            last_mean = finished.iter().sum::<f64>() / finished.len() as f64;
        }

        let mut samples = Vec::with_capacity(cfg.steps_per_iteration());
        for seg in &segments {
            let targets = gae(seg, cfg.gamma, cfg.gae_lambda);
            for (t, (adv, ret)) in seg.transitions.iter().zip(targets) {
                samples.push(PpoSample {
                    obs: t.obs.clone(),
                    valid: t.valid.clone(),
                    choice: t.choice,
                    old_log_prob: t.log_prob,
                    advantage: adv,
                    ret,
                });
            }
        }
        let n = samples.len() as f64;
        let mean = samples.iter().map(|s| s.advantage).sum::<f64>() / n;
        let std = (samples.iter().map(|s| (s.advantage - mean).powi(2)).sum::<f64>() / n).sqrt();
        for s in &mut samples {
            s.advantage = (s.advantage - mean) / (std + 1e-8);
        }

        let mut order: Vec<usize> = (0..samples.len()).collect();
        for _ in 0..cfg.epochs {
            order.shuffle(&mut master);
            for batch in order.chunks(cfg.minibatch) {
                let weight = 1.0 / batch.len() as f64;
                let partials: Vec<(Vec<f64>, f64)> = batch
                    .par_chunks(GRAD_CHUNK)
                    .map(|chunk| {
                        let mut g = vec![0.0; params.len()];
                        let mut loss = 0.0;
                        for &i in chunk {
                            loss += weight * ppo_loss_and_grad(&net, &params, &samples[i], cfg, weight, &mut g);
                        }
                        (g, loss)
                    })
                    .collect();
                let mut grad = vec![0.0; params.len()];
                let mut loss = 0.0;
                for (g, l) in &partials {
                    grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
                    loss += l;
                }
                if !loss.is_finite() {
                    return Err(TrainError::Diverged { iteration, what: "loss" });
                }
                let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                if norm > cfg.max_grad_norm {
                    let s = cfg.max_grad_norm / norm;
                    grad.iter_mut().for_each(|g| *g *= s);
                }
                adam.step(&mut params, &grad, cfg.learning_rate);
                if params.iter().any(|p| !p.is_finite()) {
                    return Err(TrainError::Diverged { iteration, what: "parameters" });
                }
            }
        }
        curve.0.push(TrainingPoint { iteration, steps: (iteration + 1) * cfg.steps_per_iteration(), mean_reward: last_mean });
    }

    let learned = LearnedPolicy::quantized(net, &params, seed);
    Ok((PolicySpec::Learned(Arc::new(learned)), curve))
}

//! Small dense networks with hand-written backprop, and the actor-critic
//! built from them.
//!
//! The actor scores every admissible (patient, hospital) pair with one shared
//! MLP over pair features, plus a linear "wait" head on the global features.
//! The critic is a separate MLP over the flat observation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::encode::{
    Caps, Normalization, Observation, GLOBAL_FEATURES, HOSPITAL_FEATURES, H_CAP, H_LEVEL, H_MASK, H_TRAVEL,
    PATIENT_FEATURES, P_ELAPSED, P_MASK, P_REQ, P_SEVERITY, P_WINDOW,
};
use crate::reward::{patient_reward, RewardCase};
use crate::types::SeverityCode;

/// Patient + hospital + global features, the per-kind match indicators,
/// match fraction, projected time factor, and projected reward.
pub const PAIR_FEATURES: usize = PATIENT_FEATURES + HOSPITAL_FEATURES + GLOBAL_FEATURES + 8 + 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mlp {
    pub sizes: Vec<usize>,
}

impl Mlp {
    pub fn new(sizes: Vec<usize>) -> Self {
        assert!(sizes.len() >= 2 && *sizes.last().unwrap() == 1, "scalar-output MLP");
        Self { sizes }
    }

    pub fn param_count(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Glorot-uniform weights, zero biases; the last layer scaled by `out_gain`.
    pub fn init(&self, rng: &mut impl Rng, out_gain: f64, params: &mut [f64]) {
        let mut o = 0;
        let layers = self.sizes.len() - 1;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let mut bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            if l + 1 == layers {
                bound *= out_gain;
            }
            for p in &mut params[o..o + fan_in * fan_out] {
                *p = rng.gen_range(-bound..=bound);
            }
            o += fan_in * fan_out;
            params[o..o + fan_out].fill(0.0);
            o += fan_out;
        }
    }

    /// Returns the scalar output; `acts` receives every layer's activations.
    pub fn forward(&self, params: &[f64], x: &[f64], acts: &mut Vec<Vec<f64>>) -> f64 {
        acts.clear();
        acts.push(x.to_vec());
        let layers = self.sizes.len() - 1;
        let mut o = 0;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &params[o..o + n_in * n_out];
            let bias = &params[o + n_in * n_out..o + n_in * n_out + n_out];
            let input = acts.last().unwrap();
            let mut out = bias.to_vec();
            for (j, row) in weights.chunks_exact(n_in).enumerate() {
                out[j] += row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>();
            }
            if l + 1 < layers {
                out.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(out);
            o += n_in * n_out + n_out;
        }
        acts.last().unwrap()[0]
    }

    /// Accumulates `dout * d(output)/d(params)` into `grad`.
    pub fn backward(&self, params: &[f64], acts: &[Vec<f64>], dout: f64, grad: &mut [f64]) {
        let mut offsets = Vec::with_capacity(self.sizes.len());
        let mut o = 0;
        for w in self.sizes.windows(2) {
            offsets.push(o);
            o += w[0] * w[1] + w[1];
        }
        let mut delta = vec![dout];
        for l in (0..self.sizes.len() - 1).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let o = offsets[l];
            let input = &acts[l];
            for j in 0..n_out {
                let d = delta[j];
                if d == 0.0 {
                    continue;
                }
                let row = &mut grad[o + j * n_in..o + (j + 1) * n_in];
                row.iter_mut().zip(input).for_each(|(g, a)| *g += d * a);
                grad[o + n_in * n_out + j] += d;
            }
            if l == 0 {
                break;
            }
            let weights = &params[o..o + n_in * n_out];
            let mut prev = vec![0.0; n_in];
            for (j, row) in weights.chunks_exact(n_in).enumerate() {
                let d = delta[j];
                if d != 0.0 {
                    prev.iter_mut().zip(row).for_each(|(p, w)| *p += d * w);
                }
            }
            for (p, a) in prev.iter_mut().zip(input) {
                *p *= 1.0 - a * a;
            }
            delta = prev;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorCritic {
    pub caps: Caps,
    pub width: usize,
    pub norm: Normalization,
    pub actor: Mlp,
    pub critic: Mlp,
}

/// Stable softmax. Entries of `-inf` get probability 0.
pub fn masked_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Forward pass over one observation's admissible actions.
pub struct ActorPass {
    /// Flat action ids; the last is always wait (`caps.action_count()`).
    pub actions: Vec<usize>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    acts: Vec<Vec<Vec<f64>>>,
}

impl ActorCritic {
    pub fn new(caps: Caps, width: usize, norm: Normalization) -> Self {
        Self {
            caps,
            width,
            norm,
            actor: Mlp::new(vec![PAIR_FEATURES, width, width, 1]),
            critic: Mlp::new(vec![caps.observation_len(), width, width, 1]),
        }
    }

    fn wait_offset(&self) -> usize {
        self.actor.param_count()
    }

    fn critic_offset(&self) -> usize {
        self.wait_offset() + GLOBAL_FEATURES + 1
    }

    pub fn param_count(&self) -> usize {
        self.critic_offset() + self.critic.param_count()
    }

    pub fn init_params(&self, rng: &mut impl Rng) -> Vec<f64> {
        let mut params = vec![0.0; self.param_count()];
        let (a, c) = (self.wait_offset(), self.critic_offset());
        self.actor.init(rng, 0.01, &mut params[..a]);
        self.critic.init(rng, 1.0, &mut params[c..]);
        params
    }

    pub fn pair_features(&self, obs: &Observation, p: usize, h: usize) -> Vec<f64> {
        let pf = obs.patient(p);
        let hf = obs.hospital(h);
        let mut x = Vec::with_capacity(PAIR_FEATURES);
        x.extend_from_slice(pf);
        x.extend_from_slice(hf);
        x.extend_from_slice(obs.global());
        let (mut req, mut matched) = (0.0, 0.0);
        for k in 0..8 {
            let m = if pf[P_REQ + k] > 0.0 && hf[H_CAP + k] > 0.0 { 1.0 } else { 0.0 };
            req += pf[P_REQ + k];
            matched += m;
            x.push(m);
        }
        let pq = if req > 0.0 { matched / req } else { 1.0 };
        let pt = if pf[P_WINDOW] > 0.0 {
            let travel = hf[H_TRAVEL] * self.norm.travel_scale;
            let window = pf[P_WINDOW] * self.norm.window_scale;
            (1.0 - pf[P_ELAPSED] - travel / window).max(0.0)
        } else {
            1.0
        };
        let severity = [SeverityCode::Minor, SeverityCode::Severe, SeverityCode::Critical]
            .into_iter()
            .zip(&pf[P_SEVERITY..P_SEVERITY + 3])
            .find_map(|(s, v)| (*v > 0.0).then_some(s));
        let level = (0..3).find(|l| hf[H_LEVEL + l] > 0.0).map(|l| l as u8 + 1);
        let projected = match (severity, level, pf[P_MASK] > 0.0 && hf[H_MASK] > 0.0) {
            (Some(s), Some(l), true) => {
                patient_reward(RewardCase::arrival(s).unwrap(), s, Some(l), pt, pq).unwrap_or(0.0) / 600.0
            }
            _ => 0.0,
        };
        x.push(pq);
        x.push(pt);
        x.push(projected);
        x
    }

    pub fn actor_pass(&self, params: &[f64], obs: &Observation, valid: &[usize]) -> ActorPass {
        let mut actions = Vec::with_capacity(valid.len() + 1);
        let mut logits = Vec::with_capacity(valid.len() + 1);
        let mut acts = Vec::with_capacity(valid.len());
        let actor_params = &params[..self.wait_offset()];
        for &a in valid {
            let (p, h) = (a / self.caps.max_hospitals, a % self.caps.max_hospitals);
            let x = self.pair_features(obs, p, h);
            let mut cache = Vec::new();
            logits.push(self.actor.forward(actor_params, &x, &mut cache));
            acts.push(cache);
            actions.push(a);
        }
        let w = &params[self.wait_offset()..self.critic_offset()];
        let wait = w[GLOBAL_FEATURES] + obs.global().iter().zip(w).map(|(g, w)| g * w).sum::<f64>();
        actions.push(self.caps.action_count());
        logits.push(wait);
        let probs = masked_softmax(&logits);
        ActorPass { actions, logits, probs, acts }
    }

    /// Accumulates gradients of `sum_i dlogits[i] * logits[i]` into `grad`.
    pub fn actor_backward(&self, params: &[f64], obs: &Observation, pass: &ActorPass, dlogits: &[f64], grad: &mut [f64]) {
        let a = self.wait_offset();
        let (actor_grad, rest) = grad.split_at_mut(a);
        for (cache, &d) in pass.acts.iter().zip(dlogits) {
            self.actor.backward(&params[..a], cache, d, actor_grad);
        }
        let d = *dlogits.last().unwrap();
        for (g, x) in rest[..GLOBAL_FEATURES].iter_mut().zip(obs.global()) {
            *g += d * x;
        }
        rest[GLOBAL_FEATURES] += d;
    }

    pub fn value(&self, params: &[f64], obs: &Observation, acts: &mut Vec<Vec<f64>>) -> f64 {
        self.critic.forward(&params[self.critic_offset()..], &obs.data, acts)
    }

    pub fn value_backward(&self, params: &[f64], acts: &[Vec<f64>], dout: f64, grad: &mut [f64]) {
        let c = self.critic_offset();
        self.critic.backward(&params[c..], acts, dout, &mut grad[c..]);
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn softmax_is_shift_invariant_and_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let n = rng.gen_range(1..20);
            let z: Vec<f64> = (0..n).map(|_| rng.gen_range(-30.0..30.0)).collect();
            let c = rng.gen_range(-1e3..1e3);
            let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
            let (p, q) = (masked_softmax(&z), masked_softmax(&shifted));
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for (a, b) in p.iter().zip(&q) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn mlp_backward_matches_finite_differences() {
        let mlp = Mlp::new(vec![3, 4, 4, 1]);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut params = vec![0.0; mlp.param_count()];
        mlp.init(&mut rng, 1.0, &mut params);
        params.iter_mut().for_each(|p| *p += rng.gen_range(-0.1..0.1));
        let x = [0.3, -0.7, 1.1];
        let mut acts = Vec::new();
        mlp.forward(&params, &x, &mut acts);
        let mut grad = vec![0.0; params.len()];
        mlp.backward(&params, &acts, 1.0, &mut grad);
        let eps = 1e-6;
        for i in 0..params.len() {
            let mut hi = params.clone();
            hi[i] += eps;
            let mut lo = params.clone();
            lo[i] -= eps;
            let fd = (mlp.forward(&hi, &x, &mut acts) - mlp.forward(&lo, &x, &mut acts)) / (2.0 * eps);
            assert!((fd - grad[i]).abs() < 1e-7, "param {i}: {fd} vs {}", grad[i]);
        }
    }

    #[test]
    fn param_count_covers_all_parts() {
        let net = ActorCritic::new(Caps::new(4, 2), 8, Normalization::default());
        let actor = PAIR_FEATURES * 8 + 8 + 8 * 8 + 8 + 8 + 1;
        let obs = Caps::new(4, 2).observation_len();
        let critic = obs * 8 + 8 + 8 * 8 + 8 + 8 + 1;
        assert_eq!(net.param_count(), actor + GLOBAL_FEATURES + 1 + critic);
    }
}

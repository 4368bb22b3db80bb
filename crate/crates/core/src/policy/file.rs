//! Policy file: `MCIP`, u32 version, u32 header length, JSON header, u64
//! parameter count, then the parameters as little-endian f32. All integers
//! are little-endian.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::encode::{Caps, Normalization};
use super::network::ActorCritic;
use super::{LearnedPolicy, PolicySpec};

pub const POLICY_FILE_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"MCIP";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyHeader {
    pub caps: Caps,
    pub width: usize,
    pub normalization: Normalization,
    pub training_seed: u64,
    pub actor_sizes: Vec<usize>,
    pub critic_sizes: Vec<usize>,
}

#[derive(Debug, Error)]
pub enum PolicyFileError {
    #[error("not a policy file")]
    BadMagic,
    #[error("unsupported policy file version {0}")]
    Version(u32),
    #[error("truncated policy file")]
    Truncated,
    #[error("bad header: {0}")]
    Header(String),
    #[error("parameter count {found} does not match the network shape ({expected})")]
    ParamCount { expected: usize, found: usize },
    #[error("non-finite parameter at index {0}")]
    NonFinite(usize),
    #[error("only learned policies can be written to a file")]
    NotLearned,
}

pub fn write_policy(policy: &PolicySpec) -> Result<Vec<u8>, PolicyFileError> {
    let PolicySpec::Learned(l) = policy else { return Err(PolicyFileError::NotLearned) };
    let header = PolicyHeader {
        caps: l.net.caps,
        width: l.net.width,
        normalization: l.net.norm,
        training_seed: l.training_seed,
        actor_sizes: l.net.actor.sizes.clone(),
        critic_sizes: l.net.critic.sizes.clone(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(20 + json.len() + 4 * l.params.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&POLICY_FILE_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&(l.params.len() as u64).to_le_bytes());
    for p in &l.params {
        out.extend_from_slice(&(*p as f32).to_le_bytes());
    }
    Ok(out)
}

fn take<'a>(bytes: &mut &'a [u8], n: usize) -> Result<&'a [u8], PolicyFileError> {
    if bytes.len() < n {
        return Err(PolicyFileError::Truncated);
    }
    let (head, rest) = bytes.split_at(n);
    *bytes = rest;
    Ok(head)
}

pub fn read_policy(mut bytes: &[u8]) -> Result<PolicySpec, PolicyFileError> {
    let b = &mut bytes;
    if take(b, 4)? != MAGIC {
        return Err(PolicyFileError::BadMagic);
    }
    let version = u32::from_le_bytes(take(b, 4)?.try_into().unwrap());
    if version != POLICY_FILE_VERSION {
        return Err(PolicyFileError::Version(version));
    }
    let len = u32::from_le_bytes(take(b, 4)?.try_into().unwrap()) as usize;
    let header: PolicyHeader =
        serde_json::from_slice(take(b, len)?).map_err(|e| PolicyFileError::Header(e.to_string()))?;
    let net = ActorCritic::new(header.caps, header.width, header.normalization);
    if net.actor.sizes != header.actor_sizes || net.critic.sizes != header.critic_sizes {
        return Err(PolicyFileError::Header("layer sizes disagree with caps and width".into()));
    }
    let count = u64::from_le_bytes(take(b, 8)?.try_into().unwrap()) as usize;
    if count != net.param_count() {
        return Err(PolicyFileError::ParamCount { expected: net.param_count(), found: count });
    }
    let raw = take(b, count.checked_mul(4).ok_or(PolicyFileError::Truncated)?)?;
    if !b.is_empty() {
        return Err(PolicyFileError::Header("trailing bytes".into()));
    }
    let mut params = Vec::with_capacity(count);
    for (i, c) in raw.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(c.try_into().unwrap());
        if !v.is_finite() {
            return Err(PolicyFileError::NonFinite(i));
        }
        params.push(f64::from(v));
    }
    Ok(PolicySpec::Learned(Arc::new(LearnedPolicy { net, params, training_seed: header.training_seed })))
}

//! Resource matching between a patient's needs and a hospital's availability.

use serde::{Deserialize, Serialize};

use crate::types::{ResourceKind, ResourceVector};

/// Outcome of matching a binary requirement vector against available counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceMatch {
    /// Number of required kinds that are available (`q_i`).
    pub q: u32,
    /// Binary vector of the required kinds that are available.
    pub matched: ResourceVector,
}

/// Counts the required kinds with at least one unit available.
///
/// `required` is treated as binary: any nonzero entry means "needed".
pub fn resource_match_count(required: &ResourceVector, available: &ResourceVector) -> ResourceMatch {
    let mut matched = ResourceVector::ZERO;
    for kind in ResourceKind::ALL {
        if required[kind] > 0 && available[kind] >= 1 {
            matched[kind] = 1;
        }
    }
    ResourceMatch { q: matched.count_nonzero(), matched }
}

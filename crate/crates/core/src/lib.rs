//! Mass-casualty incident simulation: scenario generation, a deterministic
//! tick-based engine, the assignment reward model, outcome metrics, and
//! assignment policies (random, greedy, PPO-trained).

pub mod engine;
pub mod fixtures;
pub mod generate;
pub mod matching;
pub mod metrics;
pub mod policy;
pub mod reward;
pub mod types;
pub mod validate;

pub use engine::{init_session, AssignmentSource, Event, EventKind, PatientStatus, Rejection, SimState};
pub use generate::{generate_scenario, GeneratorConfig};
pub use types::{HospitalId, PatientId, ResourceKind, ResourceVector, Scenario, SeverityCode};

//! Archived sessions: scenario, full event log, commands and report.

use std::collections::HashMap;
use std::io::ErrorKind;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use mci_core::engine::{events_to_ndjson, replay, ActionLog};
use mci_core::metrics::OutcomeReport;
use mci_core::policy::PolicyKind;
use mci_core::validate::validate_scenario;
use mci_core::{Event, EventKind, Scenario, SimState};
use serde::{Deserialize, Serialize};

use crate::error::ApiError;
use crate::session::{Mode, Session};

pub const ARCHIVE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Archive {
    pub schema_version: u32,
    pub session_id: String,
    pub mode: Mode,
    pub policy: PolicyKind,
    pub scenario: Scenario,
    pub events: Vec<Event>,
    pub actions: ActionLog,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<OutcomeReport>,
}

impl Archive {
    pub fn from_session(s: &Session) -> Self {
        Archive {
            schema_version: ARCHIVE_SCHEMA_VERSION,
            session_id: s.id.clone(),
            mode: s.mode,
            policy: s.policy.kind(),
            scenario: (**s.state().scenario()).clone(),
            events: s.state().event_log().to_vec(),
            actions: s.action_log(),
            report: s.report().cloned(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("archive serializes")
    }
}

/// Structural checks on an archived record. Returns every problem found.
pub fn validate_archive(a: &Archive) -> Vec<String> {
    let mut problems = Vec::new();
    if a.schema_version != ARCHIVE_SCHEMA_VERSION {
        problems.push(format!("schema_version {} is not {ARCHIVE_SCHEMA_VERSION}", a.schema_version));
    }
    for v in validate_scenario(&a.scenario) {
        problems.push(format!("scenario: {v:?}"));
    }
    if !matches!(a.events.first().map(|e| &e.kind), Some(EventKind::SessionStarted { .. })) {
        problems.push("log does not open with session_started".into());
    }
    for (i, e) in a.events.iter().enumerate() {
        if e.seq != i as u64 {
            problems.push(format!("event {i} has seq {}", e.seq));
            break;
        }
    }
    if a.events.windows(2).any(|w| w[1].time < w[0].time) {
        problems.push("timestamps decrease".into());
    }
    if a.events.iter().any(|e| matches!(e.kind, EventKind::Warning { .. })) {
        problems.push("warnings are never logged".into());
    }
    if ActionLog::from_events(&a.events, Some(a.actions.final_clock)) != a.actions {
        problems.push("action log disagrees with the event log".into());
    }
    problems
}

/// Replays an archive and checks the rebuilt log matches the stored one.
pub fn rebuild(a: &Archive) -> Result<SimState, ApiError> {
    let problems = validate_archive(a);
    if !problems.is_empty() {
        return Err(ApiError::Storage(format!("archive {} is invalid: {}", a.session_id, problems.join("; "))));
    }
    let state = replay(Arc::new(a.scenario.clone()), &a.actions)
        .map_err(|e| ApiError::Storage(format!("archive {} does not replay: {e}", a.session_id)))?;
    if events_to_ndjson(state.event_log()) != events_to_ndjson(&a.events) {
        return Err(ApiError::Storage(format!("archive {} replays to a different log", a.session_id)));
    }
    Ok(state)
}

fn check_id(id: &str) -> Result<(), ApiError> {
    let ok = !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
    if ok {
        Ok(())
    } else {
        Err(ApiError::NotFound(format!("no archive '{id}'")))
    }
}

pub enum ArchiveStore {
    Memory(Mutex<HashMap<String, String>>),
    /// One `<session_id>.json` per archive.
    Dir(PathBuf),
}

impl ArchiveStore {
    pub fn memory() -> Self {
        ArchiveStore::Memory(Mutex::new(HashMap::new()))
    }

    pub fn save(&self, a: &Archive) -> Result<(), ApiError> {
        check_id(&a.session_id)?;
        let text = a.to_json();
        match self {
            ArchiveStore::Memory(m) => {
                m.lock().expect("store lock").insert(a.session_id.clone(), text);
                Ok(())
            }
            ArchiveStore::Dir(dir) => {
                let storage = |e: std::io::Error| ApiError::Storage(format!("cannot write archive {}: {e}", a.session_id));
                std::fs::create_dir_all(dir).map_err(storage)?;
                let path = dir.join(format!("{}.json", a.session_id));
                let tmp = dir.join(format!(".{}.json.tmp", a.session_id));
                std::fs::write(&tmp, text).map_err(storage)?;
                std::fs::rename(&tmp, &path).map_err(storage)
            }
        }
    }

    pub fn load(&self, id: &str) -> Result<Archive, ApiError> {
        check_id(id)?;
        let missing = || ApiError::NotFound(format!("no archive '{id}'"));
        let text = match self {
            ArchiveStore::Memory(m) => m.lock().expect("store lock").get(id).cloned().ok_or_else(missing)?,
            ArchiveStore::Dir(dir) => match std::fs::read_to_string(dir.join(format!("{id}.json"))) {
                Ok(t) => t,
                Err(e) if e.kind() == ErrorKind::NotFound => return Err(missing()),
                Err(e) => return Err(ApiError::Storage(format!("cannot read archive {id}: {e}"))),
            },
        };
        serde_json::from_str(&text).map_err(|e| ApiError::Storage(format!("archive {id} is corrupt: {e}")))
    }
}

//! HTTP service for live incident sessions: scenario library, session
//! commands, state snapshots, a server-sent event stream and archives.

pub mod error;
pub mod session;
pub mod store;
mod stream;

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use mci_core::generate::{complex_scenario, generate_scenario, standard_scenario};
use mci_core::policy::{LearnedPolicy, PolicyKind, PolicySpec};
use mci_core::validate::validate_scenario;
use mci_core::{GeneratorConfig, Scenario};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tokio::sync::Mutex;

pub use error::{ApiError, ErrorBody};
pub use session::{CommandAck, Mode, Session, SessionCommand, SessionSnapshot, SuggestionRecord, SuggestionStatus};
pub use store::{rebuild, validate_archive, Archive, ArchiveStore, ARCHIVE_SCHEMA_VERSION};

/// Pacing ceiling in ticks per second.
pub const MAX_PACING: f64 = 1000.0;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Ticks per second for sessions that do not set their own.
    pub default_pacing: f64,
    /// Where archives go; in memory when unset.
    pub archive_dir: Option<PathBuf>,
    /// Seed of the preloaded `standard` and `complex` scenarios.
    pub preset_seed: u64,
    pub learned_policy: Option<Arc<LearnedPolicy>>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self { default_pacing: 1.0, archive_dir: None, preset_seed: 0, learned_policy: None }
    }
}

pub struct SessionHandle {
    pub session: Mutex<Session>,
}

struct Inner {
    config: ServiceConfig,
    scenarios: RwLock<BTreeMap<String, Arc<Scenario>>>,
    sessions: RwLock<HashMap<String, Arc<SessionHandle>>>,
    store: ArchiveStore,
    counter: AtomicU64,
}

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub scenario_id: String,
    pub patients: usize,
    pub hospitals: usize,
    pub horizon_min: u32,
    pub fleet_size: u32,
    pub seed: u64,
}

impl ScenarioSummary {
    fn of(key: &str, s: &Scenario) -> Self {
        Self {
            scenario_id: key.to_string(),
            patients: s.patients.len(),
            hospitals: s.hospitals.len(),
            horizon_min: s.horizon_min,
            fleet_size: s.fleet.size_max,
            seed: s.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionCreated {
    pub session_id: String,
    pub scenario_id: String,
    pub mode: Mode,
    pub policy: PolicyKind,
    pub pacing: f64,
    pub patients: usize,
    pub clock: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveLoaded {
    pub archive: Archive,
    pub replayed_clock: u32,
    pub replayed_events: usize,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum NewScenario {
    Inline { scenario: Box<Scenario> },
    Generate { generate: Box<GeneratorConfig> },
    Preset { preset: String, #[serde(default)] seed: u64 },
}

fn parse<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::Validation(format!("invalid request body: {e}")))
}

fn preset(name: &str, seed: u64) -> Result<Scenario, ApiError> {
    let generated = match name {
        "standard" => standard_scenario(seed),
        "complex" => complex_scenario(seed),
        other => return Err(ApiError::Validation(format!("unknown preset '{other}'"))),
    };
    generated.map_err(|e| ApiError::Validation(e.to_string()))
}

fn check_scenario(s: &Scenario) -> Result<(), ApiError> {
    let violations = validate_scenario(s);
    if violations.is_empty() {
        Ok(())
    } else {
        Err(ApiError::Validation(format!("scenario is invalid: {violations:?}")))
    }
}

impl AppState {
    /// Builds the registry with `standard` and `complex` preloaded.
    pub fn new(config: ServiceConfig) -> Result<Self, ApiError> {
        if !(0.0..=MAX_PACING).contains(&config.default_pacing) {
            return Err(ApiError::Validation(format!("default pacing must lie in [0, {MAX_PACING}]")));
        }
        let mut scenarios = BTreeMap::new();
        for name in ["standard", "complex"] {
            scenarios.insert(name.to_string(), Arc::new(preset(name, config.preset_seed)?));
        }
        let store = match &config.archive_dir {
            Some(dir) => ArchiveStore::Dir(dir.clone()),
            None => ArchiveStore::memory(),
        };
        Ok(Self {
            inner: Arc::new(Inner {
                config,
                scenarios: RwLock::new(scenarios),
                sessions: RwLock::new(HashMap::new()),
                store,
                counter: AtomicU64::new(0),
            }),
        })
    }

    pub fn store(&self) -> &ArchiveStore {
        &self.inner.store
    }

    pub fn scenario_summaries(&self) -> Vec<ScenarioSummary> {
        let lib = self.inner.scenarios.read().expect("scenario lock");
        lib.iter().map(|(k, s)| ScenarioSummary::of(k, s)).collect()
    }

    pub fn scenario(&self, id: &str) -> Result<Arc<Scenario>, ApiError> {
        let lib = self.inner.scenarios.read().expect("scenario lock");
        lib.get(id).cloned().ok_or_else(|| ApiError::NotFound(format!("no scenario '{id}'")))
    }

    /// Adds a scenario under its own id. Existing ids are not replaced.
    pub fn add_scenario(&self, scenario: Scenario) -> Result<ScenarioSummary, ApiError> {
        check_scenario(&scenario)?;
        let key = scenario.scenario_id.clone();
        if key.is_empty() {
            return Err(ApiError::Validation("scenario_id must not be empty".into()));
        }
        let mut lib = self.inner.scenarios.write().expect("scenario lock");
        if lib.contains_key(&key) {
            return Err(ApiError::Validation(format!("scenario '{key}' already exists")));
        }
        let summary = ScenarioSummary::of(&key, &scenario);
        lib.insert(key, Arc::new(scenario));
        Ok(summary)
    }

    pub fn session(&self, id: &str) -> Result<Arc<SessionHandle>, ApiError> {
        let sessions = self.inner.sessions.read().expect("session lock");
        sessions.get(id).cloned().ok_or_else(|| ApiError::NotFound(format!("no session '{id}'")))
    }

    /// Creates a session from a `POST /sessions` body.
    pub fn create_session(&self, body: &Value) -> Result<SessionCreated, ApiError> {
        let obj = body.as_object().ok_or_else(|| ApiError::Validation("body must be a JSON object".into()))?;
        let mode: Mode = match obj.get("mode") {
            Some(Value::String(s)) => s.parse()?,
            Some(_) => return Err(ApiError::Validation("mode must be a string".into())),
            None => return Err(ApiError::Validation("mode is required".into())),
        };
        let pacing = match obj.get("pacing") {
            None | Some(Value::Null) => self.inner.config.default_pacing,
            Some(v) => v.as_f64().ok_or_else(|| ApiError::Validation("pacing must be a number".into()))?,
        };
        if !(0.0..=MAX_PACING).contains(&pacing) {
            return Err(ApiError::Validation(format!("pacing must lie in [0, {MAX_PACING}]")));
        }
        let kind: PolicyKind = match obj.get("policy") {
            None | Some(Value::Null) => {
                if self.inner.config.learned_policy.is_some() {
                    PolicyKind::Learned
                } else {
                    PolicyKind::Greedy
                }
            }
            Some(Value::String(s)) => s.parse().map_err(ApiError::Validation)?,
            Some(_) => return Err(ApiError::Validation("policy must be a string".into())),
        };
        let policy = match kind {
            PolicyKind::Random => PolicySpec::Random,
            PolicyKind::Greedy => PolicySpec::Greedy,
            PolicyKind::Learned => PolicySpec::Learned(
                self.inner
                    .config
                    .learned_policy
                    .clone()
                    .ok_or_else(|| ApiError::Validation("no learned policy is loaded".into()))?,
            ),
        };
        let seed = match obj.get("seed") {
            None | Some(Value::Null) => 0,
            Some(v) => v.as_u64().ok_or_else(|| ApiError::Validation("seed must be a non-negative integer".into()))?,
        };
        let scenario = match (obj.get("scenario_id"), obj.get("scenario")) {
            (Some(Value::String(id)), None) => self.scenario(id)?,
            (None, Some(inline)) => {
                let s: Scenario = serde_json::from_value(inline.clone())
                    .map_err(|e| ApiError::Validation(format!("invalid scenario: {e}")))?;
                check_scenario(&s)?;
                Arc::new(s)
            }
            _ => return Err(ApiError::Validation("give exactly one of scenario_id (string) or scenario".into())),
        };

        let n = self.inner.counter.fetch_add(1, Ordering::Relaxed) + 1;
        let id = format!("s{n:06}");
        let session = Session::new(id.clone(), scenario.clone(), mode, pacing, policy, seed)?;
        let created = SessionCreated {
            session_id: id.clone(),
            scenario_id: scenario.scenario_id.clone(),
            mode,
            policy: kind,
            pacing,
            patients: scenario.patients.len(),
            clock: session.state().clock(),
        };
        let handle = Arc::new(SessionHandle { session: Mutex::new(session) });
        self.inner.sessions.write().expect("session lock").insert(id, handle);
        Ok(created)
    }

    /// Applies a command under the session lock, then handles pacing and
    /// archiving.
    pub async fn command(&self, id: &str, cmd: SessionCommand) -> Result<CommandAck, ApiError> {
        let handle = self.session(id)?;
        let mut s = handle.session.lock().await;
        let ack = s.apply(&cmd)?;
        if matches!(cmd, SessionCommand::Start) && s.pacing > 0.0 && !s.is_running() {
            s.ticker = Some(self.spawn_ticker(handle.clone(), s.pacing));
        }
        if s.state().is_terminal() {
            s.stop_ticker();
            self.finalize(&mut s)?;
        }
        Ok(ack)
    }

    fn finalize(&self, s: &mut Session) -> Result<(), ApiError> {
        if s.report().is_some() {
            return Ok(());
        }
        s.finalize();
        self.inner.store.save(&Archive::from_session(s))
    }

    fn spawn_ticker(&self, handle: Arc<SessionHandle>, pacing: f64) -> tokio::task::JoinHandle<()> {
        let app = self.clone();
        let period = Duration::from_secs_f64(1.0 / pacing);
        tokio::spawn(async move {
            let mut interval = tokio::time::interval_at(tokio::time::Instant::now() + period, period);
            interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
            loop {
                interval.tick().await;
                let mut s = handle.session.lock().await;
                if s.state().is_terminal() || s.tick().is_err() || s.state().is_terminal() {
                    s.ticker = None;
                    let _ = app.finalize(&mut s);
                    break;
                }
            }
        })
    }

    pub async fn snapshot(&self, id: &str) -> Result<SessionSnapshot, ApiError> {
        Ok(self.session(id)?.session.lock().await.snapshot())
    }

    /// Archives the session as it stands now.
    pub async fn persist(&self, id: &str) -> Result<Archive, ApiError> {
        let handle = self.session(id)?;
        let mut s = handle.session.lock().await;
        s.finalize();
        let archive = Archive::from_session(&s);
        self.inner.store.save(&archive)?;
        Ok(archive)
    }

    pub fn load_archive(&self, id: &str) -> Result<ArchiveLoaded, ApiError> {
        let archive = self.inner.store.load(id)?;
        let state = rebuild(&archive)?;
        Ok(ArchiveLoaded { replayed_clock: state.clock(), replayed_events: state.event_log().len(), archive })
    }
}

async fn list_scenarios(State(app): State<AppState>) -> Json<Vec<ScenarioSummary>> {
    Json(app.scenario_summaries())
}

async fn get_scenario(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<Scenario>, ApiError> {
    Ok(Json((*app.scenario(&id)?).clone()))
}

async fn post_scenario(State(app): State<AppState>, body: Bytes) -> Result<impl IntoResponse, ApiError> {
    let scenario = match parse::<NewScenario>(&body)? {
        NewScenario::Inline { scenario } => *scenario,
        NewScenario::Generate { generate } => generate_scenario(&generate).map_err(|e| ApiError::Validation(e.to_string()))?,
        NewScenario::Preset { preset: name, seed } => preset(&name, seed)?,
    };
    Ok((StatusCode::CREATED, Json(app.add_scenario(scenario)?)))
}

async fn post_session(State(app): State<AppState>, body: Bytes) -> Result<impl IntoResponse, ApiError> {
    let body: Value = parse(&body)?;
    Ok((StatusCode::CREATED, Json(app.create_session(&body)?)))
}

async fn post_command(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<CommandAck>, ApiError> {
    app.session(&id)?;
    let cmd: SessionCommand = parse(&body)?;
    Ok(Json(app.command(&id, cmd).await?))
}

async fn get_state(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<SessionSnapshot>, ApiError> {
    Ok(Json(app.snapshot(&id).await?))
}

async fn post_persist(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<Archive>, ApiError> {
    Ok(Json(app.persist(&id).await?))
}

async fn get_archive(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<ArchiveLoaded>, ApiError> {
    Ok(Json(app.load_archive(&id)?))
}

#[derive(Debug, Deserialize)]
struct EventsQuery {
    from: Option<u64>,
}

async fn get_events(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<EventsQuery>,
    headers: HeaderMap,
) -> Result<impl IntoResponse, ApiError> {
    let handle = app.session(&id)?;
    let resume = headers
        .get("last-event-id")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.trim().parse::<u64>().ok())
        .map(|seq| seq + 1);
    let from = q.from.or(resume).unwrap_or(0);
    Ok(stream::sse(handle, from).await)
}

async fn not_found() -> ApiError {
    ApiError::NotFound("no such route".into())
}

pub fn router(app: AppState) -> Router {
    Router::new()
        .route("/scenarios", get(list_scenarios).post(post_scenario))
        .route("/scenarios/{id}", get(get_scenario))
        .route("/sessions", post(post_session))
        .route("/sessions/{id}/commands", post(post_command))
        .route("/sessions/{id}/state", get(get_state))
        .route("/sessions/{id}/events", get(get_events))
        .route("/sessions/{id}/persist", post(post_persist))
        .route("/archives/{id}", get(get_archive))
        .fallback(not_found)
        .with_state(app)
}

/// Binds `addr` and serves until the process exits.
pub async fn serve(addr: SocketAddr, app: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(app)).await
}

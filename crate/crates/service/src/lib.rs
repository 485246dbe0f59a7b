//! HTTP front end for questionnaire sessions.
//!
//! Compiled rulebases are shared read-only; each session sits behind its own
//! async mutex so mutations on one session are applied one at a time while
//! different sessions proceed in parallel.

mod config;

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::path::{Path as FsPath, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use rulequest_core::engine::{
    full_questionnaire, EngineError, FullQuestionnaire, QuestionnaireDiff, QuestionnaireView,
    Recommendation, Session, SessionSnapshot,
};
use rulequest_core::ordering::{condition_frequency_order, optimize_order, OptimizerConfig, OrderingInstance};
use rulequest_core::{compile_display_rules, Catalog, DisplayRuleSet, Order, PatientState, RuleBase};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;
use tower_http::cors::{AllowOrigin, CorsLayer};

pub use config::{OrderingMode, ServiceConfig};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("config: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Input { path: PathBuf, source: rulequest_core::Error },
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
}

/// A rulebase compiled under its global order.
pub struct Compiled {
    pub rulebase: Arc<RuleBase>,
    pub display: Arc<DisplayRuleSet>,
    pub order_id: String,
}

struct Entry {
    rulebase_id: String,
    session: Session,
    last_used: Instant,
}

struct Inner {
    rulebases: BTreeMap<String, Compiled>,
    sessions: Mutex<HashMap<String, Arc<tokio::sync::Mutex<Entry>>>>,
    mode: OrderingMode,
    seed: u64,
    idle: Duration,
    snapshot_dir: Option<PathBuf>,
}

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

fn read(path: &FsPath) -> Result<String, ServiceError> {
    std::fs::read_to_string(path).map_err(|source| ServiceError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn input_err(path: &FsPath) -> impl Fn(rulequest_core::Error) -> ServiceError + '_ {
    move |source| ServiceError::Input {
        path: path.to_path_buf(),
        source,
    }
}

impl AppState {
    /// Loads and compiles everything the config references. Fails on the
    /// first unreadable or invalid file.
    pub fn from_config(cfg: &ServiceConfig) -> Result<AppState, ServiceError> {
        cfg.validate()?;
        let catalog = Arc::new(
            Catalog::load(&read(&cfg.catalog)?)
                .map_err(|e| input_err(&cfg.catalog)(e.into()))?,
        );
        let mut rulebases = Vec::new();
        for (id, path) in &cfg.rulebases {
            let rb = rulequest_core::parse_rulebase(&read(path)?, catalog.clone())
                .map_err(|e| input_err(path)(e.into()))?;
            let order = match cfg.ordering {
                OrderingMode::File => {
                    let p = &cfg.order_files[id];
                    Some(Order::parse(&catalog, &read(p)?).map_err(|e| input_err(p)(e.into()))?)
                }
                _ => None,
            };
            rulebases.push((id.clone(), rb, order));
        }
        let mut state = AppState::build(rulebases, cfg.ordering, cfg.seed, Duration::from_secs(cfg.session_idle_secs))
            .map_err(|e| ServiceError::Config(e.to_string()))?;
        if let Some(dir) = &cfg.snapshot_dir {
            std::fs::create_dir_all(dir).map_err(|source| ServiceError::Io {
                path: dir.clone(),
                source,
            })?;
            Arc::get_mut(&mut state.inner).expect("not shared yet").snapshot_dir = Some(dir.clone());
            state.restore_snapshots(dir);
        }
        Ok(state)
    }

    /// Builds state from in-memory rulebases. `order` overrides the mode's
    /// global order for that rulebase.
    pub fn build(
        rulebases: Vec<(String, RuleBase, Option<Order>)>,
        mode: OrderingMode,
        seed: u64,
        idle: Duration,
    ) -> Result<AppState, rulequest_core::Error> {
        let mut compiled = BTreeMap::new();
        for (id, rb, order) in rulebases {
            let (order, order_id) = match (order, mode) {
                (Some(o), _) => (o, "file".to_string()),
                (None, OrderingMode::Optimize) => (
                    optimize_order(&OrderingInstance::global(&rb), &OptimizerConfig::with_seed(seed)),
                    format!("optimize:{seed}"),
                ),
                (None, _) => (condition_frequency_order(&rb), "frequency".to_string()),
            };
            let display = Arc::new(compile_display_rules(&rb, &order)?);
            log::info!("rulebase `{id}`: {} rules, {} display rules", rb.len(), display.len());
            compiled.insert(
                id,
                Compiled {
                    rulebase: Arc::new(rb),
                    display,
                    order_id,
                },
            );
        }
        Ok(AppState {
            inner: Arc::new(Inner {
                rulebases: compiled,
                sessions: Mutex::new(HashMap::new()),
                mode,
                seed,
                idle,
                snapshot_dir: None,
            }),
        })
    }

    pub fn session_count(&self) -> usize {
        self.inner.sessions.lock().expect("session map poisoned").len()
    }

    /// Drops sessions idle for longer than the configured expiry.
    pub fn expire_idle(&self) -> usize {
        let now = Instant::now();
        let mut map = self.inner.sessions.lock().expect("session map poisoned");
        let mut gone = Vec::new();
        map.retain(|id, entry| {
            // A locked session is in use, hence not idle.
            let keep = match entry.try_lock() {
                Ok(e) => now.duration_since(e.last_used) < self.inner.idle,
                Err(_) => true,
            };
            if !keep {
                gone.push(id.clone());
            }
            keep
        });
        drop(map);
        for id in &gone {
            self.remove_snapshot(id);
        }
        gone.len()
    }

    fn snapshot_path(&self, id: &str) -> Option<PathBuf> {
        self.inner.snapshot_dir.as_ref().map(|d| d.join(format!("{id}.json")))
    }

    fn persist(&self, id: &str, entry: &Entry) {
        let Some(path) = self.snapshot_path(id) else { return };
        let Some(compiled) = self.inner.rulebases.get(&entry.rulebase_id) else { return };
        let patient_order = self.inner.mode == OrderingMode::Optimize && !entry.session.patient().present().is_empty();
        let order_id = if patient_order { "patient" } else { compiled.order_id.as_str() };
        let doc = json!({
            "rulebaseId": entry.rulebase_id,
            "snapshot": entry.session.snapshot(order_id),
        });
        if let Err(e) = std::fs::write(&path, doc.to_string()) {
            log::warn!("cannot persist session {id}: {e}");
        }
    }

    fn remove_snapshot(&self, id: &str) {
        if let Some(path) = self.snapshot_path(id) {
            let _ = std::fs::remove_file(path);
        }
    }

    fn restore_snapshots(&self, dir: &FsPath) {
        let Ok(entries) = std::fs::read_dir(dir) else { return };
        for e in entries.flatten() {
            let path = e.path();
            let Some(id) = path.file_stem().and_then(|s| s.to_str()).map(str::to_string) else { continue };
            let restored = std::fs::read_to_string(&path)
                .ok()
                .and_then(|t| serde_json::from_str::<Value>(&t).ok())
                .and_then(|v| {
                    let rb_id = v.get("rulebaseId")?.as_str()?.to_string();
                    let snap: SessionSnapshot = serde_json::from_value(v.get("snapshot")?.clone()).ok()?;
                    let compiled = self.inner.rulebases.get(&rb_id)?;
                    let display = if snap.order_id == compiled.order_id {
                        compiled.display.clone()
                    } else {
                        self.display_for(compiled, &snap.present).ok()?
                    };
                    let session = Session::restore(compiled.rulebase.clone(), display, &snap).ok()?;
                    Some(Entry {
                        rulebase_id: rb_id,
                        session,
                        last_used: Instant::now(),
                    })
                });
            match restored {
                Some(entry) => {
                    self.inner
                        .sessions
                        .lock()
                        .expect("session map poisoned")
                        .insert(id, Arc::new(tokio::sync::Mutex::new(entry)));
                }
                None => log::warn!("skipping unreadable snapshot {}", path.display()),
            }
        }
    }

    fn session(&self, id: &str) -> Result<Arc<tokio::sync::Mutex<Entry>>, ApiError> {
        self.inner
            .sessions
            .lock()
            .expect("session map poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("unknown_session", format!("no session `{id}`")))
    }

    /// Display rules for a patient with `drugs`: the shared global set, or
    /// a freshly optimized one in optimize mode.
    fn display_for(&self, compiled: &Compiled, drugs: &[String]) -> Result<Arc<DisplayRuleSet>, ApiError> {
        if self.inner.mode != OrderingMode::Optimize || drugs.is_empty() {
            return Ok(compiled.display.clone());
        }
        let rb = &compiled.rulebase;
        let ids = drugs
            .iter()
            .map(|d| {
                rb.catalog()
                    .lookup(d)
                    .ok_or_else(|| ApiError::from(EngineError::UnknownCondition(d.clone())))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let inst = OrderingInstance::for_patient(rb, ids).map_err(|e| ApiError::bad_request("not_non_clinical", e.to_string()))?;
        let order = optimize_order(&inst, &OptimizerConfig::with_seed(self.inner.seed));
        Ok(Arc::new(compile_display_rules(rb, &order).map_err(|e| ApiError::internal(e.to_string()))?))
    }
}

/// Uniform error body `{code, message, detail}`.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    detail: Value,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            detail: Value::Null,
        }
    }

    fn not_found(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, code, message)
    }

    fn bad_request(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }

    fn with_detail(mut self, detail: Value) -> Self {
        self.detail = detail;
        self
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        let message = e.to_string();
        match e {
            EngineError::NotDisplayed(id) => {
                ApiError::new(StatusCode::CONFLICT, "not_displayed", message).with_detail(json!({"field": "conditionId", "conditionId": id}))
            }
            EngineError::UnknownCondition(id) => {
                ApiError::bad_request("unknown_condition", message).with_detail(json!({"conditionId": id}))
            }
            EngineError::NotClinical(id) => {
                ApiError::bad_request("not_clinical", message).with_detail(json!({"conditionId": id}))
            }
            EngineError::NotNonClinical(id) => {
                ApiError::bad_request("not_non_clinical", message).with_detail(json!({"conditionId": id}))
            }
            EngineError::UnknownCode { condition, code } => ApiError::bad_request("unknown_code", message)
                .with_detail(json!({"field": "code", "conditionId": condition, "code": code})),
            EngineError::Schema(_) | EngineError::Compile(_) => ApiError::internal(message),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::new(e.status(), "invalid_body", e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({"code": self.code, "message": self.message, "detail": self.detail});
        (self.status, Json(body)).into_response()
    }
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct RulebaseSummary {
    id: String,
    rule_count: usize,
    clinical_condition_count: usize,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum AssertedInput {
    Id(String),
    WithCode {
        #[serde(rename = "conditionId")]
        condition_id: String,
        code: Option<String>,
    },
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct CreateSession {
    rulebase_id: String,
    #[serde(default)]
    drugs: Vec<String>,
    #[serde(default)]
    asserted: Vec<AssertedInput>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct Answer {
    condition_id: String,
    checked: bool,
    #[serde(default)]
    code: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Drugs {
    drugs: Vec<String>,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct SessionBody {
    session_id: String,
    view: QuestionnaireView,
    recommendations: Vec<Recommendation>,
}

#[derive(Serialize)]
struct MutationBody {
    diff: QuestionnaireDiff,
    view: QuestionnaireView,
    recommendations: Vec<Recommendation>,
}

async fn healthz() -> Json<Value> {
    Json(json!({"status": "ok", "version": env!("CARGO_PKG_VERSION")}))
}

async fn list_rulebases(State(state): State<AppState>) -> Json<Vec<RulebaseSummary>> {
    Json(
        state
            .inner
            .rulebases
            .iter()
            .map(|(id, c)| RulebaseSummary {
                id: id.clone(),
                rule_count: c.rulebase.len(),
                clinical_condition_count: c.rulebase.referenced_clinical().len(),
            })
            .collect(),
    )
}

async fn full_listing(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<FullQuestionnaire>, ApiError> {
    let c = state
        .inner
        .rulebases
        .get(&id)
        .ok_or_else(|| ApiError::not_found("unknown_rulebase", format!("no rulebase `{id}`")))?;
    Ok(Json(full_questionnaire(&c.rulebase)))
}

async fn create(
    State(state): State<AppState>,
    body: Result<Json<CreateSession>, JsonRejection>,
) -> Result<(StatusCode, Json<SessionBody>), ApiError> {
    let Json(req) = body?;
    let compiled = state
        .inner
        .rulebases
        .get(&req.rulebase_id)
        .ok_or_else(|| {
            ApiError::not_found("unknown_rulebase", format!("no rulebase `{}`", req.rulebase_id))
                .with_detail(json!({"field": "rulebaseId"}))
        })?;
    let catalog = compiled.rulebase.catalog();
    let mut patient = PatientState::new();
    for d in &req.drugs {
        let idx = catalog
            .lookup(d)
            .ok_or_else(|| EngineError::UnknownCondition(d.clone()))?;
        patient.add_present(catalog, idx).map_err(EngineError::from)?;
    }
    for a in &req.asserted {
        let (id, code) = match a {
            AssertedInput::Id(id) => (id, None),
            AssertedInput::WithCode { condition_id, code } => (condition_id, code.as_deref()),
        };
        let idx = catalog
            .lookup(id)
            .ok_or_else(|| EngineError::UnknownCondition(id.clone()))?;
        let code_idx = match code {
            Some(v) => Some(catalog.get(idx).code_index(v).ok_or_else(|| EngineError::UnknownCode {
                condition: id.clone(),
                code: v.to_string(),
            })?),
            None => None,
        };
        patient.assert_clinical(catalog, idx, code_idx).map_err(EngineError::from)?;
    }
    let display = {
        let state = state.clone();
        let rb_id = req.rulebase_id.clone();
        let drugs = req.drugs.clone();
        tokio::task::spawn_blocking(move || state.display_for(&state.inner.rulebases[&rb_id], &drugs))
            .await
            .map_err(|e| ApiError::internal(e.to_string()))??
    };
    let session = Session::new(compiled.rulebase.clone(), display, patient)?;
    let id = uuid::Uuid::new_v4().to_string();
    let body = SessionBody {
        session_id: id.clone(),
        view: session.view(),
        recommendations: session.recommendations(),
    };
    let entry = Entry {
        rulebase_id: req.rulebase_id,
        session,
        last_used: Instant::now(),
    };
    state.persist(&id, &entry);
    state
        .inner
        .sessions
        .lock()
        .expect("session map poisoned")
        .insert(id, Arc::new(tokio::sync::Mutex::new(entry)));
    Ok((StatusCode::CREATED, Json(body)))
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<SessionBody>, ApiError> {
    let entry = state.session(&id)?;
    let mut e = entry.lock().await;
    e.last_used = Instant::now();
    Ok(Json(SessionBody {
        session_id: id,
        view: e.session.view(),
        recommendations: e.session.recommendations(),
    }))
}

async fn answer(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<Answer>, JsonRejection>,
) -> Result<Json<MutationBody>, ApiError> {
    let Json(req) = body?;
    let entry = state.session(&id)?;
    let mut e = entry.lock().await;
    e.last_used = Instant::now();
    let diff = e.session.set_condition(&req.condition_id, req.checked, req.code.as_deref())?;
    state.persist(&id, &e);
    Ok(Json(MutationBody {
        diff,
        view: e.session.view(),
        recommendations: e.session.recommendations(),
    }))
}

async fn set_drugs(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<Drugs>, JsonRejection>,
) -> Result<Json<MutationBody>, ApiError> {
    let Json(req) = body?;
    let entry = state.session(&id)?;
    let mut e = entry.lock().await;
    e.last_used = Instant::now();
    let display = if state.inner.mode == OrderingMode::Optimize {
        let state2 = state.clone();
        let rb_id = e.rulebase_id.clone();
        let drugs = req.drugs.clone();
        Some(
            tokio::task::spawn_blocking(move || state2.display_for(&state2.inner.rulebases[&rb_id], &drugs))
                .await
                .map_err(|e| ApiError::internal(e.to_string()))??,
        )
    } else {
        None
    };
    let diff = e.session.set_drugs_with(req.drugs.iter().map(String::as_str), display)?;
    state.persist(&id, &e);
    Ok(Json(MutationBody {
        diff,
        view: e.session.view(),
        recommendations: e.session.recommendations(),
    }))
}

async fn delete_session(State(state): State<AppState>, Path(id): Path<String>) -> StatusCode {
    state.inner.sessions.lock().expect("session map poisoned").remove(&id);
    state.remove_snapshot(&id);
    StatusCode::NO_CONTENT
}

async fn fallback() -> ApiError {
    ApiError::not_found("not_found", "no such endpoint")
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/rulebases", get(list_rulebases))
        .route("/rulebases/{id}/full", get(full_listing))
        .route("/sessions", post(create))
        .route("/sessions/{id}", get(get_session).delete(delete_session))
        .route("/sessions/{id}/answers", post(answer))
        .route("/sessions/{id}/drugs", put(set_drugs))
        .fallback(fallback)
        .with_state(state)
}

fn cors(origins: &[String]) -> CorsLayer {
    let origins: Vec<HeaderValue> = origins.iter().filter_map(|o| o.parse().ok()).collect();
    CorsLayer::new()
        .allow_origin(AllowOrigin::list(origins))
        .allow_methods(tower_http::cors::Any)
        .allow_headers(tower_http::cors::Any)
}

/// Runs until ctrl-c.
pub async fn serve(cfg: ServiceConfig) -> Result<(), ServiceError> {
    let state = AppState::from_config(&cfg)?;
    let app = router(state.clone()).layer(cors(&cfg.cors_origins));
    let listener = tokio::net::TcpListener::bind(&cfg.listen)
        .await
        .map_err(|source| ServiceError::Bind {
            addr: cfg.listen.clone(),
            source,
        })?;
    let addr: Option<SocketAddr> = listener.local_addr().ok();
    log::info!("listening on {}", addr.map_or(cfg.listen.clone(), |a| a.to_string()));

    let sweeper = {
        let state = state.clone();
        let period = Duration::from_secs(cfg.session_idle_secs.clamp(1, 60));
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(period);
            loop {
                tick.tick().await;
                let n = state.expire_idle();
                if n > 0 {
                    log::info!("expired {n} idle sessions");
                }
            }
        })
    };
    let result = axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|source| ServiceError::Bind {
            addr: cfg.listen.clone(),
            source,
        });
    sweeper.abort();
    result
}

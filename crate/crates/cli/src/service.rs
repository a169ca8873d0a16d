//! Reward service: `POST /v1/judge` scores a submission against a stored
//! suite, `GET /v1/health` reports readiness.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use judgekit::store::load_suite;
use judgekit::{Engine, JudgeError, JudgeReport, TestSuite};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::Semaphore;

use crate::judge_submission;

pub const ENV_WORKERS: &str = "JUDGEKIT_WORKERS";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardRequest {
    pub problem_id: String,
    pub source: String,
    pub language: String,
    #[serde(default)]
    pub early_stop: bool,
}

/// The judge report plus the time the service spent on the request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardResponse {
    #[serde(flatten)]
    pub report: JudgeReport,
    pub latency_ms: u64,
}

/// Suites keyed by problem id, loaded from a directory of `.json` and
/// `.jsonl` files. Files whose name starts with `_` are skipped.
#[derive(Debug)]
pub struct SuiteStore {
    dir: PathBuf,
    suites: RwLock<Arc<HashMap<String, Arc<TestSuite>>>>,
}

fn read_dir_suites(dir: &Path) -> anyhow::Result<HashMap<String, Arc<TestSuite>>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json" || e == "jsonl"))
        .filter(|p| !p.file_name().is_some_and(|n| n.to_string_lossy().starts_with('_')))
        .collect();
    paths.sort();
    let mut out = HashMap::new();
    for p in paths {
        let suite = load_suite(&p).map_err(|e| anyhow::anyhow!("{}: {e}", p.display()))?;
        let id = suite.problem_id.clone();
        if out.insert(id.clone(), Arc::new(suite)).is_some() {
            anyhow::bail!("{}: duplicate suite for problem `{id}`", p.display());
        }
    }
    Ok(out)
}

impl SuiteStore {
    pub fn load(dir: impl Into<PathBuf>) -> anyhow::Result<Self> {
        let dir = dir.into();
        let suites = read_dir_suites(&dir)?;
        Ok(Self { dir, suites: RwLock::new(Arc::new(suites)) })
    }

    /// Re-reads the directory. On error the previous contents stay in place.
    pub fn reload(&self) -> anyhow::Result<usize> {
        let fresh = read_dir_suites(&self.dir)?;
        let n = fresh.len();
        *self.suites.write().unwrap() = Arc::new(fresh);
        Ok(n)
    }

    pub fn get(&self, problem_id: &str) -> Option<Arc<TestSuite>> {
        self.suites.read().unwrap().get(problem_id).cloned()
    }

    pub fn len(&self) -> usize {
        self.suites.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub struct AppState {
    pub engine: Arc<Engine>,
    pub store: Arc<SuiteStore>,
    permits: Arc<Semaphore>,
    workers: usize,
}

impl AppState {
    pub fn new(engine: Arc<Engine>, store: Arc<SuiteStore>, workers: usize) -> Self {
        let workers = workers.max(1);
        Self { engine, store, permits: Arc::new(Semaphore::new(workers)), workers }
    }
}

fn error(status: StatusCode, msg: impl Into<String>) -> Response {
    (status, Json(json!({ "error": msg.into() }))).into_response()
}

async fn health(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    Json(json!({
        "status": "ok",
        "problems": state.store.len(),
        "workers": state.workers,
        "available_workers": state.permits.available_permits(),
    }))
}

async fn judge(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let start = Instant::now();
    let req: RewardRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("malformed request: {e}")),
    };
    let Some(suite) = state.store.get(&req.problem_id) else {
        return error(StatusCode::NOT_FOUND, format!("unknown problem `{}`", req.problem_id));
    };
    if state.engine.resolve(&req.language).is_err() {
        return error(StatusCode::BAD_REQUEST, format!("unknown language `{}`", req.language));
    }
    let Ok(_permit) = state.permits.clone().acquire_owned().await else {
        return error(StatusCode::SERVICE_UNAVAILABLE, "shutting down");
    };
    let engine = state.engine.clone();
    let result = tokio::task::spawn_blocking(move || {
        judge_submission(&engine, &suite, &req.source, &req.language, req.early_stop, 1)
    })
    .await;
    match result {
        Ok(Ok(report)) => {
            Json(RewardResponse { report, latency_ms: start.elapsed().as_millis() as u64 }).into_response()
        }
        Ok(Err(JudgeError::Toolchain(e))) => error(StatusCode::BAD_REQUEST, e.to_string()),
        Ok(Err(e)) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, format!("judge task failed: {e}")),
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/judge", post(judge))
        .with_state(state)
}

/// Serves until the process is interrupted. SIGHUP reloads the suite store.
pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    let store = state.store.clone();
    tokio::spawn(async move {
        use tokio::signal::unix::{signal, SignalKind};
        let Ok(mut hup) = signal(SignalKind::hangup()) else {
            log::warn!("cannot install SIGHUP handler; reload disabled");
            return;
        };
        while hup.recv().await.is_some() {
            match store.reload() {
                Ok(n) => log::info!("reloaded {n} suites"),
                Err(e) => log::error!("reload failed, keeping previous suites: {e:#}"),
            }
        }
    });
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

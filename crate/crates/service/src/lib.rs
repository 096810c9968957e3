//! JSON-over-HTTP review service for co-learning runs.
//!
//! The service serves either a single run directory or a directory of runs.
//! It owns no model math; resuming a round hands training to a background
//! worker and clients poll the run status.

mod error;
pub mod payload;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use hamlet_core::colearn::{Decision, DecisionKind, IterationReport, LabelSource, Run, RunStatus, RUN_STATE};
use hamlet_core::signal::io::{read_sequence_bytes, read_sequence_manifest};
use hamlet_core::signal::NUM_MONTAGES;
use hamlet_core::ClassLabel;
use serde::Deserialize;

pub use error::ApiError;
use payload::*;

type ApiResult<T> = Result<Json<T>, ApiError>;

/// Shared service state: where runs live and one writer lock per run.
#[derive(Debug)]
pub struct ServiceState {
    root: PathBuf,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl ServiceState {
    pub fn new(root: impl Into<PathBuf>) -> Arc<Self> {
        Arc::new(Self {
            root: root.into(),
            locks: Mutex::new(HashMap::new()),
        })
    }

    /// Run ids and directories, sorted by id.
    pub fn runs(&self) -> Vec<(String, PathBuf)> {
        if self.root.join(RUN_STATE).exists() {
            return Run::open(&self.root)
                .map(|r| vec![(r.config.run_id, self.root.clone())])
                .unwrap_or_default();
        }
        let mut out: Vec<(String, PathBuf)> = std::fs::read_dir(&self.root)
            .into_iter()
            .flatten()
            .flatten()
            .map(|e| e.path())
            .filter(|p| p.join(RUN_STATE).exists())
            .filter_map(|p| Some((p.file_name()?.to_str()?.to_string(), p)))
            .collect();
        out.sort();
        out
    }

    fn run_dir(&self, id: &str) -> Result<PathBuf, ApiError> {
        self.runs()
            .into_iter()
            .find(|(rid, _)| rid == id)
            .map(|(_, p)| p)
            .ok_or_else(|| ApiError::not_found(format!("unknown run {id:?}")))
    }

    fn open(&self, id: &str) -> Result<Run, ApiError> {
        Ok(Run::open(&self.run_dir(id)?)?)
    }

    fn lock(&self, id: &str) -> Arc<Mutex<()>> {
        self.locks
            .lock()
            .expect("lock table")
            .entry(id.to_string())
            .or_default()
            .clone()
    }
}

pub fn router(state: Arc<ServiceState>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/runs", get(list_runs))
        .route("/runs/{id}", get(get_session))
        .route("/runs/{id}/rounds/{n}/suggestions", get(list_suggestions))
        .route("/runs/{id}/decisions", post(submit_decision))
        .route("/runs/{id}/resume", post(resume))
        .route("/runs/{id}/reports/{n}", get(get_report))
        .route("/sequences/{id}", get(get_sequence))
        .with_state(state)
}

/// Serve until `shutdown` resolves. Decisions are written before they are
/// acknowledged, so nothing is buffered at shutdown.
pub async fn serve(
    root: &Path,
    listener: tokio::net::TcpListener,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let app = router(ServiceState::new(root));
    axum::serve(listener, app).with_graceful_shutdown(shutdown).await
}

async fn healthz() -> Json<Health> {
    Json(Health {
        schema_version: SCHEMA_VERSION,
        status: "ok".into(),
    })
}

async fn list_runs(State(st): State<Arc<ServiceState>>) -> ApiResult<RunList> {
    let runs = st
        .runs()
        .into_iter()
        .filter_map(|(id, dir)| {
            let run = Run::open(&dir).ok()?;
            Some(RunItem {
                run_id: id,
                status: run.state.status,
                round: run.state.round,
                rounds: run.state.rounds,
                model: run.config.colearn.model,
                strategy: run.config.colearn.strategy,
            })
        })
        .collect();
    Ok(Json(RunList {
        schema_version: SCHEMA_VERSION,
        runs,
    }))
}

fn session(id: &str, run: &Run) -> Result<ReviewSession, ApiError> {
    let round = run.state.round;
    let (total, decisions) = if run.state.status.accepts_decisions() {
        (run.suggestions(round)?.len(), run.decisions(round)?)
    } else {
        (0, Vec::new())
    };
    let mut progress = BTreeMap::new();
    for d in &decisions {
        *progress.entry(d.expert_id.clone()).or_insert(0) += 1;
    }
    let pending = run.pending()?;
    Ok(ReviewSession {
        schema_version: SCHEMA_VERSION,
        run_id: id.to_string(),
        status: run.state.status,
        round,
        rounds: run.state.rounds,
        total,
        decided: total - pending.len(),
        pending,
        progress,
        error: run.state.error.clone(),
    })
}

async fn get_session(State(st): State<Arc<ServiceState>>, UrlPath(id): UrlPath<String>) -> ApiResult<ReviewSession> {
    let run = st.open(&id)?;
    Ok(Json(session(&id, &run)?))
}

#[derive(Debug, Deserialize)]
struct PageQuery {
    page: Option<usize>,
}

async fn list_suggestions(
    State(st): State<Arc<ServiceState>>,
    UrlPath((id, round)): UrlPath<(String, usize)>,
    Query(q): Query<PageQuery>,
) -> ApiResult<SuggestionPage> {
    let run = st.open(&id)?;
    let page = q.page.unwrap_or(1);
    if page == 0 {
        return Err(ApiError::validation("pages start at 1"));
    }
    let all = match run.suggestions(round) {
        Ok(s) => s,
        Err(hamlet_core::Error::NotFound(_)) => {
            return Err(ApiError::not_found(format!("run {id} has no round {round}")))
        }
        Err(e) => return Err(e.into()),
    };
    let decisions: HashMap<String, Decision> = run
        .decisions(round)?
        .into_iter()
        .map(|d| (d.sequence_id.clone(), d))
        .collect();
    let (start, end, pages) = page_bounds(all.len(), page);
    let total = all.len();
    let items = all[start..end]
        .iter()
        .map(|s| SuggestionView {
            decision: decisions.get(&s.sequence_id).cloned(),
            suggestion: s.clone(),
        })
        .collect();
    Ok(Json(SuggestionPage {
        schema_version: SCHEMA_VERSION,
        run_id: id,
        round,
        page,
        page_size: PAGE_SIZE,
        pages,
        total,
        items,
    }))
}

async fn submit_decision(
    State(st): State<Arc<ServiceState>>,
    UrlPath(id): UrlPath<String>,
    headers: HeaderMap,
    body: Result<Json<DecisionRequest>, JsonRejection>,
) -> ApiResult<DecisionAck> {
    let Json(req) = body.map_err(|e| ApiError::validation(e.body_text()))?;
    let expert_id = headers
        .get(EXPERT_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(str::to_string)
        .or(req.expert_id.clone())
        .filter(|s| !s.trim().is_empty())
        .ok_or_else(|| {
            ApiError::validation(format!("missing expert id ({EXPERT_HEADER} header or expert_id field)"))
        })?;
    let override_label = req
        .label
        .as_deref()
        .map(|l| l.parse::<ClassLabel>().map_err(|e| ApiError::validation(e.to_string())))
        .transpose()?;

    let lock = st.lock(&id);
    let _guard = lock.lock().expect("run lock");
    let run = st.open(&id)?;
    if !run.state.status.accepts_decisions() {
        return Err(
            hamlet_core::Error::Conflict(format!("run is {:?} and takes no decisions", run.state.status)).into(),
        );
    }
    let round = run.state.round;
    let queue = run.suggestions(round)?;
    let s = queue.iter().find(|s| s.sequence_id == req.sequence_id).ok_or_else(|| {
        ApiError::not_found(format!(
            "sequence {} is not in the round {round} queue",
            req.sequence_id
        ))
    })?;
    let label = match req.decision {
        DecisionKind::AcceptProposed => s.proposed_label,
        DecisionKind::KeepCurrent => s.current_label,
        DecisionKind::Override => override_label.ok_or_else(|| ApiError::validation("override needs a label"))?,
    };
    run.submit_decision(Decision {
        sequence_id: req.sequence_id.clone(),
        kind: req.decision,
        label,
        source: LabelSource::Expert,
        expert_id: expert_id.clone(),
    })?;
    let decided: HashSet<String> = run.decisions(round)?.into_iter().map(|d| d.sequence_id).collect();
    Ok(Json(DecisionAck {
        schema_version: SCHEMA_VERSION,
        run_id: id,
        round,
        sequence_id: req.sequence_id,
        label,
        expert_id,
        decided: decided.len(),
        total: queue.len(),
    }))
}

async fn resume(
    State(st): State<Arc<ServiceState>>,
    UrlPath(id): UrlPath<String>,
) -> Result<(StatusCode, Json<ResumeAck>), ApiError> {
    let dir = st.run_dir(&id)?;
    let run = {
        let lock = st.lock(&id);
        let _guard = lock.lock().expect("run lock");
        let mut run = Run::open(&dir)?;
        run.begin_resume()?;
        run
    };
    let ack = ResumeAck {
        schema_version: SCHEMA_VERSION,
        run_id: id.clone(),
        status: run.state.status,
        round: run.state.round,
    };
    tokio::task::spawn_blocking(move || {
        let mut run = run;
        let outcome = run.load_store().and_then(|store| run.step(&store, RunStatus::Open));
        if let Err(e) = outcome {
            tracing::error!(run = %id, error = %e, "background training failed");
        }
    });
    Ok((StatusCode::ACCEPTED, Json(ack)))
}

async fn get_report(
    State(st): State<Arc<ServiceState>>,
    UrlPath((id, round)): UrlPath<(String, usize)>,
) -> ApiResult<IterationReport> {
    Ok(Json(st.open(&id)?.report(round)?))
}

#[derive(Debug, Deserialize)]
struct SequenceQuery {
    run: Option<String>,
}

async fn get_sequence(
    State(st): State<Arc<ServiceState>>,
    UrlPath(seq_id): UrlPath<String>,
    Query(q): Query<SequenceQuery>,
) -> ApiResult<SequencePayload> {
    let candidates = match &q.run {
        Some(r) => vec![(r.clone(), st.run_dir(r)?)],
        None => st.runs(),
    };
    for (run_id, dir) in candidates {
        let Ok(run) = Run::open(&dir) else { continue };
        let Some(item) = run.dataset.get(&seq_id) else { continue };
        let data_dir = &run.config.dataset_dir;
        let manifest = read_sequence_manifest(data_dir)?;
        let entry = manifest
            .sequences
            .iter()
            .find(|e| e.sequence_id == seq_id)
            .ok_or_else(|| ApiError::not_found(format!("sequence {seq_id} missing from its store")))?;
        let bytes = read_sequence_bytes(data_dir, entry)?;
        let ctx = NUM_MONTAGES * entry.context_samples * 4;
        let core = NUM_MONTAGES * entry.window_samples * 4;
        return Ok(Json(SequencePayload {
            schema_version: SCHEMA_VERSION,
            sequence_id: seq_id,
            patient_id: entry.patient_id.clone(),
            run_id: Some(run_id),
            sample_rate_hz: entry.sample_rate_hz,
            channels: NUM_MONTAGES,
            channel_names: manifest.channels.clone(),
            window_samples: entry.window_samples,
            context_samples: entry.context_samples,
            encoding: SAMPLE_ENCODING.into(),
            left_context: B64.encode(&bytes[..ctx]),
            core: B64.encode(&bytes[ctx..ctx + core]),
            right_context: B64.encode(&bytes[ctx + core..]),
            left_valid: entry.left_valid,
            right_valid: entry.right_valid,
            current_label: Some(item.label),
            audit: item.audit.clone(),
        }));
    }
    Err(ApiError::not_found(format!("unknown sequence {seq_id:?}")))
}

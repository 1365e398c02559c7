//! JSON-over-HTTP service for replaying sessions and querying predictions.
//!
//! Every route lives under `/v1`. Sessions are replayed action logs; each one
//! sits behind its own mutex, while the model, vocabulary and patch store are
//! shared read-only.

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Instant;

use acf_core::attraction::{sample_grid, AttractionTarget, Vec2};
use acf_core::config::Settings;
use acf_core::corpus::{parse_actions, ActionRecord};
use acf_core::geom::Rect;
use acf_core::model::{predict_topk, Checkpoint, Model};
use acf_core::patch::{locate_on_screen, ImagePatch, PatchDb, PatchId};
use acf_core::tokenizer::{ActionKind, RawContext, UserAction};
use acf_core::vocab::ActionVocabulary;
use acf_core::Error;
use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub detail: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, detail: impl Into<String>) -> Self {
        Self { status, code, detail: detail.into() }
    }

    fn unknown_session(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "unknown_session", format!("no session {id:?}"))
    }

    fn bad_request(detail: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", detail)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        match e {
            Error::FilterEmpty => Self::new(StatusCode::CONFLICT, "filter_empty", e.to_string()),
            Error::InvalidArgument(_) | Error::MalformedInput { .. } | Error::Json(_) => {
                Self::new(StatusCode::BAD_REQUEST, "bad_request", e.to_string())
            }
            Error::Io(_) => Self::new(StatusCode::NOT_FOUND, "not_found", e.to_string()),
            _ => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.code, "detail": self.detail }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug, Clone)]
struct TimelineEntry {
    record: ActionRecord,
    synthetic: bool,
}

/// One replayed session.
#[derive(Debug)]
pub struct SessionState {
    id: String,
    log: Vec<ActionRecord>,
    /// Number of recorded actions taken so far.
    cursor: usize,
    timeline: Vec<TimelineEntry>,
    screenshot: Option<Arc<ImagePatch>>,
    located: BTreeMap<PatchId, Option<Rect>>,
}

impl SessionState {
    fn history(&self) -> Vec<ActionRecord> {
        self.timeline.iter().map(|e| e.record.clone()).collect()
    }
}

/// Shared service state.
pub struct AppState {
    pub settings: Settings,
    model: Model,
    vocab: ActionVocabulary,
    patches: PatchDb,
    sessions: RwLock<HashMap<String, Arc<Mutex<SessionState>>>>,
    next_id: AtomicU64,
}

impl AppState {
    /// Fails when the checkpoint was trained against a different vocabulary.
    pub fn new(settings: Settings, checkpoint: Checkpoint, vocab: ActionVocabulary, patches: PatchDb) -> acf_core::Result<Self> {
        checkpoint.check_vocab(&vocab)?;
        Ok(Self {
            settings,
            model: checkpoint.model,
            vocab,
            patches,
            sessions: RwLock::new(HashMap::new()),
            next_id: AtomicU64::new(1),
        })
    }

    fn session(&self, id: &str) -> ApiResult<Arc<Mutex<SessionState>>> {
        self.sessions
            .read()
            .expect("session table poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::unknown_session(id))
    }
}

#[derive(Debug, Serialize)]
struct PredictionView {
    index: usize,
    action: String,
    kind: &'static str,
    prob: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    patch_ref: Option<String>,
}

#[derive(Debug, Serialize)]
struct TimelineView {
    action: String,
    index: usize,
    synthetic: bool,
}

#[derive(Debug, Serialize)]
struct SessionView {
    session_id: String,
    cursor: usize,
    length: usize,
    eof: bool,
    timeline: Vec<TimelineView>,
    window: Vec<String>,
    predictions: Vec<PredictionView>,
}

fn kind_name(a: &ActionKind) -> &'static str {
    match a {
        ActionKind::Keystroke { .. } => "keystroke",
        ActionKind::ButtonClick { .. } => "button",
        ActionKind::GenericClick { .. } => "click",
        ActionKind::Scroll { .. } => "scroll",
    }
}

fn patch_ref(a: &ActionKind) -> Option<String> {
    a.patch_id().map(|id| format!("/v1/patches/{}.ppm", id.0))
}

/// Indices kept by a filter expression: `buttons`, `keystrokes`, or
/// `idx:3,5,8`.
fn parse_filter(vocab: &ActionVocabulary, expr: &str) -> ApiResult<Vec<usize>> {
    let by_kind = |want: &str| -> Vec<usize> { vocab.iter().filter(|(_, a)| kind_name(a) == want).map(|(i, _)| i).collect() };
    match expr {
        "buttons" => Ok(by_kind("button")),
        "keystrokes" => Ok(by_kind("keystroke")),
        _ => {
            let list = expr
                .strip_prefix("idx:")
                .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "bad_filter", format!("unknown filter {expr:?}")))?;
            list.split(',')
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.trim()
                        .parse::<usize>()
                        .ok()
                        .filter(|&i| i < vocab.len())
                        .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "bad_filter", format!("bad index {s:?}")))
                })
                .collect()
        }
    }
}

fn predictions(app: &AppState, s: &SessionState, k: usize, keep: Option<&[usize]>) -> ApiResult<Vec<PredictionView>> {
    let ranked = predict_topk(&s.history(), &app.model, &app.vocab, k, keep)?;
    Ok(ranked
        .into_iter()
        .map(|r| PredictionView {
            index: r.index,
            action: r.action.to_string(),
            kind: kind_name(&r.action),
            prob: r.prob,
            patch_ref: patch_ref(&r.action),
        })
        .collect())
}

fn window(app: &AppState, s: &SessionState) -> Vec<String> {
    let known: Vec<String> = s
        .timeline
        .iter()
        .filter(|e| app.vocab.contains(&e.record.action.kind))
        .map(|e| e.record.action.kind.to_string())
        .collect();
    let n = app.model.config().n_past;
    known[known.len().saturating_sub(n)..].to_vec()
}

fn view(app: &AppState, s: &SessionState, eof: bool) -> ApiResult<SessionView> {
    Ok(SessionView {
        session_id: s.id.clone(),
        cursor: s.cursor,
        length: s.log.len(),
        eof,
        timeline: s
            .timeline
            .iter()
            .map(|e| TimelineView {
                action: e.record.action.kind.to_string(),
                index: app.vocab.encode(&e.record.action.kind),
                synthetic: e.synthetic,
            })
            .collect(),
        window: window(app, s),
        predictions: predictions(app, s, app.settings.default_k, None)?,
    })
}

#[derive(Debug, Deserialize)]
struct CreateSession {
    /// Actions JSONL text.
    actions: Option<String>,
    /// Path of an actions JSONL file readable by the server.
    path: Option<PathBuf>,
    /// Which session of a multi-session file to load.
    #[serde(default)]
    session: usize,
    /// PPM screenshot used to locate predicted buttons.
    screenshot: Option<PathBuf>,
}

async fn create_session(State(app): State<Arc<AppState>>, Json(req): Json<CreateSession>) -> ApiResult<Response> {
    let text = match (req.actions, req.path) {
        (Some(t), None) => t,
        (None, Some(p)) => std::fs::read_to_string(&p).map_err(|e| ApiError::bad_request(format!("{}: {e}", p.display())))?,
        _ => return Err(ApiError::bad_request("give exactly one of \"actions\" or \"path\"")),
    };
    let mut sessions = parse_actions(&text)?;
    if req.session >= sessions.len() {
        return Err(ApiError::bad_request(format!("log holds {} sessions", sessions.len())));
    }
    let log = sessions.swap_remove(req.session);
    let screenshot = match req.screenshot {
        Some(p) => {
            let bytes = std::fs::read(&p).map_err(|e| ApiError::bad_request(format!("{}: {e}", p.display())))?;
            Some(Arc::new(ImagePatch::from_ppm(&bytes)?))
        }
        None => None,
    };
    let id = format!("s{}", app.next_id.fetch_add(1, Ordering::Relaxed));
    let state = SessionState {
        id: id.clone(),
        log,
        cursor: 0,
        timeline: Vec::new(),
        screenshot,
        located: BTreeMap::new(),
    };
    let body = view(&app, &state, state.log.is_empty())?;
    app.sessions.write().expect("session table poisoned").insert(id, Arc::new(Mutex::new(state)));
    Ok((StatusCode::CREATED, Json(body)).into_response())
}

async fn get_session(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<SessionView>> {
    let s = app.session(&id)?;
    let s = s.lock().expect("session poisoned");
    Ok(Json(view(&app, &s, s.cursor >= s.log.len())?))
}

#[derive(Debug, Deserialize)]
struct WhatIf {
    action: String,
}

fn push_whatif(s: &mut SessionState, action: &str) -> ApiResult<()> {
    let kind: ActionKind = action.parse()?;
    let (t, context) = match s.timeline.last() {
        Some(e) => (e.record.action.timestamp_ms, RawContext { elapsed_bucket: 0, ..e.record.context.clone() }),
        None => match s.log.first() {
            Some(r) => (r.action.timestamp_ms, r.context.clone()),
            None => (0, RawContext { app: String::new(), rel_x: 0.0, rel_y: 0.0, elapsed_bucket: 0 }),
        },
    };
    s.timeline.push(TimelineEntry { record: ActionRecord { action: UserAction::new(kind, t), context }, synthetic: true });
    Ok(())
}

/// Advances along the log, or inserts a what-if action when the body names one.
async fn step(State(app): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<SessionView>> {
    let s = app.session(&id)?;
    let mut s = s.lock().expect("session poisoned");
    if !body.iter().all(u8::is_ascii_whitespace) {
        let req: WhatIf = serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(e.to_string()))?;
        push_whatif(&mut s, &req.action)?;
        return Ok(Json(view(&app, &s, s.cursor >= s.log.len())?));
    }
    if s.cursor >= s.log.len() {
        return Ok(Json(view(&app, &s, true)?));
    }
    let record = s.log[s.cursor].clone();
    s.timeline.push(TimelineEntry { record, synthetic: false });
    s.cursor += 1;
    Ok(Json(view(&app, &s, false)?))
}

async fn whatif(State(app): State<Arc<AppState>>, Path(id): Path<String>, Json(req): Json<WhatIf>) -> ApiResult<Json<SessionView>> {
    let s = app.session(&id)?;
    let mut s = s.lock().expect("session poisoned");
    push_whatif(&mut s, &req.action)?;
    Ok(Json(view(&app, &s, s.cursor >= s.log.len())?))
}

async fn undo(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<SessionView>> {
    let s = app.session(&id)?;
    let mut s = s.lock().expect("session poisoned");
    if !s.timeline.last().is_some_and(|e| e.synthetic) {
        return Err(ApiError::new(StatusCode::CONFLICT, "nothing_to_undo", "last timeline entry is not a what-if"));
    }
    s.timeline.pop();
    Ok(Json(view(&app, &s, s.cursor >= s.log.len())?))
}

async fn reset(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<SessionView>> {
    let s = app.session(&id)?;
    let mut s = s.lock().expect("session poisoned");
    s.cursor = 0;
    s.timeline.clear();
    Ok(Json(view(&app, &s, s.log.is_empty())?))
}

#[derive(Debug, Deserialize)]
struct PredictQuery {
    k: Option<usize>,
    filter: Option<String>,
}

async fn predict(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<PredictQuery>,
) -> ApiResult<Json<serde_json::Value>> {
    let k = q.k.unwrap_or(app.settings.default_k);
    if k < 1 {
        return Err(ApiError::bad_request("k must be at least 1"));
    }
    let keep = q.filter.as_deref().map(|f| parse_filter(&app.vocab, f)).transpose()?;
    let s = app.session(&id)?;
    let s = s.lock().expect("session poisoned");
    let preds = predictions(&app, &s, k, keep.as_deref())?;
    Ok(Json(json!({
        "session_id": s.id,
        "cursor": s.cursor,
        "predictions": preds,
        "window": window(&app, &s),
    })))
}

#[derive(Debug, Deserialize)]
struct FieldQuery {
    x: Option<f64>,
    y: Option<f64>,
    cols: Option<usize>,
    rows: Option<usize>,
    step: Option<f64>,
    k: Option<usize>,
}

#[derive(Debug, Serialize)]
struct FieldTarget {
    patch_id: u64,
    rect: Rect,
    confidence: f64,
}

const MAX_GRID_POINTS: usize = 1_000_000;

/// Samples the attraction field of the session's top-k button predictions,
/// located on the session screenshot.
async fn field(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<FieldQuery>,
) -> ApiResult<Json<serde_json::Value>> {
    let s = app.session(&id)?;
    let mut s = s.lock().expect("session poisoned");
    let step = q.step.unwrap_or(20.0);
    if !(step > 0.0 && step.is_finite()) {
        return Err(ApiError::bad_request("step must be positive"));
    }
    let (sw, sh) = s.screenshot.as_ref().map_or((0, 0), |i| (i.width(), i.height()));
    let cols = q.cols.unwrap_or((sw as f64 / step).ceil() as usize);
    let rows = q.rows.unwrap_or((sh as f64 / step).ceil() as usize);
    if cols.saturating_mul(rows) > MAX_GRID_POINTS {
        return Err(ApiError::bad_request(format!("grid larger than {MAX_GRID_POINTS} points")));
    }
    let k = q.k.unwrap_or(app.settings.default_k).max(1);

    let started = Instant::now();
    let mut targets = Vec::new();
    let mut reason = None;
    if let Some(shot) = s.screenshot.clone() {
        for p in predictions(&app, &s, k, None)? {
            let Some(pid) = app.vocab.decode(p.index).and_then(ActionKind::patch_id) else { continue };
            let rect = match s.located.get(&pid) {
                Some(r) => *r,
                None => {
                    let r = app.patches.get(pid).and_then(|e| {
                        let hits = locate_on_screen(&e.patch, &shot, app.settings.matching.threshold).ok()?;
                        hits.first().map(|h| Rect::new(h.x, h.y, e.patch.width() as i32, e.patch.height() as i32))
                    });
                    s.located.insert(pid, r);
                    r
                }
            };
            if let Some(rect) = rect {
                targets.push(FieldTarget { patch_id: pid.0, rect, confidence: p.prob });
            }
        }
    } else {
        reason = Some("no_screenshot");
    }
    if targets.is_empty() && reason.is_none() {
        reason = Some("no_targets");
    }
    let locate_ms = started.elapsed().as_secs_f64() * 1000.0;
    let field_targets: Vec<AttractionTarget> =
        targets.iter().map(|t| AttractionTarget::from_rect(t.rect, t.confidence)).collect();
    let samples: Vec<[f64; 4]> = if field_targets.is_empty() {
        Vec::new()
    } else {
        let origin = Vec2::new(q.x.unwrap_or(0.0), q.y.unwrap_or(0.0));
        sample_grid(origin, cols, rows, step, &field_targets, &app.settings.field)
            .into_iter()
            .map(|(p, v)| [p.x, p.y, v.x, v.y])
            .collect()
    };
    Ok(Json(json!({
        "session_id": s.id,
        "targets": targets,
        "cols": if samples.is_empty() { 0 } else { cols },
        "rows": if samples.is_empty() { 0 } else { rows },
        "step": step,
        "samples": samples,
        "reason": reason,
        "locate_ms": locate_ms,
    })))
}

fn ppm_response(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "image/x-portable-pixmap")], bytes).into_response()
}

async fn patch_image(State(app): State<Arc<AppState>>, Path(file): Path<String>) -> ApiResult<Response> {
    let id: u64 = file
        .strip_suffix(".ppm")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown_patch", format!("no patch {file:?}")))?;
    let entry = app
        .patches
        .get(PatchId(id))
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown_patch", format!("no patch {id}")))?;
    Ok(ppm_response(entry.patch.to_ppm()))
}

async fn session_screenshot(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    let s = app.session(&id)?;
    let shot = s.lock().expect("session poisoned").screenshot.clone();
    let shot = shot.ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "no_screenshot", "session has no screenshot"))?;
    Ok(ppm_response(shot.to_ppm()))
}

/// Vocabulary without PAD and UNK, for what-if pickers.
async fn vocabulary(State(app): State<Arc<AppState>>) -> Json<serde_json::Value> {
    let actions: Vec<_> = app
        .vocab
        .iter()
        .map(|(i, a)| json!({ "index": i, "action": a.to_string(), "kind": kind_name(a), "patch_ref": patch_ref(a) }))
        .collect();
    Json(json!({ "hash": app.vocab.hash(), "actions": actions }))
}

pub fn router(app: Arc<AppState>) -> Router {
    let static_dir = app.settings.static_dir.clone();
    let api = Router::new()
        .route("/v1/vocab", get(vocabulary))
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}", get(get_session))
        .route("/v1/sessions/{id}/step", post(step))
        .route("/v1/sessions/{id}/whatif", post(whatif))
        .route("/v1/sessions/{id}/whatif/undo", post(undo))
        .route("/v1/sessions/{id}/reset", post(reset))
        .route("/v1/sessions/{id}/predict", get(predict))
        .route("/v1/sessions/{id}/field", get(field))
        .route("/v1/sessions/{id}/screenshot.ppm", get(session_screenshot))
        .route("/v1/patches/{file}", get(patch_image))
        .with_state(app);
    match static_dir {
        Some(dir) => api.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => api,
    }
}

pub async fn serve(app: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(&app.settings.bind).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(app))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

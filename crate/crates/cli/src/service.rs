//! HTTP service exposing interactive sessions.
//!
//! Each session sits behind its own async mutex, so requests to one session
//! run one at a time in arrival order while other sessions proceed. Model work
//! runs on the blocking pool. Sessions live in memory and are dropped after
//! `session_ttl` without requests.

use std::collections::HashMap;
use std::sync::{Arc, Mutex as StdMutex, RwLock};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use axum::body::{Body, Bytes};
use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::Mutex;

use cropseg::backend::NoiseConfig;
use cropseg::raster::io::{decode_mask_png, decode_rgb, encode_mask_png};
use cropseg::seed::derive_seed;
use cropseg::session::StageTimings;
use cropseg::{iou, Backend, BinaryMask, Click, ImagePlanes, ModelSeries, Polarity, Session, SessionError};

use crate::backends::{reference_backend, BackendKind};
use crate::config::ServiceConfig;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self { status, message: message.into() }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    fn internal(message: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, message.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let status = match e {
            SessionError::OutOfBounds { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            SessionError::DimensionMismatch { .. } => StatusCode::BAD_REQUEST,
            SessionError::NothingToUndo => StatusCode::CONFLICT,
            SessionError::Backend(_) | SessionError::Raster(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.to_string())
    }
}

impl From<tokio::task::JoinError> for ApiError {
    fn from(e: tokio::task::JoinError) -> Self {
        Self::internal(e)
    }
}

type ApiResult<T> = Result<T, ApiError>;

struct SessionEntry {
    session: Arc<Mutex<Session>>,
    gt: Option<Arc<BinaryMask>>,
    width: usize,
    height: usize,
    series: ModelSeries,
    backend: BackendKind,
    created_at: u64,
    last_used: StdMutex<Instant>,
}

impl SessionEntry {
    fn touch(&self) {
        *self.last_used.lock().expect("clock lock") = Instant::now();
    }
}

pub struct AppState {
    cfg: ServiceConfig,
    sessions: RwLock<HashMap<String, Arc<SessionEntry>>>,
    external: Mutex<HashMap<ModelSeries, Arc<dyn Backend>>>,
}

impl AppState {
    pub fn new(cfg: ServiceConfig) -> Arc<Self> {
        Arc::new(Self { cfg, sessions: RwLock::default(), external: Mutex::default() })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.cfg
    }

    pub fn session_count(&self) -> usize {
        self.sessions.read().expect("session map lock").len()
    }

    /// Drops sessions idle for longer than the configured TTL; returns how many.
    pub fn evict_idle(&self) -> usize {
        let ttl = self.cfg.session_ttl;
        let mut map = self.sessions.write().expect("session map lock");
        let before = map.len();
        map.retain(|id, e| {
            let keep = e.last_used.lock().expect("clock lock").elapsed() <= ttl;
            if !keep {
                log::info!("evicting idle session {id}");
            }
            keep
        });
        before - map.len()
    }

    fn entry(&self, id: &str) -> ApiResult<Arc<SessionEntry>> {
        let entry = self
            .sessions
            .read()
            .expect("session map lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("no session {id:?}")))?;
        entry.touch();
        Ok(entry)
    }

    async fn external_backend(&self, series: ModelSeries) -> ApiResult<Arc<dyn Backend>> {
        let paths = self
            .cfg
            .model
            .clone()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "backend \"external\" is not configured (start with --model)"))?;
        let mut cache = self.external.lock().await;
        if let Some(b) = cache.get(&series) {
            return Ok(b.clone());
        }
        let backend = tokio::task::spawn_blocking(move || paths.load(series)).await?.map_err(ApiError::internal)?;
        cache.insert(series, backend.clone());
        Ok(backend)
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    let limit = state.cfg.max_upload_bytes;
    Router::new()
        .route("/health", get(health))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(session_info).delete(delete_session))
        .route("/sessions/{id}/clicks", post(add_click))
        .route("/sessions/{id}/mask", get(get_mask).put(put_mask))
        .route("/sessions/{id}/undo", post(undo))
        .route("/sessions/{id}/audit", get(audit))
        .layer(DefaultBodyLimit::max(limit))
        .layer(middleware::from_fn(log_requests))
        .with_state(state)
}

/// Binds and serves until ctrl-c, evicting idle sessions in the background.
pub async fn serve(cfg: ServiceConfig) -> anyhow::Result<()> {
    let addr = format!("{}:{}", cfg.host, cfg.port);
    let state = AppState::new(cfg);
    let sweeper = state.clone();
    let period = (state.cfg.session_ttl / 4).clamp(std::time::Duration::from_secs(1), std::time::Duration::from_secs(60));
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(period);
        loop {
            tick.tick().await;
            sweeper.evict_idle();
        }
    });
    let listener = tokio::net::TcpListener::bind(&addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

async fn log_requests(req: Request, next: Next) -> Response {
    let start = Instant::now();
    let method = req.method().to_string();
    let path = req.uri().path().to_string();
    let response = next.run(req).await;
    let line = json!({
        "ts": SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0),
        "method": method,
        "path": path,
        "status": response.status().as_u16(),
        "ms": start.elapsed().as_secs_f64() * 1e3,
    });
    log::info!(target: "cropseg::request", "{line}");
    response
}

async fn health(State(st): State<Arc<AppState>>) -> Json<serde_json::Value> {
    Json(json!({ "status": "ok", "sessions": st.session_count() }))
}

#[derive(Debug, Deserialize)]
struct CreateQuery {
    series: Option<String>,
    backend: Option<String>,
}

#[derive(Debug, Serialize)]
struct Created {
    id: String,
    width: usize,
    height: usize,
    series: ModelSeries,
    backend: String,
}

fn decode_mask_part(name: &str, bytes: &[u8], (w, h): (usize, usize)) -> ApiResult<BinaryMask> {
    let mask = decode_mask_png(bytes).map_err(|e| ApiError::bad_request(format!("{name}: cannot decode: {e}")))?;
    if mask.dims() != (w, h) {
        let (mw, mh) = mask.dims();
        return Err(ApiError::bad_request(format!("{name} is {mw}x{mh} but the image is {w}x{h}")));
    }
    Ok(mask)
}

async fn create_session(
    State(st): State<Arc<AppState>>,
    Query(q): Query<CreateQuery>,
    mut multipart: Multipart,
) -> ApiResult<(StatusCode, Json<Created>)> {
    let series: ModelSeries = match &q.series {
        Some(s) => s.parse().map_err(ApiError::bad_request)?,
        None => st.cfg.default_series,
    };
    let kind: BackendKind = match &q.backend {
        Some(b) => b.parse().map_err(|e: String| ApiError::new(StatusCode::NOT_FOUND, e))?,
        None => st.cfg.default_backend,
    };

    let (mut image, mut init, mut gt) = (None, None, None);
    while let Some(field) = multipart.next_field().await.map_err(|e| ApiError::bad_request(e.body_text()))? {
        let name = field.name().unwrap_or_default().to_string();
        let bytes = field.bytes().await.map_err(|e| ApiError::bad_request(e.body_text()))?;
        match name.as_str() {
            "image" => image = Some(bytes),
            "init_mask" => init = Some(bytes),
            "gt" => gt = Some(bytes),
            other => log::debug!("ignoring multipart field {other:?}"),
        }
    }
    let image = image.ok_or_else(|| ApiError::bad_request("missing multipart field \"image\""))?;
    let rgb = decode_rgb(&image).map_err(|e| ApiError::bad_request(format!("image: cannot decode: {e}")))?;
    let planes = ImagePlanes::from_rgb(&rgb);
    let dims = planes.dims();
    let init = init.map(|b| decode_mask_part("init_mask", &b, dims)).transpose()?;
    let gt = gt.map(|b| decode_mask_part("gt", &b, dims)).transpose()?;

    let id = uuid::Uuid::new_v4().simple().to_string();
    let backend = match kind {
        BackendKind::External => st.external_backend(series).await?,
        _ => {
            let noise = NoiseConfig { seed: derive_seed(st.cfg.noise.seed, &[b"session", id.as_bytes()]), ..st.cfg.noise };
            reference_backend(kind, gt.as_ref(), noise)
                .ok_or_else(|| ApiError::bad_request(format!("backend {kind} needs a \"gt\" mask part")))?
        }
    };
    let session = Session::new(planes, init, series, backend)?;
    let entry = SessionEntry {
        session: Arc::new(Mutex::new(session)),
        gt: gt.map(Arc::new),
        width: dims.0,
        height: dims.1,
        series,
        backend: kind,
        created_at: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        last_used: StdMutex::new(Instant::now()),
    };
    st.sessions.write().expect("session map lock").insert(id.clone(), Arc::new(entry));
    log::info!("created session {id} ({}x{}, {series}, {kind})", dims.0, dims.1);
    let body = Created { id, width: dims.0, height: dims.1, series, backend: kind.to_string() };
    Ok((StatusCode::CREATED, Json(body)))
}

async fn session_info(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<serde_json::Value>> {
    let entry = st.entry(&id)?;
    let s = entry.session.lock().await;
    Ok(Json(json!({
        "id": id,
        "width": entry.width,
        "height": entry.height,
        "series": entry.series,
        "backend": entry.backend.name(),
        "created_at": entry.created_at,
        "clicks": s.clicks().len(),
        "progressive": s.progressive_active(),
        "has_gt": entry.gt.is_some(),
    })))
}

async fn delete_session(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<StatusCode> {
    st.sessions
        .write()
        .expect("session map lock")
        .remove(&id)
        .map(|_| StatusCode::NO_CONTENT)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("no session {id:?}")))
}

#[derive(Debug, Deserialize)]
struct ClickBody {
    x: i64,
    y: i64,
    polarity: Polarity,
}

#[derive(Debug, Serialize)]
struct ClickResponse {
    mask_url: String,
    /// `[x0, y0, x1, y1]`, half-open; `null` when nothing changed.
    updated_region: Option<[usize; 4]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    iou: Option<f64>,
    progressive: bool,
    clicks: usize,
    timings: StageTimings,
}

async fn add_click(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(body): Json<ClickBody>,
) -> ApiResult<Json<ClickResponse>> {
    let entry = st.entry(&id)?;
    let (w, h) = (entry.width as i64, entry.height as i64);
    if !(0..w).contains(&body.x) || !(0..h).contains(&body.y) {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            format!("click ({}, {}) is outside the {w}x{h} image", body.x, body.y),
        ));
    }
    let click = Click::new(body.x as usize, body.y as usize, body.polarity);
    let mut guard = entry.session.clone().lock_owned().await;
    let gt = entry.gt.clone();
    let (result, score, clicks, progressive) = tokio::task::spawn_blocking(move || -> ApiResult<_> {
        let r = guard.add_click(click)?;
        let score = gt.map(|g| iou(guard.mask(), &g)).transpose().map_err(ApiError::internal)?;
        Ok((r, score, guard.clicks().len(), guard.progressive_active()))
    })
    .await??;
    entry.touch();
    Ok(Json(ClickResponse {
        mask_url: format!("/sessions/{id}/mask"),
        updated_region: result.updated_region.map(|b| b.to_array()),
        iou: score,
        progressive: progressive || result.progressive,
        clicks,
        timings: result.timings,
    }))
}

fn png_response(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], bytes).into_response()
}

async fn get_mask(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    let entry = st.entry(&id)?;
    let mask = entry.session.lock().await.mask().clone();
    let png = tokio::task::spawn_blocking(move || encode_mask_png(&mask)).await?.map_err(ApiError::internal)?;
    Ok(png_response(png))
}

async fn put_mask(State(st): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> ApiResult<StatusCode> {
    let entry = st.entry(&id)?;
    let mask = decode_mask_part("mask", &body, (entry.width, entry.height))?;
    entry.session.lock().await.set_mask(mask)?;
    Ok(StatusCode::NO_CONTENT)
}

async fn undo(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<serde_json::Value>> {
    let entry = st.entry(&id)?;
    let mut s = entry.session.lock().await;
    s.undo()?;
    Ok(Json(json!({
        "mask_url": format!("/sessions/{id}/mask"),
        "clicks": s.clicks().len(),
        "progressive": s.progressive_active(),
    })))
}

async fn audit(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    let entry = st.entry(&id)?;
    let mut buf = Vec::new();
    entry.session.lock().await.write_audit_jsonl(&mut buf).map_err(ApiError::internal)?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], Body::from(buf)).into_response())
}

//! REST annotation server over the voxlabel engine.
//!
//! Endpoints:
//!
//! | method | path | |
//! |---|---|---|
//! | GET | `/info` | app description, models, strategies, plan |
//! | POST | `/infer/{model}?image=ID` or `?session=SID` | multipart in (`params`, `scribbles`), multipart out (`params`, `label`) |
//! | POST | `/train/{model}` | start the single background job |
//! | GET, DELETE | `/train` | job progress / request cancellation |
//! | POST | `/activelearning/{strategy}` | next unlabeled image |
//! | GET, POST | `/datastore` | list / upload an image |
//! | PUT | `/datastore/label?image=ID&tag=final` | save a label |
//! | GET | `/datastore/image/{id}`, `/datastore/label/{id}` | raw NIfTI |
//! | GET | `/datastore/voxels/{id}?indices=..` | voxel values by linear index |
//! | POST | `/session` | upload an ad-hoc volume |
//!
//! Errors are JSON: `{"error": code, "message": text}`.

pub mod engine;
pub mod error;
pub mod manifest;
pub mod multipart;
pub mod state;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Instant;

use axum::extract::rejection::BytesRejection;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use bytes::Bytes;
use serde::Deserialize;
use serde_json::{json, Value};
use tower_http::cors::CorsLayer;
use tower_http::services::ServeDir;
use voxlabel_core::active::{next, Strategy};
use voxlabel_core::datastore::TAG_FINAL;
use voxlabel_core::volume::nifti;

pub use engine::{active_learning_model, encode_label, infer, load_models, parse_scribbles, InferParams, ModelSnapshot};
pub use error::{ApiError, ApiResult};
pub use manifest::{AppManifest, ModelKind, ModelSpec};
pub use state::{AppState, JobState, JobView, ServerConfig, DEFAULT_PORT};

type Shared = Arc<AppState>;

pub fn router(state: Shared) -> Router {
    let limit = state.config.max_body_bytes;
    let mut app = Router::new()
        .route("/info", get(info))
        .route("/infer/{model}", post(infer_handler))
        .route("/train/{model}", post(train_start))
        .route("/train", get(train_status).delete(train_cancel))
        .route("/activelearning/{strategy}", post(active_learning))
        .route("/datastore", get(datastore_list).post(datastore_add))
        .route("/datastore/label", put(datastore_label))
        .route("/datastore/image/{id}", get(datastore_image))
        .route("/datastore/label/{id}", get(datastore_label_get))
        .route("/datastore/voxels/{id}", get(datastore_voxels))
        .route("/session", post(session_add));
    if let Some(dir) = &state.config.ui_dir {
        app = app.nest_service("/ui", ServeDir::new(dir));
    }
    app.layer(DefaultBodyLimit::max(limit))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

/// Serves on `0.0.0.0:port` until the process ends.
pub async fn serve(config: ServerConfig) -> std::io::Result<()> {
    let port = config.port;
    let state = AppState::open(config).map_err(std::io::Error::other)?;
    let listener = tokio::net::TcpListener::bind(SocketAddr::from(([0, 0, 0, 0], port))).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}

fn body(b: Result<Bytes, BytesRejection>) -> ApiResult<Bytes> {
    b.map_err(|e| {
        if e.status() == StatusCode::PAYLOAD_TOO_LARGE {
            ApiError::new(413, "PayloadTooLarge", e.body_text())
        } else {
            ApiError::bad_params(e.body_text())
        }
    })
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
}

async fn info(State(s): State<Shared>) -> Json<Value> {
    let models = s.models();
    let listed: serde_json::Map<String, Value> = s
        .manifest
        .models
        .iter()
        .map(|(name, spec)| {
            let trained = !spec.kind.is_learned() || models.contains_key(name);
            (name.clone(), json!({"type": spec.kind, "trained": trained}))
        })
        .collect();
    Json(json!({
        "name": s.manifest.name,
        "version": env!("CARGO_PKG_VERSION"),
        "models": listed,
        "strategies": s.manifest.strategies,
        "plan": s.plan(),
    }))
}

#[derive(Debug, Deserialize)]
struct InferQuery {
    image: Option<String>,
    session: Option<String>,
}

async fn infer_handler(
    State(s): State<Shared>,
    Path(model): Path<String>,
    Query(q): Query<InferQuery>,
    headers: HeaderMap,
    raw: Result<Bytes, BytesRejection>,
) -> ApiResult<Response> {
    let started = Instant::now();
    let raw = body(raw)?;
    let parts = multipart::parse_request(&headers, raw).await?;
    let params = match parts.get("params") {
        Some(p) => InferParams::from_json(&p.data)?,
        None => InferParams::default(),
    };
    let scribble_bytes = parts.get("scribbles").map(|p| p.data.clone());
    let models = s.models();
    let label = blocking(move || {
        let volume = match (q.image.as_deref(), q.session.as_deref()) {
            (Some(id), None) => Arc::new(s.datastore.read().unwrap().load(id)?),
            (None, Some(sid)) => s.session(sid)?,
            _ => return Err(ApiError::bad_params("give exactly one of image= or session=")),
        };
        let scribbles = scribble_bytes.map(|b| parse_scribbles(&b, &volume)).transpose()?;
        let mask = infer(&s.manifest, &models, &model, &volume, &params, scribbles.as_ref())?;
        Ok((mask.count(), encode_label(&mask, &volume)))
    })
    .await?;
    let meta = json!({
        "latency_ms": started.elapsed().as_secs_f64() * 1e3,
        "label_voxel_count": label.0,
    });
    Ok(multipart::label_response(&meta, label.1))
}

fn json_object(raw: &[u8]) -> ApiResult<serde_json::Map<String, Value>> {
    if raw.iter().all(u8::is_ascii_whitespace) {
        return Ok(Default::default());
    }
    match serde_json::from_slice(raw) {
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => Err(ApiError::bad_params("expected a JSON object")),
        Err(e) => Err(ApiError::bad_params(e.to_string())),
    }
}

async fn train_start(
    State(s): State<Shared>,
    Path(model): Path<String>,
    raw: Result<Bytes, BytesRejection>,
) -> ApiResult<Response> {
    let overrides = json_object(&body(raw)?)?;
    let view = blocking(move || s.start_training(&model, overrides)).await?;
    Ok((StatusCode::ACCEPTED, Json(view)).into_response())
}

async fn train_status(State(s): State<Shared>) -> Json<Option<JobView>> {
    Json(s.job_view())
}

async fn train_cancel(State(s): State<Shared>) -> ApiResult<Json<JobView>> {
    s.cancel_job().map(Json)
}

async fn active_learning(
    State(s): State<Shared>,
    Path(name): Path<String>,
    raw: Result<Bytes, BytesRejection>,
) -> ApiResult<Json<Value>> {
    let opts = json_object(&body(raw)?)?;
    let seed = opts.get("seed").and_then(Value::as_u64).unwrap_or(0);
    let strategy = s
        .manifest
        .strategies
        .contains(&name)
        .then(|| Strategy::from_name(&name, seed))
        .flatten()
        .ok_or_else(|| ApiError::new(404, "UnknownStrategy", format!("strategy {name:?} is not enabled")))?;
    let models = s.models();
    blocking(move || {
        let model = active_learning_model(&s.manifest, &models);
        let ds = s.datastore.read().unwrap();
        let (_, pool) = ds.partition();
        let picked = next(&pool, &strategy, &model, &*ds)?;
        Ok(Json(json!({
            "image_id": picked.image_id,
            "score": picked.score,
            "strategy": picked.strategy,
            "timestamp": picked.timestamp,
        })))
    })
    .await
}

async fn datastore_list(State(s): State<Shared>) -> Json<Value> {
    let ds = s.datastore.read().unwrap();
    let entries: Vec<Value> = ds
        .index()
        .entries
        .iter()
        .map(|(id, e)| {
            json!({
                "id": id,
                "labeled": e.is_labeled(),
                "labels": e.labels.keys().collect::<Vec<_>>(),
                "meta": e.meta,
                "added_at": e.added_at,
                "label_saved_at": e.label_saved_at,
            })
        })
        .collect();
    let (labeled, unlabeled) = ds.partition();
    Json(json!({"entries": entries, "labeled": labeled, "unlabeled": unlabeled}))
}

#[derive(Debug, Deserialize)]
struct AddQuery {
    id: Option<String>,
}

fn stem(filename: &str) -> &str {
    let base = filename.rsplit(['/', '\\']).next().unwrap_or(filename);
    base.strip_suffix(".nii.gz")
        .or_else(|| base.strip_suffix(".nii"))
        .unwrap_or(base)
}

async fn datastore_add(
    State(s): State<Shared>,
    Query(q): Query<AddQuery>,
    headers: HeaderMap,
    raw: Result<Bytes, BytesRejection>,
) -> ApiResult<Response> {
    let raw = body(raw)?;
    let (id, data) = if multipart::is_multipart(&headers) {
        let parts = multipart::parse_request(&headers, raw).await?;
        let image = parts
            .get("image")
            .or_else(|| parts.get("file"))
            .ok_or_else(|| ApiError::bad_params("multipart upload needs an \"image\" part"))?;
        let id = parts
            .get("id")
            .map(|p| String::from_utf8_lossy(&p.data).trim().to_string())
            .or(q.id)
            .or_else(|| image.filename.as_deref().map(|f| stem(f).to_string()))
            .ok_or_else(|| ApiError::bad_params("no image id: give an \"id\" part or a filename"))?;
        (id, image.data.clone())
    } else {
        let id = q.id.ok_or_else(|| ApiError::bad_params("raw uploads need ?id="))?;
        (id, raw)
    };
    let id = blocking(move || Ok(s.datastore.write().unwrap().add_image(&id, &data)?)).await?;
    Ok((StatusCode::CREATED, Json(json!({"image_id": id}))).into_response())
}

#[derive(Debug, Deserialize)]
struct LabelQuery {
    image: String,
    tag: Option<String>,
}

async fn datastore_label(
    State(s): State<Shared>,
    Query(q): Query<LabelQuery>,
    raw: Result<Bytes, BytesRejection>,
) -> ApiResult<Json<Value>> {
    let data = body(raw)?;
    blocking(move || {
        let tag = q.tag.unwrap_or_else(|| TAG_FINAL.to_string());
        let mut ds = s.datastore.write().unwrap();
        ds.save_label(&q.image, &tag, &data)?;
        let labeled = ds.entry(&q.image)?.is_labeled();
        Ok(Json(json!({"image_id": q.image, "tag": tag, "labeled": labeled})))
    })
    .await
}

fn nifti_response(data: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "application/octet-stream")], data).into_response()
}

async fn datastore_image(State(s): State<Shared>, Path(id): Path<String>) -> ApiResult<Response> {
    let data = blocking(move || Ok(s.datastore.read().unwrap().image_bytes(&id)?)).await?;
    Ok(nifti_response(data))
}

#[derive(Debug, Deserialize)]
struct TagQuery {
    tag: Option<String>,
}

async fn datastore_label_get(
    State(s): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<TagQuery>,
) -> ApiResult<Response> {
    let tag = q.tag.unwrap_or_else(|| TAG_FINAL.to_string());
    let data = blocking(move || {
        s.datastore
            .read()
            .unwrap()
            .label_bytes(&id, &tag)?
            .ok_or_else(|| ApiError::new(404, "NoLabel", format!("{id} has no {tag:?} label")))
    })
    .await?;
    Ok(nifti_response(data))
}

async fn datastore_voxels(
    State(s): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<Json<Value>> {
    let indices: Vec<usize> = q
        .get("indices")
        .map(String::as_str)
        .unwrap_or("")
        .split(',')
        .filter(|t| !t.is_empty())
        .map(|t| t.trim().parse().map_err(|_| ApiError::bad_params(format!("bad index {t:?}"))))
        .collect::<ApiResult<_>>()?;
    blocking(move || {
        let v = s.datastore.read().unwrap().load(&id)?;
        let values = indices
            .iter()
            .map(|&i| {
                v.data()
                    .get(i)
                    .copied()
                    .ok_or_else(|| ApiError::bad_params(format!("index {i} outside {} voxels", v.len())))
            })
            .collect::<ApiResult<Vec<f32>>>()?;
        Ok(Json(json!({"dims": v.dims(), "indices": indices, "values": values})))
    })
    .await
}

async fn session_add(State(s): State<Shared>, raw: Result<Bytes, BytesRejection>) -> ApiResult<Json<Value>> {
    let data = body(raw)?;
    blocking(move || {
        let v = nifti::read(&data).map_err(|e| ApiError::new(400, "BadImage", e.to_string()))?;
        let (id, expiry) = s.add_session(v);
        Ok(Json(json!({"session_id": id, "expiry": expiry})))
    })
    .await
}

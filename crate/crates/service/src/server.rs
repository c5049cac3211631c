//! HTTP service over loaded scene bundles.
//!
//! | route                        | body                                                   |
//! |------------------------------|--------------------------------------------------------|
//! | `GET /healthz`               |                                                        |
//! | `GET /scenes`                |                                                        |
//! | `POST /scenes/{name}/render` | `{camera, feature?}`                                   |
//! | `POST /scenes/{name}/query`  | `{embedding \| text, camera, mode, threshold?}`         |
//!
//! JSON responses carry a `timings` object in milliseconds; every response
//! also has an `x-elapsed-ms` header. Images are base64 PNGs.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};
use std::time::Instant;

use anyhow::Context;
use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Request, State};
use axum::http::{HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use semsplat::query::{QueryError, ScoreStats, CANONICAL_PHRASES};
use semsplat::raster::DEFAULT_TILE_SIZE;
use semsplat::{Embedding, PinholeCamera};
use serde::{Deserialize, Serialize};
use tokio::sync::OnceCell;

use crate::bankfile::encode_f32s;
use crate::bundle::{SceneBundle, SCENE_FILE};
use crate::camera::CameraSpec;
use crate::embed::{EmbedError, Embedder};
use crate::ops::{self, ms, Answer, Mode};
use crate::png::{encode_classes, encode_mask, encode_rgb};

#[derive(Debug)]
pub enum ApiError {
    NotFound(String),
    BadRequest(String),
    BadGateway(String),
    Internal(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, message) = match self {
            Self::NotFound(m) => (StatusCode::NOT_FOUND, m),
            Self::BadRequest(m) => (StatusCode::BAD_REQUEST, m),
            Self::BadGateway(m) => (StatusCode::BAD_GATEWAY, m),
            Self::Internal(m) => (StatusCode::INTERNAL_SERVER_ERROR, m),
        };
        (status, Json(serde_json::json!({ "error": message }))).into_response()
    }
}

impl From<EmbedError> for ApiError {
    fn from(e: EmbedError) -> Self {
        Self::BadGateway(e.to_string())
    }
}

impl From<QueryError> for ApiError {
    fn from(e: QueryError) -> Self {
        Self::BadRequest(e.to_string())
    }
}

pub struct LoadedScene {
    pub bundle: SceneBundle,
    canon: OnceCell<Vec<Embedding>>,
}

impl LoadedScene {
    pub fn new(bundle: SceneBundle) -> Self {
        Self {
            bundle,
            canon: OnceCell::new(),
        }
    }

    /// Canonical embeddings from the bundle, else fetched once from the
    /// embedder.
    async fn canon(&self, embedder: Option<&Embedder>) -> Result<&[Embedding], ApiError> {
        let v = self
            .canon
            .get_or_try_init(|| async {
                if let Some(file) = &self.bundle.canon {
                    return file.embeddings().map_err(|e| ApiError::Internal(e.to_string()));
                }
                let embedder = embedder.ok_or_else(|| {
                    ApiError::BadRequest("scene has no canonical embeddings and no embedder is configured".into())
                })?;
                let phrases: Vec<String> = CANONICAL_PHRASES.iter().map(|s| s.to_string()).collect();
                Ok(embedder.embed(&phrases).await?)
            })
            .await?;
        Ok(v)
    }
}

/// Loaded scenes. Reads run concurrently; load and unload are exclusive.
#[derive(Default)]
pub struct Registry {
    scenes: RwLock<BTreeMap<String, Arc<LoadedScene>>>,
}

impl Registry {
    pub fn insert(&self, bundle: SceneBundle) -> Option<Arc<LoadedScene>> {
        let name = bundle.name().to_string();
        self.scenes.write().unwrap().insert(name, Arc::new(LoadedScene::new(bundle)))
    }

    pub fn remove(&self, name: &str) -> Option<Arc<LoadedScene>> {
        self.scenes.write().unwrap().remove(name)
    }

    pub fn get(&self, name: &str) -> Option<Arc<LoadedScene>> {
        self.scenes.read().unwrap().get(name).cloned()
    }

    pub fn names(&self) -> Vec<String> {
        self.scenes.read().unwrap().keys().cloned().collect()
    }

    /// Loads every bundle directly under `dir`.
    pub fn load_dir(&self, dir: &Path) -> anyhow::Result<usize> {
        let mut dirs: Vec<PathBuf> = std::fs::read_dir(dir)
            .with_context(|| format!("reading {}", dir.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join(SCENE_FILE).is_file())
            .collect();
        dirs.sort();
        for d in &dirs {
            let bundle = SceneBundle::load(d).with_context(|| format!("loading {}", d.display()))?;
            tracing::info!(scene = bundle.name(), gaussians = bundle.scene.gaussians.len(), "loaded");
            if self.insert(bundle).is_some() {
                anyhow::bail!("duplicate scene name in {}", d.display());
            }
        }
        Ok(dirs.len())
    }
}

pub struct AppState {
    pub registry: Registry,
    pub embedder: Option<Embedder>,
    pub tile_size: u32,
    pub threshold: f64,
}

impl AppState {
    pub fn new(embedder: Option<Embedder>) -> Self {
        Self {
            registry: Registry::default(),
            embedder,
            tile_size: DEFAULT_TILE_SIZE,
            threshold: semsplat::query::DEFAULT_THRESHOLD,
        }
    }

    fn scene(&self, name: &str) -> Result<Arc<LoadedScene>, ApiError> {
        self.registry
            .get(name)
            .ok_or_else(|| ApiError::NotFound(format!("unknown scene `{name}`")))
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/healthz", get(|| async { "ok" }))
        .route("/scenes", get(list_scenes))
        .route("/scenes/{name}/render", post(render))
        .route("/scenes/{name}/query", post(query))
        .layer(middleware::from_fn(elapsed_header))
        .with_state(state)
}

async fn elapsed_header(req: Request, next: Next) -> Response {
    let start = Instant::now();
    let mut resp = next.run(req).await;
    if let Ok(v) = HeaderValue::from_str(&format!("{:.3}", ms(start))) {
        resp.headers_mut().insert("x-elapsed-ms", v);
    }
    resp
}

fn parse<T: serde::de::DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::BadRequest(format!("malformed request: {e}")))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SceneInfo {
    pub name: String,
    pub gaussians: usize,
    pub bank_entries: usize,
    pub dim: usize,
    pub cameras: Vec<CameraSpec>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ScenesResponse {
    pub scenes: Vec<SceneInfo>,
    pub timings: BTreeMap<String, f64>,
}

async fn list_scenes(State(state): State<Arc<AppState>>) -> Json<ScenesResponse> {
    let start = Instant::now();
    let scenes = state
        .registry
        .names()
        .into_iter()
        .filter_map(|n| state.registry.get(&n))
        .map(|s| SceneInfo {
            name: s.bundle.name().to_string(),
            gaussians: s.bundle.scene.gaussians.len(),
            bank_entries: s.bundle.bank.len(),
            dim: s.bundle.bank.dim(),
            cameras: s.bundle.cameras().iter().map(CameraSpec::from_camera).collect(),
        })
        .collect();
    Json(ScenesResponse {
        scenes,
        timings: BTreeMap::from([("total_ms".to_string(), ms(start))]),
    })
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderRequest {
    pub camera: CameraSpec,
    /// Also return the raw feature buffer.
    #[serde(default)]
    pub feature: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RenderResponse {
    pub width: u32,
    pub height: u32,
    pub image_png: String,
    /// Base64 little-endian f32, three per pixel, row-major.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feature: Option<String>,
    pub timings: BTreeMap<String, f64>,
}

fn camera_for(scene: &LoadedScene, spec: &CameraSpec) -> Result<PinholeCamera, ApiError> {
    spec.resolve(scene.bundle.cameras())
        .map_err(|e| ApiError::BadRequest(format!("bad camera: {e}")))
}

async fn render(
    State(state): State<Arc<AppState>>,
    UrlPath(name): UrlPath<String>,
    body: Bytes,
) -> Result<Json<RenderResponse>, ApiError> {
    let start = Instant::now();
    let scene = state.scene(&name)?;
    let req: RenderRequest = parse(&body)?;
    let cam = camera_for(&scene, &req.camera)?;
    let tile = state.tile_size;
    blocking(move || {
        let t = Instant::now();
        let out = ops::render(&scene.bundle, &cam, tile);
        let render_ms = ms(t);
        let t = Instant::now();
        let image_png = STANDARD.encode(encode_rgb(&out.rgb));
        let feature = req.feature.then(|| {
            let flat: Vec<f32> = out.feature.values.iter().flatten().copied().collect();
            encode_f32s(&flat)
        });
        let encode_ms = ms(t);
        Json(RenderResponse {
            width: cam.width,
            height: cam.height,
            image_png,
            feature,
            timings: BTreeMap::from([
                ("render_ms".to_string(), render_ms),
                ("encode_ms".to_string(), encode_ms),
                ("total_ms".to_string(), ms(start)),
            ]),
        })
    })
    .await
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T> OneOrMany<T> {
    fn into_vec(self) -> Vec<T> {
        match self {
            Self::One(v) => vec![v],
            Self::Many(v) => v,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<OneOrMany<Vec<f32>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<OneOrMany<String>>,
    pub camera: CameraSpec,
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: u32,
    pub y: u32,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

impl From<ScoreStats> for Stats {
    fn from(s: ScoreStats) -> Self {
        Self {
            min: s.min,
            max: s.max,
            mean: s.mean,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct QueryResponse {
    pub mode: Mode,
    pub width: u32,
    pub height: u32,
    pub threshold: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<Point>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_png: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_pixels: Option<usize>,
    /// Grayscale class indices: 0 background, `k` for query `k - 1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes_png: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_pixels: Option<Vec<usize>>,
    pub stats: Vec<Stats>,
    pub unique_ids: usize,
    pub timings: BTreeMap<String, f64>,
}

async fn query(
    State(state): State<Arc<AppState>>,
    UrlPath(name): UrlPath<String>,
    body: Bytes,
) -> Result<Json<QueryResponse>, ApiError> {
    let start = Instant::now();
    let scene = state.scene(&name)?;
    let req: QueryRequest = parse(&body)?;
    let cam = camera_for(&scene, &req.camera)?;
    let threshold = req.threshold.unwrap_or(state.threshold);
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(ApiError::BadRequest(format!("threshold {threshold} must lie in (0, 1)")));
    }
    let t = Instant::now();
    let queries: Vec<Embedding> = match (req.embedding, req.text) {
        (Some(e), None) => e.into_vec().into_iter().map(Embedding).collect(),
        (None, Some(text)) => {
            let embedder = state.embedder.as_ref().ok_or_else(|| {
                ApiError::BadRequest("text queries need an embedder; start the service with --embedder-url".into())
            })?;
            embedder.embed(&text.into_vec()).await?
        }
        _ => return Err(ApiError::BadRequest("give exactly one of `embedding` or `text`".into())),
    };
    if queries.is_empty() {
        return Err(ApiError::BadRequest("no queries".into()));
    }
    if req.mode != Mode::Multiclass && queries.len() != 1 {
        return Err(ApiError::BadRequest(format!("{:?} takes exactly one query", req.mode).to_lowercase()));
    }
    let canon = scene.canon(state.embedder.as_ref()).await?.to_vec();
    let embed_ms = ms(t);
    let tile = state.tile_size;
    let mode = req.mode;
    let resp = blocking(move || -> Result<QueryResponse, ApiError> {
        let t = Instant::now();
        let rendered = ops::render(&scene.bundle, &cam, tile);
        let render_ms = ms(t);
        let outcome = ops::query(&scene.bundle, &rendered, &queries, &canon, mode, threshold)?;
        let mut resp = QueryResponse {
            mode,
            width: cam.width,
            height: cam.height,
            threshold,
            point: None,
            mask_png: None,
            mask_pixels: None,
            classes_png: None,
            class_pixels: None,
            stats: outcome.stats.into_iter().map(Stats::from).collect(),
            unique_ids: outcome.unique,
            timings: BTreeMap::new(),
        };
        let t = Instant::now();
        match outcome.answer {
            Answer::Point { x, y, score } => resp.point = Some(Point { x, y, score }),
            Answer::Mask(mask) => {
                resp.mask_pixels = Some(mask.count());
                resp.mask_png = Some(STANDARD.encode(encode_mask(&mask)));
            }
            Answer::Classes(classes) => {
                let mut counts = vec![0usize; queries.len() + 1];
                for &c in &classes.classes {
                    counts[c as usize] += 1;
                }
                resp.class_pixels = Some(counts);
                resp.classes_png = Some(STANDARD.encode(encode_classes(&classes)));
            }
        }
        resp.timings = BTreeMap::from([
            ("embed_ms".to_string(), embed_ms),
            ("render_ms".to_string(), render_ms),
            ("query_ms".to_string(), outcome.query_ms),
            ("encode_ms".to_string(), ms(t)),
        ]);
        Ok(resp)
    })
    .await??;
    let mut resp = resp;
    resp.timings.insert("total_ms".to_string(), ms(start));
    Ok(Json(resp))
}

pub struct ServeConfig {
    pub scenes_dir: PathBuf,
    pub bind: SocketAddr,
    pub embedder: Option<Embedder>,
    pub tile_size: u32,
    pub threshold: f64,
}

pub async fn serve(config: ServeConfig) -> anyhow::Result<()> {
    let mut state = AppState::new(config.embedder);
    state.tile_size = config.tile_size;
    state.threshold = config.threshold;
    let n = state.registry.load_dir(&config.scenes_dir)?;
    tracing::info!(scenes = n, dir = %config.scenes_dir.display(), "scenes loaded");
    let listener = tokio::net::TcpListener::bind(config.bind)
        .await
        .with_context(|| format!("binding {}", config.bind))?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(Arc::new(state))).await?;
    Ok(())
}

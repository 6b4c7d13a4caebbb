//! Read-only HTTP API over a frozen black box and its AnyCBM heads.
//!
//! Handlers are plain functions of an immutable [`AppState`]; the axum
//! router only adapts them to HTTP. Every JSON body carries `"v": 1`.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::Arc;

use anycbm::anycbm::AnyCbmHeads;
use anycbm::blackbox::BlackBoxModel;
use anycbm::data::Dataset;
use anycbm::eval::{perturb_embedding, NoiseProfile};
use anycbm::nn::softmax_rows;
use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine as _;
use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tower_http::cors::CorsLayer;

pub const API_VERSION: u32 = 1;
pub const DEFAULT_PAGE: usize = 20;
pub const MAX_PAGE: usize = 200;

/// Models and data shared by every request.
#[derive(Debug)]
pub struct AppState {
    blackbox: BlackBoxModel,
    heads: AnyCbmHeads,
    heads_hash: String,
    test: Dataset,
    profile: NoiseProfile,
    noise_layer: usize,
}

impl AppState {
    /// `train` supplies the per-dimension noise scale at `noise_layer`.
    pub fn new(
        blackbox: BlackBoxModel,
        heads: AnyCbmHeads,
        train: &Dataset,
        test: Dataset,
        noise_layer: usize,
    ) -> anycbm::Result<Self> {
        heads.check_pair(&blackbox)?;
        if noise_layer >= heads.taps().0 {
            return Err(anycbm::Error::InvalidArgument(format!(
                "noise layer {noise_layer} must come before tap {}",
                heads.taps().0
            )));
        }
        if test.meta.n != blackbox.net().in_dim() || test.meta.k != heads.k() {
            return Err(anycbm::Error::Shape(format!(
                "test data is {}x{} features/concepts, models expect {}x{}",
                test.meta.n,
                test.meta.k,
                blackbox.net().in_dim(),
                heads.k()
            )));
        }
        let profile = NoiseProfile::from_activations(blackbox.embed(train.features().view(), noise_layer)?.view())?;
        Ok(Self {
            heads_hash: heads.to_checkpoint().hash(),
            blackbox,
            heads,
            test,
            profile,
            noise_layer,
        })
    }

    pub fn blackbox(&self) -> &BlackBoxModel {
        &self.blackbox
    }

    pub fn heads(&self) -> &AnyCbmHeads {
        &self.heads
    }

    pub fn test(&self) -> &Dataset {
        &self.test
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Taps {
    pub tap_l: usize,
    pub tap_q: usize,
    pub noise_layer: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfoResponse {
    pub v: u32,
    pub n: usize,
    pub k: usize,
    pub o: usize,
    pub concept_names: Vec<String>,
    pub image_shape: Option<[usize; 3]>,
    pub taps: Taps,
    pub mode: String,
    pub blackbox_hash: String,
    pub heads_hash: String,
    pub test_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageView {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    /// Row-major, channels interleaved, one byte per value.
    pub data: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleView {
    pub id: usize,
    pub image: Option<ImageView>,
    pub true_label: usize,
    pub true_concepts: Vec<u8>,
    pub predicted_concepts: Vec<f32>,
    pub task_distribution: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplesPage {
    pub v: u32,
    pub offset: usize,
    pub limit: usize,
    pub total: usize,
    pub samples: Vec<SampleView>,
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct PageQuery {
    pub offset: Option<usize>,
    pub limit: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionRequest {
    pub v: u32,
    pub sample_id: usize,
    /// Concept index to forced value.
    pub overrides: BTreeMap<usize, u8>,
    pub sigma: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionResponse {
    pub v: u32,
    pub sample_id: usize,
    pub predicted_concepts: Vec<f32>,
    /// Predicted concepts with the overrides written in.
    pub concepts: Vec<f32>,
    pub task_before: Vec<f64>,
    pub task_after: Vec<f64>,
    /// `||psi_y(intervened) - psi_y(predicted)||`.
    pub commutation_distance: f64,
    pub request: InterventionRequest,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn unprocessable(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, message)
    }

    fn internal(err: anycbm::Error) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, err.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({ "v": API_VERSION, "error": self.message });
        (self.status, Json(body)).into_response()
    }
}

pub fn info(state: &AppState) -> InfoResponse {
    let meta = &state.test.meta;
    let (tap_l, tap_q) = state.heads.taps();
    InfoResponse {
        v: API_VERSION,
        n: meta.n,
        k: meta.k,
        o: meta.o,
        concept_names: meta.concept_names.clone(),
        image_shape: meta.image_shape.map(|(c, h, w)| [c, h, w]),
        taps: Taps {
            tap_l,
            tap_q,
            noise_layer: state.noise_layer,
        },
        mode: state.heads.mode().to_string(),
        blackbox_hash: state.blackbox.hash().to_string(),
        heads_hash: state.heads_hash.clone(),
        test_samples: state.test.len(),
    }
}

pub fn samples(state: &AppState, query: &PageQuery) -> Result<SamplesPage, ApiError> {
    let total = state.test.len();
    let offset = query.offset.unwrap_or(0);
    let limit = query.limit.unwrap_or(DEFAULT_PAGE).min(MAX_PAGE);
    let ids: Vec<usize> = (offset.min(total)..offset.saturating_add(limit).min(total)).collect();
    let mut views = Vec::with_capacity(ids.len());
    if !ids.is_empty() {
        let x = state.test.features().select(Axis(0), &ids);
        let pred = anycbm::anycbm::anycbm_predict(&state.blackbox, &state.heads, x.view()).map_err(ApiError::internal)?;
        let dist = distribution(pred.logits.view());
        for (row, &id) in ids.iter().enumerate() {
            let s = state.test.sample(id);
            views.push(SampleView {
                id,
                image: image_view(&state.test, id),
                true_label: s.y,
                true_concepts: s.c.to_vec(),
                predicted_concepts: pred.concepts.row(row).to_vec(),
                task_distribution: dist.row(row).to_vec(),
            });
        }
    }
    Ok(SamplesPage {
        v: API_VERSION,
        offset,
        limit,
        total,
        samples: views,
    })
}

/// Validates a JSON request body. Override keys are concept indices in
/// string form, values must be 0 or 1.
pub fn parse_request(state: &AppState, body: &Value) -> Result<InterventionRequest, ApiError> {
    let obj = body
        .as_object()
        .ok_or_else(|| ApiError::unprocessable("request body must be a JSON object"))?;
    let v = obj.get("v").and_then(Value::as_u64);
    if v != Some(u64::from(API_VERSION)) {
        return Err(ApiError::unprocessable(format!("unsupported schema version {:?}", obj.get("v"))));
    }
    let sample_id = obj
        .get("sample_id")
        .and_then(Value::as_u64)
        .ok_or_else(|| ApiError::unprocessable("sample_id must be a non-negative integer"))? as usize;
    let sigma = match obj.get("sigma") {
        None | Some(Value::Null) => 0.0,
        Some(s) => s
            .as_f64()
            .filter(|s| *s >= 0.0 && s.is_finite())
            .ok_or_else(|| ApiError::unprocessable("sigma must be a finite number >= 0"))?,
    };
    let seed = match obj.get("seed") {
        None | Some(Value::Null) => 0,
        Some(s) => s
            .as_u64()
            .ok_or_else(|| ApiError::unprocessable("seed must be a non-negative integer"))?,
    };
    let k = state.heads.k();
    let mut overrides = BTreeMap::new();
    match obj.get("overrides") {
        None | Some(Value::Null) => {}
        Some(Value::Object(map)) => {
            for (key, value) in map {
                let idx: usize = key
                    .parse()
                    .ok()
                    .filter(|&i| i < k)
                    .ok_or_else(|| ApiError::unprocessable(format!("override index {key:?} is not in 0..{k}")))?;
                let val = value
                    .as_u64()
                    .filter(|&v| v <= 1)
                    .ok_or_else(|| ApiError::unprocessable(format!("override value for {key} must be 0 or 1")))?;
                overrides.insert(idx, val as u8);
            }
        }
        Some(_) => return Err(ApiError::unprocessable("overrides must be an object")),
    }
    Ok(InterventionRequest {
        v: API_VERSION,
        sample_id,
        overrides,
        sigma,
        seed,
    })
}

/// embed, optional noise, `psi_c`, overrides, `psi_y`, rest of the black box.
pub fn intervene(state: &AppState, request: InterventionRequest) -> Result<InterventionResponse, ApiError> {
    if request.sample_id >= state.test.len() {
        return Err(ApiError::new(
            StatusCode::NOT_FOUND,
            format!("sample {} not found ({} test samples)", request.sample_id, state.test.len()),
        ));
    }
    if let Some((&idx, _)) = request.overrides.iter().find(|(&i, &v)| i >= state.heads.k() || v > 1) {
        return Err(ApiError::unprocessable(format!("invalid override at concept {idx}")));
    }
    let bb = &state.blackbox;
    let (tap_l, tap_q) = state.heads.taps();
    let x = state.test.features().select(Axis(0), &[request.sample_id]);
    let mut h = bb.embed(x.view(), state.noise_layer).map_err(ApiError::internal)?;
    if request.sigma > 0.0 {
        h = perturb_embedding(h.view(), &state.profile, request.sigma, request.seed).map_err(ApiError::internal)?;
    }
    let h_l = bb.run(h.view(), state.noise_layer, tap_l).map_err(ApiError::internal)?;
    let c_hat = state.heads.concepts(h_l.view()).map_err(ApiError::internal)?;
    let mut mixed = c_hat.clone();
    for (&i, &v) in &request.overrides {
        mixed[[0, i]] = f32::from(v);
    }
    let hq_before = state.heads.reconstruct(c_hat.view()).map_err(ApiError::internal)?;
    let hq_after = state.heads.reconstruct(mixed.view()).map_err(ApiError::internal)?;
    let before = bb.head_forward(hq_before.view(), tap_q).map_err(ApiError::internal)?;
    let after = bb.head_forward(hq_after.view(), tap_q).map_err(ApiError::internal)?;
    let distance = hq_after
        .iter()
        .zip(hq_before.iter())
        .map(|(&a, &b)| (f64::from(a) - f64::from(b)).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(InterventionResponse {
        v: API_VERSION,
        sample_id: request.sample_id,
        predicted_concepts: c_hat.row(0).to_vec(),
        concepts: mixed.row(0).to_vec(),
        task_before: distribution(before.view()).row(0).to_vec(),
        task_after: distribution(after.view()).row(0).to_vec(),
        commutation_distance: distance,
        request,
    })
}

/// Row-wise softmax of task logits, in double precision.
pub fn distribution(logits: ArrayView2<f32>) -> Array2<f64> {
    softmax_rows(logits.mapv(f64::from).view())
}

fn image_view(data: &Dataset, id: usize) -> Option<ImageView> {
    let (channels, height, width) = data.meta.image_shape?;
    let x = data.features().row(id);
    let plane = height * width;
    let mut bytes = Vec::with_capacity(x.len());
    for p in 0..plane {
        for c in 0..channels {
            bytes.push((x[c * plane + p].clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    Some(ImageView {
        width,
        height,
        channels,
        data: base64::engine::general_purpose::STANDARD.encode(bytes),
    })
}

async fn info_handler(State(state): State<Arc<AppState>>) -> Json<InfoResponse> {
    Json(info(&state))
}

async fn samples_handler(
    State(state): State<Arc<AppState>>,
    query: Result<Query<PageQuery>, axum::extract::rejection::QueryRejection>,
) -> Result<Json<SamplesPage>, ApiError> {
    let Query(query) = query.map_err(|e| ApiError::unprocessable(e.body_text()))?;
    samples(&state, &query).map(Json)
}

async fn intervene_handler(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<InterventionResponse>, ApiError> {
    let value: Value = serde_json::from_slice(&body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, format!("malformed JSON: {e}")))?;
    let request = parse_request(&state, &value)?;
    intervene(&state, request).map(Json)
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/info", get(info_handler))
        .route("/api/samples", get(samples_handler))
        .route("/api/intervene", post(intervene_handler))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

/// Serves until the process is stopped.
pub async fn serve(state: Arc<AppState>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}

//! HTTP API for the interactive loop.
//!
//! Segmentation jobs never touch the shared scene: each job owns its output
//! cloud (base plus decomposition children). Edits create new immutable
//! revisions; renders are cached per (revision or job, view, mode).

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::Semaphore;

use splatseg::camera::{Camera, CameraRecord};
use splatseg::edit::{apply_edit, EditTransform, ShRotation};
use splatseg::gaussian::{Aabb, GaussianCloud};
use splatseg::image_io::{encode_label_png8, encode_mask_png, encode_rgb_png, encode_scalar_png16, FixedPoint};
use splatseg::ply::write_ply;
use splatseg::prompt::{Polarity, PromptPoint};
use splatseg::provider::{probe_http, HttpProvider, MaskProvider, OracleProvider};
use splatseg::render::{render_labeled, render_subset, RenderOptions, MASK_THRESHOLD};
use splatseg::seg::{segment, GdMode, Phase, PromptInput, SegParams, SegmentationResult, VoteMode};

/// Job lifecycle; `Done` and `Failed` are terminal.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobPhase {
    Queued,
    Lifting,
    Masking,
    Labeling,
    Voting,
    Done,
    Failed,
}

impl JobPhase {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobPhase::Done | JobPhase::Failed)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub done: usize,
    pub total: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JobSummary {
    /// Size of the job's cloud, discarded children included.
    pub gaussians: usize,
    pub active: usize,
    pub selected: usize,
    pub decompositions: usize,
    pub views: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JobState {
    pub job_id: u64,
    pub phase: JobPhase,
    pub progress: Progress,
    /// Scene revision the job ran against.
    pub revision: usize,
    pub error: Option<String>,
    pub result: Option<JobSummary>,
}

impl JobState {
    /// Moves forward only; a late progress report never rewinds the phase.
    fn advance(&mut self, phase: JobPhase) {
        if !self.phase.is_terminal() && phase >= self.phase {
            self.phase = phase;
        }
    }
}

struct JobOutput {
    cloud: GaussianCloud,
    result: SegmentationResult,
}

struct Job {
    state: Mutex<JobState>,
    output: Mutex<Option<Arc<JobOutput>>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum Source {
    Revision(usize),
    Job(u64),
}

/// Shared service state.
pub struct AppState {
    cameras: Vec<Camera>,
    revisions: RwLock<Vec<Arc<GaussianCloud>>>,
    oracle: Option<Arc<OracleProvider>>,
    default_provider: Option<String>,
    jobs: Mutex<BTreeMap<u64, Arc<Job>>>,
    next_job: AtomicU64,
    workers: Arc<Semaphore>,
    cache: Mutex<HashMap<(Source, u32, String), Arc<Vec<u8>>>>,
}

impl AppState {
    /// `oracle` serves masks for synthetic scenes; `default_provider` is the
    /// mask service used when a request names none.
    pub fn new(
        cloud: GaussianCloud,
        mut cameras: Vec<Camera>,
        oracle: Option<OracleProvider>,
        default_provider: Option<String>,
        workers: usize,
    ) -> Arc<AppState> {
        cameras.sort_by_key(|c| c.id);
        Arc::new(AppState {
            cameras,
            revisions: RwLock::new(vec![Arc::new(cloud)]),
            oracle: oracle.map(Arc::new),
            default_provider,
            jobs: Mutex::new(BTreeMap::new()),
            next_job: AtomicU64::new(1),
            workers: Arc::new(Semaphore::new(workers.max(1))),
            cache: Mutex::new(HashMap::new()),
        })
    }

    fn revision(&self, r: usize) -> Option<Arc<GaussianCloud>> {
        self.revisions.read().unwrap().get(r).cloned()
    }

    fn head(&self) -> usize {
        self.revisions.read().unwrap().len() - 1
    }

    fn camera(&self, id: u32) -> Option<&Camera> {
        self.cameras.iter().find(|c| c.id == id)
    }

    fn job(&self, id: u64) -> Option<Arc<Job>> {
        self.jobs.lock().unwrap().get(&id).cloned()
    }
}

/// JSON error body with a status code.
#[derive(Debug)]
pub struct ApiError(StatusCode, String);

impl ApiError {
    fn bad_request(m: impl Into<String>) -> Self {
        ApiError(StatusCode::BAD_REQUEST, m.into())
    }
    fn not_found(m: impl Into<String>) -> Self {
        ApiError(StatusCode::NOT_FOUND, m.into())
    }
    fn conflict(m: impl Into<String>) -> Self {
        ApiError(StatusCode::CONFLICT, m.into())
    }
    fn unavailable(m: impl Into<String>) -> Self {
        ApiError(StatusCode::SERVICE_UNAVAILABLE, m.into())
    }
    fn internal(m: impl Into<String>) -> Self {
        ApiError(StatusCode::INTERNAL_SERVER_ERROR, m.into())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Parses the body ourselves so malformed JSON maps to our 400 shape.
fn parse_body<T: for<'de> Deserialize<'de>>(body: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed body: {e}")))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/scene/info", get(scene_info))
        .route("/views", get(views))
        .route("/render", get(render))
        .route("/segment", post(post_segment))
        .route("/job/{id}", get(job_state))
        .route("/edit", post(post_edit))
        .route("/export/{job_id}", get(export))
        .with_state(state)
}

async fn scene_info(State(st): State<Arc<AppState>>) -> Json<serde_json::Value> {
    let head = st.head();
    let cloud = st.revision(head).expect("head exists");
    let bounds: Option<Aabb> = cloud.bounds();
    Json(json!({
        "gaussians": cloud.len(),
        "views": st.cameras.len(),
        "sh_degree": cloud.sh_degree(),
        "bounds": bounds,
        "revision": head,
        "revisions": head + 1,
    }))
}

async fn views(State(st): State<Arc<AppState>>) -> Json<Vec<CameraRecord>> {
    Json(st.cameras.iter().map(CameraRecord::from).collect())
}

#[derive(Debug, Deserialize)]
pub struct RenderQuery {
    pub view: u32,
    #[serde(default = "default_mode")]
    pub mode: String,
    pub job: Option<u64>,
    pub revision: Option<usize>,
}

fn default_mode() -> String {
    "rgb".into()
}

fn finished(st: &AppState, id: u64) -> ApiResult<Arc<JobOutput>> {
    let job = st
        .job(id)
        .ok_or_else(|| ApiError::not_found(format!("unknown job {id}")))?;
    let out = job.output.lock().unwrap().clone();
    match out {
        Some(o) => Ok(o),
        None => {
            let phase = job.state.lock().unwrap().phase;
            Err(ApiError::conflict(format!("job {id} is not finished ({phase:?})")))
        }
    }
}

async fn render(
    State(st): State<Arc<AppState>>,
    Query(q): Query<RenderQuery>,
) -> ApiResult<Response> {
    if !matches!(q.mode.as_str(), "rgb" | "depth" | "alpha" | "seg") {
        return Err(ApiError::bad_request(format!(
            "mode must be rgb, depth, alpha or seg, got `{}`",
            q.mode
        )));
    }
    let cam = st
        .camera(q.view)
        .ok_or_else(|| ApiError::not_found(format!("unknown view {}", q.view)))?
        .clone();
    let source = match (q.job, q.revision) {
        (Some(j), _) => Source::Job(j),
        (None, Some(r)) => Source::Revision(r),
        (None, None) => Source::Revision(st.head()),
    };
    let key = (source.clone(), q.view, q.mode.clone());
    if let Some(bytes) = st.cache.lock().unwrap().get(&key).cloned() {
        return Ok(png(bytes));
    }

    let (cloud, job_out) = match source {
        Source::Job(j) => {
            let out = finished(&st, j)?;
            (None, Some(out))
        }
        Source::Revision(r) => {
            if q.mode == "seg" {
                return Err(ApiError::bad_request("seg mode requires a job"));
            }
            let cloud = st
                .revision(r)
                .ok_or_else(|| ApiError::not_found(format!("unknown revision {r}")))?;
            (Some(cloud), None)
        }
    };
    let mode = q.mode.clone();
    let bytes = tokio::task::spawn_blocking(move || -> splatseg::Result<Vec<u8>> {
        let opts = RenderOptions::default();
        let (cloud, subset, labels) = match (&cloud, &job_out) {
            (Some(c), _) => (c.as_ref(), (0..c.len()).collect::<Vec<_>>(), None),
            (None, Some(o)) => (
                &o.cloud,
                o.result.active_indices(),
                Some(&o.result.object_id),
            ),
            (None, None) => unreachable!("one source is set"),
        };
        match mode.as_str() {
            "rgb" => {
                let out = render_subset(cloud, &subset, &cam, &opts);
                encode_rgb_png(&out.rgb, cam.width, cam.height)
            }
            "alpha" => {
                let out = render_subset(cloud, &subset, &cam, &opts);
                encode_scalar_png16(&out.alpha, cam.width, cam.height, FixedPoint::for_range(1.0))
            }
            "depth" => {
                let out = render_subset(cloud, &subset, &cam, &opts);
                let max = out.depth.iter().copied().fold(0.0, f64::max);
                encode_scalar_png16(&out.depth, cam.width, cam.height, FixedPoint::for_range(max))
            }
            _ => {
                let labels = labels.expect("seg renders need a job");
                let out = job_out.as_ref().expect("seg renders need a job");
                match out.result.params.mode {
                    VoteMode::Binary => {
                        let sel: Vec<usize> =
                            subset.into_iter().filter(|&i| labels[i] == 1).collect();
                        let r = render_subset(cloud, &sel, &cam, &opts);
                        encode_mask_png(&r.alpha_mask(MASK_THRESHOLD))
                    }
                    VoteMode::Multi => {
                        let r = render_labeled(cloud, Some(&subset), labels, &cam, &opts)?;
                        encode_label_png8(&r.id_map.expect("labels requested"))
                    }
                }
            }
        }
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))?
    .map_err(|e| ApiError::internal(e.to_string()))?;
    let bytes = Arc::new(bytes);
    st.cache.lock().unwrap().insert(key, bytes.clone());
    Ok(png(bytes))
}

fn png(bytes: Arc<Vec<u8>>) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], bytes.as_ref().clone()).into_response()
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointBody {
    pub x: f64,
    pub y: f64,
    #[serde(default = "fg")]
    pub polarity: Polarity,
}

fn fg() -> Polarity {
    Polarity::Foreground
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentBody {
    pub view0: u32,
    pub points: Vec<PointBody>,
    pub tau: Option<f64>,
    pub gd: Option<GdMode>,
    pub epsilon: Option<f64>,
    pub views_percent: Option<f64>,
    /// `"oracle"` for synthetic scenes or a mask service URL.
    pub provider: Option<String>,
    /// Scene revision to segment; defaults to the original cloud.
    pub revision: Option<usize>,
}

async fn post_segment(
    State(st): State<Arc<AppState>>,
    body: axum::body::Bytes,
) -> ApiResult<Json<serde_json::Value>> {
    let body: SegmentBody = parse_body(&body)?;
    let points: Vec<PromptPoint> = body
        .points
        .iter()
        .map(|p| PromptPoint {
            x: p.x,
            y: p.y,
            polarity: p.polarity,
        })
        .collect();
    if !points.iter().any(|p| p.polarity == Polarity::Foreground) {
        return Err(ApiError::bad_request("at least one foreground point"));
    }
    if st.camera(body.view0).is_none() {
        return Err(ApiError::not_found(format!("unknown view {}", body.view0)));
    }
    let mut params = SegParams::default();
    if let Some(t) = body.tau {
        params.tau = t;
    }
    if let Some(g) = body.gd {
        params.gd = g;
    }
    if let Some(e) = body.epsilon {
        params.epsilon = e;
    }
    if let Some(v) = body.views_percent {
        params.views_percent = v;
    }
    params
        .validate()
        .map_err(|e| ApiError::bad_request(e.to_string()))?;
    let revision = body.revision.unwrap_or(0);
    let cloud = st
        .revision(revision)
        .ok_or_else(|| ApiError::not_found(format!("unknown revision {revision}")))?;

    let provider: Arc<dyn MaskProvider> = match body.provider.clone().or(st.default_provider.clone()) {
        Some(name) if name == "oracle" => st
            .oracle
            .clone()
            .ok_or_else(|| ApiError::bad_request("this scene has no oracle masks"))?,
        Some(url) => {
            let probe = url.clone();
            tokio::task::spawn_blocking(move || probe_http(&probe))
                .await
                .map_err(|e| ApiError::internal(e.to_string()))?
                .map_err(|e| ApiError::unavailable(e.to_string()))?;
            Arc::new(HttpProvider::new(url))
        }
        None => match &st.oracle {
            Some(o) => o.clone(),
            None => return Err(ApiError::unavailable("no mask provider configured")),
        },
    };

    let id = st.next_job.fetch_add(1, Ordering::SeqCst);
    let job = Arc::new(Job {
        state: Mutex::new(JobState {
            job_id: id,
            phase: JobPhase::Queued,
            progress: Progress::default(),
            revision,
            error: None,
            result: None,
        }),
        output: Mutex::new(None),
    });
    st.jobs.lock().unwrap().insert(id, job.clone());

    let cameras = st.cameras.clone();
    let workers = st.workers.clone();
    let view0 = body.view0;
    tokio::spawn(async move {
        let _permit = workers.acquire_owned().await.expect("semaphore open");
        let worker_job = job.clone();
        let run = tokio::task::spawn_blocking(move || {
            let job = worker_job;
            let mut report = |phase: Phase| {
                let mut s = job.state.lock().unwrap();
                match phase {
                    Phase::Lifting => s.advance(JobPhase::Lifting),
                    Phase::Masking => s.advance(JobPhase::Masking),
                    Phase::Labeling { done, total } => {
                        s.advance(JobPhase::Labeling);
                        s.progress = Progress { done, total };
                    }
                    Phase::Voting => s.advance(JobPhase::Voting),
                }
            };
            segment(
                &cloud,
                &cameras,
                provider.as_ref(),
                Some(PromptInput {
                    view0,
                    points: &points,
                }),
                &params,
                &mut report,
            )
        })
        .await;
        let mut s = job.state.lock().unwrap();
        match run {
            Ok(Ok(out)) => {
                let selected = (0..out.result.len())
                    .filter(|&i| out.result.active[i] && out.result.object_id[i] != 0)
                    .count();
                s.result = Some(JobSummary {
                    gaussians: out.cloud.len(),
                    active: out.result.active.iter().filter(|&&a| a).count(),
                    selected,
                    decompositions: out.result.decompositions.len(),
                    views: out.result.views.len(),
                });
                *job.output.lock().unwrap() = Some(Arc::new(JobOutput {
                    cloud: out.cloud,
                    result: out.result,
                }));
                s.advance(JobPhase::Done);
            }
            Ok(Err(e)) => {
                s.error = Some(e.to_string());
                s.advance(JobPhase::Failed);
            }
            Err(e) => {
                s.error = Some(format!("worker crashed: {e}"));
                s.advance(JobPhase::Failed);
            }
        }
    });
    Ok(Json(json!({ "job_id": id })))
}

async fn job_state(
    State(st): State<Arc<AppState>>,
    Path(id): Path<u64>,
) -> ApiResult<Json<JobState>> {
    let job = st
        .job(id)
        .ok_or_else(|| ApiError::not_found(format!("unknown job {id}")))?;
    let s = job.state.lock().unwrap().clone();
    Ok(Json(s))
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EditBody {
    pub job_id: u64,
    #[serde(default = "one")]
    pub object: u16,
    pub transform: EditTransform,
    #[serde(default)]
    pub sh_rotation: ShRotation,
}

fn one() -> u16 {
    1
}

/// The job's cloud with inactive Gaussians dropped, plus the positions of
/// `object` within it.
fn materialize(out: &JobOutput, object: u16) -> splatseg::Result<(GaussianCloud, Vec<usize>)> {
    let active = out.result.active_indices();
    let cloud = out.cloud.subset(&active)?;
    let label = match out.result.params.mode {
        VoteMode::Binary => 1,
        VoteMode::Multi => object,
    };
    let picked = active
        .iter()
        .enumerate()
        .filter(|(_, &i)| out.result.object_id[i] == label)
        .map(|(k, _)| k)
        .collect();
    Ok((cloud, picked))
}

async fn post_edit(
    State(st): State<Arc<AppState>>,
    body: axum::body::Bytes,
) -> ApiResult<Json<serde_json::Value>> {
    let body: EditBody = parse_body(&body)?;
    let out = finished(&st, body.job_id)?;
    let edited = tokio::task::spawn_blocking(move || {
        let (cloud, subset) = materialize(&out, body.object)?;
        apply_edit(&cloud, &subset, &body.transform, body.sh_rotation)
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))?
    .map_err(|e| ApiError::bad_request(e.to_string()))?;
    for w in &edited.1.warnings {
        log::warn!("{w}");
    }
    let mut revs = st.revisions.write().unwrap();
    revs.push(Arc::new(edited.0));
    Ok(Json(json!({ "revision": revs.len() - 1, "warnings": edited.1.warnings })))
}

#[derive(Debug, Deserialize)]
pub struct ExportQuery {
    pub object: Option<u16>,
}

async fn export(
    State(st): State<Arc<AppState>>,
    Path(id): Path<u64>,
    Query(q): Query<ExportQuery>,
) -> ApiResult<Response> {
    let out = finished(&st, id)?;
    let bytes = tokio::task::spawn_blocking(move || -> splatseg::Result<Vec<u8>> {
        let (cloud, subset) = materialize(&out, q.object.unwrap_or(1))?;
        let mut buf = Vec::new();
        write_ply(&cloud.subset(&subset)?, &mut buf)?;
        Ok(buf)
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))?
    .map_err(|e| ApiError::internal(e.to_string()))?;
    Ok((
        [
            (header::CONTENT_TYPE, "application/octet-stream".to_string()),
            (
                header::CONTENT_DISPOSITION,
                format!("attachment; filename=\"job_{id}.ply\""),
            ),
        ],
        bytes,
    )
        .into_response())
}

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(state: Arc<AppState>, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}

//! Sources of per-view masks: files on disk, an HTTP segmentation service,
//! or ground truth from a synthetic scene.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::image_io::{decode_label_png, read_label_png, LabelMap};
use crate::prompt::{Polarity, PromptPoint, ViewPrompts};

/// Everything a provider may use to produce one view's mask.
#[derive(Clone, Copy, Debug)]
pub struct ViewRequest<'a> {
    pub cam: &'a Camera,
    /// Rendered RGB of the view, PNG-encoded, for providers that look at pixels.
    pub image_png: Option<&'a [u8]>,
    pub prompts: &'a [PromptPoint],
    /// Optional `[x0, y0, x1, y1]` box prompt, forwarded verbatim.
    pub bbox: Option<[f64; 4]>,
}

pub trait MaskProvider: Send + Sync {
    /// Provenance tag recorded in the mask set.
    fn name(&self) -> String;

    /// Concurrent requests this provider tolerates.
    fn max_in_flight(&self) -> usize {
        usize::MAX
    }

    fn needs_image(&self) -> bool {
        false
    }

    fn mask(&self, req: &ViewRequest<'_>) -> std::result::Result<LabelMap, String>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct ViewMask {
    pub view: u32,
    pub mask: Option<LabelMap>,
    /// Why the view is unusable, when `mask` is `None`.
    pub error: Option<String>,
    pub prompts: Vec<PromptPoint>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaskSet {
    pub views: Vec<ViewMask>,
    pub provider: String,
    /// Largest label present in any mask (1 for binary masks).
    pub num_objects: u16,
}

impl MaskSet {
    pub fn usable(&self) -> impl Iterator<Item = (u32, &LabelMap)> {
        self.views
            .iter()
            .filter_map(|v| v.mask.as_ref().map(|m| (v.view, m)))
    }

    pub fn usable_count(&self) -> usize {
        self.views.iter().filter(|v| v.mask.is_some()).count()
    }

    pub fn get(&self, view: u32) -> Option<&LabelMap> {
        self.views
            .iter()
            .find(|v| v.view == view)
            .and_then(|v| v.mask.as_ref())
    }
}

/// One input slot per camera for [`get_masks`].
#[derive(Clone, Copy, Debug)]
pub struct ViewInput<'a> {
    pub cam: &'a Camera,
    pub image_png: Option<&'a [u8]>,
    /// `None` runs the provider unprompted; `Some` with no foreground point
    /// marks the view unusable without calling the provider.
    pub prompts: Option<&'a ViewPrompts>,
}

/// Queries `provider` for every view, honoring its in-flight limit. Fails
/// only when fewer than two views end up usable.
pub fn get_masks(provider: &dyn MaskProvider, inputs: &[ViewInput<'_>]) -> Result<MaskSet> {
    let results: Vec<Mutex<Option<ViewMask>>> = inputs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = provider
        .max_in_flight()
        .clamp(1, inputs.len().max(1))
        .min(16);

    let work = || loop {
        let i = next.fetch_add(1, Ordering::SeqCst);
        let Some(input) = inputs.get(i) else { break };
        let prompts: Vec<PromptPoint> = input.prompts.map(|p| p.points.clone()).unwrap_or_default();
        let outcome = if input.prompts.is_some_and(|p| !p.usable()) {
            Err("no surviving prompts".to_string())
        } else {
            let req = ViewRequest {
                cam: input.cam,
                image_png: input.image_png,
                prompts: &prompts,
                bbox: None,
            };
            provider.mask(&req).and_then(|m| {
                m.check_dims(input.cam.width, input.cam.height)
                    .map(|_| m)
                    .map_err(|e| e.to_string())
            })
        };
        let vm = match outcome {
            Ok(mask) => ViewMask {
                view: input.cam.id,
                mask: Some(mask),
                error: None,
                prompts,
            },
            Err(reason) => {
                log::warn!("view {} unusable: {reason}", input.cam.id);
                ViewMask {
                    view: input.cam.id,
                    mask: None,
                    error: Some(reason),
                    prompts,
                }
            }
        };
        *results[i].lock().expect("result slot") = Some(vm);
    };
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(work);
        }
    });

    let views: Vec<ViewMask> = results
        .into_iter()
        .map(|m| {
            m.into_inner()
                .expect("result slot")
                .expect("every view processed")
        })
        .collect();
    let num_objects = views
        .iter()
        .filter_map(|v| v.mask.as_ref())
        .map(LabelMap::max_label)
        .max()
        .unwrap_or(0)
        .max(1);
    let set = MaskSet {
        views,
        provider: provider.name(),
        num_objects,
    };
    if set.usable_count() < 2 {
        return Err(Error::TooFewViews {
            usable: set.usable_count(),
        });
    }
    Ok(set)
}

/// Reads `mask_{view_id}.png` from a directory.
#[derive(Clone, Debug)]
pub struct FileProvider {
    pub dir: PathBuf,
}

impl FileProvider {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        FileProvider { dir: dir.into() }
    }
}

impl MaskProvider for FileProvider {
    fn name(&self) -> String {
        format!("file:{}", self.dir.display())
    }

    fn mask(&self, req: &ViewRequest<'_>) -> std::result::Result<LabelMap, String> {
        let path = self.dir.join(format!("mask_{}.png", req.cam.id));
        read_label_png(&path).map_err(|e| e.to_string())
    }
}

/// Which label(s) the oracle reports.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OracleTarget {
    /// Binary mask of the ground-truth label under the view's foreground
    /// prompts (majority vote, ties to the lower label).
    FromPrompts,
    /// Binary mask of one fixed label.
    Object(u16),
    /// The full multi-label ground truth.
    AllLabels,
}

/// Ground-truth masks of a synthetic scene, keyed by view id.
#[derive(Clone, Debug)]
pub struct OracleProvider {
    pub masks: HashMap<u32, LabelMap>,
    pub target: OracleTarget,
}

impl OracleProvider {
    pub fn new(masks: HashMap<u32, LabelMap>, target: OracleTarget) -> Self {
        OracleProvider { masks, target }
    }
}

impl MaskProvider for OracleProvider {
    fn name(&self) -> String {
        "oracle".into()
    }

    fn mask(&self, req: &ViewRequest<'_>) -> std::result::Result<LabelMap, String> {
        let gt = self
            .masks
            .get(&req.cam.id)
            .ok_or_else(|| format!("no ground truth for view {}", req.cam.id))?;
        match self.target {
            OracleTarget::AllLabels => Ok(gt.clone()),
            OracleTarget::Object(k) => Ok(gt.select(k)),
            OracleTarget::FromPrompts => {
                let mut votes: HashMap<u16, usize> = HashMap::new();
                for p in req
                    .prompts
                    .iter()
                    .filter(|p| p.polarity == Polarity::Foreground)
                {
                    if let Some(l) = gt.at_point(&p.pos()).filter(|&l| l != 0) {
                        *votes.entry(l).or_default() += 1;
                    }
                }
                let label = votes
                    .into_iter()
                    .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
                    .map(|(l, _)| l)
                    .ok_or_else(|| "prompts hit only background".to_string())?;
                Ok(gt.select(label))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskRequestBody {
    pub view_id: u32,
    pub width: u32,
    pub height: u32,
    /// Base64-encoded PNG of the rendered view.
    pub image: String,
    pub points: Vec<PromptPoint>,
    #[serde(rename = "box", default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<[f64; 4]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskResponseBody {
    /// Base64-encoded grayscale PNG.
    pub mask: String,
}

/// Client for a segmentation server speaking `POST /mask`.
pub struct HttpProvider {
    base_url: String,
    agent: ureq::Agent,
    max_in_flight: usize,
}

impl HttpProvider {
    pub const TIMEOUT: Duration = Duration::from_secs(30);
    pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;

    pub fn new(base_url: impl Into<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Self::TIMEOUT))
            .build()
            .into();
        HttpProvider {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            agent,
            max_in_flight: Self::DEFAULT_MAX_IN_FLIGHT,
        }
    }

    pub fn with_max_in_flight(mut self, n: usize) -> Self {
        self.max_in_flight = n.max(1);
        self
    }

    pub fn url(&self) -> &str {
        &self.base_url
    }

    fn request_once(&self, body: &MaskRequestBody) -> std::result::Result<LabelMap, String> {
        let resp: MaskResponseBody = self
            .agent
            .post(format!("{}/mask", self.base_url))
            .send_json(body)
            .map_err(|e| e.to_string())?
            .into_body()
            .read_json()
            .map_err(|e| format!("bad response body: {e}"))?;
        let png = BASE64
            .decode(resp.mask.as_bytes())
            .map_err(|e| format!("mask is not base64: {e}"))?;
        decode_label_png(&png).map_err(|e| e.to_string())
    }
}

impl MaskProvider for HttpProvider {
    fn name(&self) -> String {
        self.base_url.clone()
    }

    fn max_in_flight(&self) -> usize {
        self.max_in_flight
    }

    fn needs_image(&self) -> bool {
        true
    }

    fn mask(&self, req: &ViewRequest<'_>) -> std::result::Result<LabelMap, String> {
        let body = MaskRequestBody {
            view_id: req.cam.id,
            width: req.cam.width,
            height: req.cam.height,
            image: req.image_png.map(|b| BASE64.encode(b)).unwrap_or_default(),
            points: req.prompts.to_vec(),
            bbox: req.bbox,
        };
        // One retry on any failure.
        self.request_once(&body).or_else(|first| {
            log::warn!(
                "mask request for view {} failed ({first}); retrying",
                req.cam.id
            );
            self.request_once(&body)
        })
    }
}

/// Checks that the HTTP provider answers at all; used to map an unreachable
/// server to a clear error before a job starts.
pub fn probe_http(url: &str) -> Result<()> {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs(5)))
        .http_status_as_error(false)
        .build()
        .into();
    agent
        .get(url)
        .call()
        .map(|_| ())
        .map_err(|e| Error::Provider {
            view: 0,
            reason: format!("{url} unreachable: {e}"),
        })
}

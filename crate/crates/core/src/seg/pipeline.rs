//! Per-view passes and the end-to-end segmentation run.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::boundary::{
    classify, compute_lambda2d_with, exit_fraction, in_mask, lambda_splittable, Endpoint, Straddle,
};
use super::decompose::{decompose, DecompositionRecord};
use super::labels::{assign_view_labels_where, LabelMatrix};
use super::vote::{vote_binary, vote_multiobject, ViewCount};
use crate::camera::{project_gaussian, Camera};
use crate::error::{Error, Result};
use crate::gaussian::{GaussianCloud, Vec3};
use crate::image_io::{encode_rgb_png, LabelMap};
use crate::prompt::{lift_prompts, project_prompts, PromptPoint, PromptSet, DEFAULT_EPSILON};
use crate::provider::{get_masks, MaskProvider, MaskSet, ViewInput};
use crate::render::{render_subset, RenderOptions};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GdMode {
    #[default]
    On,
    Off,
    /// Drop would-be-split Gaussians instead of splitting them.
    Delete,
}

impl std::str::FromStr for GdMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "on" => Ok(GdMode::On),
            "off" => Ok(GdMode::Off),
            "delete" => Ok(GdMode::Delete),
            other => Err(Error::Param(format!(
                "gd mode must be on, off or delete, got `{other}`"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoteMode {
    #[default]
    Binary,
    /// Mode voting over multi-label masks.
    Multi,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegParams {
    pub tau: f64,
    pub epsilon: f64,
    pub gd: GdMode,
    pub mode: VoteMode,
    pub view_count: ViewCount,
    pub generation_cap: u8,
    pub lambda_min: f64,
    /// Gaussians whose projected long axis is shorter than this are never split.
    pub min_axis_px: f64,
    /// Deactivate the out-of-mask child instead of keeping it as background.
    pub discard_cut: bool,
    /// Percentage of the camera ring to use, evenly spaced from the reference view.
    pub views_percent: f64,
    /// Drop re-projected prompts hidden behind rendered geometry.
    pub occlusion_test: bool,
}

impl Default for SegParams {
    fn default() -> Self {
        SegParams {
            tau: 0.7,
            epsilon: DEFAULT_EPSILON,
            gd: GdMode::On,
            mode: VoteMode::Binary,
            view_count: ViewCount::Observed,
            generation_cap: 2,
            lambda_min: super::LAMBDA_MIN,
            min_axis_px: 1.0,
            discard_cut: false,
            views_percent: 100.0,
            occlusion_test: true,
        }
    }
}

impl SegParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::Param(format!(
                "tau must lie in (0, 1), got {}",
                self.tau
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Param(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if !(self.views_percent > 0.0 && self.views_percent <= 100.0) {
            return Err(Error::Param(format!(
                "views percent must lie in (0, 100], got {}",
                self.views_percent
            )));
        }
        if !(self.lambda_min > 0.0 && self.lambda_min < 0.5) {
            return Err(Error::Param(format!(
                "lambda_min must lie in (0, 0.5), got {}",
                self.lambda_min
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentationResult {
    pub params: SegParams,
    /// Camera ids in processing order.
    pub views: Vec<u32>,
    pub num_objects: u16,
    pub object_id: Vec<u16>,
    pub confidence: Vec<f64>,
    /// False for decomposed parents and deleted Gaussians.
    pub active: Vec<bool>,
    pub decompositions: Vec<DecompositionRecord>,
}

impl SegmentationResult {
    pub fn len(&self) -> usize {
        self.object_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.object_id.is_empty()
    }

    /// Indices labelled `label`.
    pub fn object_indices(&self, label: u16) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.object_id[i] == label)
            .collect()
    }

    pub fn active_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.active[i]).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Counters for one view pass.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewPassStats {
    pub view: u32,
    /// Gaussians with exactly one endpoint outside the mask.
    pub boundary: usize,
    pub both_out: usize,
    /// Gaussians that GD splits (or, in delete mode, removes).
    pub eligible: usize,
    pub splits: usize,
    pub deleted: usize,
}

/// Mutable state carried across view passes.
#[derive(Clone, Debug)]
pub struct SegState {
    pub cloud: GaussianCloud,
    pub active: Vec<bool>,
    pub labels: LabelMatrix,
    pub records: Vec<DecompositionRecord>,
    pub params: SegParams,
}

/// A planned cut: keep the fraction `lambda`, on the side `e` points to.
#[derive(Clone, Copy, Debug)]
struct Cut {
    lambda: f64,
    toward_b: bool,
}

struct Plan {
    index: usize,
    label: u16,
    dir: Vec3,
    cuts: Vec<Cut>,
}

impl SegState {
    pub fn new(
        cloud: GaussianCloud,
        view_ids: Vec<u32>,
        num_objects: u16,
        params: SegParams,
    ) -> Self {
        let n = cloud.len();
        let mut labels = LabelMatrix::new(n, view_ids, num_objects);
        labels.binary = params.mode == VoteMode::Binary;
        SegState {
            cloud,
            active: vec![true; n],
            labels,
            records: Vec::new(),
            params,
        }
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    fn deactivate(&mut self, i: usize) {
        self.active[i] = false;
        self.labels.retire(i);
    }

    /// Cuts GD would make on Gaussian `i` for this mask, in order.
    fn plan(&self, cam: &Camera, mask: &LabelMap, i: usize) -> Option<Plan> {
        let (label, kind) = classify(&self.cloud, cam, mask, i)?;
        let g = &self.cloud[i];
        let p = project_gaussian(cam, g, 0.0);
        let (a, b) = p.long_axis_endpoints;
        let inside = |q: &crate::camera::Vec2| in_mask(mask, label, q);
        // Kept interval in fractions along A→B.
        let (lo, hi) = match kind {
            Straddle::Inside => return None,
            Straddle::OneOut(Endpoint::A) => (0.0, compute_lambda2d_with(&a, &b, inside)),
            Straddle::OneOut(Endpoint::B) => (1.0 - compute_lambda2d_with(&b, &a, inside), 1.0),
            Straddle::BothOut => {
                let c = p.center2d;
                let ub = exit_fraction(&c, &b, inside).unwrap_or(1.0);
                let ua = exit_fraction(&c, &a, inside).unwrap_or(1.0);
                (0.5 * (1.0 - ua), 0.5 * (1.0 + ub))
            }
        };
        if p.long_axis_length() < self.params.min_axis_px {
            return None;
        }
        let (lmin, cap) = (self.params.lambda_min, self.params.generation_cap);
        let mut generation = g.generation();
        let (cur_lo, mut cur_hi) = (0.0, 1.0);
        let mut cuts = Vec::new();
        if hi < 1.0 {
            let lambda = (hi - cur_lo) / (cur_hi - cur_lo);
            if generation < cap && lambda_splittable(lambda, lmin) {
                cuts.push(Cut {
                    lambda,
                    toward_b: false,
                });
                cur_hi = hi;
                generation += 1;
            }
        }
        if lo > 0.0 {
            let lambda = (cur_hi - lo) / (cur_hi - cur_lo);
            if generation < cap && lambda_splittable(lambda, lmin) {
                cuts.push(Cut {
                    lambda,
                    toward_b: true,
                });
            }
        }
        if cuts.is_empty() {
            return None;
        }
        Some(Plan {
            index: i,
            label,
            dir: p.long_axis_dir3d,
            cuts,
        })
    }

    /// Applies GD for one view and records its labels in `slot`.
    pub fn run_view_pass(
        &mut self,
        cam: &Camera,
        mask: &LabelMap,
        slot: usize,
    ) -> Result<ViewPassStats> {
        mask.check_dims(cam.width, cam.height)?;
        let n0 = self.cloud.len();
        let mut stats = ViewPassStats {
            view: cam.id,
            ..Default::default()
        };
        if self.params.gd != GdMode::Off {
            let this = &*self;
            let kinds: Vec<Option<Straddle>> = (0..n0)
                .into_par_iter()
                .map(|i| {
                    if this.active[i] {
                        classify(&this.cloud, cam, mask, i).map(|c| c.1)
                    } else {
                        None
                    }
                })
                .collect();
            stats.boundary = kinds
                .iter()
                .filter(|k| matches!(k, Some(Straddle::OneOut(_))))
                .count();
            stats.both_out = kinds
                .iter()
                .filter(|k| matches!(k, Some(Straddle::BothOut)))
                .count();
            let plans: Vec<Plan> = (0..n0)
                .into_par_iter()
                .filter(|&i| {
                    matches!(
                        kinds[i],
                        Some(Straddle::OneOut(_)) | Some(Straddle::BothOut)
                    )
                })
                .filter_map(|i| this.plan(cam, mask, i))
                .collect();
            stats.eligible = plans.len();
            for plan in plans {
                match self.params.gd {
                    GdMode::Delete => {
                        self.deactivate(plan.index);
                        stats.deleted += 1;
                    }
                    _ => stats.splits += self.apply_plan(&plan, cam.id)?,
                }
            }
        }
        let active = &self.active;
        assign_view_labels_where(&self.cloud, cam, mask, &mut self.labels, slot, |i| {
            active[i]
        })?;
        Ok(stats)
    }

    fn apply_plan(&mut self, plan: &Plan, view: u32) -> Result<usize> {
        let mut current = plan.index;
        for cut in &plan.cuts {
            let e = if cut.toward_b { plan.dir } else { -plan.dir };
            let (kept, discarded) = decompose(&self.cloud[current], current, cut.lambda, &e)?;
            let generation = kept.generation();
            let k = self.cloud.push(kept);
            self.active.push(true);
            self.labels.push_child(current, None);
            let d = self.cloud.push(discarded);
            self.active.push(true);
            self.labels.push_child(current, Some(plan.label));
            if self.params.discard_cut {
                self.deactivate(d);
            }
            self.deactivate(current);
            self.records.push(DecompositionRecord {
                parent: current,
                kept: k,
                discarded: d,
                view,
                lambda: cut.lambda,
                axis_dir: [e.x, e.y, e.z],
                generation,
            });
            current = k;
        }
        Ok(plan.cuts.len())
    }

    pub fn vote(&self) -> Result<SegmentationResult> {
        let votes = match self.params.mode {
            VoteMode::Binary => vote_binary(&self.labels, self.params.tau, self.params.view_count)?,
            VoteMode::Multi => vote_multiobject(&self.labels),
        };
        Ok(SegmentationResult {
            params: self.params.clone(),
            views: self.labels.view_ids.clone(),
            num_objects: self.labels.num_objects,
            object_id: votes.object_ids,
            confidence: votes.confidence,
            active: self.active.clone(),
            decompositions: self.records.clone(),
        })
    }
}

/// One view pass as a free function over an existing state.
pub fn run_view_pass(
    state: &mut SegState,
    cam: &Camera,
    mask: &LabelMap,
    slot: usize,
) -> Result<ViewPassStats> {
    state.run_view_pass(cam, mask, slot)
}

/// Clicks in reference view `view0`.
#[derive(Clone, Copy, Debug)]
pub struct PromptInput<'a> {
    pub view0: u32,
    pub points: &'a [PromptPoint],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "phase")]
pub enum Phase {
    Lifting,
    Masking,
    Labeling { done: usize, total: usize },
    Voting,
}

#[derive(Clone, Debug)]
pub struct SegmentOutput {
    /// The input cloud with decomposition children appended.
    pub cloud: GaussianCloud,
    pub result: SegmentationResult,
    pub prompts: Option<PromptSet>,
    pub masks: MaskSet,
    pub stats: Vec<ViewPassStats>,
}

/// Positions (into `cams`) of an evenly spaced `percent` subset starting at
/// position `start`, at least two views, in ascending position order.
pub fn select_views(n: usize, start: usize, percent: f64) -> Vec<usize> {
    if n == 0 {
        return Vec::new();
    }
    let k = ((percent / 100.0 * n as f64).ceil() as usize).clamp(2.min(n), n);
    let mut picked: Vec<usize> = (0..k).map(|i| (start + i * n / k) % n).collect();
    picked.sort_unstable();
    picked.dedup();
    picked
}

/// Runs the whole pipeline: optional prompt lifting, per-view masks,
/// sequential view passes in camera-id order, and voting.
pub fn segment(
    cloud: &GaussianCloud,
    cams: &[Camera],
    provider: &dyn MaskProvider,
    prompts: Option<PromptInput<'_>>,
    params: &SegParams,
    progress: &mut dyn FnMut(Phase),
) -> Result<SegmentOutput> {
    params.validate()?;
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let mut cams: Vec<Camera> = cams.to_vec();
    cams.sort_by_key(|c| c.id);
    let start = match prompts {
        Some(p) => cams.iter().position(|c| c.id == p.view0).ok_or_else(|| {
            Error::Param(format!(
                "reference view {} is not among the cameras",
                p.view0
            ))
        })?,
        None => 0,
    };
    let cams: Vec<Camera> = select_views(cams.len(), start, params.views_percent)
        .into_iter()
        .map(|i| cams[i].clone())
        .collect();
    let opts = RenderOptions::default();
    let all: Vec<usize> = (0..cloud.len()).collect();

    let (prompt_set, view_prompts) = match prompts {
        Some(p) => {
            progress(Phase::Lifting);
            let cam0 = cams
                .iter()
                .find(|c| c.id == p.view0)
                .expect("reference view selected");
            let set = lift_prompts(cloud, cam0, p.points, params.epsilon)?;
            let depths: Option<Vec<Option<Vec<f64>>>> = params.occlusion_test.then(|| {
                cams.par_iter()
                    .map(|c| (c.id != p.view0).then(|| render_subset(cloud, &all, c, &opts).depth))
                    .collect()
            });
            let vp = project_prompts(&set, &cams, depths.as_deref());
            (Some(set), Some(vp))
        }
        None => (None, None),
    };

    progress(Phase::Masking);
    let images: Vec<Option<Vec<u8>>> = if provider.needs_image() {
        cams.par_iter()
            .map(|c| {
                let out = render_subset(cloud, &all, c, &opts);
                encode_rgb_png(&out.rgb, c.width, c.height).map(Some)
            })
            .collect::<Result<_>>()?
    } else {
        vec![None; cams.len()]
    };
    let inputs: Vec<ViewInput<'_>> = cams
        .iter()
        .enumerate()
        .map(|(i, c)| ViewInput {
            cam: c,
            image_png: images[i].as_deref(),
            prompts: view_prompts.as_ref().map(|v| &v[i]),
        })
        .collect();
    let masks = get_masks(provider, &inputs)?;

    let usable: Vec<(&Camera, &LabelMap)> = cams
        .iter()
        .filter_map(|c| masks.get(c.id).map(|m| (c, m)))
        .collect();
    let num_objects = match params.mode {
        VoteMode::Binary => 1,
        VoteMode::Multi => masks.num_objects,
    };
    let mut state = SegState::new(
        cloud.clone(),
        usable.iter().map(|(c, _)| c.id).collect(),
        num_objects,
        params.clone(),
    );
    let mut stats = Vec::with_capacity(usable.len());
    for (slot, (cam, mask)) in usable.iter().enumerate() {
        progress(Phase::Labeling {
            done: slot,
            total: usable.len(),
        });
        stats.push(state.run_view_pass(cam, mask, slot)?);
    }
    progress(Phase::Labeling {
        done: usable.len(),
        total: usable.len(),
    });

    progress(Phase::Voting);
    let result = state.vote()?;
    Ok(SegmentOutput {
        cloud: state.cloud,
        result,
        prompts: prompt_set,
        masks,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::Gaussian;
    use nalgebra::{Matrix4, UnitQuaternion};

    fn cam(id: u32) -> Camera {
        Camera::new(id, 40, 40, 40.0, 40.0, 19.5, 19.5, Matrix4::identity()).unwrap()
    }

    /// A Gaussian long in x centered at pixel `(u, 19.5)`, depth 1.
    fn needle(u: f64, sx: f64) -> Gaussian {
        let p = Vec3::new((u - 19.5) / 40.0, 0.0, 1.0);
        Gaussian::with_color(
            p,
            Vec3::new(sx, 0.002, 0.002),
            UnitQuaternion::identity(),
            0.9,
            [0.5; 3],
        )
        .unwrap()
    }

    #[test]
    fn select_views_is_even_and_starts_at_reference() {
        assert_eq!(select_views(24, 0, 100.0), (0..24).collect::<Vec<_>>());
        assert_eq!(select_views(24, 0, 10.0), vec![0, 8, 16]);
        assert_eq!(select_views(24, 5, 10.0), vec![5, 13, 21]);
        assert_eq!(select_views(10, 3, 1.0), vec![3, 8]);
    }

    #[test]
    fn single_boundary_split_bookkeeping() {
        // Mask covers x ≤ 22; the needle spans pixels ≈ 14..26.
        let cloud = GaussianCloud::new(vec![needle(20.0, 0.05), needle(5.0, 0.01)], "t");
        let mask = LabelMap::from_fn(40, 40, |x, _| u16::from(x <= 22));
        let mut state = SegState::new(cloud, vec![0], 1, SegParams::default());
        let stats = state.run_view_pass(&cam(0), &mask, 0).unwrap();
        assert_eq!((stats.boundary, stats.splits), (1, 1));
        assert_eq!(state.cloud.len(), 4);
        assert_eq!(state.active, vec![false, true, true, true]);
        let rec = &state.records[0];
        assert_eq!(
            (rec.parent, rec.kept, rec.discarded, rec.generation),
            (0, 2, 3, 1)
        );
        assert_eq!(state.labels.get(2, 0), Some(1));
        assert_eq!(state.labels.get(3, 0), Some(0));
        let r = state.vote().unwrap();
        assert_eq!(r.object_id, vec![0, 1, 1, 0]);
    }

    #[test]
    fn modes_change_counts_as_expected() {
        let cloud =
            GaussianCloud::new((0..6).map(|i| needle(16.0 + i as f64, 0.05)).collect(), "t");
        let mask = LabelMap::from_fn(40, 40, |x, _| u16::from(x <= 22));
        let count = |gd| {
            let params = SegParams {
                gd,
                ..Default::default()
            };
            let mut s = SegState::new(cloud.clone(), vec![0], 1, params);
            let st = s.run_view_pass(&cam(0), &mask, 0).unwrap();
            (s.active_count(), st)
        };
        let (off, _) = count(GdMode::Off);
        let (on, st_on) = count(GdMode::On);
        let (del, st_del) = count(GdMode::Delete);
        assert!(st_on.splits > 0);
        assert_eq!(on, off + st_on.splits);
        assert_eq!(del, off - st_del.deleted);
        assert_eq!(st_del.deleted, st_del.boundary);
    }

    #[test]
    fn both_out_splits_twice() {
        let cloud = GaussianCloud::new(vec![needle(20.0, 0.05)], "t");
        let mask = LabelMap::from_fn(40, 40, |x, _| u16::from((17..=23).contains(&x)));
        let mut state = SegState::new(cloud, vec![0], 1, SegParams::default());
        let stats = state.run_view_pass(&cam(0), &mask, 0).unwrap();
        assert_eq!((stats.both_out, stats.splits), (1, 2));
        assert_eq!(state.active, vec![false, false, true, true, true]);
        let kept = &state.cloud[state.records[1].kept];
        assert_eq!(kept.generation(), 2);
        // Survivor spans roughly pixels 16.75..23.25 around the same center.
        let full_px = 6.0 * kept.scale.x * 40.0;
        assert!((full_px - 6.5).abs() < 1.0, "{full_px}");
    }

    #[test]
    fn generation_cap_stops_resplitting() {
        let cloud = GaussianCloud::new(vec![needle(20.0, 0.05)], "t");
        let params = SegParams {
            generation_cap: 0,
            ..Default::default()
        };
        let mask = LabelMap::from_fn(40, 40, |x, _| u16::from(x <= 22));
        let mut state = SegState::new(cloud, vec![0], 1, params);
        assert_eq!(state.run_view_pass(&cam(0), &mask, 0).unwrap().splits, 0);
    }

    #[test]
    fn empty_masks_select_nothing() {
        use crate::provider::{OracleProvider, OracleTarget};
        let cloud = GaussianCloud::new(vec![needle(20.0, 0.01), needle(10.0, 0.01)], "t");
        let cams = vec![cam(0), cam(1), cam(2)];
        let masks = cams.iter().map(|c| (c.id, LabelMap::new(40, 40))).collect();
        let provider = OracleProvider::new(masks, OracleTarget::Object(1));
        let out = segment(
            &cloud,
            &cams,
            &provider,
            None,
            &SegParams::default(),
            &mut |_| {},
        )
        .unwrap();
        assert!(out.result.object_id.iter().all(|&o| o == 0));
    }
}

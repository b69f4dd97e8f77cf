//! Scoring a segmentation by rendering the selected Gaussians in every view.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{mask_metrics_soft, MaskMetrics, DEFAULT_BAND};
use super::scene::SynthScene;
use crate::error::{Error, Result};
use crate::gaussian::GaussianCloud;
use crate::render::{render_subset, RenderOptions, MASK_THRESHOLD};
use crate::seg::{SegmentationResult, VoteMode};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewMetrics {
    pub view: u32,
    pub metrics: MaskMetrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub object: u16,
    pub per_view: Vec<ViewMetrics>,
    pub mean: MaskMetrics,
}

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("view,iou,acc,boundary_iou,boundary_ap,boundary_f1,band_width\n");
        for v in &self.per_view {
            let m = &v.metrics;
            let _ = writeln!(
                s,
                "{},{:.6},{:.6},{:.6},{:.6},{:.6},{}",
                v.view, m.iou, m.acc, m.boundary_iou, m.boundary_ap, m.boundary_f1, m.band_width
            );
        }
        s
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        let csv = dir.join(format!("{stem}.csv"));
        std::fs::write(&csv, self.to_csv()).map_err(|e| Error::io(&csv, e))?;
        let json = dir.join(format!("{stem}.json"));
        std::fs::write(&json, self.to_json()?).map_err(|e| Error::io(&json, e))
    }
}

/// Arithmetic mean of each metric.
pub fn mean_metrics(ms: &[MaskMetrics]) -> MaskMetrics {
    let n = ms.len().max(1) as f64;
    let avg = |f: fn(&MaskMetrics) -> f64| ms.iter().map(f).sum::<f64>() / n;
    MaskMetrics {
        iou: avg(|m| m.iou),
        acc: avg(|m| m.acc),
        boundary_iou: avg(|m| m.boundary_iou),
        boundary_ap: avg(|m| m.boundary_ap),
        boundary_f1: avg(|m| m.boundary_f1),
        band_width: ms.first().map_or(DEFAULT_BAND, |m| m.band_width),
        ap_single_point: ms.iter().any(|m| m.ap_single_point),
    }
}

/// Scores the Gaussians labelled as object `object` against the scene's
/// ground truth in every camera. A binary result is read as a selection of
/// `object`. Views where the object is absent from the ground truth still
/// count.
pub fn evaluate_run(
    scene: &SynthScene,
    cloud: &GaussianCloud,
    result: &SegmentationResult,
    object: u16,
) -> Result<EvalReport> {
    if !scene.gt_labels.contains(&object) {
        return Err(Error::UnknownObject(object));
    }
    if result.len() != cloud.len() {
        return Err(Error::LengthMismatch {
            expected: cloud.len(),
            actual: result.len(),
        });
    }
    let pred_label = match result.params.mode {
        VoteMode::Binary => 1,
        VoteMode::Multi => object,
    };
    let subset = result.object_indices(pred_label);
    evaluate_subset(scene, cloud, &subset, object, DEFAULT_BAND)
}

/// Scores an explicit Gaussian subset of `cloud` against ground-truth label `object`.
pub fn evaluate_subset(
    scene: &SynthScene,
    cloud: &GaussianCloud,
    subset: &[usize],
    object: u16,
    band: u32,
) -> Result<EvalReport> {
    let opts = RenderOptions::default();
    let per_view: Vec<ViewMetrics> = scene
        .cameras
        .par_iter()
        .zip(&scene.gt_masks)
        .map(|(cam, gt)| {
            let out = render_subset(cloud, subset, cam, &opts);
            let metrics = mask_metrics_soft(&out.alpha, MASK_THRESHOLD, &gt.select(object), band)?;
            Ok(ViewMetrics {
                view: cam.id,
                metrics,
            })
        })
        .collect::<Result<_>>()?;
    let mean = mean_metrics(&per_view.iter().map(|v| v.metrics).collect::<Vec<_>>());
    Ok(EvalReport {
        object,
        per_view,
        mean,
    })
}

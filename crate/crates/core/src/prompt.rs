//! Lifting 2D clicks in a reference view to 3D anchors and re-projecting
//! them into every other view.

use serde::{Deserialize, Serialize};

use crate::camera::{Camera, Vec2, Z_NEAR};
use crate::error::{Error, Result};
use crate::gaussian::{GaussianCloud, Vec3};

pub const DEFAULT_EPSILON: f64 = 2.0;
/// Relative slack for the occlusion test on re-projected prompts.
pub const OCCLUSION_TOLERANCE: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    #[serde(alias = "fg", alias = "positive")]
    Foreground,
    #[serde(alias = "bg", alias = "negative")]
    Background,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PromptPoint {
    pub x: f64,
    pub y: f64,
    pub polarity: Polarity,
}

impl PromptPoint {
    pub fn foreground(x: f64, y: f64) -> Self {
        PromptPoint {
            x,
            y,
            polarity: Polarity::Foreground,
        }
    }

    pub fn background(x: f64, y: f64) -> Self {
        PromptPoint {
            x,
            y,
            polarity: Polarity::Background,
        }
    }

    pub fn pos(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

/// A foreground click resolved to the center of a Gaussian.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub position: [f64; 3],
    pub gaussian: usize,
    pub depth: f64,
    pub source: PromptPoint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PromptSet {
    pub view0: u32,
    pub points: Vec<PromptPoint>,
    pub anchors: Vec<Anchor>,
    pub epsilon: f64,
}

/// Resolves every foreground point to the nearest-in-depth Gaussian center
/// whose projection lies strictly within `epsilon` (L1, pixels) of it.
/// Depth ties go to the lower Gaussian index. Background points are kept
/// in the set but not lifted.
pub fn lift_prompts(
    cloud: &GaussianCloud,
    cam0: &Camera,
    points: &[PromptPoint],
    epsilon: f64,
) -> Result<PromptSet> {
    if !(epsilon > 0.0) {
        return Err(Error::Param(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    if !points.iter().any(|p| p.polarity == Polarity::Foreground) {
        return Err(Error::Param(
            "at least one foreground point is required".into(),
        ));
    }
    let (w, h) = (cam0.width as f64, cam0.height as f64);
    if let Some(p) = points
        .iter()
        .find(|p| !(p.x >= 0.0 && p.y >= 0.0 && p.x < w && p.y < h))
    {
        return Err(Error::Param(format!(
            "prompt ({}, {}) lies outside the {}x{} image",
            p.x, p.y, cam0.width, cam0.height
        )));
    }

    let projected: Vec<(Vec2, f64)> = cloud
        .iter()
        .map(|g| cam0.project_center(&g.position))
        .collect();
    let mut anchors = Vec::new();
    for p in points.iter().filter(|p| p.polarity == Polarity::Foreground) {
        let target = p.pos();
        let best = projected
            .iter()
            .enumerate()
            .filter(|(_, (px, depth))| *depth > Z_NEAR && (px - target).abs().sum() < epsilon)
            .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1).then(a.0.cmp(&b.0)));
        let (index, &(_, depth)) = best.ok_or(Error::NoAnchor {
            x: p.x,
            y: p.y,
            epsilon,
        })?;
        let mu = cloud[index].position;
        anchors.push(Anchor {
            position: [mu.x, mu.y, mu.z],
            gaussian: index,
            depth,
            source: *p,
        });
    }
    Ok(PromptSet {
        view0: cam0.id,
        points: points.to_vec(),
        anchors,
        epsilon,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    BehindCamera,
    OutsideImage,
    Occluded,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewPrompts {
    pub view: u32,
    pub points: Vec<PromptPoint>,
    /// `(anchor index, reason)` for anchors not forwarded to this view.
    pub dropped: Vec<(usize, DropReason)>,
}

impl ViewPrompts {
    /// A view without any surviving foreground prompt contributes no labels.
    pub fn usable(&self) -> bool {
        self.points
            .iter()
            .any(|p| p.polarity == Polarity::Foreground)
    }
}

/// Projects anchors into each camera. When `depth_maps` is given (one
/// optional expected-depth image per camera), anchors more than 5% deeper
/// than the rendered surface at their pixel are dropped as occluded. The
/// reference view keeps the original clicks, background points included.
pub fn project_prompts(
    prompts: &PromptSet,
    cams: &[Camera],
    depth_maps: Option<&[Option<Vec<f64>>]>,
) -> Vec<ViewPrompts> {
    cams.iter()
        .enumerate()
        .map(|(ci, cam)| {
            if cam.id == prompts.view0 {
                return ViewPrompts {
                    view: cam.id,
                    points: prompts.points.clone(),
                    dropped: Vec::new(),
                };
            }
            let depth_map = depth_maps.and_then(|d| d.get(ci)).and_then(|d| d.as_ref());
            let mut points = Vec::new();
            let mut dropped = Vec::new();
            for (ai, a) in prompts.anchors.iter().enumerate() {
                let (px, depth) = cam.project_center(&Vec3::from(a.position));
                if depth <= Z_NEAR {
                    dropped.push((ai, DropReason::BehindCamera));
                    continue;
                }
                let Some((u, v)) = cam.pixel_of(&px) else {
                    dropped.push((ai, DropReason::OutsideImage));
                    continue;
                };
                if let Some(dm) = depth_map {
                    let surface = dm[(v * cam.width + u) as usize];
                    if surface > 0.0 && depth > surface * (1.0 + OCCLUSION_TOLERANCE) {
                        dropped.push((ai, DropReason::Occluded));
                        continue;
                    }
                }
                points.push(PromptPoint::foreground(px.x, px.y));
            }
            ViewPrompts {
                view: cam.id,
                points,
                dropped,
            }
        })
        .collect()
}

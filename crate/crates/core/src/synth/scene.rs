//! Procedural scenes of boxes, spheres and ground planes covered in
//! surface-tangent Gaussians, with per-Gaussian ground-truth labels.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::{FRAC_PI_4, PI};

use nalgebra::{Matrix3, Rotation3, UnitQuaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camera::{Camera, Z_NEAR};
use crate::error::{Error, Result};
use crate::gaussian::{Gaussian, GaussianCloud, Vec3};
use crate::image_io::LabelMap;
use crate::prompt::PromptPoint;
use crate::provider::{OracleProvider, OracleTarget};
use crate::render::{render_id_map, render_subset, RenderOptions};

const PRESETS: &str = include_str!("presets.toml");
const CONTACT_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Shape {
    Box {
        center: [f64; 3],
        size: [f64; 3],
    },
    Sphere {
        center: [f64; 3],
        radius: f64,
    },
    /// Horizontal rectangle; acts as solid ground below it.
    Plane {
        center: [f64; 3],
        size: [f64; 2],
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub label: u16,
    #[serde(flatten)]
    pub shape: Shape,
    pub count: usize,
    #[serde(default = "default_color")]
    pub color: [f64; 3],
}

fn default_color() -> [f64; 3] {
    [0.6, 0.6, 0.6]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub width: u32,
    pub height: u32,
    pub focal: f64,
    pub views: u32,
    pub radius: f64,
    /// Ring elevation above the target, degrees.
    pub elevation: f64,
    /// Azimuth of camera 0, degrees.
    pub azimuth: f64,
    pub target: [f64; 3],
    pub objects: Vec<ObjectSpec>,
    /// In-plane standard deviations as multiples of the sample spacing.
    pub sigma_long: f64,
    pub sigma_short: f64,
    /// Thickness along the surface normal, multiple of the spacing.
    pub sigma_normal: f64,
    pub opacity: f64,
    /// Share of each box or plane budget spent on edge-aligned Gaussians.
    pub edge_fraction: f64,
    /// Distance of face samples from exterior edges, in short-axis sigmas.
    pub edge_inset: f64,
    /// Height of an invisible floor; surface at or below it is not sampled.
    pub ground: Option<f64>,
    /// Share of each box or plane budget spent on Gaussians lying across
    /// the edges where it touches another object.
    pub straddle_fraction: f64,
    /// Long-axis multiplier for those straddling Gaussians.
    pub straddle_scale: f64,
    /// Short-axis multiplier for face Gaussians running along a contact edge.
    pub contact_short: f64,
    /// Base opacity of the straddling Gaussians.
    pub straddle_opacity: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            width: 160,
            height: 120,
            focal: 170.0,
            views: 24,
            radius: 4.0,
            elevation: 35.0,
            azimuth: 0.0,
            target: [0.0, 0.0, 0.5],
            objects: Vec::new(),
            sigma_long: 0.9,
            sigma_short: 0.45,
            sigma_normal: 0.05,
            opacity: 0.9,
            edge_fraction: 0.08,
            edge_inset: 2.0,
            ground: None,
            straddle_fraction: 0.05,
            straddle_scale: 2.5,
            contact_short: 0.5,
            straddle_opacity: 0.15,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.objects.is_empty() {
            return Err(Error::Config("scene has no objects".into()));
        }
        if self.views < 2 {
            return Err(Error::Config("camera ring needs at least 2 views".into()));
        }
        for o in &self.objects {
            if o.count == 0 {
                return Err(Error::Config(format!(
                    "object {} has zero Gaussians",
                    o.label
                )));
            }
            if o.label == 0 {
                return Err(Error::Config("label 0 is reserved for background".into()));
            }
        }
        if !(self.sigma_long > 0.0 && self.sigma_short > 0.0 && self.sigma_normal > 0.0) {
            return Err(Error::Config("sigma factors must be positive".into()));
        }
        Ok(())
    }
}

/// Names of the built-in presets.
pub fn preset_names() -> Vec<String> {
    presets_table()
        .map(|t| t.into_keys().collect())
        .unwrap_or_default()
}

fn presets_table() -> Result<BTreeMap<String, SceneConfig>> {
    toml::from_str(PRESETS).map_err(|e| Error::Config(format!("built-in presets: {e}")))
}

pub fn preset(name: &str) -> Result<SceneConfig> {
    presets_table()?.remove(name).ok_or_else(|| {
        Error::Config(format!(
            "unknown preset `{name}` (known: {})",
            preset_names().join(", ")
        ))
    })
}

/// Scene configs from a TOML file of `[name]` tables.
pub fn load_presets(text: &str) -> Result<BTreeMap<String, SceneConfig>> {
    toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
}

#[derive(Clone, Debug)]
pub struct SynthScene {
    pub config: SceneConfig,
    pub seed: u64,
    pub cloud: GaussianCloud,
    pub gt_labels: Vec<u16>,
    pub cameras: Vec<Camera>,
    pub gt_masks: Vec<LabelMap>,
}

impl SynthScene {
    /// Indices of Gaussians with ground-truth label `label`.
    pub fn object_indices(&self, label: u16) -> Vec<usize> {
        (0..self.gt_labels.len())
            .filter(|&i| self.gt_labels[i] == label)
            .collect()
    }

    pub fn labels(&self) -> Vec<u16> {
        let mut l: Vec<u16> = self.config.objects.iter().map(|o| o.label).collect();
        l.sort_unstable();
        l.dedup();
        l
    }

    pub fn render_gt_masks(&self) -> Result<Vec<LabelMap>> {
        render_gt_masks(&self.cloud, &self.gt_labels, &self.cameras)
    }

    pub fn oracle(&self, target: OracleTarget) -> OracleProvider {
        let masks: HashMap<u32, LabelMap> = self
            .cameras
            .iter()
            .zip(&self.gt_masks)
            .map(|(c, m)| (c.id, m.clone()))
            .collect();
        OracleProvider::new(masks, target)
    }

    /// A click on object `label` in camera 0: the view-0 pixel of the
    /// object's Gaussian that is unoccluded in the most views (ties to the
    /// lower index).
    pub fn default_prompt(&self, label: u16) -> Result<PromptPoint> {
        let opts = RenderOptions::default();
        let all: Vec<usize> = (0..self.cloud.len()).collect();
        let depths: Vec<Vec<f64>> = self
            .cameras
            .iter()
            .map(|c| render_subset(&self.cloud, &all, c, &opts).depth)
            .collect();
        let visible = |i: usize, ci: usize| -> Option<(f64, f64)> {
            let cam = &self.cameras[ci];
            let (px, d) = cam.project_center(&self.cloud[i].position);
            let (u, v) = cam.pixel_of(&px).filter(|_| d > Z_NEAR)?;
            let surface = depths[ci][(v * cam.width + u) as usize];
            (self.gt_masks[ci].get(u, v) == label
                && surface > 0.0
                && (d - surface).abs() <= 0.02 * surface)
                .then_some((px.x, px.y))
        };
        let best = self
            .object_indices(label)
            .into_iter()
            .filter_map(|i| {
                let at0 = visible(i, 0)?;
                let score = (1..self.cameras.len())
                    .filter(|&c| visible(i, c).is_some())
                    .count();
                Some((score, i, at0))
            })
            .fold(
                None,
                |acc: Option<(usize, usize, (f64, f64))>, cur| match acc {
                    Some(a) if a.0 >= cur.0 => Some(a),
                    _ => Some(cur),
                },
            )
            .ok_or_else(|| Error::Config(format!("object {label} is not visible in view 0")))?;
        let (x, y) = best.2;
        Ok(PromptPoint::foreground(x.round(), y.round()))
    }
}

pub fn render_gt_masks(
    cloud: &GaussianCloud,
    labels: &[u16],
    cams: &[Camera],
) -> Result<Vec<LabelMap>> {
    cams.iter()
        .map(|c| render_id_map(cloud, labels, c))
        .collect()
}

pub fn ring_cameras(config: &SceneConfig) -> Result<Vec<Camera>> {
    let target = Vec3::from(config.target);
    let el = config.elevation.to_radians();
    (0..config.views)
        .map(|i| {
            let az = config.azimuth.to_radians() + 2.0 * PI * i as f64 / config.views as f64;
            let eye = target
                + config.radius * Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin());
            Camera::look_at(
                i,
                config.width,
                config.height,
                config.focal,
                eye,
                target,
                Vec3::z(),
            )
        })
        .collect()
}

/// Whether the segment `a -> b` passes through the open interior of a solid,
/// given as an axis-aligned slab box.
fn segment_hits_box(lo: &Vec3, hi: &Vec3, a: &Vec3, b: &Vec3) -> bool {
    let d = b - a;
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for k in 0..3 {
        if d[k].abs() < 1e-15 {
            if a[k] <= lo[k] || a[k] >= hi[k] {
                return false;
            }
            continue;
        }
        let (mut u, mut v) = ((lo[k] - a[k]) / d[k], (hi[k] - a[k]) / d[k]);
        if u > v {
            std::mem::swap(&mut u, &mut v);
        }
        t0 = t0.max(u);
        t1 = t1.min(v);
    }
    t1 - t0 > 1e-9
}

fn segment_hits(shape: &Shape, a: &Vec3, b: &Vec3) -> bool {
    match shape {
        Shape::Box { center, size } => {
            let (c, h) = (Vec3::from(*center), 0.5 * Vec3::from(*size));
            segment_hits_box(&(c - h), &(c + h), a, b)
        }
        Shape::Sphere { center, radius } => {
            let d = b - a;
            let f = a - Vec3::from(*center);
            let (qa, qb, qc) = (d.dot(&d), 2.0 * f.dot(&d), f.dot(&f) - radius * radius);
            let disc = qb * qb - 4.0 * qa * qc;
            if disc <= 0.0 {
                return false;
            }
            let r = disc.sqrt();
            let (t0, t1) = ((-qb - r) / (2.0 * qa), (-qb + r) / (2.0 * qa));
            t1.min(1.0) - t0.max(0.0) > 1e-9
        }
        Shape::Plane { center, size } => {
            let lo = Vec3::new(center[0] - 0.5 * size[0], center[1] - 0.5 * size[1], -1e9);
            let hi = Vec3::new(center[0] + 0.5 * size[0], center[1] + 0.5 * size[1], center[2]);
            segment_hits_box(&lo, &hi, a, b)
        }
    }
}

/// Closed containment (with a small tolerance) in an object's solid.
fn inside(shape: &Shape, p: &Vec3) -> bool {
    match shape {
        Shape::Box { center, size } => {
            (0..3).all(|k| (p[k] - center[k]).abs() <= 0.5 * size[k] + CONTACT_TOL)
        }
        Shape::Sphere { center, radius } => {
            (p - Vec3::from(*center)).norm() <= radius + CONTACT_TOL
        }
        Shape::Plane { center, size } => {
            p.z <= center[2] + CONTACT_TOL
                && (p.x - center[0]).abs() <= 0.5 * size[0] + CONTACT_TOL
                && (p.y - center[1]).abs() <= 0.5 * size[1] + CONTACT_TOL
        }
    }
}

/// A flat rectangular patch: `origin + a·u + b·v`, `a ∈ [0, lu]`, `b ∈ [0, lv]`.
#[derive(Clone, Debug)]
struct Patch {
    origin: Vec3,
    u: Vec3,
    v: Vec3,
    lu: f64,
    lv: f64,
    normal: Vec3,
}

impl Patch {
    fn at(&self, a: f64, b: f64) -> Vec3 {
        self.origin + self.u * a + self.v * b
    }

    fn area(&self) -> f64 {
        self.lu * self.lv
    }

    /// Edges as `(start, direction, length)`, in the order u-min, u-max, v-min, v-max.
    fn edges(&self) -> [(Vec3, Vec3, f64); 4] {
        [
            (self.origin, self.v, self.lv),
            (self.at(self.lu, 0.0), self.v, self.lv),
            (self.origin, self.u, self.lu),
            (self.at(0.0, self.lv), self.u, self.lu),
        ]
    }
}

fn box_patches(center: [f64; 3], size: [f64; 3]) -> Vec<Patch> {
    let c = Vec3::from(center);
    let mut out = Vec::new();
    for a in 0..3 {
        let (ku, kv) = ((a + 1) % 3, (a + 2) % 3);
        for sign in [-1.0, 1.0] {
            let normal = Vec3::ith(a, sign);
            let (u, v) = (Vec3::ith(ku, 1.0), Vec3::ith(kv, 1.0));
            let origin = c + normal * (0.5 * size[a]) - u * (0.5 * size[ku]) - v * (0.5 * size[kv]);
            out.push(Patch {
                origin,
                u,
                v,
                lu: size[ku],
                lv: size[kv],
                normal,
            });
        }
    }
    out
}

fn plane_patch(center: [f64; 3], size: [f64; 2]) -> Patch {
    Patch {
        origin: Vec3::new(
            center[0] - 0.5 * size[0],
            center[1] - 0.5 * size[1],
            center[2],
        ),
        u: Vec3::x(),
        v: Vec3::y(),
        lu: size[0],
        lv: size[1],
        normal: Vec3::z(),
    }
}

/// Splits `total` proportionally to `weights` by largest remainder.
fn apportion(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    if sum <= 0.0 {
        return vec![0; weights.len()];
    }
    let exact: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut out: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        (exact[b] - exact[b].floor())
            .total_cmp(&(exact[a] - exact[a].floor()))
            .then(a.cmp(&b))
    });
    let missing = total - out.iter().sum::<usize>();
    for &i in order.iter().take(missing) {
        out[i] += 1;
    }
    out
}

/// Additive-recurrence low-discrepancy point in `[0, 1)²`.
fn r2(i: usize, offset: (f64, f64)) -> (f64, f64) {
    const G: f64 = 1.324_717_957_244_746;
    let (a1, a2) = (1.0 / G, 1.0 / (G * G));
    (
        (offset.0 + a1 * i as f64).fract(),
        (offset.1 + a2 * i as f64).fract(),
    )
}

struct Builder<'a> {
    config: &'a SceneConfig,
    cameras: &'a [Camera],
    rng: ChaCha8Rng,
    gaussians: Vec<Gaussian>,
    labels: Vec<u16>,
}

impl Builder<'_> {
    /// Whether any camera sees the surface point `p` unobstructed, counting
    /// every solid (its own included, which rejects back faces).
    fn seen(&self, p: &Vec3) -> bool {
        self.cameras.iter().any(|cam| {
            let (px, depth) = cam.project_center(p);
            if depth <= Z_NEAR || cam.pixel_of(&px).is_none() {
                return false;
            }
            let eye = cam.position();
            let q = p + (eye - p).normalize() * 1e-4;
            let ground = self.config.ground.is_some_and(|z| {
                let lo = Vec3::new(-1e9, -1e9, -1e9);
                segment_hits_box(&lo, &Vec3::new(1e9, 1e9, z), &eye, &q)
            });
            !ground
                && !self
                    .config
                    .objects
                    .iter()
                    .any(|o| segment_hits(&o.shape, &eye, &q))
        })
    }

    fn usable(&self, owner: usize, p: &Vec3) -> bool {
        !self.blocked(owner, p) && self.seen(p)
    }

    fn below_ground(&self, p: &Vec3) -> bool {
        self.config.ground.is_some_and(|z| p.z <= z + CONTACT_TOL)
    }

    fn blocked(&self, owner: usize, p: &Vec3) -> bool {
        self.below_ground(p)
            || self
                .config
                .objects
                .iter()
                .enumerate()
                .any(|(j, o)| j != owner && inside(&o.shape, p))
    }

    fn emit(
        &mut self,
        obj: &ObjectSpec,
        position: Vec3,
        frame: Matrix3<f64>,
        scale: Vec3,
        base_opacity: f64,
    ) -> Result<()> {
        let jitter = 0.04;
        let color = obj
            .color
            .map(|c| (c + self.rng.random_range(-jitter..=jitter)).clamp(0.0, 1.0));
        let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(frame));
        let opacity = (base_opacity + self.rng.random_range(-0.05..=0.05)).clamp(0.05, 1.0);
        self.gaussians
            .push(Gaussian::with_color(position, scale, q, opacity, color)?);
        self.labels.push(obj.label);
        Ok(())
    }

    /// Tangent frame `[long, short, normal]` with a random in-plane angle.
    fn tangent_frame(&mut self, normal: &Vec3) -> Matrix3<f64> {
        let helper = if normal.x.abs() < 0.9 {
            Vec3::x()
        } else {
            Vec3::y()
        };
        let t1 = normal.cross(&helper).normalize();
        let t2 = normal.cross(&t1);
        let th = self.rng.random_range(0.0..PI);
        let long = t1 * th.cos() + t2 * th.sin();
        let short = normal.cross(&long);
        Matrix3::from_columns(&[long, short, *normal])
    }

    fn patches(&mut self, owner: usize, patches: Vec<Patch>) -> Result<()> {
        let obj = &self.config.objects[owner].clone();
        // Drop contact faces and faces no camera sees.
        let kept: Vec<Patch> = patches
            .into_iter()
            .filter(|p| {
                (0..25).any(|k| {
                    let (a, b) = (0.1 + 0.2 * (k % 5) as f64, 0.1 + 0.2 * (k / 5) as f64);
                    self.usable(owner, &p.at(a * p.lu, b * p.lv))
                })
            })
            .collect();
        if kept.is_empty() {
            return Err(Error::Config(format!(
                "object {} is entirely hidden",
                obj.label
            )));
        }
        // Contact edges: edges of kept faces whose midpoint rests on another
        // solid, with the direction pointing into the face.
        let mut contacts: Vec<(Vec3, Vec3, f64, Vec3, Vec3)> = Vec::new();
        for p in &kept {
            let inward = [p.u, -p.u, p.v, -p.v];
            for ((start, dir, len), into) in p.edges().into_iter().zip(inward) {
                if self.blocked(owner, &(start + dir * (0.5 * len))) {
                    contacts.push((start, dir, len, into, p.normal));
                }
            }
        }
        let edge_budget = (obj.count as f64 * self.config.edge_fraction).round() as usize;
        let straddle_budget = if contacts.is_empty() {
            0
        } else {
            (obj.count as f64 * self.config.straddle_fraction).round() as usize
        };
        let face_budget = obj.count.saturating_sub(edge_budget + straddle_budget);
        let face_counts = apportion(face_budget, &kept.iter().map(Patch::area).collect::<Vec<_>>());
        let area: f64 = kept.iter().map(Patch::area).sum();
        let spacing = (area / face_budget.max(1) as f64).sqrt();
        let (sl, ss, sn) = (
            self.config.sigma_long * spacing,
            self.config.sigma_short * spacing,
            self.config.sigma_normal * spacing,
        );

        // Needles along every visible edge of the kept faces, contact edges
        // included.
        let mut edges: Vec<(Vec3, Vec3, f64, Vec3)> = Vec::new();
        for p in &kept {
            for (start, dir, len) in p.edges() {
                let mid = start + dir * (0.5 * len);
                if self.below_ground(&mid) || !self.seen(&mid) {
                    continue;
                }
                let dup = edges
                    .iter()
                    .any(|(s, d, l, _)| ((s + d * (0.5 * l)) - mid).norm() < 1e-9);
                if !dup {
                    edges.push((start, dir, len, p.normal));
                }
            }
        }
        let edge_counts = apportion(edge_budget, &edges.iter().map(|e| e.2).collect::<Vec<_>>());
        for (&(start, dir, len, normal), &n) in edges.iter().zip(&edge_counts) {
            let step = len / n.max(1) as f64;
            let across = normal.cross(&dir);
            let frame = Matrix3::from_columns(&[dir, across, normal]);
            for k in 0..n {
                let pos = start + dir * ((k as f64 + 0.5) * step);
                self.emit(
                    obj,
                    pos,
                    frame,
                    Vec3::new(0.6 * step.min(2.0 * sl), sn.max(0.3 * ss), sn.max(0.3 * ss)),
                    self.config.opacity,
                )?;
            }
        }

        for (p, &n) in kept.iter().zip(&face_counts) {
            // Near an exterior edge the long axis runs along that edge and the
            // footprint stays on the face; contact edges get neither rule.
            let exterior: Vec<bool> = p
                .edges()
                .iter()
                .map(|(s, d, l)| !self.blocked(owner, &(s + d * (0.5 * l))))
                .collect();
            let inset: Vec<f64> = exterior
                .iter()
                .map(|&e| if e { self.config.edge_inset * ss } else { 0.0 })
                .collect();
            let (a0, a1) = (inset[0], p.lu - inset[1]);
            let (b0, b1) = (inset[2], p.lv - inset[3]);
            if a1 <= a0 || b1 <= b0 {
                return Err(Error::Config(format!(
                    "object {}: face too small for its Gaussians",
                    obj.label
                )));
            }
            let offset = (self.rng.random::<f64>(), self.rng.random::<f64>());
            let (mut made, mut i) = (0, 0);
            while made < n {
                if i > 100 * n + 1000 {
                    return Err(Error::Config(format!(
                        "object {}: could not place Gaussians",
                        obj.label
                    )));
                }
                let (s, t) = r2(i, offset);
                i += 1;
                let (a, b) = (a0 + s * (a1 - a0), b0 + t * (b1 - b0));
                let pos = p.at(a, b);
                if !self.usable(owner, &pos) {
                    continue;
                }
                let dist = [a, p.lu - a, b, p.lv - b];
                let near: Vec<usize> = (0..4).filter(|&k| dist[k] < 3.0 * sl).collect();
                let nearest = near.iter().copied().min_by(|&x, &y| dist[x].total_cmp(&dist[y]));
                let frame = match nearest {
                    Some(k) => {
                        let along = if k < 2 { p.v } else { p.u };
                        Matrix3::from_columns(&[along, p.normal.cross(&along), p.normal])
                    }
                    None => self.tangent_frame(&p.normal),
                };
                // In a corner between exterior edges no direction is safe.
                let corner = near.iter().filter(|&&k| exterior[k]).count() >= 2;
                let long = if corner { ss } else { sl };
                let short = match nearest {
                    Some(k) if !exterior[k] => ss * self.config.contact_short,
                    _ => ss,
                };
                self.emit(obj, pos, frame, Vec3::new(long, short, sn), self.config.opacity)?;
                made += 1;
            }
        }

        let straddle_counts =
            apportion(straddle_budget, &contacts.iter().map(|c| c.2).collect::<Vec<_>>());
        let long = sl * self.config.straddle_scale;
        for (&(start, dir, len, into, normal), &n) in contacts.iter().zip(&straddle_counts) {
            let step = len / n.max(1) as f64;
            for k in 0..n {
                let mut tries = 0;
                let pos = loop {
                    let along = (k as f64 + self.rng.random::<f64>()) * step;
                    let depth = self.rng.random::<f64>() * long;
                    let pos = start + dir * along + into * depth;
                    if self.usable(owner, &pos) {
                        break pos;
                    }
                    tries += 1;
                    if tries > 1000 {
                        return Err(Error::Config(format!(
                            "object {}: could not place contact Gaussians",
                            obj.label
                        )));
                    }
                };
                let th = self.rng.random_range(-FRAC_PI_4..FRAC_PI_4);
                let axis = into * th.cos() + dir * th.sin();
                let frame = Matrix3::from_columns(&[axis, normal.cross(&axis), normal]);
                self.emit(obj, pos, frame, Vec3::new(long, ss, sn), self.config.straddle_opacity)?;
            }
        }
        Ok(())
    }

    fn sphere(&mut self, owner: usize, center: [f64; 3], radius: f64) -> Result<()> {
        let obj = &self.config.objects[owner].clone();
        let c = Vec3::from(center);
        let golden = PI * (3.0 - 5f64.sqrt());
        let spiral = |m: usize| -> Vec<Vec3> {
            (0..m)
                .map(|i| {
                    let z = 1.0 - 2.0 * (i as f64 + 0.5) / m as f64;
                    let r = (1.0 - z * z).sqrt();
                    let th = golden * i as f64;
                    Vec3::new(r * th.cos(), r * th.sin(), z)
                })
                .collect()
        };
        let mut m = obj.count;
        let survivors = loop {
            let pts: Vec<Vec3> = spiral(m)
                .into_iter()
                .filter(|d| self.usable(owner, &(c + d * radius)))
                .collect();
            if pts.len() >= obj.count {
                break pts;
            }
            if m > 100 * obj.count {
                return Err(Error::Config(format!(
                    "object {} is entirely hidden",
                    obj.label
                )));
            }
            m = (m as f64 * 1.05).ceil() as usize + 1;
        };
        let area = 4.0 * PI * radius * radius * survivors.len() as f64 / m as f64;
        let spacing = (area / obj.count as f64).sqrt();
        let scale = Vec3::new(
            self.config.sigma_long * spacing,
            self.config.sigma_short * spacing,
            self.config.sigma_normal * spacing,
        );
        let s = survivors.len();
        for k in 0..obj.count {
            let d = survivors[k * s / obj.count];
            let frame = self.tangent_frame(&d);
            self.emit(obj, c + d * radius, frame, scale, self.config.opacity)?;
        }
        Ok(())
    }
}

/// Builds a scene deterministically from `(config, seed)`.
pub fn gen_scene(config: &SceneConfig, seed: u64) -> Result<SynthScene> {
    config.validate()?;
    let cameras = ring_cameras(config)?;
    let mut b = Builder {
        config,
        cameras: &cameras,
        rng: ChaCha8Rng::seed_from_u64(seed),
        gaussians: Vec::new(),
        labels: Vec::new(),
    };
    for (owner, obj) in config.objects.iter().enumerate() {
        match obj.shape {
            Shape::Box { center, size } => b.patches(owner, box_patches(center, size))?,
            Shape::Plane { center, size } => b.patches(owner, vec![plane_patch(center, size)])?,
            Shape::Sphere { center, radius } => b.sphere(owner, center, radius)?,
        }
    }
    let cloud = GaussianCloud::new(b.gaussians, format!("synthetic seed {seed}"));
    let gt_labels = b.labels;
    let gt_masks = render_gt_masks(&cloud, &gt_labels, &cameras)?;
    for obj in &config.objects {
        if !gt_masks.iter().any(|m| m.data.contains(&obj.label)) {
            return Err(Error::Config(format!(
                "object {} is not visible in any view",
                obj.label
            )));
        }
    }
    Ok(SynthScene {
        config: config.clone(),
        seed,
        cloud,
        gt_labels,
        cameras,
        gt_masks,
    })
}

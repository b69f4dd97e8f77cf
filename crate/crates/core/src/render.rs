//! Tile-based front-to-back alpha blending of projected Gaussians.
//!
//! Splats are sorted globally by camera-space center depth, binned into
//! 16×16 pixel tiles by the bounding box of their 3σ ellipse, and each tile
//! is blended independently. A splat contributes
//! `min(0.99, opacity · exp(-½ dᵀΣ'⁻¹d))` inside its 3σ ellipse and nothing
//! outside; contributions under 1/255 are skipped and a pixel stops once its
//! transmittance falls below 1e-4.

use rayon::prelude::*;

use crate::camera::{project_covariance_with, Camera, Vec2, COV2D_FLOOR, Z_NEAR};
use crate::error::{Error, Result};
use crate::gaussian::GaussianCloud;
use crate::image_io::LabelMap;
use crate::sh::eval_sh;

pub const ALPHA_MAX: f64 = 0.99;
pub const ALPHA_MIN: f64 = 1.0 / 255.0;
pub const TRANSMITTANCE_MIN: f64 = 1e-4;
/// Squared Mahalanobis radius of the splat footprint (3σ).
pub const FOOTPRINT_RADIUS2: f64 = 9.0;
pub const MASK_THRESHOLD: f64 = 0.5;
pub const TILE_SIZE: u32 = 16;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RenderOptions {
    pub background: [f64; 3],
    pub cov_floor: f64,
    pub tile_size: u32,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions {
            background: [0.0; 3],
            cov_floor: COV2D_FLOOR,
            tile_size: TILE_SIZE,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderOutput {
    pub width: u32,
    pub height: u32,
    pub rgb: Vec<[f64; 3]>,
    /// Alpha-weighted expected depth; 0 where nothing contributed.
    pub depth: Vec<f64>,
    pub alpha: Vec<f64>,
    pub id_map: Option<LabelMap>,
}

impl RenderOutput {
    pub fn alpha_mask(&self, threshold: f64) -> LabelMap {
        LabelMap {
            width: self.width,
            height: self.height,
            data: self
                .alpha
                .iter()
                .map(|&a| u16::from(a >= threshold))
                .collect(),
        }
    }
}

/// A Gaussian prepared for blending in one view.
#[derive(Clone, Debug)]
pub(crate) struct Splat {
    pub center: Vec2,
    /// Inverse screen covariance as (a, b, c) of [[a, b], [b, c]].
    pub conic: [f64; 3],
    pub opacity: f64,
    pub color: [f64; 3],
    pub depth: f64,
    pub label: u16,
    /// Inclusive pixel bounds (x0, y0, x1, y1).
    pub bbox: (i64, i64, i64, i64),
}

impl Splat {
    /// Blend weight at pixel center `(x, y)`, or `None` if outside the
    /// footprint or below the minimum alpha.
    #[inline]
    pub fn alpha_at(&self, x: f64, y: f64) -> Option<f64> {
        let dx = x - self.center.x;
        let dy = y - self.center.y;
        let [a, b, c] = self.conic;
        let m2 = a * dx * dx + 2.0 * b * dx * dy + c * dy * dy;
        if !(m2 <= FOOTPRINT_RADIUS2) {
            return None;
        }
        let alpha = (self.opacity * (-0.5 * m2).exp()).min(ALPHA_MAX);
        (alpha >= ALPHA_MIN).then_some(alpha)
    }
}

/// Projects and depth-sorts the selected Gaussians. Gaussians with centers
/// at or behind the near plane, or with zero opacity, are dropped.
pub(crate) fn prepare_splats(
    cloud: &GaussianCloud,
    indices: &[usize],
    cam: &Camera,
    cov_floor: f64,
    labels: Option<&[u16]>,
) -> Vec<Splat> {
    let eye = cam.position();
    let mut splats: Vec<(usize, Splat)> = indices
        .par_iter()
        .filter_map(|&i| {
            let g = &cloud[i];
            if g.opacity <= 0.0 {
                return None;
            }
            let t = cam.to_camera(&g.position);
            if t.z <= Z_NEAR {
                return None;
            }
            let m = cam.ewa_jacobian(&t) * cam.rotation();
            let cov = project_covariance_with(&m, &g.covariance(), cov_floor);
            let det = cov.determinant();
            if !(det > 0.0) {
                return None;
            }
            let center = Vec2::new(cam.fx * t.x / t.z + cam.cx, cam.fy * t.y / t.z + cam.cy);
            let conic = [cov[(1, 1)] / det, -cov[(0, 1)] / det, cov[(0, 0)] / det];
            let rx = 3.0 * cov[(0, 0)].sqrt();
            let ry = 3.0 * cov[(1, 1)].sqrt();
            // One pixel of slack so rounding at the ellipse rim never drops a pixel.
            let bbox = (
                (center.x - rx).floor() as i64 - 1,
                (center.y - ry).floor() as i64 - 1,
                (center.x + rx).ceil() as i64 + 1,
                (center.y + ry).ceil() as i64 + 1,
            );
            if bbox.2 < 0 || bbox.3 < 0 || bbox.0 >= cam.width as i64 || bbox.1 >= cam.height as i64
            {
                return None;
            }
            let dir = (g.position - eye).normalize();
            Some((
                i,
                Splat {
                    center,
                    conic,
                    opacity: g.opacity,
                    color: eval_sh(&g.sh, &dir),
                    depth: t.z,
                    label: labels.map_or(0, |l| l[i]),
                    bbox,
                },
            ))
        })
        .collect();
    splats.sort_by(|a, b| a.1.depth.total_cmp(&b.1.depth).then(a.0.cmp(&b.0)));
    splats.into_iter().map(|(_, s)| s).collect()
}

#[derive(Clone, Copy, Debug, Default)]
struct PixelOut {
    rgb: [f64; 3],
    alpha: f64,
    depth: f64,
    label: u16,
}

fn shade_pixel<'a>(
    x: f64,
    y: f64,
    splats: impl Iterator<Item = &'a Splat>,
    background: [f64; 3],
    with_labels: bool,
    weights: &mut Vec<(u16, f64)>,
) -> PixelOut {
    weights.clear();
    let mut t = 1.0;
    let mut rgb = [0.0; 3];
    let (mut depth_acc, mut weight_sum) = (0.0, 0.0);
    for s in splats {
        let Some(alpha) = s.alpha_at(x, y) else {
            continue;
        };
        let w = alpha * t;
        for ch in 0..3 {
            rgb[ch] += w * s.color[ch];
        }
        depth_acc += w * s.depth;
        weight_sum += w;
        if with_labels {
            match weights.iter_mut().find(|(l, _)| *l == s.label) {
                Some(entry) => entry.1 += w,
                None => weights.push((s.label, w)),
            }
        }
        t *= 1.0 - alpha;
        if t < TRANSMITTANCE_MIN {
            break;
        }
    }
    for ch in 0..3 {
        rgb[ch] += t * background[ch];
    }
    let alpha = 1.0 - t;
    let label = if with_labels && alpha >= MASK_THRESHOLD {
        weights
            .iter()
            .fold(None::<(u16, f64)>, |best, &(l, w)| match best {
                Some((bl, bw)) if bw > w || (bw == w && bl < l) => Some((bl, bw)),
                _ => Some((l, w)),
            })
            .map_or(0, |(l, _)| l)
    } else {
        0
    };
    PixelOut {
        rgb,
        alpha,
        depth: if weight_sum > 0.0 {
            depth_acc / weight_sum
        } else {
            0.0
        },
        label,
    }
}

pub(crate) fn rasterize(
    splats: &[Splat],
    width: u32,
    height: u32,
    opts: &RenderOptions,
    with_labels: bool,
) -> RenderOutput {
    let ts = opts.tile_size.max(1) as i64;
    let tiles_x = (width as i64 + ts - 1) / ts;
    let tiles_y = (height as i64 + ts - 1) / ts;
    let mut bins: Vec<Vec<u32>> = vec![Vec::new(); (tiles_x * tiles_y) as usize];
    for (k, s) in splats.iter().enumerate() {
        let (x0, y0, x1, y1) = s.bbox;
        let tx0 = (x0.max(0) / ts).min(tiles_x - 1);
        let ty0 = (y0.max(0) / ts).min(tiles_y - 1);
        let tx1 = (x1.min(width as i64 - 1) / ts).min(tiles_x - 1);
        let ty1 = (y1.min(height as i64 - 1) / ts).min(tiles_y - 1);
        for ty in ty0..=ty1 {
            for tx in tx0..=tx1 {
                bins[(ty * tiles_x + tx) as usize].push(k as u32);
            }
        }
    }

    let tiles: Vec<Vec<(u32, u32, PixelOut)>> = bins
        .par_iter()
        .enumerate()
        .map(|(tile, list)| {
            let tx = tile as i64 % tiles_x;
            let ty = tile as i64 / tiles_x;
            let mut out = Vec::with_capacity((ts * ts) as usize);
            let mut weights = Vec::new();
            for py in (ty * ts)..((ty + 1) * ts).min(height as i64) {
                for px in (tx * ts)..((tx + 1) * ts).min(width as i64) {
                    let pix = shade_pixel(
                        px as f64,
                        py as f64,
                        list.iter().map(|&k| &splats[k as usize]),
                        opts.background,
                        with_labels,
                        &mut weights,
                    );
                    out.push((px as u32, py as u32, pix));
                }
            }
            out
        })
        .collect();

    let n = width as usize * height as usize;
    let mut output = RenderOutput {
        width,
        height,
        rgb: vec![[0.0; 3]; n],
        depth: vec![0.0; n],
        alpha: vec![0.0; n],
        id_map: with_labels.then(|| LabelMap::new(width, height)),
    };
    for (x, y, p) in tiles.into_iter().flatten() {
        let idx = (y * width + x) as usize;
        output.rgb[idx] = p.rgb;
        output.depth[idx] = p.depth;
        output.alpha[idx] = p.alpha;
        if let Some(ids) = output.id_map.as_mut() {
            ids.data[idx] = p.label;
        }
    }
    output
}

/// Renders every Gaussian in `cloud`.
pub fn render(cloud: &GaussianCloud, cam: &Camera, opts: &RenderOptions) -> RenderOutput {
    let all: Vec<usize> = (0..cloud.len()).collect();
    render_subset(cloud, &all, cam, opts)
}

/// Renders only the Gaussians listed in `subset`.
pub fn render_subset(
    cloud: &GaussianCloud,
    subset: &[usize],
    cam: &Camera,
    opts: &RenderOptions,
) -> RenderOutput {
    let splats = prepare_splats(cloud, subset, cam, opts.cov_floor, None);
    rasterize(&splats, cam.width, cam.height, opts, false)
}

/// Binary mask of pixels where the subset alone reaches alpha ≥ 0.5.
pub fn render_object_mask(
    cloud: &GaussianCloud,
    subset: &[usize],
    cam: &Camera,
) -> Result<LabelMap> {
    for &i in subset {
        cloud.check_index(i)?;
    }
    Ok(render_subset(cloud, subset, cam, &RenderOptions::default()).alpha_mask(MASK_THRESHOLD))
}

/// Per-pixel label with the largest blended weight (ties to the lower
/// label); pixels with total alpha < 0.5 are 0.
pub fn render_id_map(cloud: &GaussianCloud, labels: &[u16], cam: &Camera) -> Result<LabelMap> {
    render_labeled(cloud, None, labels, cam, &RenderOptions::default())
        .map(|o| o.id_map.expect("labels requested"))
}

/// Full render with an ID map; `subset = None` renders everything.
pub fn render_labeled(
    cloud: &GaussianCloud,
    subset: Option<&[usize]>,
    labels: &[u16],
    cam: &Camera,
    opts: &RenderOptions,
) -> Result<RenderOutput> {
    if labels.len() != cloud.len() {
        return Err(Error::LengthMismatch {
            expected: cloud.len(),
            actual: labels.len(),
        });
    }
    let all: Vec<usize>;
    let indices = match subset {
        Some(s) => s,
        None => {
            all = (0..cloud.len()).collect();
            &all
        }
    };
    let splats = prepare_splats(cloud, indices, cam, opts.cov_floor, Some(labels));
    Ok(rasterize(&splats, cam.width, cam.height, opts, true))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{Gaussian, Vec3};
    use nalgebra::{Matrix4, UnitQuaternion};

    fn cam(w: u32, h: u32) -> Camera {
        Camera::new(
            0,
            w,
            h,
            50.0,
            50.0,
            (w as f64 - 1.0) / 2.0,
            (h as f64 - 1.0) / 2.0,
            Matrix4::identity(),
        )
        .unwrap()
    }

    fn blob(x: f64, y: f64, z: f64, sigma: f64, opacity: f64, rgb: [f64; 3]) -> Gaussian {
        Gaussian::with_color(
            Vec3::new(x, y, z),
            Vec3::repeat(sigma),
            UnitQuaternion::identity(),
            opacity,
            rgb,
        )
        .unwrap()
    }

    #[test]
    fn two_layer_blend() {
        // Huge Gaussians behave as constant layers near the image center.
        let cloud = GaussianCloud::new(
            vec![
                blob(0.0, 0.0, 2.0, 1e3, 0.6, [1.0, 0.0, 0.0]),
                blob(0.0, 0.0, 3.0, 1e3, 0.8, [0.0, 1.0, 0.0]),
            ],
            "t",
        );
        let out = render(&cloud, &cam(8, 8), &RenderOptions::default());
        let c = out.rgb[4 * 8 + 4];
        assert!(
            (c[0] - 0.6).abs() < 1e-6 && (c[1] - 0.32).abs() < 1e-6 && c[2].abs() < 1e-12,
            "{c:?}"
        );
        assert!((out.alpha[36] - 0.92).abs() < 1e-6);
    }

    #[test]
    fn empty_pixels_show_background() {
        let cloud = GaussianCloud::new(vec![blob(0.0, 0.0, 2.0, 0.01, 0.9, [1.0; 3])], "t");
        let opts = RenderOptions {
            background: [0.0; 3],
            ..Default::default()
        };
        let out = render(&cloud, &cam(32, 32), &opts);
        assert_eq!(out.rgb[0], [0.0; 3]);
        assert_eq!(out.alpha[0], 0.0);
        assert_eq!(out.depth[0], 0.0);
    }

    #[test]
    fn zero_opacity_gaussian_changes_nothing() {
        let base = GaussianCloud::new(vec![blob(0.0, 0.0, 2.0, 0.2, 0.7, [0.2, 0.4, 0.9])], "t");
        let mut more = base.clone();
        more.push(blob(0.05, 0.0, 1.5, 0.3, 0.0, [1.0, 0.0, 0.0]));
        let a = render(&base, &cam(24, 24), &RenderOptions::default());
        let b = render(&more, &cam(24, 24), &RenderOptions::default());
        assert_eq!(a, b);
    }

    #[test]
    fn object_mask_edge_cases() {
        let cloud = GaussianCloud::new(vec![blob(0.0, 0.0, 2.0, 1e3, 0.99, [1.0; 3])], "t");
        let c = cam(16, 16);
        assert_eq!(render_object_mask(&cloud, &[], &c).unwrap().count(1), 0);
        assert_eq!(render_object_mask(&cloud, &[0], &c).unwrap().count(1), 256);
        assert!(render_object_mask(&cloud, &[3], &c).is_err());
    }

    #[test]
    fn id_map_separated_objects() {
        let cloud = GaussianCloud::new(
            vec![
                blob(-0.3, 0.0, 2.0, 0.05, 0.99, [1.0; 3]),
                blob(0.3, 0.0, 2.0, 0.05, 0.99, [1.0; 3]),
            ],
            "t",
        );
        let c = cam(48, 16);
        let ids = render_id_map(&cloud, &[1, 2], &c).unwrap();
        assert!(ids.count(1) > 0 && ids.count(2) > 0);
        for y in 0..16 {
            for x in 0..48 {
                match ids.get(x, y) {
                    1 => assert!(x < 24),
                    2 => assert!(x >= 24),
                    _ => {}
                }
            }
        }
        assert!(render_id_map(&cloud, &[1], &c).is_err());
    }

    #[test]
    fn single_label_covers_only_opaque_pixels() {
        let cloud = GaussianCloud::new(vec![blob(0.0, 0.0, 2.0, 0.05, 0.99, [1.0; 3])], "t");
        let c = cam(32, 32);
        let ids = render_id_map(&cloud, &[7], &c).unwrap();
        let out = render(&cloud, &c, &RenderOptions::default());
        for (id, a) in ids.data.iter().zip(&out.alpha) {
            assert_eq!(*id == 7, *a >= 0.5);
        }
        assert!(ids.count(7) > 0);
    }
}

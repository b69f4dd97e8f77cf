//! Scene builders and brute-force references shared by the integration tests.
#![allow(dead_code)]

use std::ops::Range;

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Quaternion, UnitQuaternion, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use splatseg::camera::{Camera, Vec2, COV2D_FLOOR, Z_NEAR};
use splatseg::gaussian::{Gaussian, GaussianCloud, Vec3};
use splatseg::render::{ALPHA_MAX, ALPHA_MIN, TRANSMITTANCE_MIN};

pub const SH_C0: f64 = 0.28209479177387814;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_rotation(rng: &mut ChaCha8Rng) -> UnitQuaternion<f64> {
    loop {
        let v = Vector4::from_fn(|_, _| rng.random_range(-1.0..1.0));
        if v.norm() > 0.1 {
            return UnitQuaternion::from_quaternion(Quaternion::from_vector(v));
        }
    }
}

pub fn random_gaussian(rng: &mut ChaCha8Rng, extent: f64, scale: Range<f64>) -> Gaussian {
    let pos = Vec3::from_fn(|_, _| rng.random_range(-extent..extent));
    let s = Vec3::from_fn(|_, _| rng.random_range(scale.clone()));
    let rot = random_rotation(rng);
    let opacity = rng.random_range(0.05..1.0);
    let rgb = [rng.random(), rng.random(), rng.random()];
    Gaussian::with_color(pos, s, rot, opacity, rgb).unwrap()
}

pub fn random_cloud(rng: &mut ChaCha8Rng, n: usize, extent: f64) -> GaussianCloud {
    let gs = (0..n).map(|_| random_gaussian(rng, extent, 0.02..0.4)).collect();
    GaussianCloud::new(gs, "random")
}

/// Camera at a random direction and distance from the origin, looking at it.
pub fn random_camera(rng: &mut ChaCha8Rng, id: u32, w: u32, h: u32, dist: Range<f64>) -> Camera {
    loop {
        let dir = Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        if dir.norm() < 0.2 {
            continue;
        }
        let eye = dir.normalize() * rng.random_range(dist.clone());
        let focal = rng.random_range(40.0..120.0);
        if let Ok(cam) = Camera::look_at(id, w, h, focal, eye, Vec3::zeros(), Vec3::z()) {
            return cam;
        }
    }
}

/// Linearized world-to-pixel map built from the 4×4 view matrix alone.
pub fn linear_map(cam: &Camera, mu: &Vec3) -> Matrix2x3<f64> {
    let m = cam.world_to_camera();
    let r: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into_owned();
    let t = r * mu + m.fixed_view::<3, 1>(0, 3);
    let j = Matrix2x3::new(
        cam.fx / t.z,
        0.0,
        -cam.fx * t.x / (t.z * t.z),
        0.0,
        cam.fy / t.z,
        -cam.fy * t.y / (t.z * t.z),
    );
    j * r
}

pub fn project(cam: &Camera, p: &Vec3) -> Option<Vec2> {
    let c = cam.world_to_camera() * p.push(1.0);
    (c.z > Z_NEAR).then(|| Vec2::new(cam.fx * c.x / c.z + cam.cx, cam.fy * c.y / c.z + cam.cy))
}

pub struct Reference {
    pub rgb: Vec<[f64; 3]>,
    pub alpha: Vec<f64>,
    pub depth: Vec<f64>,
    /// Label with the largest accumulated weight, 0 where alpha < 0.5.
    pub ids: Vec<u16>,
}

/// Per-pixel blending over every Gaussian with no tiling or culling.
pub fn render_reference(cloud: &GaussianCloud, labels: &[u16], cam: &Camera) -> Reference {
    let w2c = cam.world_to_camera();
    let mut splats = Vec::new();
    for (i, g) in cloud.iter().enumerate() {
        let c = w2c * g.position.push(1.0);
        if c.z <= Z_NEAR || g.opacity <= 0.0 {
            continue;
        }
        let m = linear_map(cam, &g.position);
        let cov = m * g.covariance() * m.transpose() + Matrix2::identity() * COV2D_FLOOR;
        let Some(inv) = cov.try_inverse() else { continue };
        let center = Vec2::new(cam.fx * c.x / c.z + cam.cx, cam.fy * c.y / c.z + cam.cy);
        let rgb = [0, 1, 2].map(|k| (0.5 + g.sh.coeffs()[0][k] * SH_C0).clamp(0.0, 1.0));
        splats.push((c.z, i, center, inv, g.opacity, rgb));
    }
    splats.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let n = (cam.width * cam.height) as usize;
    let mut out = Reference {
        rgb: vec![[0.0; 3]; n],
        alpha: vec![0.0; n],
        depth: vec![0.0; n],
        ids: vec![0; n],
    };
    for y in 0..cam.height {
        for x in 0..cam.width {
            let p = Vec2::new(x as f64, y as f64);
            let (mut t, mut col, mut dsum, mut wsum) = (1.0, [0.0; 3], 0.0, 0.0);
            let mut per_label = std::collections::BTreeMap::<u16, f64>::new();
            for (z, i, c, inv, o, color) in &splats {
                let d = p - c;
                let m2 = (d.transpose() * inv * d)[(0, 0)];
                if m2 > 9.0 {
                    continue;
                }
                let a = (o * (-0.5 * m2).exp()).min(ALPHA_MAX);
                if a < ALPHA_MIN {
                    continue;
                }
                let wgt = a * t;
                for k in 0..3 {
                    col[k] += wgt * color[k];
                }
                dsum += wgt * z;
                wsum += wgt;
                *per_label.entry(labels[*i]).or_default() += wgt;
                t *= 1.0 - a;
                if t < TRANSMITTANCE_MIN {
                    break;
                }
            }
            let idx = (y * cam.width + x) as usize;
            out.rgb[idx] = col;
            out.alpha[idx] = 1.0 - t;
            out.depth[idx] = if wsum > 0.0 { dsum / wsum } else { 0.0 };
            if 1.0 - t >= 0.5 {
                let best = per_label.values().copied().fold(f64::MIN, f64::max);
                out.ids[idx] = *per_label.iter().find(|(_, &v)| v == best).unwrap().0;
            }
        }
    }
    out
}

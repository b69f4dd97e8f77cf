//! Boundary Gaussians and the in-mask fraction of their long axis.

use rayon::prelude::*;

use crate::camera::{project_gaussian, Camera, Vec2, Z_NEAR};
use crate::gaussian::GaussianCloud;
use crate::image_io::LabelMap;

/// Smallest accepted split ratio; splits at λ ≤ this (or ≥ 1 − this) are skipped.
pub const LAMBDA_MIN: f64 = 0.02;
/// Sampling step along the long axis, in pixels.
pub const LAMBDA_STEP: f64 = 0.5;

/// Which long-axis endpoint lies inside the mask.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Endpoint {
    /// The lexicographically smaller endpoint.
    A,
    B,
}

/// Membership of both endpoints for a Gaussian whose center is in the mask.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Straddle {
    Inside,
    /// Exactly one endpoint outside; the tag names the inside one.
    OneOut(Endpoint),
    BothOut,
}

/// Membership of `p` in `label` of `mask`; off-image points are outside.
#[inline]
pub fn in_mask(mask: &LabelMap, label: u16, p: &Vec2) -> bool {
    mask.at_point(p) == Some(label)
}

/// Classifies endpoints `(a, b)` against `inside`.
pub fn straddle(a: &Vec2, b: &Vec2, inside: impl Fn(&Vec2) -> bool) -> Straddle {
    match (inside(a), inside(b)) {
        (true, true) => Straddle::Inside,
        (true, false) => Straddle::OneOut(Endpoint::A),
        (false, true) => Straddle::OneOut(Endpoint::B),
        (false, false) => Straddle::BothOut,
    }
}

/// Gaussians whose center pixel carries a foreground label and exactly one
/// of whose long-axis endpoints does not carry that same label. Uses the
/// unfloored screen-space covariance.
pub fn find_boundary_gaussians(
    cloud: &GaussianCloud,
    cam: &Camera,
    mask: &LabelMap,
) -> Vec<(usize, Endpoint)> {
    (0..cloud.len())
        .into_par_iter()
        .filter_map(|i| match classify(cloud, cam, mask, i)? {
            (_, Straddle::OneOut(tag)) => Some((i, tag)),
            _ => None,
        })
        .collect()
}

/// Center label (≥ 1) and endpoint membership of Gaussian `i`, or `None`
/// when its center is behind the camera, off-image, or on background.
pub fn classify(
    cloud: &GaussianCloud,
    cam: &Camera,
    mask: &LabelMap,
    i: usize,
) -> Option<(u16, Straddle)> {
    let p = project_gaussian(cam, &cloud[i], 0.0);
    if !p.visible || p.depth <= Z_NEAR {
        return None;
    }
    let label = mask.at_point(&p.center2d).filter(|&l| l != 0)?;
    let (a, b) = p.long_axis_endpoints;
    Some((label, straddle(&a, &b, |q| in_mask(mask, label, q))))
}

/// Unclamped fraction `|O* − A*| / |B* − A*|` where O* is the first exit
/// from `inside` walking from `a` to `b`. `None` if the walk never leaves.
pub fn exit_fraction(a: &Vec2, b: &Vec2, inside: impl Fn(&Vec2) -> bool) -> Option<f64> {
    let len = (b - a).norm();
    if len == 0.0 {
        return None;
    }
    let dir = (b - a) / len;
    let steps = (len / LAMBDA_STEP).ceil() as usize;
    let mut last_in = 0.0;
    for k in 1..=steps {
        let t = (k as f64 * LAMBDA_STEP).min(len);
        if !inside(&(a + dir * t)) {
            return Some(0.5 * (last_in + t) / len);
        }
        last_in = t;
    }
    None
}

/// Split ratio for in-mask endpoint `a` and out-of-mask endpoint `b`,
/// clamped to `[LAMBDA_MIN, 1 − LAMBDA_MIN]`.
pub fn compute_lambda2d_with(a: &Vec2, b: &Vec2, inside: impl Fn(&Vec2) -> bool) -> f64 {
    exit_fraction(a, b, inside)
        .unwrap_or(1.0 - LAMBDA_MIN)
        .clamp(LAMBDA_MIN, 1.0 - LAMBDA_MIN)
}

/// [`compute_lambda2d_with`] against `label` in a label image.
pub fn compute_lambda2d(a: &Vec2, b: &Vec2, mask: &LabelMap, label: u16) -> f64 {
    compute_lambda2d_with(a, b, |p| in_mask(mask, label, p))
}

/// True when `lambda` leaves both children longer than the sliver limit.
pub fn lambda_splittable(lambda: f64, lambda_min: f64) -> bool {
    lambda > lambda_min && lambda < 1.0 - lambda_min
}

#[cfg(test)]
mod tests {
    use super::*;

    fn half_plane(w: u32, h: u32, x_max: u32) -> LabelMap {
        LabelMap::from_fn(w, h, |x, _| u16::from(x <= x_max))
    }

    #[test]
    fn half_plane_example() {
        let mask = half_plane(32, 32, 12);
        let (a, b) = (Vec2::new(4.0, 10.0), Vec2::new(16.0, 10.0));
        assert_eq!(
            straddle(&a, &b, |p| in_mask(&mask, 1, p)),
            Straddle::OneOut(Endpoint::A)
        );
        let lambda = compute_lambda2d(&a, &b, &mask, 1);
        assert!((lambda - 2.0 / 3.0).abs() <= 0.5 / 12.0, "{lambda}");
    }

    #[test]
    fn symmetric_split() {
        let mask = LabelMap::from_fn(20, 4, |x, _| u16::from(x <= 5));
        let lambda = compute_lambda2d(&Vec2::new(0.0, 0.0), &Vec2::new(10.0, 0.0), &mask, 1);
        assert!((lambda - 0.5).abs() <= 0.05, "{lambda}");
    }

    #[test]
    fn first_exit_wins_and_no_exit_saturates() {
        // In, out, in again: the walk stops at the first gap.
        let inside = |p: &Vec2| p.x < 3.0 || p.x > 6.0;
        let lambda = compute_lambda2d_with(&Vec2::new(0.0, 0.0), &Vec2::new(10.0, 0.0), inside);
        assert!((lambda - 0.3).abs() <= 0.05);
        let all = compute_lambda2d_with(&Vec2::new(0.0, 0.0), &Vec2::new(10.0, 0.0), |_| true);
        assert_eq!(all, 1.0 - LAMBDA_MIN);
        let none = compute_lambda2d_with(&Vec2::new(0.0, 0.0), &Vec2::new(10.0, 0.0), |_| false);
        assert!((none - 0.025).abs() < 1e-12);
    }

    #[test]
    fn off_image_is_outside() {
        let mask = LabelMap::from_fn(8, 8, |_, _| 1);
        assert!(!in_mask(&mask, 1, &Vec2::new(-1.0, 2.0)));
        assert!(!in_mask(&mask, 2, &Vec2::new(1.0, 2.0)));
    }
}

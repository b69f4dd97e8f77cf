//! View-dependent color from real spherical harmonics, degrees 0 through 3.
//!
//! Basis signs and constants follow the convention used by the reference
//! splatting renderer, so coefficients read from a trained scene evaluate to
//! the colors it was trained against.

use nalgebra::{DMatrix, Matrix3};

use crate::gaussian::Vec3;

pub const SH_C0: f64 = 0.282_094_791_773_878_14;
pub const SH_C1: f64 = 0.488_602_511_902_919_9;
pub const SH_C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
pub const SH_C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

pub const MAX_DEGREE: u8 = 3;

pub const fn coeff_count(degree: u8) -> usize {
    let n = degree as usize + 1;
    n * n
}

/// SH coefficients, one RGB triple per basis function.
#[derive(Clone, Debug, PartialEq)]
pub struct ShCoeffs {
    degree: u8,
    coeffs: Vec<[f64; 3]>,
}

impl ShCoeffs {
    pub fn zeros(degree: u8) -> Self {
        assert!(degree <= MAX_DEGREE, "SH degree {degree} > {MAX_DEGREE}");
        ShCoeffs {
            degree,
            coeffs: vec![[0.0; 3]; coeff_count(degree)],
        }
    }

    /// Degree-0 coefficients that evaluate to `rgb` (before clamping).
    pub fn from_rgb(rgb: [f64; 3]) -> Self {
        ShCoeffs {
            degree: 0,
            coeffs: vec![rgb.map(|c| (c - 0.5) / SH_C0)],
        }
    }

    /// Wraps raw coefficients; the length must be `(degree + 1)²` for some
    /// degree up to 3.
    pub fn from_coeffs(coeffs: Vec<[f64; 3]>) -> Option<Self> {
        let degree = (0..=MAX_DEGREE).find(|&d| coeff_count(d) == coeffs.len())?;
        Some(ShCoeffs { degree, coeffs })
    }

    pub fn degree(&self) -> u8 {
        self.degree
    }

    pub fn coeffs(&self) -> &[[f64; 3]] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [[f64; 3]] {
        &mut self.coeffs
    }

    /// Pads with zeros up to `degree`.
    pub fn with_degree(&self, degree: u8) -> Self {
        let mut out = ShCoeffs::zeros(degree.max(self.degree));
        out.coeffs[..self.coeffs.len()].copy_from_slice(&self.coeffs);
        out
    }

    /// Rotates the represented color function by `rot`, so that the new
    /// coefficients seen from `rot·d` give the old color seen from `d`.
    pub fn rotate(&mut self, rot: &Matrix3<f64>) {
        if self.degree == 0 {
            return;
        }
        let dirs = sample_directions();
        let inv = rot.transpose();
        for band in 1..=self.degree as usize {
            let lo = band * band;
            let width = 2 * band + 1;
            let mut a = DMatrix::zeros(dirs.len(), width);
            let mut b = DMatrix::zeros(dirs.len(), width);
            for (row, d) in dirs.iter().enumerate() {
                let ya = basis(d);
                let yb = basis(&(inv * d));
                for col in 0..width {
                    a[(row, col)] = ya[lo + col];
                    b[(row, col)] = yb[lo + col];
                }
            }
            // Y(R⁻¹d) = M Y(d) for every d, i.e. B = A Mᵀ; new coefficients are Mᵀc.
            let mt = a
                .svd(true, true)
                .solve(&b, 1e-12)
                .expect("SVD solve on a full-rank basis sample");
            let old: Vec<[f64; 3]> = self.coeffs[lo..lo + width].to_vec();
            for i in 0..width {
                let mut acc = [0.0; 3];
                for (j, c) in old.iter().enumerate() {
                    for ch in 0..3 {
                        acc[ch] += mt[(i, j)] * c[ch];
                    }
                }
                self.coeffs[lo + i] = acc;
            }
        }
    }
}

/// Evaluates all 16 basis functions (degree ≤ 3) at a unit direction.
pub fn basis(dir: &Vec3) -> [f64; 16] {
    let (x, y, z) = (dir.x, dir.y, dir.z);
    let (xx, yy, zz) = (x * x, y * y, z * z);
    let (xy, yz, xz) = (x * y, y * z, x * z);
    [
        SH_C0,
        -SH_C1 * y,
        SH_C1 * z,
        -SH_C1 * x,
        SH_C2[0] * xy,
        SH_C2[1] * yz,
        SH_C2[2] * (2.0 * zz - xx - yy),
        SH_C2[3] * xz,
        SH_C2[4] * (xx - yy),
        SH_C3[0] * y * (3.0 * xx - yy),
        SH_C3[1] * xy * z,
        SH_C3[2] * y * (4.0 * zz - xx - yy),
        SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy),
        SH_C3[4] * x * (4.0 * zz - xx - yy),
        SH_C3[5] * z * (xx - yy),
        SH_C3[6] * x * (xx - 3.0 * yy),
    ]
}

/// Color of `sh` seen along the unit direction `view_dir`, clamped to [0, 1].
pub fn eval_sh(sh: &ShCoeffs, view_dir: &Vec3) -> [f64; 3] {
    let y = basis(view_dir);
    let mut rgb = [0.5; 3];
    for (k, c) in sh.coeffs().iter().enumerate() {
        for ch in 0..3 {
            rgb[ch] += y[k] * c[ch];
        }
    }
    rgb.map(|v| v.clamp(0.0, 1.0))
}

// Fibonacci sphere; 32 points is comfortably over-determined for 7 unknowns per band.
fn sample_directions() -> Vec<Vec3> {
    let n = 32;
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            Vec3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}

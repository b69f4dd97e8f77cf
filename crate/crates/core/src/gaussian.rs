//! Scene representation: individual anisotropic Gaussians and the cloud that owns them.

use nalgebra::{Matrix3, Quaternion, SymmetricEigen, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sh::ShCoeffs;

pub type Vec3 = Vector3<f64>;

/// Decomposition ancestry of a Gaussian created during segmentation.
///
/// Lineage only lives for one pipeline run; it is not serialized to PLY.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lineage {
    pub parent: usize,
    pub generation: u8,
}

/// A single 3D Gaussian primitive.
///
/// `scale` holds per-axis standard deviations in the Gaussian's local frame
/// (the columns of the rotation matrix), so the covariance is
/// `R diag(scale²) Rᵀ`.
#[derive(Clone, Debug, PartialEq)]
pub struct Gaussian {
    pub position: Vec3,
    pub scale: Vec3,
    pub rotation: UnitQuaternion<f64>,
    pub opacity: f64,
    pub sh: ShCoeffs,
    pub lineage: Option<Lineage>,
}

impl Gaussian {
    /// Builds a Gaussian, normalizing the quaternion and checking the
    /// scale/opacity invariants.
    pub fn new(
        position: Vec3,
        scale: Vec3,
        rotation: Quaternion<f64>,
        opacity: f64,
        sh: ShCoeffs,
    ) -> Result<Self> {
        let norm = rotation.norm();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::Param("rotation quaternion has zero norm".into()));
        }
        let g = Gaussian {
            position,
            scale,
            rotation: UnitQuaternion::from_quaternion(rotation),
            opacity,
            sh,
            lineage: None,
        };
        g.validate()?;
        Ok(g)
    }

    /// Convenience constructor for a flat-colored Gaussian (degree-0 SH).
    pub fn with_color(
        position: Vec3,
        scale: Vec3,
        rotation: UnitQuaternion<f64>,
        opacity: f64,
        rgb: [f64; 3],
    ) -> Result<Self> {
        Self::new(
            position,
            scale,
            rotation.into_inner(),
            opacity,
            ShCoeffs::from_rgb(rgb),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !self.position.iter().all(|v| v.is_finite()) {
            return Err(Error::Param("non-finite position".into()));
        }
        if !self.scale.iter().all(|&s| s.is_finite() && s > 0.0) {
            return Err(Error::Param(format!(
                "scale components must be positive, got {:?}",
                self.scale.as_slice()
            )));
        }
        if !(0.0..=1.0).contains(&self.opacity) {
            return Err(Error::Param(format!(
                "opacity {} outside [0, 1]",
                self.opacity
            )));
        }
        if (self.rotation.norm() - 1.0).abs() > 1e-6 {
            return Err(Error::Param("rotation quaternion is not unit".into()));
        }
        Ok(())
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    /// Unit direction of local axis `k` in world space.
    pub fn axis(&self, k: usize) -> Vec3 {
        self.rotation_matrix().column(k).into_owned()
    }

    pub fn covariance(&self) -> Matrix3<f64> {
        let r = self.rotation_matrix();
        let s2 = Matrix3::from_diagonal(&self.scale.component_mul(&self.scale));
        let cov = r * s2 * r.transpose();
        (cov + cov.transpose()) * 0.5
    }

    /// Eigenvalues of the covariance, ascending.
    pub fn covariance_eigenvalues(&self) -> [f64; 3] {
        let eig = SymmetricEigen::new(self.covariance());
        let mut ev = [eig.eigenvalues[0], eig.eigenvalues[1], eig.eigenvalues[2]];
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn generation(&self) -> u8 {
        self.lineage.map_or(0, |l| l.generation)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }

    pub fn center(&self) -> Vec3 {
        Vec3::new(
            0.5 * (self.min[0] + self.max[0]),
            0.5 * (self.min[1] + self.max[1]),
            0.5 * (self.min[2] + self.max[2]),
        )
    }
}

/// Ordered, append-only collection of Gaussians.
///
/// Indices are stable for the lifetime of a pipeline run: decomposition
/// appends children at the end and never reorders existing entries.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GaussianCloud {
    pub gaussians: Vec<Gaussian>,
    pub source: String,
}

impl GaussianCloud {
    pub fn new(gaussians: Vec<Gaussian>, source: impl Into<String>) -> Self {
        GaussianCloud {
            gaussians,
            source: source.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Gaussian> {
        self.gaussians.iter()
    }

    /// Appends a Gaussian and returns its index.
    pub fn push(&mut self, g: Gaussian) -> usize {
        self.gaussians.push(g);
        self.gaussians.len() - 1
    }

    pub fn bounds(&self) -> Option<Aabb> {
        let first = self.gaussians.first()?;
        let mut min = [first.position.x, first.position.y, first.position.z];
        let mut max = min;
        for g in &self.gaussians[1..] {
            for k in 0..3 {
                min[k] = min[k].min(g.position[k]);
                max[k] = max[k].max(g.position[k]);
            }
        }
        Some(Aabb { min, max })
    }

    pub fn check_index(&self, index: usize) -> Result<()> {
        if index >= self.len() {
            Err(Error::IndexOutOfRange {
                index,
                len: self.len(),
            })
        } else {
            Ok(())
        }
    }

    /// Copies the selected Gaussians (in the given order) into a new cloud.
    pub fn subset(&self, indices: &[usize]) -> Result<GaussianCloud> {
        let mut out = Vec::with_capacity(indices.len());
        for &i in indices {
            self.check_index(i)?;
            out.push(self.gaussians[i].clone());
        }
        Ok(GaussianCloud::new(out, self.source.clone()))
    }

    /// Highest SH degree over all Gaussians.
    pub fn sh_degree(&self) -> u8 {
        self.gaussians
            .iter()
            .map(|g| g.sh.degree())
            .max()
            .unwrap_or(0)
    }
}

impl std::ops::Index<usize> for GaussianCloud {
    type Output = Gaussian;

    fn index(&self, index: usize) -> &Gaussian {
        &self.gaussians[index]
    }
}

//! Rigid edits of a segmented subset: removal, translation, rotation about a pivot.

use std::collections::BTreeSet;

use nalgebra::UnitQuaternion;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{GaussianCloud, Vec3};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EditTransform {
    Remove,
    Translate {
        translation: [f64; 3],
    },
    /// `rotation` is `[w, x, y, z]`; it is normalized on use.
    Rotate {
        rotation: [f64; 4],
        pivot: [f64; 3],
    },
}

impl EditTransform {
    pub fn rotate(rotation: UnitQuaternion<f64>, pivot: Vec3) -> Self {
        let q = rotation.into_inner();
        EditTransform::Rotate {
            rotation: [q.w, q.i, q.j, q.k],
            pivot: [pivot.x, pivot.y, pivot.z],
        }
    }
}

/// Whether degree ≥ 1 SH coefficients follow a rotation edit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShRotation {
    /// Leave view-dependent coefficients untouched and log a warning.
    #[default]
    Keep,
    Rotate,
}

#[derive(Clone, Debug, Default)]
pub struct EditReport {
    pub warnings: Vec<String>,
}

/// Applies `t` to the Gaussians in `subset`; everything else is copied bitwise.
pub fn apply_edit(
    cloud: &GaussianCloud,
    subset: &[usize],
    t: &EditTransform,
    sh_mode: ShRotation,
) -> Result<(GaussianCloud, EditReport)> {
    let mut selected = BTreeSet::new();
    for &i in subset {
        cloud.check_index(i)?;
        selected.insert(i);
    }
    let mut report = EditReport::default();

    let out = match t {
        EditTransform::Remove => {
            let kept = cloud
                .gaussians
                .iter()
                .enumerate()
                .filter(|(i, _)| !selected.contains(i))
                .map(|(_, g)| g.clone())
                .collect();
            GaussianCloud::new(kept, cloud.source.clone())
        }
        EditTransform::Translate { translation } => {
            let delta = Vec3::from(*translation);
            let mut out = cloud.clone();
            for &i in &selected {
                out.gaussians[i].position += delta;
            }
            out
        }
        EditTransform::Rotate { rotation, pivot } => {
            let q = nalgebra::Quaternion::new(rotation[0], rotation[1], rotation[2], rotation[3]);
            if q.norm() == 0.0 {
                return Err(Error::Param("rotation quaternion has zero norm".into()));
            }
            let q = UnitQuaternion::from_quaternion(q);
            let pivot = Vec3::from(*pivot);
            let rot = q.to_rotation_matrix().into_inner();
            let mut out = cloud.clone();
            let mut view_dependent = 0usize;
            for &i in &selected {
                let g = &mut out.gaussians[i];
                g.position = pivot + q * (g.position - pivot);
                g.rotation = q * g.rotation;
                if g.sh.degree() > 0 {
                    match sh_mode {
                        ShRotation::Rotate => g.sh.rotate(&rot),
                        ShRotation::Keep => view_dependent += 1,
                    }
                }
            }
            if view_dependent > 0 {
                let msg = format!(
                    "{view_dependent} rotated gaussians keep unrotated view-dependent SH coefficients"
                );
                log::warn!("{msg}");
                report.warnings.push(msg);
            }
            out
        }
    };
    Ok((out, report))
}

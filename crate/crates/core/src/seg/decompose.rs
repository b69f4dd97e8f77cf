//! Splitting a Gaussian along one principal axis.
//!
//! `s` below is the full long-axis length, `6σ` of the split axis. The kept
//! child covers the segment from the in-mask endpoint `A` to the cut point
//! `O`, so its length is `λs` and its center `μ + ½(s − λs)e` is the midpoint
//! of `AO`. The discarded child covers `OB`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{Gaussian, Lineage, Vec3};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionRecord {
    pub parent: usize,
    pub kept: usize,
    pub discarded: usize,
    /// Camera id of the view whose mask caused the split.
    pub view: u32,
    pub lambda: f64,
    pub axis_dir: [f64; 3],
    pub generation: u8,
}

/// Principal axis of `g` most aligned with `e`.
pub fn split_axis(g: &Gaussian, e: &Vec3) -> usize {
    let r = g.rotation_matrix();
    (0..3)
        .max_by(|&a, &b| {
            r.column(a)
                .dot(e)
                .abs()
                .total_cmp(&r.column(b).dot(e).abs())
        })
        .expect("three axes")
}

/// Splits `g` at ratio `lambda` along the principal axis closest to `e`,
/// the unit direction from the center toward the in-mask endpoint. Returns
/// `(kept, discarded)`; both record `parent` in their lineage.
pub fn decompose(
    g: &Gaussian,
    parent: usize,
    lambda: f64,
    e: &Vec3,
) -> Result<(Gaussian, Gaussian)> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::Param(format!(
            "split ratio must lie in (0, 1), got {lambda}"
        )));
    }
    let norm = e.norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::Param("split direction must be nonzero".into()));
    }
    let k = split_axis(g, e);
    // Snap e onto the axis so both children stay on the parent's axis line.
    let axis: Vec3 = g.rotation_matrix().column(k).into_owned();
    let e = if axis.dot(e) >= 0.0 { axis } else { -axis };
    let s = 6.0 * g.scale[k];
    let lineage = Some(Lineage {
        parent,
        generation: g.generation().saturating_add(1),
    });

    let mut kept = g.clone();
    kept.position = g.position + 0.5 * (s - lambda * s) * e;
    kept.scale[k] = g.scale[k] * lambda;
    kept.lineage = lineage;

    let mut discarded = g.clone();
    discarded.position = g.position - 0.5 * lambda * s * e;
    discarded.scale[k] = g.scale[k] * (1.0 - lambda);
    discarded.lineage = lineage;
    Ok((kept, discarded))
}

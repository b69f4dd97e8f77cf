//! The per-Gaussian, per-view label matrix and center-pixel label assignment.

use rayon::prelude::*;

use crate::camera::{Camera, Z_NEAR};
use crate::error::{Error, Result};
use crate::gaussian::GaussianCloud;
use crate::image_io::LabelMap;

/// Marks a (Gaussian, view) cell with no observation.
pub const UNOBSERVED: u16 = u16::MAX;

/// Row-major label storage: one row per Gaussian, one column per view slot.
///
/// Columns are view slots in processing order; `view_ids` maps a slot to its
/// camera id. A cell holds at most one observation by construction.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelMatrix {
    views: usize,
    cells: Vec<u16>,
    /// Labels each Gaussian was cut away from by decomposition. Observations
    /// carrying one of these labels are ignored when voting.
    cut: Vec<Vec<u16>>,
    /// Rows excluded from voting (decomposed parents, deleted Gaussians).
    retired: Vec<bool>,
    pub view_ids: Vec<u32>,
    pub num_objects: u16,
    /// Binary mode stores every nonzero mask value as 1.
    pub binary: bool,
}

impl LabelMatrix {
    pub fn new(gaussians: usize, view_ids: Vec<u32>, num_objects: u16) -> Self {
        let views = view_ids.len();
        LabelMatrix {
            views,
            cells: vec![UNOBSERVED; gaussians * views],
            cut: vec![Vec::new(); gaussians],
            retired: vec![false; gaussians],
            view_ids,
            num_objects: num_objects.max(1),
            binary: num_objects <= 1,
        }
    }

    pub fn len(&self) -> usize {
        self.retired.len()
    }

    pub fn is_empty(&self) -> bool {
        self.retired.is_empty()
    }

    pub fn num_views(&self) -> usize {
        self.views
    }

    pub fn row(&self, i: usize) -> &[u16] {
        &self.cells[i * self.views..(i + 1) * self.views]
    }

    pub fn get(&self, i: usize, slot: usize) -> Option<u16> {
        Some(self.row(i)[slot]).filter(|&v| v != UNOBSERVED)
    }

    /// `(slot, label)` pairs in slot order.
    pub fn observations(&self, i: usize) -> impl Iterator<Item = (usize, u16)> + '_ {
        self.row(i)
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != UNOBSERVED)
            .map(|(s, &v)| (s, v))
    }

    pub fn observed_count(&self, i: usize) -> usize {
        self.row(i).iter().filter(|&&v| v != UNOBSERVED).count()
    }

    /// Observations that count toward voting.
    pub fn votes(&self, i: usize) -> impl Iterator<Item = u16> + '_ {
        let cut = &self.cut[i];
        self.row(i)
            .iter()
            .copied()
            .filter(move |v| *v != UNOBSERVED && !cut.contains(v))
    }

    pub fn cut_labels(&self, i: usize) -> &[u16] {
        &self.cut[i]
    }

    pub fn is_retired(&self, i: usize) -> bool {
        self.retired[i]
    }

    pub fn retire(&mut self, i: usize) {
        self.retired[i] = true;
    }

    pub fn set(&mut self, i: usize, slot: usize, label: u16) {
        let v = if self.binary {
            u16::from(label != 0)
        } else {
            label
        };
        self.cells[i * self.views + slot] = v;
    }

    /// Appends a row with no observations; returns its index.
    pub fn push_row(&mut self) -> usize {
        self.cells
            .extend(std::iter::repeat_n(UNOBSERVED, self.views));
        self.cut.push(Vec::new());
        self.retired.push(false);
        self.len() - 1
    }

    /// Appends a row copying `parent`'s observations and cut labels, plus
    /// `extra_cut` if given.
    pub fn push_child(&mut self, parent: usize, extra_cut: Option<u16>) -> usize {
        let start = parent * self.views;
        self.cells.extend_from_within(start..start + self.views);
        let mut cut = self.cut[parent].clone();
        if let Some(l) = extra_cut.filter(|l| !cut.contains(l)) {
            cut.push(l);
        }
        self.cut.push(cut);
        self.retired.push(false);
        self.len() - 1
    }
}

/// Label at the rounded projected center, or `None` when the center is
/// behind the camera or outside the image.
#[inline]
pub fn center_label(
    cam: &Camera,
    mask: &LabelMap,
    position: &crate::gaussian::Vec3,
) -> Option<u16> {
    let (px, depth) = cam.project_center(position);
    if depth <= Z_NEAR {
        return None;
    }
    cam.pixel_of(&px).map(|(u, v)| mask.get(u, v))
}

/// Writes view slot `slot` for every Gaussian in the cloud.
pub fn assign_view_labels(
    cloud: &GaussianCloud,
    cam: &Camera,
    mask: &LabelMap,
    labels: &mut LabelMatrix,
    slot: usize,
) -> Result<()> {
    assign_view_labels_where(cloud, cam, mask, labels, slot, |_| true)
}

/// As [`assign_view_labels`], restricted to Gaussians accepted by `include`.
pub fn assign_view_labels_where(
    cloud: &GaussianCloud,
    cam: &Camera,
    mask: &LabelMap,
    labels: &mut LabelMatrix,
    slot: usize,
    include: impl Fn(usize) -> bool + Sync,
) -> Result<()> {
    mask.check_dims(cam.width, cam.height)?;
    if labels.len() != cloud.len() {
        return Err(Error::LengthMismatch {
            expected: cloud.len(),
            actual: labels.len(),
        });
    }
    if slot >= labels.num_views() {
        return Err(Error::IndexOutOfRange {
            index: slot,
            len: labels.num_views(),
        });
    }
    let observed: Vec<Option<u16>> = (0..cloud.len())
        .into_par_iter()
        .map(|i| {
            if include(i) {
                center_label(cam, mask, &cloud[i].position)
            } else {
                None
            }
        })
        .collect();
    for (i, l) in observed.into_iter().enumerate() {
        if let Some(l) = l {
            labels.set(i, slot, l);
        }
    }
    Ok(())
}

//! Whole-mask and boundary-band agreement between a predicted and a
//! ground-truth binary mask.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image_io::LabelMap;

pub const DEFAULT_BAND: u32 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskMetrics {
    pub iou: f64,
    pub acc: f64,
    pub boundary_iou: f64,
    pub boundary_ap: f64,
    pub boundary_f1: f64,
    pub band_width: u32,
    /// True when AP is the precision at one threshold because no soft
    /// scores were available.
    pub ap_single_point: bool,
}

/// Foreground pixels with a background pixel among their 8 neighbors. The
/// image border is not a boundary.
pub fn boundary_pixels(gt: &LabelMap) -> Vec<bool> {
    let (w, h) = (gt.width as i64, gt.height as i64);
    let fg = |x: i64, y: i64| x < 0 || y < 0 || x >= w || y >= h || gt.get(x as u32, y as u32) != 0;
    let mut out = vec![false; gt.data.len()];
    for y in 0..h {
        for x in 0..w {
            if !fg(x, y) {
                continue;
            }
            let edge =
                (-1..=1).any(|dy| (-1..=1).any(|dx| (dx, dy) != (0, 0) && !fg(x + dx, y + dy)));
            out[(y * w + x) as usize] = edge;
        }
    }
    out
}

/// Pixels within Chebyshev distance `band` of the ground-truth boundary.
pub fn boundary_band(gt: &LabelMap, band: u32) -> Vec<bool> {
    let (w, h) = (gt.width as usize, gt.height as usize);
    let edge = boundary_pixels(gt);
    let r = band as usize;
    // Separable square dilation: rows, then columns.
    let mut rows = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            if edge[y * w + x] {
                for xx in x.saturating_sub(r)..=(x + r).min(w - 1) {
                    rows[y * w + xx] = true;
                }
            }
        }
    }
    let mut out = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            if rows[y * w + x] {
                for yy in y.saturating_sub(r)..=(y + r).min(h - 1) {
                    out[yy * w + x] = true;
                }
            }
        }
    }
    out
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(tp: usize, pred: usize, gt: usize) -> f64 {
    if pred == 0 && gt == 0 {
        return 1.0;
    }
    if tp == 0 {
        return 0.0;
    }
    let (p, r) = (tp as f64 / pred as f64, tp as f64 / gt as f64);
    2.0 * p * r / (p + r)
}

/// Step-wise area under the precision-recall curve of `scores` against
/// `truth`, sweeping the threshold over the distinct score values.
pub fn average_precision(scores: &[f64], truth: &[bool]) -> f64 {
    let positives = truth.iter().filter(|&&t| t).count();
    if positives == 0 {
        return if scores.iter().all(|&s| s <= 0.0) {
            1.0
        } else {
            0.0
        };
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut seen, mut ap, mut last_recall) = (0usize, 0usize, 0.0, 0.0);
    let mut k = 0;
    while k < order.len() {
        let s = scores[order[k]];
        if s <= 0.0 {
            break;
        }
        // Take every pixel tied at this score together.
        while k < order.len() && scores[order[k]] == s {
            tp += usize::from(truth[order[k]]);
            seen += 1;
            k += 1;
        }
        let recall = tp as f64 / positives as f64;
        ap += (recall - last_recall) * (tp as f64 / seen as f64);
        last_recall = recall;
    }
    ap
}

fn check(pred: &LabelMap, gt: &LabelMap) -> Result<()> {
    gt.check_dims(pred.width, pred.height)
        .map_err(|_| Error::DimensionMismatch {
            expected_w: gt.width,
            expected_h: gt.height,
            actual_w: pred.width,
            actual_h: pred.height,
        })
}

/// Metrics for a binary prediction. AP falls back to the band precision.
pub fn mask_metrics(pred: &LabelMap, gt: &LabelMap, band: u32) -> Result<MaskMetrics> {
    check(pred, gt)?;
    Ok(compute(pred, gt, band, None))
}

/// Metrics for a soft prediction `alpha`, thresholded at `threshold` for
/// everything except AP, which sweeps the threshold.
pub fn mask_metrics_soft(
    alpha: &[f64],
    threshold: f64,
    gt: &LabelMap,
    band: u32,
) -> Result<MaskMetrics> {
    if alpha.len() != gt.data.len() {
        return Err(Error::LengthMismatch {
            expected: gt.data.len(),
            actual: alpha.len(),
        });
    }
    let pred = LabelMap {
        width: gt.width,
        height: gt.height,
        data: alpha.iter().map(|&a| u16::from(a >= threshold)).collect(),
    };
    Ok(compute(&pred, gt, band, Some(alpha)))
}

fn compute(pred: &LabelMap, gt: &LabelMap, band: u32, alpha: Option<&[f64]>) -> MaskMetrics {
    let (mut inter, mut union, mut agree) = (0usize, 0usize, 0usize);
    for (&p, &g) in pred.data.iter().zip(&gt.data) {
        let (p, g) = (p != 0, g != 0);
        inter += usize::from(p && g);
        union += usize::from(p || g);
        agree += usize::from(p == g);
    }
    let mask = boundary_band(gt, band);
    let (mut b_inter, mut b_union, mut b_pred, mut b_gt) = (0usize, 0usize, 0usize, 0usize);
    let (mut scores, mut truth) = (Vec::new(), Vec::new());
    for i in (0..mask.len()).filter(|&i| mask[i]) {
        let (p, g) = (pred.data[i] != 0, gt.data[i] != 0);
        b_inter += usize::from(p && g);
        b_union += usize::from(p || g);
        b_pred += usize::from(p);
        b_gt += usize::from(g);
        if let Some(a) = alpha {
            scores.push(a[i]);
            truth.push(g);
        }
    }
    let (boundary_ap, single) = match alpha {
        Some(_) => (average_precision(&scores, &truth), false),
        None => (
            if b_pred == 0 {
                f64::from(u8::from(b_gt == 0))
            } else {
                b_inter as f64 / b_pred as f64
            },
            true,
        ),
    };
    MaskMetrics {
        iou: ratio(inter, union),
        acc: ratio(agree, pred.data.len()),
        boundary_iou: ratio(b_inter, b_union),
        boundary_ap,
        boundary_f1: f1(b_inter, b_pred, b_gt),
        band_width: band,
        ap_single_point: single,
    }
}

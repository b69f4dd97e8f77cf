//! Fusing per-view labels into one object id per Gaussian.

use serde::{Deserialize, Serialize};

use super::labels::LabelMatrix;
use crate::error::{Error, Result};

/// The conservative pre-filter applied before the τ threshold.
pub const PREFILTER: f64 = 0.5;

/// Denominator of the binary confidence score.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewCount {
    /// Views in which the Gaussian was observed.
    #[default]
    Observed,
    /// Every processed view.
    Global,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Votes {
    pub object_ids: Vec<u16>,
    pub confidence: Vec<f64>,
}

/// Mean-of-votes confidence and `s > τ` (after the `s > 0.5` pre-filter).
/// Retired and never-observed Gaussians get id 0 and confidence 0.
pub fn vote_binary(labels: &LabelMatrix, tau: f64, count: ViewCount) -> Result<Votes> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::Param(format!("tau must lie in (0, 1), got {tau}")));
    }
    let global = labels.num_views() as f64;
    let mut object_ids = Vec::with_capacity(labels.len());
    let mut confidence = Vec::with_capacity(labels.len());
    for i in 0..labels.len() {
        let (mut n, mut ones) = (0usize, 0usize);
        for v in labels.votes(i) {
            n += 1;
            ones += usize::from(v != 0);
        }
        let denom = match count {
            ViewCount::Observed => n as f64,
            ViewCount::Global => global,
        };
        let s = if labels.is_retired(i) || n == 0 {
            0.0
        } else {
            ones as f64 / denom
        };
        object_ids.push(u16::from(s > PREFILTER && s > tau));
        confidence.push(s);
    }
    Ok(Votes {
        object_ids,
        confidence,
    })
}

/// Most frequent vote per Gaussian, ties to the lower label (so background
/// wins any tie it is part of). Confidence is the winner's share of votes.
pub fn vote_multiobject(labels: &LabelMatrix) -> Votes {
    let mut object_ids = Vec::with_capacity(labels.len());
    let mut confidence = Vec::with_capacity(labels.len());
    let mut hist = vec![0usize; labels.num_objects as usize + 1];
    for i in 0..labels.len() {
        if labels.is_retired(i) {
            object_ids.push(0);
            confidence.push(0.0);
            continue;
        }
        hist.iter_mut().for_each(|h| *h = 0);
        let mut n = 0usize;
        for v in labels.votes(i) {
            let v = v as usize;
            if v >= hist.len() {
                hist.resize(v + 1, 0);
            }
            hist[v] += 1;
            n += 1;
        }
        // First maximum scanning upward is the lowest tied label.
        let (best, count) =
            hist.iter().enumerate().fold(
                (0usize, 0usize),
                |b, (l, &c)| if c > b.1 { (l, c) } else { b },
            );
        object_ids.push(if n == 0 { 0 } else { best as u16 });
        confidence.push(if n == 0 { 0.0 } else { count as f64 / n as f64 });
    }
    Votes {
        object_ids,
        confidence,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: &[&[u16]], objects: u16) -> LabelMatrix {
        let views = rows.iter().map(|r| r.len()).max().unwrap_or(0);
        let mut l = LabelMatrix::new(rows.len(), (0..views as u32).collect(), objects);
        l.binary = objects <= 1;
        for (i, r) in rows.iter().enumerate() {
            for (s, &v) in r.iter().enumerate() {
                l.set(i, s, v);
            }
        }
        l
    }

    #[test]
    fn binary_examples() {
        let l = matrix(&[&[1, 1, 1, 0], &[1, 0, 0, 0], &[]], 1);
        let v = vote_binary(&l, 0.7, ViewCount::Observed).unwrap();
        assert_eq!(v.object_ids, vec![1, 0, 0]);
        assert_eq!(v.confidence, vec![0.75, 0.25, 0.0]);
        assert!(vote_binary(&l, 1.0, ViewCount::Observed).is_err());
        assert!(vote_binary(&l, 0.0, ViewCount::Observed).is_err());
    }

    #[test]
    fn prefilter_binds_below_half() {
        let l = matrix(&[&[1, 0, 0, 0], &[1, 1, 0, 0], &[1, 1, 1, 0]], 1);
        let v = vote_binary(&l, 0.2, ViewCount::Observed).unwrap();
        assert_eq!(v.object_ids, vec![0, 0, 1]);
    }

    #[test]
    fn global_count_penalizes_unobserved_views() {
        let mut l = LabelMatrix::new(1, vec![0, 1, 2, 3], 1);
        l.set(0, 0, 1);
        l.set(0, 1, 1);
        l.set(0, 2, 1);
        assert_eq!(
            vote_binary(&l, 0.7, ViewCount::Observed)
                .unwrap()
                .object_ids,
            vec![1]
        );
        assert_eq!(
            vote_binary(&l, 0.7, ViewCount::Global).unwrap().confidence,
            vec![0.75]
        );
    }

    #[test]
    fn cut_labels_and_retired_rows_do_not_vote() {
        let mut l = matrix(&[&[1, 1, 1, 0], &[1, 1, 1, 1]], 1);
        let c = l.push_child(0, Some(1));
        l.retire(1);
        let v = vote_binary(&l, 0.7, ViewCount::Observed).unwrap();
        assert_eq!(v.object_ids, vec![1, 0, 0]);
        assert_eq!(v.confidence[c], 0.0);
    }

    #[test]
    fn mode_examples() {
        let l = matrix(&[&[2, 2, 3, 0, 2], &[1, 2], &[0, 3, 3, 0], &[]], 3);
        let v = vote_multiobject(&l);
        assert_eq!(v.object_ids, vec![2, 1, 0, 0]);
        assert_eq!(v.confidence[0], 0.6);
    }
}

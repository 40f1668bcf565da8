//! Exact greedy split search over a column-sorted feature index.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::loss::GradientPair;
use super::GbdtParams;
use crate::dataset::Instance;

#[derive(Debug, Error, PartialEq)]
pub enum GainError {
    #[error(
        "hessian sum plus lambda must be positive (left {left}, right {right}, parent {parent})"
    )]
    NonPositiveDenominator { left: f64, right: f64, parent: f64 },
}

/// Regularized second-order split gain.
///
/// `0.5 * [GL^2/(HL+l) + GR^2/(HR+l) - (GL+GR)^2/(HL+HR+l)] - gamma`
pub fn split_gain(
    grad_left: f64,
    hess_left: f64,
    grad_right: f64,
    hess_right: f64,
    lambda: f64,
    gamma: f64,
) -> Result<f64, GainError> {
    let (dl, dr, dp) = (
        hess_left + lambda,
        hess_right + lambda,
        hess_left + hess_right + lambda,
    );
    if dl <= 0.0 || dr <= 0.0 || dp <= 0.0 {
        return Err(GainError::NonPositiveDenominator {
            left: dl,
            right: dr,
            parent: dp,
        });
    }
    Ok(raw_gain(grad_left, dl, grad_right, dr, dp, gamma))
}

#[inline]
fn raw_gain(gl: f64, dl: f64, gr: f64, dr: f64, dp: f64, gamma: f64) -> f64 {
    let gp = gl + gr;
    0.5 * (gl * gl / dl + gr * gr / dr - gp * gp / dp) - gamma
}

/// Which child receives instances that do not store the split feature.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Left,
    Right,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitCandidate {
    pub feature: u32,
    /// Stored values `< threshold` go left.
    pub threshold: f64,
    pub default_child: Direction,
    pub gain: f64,
    pub left_count: usize,
    pub right_count: usize,
}

impl SplitCandidate {
    /// Higher gain first; ties resolved by lowest feature, threshold, then `Left`.
    pub fn better_than(&self, other: &SplitCandidate) -> bool {
        match self.gain.partial_cmp(&other.gain) {
            Some(Ordering::Greater) => true,
            Some(Ordering::Less) => false,
            _ => self
                .feature
                .cmp(&other.feature)
                .then(self.threshold.total_cmp(&other.threshold))
                .then(self.default_child.cmp(&other.default_child))
                .is_lt(),
        }
    }
}

pub(crate) fn pick_better(
    a: Option<SplitCandidate>,
    b: Option<SplitCandidate>,
) -> Option<SplitCandidate> {
    match (a, b) {
        (Some(x), Some(y)) => Some(if y.better_than(&x) { y } else { x }),
        (x, None) => x,
        (None, y) => y,
    }
}

/// Per-feature lists of `(value, row)` for the rows that store the feature,
/// sorted by value then row.
#[derive(Clone, Debug)]
pub struct FeatureIndex {
    pub num_rows: usize,
    pub columns: Vec<Vec<(f64, u32)>>,
}

impl FeatureIndex {
    pub fn build(instances: &[Instance], dimension: usize) -> Self {
        let mut columns: Vec<Vec<(f64, u32)>> = vec![Vec::new(); dimension];
        for (row, inst) in instances.iter().enumerate() {
            for &(f, v) in &inst.features {
                columns[f as usize].push((v, row as u32));
            }
        }
        for col in &mut columns {
            col.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        }
        Self {
            num_rows: instances.len(),
            columns,
        }
    }

    pub fn dimension(&self) -> usize {
        self.columns.len()
    }
}

/// Gradient totals of one tree node.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub(crate) struct NodeStats {
    pub g: f64,
    pub h: f64,
    pub n: usize,
}

#[derive(Clone, Copy, Default)]
struct ScanState {
    present: NodeStats,
    acc: NodeStats,
    last: f64,
}

/// Threshold strictly above `lo` and at most `hi`.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid <= lo {
        hi
    } else {
        mid
    }
}

/// Best split of `feature` for every node slot at once.
///
/// `slot_of_row[r]` names the slot row `r` belongs to (`u32::MAX` when the row
/// sits in a finished leaf); `slots` holds each slot's totals.
pub(crate) fn scan_feature(
    feature: u32,
    column: &[(f64, u32)],
    slot_of_row: &[u32],
    slots: &[NodeStats],
    grads: &[GradientPair],
    params: &GbdtParams,
) -> Vec<Option<SplitCandidate>> {
    let mut state = vec![ScanState::default(); slots.len()];
    for &(_, row) in column {
        let s = slot_of_row[row as usize];
        if s != u32::MAX {
            let st = &mut state[s as usize].present;
            let gp = grads[row as usize];
            st.g += gp.g;
            st.h += gp.h;
            st.n += 1;
        }
    }

    let mut best: Vec<Option<SplitCandidate>> = vec![None; slots.len()];
    let min_child = params.min_child_instances.max(1);
    let evaluate = |best: &mut Option<SplitCandidate>,
                    total: &NodeStats,
                    present: &NodeStats,
                    left_present: &NodeStats,
                    threshold: f64,
                    allow_default_right: bool| {
        let missing = NodeStats {
            g: total.g - present.g,
            h: total.h - present.h,
            n: total.n - present.n,
        };
        let right_present = NodeStats {
            g: present.g - left_present.g,
            h: present.h - left_present.h,
            n: present.n - left_present.n,
        };
        let options = [
            (
                Direction::Left,
                left_present.g + missing.g,
                left_present.h + missing.h,
                left_present.n + missing.n,
                right_present.g,
                right_present.h,
                right_present.n,
            ),
            (
                Direction::Right,
                left_present.g,
                left_present.h,
                left_present.n,
                right_present.g + missing.g,
                right_present.h + missing.h,
                right_present.n + missing.n,
            ),
        ];
        for (dir, gl, hl, nl, gr, hr, nr) in options {
            if dir == Direction::Right && !allow_default_right {
                continue;
            }
            if nl < min_child || nr < min_child {
                continue;
            }
            let (dl, dr, dp) = (
                hl + params.lambda,
                hr + params.lambda,
                hl + hr + params.lambda,
            );
            if dl <= 0.0 || dr <= 0.0 || dp <= 0.0 {
                continue;
            }
            let gain = raw_gain(gl, dl, gr, dr, dp, params.gamma);
            if gain > best.map_or(f64::NEG_INFINITY, |b| b.gain) {
                *best = Some(SplitCandidate {
                    feature,
                    threshold,
                    default_child: dir,
                    gain,
                    left_count: nl,
                    right_count: nr,
                });
            }
        }
    };

    for &(v, row) in column {
        let s = slot_of_row[row as usize];
        if s == u32::MAX {
            continue;
        }
        let s = s as usize;
        let st = &mut state[s];
        if st.acc.n == 0 {
            // Cut below every stored value: stored values go right, missing left.
            evaluate(&mut best[s], &slots[s], &st.present, &st.acc, v, false);
        } else if v > st.last {
            let threshold = midpoint(st.last, v);
            evaluate(
                &mut best[s],
                &slots[s],
                &st.present,
                &st.acc,
                threshold,
                true,
            );
        }
        let gp = grads[row as usize];
        st.acc.g += gp.g;
        st.acc.h += gp.h;
        st.acc.n += 1;
        st.last = v;
    }
    best
}

/// Best split over all features of the given instances, or `None` if no
/// admissible split has positive gain.
pub fn find_best_split(
    instances: &[Instance],
    grads: &[GradientPair],
    dimension: usize,
    params: &GbdtParams,
) -> Option<SplitCandidate> {
    assert_eq!(
        instances.len(),
        grads.len(),
        "one gradient pair per instance"
    );
    if instances.len() < 2 {
        return None;
    }
    let index = FeatureIndex::build(instances, dimension);
    let total = grads.iter().fold(NodeStats::default(), |mut acc, gp| {
        acc.g += gp.g;
        acc.h += gp.h;
        acc.n += 1;
        acc
    });
    let slot_of_row = vec![0u32; instances.len()];
    best_over_features(&index, &slot_of_row, &[total], grads, params)
        .pop()
        .flatten()
        .filter(|c| c.gain > 0.0)
}

pub(crate) fn best_over_features(
    index: &FeatureIndex,
    slot_of_row: &[u32],
    slots: &[NodeStats],
    grads: &[GradientPair],
    params: &GbdtParams,
) -> Vec<Option<SplitCandidate>> {
    use rayon::prelude::*;
    index
        .columns
        .par_iter()
        .enumerate()
        .filter(|(_, col)| !col.is_empty())
        .map(|(f, col)| scan_feature(f as u32, col, slot_of_row, slots, grads, params))
        .reduce(
            || vec![None; slots.len()],
            |a, b| {
                a.into_iter()
                    .zip(b)
                    .map(|(x, y)| pick_better(x, y))
                    .collect()
            },
        )
}

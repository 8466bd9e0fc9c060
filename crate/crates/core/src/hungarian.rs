//! DETR-style bipartite matching between query predictions and ground-truth
//! components, built on an O(n^3) Hungarian solver with potentials.

use crate::error::{Error, Result};
use crate::plan::{iou_boxes, BBox, ComponentType};
use ndarray::Array2;

/// Matching cost weights: class probability, box L1, box IoU.
pub const MATCH_CLASS_WEIGHT: f64 = 1.0;
pub const MATCH_L1_WEIGHT: f64 = 5.0;
pub const MATCH_IOU_WEIGHT: f64 = 2.0;

/// One-to-one assignment of predictions to ground-truth components.
/// Predictions left unmatched implicitly target `no-component`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    /// (prediction index, ground-truth index), sorted by ground-truth index.
    pub pairs: Vec<(usize, usize)>,
}

impl Assignment {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn gt_of_pred(&self, pred: usize) -> Option<usize> {
        self.pairs.iter().find(|(p, _)| *p == pred).map(|(_, g)| *g)
    }
}

/// Minimum-cost row-to-column assignment, rows <= columns. Returns the
/// column chosen for each row. Hungarian algorithm with potentials.
pub fn solve_assignment(cost: &Array2<f64>) -> Result<Vec<usize>> {
    let n = cost.nrows();
    let m = cost.ncols();
    if n > m {
        return Err(Error::TooFewQueries { preds: m, gts: n });
    }
    if n == 0 {
        return Ok(Vec::new());
    }

    // 1-based potentials; p[j] is the row matched to column j (0 = free).
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost[[i0 - 1, j - 1]] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        // Augment along the found path.
        while j0 != 0 {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        }
    }

    let mut assign = vec![usize::MAX; n];
    for j in 1..=m {
        if p[j] != 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    debug_assert!(assign.iter().all(|&c| c != usize::MAX));
    Ok(assign)
}

/// Pairwise matching cost between a prediction (class distribution + box)
/// and a ground-truth component.
pub fn match_cost(probs: &[f64], pred_box: &BBox, gt_type: ComponentType, gt_box: &BBox) -> f64 {
    let class_term = -MATCH_CLASS_WEIGHT * probs[gt_type.class_index()];
    let l1: f64 = pred_box
        .as_array()
        .iter()
        .zip(gt_box.as_array())
        .map(|(p, g)| (p - g).abs())
        .sum();
    class_term + MATCH_L1_WEIGHT * l1 - MATCH_IOU_WEIGHT * iou_boxes(pred_box, gt_box)
}

/// Softmax of a logit slice in f64.
pub fn softmax64(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Match predictions against ground truth the DETR way: Hungarian assignment
/// minimizing class/L1/IoU cost. Requires at least as many predictions as
/// ground-truth components.
pub fn match_hungarian(
    preds: &[(Vec<f64>, BBox)],
    gts: &[(ComponentType, BBox)],
) -> Result<Assignment> {
    if preds.len() < gts.len() {
        return Err(Error::TooFewQueries { preds: preds.len(), gts: gts.len() });
    }
    if gts.is_empty() {
        return Ok(Assignment { pairs: Vec::new() });
    }
    let cost = Array2::from_shape_fn((gts.len(), preds.len()), |(g, p)| {
        match_cost(&preds[p].0, &preds[p].1, gts[g].0, &gts[g].1)
    });
    let cols = solve_assignment(&cost)?;
    let mut pairs: Vec<(usize, usize)> = cols.into_iter().enumerate().map(|(g, p)| (p, g)).collect();
    pairs.sort_by_key(|&(_, g)| g);
    Ok(Assignment { pairs })
}

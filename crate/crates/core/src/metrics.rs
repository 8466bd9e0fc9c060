//! Evaluation protocol: greedy type-aware IoU matching, precision/recall/F1,
//! and exhaustive pixel-translation alignment for SfM-style inputs.

use crate::error::{Error, Result};
use crate::plan::{ComponentType, Floorplan};
use crate::raster::{iou_masks, rasterize_component, Mask};
use serde::Serialize;

/// A reconstructed room matches ground truth when types agree and mask IoU
/// exceeds 0.7; doors use 0.5 because door segments are small.
pub const ROOM_IOU_THRESHOLD: f64 = 0.7;
pub const DOOR_IOU_THRESHOLD: f64 = 0.5;
/// Room matching requires equal types.
pub const TYPE_AWARE_MATCHING: bool = true;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatchPair {
    pub pred: usize,
    pub gt: usize,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub matches: Vec<MatchPair>,
    /// Pixel translation applied to the prediction, when alignment ran.
    pub translation: Option<(i64, i64)>,
}

impl MetricReport {
    fn from_matches(matches: Vec<MatchPair>, n_pred: usize, n_gt: usize) -> MetricReport {
        let (precision, recall) = if n_pred == 0 && n_gt == 0 {
            (1.0, 1.0)
        } else {
            (
                if n_pred == 0 { 0.0 } else { matches.len() as f64 / n_pred as f64 },
                if n_gt == 0 { 0.0 } else { matches.len() as f64 / n_gt as f64 },
            )
        };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        MetricReport { precision, recall, f1, matches, translation: None }
    }
}

/// Greedy selection over scored candidates: repeatedly take the remaining
/// pair with the highest IoU; ties broken by lower pred, then lower gt index.
fn select_greedy(mut candidates: Vec<MatchPair>, n_pred: usize, n_gt: usize) -> Vec<MatchPair> {
    candidates.sort_by(|a, b| {
        b.iou
            .partial_cmp(&a.iou)
            .unwrap()
            .then(a.pred.cmp(&b.pred))
            .then(a.gt.cmp(&b.gt))
    });
    let mut pred_used = vec![false; n_pred];
    let mut gt_used = vec![false; n_gt];
    let mut out = Vec::new();
    for c in candidates {
        if !pred_used[c.pred] && !gt_used[c.gt] {
            pred_used[c.pred] = true;
            gt_used[c.gt] = true;
            out.push(c);
        }
    }
    out
}

/// Greedy IoU matching over component masks. Pairs qualify when IoU is
/// strictly above the threshold and, if `type_aware`, the types agree.
pub fn greedy_match(
    preds: &[(ComponentType, Mask)],
    gts: &[(ComponentType, Mask)],
    iou_threshold: f64,
    type_aware: bool,
) -> Vec<MatchPair> {
    let mut candidates = Vec::new();
    for (p, (pt, pm)) in preds.iter().enumerate() {
        for (g, (gt, gm)) in gts.iter().enumerate() {
            if type_aware && pt != gt {
                continue;
            }
            if pm.is_empty() || gm.is_empty() {
                continue;
            }
            let iou = iou_masks(pm, gm).expect("same canvas, nonempty");
            if iou > iou_threshold {
                candidates.push(MatchPair { pred: p, gt: g, iou });
            }
        }
    }
    select_greedy(candidates, preds.len(), gts.len())
}

fn typed_masks(plan: &Floorplan, rooms: bool) -> Vec<(ComponentType, Mask)> {
    plan.components
        .iter()
        .filter(|c| c.ctype.is_room() == rooms)
        .map(|c| (c.ctype, rasterize_component(c, plan.canvas.0, plan.canvas.1)))
        .collect()
}

/// Score a prediction against ground truth on a shared canvas: rooms at IoU
/// threshold 0.7 with type-aware matching, doors at 0.5.
pub fn evaluate(pred: &Floorplan, gt: &Floorplan) -> Result<(MetricReport, MetricReport)> {
    if pred.canvas != gt.canvas {
        return Err(Error::BadDims(format!(
            "canvases differ: {:?} vs {:?}",
            pred.canvas, gt.canvas
        )));
    }
    let pred_rooms = typed_masks(pred, true);
    let gt_rooms = typed_masks(gt, true);
    let pred_doors = typed_masks(pred, false);
    let gt_doors = typed_masks(gt, false);
    let room_matches =
        greedy_match(&pred_rooms, &gt_rooms, ROOM_IOU_THRESHOLD, TYPE_AWARE_MATCHING);
    let door_matches =
        greedy_match(&pred_doors, &gt_doors, DOOR_IOU_THRESHOLD, TYPE_AWARE_MATCHING);
    Ok((
        MetricReport::from_matches(room_matches, pred_rooms.len(), gt_rooms.len()),
        MetricReport::from_matches(door_matches, pred_doors.len(), gt_doors.len()),
    ))
}

/// Alignment search controls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AlignConfig {
    /// Evaluate every translation instead of skipping those where the global
    /// content boxes cannot overlap.
    pub exhaustive: bool,
    /// Score translations by room F1 alone instead of the room/door mean.
    pub rooms_only: bool,
}

/// Pixel set, bounds, and a 2D prefix-sum over the bounding box of one
/// component; supports O(1) counting of pixels inside a clip rectangle.
struct CompData {
    ctype: ComponentType,
    pixels: Vec<(i64, i64)>,
    /// (x0, y0, x1, y1) inclusive; None when the mask is empty.
    bbox: Option<(i64, i64, i64, i64)>,
    prefix: Vec<u32>,
    pw: i64,
}

impl CompData {
    fn build(ctype: ComponentType, mask: &Mask) -> CompData {
        let pixels: Vec<(i64, i64)> = mask.iter_set().map(|(x, y)| (x as i64, y as i64)).collect();
        let bbox = mask.pixel_bbox().map(|(x0, y0, x1, y1)| (x0 as i64, y0 as i64, x1 as i64, y1 as i64));
        let (pw, ph) = match bbox {
            Some((x0, y0, x1, y1)) => (x1 - x0 + 1, y1 - y0 + 1),
            None => (0, 0),
        };
        let mut prefix = vec![0u32; ((pw + 1) * (ph + 1)) as usize];
        if let Some((x0, y0, _, _)) = bbox {
            for &(x, y) in &pixels {
                let (lx, ly) = (x - x0, y - y0);
                prefix[((ly + 1) * (pw + 1) + lx + 1) as usize] += 1;
            }
            for y in 1..=ph {
                for x in 0..=pw {
                    prefix[(y * (pw + 1) + x) as usize] += prefix[((y - 1) * (pw + 1) + x) as usize];
                }
            }
            for y in 0..=ph {
                for x in 1..=pw {
                    prefix[(y * (pw + 1) + x) as usize] += prefix[(y * (pw + 1) + x - 1) as usize];
                }
            }
        }
        CompData { ctype, pixels, bbox, prefix, pw }
    }

    fn count(&self) -> usize {
        self.pixels.len()
    }

    /// Pixels with x in [xlo, xhi] and y in [ylo, yhi] (inclusive).
    fn count_in(&self, xlo: i64, xhi: i64, ylo: i64, yhi: i64) -> u32 {
        let Some((x0, y0, x1, y1)) = self.bbox else { return 0 };
        let xlo = xlo.max(x0) - x0;
        let xhi = xhi.min(x1) - x0;
        let ylo = ylo.max(y0) - y0;
        let yhi = yhi.min(y1) - y0;
        if xlo > xhi || ylo > yhi {
            return 0;
        }
        let at = |x: i64, y: i64| self.prefix[(y * (self.pw + 1) + x) as usize];
        at(xhi + 1, yhi + 1) + at(xlo, ylo) - at(xhi + 1, ylo) - at(xlo, yhi + 1)
    }

    /// Pixels surviving a shift by (dx, dy) on a w x h canvas.
    fn clipped_count(&self, dx: i64, dy: i64, w: i64, h: i64) -> u32 {
        self.count_in(-dx, w - 1 - dx, -dy, h - 1 - dy)
    }
}

/// Overlap counts of a (pred, gt) pair for every useful translation:
/// table[(dy - dy0) * tw + (dx - dx0)] = |shifted pred  intersect  gt|.
struct OverlapTable {
    dx0: i64,
    dy0: i64,
    tw: i64,
    th: i64,
    data: Vec<u32>,
}

impl OverlapTable {
    fn build(p: &CompData, g: &CompData) -> Option<OverlapTable> {
        let (px0, py0, px1, py1) = p.bbox?;
        let (gx0, gy0, gx1, gy1) = g.bbox?;
        let dx0 = gx0 - px1;
        let dy0 = gy0 - py1;
        let tw = (gx1 - px0) - dx0 + 1;
        let th = (gy1 - py0) - dy0 + 1;
        let mut data = vec![0u32; (tw * th) as usize];
        for &(px, py) in &p.pixels {
            for &(gx, gy) in &g.pixels {
                let ix = (gx - px) - dx0;
                let iy = (gy - py) - dy0;
                data[(iy * tw + ix) as usize] += 1;
            }
        }
        Some(OverlapTable { dx0, dy0, tw, th, data })
    }

    fn get(&self, dx: i64, dy: i64) -> u32 {
        let ix = dx - self.dx0;
        let iy = dy - self.dy0;
        if ix < 0 || iy < 0 || ix >= self.tw || iy >= self.th {
            0
        } else {
            self.data[(iy * self.tw + ix) as usize]
        }
    }
}

struct AlignGroup {
    preds: Vec<CompData>,
    gts: Vec<CompData>,
    /// Same-type pairs with their overlap tables.
    pairs: Vec<(usize, usize, OverlapTable)>,
    threshold: f64,
}

impl AlignGroup {
    fn build(pred: &Floorplan, gt: &Floorplan, rooms: bool, threshold: f64) -> AlignGroup {
        let preds: Vec<CompData> = typed_masks(pred, rooms)
            .into_iter()
            .map(|(t, m)| CompData::build(t, &m))
            .collect();
        let gts: Vec<CompData> =
            typed_masks(gt, rooms).into_iter().map(|(t, m)| CompData::build(t, &m)).collect();
        let mut pairs = Vec::new();
        for (pi, p) in preds.iter().enumerate() {
            for (gi, g) in gts.iter().enumerate() {
                if TYPE_AWARE_MATCHING && p.ctype != g.ctype {
                    continue;
                }
                if let Some(table) = OverlapTable::build(p, g) {
                    pairs.push((pi, gi, table));
                }
            }
        }
        AlignGroup { preds, gts, pairs, threshold }
    }

    /// Greedy matching report for the prediction shifted by (dx, dy).
    fn report_at(&self, dx: i64, dy: i64, w: i64, h: i64) -> MetricReport {
        let mut candidates = Vec::new();
        for (pi, gi, table) in &self.pairs {
            let inter = table.get(dx, dy) as f64;
            if inter <= 0.0 {
                continue;
            }
            let pc = self.preds[*pi].clipped_count(dx, dy, w, h) as f64;
            let union = pc + self.gts[*gi].count() as f64 - inter;
            let iou = if union > 0.0 { inter / union } else { 0.0 };
            if iou > self.threshold {
                candidates.push(MatchPair { pred: *pi, gt: *gi, iou });
            }
        }
        let matches = select_greedy(candidates, self.preds.len(), self.gts.len());
        MetricReport::from_matches(matches, self.preds.len(), self.gts.len())
    }

    fn empty_report(&self) -> MetricReport {
        MetricReport::from_matches(Vec::new(), self.preds.len(), self.gts.len())
    }
}

fn content_bbox(plan: &Floorplan) -> Option<(i64, i64, i64, i64)> {
    let mut bbox: Option<(i64, i64, i64, i64)> = None;
    for comp in &plan.components {
        let mask = rasterize_component(comp, plan.canvas.0, plan.canvas.1);
        if let Some((x0, y0, x1, y1)) = mask.pixel_bbox() {
            let (x0, y0, x1, y1) = (x0 as i64, y0 as i64, x1 as i64, y1 as i64);
            bbox = Some(match bbox {
                None => (x0, y0, x1, y1),
                Some((a, b, c, d)) => (a.min(x0), b.min(y0), c.max(x1), d.max(y1)),
            });
        }
    }
    bbox
}

/// Search integer pixel translations of the prediction for the best score
/// (mean of room and door F1 by default), then report that translation.
///
/// Ties prefer the smallest |dx| + |dy|, then lexicographic (dx, dy); with
/// pruning, translations where the content boxes cannot overlap are scored
/// as zero-match reports without evaluation, so pruned and exhaustive
/// searches return identical results.
pub fn align_evaluate(
    pred: &Floorplan,
    gt: &Floorplan,
    cfg: &AlignConfig,
) -> Result<(MetricReport, MetricReport, (i64, i64))> {
    if pred.canvas != gt.canvas {
        return Err(Error::BadDims(format!(
            "canvases differ: {:?} vs {:?}",
            pred.canvas, gt.canvas
        )));
    }
    let (w, h) = (pred.canvas.0 as i64, pred.canvas.1 as i64);
    let rooms = AlignGroup::build(pred, gt, true, ROOM_IOU_THRESHOLD);
    let doors = AlignGroup::build(pred, gt, false, DOOR_IOU_THRESHOLD);
    let pred_bbox = content_bbox(pred);
    let gt_bbox = content_bbox(gt);

    #[allow(clippy::type_complexity)]
    let mut best: Option<(f64, i64, (i64, i64), MetricReport, MetricReport)> = None;
    for dx in -(w - 1)..=(w - 1) {
        for dy in -(h - 1)..=(h - 1) {
            let overlap_possible = match (pred_bbox, gt_bbox) {
                (Some((px0, py0, px1, py1)), Some((gx0, gy0, gx1, gy1))) => {
                    px0 + dx <= gx1 && px1 + dx >= gx0 && py0 + dy <= gy1 && py1 + dy >= gy0
                }
                _ => false,
            };
            let (room_report, door_report) = if overlap_possible || cfg.exhaustive {
                (rooms.report_at(dx, dy, w, h), doors.report_at(dx, dy, w, h))
            } else {
                (rooms.empty_report(), doors.empty_report())
            };
            let objective = if cfg.rooms_only {
                room_report.f1
            } else {
                (room_report.f1 + door_report.f1) / 2.0
            };
            let l1 = dx.abs() + dy.abs();
            let better = match &best {
                None => true,
                Some((bo, bl1, bt, _, _)) => {
                    objective > *bo
                        || (objective == *bo && (l1 < *bl1 || (l1 == *bl1 && (dx, dy) < *bt)))
                }
            };
            if better {
                best = Some((objective, l1, (dx, dy), room_report, door_report));
            }
        }
    }
    let (_, _, translation, mut room_report, mut door_report) =
        best.expect("search space is nonempty");
    room_report.translation = Some(translation);
    door_report.translation = Some(translation);
    Ok((room_report, door_report, translation))
}

//! Set-prediction losses over matched components: weighted softmax type loss,
//! L1 + IoU box loss, and dice + focal segmentation loss, each with analytic
//! gradients over its prediction-side inputs (64-bit).

use crate::error::{Error, Result};
use crate::hungarian::{softmax64, Assignment};
use crate::plan::{iou_boxes, BBox, Component, ComponentType, Floorplan, NUM_CLASSES};
use crate::raster::{bbox_of, rasterize_component, Mask};
use ndarray::Array2;

/// Per-class weights compensating the training-set imbalance.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassWeights {
    /// Indexed by `ComponentType::class_index()`.
    pub values: [f64; NUM_CLASSES],
}

impl Default for ClassWeights {
    /// The published per-category weights, keyed by our channel order.
    fn default() -> ClassWeights {
        let mut values = [0.0; NUM_CLASSES];
        for (t, w) in [
            (ComponentType::LivingRoom, 1.135),
            (ComponentType::Kitchen, 3.7),
            (ComponentType::WesternStyleRoom, 0.6),
            (ComponentType::Toilet, 0.63),
            (ComponentType::Balcony, 0.47),
            (ComponentType::Corridor, 1.2),
            (ComponentType::JapaneseStyleRoom, 2.2),
            (ComponentType::Washroom, 0.76),
            (ComponentType::Bathroom, 0.48),
            (ComponentType::Closet, 0.18),
            (ComponentType::ClosetDoor, 0.763),
            (ComponentType::OpenPortal, 0.524),
            (ComponentType::StandardDoor, 0.33),
            (ComponentType::EntranceDoor, 0.7),
            (ComponentType::NoComponent, 0.1),
        ] {
            values[t.class_index()] = w;
        }
        ClassWeights { values }
    }
}

impl ClassWeights {
    pub fn get(&self, t: ComponentType) -> f64 {
        self.values[t.class_index()]
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.iter().all(|&w| w > 0.0) {
            Ok(())
        } else {
            Err(Error::BadConfig("class weights must be positive".into()))
        }
    }
}

/// Weighted softmax type loss over all predictions; unmatched predictions
/// target `no-component`. Returns the loss and its gradient w.r.t. logits.
pub fn loss_type(
    logits: &Array2<f64>,
    assignment: &Assignment,
    gt_types: &[ComponentType],
    weights: &ClassWeights,
) -> (f64, Array2<f64>) {
    let n = logits.nrows();
    let mut grad = Array2::<f64>::zeros(logits.raw_dim());
    if n == 0 {
        return (0.0, grad);
    }
    let mut total = 0.0;
    for i in 0..n {
        let target = assignment
            .gt_of_pred(i)
            .map(|g| gt_types[g])
            .unwrap_or(ComponentType::NoComponent);
        let w = weights.get(target);
        let row: Vec<f64> = logits.row(i).to_vec();
        let probs = softmax64(&row);
        let t = target.class_index();
        total += -w * probs[t].ln();
        for j in 0..NUM_CLASSES {
            let delta = if j == t { 1.0 } else { 0.0 };
            grad[[i, j]] = w * (probs[j] - delta) / n as f64;
        }
    }
    (total / n as f64, grad)
}

/// Partial derivatives of `iou_boxes(pred, gt)` w.r.t. the prediction's
/// (cx, cy, w, h); subgradient 0 at the clamp kinks.
fn iou_box_grad(pred: &BBox, gt: &BBox) -> [f64; 4] {
    let (px0, px1) = pred.x_range();
    let (py0, py1) = pred.y_range();
    let (gx0, gx1) = gt.x_range();
    let (gy0, gy1) = gt.y_range();
    let ix = (px1.min(gx1) - px0.max(gx0)).max(0.0);
    let iy = (py1.min(gy1) - py0.max(gy0)).max(0.0);
    let inter = ix * iy;
    let area_p = (px1 - px0) * (py1 - py0);
    let area_g = (gx1 - gx0) * (gy1 - gy0);
    let union = area_p + area_g - inter;
    if union <= 0.0 {
        return [0.0; 4];
    }

    // d(ix)/d(px0, px1); active only while the overlap is open.
    let (dix_dpx0, dix_dpx1) = if ix > 0.0 {
        (-((px0 > gx0) as i32 as f64), (px1 < gx1) as i32 as f64)
    } else {
        (0.0, 0.0)
    };
    let (diy_dpy0, diy_dpy1) = if iy > 0.0 {
        (-((py0 > gy0) as i32 as f64), (py1 < gy1) as i32 as f64)
    } else {
        (0.0, 0.0)
    };

    // Corner derivatives w.r.t. (cx, cy, w, h).
    // px0 = cx - w/2, px1 = cx + w/2.
    let d_inter = |d_px0: f64, d_px1: f64, d_py0: f64, d_py1: f64| -> f64 {
        (dix_dpx0 * d_px0 + dix_dpx1 * d_px1) * iy + ix * (diy_dpy0 * d_py0 + diy_dpy1 * d_py1)
    };
    let d_area = |d_w: f64, d_h: f64| -> f64 { d_w * pred.h + d_h * pred.w };

    let mut out = [0.0; 4];
    let params = [
        (1.0, 1.0, 0.0, 0.0, 0.0, 0.0),   // cx: d_px0, d_px1
        (0.0, 0.0, 1.0, 1.0, 0.0, 0.0),   // cy
        (-0.5, 0.5, 0.0, 0.0, 1.0, 0.0),  // w
        (0.0, 0.0, -0.5, 0.5, 0.0, 1.0),  // h
    ];
    for (k, (d_px0, d_px1, d_py0, d_py1, d_w, d_h)) in params.into_iter().enumerate() {
        let di = d_inter(d_px0, d_px1, d_py0, d_py1);
        let du = d_area(d_w, d_h) - di;
        out[k] = (di * union - inter * du) / (union * union);
    }
    out
}

/// Box regression loss over matched pairs: mean of 5 * L1 - 2 * IoU.
/// Returns the loss and per-prediction gradients (zero when unmatched).
pub fn loss_bbox(
    pred_boxes: &[BBox],
    gt_boxes: &[BBox],
    assignment: &Assignment,
) -> Result<(f64, Vec<[f64; 4]>)> {
    if assignment.is_empty() {
        return Err(Error::NoMatches);
    }
    let n = assignment.len() as f64;
    let mut total = 0.0;
    let mut grads = vec![[0.0; 4]; pred_boxes.len()];
    for &(p, g) in &assignment.pairs {
        let bp = &pred_boxes[p];
        let bg = &gt_boxes[g];
        let l1: f64 =
            bp.as_array().iter().zip(bg.as_array()).map(|(a, b)| (a - b).abs()).sum();
        total += 5.0 * l1 - 2.0 * iou_boxes(bp, bg);
        let d_iou = iou_box_grad(bp, bg);
        for k in 0..4 {
            let sign = (bp.as_array()[k] - bg.as_array()[k]).signum();
            let sign = if bp.as_array()[k] == bg.as_array()[k] { 0.0 } else { sign };
            grads[p][k] = (5.0 * sign - 2.0 * d_iou[k]) / n;
        }
    }
    Ok((total / n, grads))
}

/// Focal/dice knobs; defaults are the standard focal-loss settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegLossConfig {
    pub focal_gamma: f64,
    pub focal_alpha: f64,
    /// Smoothing added to the dice numerator and denominator.
    pub dice_epsilon: f64,
}

impl Default for SegLossConfig {
    fn default() -> SegLossConfig {
        SegLossConfig { focal_gamma: 2.0, focal_alpha: 0.25, dice_epsilon: 1e-6 }
    }
}

fn sigmoid64(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Focal loss and d/dp for one pixel with probability `p` and target `t`.
fn focal_pixel(p: f64, t: f64, cfg: &SegLossConfig) -> (f64, f64) {
    let (gamma, alpha) = (cfg.focal_gamma, cfg.focal_alpha);
    if t > 0.5 {
        // -alpha (1-p)^g ln p
        let omp = 1.0 - p;
        let loss = -alpha * omp.powf(gamma) * p.ln();
        let grad = alpha * gamma * omp.powf(gamma - 1.0) * p.ln() - alpha * omp.powf(gamma) / p;
        (loss, grad)
    } else {
        // -(1-alpha) p^g ln(1-p)
        let omp = 1.0 - p;
        let loss = -(1.0 - alpha) * p.powf(gamma) * omp.ln();
        let grad =
            -(1.0 - alpha) * gamma * p.powf(gamma - 1.0) * omp.ln() + (1.0 - alpha) * p.powf(gamma) / omp;
        (loss, grad)
    }
}

/// Segmentation loss over matched pairs: 5/N * sum of (dice + mean focal) on
/// soft (sigmoid) masks. Returns the loss and gradients w.r.t. mask logits.
pub fn loss_seg_with(
    mask_logits: &[Array2<f64>],
    gt_masks: &[Array2<f64>],
    assignment: &Assignment,
    cfg: &SegLossConfig,
) -> Result<(f64, Vec<Array2<f64>>)> {
    if assignment.is_empty() {
        return Err(Error::NoMatches);
    }
    let n = assignment.len() as f64;
    let mut grads: Vec<Array2<f64>> =
        mask_logits.iter().map(|l| Array2::zeros(l.raw_dim())).collect();
    let mut total = 0.0;
    for &(p, g) in &assignment.pairs {
        let logits = &mask_logits[p];
        let gt = &gt_masks[g];
        if logits.dim() != gt.dim() {
            return Err(Error::BadDims(format!(
                "mask {:?} vs ground truth {:?}",
                logits.dim(),
                gt.dim()
            )));
        }
        let pixels = logits.len() as f64;
        let probs = logits.mapv(sigmoid64);

        let inter: f64 = probs.iter().zip(gt.iter()).map(|(m, t)| m * t).sum();
        let mass: f64 = probs.sum() + gt.sum();
        let dice = 1.0 - (2.0 * inter + cfg.dice_epsilon) / (mass + cfg.dice_epsilon);

        let mut focal_sum = 0.0;
        let denom = mass + cfg.dice_epsilon;
        let numer = 2.0 * inter + cfg.dice_epsilon;
        let grad_pair = &mut grads[p];
        for ((grad, &logit), &t) in grad_pair.iter_mut().zip(logits.iter()).zip(gt.iter()) {
            let m = sigmoid64(logit);
            // d dice / d m = -(2 t * denom - numer) / denom^2
            let d_dice = -(2.0 * t * denom - numer) / (denom * denom);
            let (f_loss, d_focal) = focal_pixel(m, t, cfg);
            focal_sum += f_loss;
            let dm_dlogit = m * (1.0 - m);
            *grad += (5.0 / n) * (d_dice + d_focal / pixels) * dm_dlogit;
        }
        total += dice + focal_sum / pixels;
    }
    Ok((5.0 / n * total, grads))
}

/// [`loss_seg_with`] under the default focal/dice configuration.
pub fn loss_seg(
    mask_logits: &[Array2<f64>],
    gt_masks: &[Array2<f64>],
    assignment: &Assignment,
) -> Result<(f64, Vec<Array2<f64>>)> {
    loss_seg_with(mask_logits, gt_masks, assignment, &SegLossConfig::default())
}

/// Per-term loss values; total = type + bbox + seg.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct LossBreakdown {
    pub type_loss: f64,
    pub bbox_loss: f64,
    pub seg_loss: f64,
    pub total: f64,
}

/// Gradients of the total loss w.r.t. every prediction-side input.
#[derive(Debug, Clone)]
pub struct LossGradients {
    pub type_logits: Array2<f64>,
    pub boxes: Vec<[f64; 4]>,
    pub mask_logits: Vec<Array2<f64>>,
}

/// Ground-truth side of one cascade's loss computation.
#[derive(Debug, Clone)]
pub struct LossTargets {
    pub types: Vec<ComponentType>,
    pub boxes: Vec<BBox>,
    pub masks: Vec<Array2<f64>>,
}

/// Prediction side of one cascade's loss computation.
#[derive(Debug, Clone)]
pub struct LossInputs {
    pub type_logits: Array2<f64>,
    pub boxes: Vec<BBox>,
    pub mask_logits: Vec<Array2<f64>>,
}

/// Full loss of one cascade under a fixed assignment.
pub fn loss_total(
    inputs: &LossInputs,
    targets: &LossTargets,
    assignment: &Assignment,
    weights: &ClassWeights,
    seg_cfg: &SegLossConfig,
) -> Result<(LossBreakdown, LossGradients)> {
    let (type_loss, type_grad) = loss_type(&inputs.type_logits, assignment, &targets.types, weights);
    let (bbox_loss, bbox_grad) = loss_bbox(&inputs.boxes, &targets.boxes, assignment)?;
    let (seg_loss, seg_grad) = loss_seg_with(&inputs.mask_logits, &targets.masks, assignment, seg_cfg)?;
    Ok((
        LossBreakdown { type_loss, bbox_loss, seg_loss, total: type_loss + bbox_loss + seg_loss },
        LossGradients { type_logits: type_grad, boxes: bbox_grad, mask_logits: seg_grad },
    ))
}

/// Per-term losses of a predicted floorplan against ground truth; box and
/// segmentation terms are undefined when nothing matched.
#[derive(Debug, Clone, serde::Serialize)]
pub struct PlanLossReport {
    pub type_loss: f64,
    pub bbox_loss: Option<f64>,
    pub seg_loss: Option<f64>,
    pub total: Option<f64>,
    pub matched: usize,
    pub n_pred: usize,
    pub n_gt: usize,
}

/// Margin used when turning a hard floorplan into pseudo-logits. Large
/// enough that sigmoid leakage over the background pixels stays negligible
/// next to even a 4-pixel door mask.
const PLAN_LOGIT_MARGIN: f64 = 20.0;

/// Score a predicted floorplan against ground truth with the training losses:
/// the prediction's hallucinated (invisible) components are lifted to hard
/// pseudo-logits and matched against the invisible ground-truth components.
pub fn plan_loss(
    pred: &Floorplan,
    gt: &Floorplan,
    weights: &ClassWeights,
    seg_cfg: &SegLossConfig,
) -> Result<PlanLossReport> {
    use crate::hungarian::{match_hungarian, softmax64};
    if pred.canvas != gt.canvas {
        return Err(Error::BadDims(format!(
            "canvases differ: {:?} vs {:?}",
            pred.canvas, gt.canvas
        )));
    }
    let (w, h) = pred.canvas;
    let targets = cascade_targets(3, gt)?;

    let preds: Vec<&Component> = pred.components.iter().filter(|c| !c.visible).collect();
    let mut logits = Array2::from_elem((preds.len(), NUM_CLASSES), -PLAN_LOGIT_MARGIN);
    let mut boxes = Vec::with_capacity(preds.len());
    let mut mask_logits = Vec::with_capacity(preds.len());
    for (i, comp) in preds.iter().enumerate() {
        logits[[i, comp.ctype.class_index()]] = PLAN_LOGIT_MARGIN;
        let mask = rasterize_component(comp, w, h);
        boxes.push(bbox_of(&mask)?);
        mask_logits.push(Array2::from_shape_fn((h, w), |(y, x)| {
            if mask.get(x, y) {
                PLAN_LOGIT_MARGIN
            } else {
                -PLAN_LOGIT_MARGIN
            }
        }));
    }

    let gt_pairs: Vec<(ComponentType, BBox)> = targets.iter().map(|t| (t.ctype, t.bbox)).collect();
    let match_inputs: Vec<(Vec<f64>, BBox)> = (0..preds.len())
        .map(|i| (softmax64(&logits.row(i).to_vec()), boxes[i]))
        .collect();
    let assignment = match_hungarian(&match_inputs, &gt_pairs)?;

    let gt_types: Vec<ComponentType> = targets.iter().map(|t| t.ctype).collect();
    let (type_loss, _) = loss_type(&logits, &assignment, &gt_types, weights);
    if assignment.is_empty() {
        return Ok(PlanLossReport {
            type_loss,
            bbox_loss: None,
            seg_loss: None,
            total: None,
            matched: 0,
            n_pred: preds.len(),
            n_gt: targets.len(),
        });
    }
    let gt_boxes: Vec<BBox> = targets.iter().map(|t| t.bbox).collect();
    let gt_masks: Vec<Array2<f64>> = targets
        .iter()
        .map(|t| {
            Array2::from_shape_fn((h, w), |(y, x)| if t.mask.get(x, y) { 1.0 } else { 0.0 })
        })
        .collect();
    let (bbox_loss, _) = loss_bbox(&boxes, &gt_boxes, &assignment)?;
    let (seg_loss, _) = loss_seg_with(&mask_logits, &gt_masks, &assignment, seg_cfg)?;
    Ok(PlanLossReport {
        type_loss,
        bbox_loss: Some(bbox_loss),
        seg_loss: Some(seg_loss),
        total: Some(type_loss + bbox_loss + seg_loss),
        matched: assignment.len(),
        n_pred: preds.len(),
        n_gt: targets.len(),
    })
}

/// How an invisible ground-truth component enters the cascade targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetKind {
    DirectRoom,
    IndirectRoom,
    InvisibleDoor,
}

/// One ground-truth component a cascade must reconstruct.
#[derive(Debug, Clone)]
pub struct TargetComponent {
    pub ctype: ComponentType,
    pub mask: Mask,
    pub bbox: BBox,
    pub kind: TargetKind,
}

/// An invisible room is direct when its mask, dilated by this Chebyshev
/// radius, touches a visible door stamp.
pub const DIRECT_ROOM_DILATE_RADIUS: i64 = 3;

/// Filtered ground truth per cascade: stage 1 direct invisible rooms, stage 2
/// adds indirect invisible rooms, stage 3 adds invisible doors.
pub fn cascade_targets(stage: u8, gt: &Floorplan) -> Result<Vec<TargetComponent>> {
    if !(1..=3).contains(&stage) {
        return Err(Error::BadConfig(format!("cascade stage {stage} out of range")));
    }
    let (w, h) = gt.canvas;

    let mut visible_door_pixels: Vec<(usize, usize)> = Vec::new();
    for door in gt.visible_doors() {
        visible_door_pixels.extend(rasterize_component(door, w, h).iter_set());
    }

    let mut targets = Vec::new();
    for comp in &gt.components {
        if comp.visible {
            continue;
        }
        let mask = rasterize_component(comp, w, h);
        if mask.is_empty() {
            return Err(Error::EmptyMask);
        }
        let bbox = bbox_of(&mask)?;
        let kind = if comp.ctype.is_door() {
            TargetKind::InvisibleDoor
        } else {
            let direct = visible_door_pixels.iter().any(|&(dx, dy)| {
                let r = DIRECT_ROOM_DILATE_RADIUS;
                ((dx as i64 - r)..=(dx as i64 + r)).any(|x| {
                    ((dy as i64 - r)..=(dy as i64 + r)).any(|y| mask.get_i(x, y))
                })
            });
            if direct {
                TargetKind::DirectRoom
            } else {
                TargetKind::IndirectRoom
            }
        };
        let keep = matches!(
            (stage, kind),
            (_, TargetKind::DirectRoom)
                | (2 | 3, TargetKind::IndirectRoom)
                | (3, TargetKind::InvisibleDoor)
        );
        if keep {
            targets.push(TargetComponent { ctype: comp.ctype, mask, bbox, kind });
        }
    }
    Ok(targets)
}

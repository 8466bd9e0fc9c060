//! Property tests for the algebraic invariants: IoU symmetry and bounds,
//! raster translation invariance, bbox exactness on rectangles, and
//! permutation stability of matching and losses.

use floorhal_core::*;
use ndarray::Array2;
use proptest::prelude::*;

fn arb_bbox() -> impl Strategy<Value = BBox> {
    (0.05f64..0.95, 0.05f64..0.95, 0.02f64..0.5, 0.02f64..0.5)
        .prop_map(|(cx, cy, w, h)| BBox::new(cx, cy, w, h))
}

fn arb_mask(side: usize) -> impl Strategy<Value = Mask> {
    proptest::collection::vec(any::<bool>(), side * side).prop_map(move |bits| {
        let mut m = Mask::new(side, side);
        for (i, b) in bits.into_iter().enumerate() {
            if b {
                m.set(i % side, i / side, true);
            }
        }
        m
    })
}

proptest! {
    #[test]
    fn iou_boxes_symmetric_bounded(a in arb_bbox(), b in arb_bbox()) {
        let ab = plan::iou_boxes(&a, &b);
        let ba = plan::iou_boxes(&b, &a);
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(plan::iou_boxes(&a, &a), 1.0);
        if ab == 1.0 {
            prop_assert_eq!((a.x_range(), a.y_range()), (b.x_range(), b.y_range()));
        }
    }

    #[test]
    fn generated_plans_roundtrip_json(seed in 0u64..300) {
        let rooms = 2 + (seed % 5) as usize;
        let cfg = SynthConfig { seed, n_rooms: rooms, n_doors: rooms - 1, canvas: 64 };
        let (partial, full) = gen_synthetic(&cfg).unwrap();
        for plan in [partial, full] {
            let text = plan.to_json().unwrap();
            prop_assert_eq!(Floorplan::from_json(&text).unwrap(), plan);
        }
    }

    #[test]
    fn convex_room_rasterizes_to_one_component(
        x0 in 1usize..20, y0 in 1usize..20, w in 2usize..12, h in 2usize..12,
    ) {
        prop_assume!(x0 + w <= 40 && y0 + h <= 40);
        let mut plan = Floorplan::new("c", (40, 40));
        plan.components.push(Component::room(
            ComponentType::Corridor,
            true,
            vec![
                [x0 as f64, y0 as f64],
                [(x0 + w) as f64, y0 as f64],
                [(x0 + w) as f64, (y0 + h) as f64],
                [x0 as f64, (y0 + h) as f64],
            ],
        ));
        let stack = rasterize(&plan, false).unwrap();
        let comps = connected_components(stack.channel(ComponentType::Corridor));
        prop_assert_eq!(comps.len(), 1);
    }

    #[test]
    fn iou_masks_symmetric_bounded(a in arb_mask(12), b in arb_mask(12)) {
        prop_assume!(!a.is_empty() || !b.is_empty());
        let ab = iou_masks(&a, &b).unwrap();
        let ba = iou_masks(&b, &a).unwrap();
        prop_assert_eq!(ab, ba);
        prop_assert!((0.0..=1.0).contains(&ab));
        // IoU is 1 exactly when the pixel sets agree.
        prop_assert_eq!(ab == 1.0, a == b);
    }

    #[test]
    fn rasterize_counts_are_translation_invariant(
        x0 in 0usize..20, y0 in 0usize..20, w in 3usize..10, h in 3usize..10,
        dx in 0usize..20, dy in 0usize..20,
    ) {
        let rect = |x0: f64, y0: f64, x1: f64, y1: f64| {
            vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]]
        };
        let mut plan_a = Floorplan::new("a", (48, 48));
        plan_a.components.push(Component::room(
            ComponentType::Kitchen,
            true,
            rect(x0 as f64, y0 as f64, (x0 + w) as f64, (y0 + h) as f64),
        ));
        let mut plan_b = Floorplan::new("b", (48, 48));
        plan_b.components.push(Component::room(
            ComponentType::Kitchen,
            true,
            rect((x0 + dx) as f64, (y0 + dy) as f64, (x0 + dx + w) as f64, (y0 + dy + h) as f64),
        ));
        prop_assume!(x0 + dx + w <= 48 && y0 + dy + h <= 48);
        let a = rasterize(&plan_a, false).unwrap();
        let b = rasterize(&plan_b, false).unwrap();
        for (ca, cb) in a.channels.iter().zip(&b.channels) {
            prop_assert_eq!(ca.count(), cb.count());
        }
    }

    #[test]
    fn bbox_of_exact_on_rectangles(
        x0 in 0usize..30, y0 in 0usize..30, w in 1usize..12, h in 1usize..12,
    ) {
        prop_assume!(x0 + w <= 40 && y0 + h <= 40);
        let mut plan = Floorplan::new("r", (40, 40));
        plan.components.push(Component::room(
            ComponentType::Balcony,
            true,
            vec![
                [x0 as f64, y0 as f64],
                [(x0 + w) as f64, y0 as f64],
                [(x0 + w) as f64, (y0 + h) as f64],
                [x0 as f64, (y0 + h) as f64],
            ],
        ));
        prop_assume!(w >= 1 && h >= 1);
        let stack = rasterize(&plan, false).unwrap();
        let bbox = bbox_of(stack.channel(ComponentType::Balcony)).unwrap();
        let expect = BBox::new(
            (x0 as f64 + w as f64 / 2.0) / 40.0,
            (y0 as f64 + h as f64 / 2.0) / 40.0,
            w as f64 / 40.0,
            h as f64 / 40.0,
        );
        prop_assert!((bbox.cx - expect.cx).abs() < 1e-12);
        prop_assert!((bbox.cy - expect.cy).abs() < 1e-12);
        prop_assert!((bbox.w - expect.w).abs() < 1e-12);
        prop_assert!((bbox.h - expect.h).abs() < 1e-12);
    }

    #[test]
    fn matching_and_losses_stable_under_pred_permutation(
        seed in 0u64..5000,
        n_gt in 1usize..5,
        extra in 0usize..3,
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n_pred = n_gt + extra;
        let preds: Vec<(Vec<f64>, BBox)> = (0..n_pred)
            .map(|_| {
                let logits: Vec<f64> = (0..NUM_CLASSES).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let probs = hungarian::softmax64(&logits);
                (probs, BBox::new(
                    rng.gen_range(0.2..0.8),
                    rng.gen_range(0.2..0.8),
                    rng.gen_range(0.05..0.4),
                    rng.gen_range(0.05..0.4),
                ))
            })
            .collect();
        let gts: Vec<(ComponentType, BBox)> = (0..n_gt)
            .map(|_| {
                (
                    ComponentType::from_class_index(rng.gen_range(0..14)).unwrap(),
                    BBox::new(
                        rng.gen_range(0.2..0.8),
                        rng.gen_range(0.2..0.8),
                        rng.gen_range(0.05..0.4),
                        rng.gen_range(0.05..0.4),
                    ),
                )
            })
            .collect();

        // Rotate the prediction list by one.
        let mut rotated = preds.clone();
        rotated.rotate_left(1);
        let base = match_hungarian(&preds, &gts).unwrap();
        let perm = match_hungarian(&rotated, &gts).unwrap();
        // The assignment permutes with the predictions (rotate_left(1):
        // original index i lives at (i + n - 1) % n).
        let n = preds.len();
        for (&(p, g), &(pp, gg)) in base.pairs.iter().zip(&perm.pairs) {
            prop_assert_eq!(g, gg);
            prop_assert_eq!((p + n - 1) % n, pp);
        }

        // Loss values are unchanged by the permutation.
        let gt_types: Vec<ComponentType> = gts.iter().map(|(t, _)| *t).collect();
        let gt_boxes: Vec<BBox> = gts.iter().map(|(_, b)| *b).collect();
        let weights = ClassWeights::default();
        let logits_of = |items: &[(Vec<f64>, BBox)]| {
            Array2::from_shape_fn((items.len(), NUM_CLASSES), |(i, j)| items[i].0[j].ln())
        };
        let boxes_of = |items: &[(Vec<f64>, BBox)]| -> Vec<BBox> {
            items.iter().map(|(_, b)| *b).collect()
        };
        let (t1, _) = loss_type(&logits_of(&preds), &base, &gt_types, &weights);
        let (t2, _) = loss_type(&logits_of(&rotated), &perm, &gt_types, &weights);
        prop_assert!((t1 - t2).abs() < 1e-9);
        let (b1, _) = loss_bbox(&boxes_of(&preds), &gt_boxes, &base).unwrap();
        let (b2, _) = loss_bbox(&boxes_of(&rotated), &gt_boxes, &perm).unwrap();
        prop_assert!((b1 - b2).abs() < 1e-9);
    }

    #[test]
    fn loss_bounds_hold(seed in 0u64..2000) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let assignment = Assignment { pairs: vec![(0, 0)] };
        let logits = Array2::from_shape_fn((2, NUM_CLASSES), |_| rng.gen_range(-4.0..4.0));
        let (t, _) = loss_type(&logits, &assignment, &[ComponentType::Kitchen], &ClassWeights::default());
        prop_assert!(t >= 0.0);
        let bp = BBox::new(rng.gen_range(0.2..0.8), rng.gen_range(0.2..0.8), 0.2, 0.2);
        let bg = BBox::new(rng.gen_range(0.2..0.8), rng.gen_range(0.2..0.8), 0.2, 0.2);
        let (b, _) = loss_bbox(&[bp], &[bg], &assignment).unwrap();
        prop_assert!(b >= -2.0);
        let ml = vec![Array2::from_shape_fn((3, 3), |_| rng.gen_range(-4.0..4.0))];
        let gm = vec![Array2::from_shape_fn((3, 3), |_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 })];
        let (s, _) = loss_seg(&ml, &gm, &assignment).unwrap();
        prop_assert!(s >= 0.0);
    }
}

//! Post-refinement: artifact-suppression heuristics around a pluggable
//! mask refiner, door snapping, and rectilinear polygonization.

use crate::error::{Error, Result};
use crate::plan::{Component, Floorplan, Geometry};
use crate::raster::{
    connected_components, door_stamp_pixels, fill_diagonal_pinches, fill_polygon, iou_masks,
    largest_component, rasterize_component, trace_boundary, Mask,
};

/// Pluggable mask-to-mask transform applied once per component per step.
pub trait MaskRefiner {
    fn refine(&self, mask: &Mask) -> Mask;
    fn name(&self) -> &'static str;
}

/// Leaves masks untouched; useful as a baseline and in tests.
pub struct IdentityRefiner;

impl MaskRefiner for IdentityRefiner {
    fn refine(&self, mask: &Mask) -> Mask {
        mask.clone()
    }
    fn name(&self) -> &'static str {
        "identity"
    }
}

fn morph(mask: &Mask, dilate: bool) -> Mask {
    let mut out = Mask::new(mask.w, mask.h);
    for y in 0..mask.h as i64 {
        for x in 0..mask.w as i64 {
            let neighborhood = [(x, y), (x - 1, y), (x + 1, y), (x, y - 1), (x, y + 1)];
            let hit = if dilate {
                neighborhood.iter().any(|&(nx, ny)| mask.get_i(nx, ny))
            } else {
                neighborhood.iter().all(|&(nx, ny)| mask.get_i(nx, ny))
            };
            if hit {
                out.set(x as usize, y as usize, true);
            }
        }
    }
    out
}

/// Morphological close then open with a radius-1 cross element; smooths
/// single-pixel spurs and fills single-pixel gaps.
pub struct MorphRefiner;

impl MaskRefiner for MorphRefiner {
    fn refine(&self, mask: &Mask) -> Mask {
        let closed = morph(&morph(mask, true), false);
        morph(&morph(&closed, false), true)
    }
    fn name(&self) -> &'static str {
        "morph"
    }
}

/// Heuristic 1: if the refined mask broke into several connected components,
/// keep the one with the highest IoU against the original reconstruction.
/// An empty refined mask falls back to the original.
pub fn keep_best_component(refined: &Mask, original: &Mask) -> Mask {
    if refined.is_empty() {
        return original.clone();
    }
    let mut best: Option<(f64, Mask)> = None;
    for comp in connected_components(refined) {
        let iou = if original.is_empty() { 0.0 } else { iou_masks(&comp, original).unwrap() };
        match &best {
            Some((best_iou, _)) if *best_iou >= iou => {}
            _ => best = Some((iou, comp)),
        }
    }
    best.expect("nonempty refined mask has components").1
}

/// Heuristic 2: accept the refined mask only while it keeps at least 50%
/// IoU with the original reconstruction; otherwise keep the previous
/// iteration's mask.
pub fn iou_gate(refined: &Mask, previous: &Mask, original: &Mask) -> Mask {
    let iou = if refined.is_empty() && original.is_empty() {
        1.0
    } else if refined.is_empty() || original.is_empty() {
        0.0
    } else {
        iou_masks(refined, original).unwrap()
    };
    if iou >= 0.5 {
        refined.clone()
    } else {
        previous.clone()
    }
}

/// Room pixels 4-adjacent to a non-room pixel, unioned over all rooms.
fn boundary_pixels(rooms: &[Mask]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for room in rooms {
        for (x, y) in room.iter_set() {
            let (xi, yi) = (x as i64, y as i64);
            let edge = [(xi - 1, yi), (xi + 1, yi), (xi, yi - 1), (xi, yi + 1)]
                .iter()
                .any(|&(nx, ny)| !room.get_i(nx, ny));
            if edge {
                out.push((x, y));
            }
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// Snapped door stamps plus the boundary pixel each one landed on (`None`
/// for doors whose mask was empty and therefore left untouched).
#[derive(Debug, Clone, PartialEq)]
pub struct SnappedDoors {
    pub masks: Vec<Mask>,
    pub centers: Vec<Option<(usize, usize)>>,
}

/// Heuristic 3: re-center each door's 2x2 stamp on the room-boundary pixel
/// nearest to the door's center of mass (Euclidean; ties by lexicographic
/// (x, y)).
pub fn snap_doors(doors: &[Mask], rooms: &[Mask]) -> Result<SnappedDoors> {
    let boundary = boundary_pixels(rooms);
    if boundary.is_empty() {
        return Err(Error::NoRooms);
    }
    let mut snapped = Vec::with_capacity(doors.len());
    let mut centers = Vec::with_capacity(doors.len());
    for door in doors {
        if door.is_empty() {
            snapped.push(door.clone());
            centers.push(None);
            continue;
        }
        let (mut cx, mut cy, mut n) = (0.0f64, 0.0f64, 0.0f64);
        for (x, y) in door.iter_set() {
            cx += x as f64;
            cy += y as f64;
            n += 1.0;
        }
        cx /= n;
        cy /= n;
        // Boundary list is sorted, so the first strict improvement realizes
        // the lexicographic tie-break.
        let mut best = boundary[0];
        let mut best_d = f64::INFINITY;
        for &(bx, by) in &boundary {
            let d = (bx as f64 - cx).powi(2) + (by as f64 - cy).powi(2);
            if d < best_d {
                best_d = d;
                best = (bx, by);
            }
        }
        let mut stamp = Mask::new(door.w, door.h);
        for (x, y) in door_stamp_pixels([best.0 as f64, best.1 as f64], door.w, door.h) {
            stamp.set(x, y, true);
        }
        snapped.push(stamp);
        centers.push(Some(best));
    }
    Ok(SnappedDoors { masks: snapped, centers })
}

/// Iterative refinement: per step, apply the refiner to every component mask,
/// keep the best connected component, and gate on IoU with the original
/// reconstruction. Doors are snapped once, after the final step.
pub fn refine_iterate(
    plan: &Floorplan,
    refiner: &dyn MaskRefiner,
    steps: usize,
) -> Result<Floorplan> {
    let (w, h) = plan.canvas;
    let originals: Vec<Mask> =
        plan.components.iter().map(|c| rasterize_component(c, w, h)).collect();
    let mut state = originals.clone();

    for _ in 0..steps {
        for (i, original) in originals.iter().enumerate() {
            let refined = refiner.refine(&state[i]);
            let refined = keep_best_component(&refined, original);
            state[i] = iou_gate(&refined, &state[i], original);
        }
    }

    let room_masks: Vec<Mask> = plan
        .components
        .iter()
        .zip(&state)
        .filter(|(c, _)| c.ctype.is_room())
        .map(|(_, m)| m.clone())
        .collect();
    let door_masks: Vec<Mask> = plan
        .components
        .iter()
        .zip(&state)
        .filter(|(c, _)| c.ctype.is_door())
        .map(|(_, m)| m.clone())
        .collect();
    let door_centers = snap_doors(&door_masks, &room_masks)?.centers;

    let mut out = Floorplan::new(plan.id.clone(), plan.canvas);
    let mut door_idx = 0usize;
    for (comp, mask) in plan.components.iter().zip(&state) {
        if comp.ctype.is_door() {
            let center = door_centers[door_idx];
            door_idx += 1;
            let geometry = match center {
                Some((bx, by)) => Geometry::Point([bx as f64, by as f64]),
                None => comp.geometry.clone(),
            };
            out.components.push(Component { ctype: comp.ctype, visible: comp.visible, geometry });
        } else if mask.is_empty() {
            out.components.push(comp.clone());
        } else {
            let blob = fill_diagonal_pinches(&largest_component(mask).expect("nonempty"));
            let ring = polygonize(&blob, 1.0)?;
            out.components.push(Component::room(comp.ctype, comp.visible, ring));
        }
    }
    Ok(out)
}

fn edge_len(a: [i64; 2], b: [i64; 2]) -> i64 {
    (a[0] - b[0]).abs() + (a[1] - b[1]).abs()
}

/// Drop duplicate vertices and merge collinear runs, until stable.
fn cleanup_ring(ring: &mut Vec<[i64; 2]>) {
    loop {
        let n = ring.len();
        if n < 3 {
            return;
        }
        let mut out: Vec<[i64; 2]> = Vec::with_capacity(n);
        for i in 0..n {
            let prev = ring[(i + n - 1) % n];
            let cur = ring[i];
            let next = ring[(i + 1) % n];
            if cur == next {
                continue;
            }
            if (prev[0] == cur[0] && cur[0] == next[0]) || (prev[1] == cur[1] && cur[1] == next[1])
            {
                continue;
            }
            out.push(cur);
        }
        let changed = out.len() != ring.len();
        *ring = out;
        if !changed {
            return;
        }
    }
}

/// Trace a mask's outer boundary and simplify it to axis-aligned segments.
/// Jogs shorter than `tolerance` are flattened onto the longer neighboring
/// edge; with tolerance <= 1 the polygon reproduces the (hole-free) mask
/// exactly under re-rasterization.
pub fn polygonize(mask: &Mask, tolerance: f64) -> Result<Vec<[f64; 2]>> {
    let mut ring = trace_boundary(mask)?;
    cleanup_ring(&mut ring);
    if tolerance > 1.0 {
        let budget = ring.len();
        for _ in 0..budget {
            let n = ring.len();
            if n < 6 {
                break;
            }
            let mut applied = false;
            for i in 0..n {
                let a = ring[(i + n - 1) % n];
                let b = ring[i];
                let c = ring[(i + 1) % n];
                let d = ring[(i + 2) % n];
                if (edge_len(b, c) as f64) >= tolerance {
                    continue;
                }
                // Flatten the jog by moving the shorter neighbor edge onto
                // the other's line; rectilinearity decides the axis.
                let vertical_jog = b[0] == c[0];
                let (ai, bi) = ((i + n - 1) % n, i);
                let (ci, di) = ((i + 1) % n, (i + 2) % n);
                if edge_len(a, b) <= edge_len(c, d) {
                    if vertical_jog {
                        ring[ai][1] = c[1];
                        ring[bi][1] = c[1];
                    } else {
                        ring[ai][0] = c[0];
                        ring[bi][0] = c[0];
                    }
                } else if vertical_jog {
                    ring[ci][1] = b[1];
                    ring[di][1] = b[1];
                } else {
                    ring[ci][0] = b[0];
                    ring[di][0] = b[0];
                }
                cleanup_ring(&mut ring);
                applied = true;
                break;
            }
            if !applied {
                break;
            }
        }
    }
    Ok(ring.into_iter().map(|v| [v[0] as f64, v[1] as f64]).collect())
}

/// Re-rasterize a polygon onto a canvas; used to check polygonize quality.
pub fn rasterize_polygon(poly: &[[f64; 2]], w: usize, h: usize) -> Mask {
    let mut mask = Mask::new(w, h);
    fill_polygon(&mut mask, poly);
    mask
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::ComponentType;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mask_rect(w: usize, h: usize, x0: usize, y0: usize, x1: usize, y1: usize) -> Mask {
        let mut m = Mask::new(w, h);
        for y in y0..y1 {
            for x in x0..x1 {
                m.set(x, y, true);
            }
        }
        m
    }

    #[test]
    fn keep_best_component_picks_highest_iou() {
        let original = mask_rect(32, 32, 2, 2, 12, 12);
        let mut refined = mask_rect(32, 32, 2, 2, 12, 10); // IoU 0.8 piece
        for (x, y) in mask_rect(32, 32, 20, 20, 24, 24).iter_set() {
            refined.set(x, y, true); // disjoint IoU-0 piece
        }
        let kept = keep_best_component(&refined, &original);
        assert_eq!(kept, mask_rect(32, 32, 2, 2, 12, 10));
    }

    #[test]
    fn keep_best_component_single_and_empty() {
        let original = mask_rect(16, 16, 1, 1, 6, 6);
        assert_eq!(keep_best_component(&original, &original), original);
        assert_eq!(keep_best_component(&Mask::new(16, 16), &original), original);
    }

    #[test]
    fn iou_gate_threshold_behavior() {
        let original = mask_rect(32, 32, 0, 0, 10, 10);
        let previous = mask_rect(32, 32, 0, 0, 10, 9);
        // IoU exactly 0.5: 50 of 100 pixels.
        let half = mask_rect(32, 32, 0, 0, 10, 5);
        assert_eq!(iou_gate(&half, &previous, &original), half);
        // IoU 0.4 -> previous wins.
        let low = mask_rect(32, 32, 0, 0, 10, 4);
        assert_eq!(iou_gate(&low, &previous, &original), previous);
        assert_eq!(iou_gate(&original, &previous, &original), original);
        // Erased mask reverts.
        assert_eq!(iou_gate(&Mask::new(32, 32), &previous, &original), previous);
    }

    #[test]
    fn snap_moves_door_to_nearest_boundary() {
        let room = mask_rect(32, 32, 0, 0, 32, 15); // boundary row y=14 (plus edges)
        let mut door = Mask::new(32, 32);
        for (x, y) in [(10, 17), (11, 17), (10, 18), (11, 18)] {
            door.set(x, y, true);
        }
        let SnappedDoors { masks: snapped, centers } = snap_doors(&[door], &[room]).unwrap();
        // Center of mass (10.5, 17.5); nearest boundary pixel is (10, 14)
        // with the lexicographic tie-break over (11, 14).
        assert_eq!(centers[0], Some((10, 14)));
        assert_eq!(snapped[0].count(), 4);
        assert!(snapped[0].get(10, 14) && snapped[0].get(11, 15));
    }

    #[test]
    fn snap_requires_rooms() {
        let door = mask_rect(8, 8, 2, 2, 4, 4);
        assert!(matches!(snap_doors(&[door], &[]), Err(Error::NoRooms)));
    }

    fn l_plan() -> Floorplan {
        let mut plan = Floorplan::new("r", (32, 32));
        plan.components.push(Component::room(
            ComponentType::LivingRoom,
            true,
            vec![[2.0, 2.0], [12.0, 2.0], [12.0, 20.0], [6.0, 20.0], [6.0, 10.0], [2.0, 10.0]],
        ));
        plan.components.push(Component::door(ComponentType::StandardDoor, true, [14.0, 6.0]));
        plan
    }

    #[test]
    fn identity_refiner_keeps_masks_and_snaps_doors() {
        let plan = l_plan();
        let refined = refine_iterate(&plan, &IdentityRefiner, 3).unwrap();
        // Room mask unchanged.
        let before = rasterize_component(&plan.components[0], 32, 32);
        let after = rasterize_component(&refined.components[0], 32, 32);
        assert_eq!(before, after);
        // Door center lies on the room boundary.
        let room_mask = before;
        match refined.components[1].geometry {
            Geometry::Point([x, y]) => {
                let (xi, yi) = (x as i64, y as i64);
                assert!(room_mask.get_i(xi, yi));
                let edge = [(xi - 1, yi), (xi + 1, yi), (xi, yi - 1), (xi, yi + 1)]
                    .iter()
                    .any(|&(nx, ny)| !room_mask.get_i(nx, ny));
                assert!(edge);
            }
            _ => panic!("door must stay a point"),
        }
    }

    #[test]
    fn refine_is_idempotent_for_identity() {
        let plan = l_plan();
        let once = refine_iterate(&plan, &IdentityRefiner, 1).unwrap();
        let thrice = refine_iterate(&plan, &IdentityRefiner, 3).unwrap();
        assert_eq!(once, thrice);
        let zero = refine_iterate(&plan, &IdentityRefiner, 0).unwrap();
        assert_eq!(zero, once); // steps=0 is snap-only, identity steps change nothing
    }

    struct Eraser;
    impl MaskRefiner for Eraser {
        fn refine(&self, mask: &Mask) -> Mask {
            Mask::new(mask.w, mask.h)
        }
        fn name(&self) -> &'static str {
            "eraser"
        }
    }

    #[test]
    fn gate_reverts_erased_component() {
        let plan = l_plan();
        let refined = refine_iterate(&plan, &Eraser, 2).unwrap();
        let before = rasterize_component(&plan.components[0], 32, 32);
        let after = rasterize_component(&refined.components[0], 32, 32);
        assert_eq!(before, after);
    }

    #[test]
    fn polygonize_square_and_l() {
        let square = mask_rect(16, 16, 3, 3, 7, 7);
        let poly = polygonize(&square, 1.0).unwrap();
        assert_eq!(poly.len(), 4);
        let l = rasterize_component(&l_plan().components[0], 32, 32);
        let poly_l = polygonize(&l, 1.0).unwrap();
        assert_eq!(poly_l.len(), 6);
        assert!(matches!(polygonize(&Mask::new(4, 4), 1.0), Err(Error::EmptyMask)));
    }

    #[test]
    fn polygonize_tolerance_flattens_jog() {
        // 8-wide bar with a 1px-deep, 2px-wide notch on top.
        let mut m = mask_rect(24, 24, 2, 3, 10, 8);
        m.set(4, 2, true);
        m.set(5, 2, true);
        let exact = polygonize(&m, 1.0).unwrap();
        assert_eq!(exact.len(), 8);
        let simplified = polygonize(&m, 2.0).unwrap();
        assert_eq!(simplified.len(), 4);
    }

    fn random_blob(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Mask {
        let mut m = Mask::new(w, h);
        for _ in 0..rng.gen_range(2..6) {
            let x0 = rng.gen_range(1..w - 6);
            let y0 = rng.gen_range(1..h - 6);
            let bw = rng.gen_range(3..(w - x0).min(12));
            let bh = rng.gen_range(3..(h - y0).min(12));
            for (x, y) in mask_rect(w, h, x0, y0, x0 + bw, y0 + bh).iter_set() {
                m.set(x, y, true);
            }
        }
        let blob = largest_component(&m).unwrap();
        // Fill interior holes so the blob is exactly representable by its
        // outer ring.
        let mut outside = Mask::new(w, h);
        let mut queue: Vec<(usize, usize)> = Vec::new();
        for x in 0..w {
            for y in [0, h - 1] {
                if !blob.get(x, y) && !outside.get(x, y) {
                    outside.set(x, y, true);
                    queue.push((x, y));
                }
            }
        }
        for y in 0..h {
            for x in [0, w - 1] {
                if !blob.get(x, y) && !outside.get(x, y) {
                    outside.set(x, y, true);
                    queue.push((x, y));
                }
            }
        }
        while let Some((x, y)) = queue.pop() {
            let (xi, yi) = (x as i64, y as i64);
            for (nx, ny) in [(xi - 1, yi), (xi + 1, yi), (xi, yi - 1), (xi, yi + 1)] {
                if nx >= 0
                    && ny >= 0
                    && (nx as usize) < w
                    && (ny as usize) < h
                    && !blob.get_i(nx, ny)
                    && !outside.get(nx as usize, ny as usize)
                {
                    outside.set(nx as usize, ny as usize, true);
                    queue.push((nx as usize, ny as usize));
                }
            }
        }
        let mut filled = Mask::new(w, h);
        for y in 0..h {
            for x in 0..w {
                if blob.get(x, y) || !outside.get(x, y) {
                    filled.set(x, y, true);
                }
            }
        }
        filled
    }

    #[test]
    fn polygonize_roundtrip_iou_on_random_blobs() {
        let mut rng = ChaCha8Rng::seed_from_u64(505);
        for trial in 0..50 {
            let blob = random_blob(&mut rng, 24, 24);
            let poly = polygonize(&blob, 1.0).unwrap();
            let refilled = rasterize_polygon(&poly, 24, 24);
            let iou = iou_masks(&refilled, &blob).unwrap();
            assert!(iou >= 0.95, "trial {trial}: iou={iou}");
        }
    }
}

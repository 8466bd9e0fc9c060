//! Seeded synthetic floorplans: recursive rectangle splitting on a grid,
//! type assignment by inverse class-weight frequency, doors on shared walls
//! with guaranteed door-connectivity, and a connected visible subset.

use crate::error::{Error, Result};
use crate::loss::ClassWeights;
use crate::plan::{Component, ComponentType, Floorplan};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_rooms: usize,
    pub n_doors: usize,
    pub canvas: usize,
}

impl Default for SynthConfig {
    fn default() -> SynthConfig {
        SynthConfig { seed: 0, n_rooms: 6, n_doors: 6, canvas: 64 }
    }
}

const MIN_SIDE: i64 = 6;
const MARGIN: i64 = 2;
/// Minimum shared-wall overlap for two rooms to count as adjacent; leaves
/// room for the 2x2 door stamp plus slack.
const ADJ_MIN_OVERLAP: i64 = 3;

#[derive(Debug, Clone, Copy)]
struct Rect {
    x0: i64,
    y0: i64,
    x1: i64,
    y1: i64,
}

impl Rect {
    fn w(&self) -> i64 {
        self.x1 - self.x0
    }
    fn h(&self) -> i64 {
        self.y1 - self.y0
    }
}

/// A shared wall between two leaves: axis, fixed coordinate, overlap span.
#[derive(Debug, Clone, Copy)]
struct Wall {
    a: usize,
    b: usize,
    vertical: bool,
    at: i64,
    lo: i64,
    hi: i64,
}

fn split_rects(rng: &mut ChaCha8Rng, outer: Rect, n: usize) -> Result<Vec<Rect>> {
    let mut leaves = vec![outer];
    while leaves.len() < n {
        // Split the largest splittable leaf.
        let mut candidates: Vec<usize> = (0..leaves.len())
            .filter(|&i| leaves[i].w() >= 2 * MIN_SIDE || leaves[i].h() >= 2 * MIN_SIDE)
            .collect();
        candidates.sort_by_key(|&i| -(leaves[i].w() * leaves[i].h()));
        let Some(&idx) = candidates.first() else {
            return Err(Error::BadConfig(format!(
                "cannot fit {n} rooms of side >= {MIN_SIDE} in the canvas"
            )));
        };
        let r = leaves[idx];
        let vertical = if r.w() >= 2 * MIN_SIDE && r.h() >= 2 * MIN_SIDE {
            if r.w() == r.h() {
                rng.gen::<bool>()
            } else {
                r.w() > r.h()
            }
        } else {
            r.w() >= 2 * MIN_SIDE
        };
        if vertical {
            let cut = rng.gen_range(r.x0 + MIN_SIDE..=r.x1 - MIN_SIDE);
            leaves[idx] = Rect { x1: cut, ..r };
            leaves.push(Rect { x0: cut, ..r });
        } else {
            let cut = rng.gen_range(r.y0 + MIN_SIDE..=r.y1 - MIN_SIDE);
            leaves[idx] = Rect { y1: cut, ..r };
            leaves.push(Rect { y0: cut, ..r });
        }
    }
    Ok(leaves)
}

fn shared_walls(leaves: &[Rect]) -> Vec<Wall> {
    let mut walls = Vec::new();
    for i in 0..leaves.len() {
        for j in (i + 1)..leaves.len() {
            let (a, b) = (leaves[i], leaves[j]);
            // Vertical wall: a's right edge meets b's left edge (or reverse).
            for (l, r, li, ri) in [(a, b, i, j), (b, a, j, i)] {
                if l.x1 == r.x0 {
                    let lo = l.y0.max(r.y0);
                    let hi = l.y1.min(r.y1);
                    if hi - lo >= ADJ_MIN_OVERLAP {
                        walls.push(Wall { a: li, b: ri, vertical: true, at: l.x1, lo, hi });
                    }
                }
                if l.y1 == r.y0 {
                    let lo = l.x0.max(r.x0);
                    let hi = l.x1.min(r.x1);
                    if hi - lo >= ADJ_MIN_OVERLAP {
                        walls.push(Wall { a: li, b: ri, vertical: false, at: l.y1, lo, hi });
                    }
                }
            }
        }
    }
    walls
}

fn sample_type<R: Rng>(rng: &mut R, types: &[ComponentType], weights: &ClassWeights) -> ComponentType {
    // Frequency inversely proportional to the loss weight, mirroring how the
    // weights were derived from category counts.
    let freqs: Vec<f64> = types.iter().map(|t| 1.0 / weights.get(*t)).collect();
    let total: f64 = freqs.iter().sum();
    let mut pick = rng.gen_range(0.0..total);
    for (t, f) in types.iter().zip(&freqs) {
        if pick < *f {
            return *t;
        }
        pick -= f;
    }
    *types.last().unwrap()
}

fn door_center(wall: &Wall) -> [f64; 2] {
    let mid = wall.lo + (wall.hi - wall.lo - 2) / 2;
    if wall.vertical {
        [wall.at as f64 - 0.5, mid as f64 + 0.5]
    } else {
        [mid as f64 + 0.5, wall.at as f64 - 0.5]
    }
}

/// Generate a (partial, full) floorplan pair. The full plan is door-connected
/// with every component's visibility marked; the partial plan contains only
/// the visible components.
pub fn gen_synthetic(cfg: &SynthConfig) -> Result<(Floorplan, Floorplan)> {
    if !(2..=20).contains(&cfg.n_rooms) {
        return Err(Error::BadConfig(format!("n_rooms {} outside [2, 20]", cfg.n_rooms)));
    }
    if cfg.n_doors + 1 < cfg.n_rooms {
        return Err(Error::BadConfig(format!(
            "{} doors cannot connect {} rooms",
            cfg.n_doors, cfg.n_rooms
        )));
    }
    if (cfg.canvas as i64) < 2 * MARGIN + 2 * MIN_SIDE {
        return Err(Error::BadConfig(format!("canvas {} too small", cfg.canvas)));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let outer = Rect {
        x0: MARGIN,
        y0: MARGIN,
        x1: cfg.canvas as i64 - MARGIN,
        y1: cfg.canvas as i64 - MARGIN,
    };
    let leaves = split_rects(&mut rng, outer, cfg.n_rooms)?;
    let mut walls = shared_walls(&leaves);

    // Spanning tree over shuffled walls keeps the house door-connected.
    for i in (1..walls.len()).rev() {
        walls.swap(i, rng.gen_range(0..=i));
    }
    let mut component = (0..cfg.n_rooms).collect::<Vec<usize>>();
    fn find(component: &mut Vec<usize>, i: usize) -> usize {
        if component[i] != i {
            let root = find(component, component[i]);
            component[i] = root;
        }
        component[i]
    }
    let mut tree: Vec<Wall> = Vec::new();
    let mut extra: Vec<Wall> = Vec::new();
    for wall in walls {
        let (ra, rb) = (find(&mut component, wall.a), find(&mut component, wall.b));
        if ra != rb {
            component[ra] = rb;
            tree.push(wall);
        } else {
            extra.push(wall);
        }
    }
    if tree.len() + 1 != cfg.n_rooms {
        return Err(Error::BadConfig("room layout is not connectable".into()));
    }
    if cfg.n_doors > tree.len() + extra.len() {
        return Err(Error::BadConfig(format!(
            "layout offers {} shared walls, {} doors requested",
            tree.len() + extra.len(),
            cfg.n_doors
        )));
    }
    let mut door_walls = tree;
    door_walls.extend(extra.into_iter().take(cfg.n_doors - door_walls.len()));

    // Visible subset: connected in the door graph, at least one room visible
    // and at least one invisible.
    let n_visible = rng.gen_range(1..cfg.n_rooms);
    let start = rng.gen_range(0..cfg.n_rooms);
    let mut visible_rooms = vec![false; cfg.n_rooms];
    visible_rooms[start] = true;
    let mut visible_count = 1;
    while visible_count < n_visible {
        let mut frontier: Vec<usize> = Vec::new();
        for wall in &door_walls {
            for (from, to) in [(wall.a, wall.b), (wall.b, wall.a)] {
                if visible_rooms[from] && !visible_rooms[to] && !frontier.contains(&to) {
                    frontier.push(to);
                }
            }
        }
        frontier.sort_unstable();
        if frontier.is_empty() {
            break;
        }
        let next = frontier[rng.gen_range(0..frontier.len())];
        visible_rooms[next] = true;
        visible_count += 1;
    }

    let room_types: Vec<ComponentType> =
        ComponentType::ALL.iter().copied().filter(|t| t.is_room()).collect();
    let door_types: Vec<ComponentType> =
        ComponentType::ALL.iter().copied().filter(|t| t.is_door()).collect();
    let weights = ClassWeights::default();

    let mut full = Floorplan::new(format!("synth-{:016x}", cfg.seed), (cfg.canvas, cfg.canvas));
    for (i, r) in leaves.iter().enumerate() {
        let ctype = sample_type(&mut rng, &room_types, &weights);
        full.components.push(Component::room(
            ctype,
            visible_rooms[i],
            vec![
                [r.x0 as f64, r.y0 as f64],
                [r.x1 as f64, r.y0 as f64],
                [r.x1 as f64, r.y1 as f64],
                [r.x0 as f64, r.y1 as f64],
            ],
        ));
    }
    for wall in &door_walls {
        let ctype = sample_type(&mut rng, &door_types, &weights);
        let visible = visible_rooms[wall.a] || visible_rooms[wall.b];
        full.components.push(Component::door(ctype, visible, door_center(wall)));
    }
    full.validate()?;

    let mut partial = Floorplan::new(format!("{}-partial", full.id), full.canvas);
    partial.components.extend(full.visible_components().cloned());
    Ok((partial, full))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::cascade_targets;

    #[test]
    fn deterministic_per_seed() {
        let cfg = SynthConfig { seed: 7, n_rooms: 6, n_doors: 7, canvas: 64 };
        let a = gen_synthetic(&cfg).unwrap();
        let b = gen_synthetic(&cfg).unwrap();
        assert_eq!(a, b);
        let c = gen_synthetic(&SynthConfig { seed: 8, ..cfg }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn partial_has_visible_room_and_door() {
        for seed in 0..20 {
            let cfg = SynthConfig { seed, n_rooms: 2, n_doors: 1, canvas: 64 };
            let (partial, full) = gen_synthetic(&cfg).unwrap();
            assert!(partial.visible_rooms().count() >= 1, "seed {seed}");
            assert!(partial.visible_doors().count() >= 1, "seed {seed}");
            assert!(full.components.len() > partial.components.len(), "seed {seed}");
        }
    }

    #[test]
    fn rooms_tile_without_overlap() {
        let cfg = SynthConfig { seed: 3, n_rooms: 8, n_doors: 9, canvas: 64 };
        let (_, full) = gen_synthetic(&cfg).unwrap();
        let mut coverage = crate::raster::Mask::new(64, 64);
        let mut total = 0usize;
        for comp in full.components.iter().filter(|c| c.ctype.is_room()) {
            let mask = crate::raster::rasterize_component(comp, 64, 64);
            total += mask.count();
            coverage.union_with(&mask);
        }
        // Disjoint room interiors: union count equals the sum of counts.
        assert_eq!(coverage.count(), total);
        assert_eq!(full.components.iter().filter(|c| c.ctype.is_room()).count(), 8);
        assert_eq!(full.components.iter().filter(|c| c.ctype.is_door()).count(), 9);
    }

    #[test]
    fn invisible_rooms_classify_without_error() {
        for seed in 0..100 {
            let cfg = SynthConfig { seed, n_rooms: 6, n_doors: 7, canvas: 64 };
            let (_, full) = gen_synthetic(&cfg).unwrap();
            let s2 = cascade_targets(2, &full).unwrap();
            let invisible_rooms =
                full.components.iter().filter(|c| !c.visible && c.ctype.is_room()).count();
            assert_eq!(s2.len(), invisible_rooms, "seed {seed}");
        }
    }

    #[test]
    fn infeasible_configs_error() {
        assert!(matches!(
            gen_synthetic(&SynthConfig { n_rooms: 1, ..SynthConfig::default() }),
            Err(Error::BadConfig(_))
        ));
        assert!(matches!(
            gen_synthetic(&SynthConfig { n_rooms: 6, n_doors: 3, ..SynthConfig::default() }),
            Err(Error::BadConfig(_))
        ));
        assert!(matches!(
            gen_synthetic(&SynthConfig { canvas: 10, ..SynthConfig::default() }),
            Err(Error::BadConfig(_))
        ));
    }
}

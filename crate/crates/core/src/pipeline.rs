//! Input normalization, data augmentation, and splitting a sample into the
//! three encoder branch inputs.

use crate::error::{Error, Result};
use crate::plan::{Component, Floorplan, Geometry};
use crate::raster::{rasterize, rasterize_component, Mask, RasterStack};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Normalization constants for one regime: content is rescaled so its longer
/// side equals `content`, then centered on a `canvas` x `canvas` image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NormalizeSpec {
    pub content: usize,
    pub canvas: usize,
}

/// Test-time regime: fit content into 200 px, pad out to 800 x 800.
pub const NORMALIZE_TEST: NormalizeSpec = NormalizeSpec { content: 200, canvas: 800 };
/// Training regime: fit content into 100 px, pad out to 256 x 256.
pub const NORMALIZE_TRAIN: NormalizeSpec = NormalizeSpec { content: 100, canvas: 256 };

impl NormalizeSpec {
    pub fn for_regime(regime: Regime) -> NormalizeSpec {
        match regime {
            Regime::Train => NORMALIZE_TRAIN,
            Regime::Test => NORMALIZE_TEST,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Train,
    Test,
}

impl std::str::FromStr for Regime {
    type Err = Error;
    fn from_str(s: &str) -> Result<Regime> {
        match s {
            "train" => Ok(Regime::Train),
            "test" => Ok(Regime::Test),
            other => Err(Error::BadConfig(format!("unknown regime {other:?}"))),
        }
    }
}

/// Uniform scale plus placement mapping source content onto the normalized
/// canvas. `x' = ox + (x - src_x0) * scale`, likewise for y.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContentTransform {
    pub src_x0: usize,
    pub src_y0: usize,
    pub src_w: usize,
    pub src_h: usize,
    pub scale: f64,
    pub dst_w: usize,
    pub dst_h: usize,
    pub ox: usize,
    pub oy: usize,
    pub canvas: usize,
}

impl ContentTransform {
    /// Derive the transform from the content bounding box of `stack`.
    pub fn fit(stack: &RasterStack, spec: NormalizeSpec) -> Result<ContentTransform> {
        let any = stack.any_mask();
        let (x0, y0, x1, y1) =
            any.pixel_bbox().ok_or_else(|| Error::EmptyInput("no visible component".into()))?;
        let src_w = x1 + 1 - x0;
        let src_h = y1 + 1 - y0;
        let long = src_w.max(src_h);
        let scale = spec.content as f64 / long as f64;
        let (dst_w, dst_h) = if src_w >= src_h {
            (spec.content, ((src_h as f64 * scale).round() as usize).max(1))
        } else {
            (((src_w as f64 * scale).round() as usize).max(1), spec.content)
        };
        // Centering remainders: floor on the top/left side.
        let ox = (spec.canvas - dst_w) / 2;
        let oy = (spec.canvas - dst_h) / 2;
        Ok(ContentTransform {
            src_x0: x0,
            src_y0: y0,
            src_w,
            src_h,
            scale,
            dst_w,
            dst_h,
            ox,
            oy,
            canvas: spec.canvas,
        })
    }

    /// Resample one mask onto the normalized canvas (nearest neighbor).
    pub fn apply_mask(&self, mask: &Mask) -> Mask {
        let mut out = Mask::new(self.canvas, self.canvas);
        for ty in 0..self.dst_h {
            let sy = self.src_y0 + (((ty as f64 + 0.5) / self.scale).floor() as usize).min(self.src_h - 1);
            for tx in 0..self.dst_w {
                let sx =
                    self.src_x0 + (((tx as f64 + 0.5) / self.scale).floor() as usize).min(self.src_w - 1);
                if sy < mask.h && sx < mask.w && mask.get(sx, sy) {
                    out.set(self.ox + tx, self.oy + ty, true);
                }
            }
        }
        out
    }

    pub fn apply_stack(&self, stack: &RasterStack) -> RasterStack {
        RasterStack {
            w: self.canvas,
            h: self.canvas,
            channels: stack.channels.iter().map(|m| self.apply_mask(m)).collect(),
        }
    }

    pub fn map_point(&self, p: [f64; 2]) -> [f64; 2] {
        [
            self.ox as f64 + (p[0] - self.src_x0 as f64) * self.scale,
            self.oy as f64 + (p[1] - self.src_y0 as f64) * self.scale,
        ]
    }

    pub fn unmap_point(&self, p: [f64; 2]) -> [f64; 2] {
        [
            self.src_x0 as f64 + (p[0] - self.ox as f64) / self.scale,
            self.src_y0 as f64 + (p[1] - self.oy as f64) / self.scale,
        ]
    }

    /// Map a vector plan into the normalized frame.
    pub fn map_plan(&self, plan: &Floorplan) -> Floorplan {
        let limit = self.canvas as f64;
        let map = |p: [f64; 2]| -> [f64; 2] {
            let q = self.map_point(p);
            [q[0].clamp(0.0, limit), q[1].clamp(0.0, limit)]
        };
        Floorplan {
            id: plan.id.clone(),
            canvas: (self.canvas, self.canvas),
            components: plan
                .components
                .iter()
                .map(|comp| {
                    let geometry = match &comp.geometry {
                        Geometry::Polygon(poly) => {
                            Geometry::Polygon(poly.iter().map(|p| map(*p)).collect())
                        }
                        Geometry::Point(c) => Geometry::Point(map(*c)),
                    };
                    Component { ctype: comp.ctype, visible: comp.visible, geometry }
                })
                .collect(),
        }
    }

    /// Resample a normalized-frame mask back onto the original canvas:
    /// each original pixel reads the normalized cell its center maps into.
    pub fn unmap_mask(&self, mask: &Mask, orig: (usize, usize)) -> Mask {
        let mut out = Mask::new(orig.0, orig.1);
        for y in 0..orig.1 {
            for x in 0..orig.0 {
                let p = self.map_point([x as f64 + 0.5, y as f64 + 0.5]);
                let (tx, ty) = (p[0].floor(), p[1].floor());
                if tx >= 0.0
                    && ty >= 0.0
                    && (tx as usize) < mask.w
                    && (ty as usize) < mask.h
                    && mask.get(tx as usize, ty as usize)
                {
                    out.set(x, y, true);
                }
            }
        }
        out
    }
}

fn normalize(plan: &Floorplan, spec: NormalizeSpec) -> Result<RasterStack> {
    let stack = rasterize(plan, true)?;
    let transform = ContentTransform::fit(&stack, spec)?;
    Ok(transform.apply_stack(&stack))
}

/// Test-regime normalization: content rescaled into 200 px, 800 x 800 output.
pub fn normalize_test(plan: &Floorplan) -> Result<RasterStack> {
    normalize(plan, NORMALIZE_TEST)
}

/// Training-regime normalization: content rescaled into 100 px, 256 x 256 output.
pub fn normalize_train(plan: &Floorplan) -> Result<RasterStack> {
    normalize(plan, NORMALIZE_TRAIN)
}

/// Seeded augmentation policy: crop-and-resize, horizontal flip, +/-90
/// rotation. Probabilities in [0, 1]; all randomness flows from `seed`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentConfig {
    pub seed: u64,
    pub flip_prob: f64,
    pub rot_prob: f64,
    pub crop_enabled: bool,
    /// Crop side as a fraction of the canvas, sampled per axis.
    pub crop_min_frac: f64,
    pub crop_max_frac: f64,
}

impl Default for AugmentConfig {
    fn default() -> AugmentConfig {
        AugmentConfig {
            seed: 0,
            flip_prob: 0.5,
            rot_prob: 0.5,
            crop_enabled: true,
            crop_min_frac: 0.6,
            crop_max_frac: 1.0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        let prob_ok = |p: f64| (0.0..=1.0).contains(&p);
        if !prob_ok(self.flip_prob) || !prob_ok(self.rot_prob) {
            return Err(Error::BadConfig("probabilities must lie in [0, 1]".into()));
        }
        if self.crop_enabled
            && !(0.0 < self.crop_min_frac
                && self.crop_min_frac <= self.crop_max_frac
                && self.crop_max_frac <= 1.0)
        {
            return Err(Error::BadConfig("crop fractions must satisfy 0 < min <= max <= 1".into()));
        }
        Ok(())
    }
}

/// Horizontal flip (x mirrored).
pub fn flip_horizontal(stack: &RasterStack) -> RasterStack {
    let mut out = RasterStack::new(stack.w, stack.h);
    for (ci, ch) in stack.channels.iter().enumerate() {
        for (x, y) in ch.iter_set() {
            out.channels[ci].set(stack.w - 1 - x, y, true);
        }
    }
    out
}

/// Rotate by 90 degrees clockwise (canvas dims swap for non-square inputs).
pub fn rotate_cw(stack: &RasterStack) -> RasterStack {
    let mut out = RasterStack::new(stack.h, stack.w);
    for (ci, ch) in stack.channels.iter().enumerate() {
        for (x, y) in ch.iter_set() {
            out.channels[ci].set(stack.h - 1 - y, x, true);
        }
    }
    out
}

/// Rotate by 90 degrees counterclockwise.
pub fn rotate_ccw(stack: &RasterStack) -> RasterStack {
    let mut out = RasterStack::new(stack.h, stack.w);
    for (ci, ch) in stack.channels.iter().enumerate() {
        for (x, y) in ch.iter_set() {
            out.channels[ci].set(y, stack.w - 1 - x, true);
        }
    }
    out
}

fn crop_resize(stack: &RasterStack, cx0: usize, cy0: usize, cw: usize, ch: usize) -> RasterStack {
    let mut out = RasterStack::new(stack.w, stack.h);
    for (ci, channel) in stack.channels.iter().enumerate() {
        for y in 0..stack.h {
            let sy = cy0 + (((y as f64 + 0.5) * ch as f64 / stack.h as f64).floor() as usize).min(ch - 1);
            for x in 0..stack.w {
                let sx =
                    cx0 + (((x as f64 + 0.5) * cw as f64 / stack.w as f64).floor() as usize).min(cw - 1);
                if channel.get(sx, sy) {
                    out.channels[ci].set(x, y, true);
                }
            }
        }
    }
    out
}

/// Apply the augmentation schedule in order: crop-and-resize, horizontal
/// flip, +/-90 rotation. Deterministic given the config seed.
pub fn augment(stack: &RasterStack, cfg: &AugmentConfig) -> Result<RasterStack> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = stack.clone();
    if cfg.crop_enabled {
        let fw = rng.gen_range(cfg.crop_min_frac..=cfg.crop_max_frac);
        let fh = rng.gen_range(cfg.crop_min_frac..=cfg.crop_max_frac);
        let cw = ((stack.w as f64 * fw).round() as usize).clamp(1, stack.w);
        let ch = ((stack.h as f64 * fh).round() as usize).clamp(1, stack.h);
        let cx0 = rng.gen_range(0..=stack.w - cw);
        let cy0 = rng.gen_range(0..=stack.h - ch);
        out = crop_resize(&out, cx0, cy0, cw, ch);
    }
    if rng.gen::<f64>() < cfg.flip_prob {
        out = flip_horizontal(&out);
    }
    if rng.gen::<f64>() < cfg.rot_prob {
        out = if rng.gen::<bool>() { rotate_cw(&out) } else { rotate_ccw(&out) };
    }
    Ok(out)
}

/// Per-branch network inputs for one sample, already normalized.
#[derive(Debug, Clone)]
pub struct BranchInputs {
    /// One stack per visible room, room mask only.
    pub room_images: Vec<RasterStack>,
    /// One stack per visible room, room mask plus its incident doors.
    pub both_images: Vec<RasterStack>,
    /// A single stack containing all visible doors (instance unaware).
    pub door_image: RasterStack,
    /// The transform that carried the plan into the normalized frame.
    pub transform: ContentTransform,
}

/// Door-room incidence radius: 4 px at the training content scale (content
/// long side 100), i.e. 4% of the content long side in source pixels.
const INCIDENCE_RADIUS_TRAIN_PX: f64 = 4.0;

fn point_to_polygon_boundary(p: [f64; 2], poly: &[[f64; 2]]) -> f64 {
    let mut best = f64::INFINITY;
    let n = poly.len();
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let abx = b[0] - a[0];
        let aby = b[1] - a[1];
        let len2 = abx * abx + aby * aby;
        let t = if len2 == 0.0 {
            0.0
        } else {
            (((p[0] - a[0]) * abx + (p[1] - a[1]) * aby) / len2).clamp(0.0, 1.0)
        };
        let dx = p[0] - (a[0] + t * abx);
        let dy = p[1] - (a[1] + t * aby);
        best = best.min((dx * dx + dy * dy).sqrt());
    }
    best
}

/// Split a plan into the three encoder branch inputs under the given regime.
///
/// A door counts as incident to a room when its center lies within 4 px of
/// the room polygon boundary at training scale (the threshold rescales with
/// the content so the incidence set is regime independent).
pub fn split_branches(plan: &Floorplan, spec: NormalizeSpec) -> Result<BranchInputs> {
    let rooms: Vec<&Component> = plan.visible_rooms().collect();
    if rooms.is_empty() {
        return Err(Error::EmptyInput("no visible rooms".into()));
    }
    let full = rasterize(plan, true)?;
    let transform = ContentTransform::fit(&full, spec)?;
    let (w, h) = plan.canvas;

    let incidence_radius =
        INCIDENCE_RADIUS_TRAIN_PX * transform.src_w.max(transform.src_h) as f64 / 100.0;

    let doors: Vec<&Component> = plan.visible_doors().collect();
    let mut door_stack = RasterStack::new(w, h);
    for door in &doors {
        door_stack.channel_mut(door.ctype).union_with(&rasterize_component(door, w, h));
    }

    let mut room_images = Vec::with_capacity(rooms.len());
    let mut both_images = Vec::with_capacity(rooms.len());
    for room in &rooms {
        let mut room_stack = RasterStack::new(w, h);
        room_stack.channel_mut(room.ctype).union_with(&rasterize_component(room, w, h));

        let mut both_stack = room_stack.clone();
        let poly = match &room.geometry {
            Geometry::Polygon(p) => p,
            Geometry::Point(_) => unreachable!("rooms carry polygons"),
        };
        for door in &doors {
            let center = match &door.geometry {
                Geometry::Point(c) => *c,
                Geometry::Polygon(_) => unreachable!("doors carry points"),
            };
            if point_to_polygon_boundary(center, poly) <= incidence_radius {
                both_stack.channel_mut(door.ctype).union_with(&rasterize_component(door, w, h));
            }
        }

        room_images.push(transform.apply_stack(&room_stack));
        both_images.push(transform.apply_stack(&both_stack));
    }

    Ok(BranchInputs {
        room_images,
        both_images,
        door_image: transform.apply_stack(&door_stack),
        transform,
    })
}

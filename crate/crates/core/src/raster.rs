//! Raster floorplan representation and elementary raster geometry.
//!
//! Pixel (x, y) covers the unit square [x, x+1] x [y, y+1]; polygon fill uses
//! the even-odd rule sampled at pixel centers, so axis-aligned integer
//! rectangles rasterize exactly.

use crate::error::{Error, Result};
use crate::plan::{BBox, ComponentType, Floorplan, Geometry, NUM_CHANNELS};

/// Single-channel binary raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub w: usize,
    pub h: usize,
    data: Vec<u8>,
}

impl Mask {
    pub fn new(w: usize, h: usize) -> Mask {
        Mask { w, h, data: vec![0; w * h] }
    }

    pub fn from_pixels(w: usize, h: usize, pixels: &[(usize, usize)]) -> Mask {
        let mut m = Mask::new(w, h);
        for &(x, y) in pixels {
            m.set(x, y, true);
        }
        m
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.w + x] != 0
    }

    /// Bounds-checked lookup; out-of-canvas reads as unset.
    #[inline]
    pub fn get_i(&self, x: i64, y: i64) -> bool {
        if x < 0 || y < 0 || x >= self.w as i64 || y >= self.h as i64 {
            false
        } else {
            self.get(x as usize, y as usize)
        }
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.w + x] = v as u8;
    }

    pub fn count(&self) -> usize {
        self.data.iter().map(|&v| v as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }

    pub fn iter_set(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.w;
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0)
            .map(move |(i, _)| (i % w, i / w))
    }

    /// Pixel-index bounding box (min_x, min_y, max_x, max_y), inclusive.
    pub fn pixel_bbox(&self) -> Option<(usize, usize, usize, usize)> {
        let mut bbox: Option<(usize, usize, usize, usize)> = None;
        for (x, y) in self.iter_set() {
            bbox = Some(match bbox {
                None => (x, y, x, y),
                Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
            });
        }
        bbox
    }

    pub fn union_with(&mut self, other: &Mask) {
        debug_assert_eq!((self.w, self.h), (other.w, other.h));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a |= *b;
        }
    }

    /// Translate by whole pixels, dropping pixels shifted off the canvas.
    pub fn shifted(&self, dx: i64, dy: i64) -> Mask {
        let mut out = Mask::new(self.w, self.h);
        for (x, y) in self.iter_set() {
            let nx = x as i64 + dx;
            let ny = y as i64 + dy;
            if nx >= 0 && ny >= 0 && (nx as usize) < self.w && (ny as usize) < self.h {
                out.set(nx as usize, ny as usize, true);
            }
        }
        out
    }
}

/// The 14-channel binary raster image the network consumes and produces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterStack {
    pub w: usize,
    pub h: usize,
    pub channels: Vec<Mask>,
}

impl RasterStack {
    pub fn new(w: usize, h: usize) -> RasterStack {
        RasterStack { w, h, channels: (0..NUM_CHANNELS).map(|_| Mask::new(w, h)).collect() }
    }

    pub fn channel(&self, t: ComponentType) -> &Mask {
        &self.channels[t.channel().expect("no-component has no channel")]
    }

    pub fn channel_mut(&mut self, t: ComponentType) -> &mut Mask {
        &mut self.channels[t.channel().expect("no-component has no channel")]
    }

    /// Union of all 14 channels.
    pub fn any_mask(&self) -> Mask {
        let mut out = Mask::new(self.w, self.h);
        for ch in &self.channels {
            out.union_with(ch);
        }
        out
    }

    pub fn total_count(&self) -> usize {
        self.channels.iter().map(Mask::count).sum()
    }
}

/// Tightest normalized bounding box around the set pixels of a mask.
pub fn bbox_of(mask: &Mask) -> Result<BBox> {
    let (x0, y0, x1, y1) = mask.pixel_bbox().ok_or(Error::EmptyMask)?;
    let (w, h) = (mask.w as f64, mask.h as f64);
    // Pixel (x, y) occupies [x, x+1] x [y, y+1].
    let bw = (x1 + 1 - x0) as f64;
    let bh = (y1 + 1 - y0) as f64;
    Ok(BBox::new(
        (x0 as f64 + bw / 2.0) / w,
        (y0 as f64 + bh / 2.0) / h,
        bw / w,
        bh / h,
    ))
}

/// Pixel-count intersection over union of two same-size masks.
pub fn iou_masks(a: &Mask, b: &Mask) -> Result<f64> {
    if (a.w, a.h) != (b.w, b.h) {
        return Err(Error::BadDims(format!(
            "mask {}x{} vs {}x{}",
            a.w, a.h, b.w, b.h
        )));
    }
    let mut inter = 0usize;
    let mut union = 0usize;
    for (x, y) in a.iter_set() {
        if b.get(x, y) {
            inter += 1;
        } else {
            union += 1;
        }
    }
    union += b.count();
    if union == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(inter as f64 / union as f64)
}

/// Fill a polygon into a mask: even-odd rule, pixel-center sampling.
pub fn fill_polygon(mask: &mut Mask, poly: &[[f64; 2]]) {
    let n = poly.len();
    let mut crossings: Vec<f64> = Vec::with_capacity(8);
    for y in 0..mask.h {
        let yc = y as f64 + 0.5;
        crossings.clear();
        for i in 0..n {
            let [x1, y1] = poly[i];
            let [x2, y2] = poly[(i + 1) % n];
            if (y1 <= yc && yc < y2) || (y2 <= yc && yc < y1) {
                crossings.push(x1 + (yc - y1) * (x2 - x1) / (y2 - y1));
            }
        }
        crossings.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for pair in crossings.chunks_exact(2) {
            // Pixel centers in [pair0, pair1).
            let x_start = (pair[0] - 0.5).ceil().max(0.0) as usize;
            let x_end = ((pair[1] - 0.5).ceil() as i64 - 1).min(mask.w as i64 - 1);
            for x in x_start as i64..=x_end {
                mask.set(x as usize, y, true);
            }
        }
    }
}

/// Pixels of the 2x2 door stamp at point (x, y), clipped to a w x h canvas.
pub fn door_stamp_pixels(center: [f64; 2], w: usize, h: usize) -> Vec<(usize, usize)> {
    let bx = center[0].floor() as i64;
    let by = center[1].floor() as i64;
    let mut out = Vec::with_capacity(4);
    for dy in 0..2 {
        for dx in 0..2 {
            let (x, y) = (bx + dx, by + dy);
            if x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h {
                out.push((x as usize, y as usize));
            }
        }
    }
    out
}

/// Rasterize a plan: each room scan-filled into its type channel, each door
/// stamped as a 2x2 block. With `visible_only`, hallucination targets are
/// omitted.
pub fn rasterize(plan: &Floorplan, visible_only: bool) -> Result<RasterStack> {
    plan.validate()?;
    let (w, h) = plan.canvas;
    let mut stack = RasterStack::new(w, h);
    for comp in &plan.components {
        if visible_only && !comp.visible {
            continue;
        }
        let mask = stack.channel_mut(comp.ctype);
        match &comp.geometry {
            Geometry::Polygon(poly) => fill_polygon(mask, poly),
            Geometry::Point(center) => {
                for (x, y) in door_stamp_pixels(*center, w, h) {
                    mask.set(x, y, true);
                }
            }
        }
    }
    Ok(stack)
}

/// Rasterize a single component onto its own full-canvas mask.
pub fn rasterize_component(comp: &crate::plan::Component, w: usize, h: usize) -> Mask {
    let mut mask = Mask::new(w, h);
    match &comp.geometry {
        Geometry::Polygon(poly) => fill_polygon(&mut mask, poly),
        Geometry::Point(center) => {
            for (x, y) in door_stamp_pixels(*center, w, h) {
                mask.set(x, y, true);
            }
        }
    }
    mask
}

/// 4-connected components, each as a full-size mask, in row-major discovery
/// order. The union of the outputs equals the input and outputs are disjoint.
pub fn connected_components(mask: &Mask) -> Vec<Mask> {
    let mut seen = vec![false; mask.w * mask.h];
    let mut out = Vec::new();
    let mut queue = Vec::new();
    for start_y in 0..mask.h {
        for start_x in 0..mask.w {
            if !mask.get(start_x, start_y) || seen[start_y * mask.w + start_x] {
                continue;
            }
            let mut comp = Mask::new(mask.w, mask.h);
            queue.push((start_x, start_y));
            seen[start_y * mask.w + start_x] = true;
            while let Some((x, y)) = queue.pop() {
                comp.set(x, y, true);
                let neighbors = [
                    (x.wrapping_sub(1), y),
                    (x + 1, y),
                    (x, y.wrapping_sub(1)),
                    (x, y + 1),
                ];
                for (nx, ny) in neighbors {
                    if nx < mask.w && ny < mask.h && mask.get(nx, ny) && !seen[ny * mask.w + nx] {
                        seen[ny * mask.w + nx] = true;
                        queue.push((nx, ny));
                    }
                }
            }
            out.push(comp);
        }
    }
    out
}

/// Largest 4-connected component by pixel count (first found wins ties).
pub fn largest_component(mask: &Mask) -> Option<Mask> {
    connected_components(mask).into_iter().max_by_key(Mask::count)
}

/// Fill diagonal pinch corners (2x2 blocks where only one diagonal is set)
/// until none remain, so the outer boundary becomes a simple ring. Adds the
/// minimum pixels needed; pinch-free masks pass through unchanged.
pub fn fill_diagonal_pinches(mask: &Mask) -> Mask {
    let mut out = mask.clone();
    loop {
        let mut changed = false;
        for y in 0..out.h.saturating_sub(1) {
            for x in 0..out.w.saturating_sub(1) {
                let nw = out.get(x, y);
                let ne = out.get(x + 1, y);
                let sw = out.get(x, y + 1);
                let se = out.get(x + 1, y + 1);
                if nw && se && !ne && !sw {
                    out.set(x + 1, y, true);
                    changed = true;
                } else if ne && sw && !nw && !se {
                    out.set(x, y, true);
                    changed = true;
                }
            }
        }
        if !changed {
            return out;
        }
    }
}

/// Trace the outer boundary of the 4-connected component containing the
/// first set pixel (row-major), as a closed rectilinear ring on the pixel
/// corner lattice. Interior holes are not traced; re-rasterizing the ring
/// reproduces the component exactly when it has none.
pub fn trace_boundary(mask: &Mask) -> Result<Vec<[i64; 2]>> {
    let start_pixel = mask.iter_set().next().ok_or(Error::EmptyMask)?;
    let start = [start_pixel.0 as i64, start_pixel.1 as i64];

    // Directions: 0 = +x, 1 = +y, 2 = -x, 3 = -y. Walk keeps the region on
    // the right-hand side; preferring the right turn hugs 4-connectivity at
    // diagonal corners.
    const STEP: [[i64; 2]; 4] = [[1, 0], [0, 1], [-1, 0], [0, -1]];
    // Pixel on the right of an edge leaving corner c with direction d.
    let right_pixel = |c: [i64; 2], d: usize| -> [i64; 2] {
        match d {
            0 => [c[0], c[1]],
            1 => [c[0] - 1, c[1]],
            2 => [c[0] - 1, c[1] - 1],
            _ => [c[0], c[1] - 1],
        }
    };
    let left_pixel = |c: [i64; 2], d: usize| -> [i64; 2] {
        match d {
            0 => [c[0], c[1] - 1],
            1 => [c[0], c[1]],
            2 => [c[0] - 1, c[1]],
            _ => [c[0] - 1, c[1] - 1],
        }
    };
    let edge_ok = |c: [i64; 2], d: usize| -> bool {
        let r = right_pixel(c, d);
        let l = left_pixel(c, d);
        mask.get_i(r[0], r[1]) && !mask.get_i(l[0], l[1])
    };

    let start_dir = 0usize;
    debug_assert!(edge_ok(start, start_dir));
    let mut vertices = vec![start];
    let mut pos = [start[0] + 1, start[1]];
    let mut dir = start_dir;
    let max_steps = 4 * (mask.w + 2) * (mask.h + 2);
    for _ in 0..max_steps {
        let right = (dir + 1) % 4;
        let left = (dir + 3) % 4;
        let next_dir = if edge_ok(pos, right) {
            right
        } else if edge_ok(pos, dir) {
            dir
        } else {
            debug_assert!(edge_ok(pos, left));
            left
        };
        // Back at the start about to repeat the first edge: ring closed.
        if pos == start && next_dir == start_dir {
            return Ok(vertices);
        }
        if next_dir != dir {
            vertices.push(pos);
            dir = next_dir;
        }
        pos = [pos[0] + STEP[dir][0], pos[1] + STEP[dir][1]];
    }
    Err(Error::InvalidPlan("boundary trace did not close".into()))
}

/// Binary PGM (P5) bytes for one channel; set pixels are white.
pub fn mask_to_pgm(mask: &Mask) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", mask.w, mask.h).into_bytes();
    for y in 0..mask.h {
        for x in 0..mask.w {
            out.push(if mask.get(x, y) { 255 } else { 0 });
        }
    }
    out
}

/// Fixed RGB color per channel for composite renders (rooms first, doors
/// last; a later channel overdraws an earlier one).
pub const CHANNEL_COLORS: [[u8; 3]; NUM_CHANNELS] = [
    [244, 162, 97],  // living-room
    [231, 111, 81],  // kitchen
    [233, 196, 106], // western-style-room
    [42, 157, 143],  // bathroom
    [138, 177, 125], // balcony
    [186, 187, 116], // corridor
    [169, 132, 103], // japanese-style-room
    [109, 152, 186], // washroom
    [69, 123, 157],  // toilet
    [156, 137, 184], // closet
    [214, 40, 40],   // standard-door
    [0, 48, 73],     // entrance-door
    [247, 127, 0],   // closet-door
    [252, 191, 73],  // open-portal
];

/// 14-in-1 composite as binary PPM (P6) with the fixed color table.
pub fn stack_to_ppm(stack: &RasterStack) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", stack.w, stack.h).into_bytes();
    for y in 0..stack.h {
        for x in 0..stack.w {
            let mut rgb = [0u8; 3];
            for (ci, ch) in stack.channels.iter().enumerate() {
                if ch.get(x, y) {
                    rgb = CHANNEL_COLORS[ci];
                }
            }
            out.extend_from_slice(&rgb);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::{Component, ComponentType, Floorplan};

    fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<[f64; 2]> {
        vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]]
    }

    #[test]
    fn bbox_of_full_mask() {
        let mut m = Mask::new(10, 10);
        for y in 0..10 {
            for x in 0..10 {
                m.set(x, y, true);
            }
        }
        assert_eq!(bbox_of(&m).unwrap(), BBox::new(0.5, 0.5, 1.0, 1.0));
    }

    #[test]
    fn bbox_of_single_pixel() {
        let m = Mask::from_pixels(10, 10, &[(0, 0)]);
        assert_eq!(bbox_of(&m).unwrap(), BBox::new(0.05, 0.05, 0.1, 0.1));
    }

    #[test]
    fn bbox_of_two_pixels() {
        // Set pixels (2,3) and (4,3): x spans [2,5], y spans [3,4].
        let m = Mask::from_pixels(10, 10, &[(2, 3), (4, 3)]);
        let b = bbox_of(&m).unwrap();
        assert!((b.cx - 0.35).abs() < 1e-12);
        assert!((b.cy - 0.35).abs() < 1e-12);
        assert!((b.w - 0.3).abs() < 1e-12);
        assert!((b.h - 0.1).abs() < 1e-12);
    }

    #[test]
    fn bbox_of_empty_errors() {
        assert!(matches!(bbox_of(&Mask::new(4, 4)), Err(Error::EmptyMask)));
    }

    #[test]
    fn iou_masks_cases() {
        let a = Mask::from_pixels(8, 8, &[(1, 1), (2, 1)]);
        let b = Mask::from_pixels(8, 8, &[(2, 1), (3, 1)]);
        assert_eq!(iou_masks(&a, &a).unwrap(), 1.0);
        assert!((iou_masks(&a, &b).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        let c = Mask::from_pixels(8, 8, &[(6, 6)]);
        assert_eq!(iou_masks(&a, &c).unwrap(), 0.0);
        assert!(matches!(iou_masks(&Mask::new(8, 8), &Mask::new(8, 8)), Err(Error::EmptyMask)));
        assert!(matches!(iou_masks(&a, &Mask::new(4, 4)), Err(Error::BadDims(_))));
    }

    #[test]
    fn rasterize_square_room() {
        let mut plan = Floorplan::new("sq", (16, 16));
        plan.components.push(Component::room(ComponentType::Kitchen, true, rect(4.0, 4.0, 8.0, 8.0)));
        let stack = rasterize(&plan, false).unwrap();
        assert_eq!(stack.channel(ComponentType::Kitchen).count(), 16);
        assert_eq!(stack.total_count(), 16);
        // Scanline fill agrees with a direct point-in-rectangle check.
        for y in 0..16 {
            for x in 0..16 {
                let expect = (4..8).contains(&x) && (4..8).contains(&y);
                assert_eq!(stack.channel(ComponentType::Kitchen).get(x, y), expect);
            }
        }
    }

    #[test]
    fn rasterize_door_stamp() {
        let mut plan = Floorplan::new("door", (32, 32));
        plan.components.push(Component::door(ComponentType::StandardDoor, true, [10.0, 10.0]));
        let stack = rasterize(&plan, false).unwrap();
        let ch = stack.channel(ComponentType::StandardDoor);
        assert_eq!(ch.count(), 4);
        for (x, y) in [(10, 10), (11, 10), (10, 11), (11, 11)] {
            assert!(ch.get(x, y));
        }
    }

    #[test]
    fn rasterize_empty_plan() {
        let plan = Floorplan::new("empty", (8, 8));
        assert_eq!(rasterize(&plan, false).unwrap().total_count(), 0);
    }

    #[test]
    fn rasterize_visible_only_filters() {
        let mut plan = Floorplan::new("vis", (16, 16));
        plan.components.push(Component::room(ComponentType::Kitchen, false, rect(4.0, 4.0, 8.0, 8.0)));
        plan.components.push(Component::door(ComponentType::StandardDoor, true, [2.0, 2.0]));
        let stack = rasterize(&plan, true).unwrap();
        assert_eq!(stack.channel(ComponentType::Kitchen).count(), 0);
        assert_eq!(stack.channel(ComponentType::StandardDoor).count(), 4);
    }

    #[test]
    fn connected_components_diagonal_split() {
        let m = Mask::from_pixels(8, 8, &[(2, 2), (3, 3)]);
        let comps = connected_components(&m);
        assert_eq!(comps.len(), 2);
        let mut union = Mask::new(8, 8);
        for c in &comps {
            union.union_with(c);
        }
        assert_eq!(union, m);
    }

    #[test]
    fn connected_components_solid_and_empty() {
        let m = Mask::from_pixels(8, 8, &[(1, 1), (2, 1), (2, 2)]);
        let comps = connected_components(&m);
        assert_eq!(comps.len(), 1);
        assert_eq!(comps[0], m);
        assert!(connected_components(&Mask::new(4, 4)).is_empty());
    }

    #[test]
    fn trace_square_has_four_vertices() {
        let mut m = Mask::new(12, 12);
        for y in 3..7 {
            for x in 2..6 {
                m.set(x, y, true);
            }
        }
        let ring = trace_boundary(&m).unwrap();
        assert_eq!(ring.len(), 4);
        assert!(ring.contains(&[2, 3]));
        assert!(ring.contains(&[6, 3]));
        assert!(ring.contains(&[6, 7]));
        assert!(ring.contains(&[2, 7]));
    }

    #[test]
    fn trace_roundtrips_through_fill() {
        // L-shape.
        let mut m = Mask::new(16, 16);
        for y in 2..10 {
            for x in 2..5 {
                m.set(x, y, true);
            }
        }
        for y in 7..10 {
            for x in 5..12 {
                m.set(x, y, true);
            }
        }
        let ring = trace_boundary(&m).unwrap();
        assert_eq!(ring.len(), 6);
        let poly: Vec<[f64; 2]> = ring.iter().map(|v| [v[0] as f64, v[1] as f64]).collect();
        let mut refilled = Mask::new(16, 16);
        fill_polygon(&mut refilled, &poly);
        assert_eq!(refilled, m);
    }

    #[test]
    fn pgm_and_ppm_headers() {
        let stack = RasterStack::new(4, 2);
        let pgm = mask_to_pgm(&stack.channels[0]);
        assert!(pgm.starts_with(b"P5\n4 2\n255\n"));
        assert_eq!(pgm.len(), 11 + 8);
        let ppm = stack_to_ppm(&stack);
        assert!(ppm.starts_with(b"P6\n4 2\n255\n"));
        assert_eq!(ppm.len(), 11 + 24);
    }
}

//! Vector floorplan representation: the component taxonomy, polygons and door
//! points, normalized bounding boxes, and the JSON interchange schema.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// The 10 room types, 4 door types, and the `no-component` label emitted by
/// the type head when a query reconstructs nothing.
///
/// The first 14 variants map one-to-one onto raster channels 0..13.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ComponentType {
    LivingRoom,
    Kitchen,
    WesternStyleRoom,
    Bathroom,
    Balcony,
    Corridor,
    JapaneseStyleRoom,
    Washroom,
    Toilet,
    Closet,
    StandardDoor,
    EntranceDoor,
    ClosetDoor,
    OpenPortal,
    NoComponent,
}

/// Number of raster channels (every type except `no-component`).
pub const NUM_CHANNELS: usize = 14;
/// Number of type-head classes (channels plus `no-component`).
pub const NUM_CLASSES: usize = 15;

impl ComponentType {
    /// All 15 labels in channel order, `no-component` last.
    pub const ALL: [ComponentType; NUM_CLASSES] = [
        ComponentType::LivingRoom,
        ComponentType::Kitchen,
        ComponentType::WesternStyleRoom,
        ComponentType::Bathroom,
        ComponentType::Balcony,
        ComponentType::Corridor,
        ComponentType::JapaneseStyleRoom,
        ComponentType::Washroom,
        ComponentType::Toilet,
        ComponentType::Closet,
        ComponentType::StandardDoor,
        ComponentType::EntranceDoor,
        ComponentType::ClosetDoor,
        ComponentType::OpenPortal,
        ComponentType::NoComponent,
    ];

    /// Raster channel index, or `None` for `no-component`.
    pub fn channel(self) -> Option<usize> {
        match self {
            ComponentType::NoComponent => None,
            _ => Some(self as usize),
        }
    }

    /// Class index for the 15-way type head (`no-component` = 14).
    pub fn class_index(self) -> usize {
        self as usize
    }

    pub fn from_channel(channel: usize) -> Option<ComponentType> {
        ComponentType::ALL.get(channel).copied().filter(|t| *t != ComponentType::NoComponent)
    }

    pub fn from_class_index(index: usize) -> Option<ComponentType> {
        ComponentType::ALL.get(index).copied()
    }

    pub fn is_room(self) -> bool {
        (self as usize) < 10
    }

    pub fn is_door(self) -> bool {
        matches!(
            self,
            ComponentType::StandardDoor
                | ComponentType::EntranceDoor
                | ComponentType::ClosetDoor
                | ComponentType::OpenPortal
        )
    }

    /// Lowercase hyphenated label used in JSON files.
    pub fn label(self) -> &'static str {
        match self {
            ComponentType::LivingRoom => "living-room",
            ComponentType::Kitchen => "kitchen",
            ComponentType::WesternStyleRoom => "western-style-room",
            ComponentType::Bathroom => "bathroom",
            ComponentType::Balcony => "balcony",
            ComponentType::Corridor => "corridor",
            ComponentType::JapaneseStyleRoom => "japanese-style-room",
            ComponentType::Washroom => "washroom",
            ComponentType::Toilet => "toilet",
            ComponentType::Closet => "closet",
            ComponentType::StandardDoor => "standard-door",
            ComponentType::EntranceDoor => "entrance-door",
            ComponentType::ClosetDoor => "closet-door",
            ComponentType::OpenPortal => "open-portal",
            ComponentType::NoComponent => "no-component",
        }
    }

    pub fn from_label(label: &str) -> Result<ComponentType> {
        ComponentType::ALL
            .iter()
            .copied()
            .find(|t| t.label() == label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }
}

/// Component geometry: rooms are polygons, doors are points.
#[derive(Debug, Clone, PartialEq)]
pub enum Geometry {
    /// Ordered vertex list in pixel coordinates; implicitly closed.
    Polygon(Vec<[f64; 2]>),
    /// Door center in pixel coordinates; rasterized as a 2x2 stamp.
    Point([f64; 2]),
}

/// One room or door of a floorplan.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub ctype: ComponentType,
    /// Part of the partial input reconstruction (true) or hallucinated (false).
    pub visible: bool,
    pub geometry: Geometry,
}

impl Component {
    pub fn room(ctype: ComponentType, visible: bool, polygon: Vec<[f64; 2]>) -> Component {
        Component { ctype, visible, geometry: Geometry::Polygon(polygon) }
    }

    pub fn door(ctype: ComponentType, visible: bool, center: [f64; 2]) -> Component {
        Component { ctype, visible, geometry: Geometry::Point(center) }
    }
}

/// A set of typed components on a pixel canvas. Ground truth, partial inputs,
/// and predictions all share this shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Floorplan {
    pub id: String,
    pub canvas: (usize, usize),
    pub components: Vec<Component>,
}

impl Floorplan {
    pub fn new(id: impl Into<String>, canvas: (usize, usize)) -> Floorplan {
        Floorplan { id: id.into(), canvas, components: Vec::new() }
    }

    pub fn visible_components(&self) -> impl Iterator<Item = &Component> {
        self.components.iter().filter(|c| c.visible)
    }

    pub fn visible_rooms(&self) -> impl Iterator<Item = &Component> {
        self.components.iter().filter(|c| c.visible && c.ctype.is_room())
    }

    pub fn visible_doors(&self) -> impl Iterator<Item = &Component> {
        self.components.iter().filter(|c| c.visible && c.ctype.is_door())
    }

    /// Checks the structural invariants: known non-`no-component` types, door
    /// points vs. simple room polygons with >= 3 vertices, geometry inside the
    /// canvas.
    pub fn validate(&self) -> Result<()> {
        let (w, h) = (self.canvas.0 as f64, self.canvas.1 as f64);
        for (idx, comp) in self.components.iter().enumerate() {
            if comp.ctype == ComponentType::NoComponent {
                return Err(Error::InvalidPlan(format!("component {idx} has type no-component")));
            }
            match (&comp.geometry, comp.ctype.is_room()) {
                (Geometry::Polygon(poly), true) => {
                    if poly.len() < 3 {
                        return Err(Error::InvalidPlan(format!(
                            "room {idx} has {} vertices",
                            poly.len()
                        )));
                    }
                    if !polygon_is_simple(poly) {
                        return Err(Error::InvalidPlan(format!("room {idx} self-intersects")));
                    }
                    for v in poly {
                        if v[0] < 0.0 || v[0] > w || v[1] < 0.0 || v[1] > h {
                            return Err(Error::OutOfCanvas(format!(
                                "room {idx} vertex ({}, {})",
                                v[0], v[1]
                            )));
                        }
                    }
                }
                (Geometry::Point(c), false) => {
                    if c[0] < 0.0 || c[0] > w || c[1] < 0.0 || c[1] > h {
                        return Err(Error::OutOfCanvas(format!("door {idx} at ({}, {})", c[0], c[1])));
                    }
                }
                (Geometry::Polygon(_), false) => {
                    return Err(Error::InvalidPlan(format!("door {idx} carries a polygon")));
                }
                (Geometry::Point(_), true) => {
                    return Err(Error::InvalidPlan(format!("room {idx} carries a point")));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let json = PlanJson {
            id: self.id.clone(),
            canvas: [self.canvas.0, self.canvas.1],
            components: self
                .components
                .iter()
                .map(|c| match &c.geometry {
                    Geometry::Polygon(poly) => ComponentJson {
                        type_label: c.ctype.label().to_string(),
                        visible: c.visible,
                        polygon: Some(poly.clone()),
                        center: None,
                    },
                    Geometry::Point(center) => ComponentJson {
                        type_label: c.ctype.label().to_string(),
                        visible: c.visible,
                        polygon: None,
                        center: Some(*center),
                    },
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&json)?)
    }

    pub fn from_json(text: &str) -> Result<Floorplan> {
        let json: PlanJson = serde_json::from_str(text)?;
        let mut components = Vec::with_capacity(json.components.len());
        for (idx, comp) in json.components.into_iter().enumerate() {
            let ctype = ComponentType::from_label(&comp.type_label)?;
            let geometry = match (comp.polygon, comp.center) {
                (Some(poly), None) => Geometry::Polygon(poly),
                (None, Some(center)) => Geometry::Point(center),
                _ => {
                    return Err(Error::InvalidPlan(format!(
                        "component {idx} must carry exactly one of polygon/center"
                    )))
                }
            };
            components.push(Component { ctype, visible: comp.visible, geometry });
        }
        let plan = Floorplan {
            id: json.id,
            canvas: (json.canvas[0], json.canvas[1]),
            components,
        };
        plan.validate()?;
        Ok(plan)
    }
}

#[derive(Serialize, Deserialize)]
struct PlanJson {
    id: String,
    canvas: [usize; 2],
    components: Vec<ComponentJson>,
}

#[derive(Serialize, Deserialize)]
struct ComponentJson {
    #[serde(rename = "type")]
    type_label: String,
    visible: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    polygon: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    center: Option<[f64; 2]>,
}

/// Axis-aligned box in normalized image coordinates: center, width, height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> BBox {
        BBox { cx, cy, w, h }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.cx)
            && (0.0..=1.0).contains(&self.cy)
            && self.w > 0.0
            && self.w <= 1.0
            && self.h > 0.0
            && self.h <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidPlan(format!("bbox out of range: {self:?}")))
        }
    }

    pub fn x_range(&self) -> (f64, f64) {
        (self.cx - self.w / 2.0, self.cx + self.w / 2.0)
    }

    pub fn y_range(&self) -> (f64, f64) {
        (self.cy - self.h / 2.0, self.cy + self.h / 2.0)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.cx, self.cy, self.w, self.h]
    }

    pub fn from_array(v: [f64; 4]) -> BBox {
        BBox { cx: v[0], cy: v[1], w: v[2], h: v[3] }
    }
}

/// Intersection-over-union of two boxes; 0 when disjoint.
pub fn iou_boxes(a: &BBox, b: &BBox) -> f64 {
    let (ax0, ax1) = a.x_range();
    let (ay0, ay1) = a.y_range();
    let (bx0, bx1) = b.x_range();
    let (by0, by1) = b.y_range();
    let ix = (ax1.min(bx1) - ax0.max(bx0)).max(0.0);
    let iy = (ay1.min(by1) - ay0.max(by0)).max(0.0);
    let inter = ix * iy;
    // Areas from the same corner arithmetic, so identical boxes score 1.
    let union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// True when no two non-adjacent edges properly cross and no vertex repeats.
fn polygon_is_simple(poly: &[[f64; 2]]) -> bool {
    let n = poly.len();
    for i in 0..n {
        for j in 0..n {
            if i != j && poly[i] == poly[j] {
                return false;
            }
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            // Skip edges sharing a vertex (consecutive, incl. the wrap pair).
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            let (c, d) = (poly[j], poly[(j + 1) % n]);
            if segments_cross(a, b, c, d) {
                return false;
            }
        }
    }
    true
}

fn segments_cross(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let orient = |p: [f64; 2], q: [f64; 2], r: [f64; 2]| -> f64 {
        (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])
    };
    let on_segment = |p: [f64; 2], q: [f64; 2], r: [f64; 2]| -> bool {
        r[0] >= p[0].min(q[0]) && r[0] <= p[0].max(q[0]) && r[1] >= p[1].min(q[1]) && r[1] <= p[1].max(q[1])
    };
    let d1 = orient(a, b, c);
    let d2 = orient(a, b, d);
    let d3 = orient(c, d, a);
    let d4 = orient(c, d, b);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(a, b, c))
        || (d2 == 0.0 && on_segment(a, b, d))
        || (d3 == 0.0 && on_segment(c, d, a))
        || (d4 == 0.0 && on_segment(c, d, b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn channel_indices_cover_first_fourteen() {
        for (idx, t) in ComponentType::ALL.iter().enumerate() {
            if *t == ComponentType::NoComponent {
                assert_eq!(t.channel(), None);
            } else {
                assert_eq!(t.channel(), Some(idx));
                assert_eq!(ComponentType::from_channel(idx), Some(*t));
            }
            assert_eq!(ComponentType::from_label(t.label()).unwrap(), *t);
        }
        assert_eq!(ComponentType::ALL.len(), 15);
    }

    #[test]
    fn room_door_partition() {
        let rooms = ComponentType::ALL.iter().filter(|t| t.is_room()).count();
        let doors = ComponentType::ALL.iter().filter(|t| t.is_door()).count();
        assert_eq!((rooms, doors), (10, 4));
    }

    #[test]
    fn iou_boxes_identity_and_disjoint() {
        let a = BBox::new(0.5, 0.5, 0.2, 0.2);
        assert_eq!(iou_boxes(&a, &a), 1.0);
        let b = BBox::new(0.1, 0.1, 0.1, 0.1);
        assert_eq!(iou_boxes(&a, &b), 0.0);
    }

    #[test]
    fn iou_boxes_partial_overlap() {
        // Squares (0,0)-(2,2) and (1,0)-(3,2) on a 10x10 canvas: 2 / 6.
        let a = BBox::new(0.1, 0.1, 0.2, 0.2);
        let b = BBox::new(0.2, 0.1, 0.2, 0.2);
        let iou = iou_boxes(&a, &b);
        assert!((iou - 1.0 / 3.0).abs() < 1e-12, "iou={iou}");
    }

    #[test]
    fn json_roundtrip() {
        let mut plan = Floorplan::new("t1", (64, 64));
        plan.components.push(Component::room(
            ComponentType::Kitchen,
            true,
            vec![[4.0, 4.0], [20.0, 4.0], [20.0, 16.0], [4.0, 16.0]],
        ));
        plan.components.push(Component::door(ComponentType::StandardDoor, false, [20.0, 10.0]));
        let text = plan.to_json().unwrap();
        let back = Floorplan::from_json(&text).unwrap();
        assert_eq!(back, plan);
    }

    #[test]
    fn json_rejects_unknown_label() {
        let text = r#"{"id":"x","canvas":[8,8],"components":[{"type":"garage","visible":true,"center":[1,1]}]}"#;
        assert!(matches!(Floorplan::from_json(text), Err(Error::UnknownLabel(_))));
    }

    #[test]
    fn validate_rejects_out_of_canvas() {
        let mut plan = Floorplan::new("t2", (8, 8));
        plan.components.push(Component::door(ComponentType::StandardDoor, true, [9.0, 1.0]));
        assert!(matches!(plan.validate(), Err(Error::OutOfCanvas(_))));
    }

    #[test]
    fn validate_rejects_self_intersection() {
        let mut plan = Floorplan::new("t3", (8, 8));
        // Bowtie.
        plan.components.push(Component::room(
            ComponentType::LivingRoom,
            true,
            vec![[0.0, 0.0], [4.0, 4.0], [4.0, 0.0], [0.0, 4.0]],
        ));
        assert!(plan.validate().is_err());
    }
}

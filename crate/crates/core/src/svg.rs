//! SVG rendering of floorplans: one filled path per room, a square marker
//! per door, fixed per-type colors, deterministic element order.

use crate::plan::{Floorplan, Geometry};
use crate::raster::CHANNEL_COLORS;
use std::fmt::Write;

fn color_of(channel: usize) -> String {
    let [r, g, b] = CHANNEL_COLORS[channel];
    format!("#{r:02x}{g:02x}{b:02x}")
}

/// Render a plan to an SVG document. Hallucinated components are drawn with
/// reduced opacity and a dashed outline.
pub fn render_svg(plan: &Floorplan) -> String {
    let (w, h) = plan.canvas;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">"
    );
    let _ = writeln!(
        out,
        "  <rect x=\"0\" y=\"0\" width=\"{w}\" height=\"{h}\" fill=\"#ffffff\" stroke=\"#222222\" stroke-width=\"0.5\"/>"
    );
    for comp in &plan.components {
        let channel = comp.ctype.channel().expect("renderable components carry a channel");
        let color = color_of(channel);
        let style = if comp.visible {
            String::new()
        } else {
            " fill-opacity=\"0.55\" stroke-dasharray=\"2,1\"".to_string()
        };
        match &comp.geometry {
            Geometry::Polygon(poly) => {
                let mut d = String::new();
                for (i, v) in poly.iter().enumerate() {
                    let cmd = if i == 0 { 'M' } else { 'L' };
                    let _ = write!(d, "{cmd}{},{} ", v[0], v[1]);
                }
                d.push('Z');
                let _ = writeln!(
                    out,
                    "  <path d=\"{d}\" fill=\"{color}\" stroke=\"#222222\" stroke-width=\"0.4\"{style}/>"
                );
            }
            Geometry::Point(c) => {
                let x = c[0].floor();
                let y = c[1].floor();
                let _ = writeln!(
                    out,
                    "  <rect x=\"{x}\" y=\"{y}\" width=\"2\" height=\"2\" fill=\"{color}\" stroke=\"#222222\" stroke-width=\"0.2\"{style}/>"
                );
            }
        }
    }
    out.push_str("</svg>\n");
    out
}

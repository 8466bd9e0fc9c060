//! End-to-end inference: normalize and split a partial plan, encode, run the
//! cascades, and assemble the completed floorplan in both the network frame
//! and the input frame.

use crate::decoder::{
    assemble_floorplan, cascade_forward, reconstruct_components, CascadeOutput,
};
use crate::encoder::encode_branches;
use crate::error::Result;
use crate::pipeline::{split_branches, NormalizeSpec, Regime};
use crate::plan::{Component, Floorplan, Geometry};
use crate::raster::{fill_diagonal_pinches, largest_component, trace_boundary};
use crate::weights::WeightBundle;

/// Shape bookkeeping from one forward pass.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct InferDiagnostics {
    pub visible_rooms: usize,
    pub visible_doors: usize,
    /// Feature lattice of the normalized canvas (canvas / backbone stride).
    pub feature_grid: (usize, usize),
    pub token_count: usize,
    pub memory_count: usize,
    pub query_counts: [usize; 3],
    pub normalized_canvas: (usize, usize),
}

/// Completed plan plus everything needed to inspect the run.
#[derive(Debug, Clone)]
pub struct InferResult {
    /// Completed floorplan on the input plan's canvas: the input's visible
    /// components verbatim plus the hallucinated components mapped back.
    pub completed: Floorplan,
    /// The same completion in the normalized network frame.
    pub normalized: Floorplan,
    pub cascade: CascadeOutput,
    pub diagnostics: InferDiagnostics,
}

/// Run the full pipeline on a partial plan.
pub fn infer_plan(plan: &Floorplan, bundle: &WeightBundle, regime: Regime) -> Result<InferResult> {
    let spec = NormalizeSpec::for_regime(regime);
    let branches = split_branches(plan, spec)?;
    let visible_rooms = branches.room_images.len();
    let visible_doors = plan.visible_doors().count();

    let encoded = encode_branches(&branches, bundle)?;
    let memory = encoded.memory();
    let cascade = cascade_forward(&memory, visible_doors, bundle)?;

    let plan_norm = branches.transform.map_plan(plan);
    let normalized = assemble_floorplan(&plan_norm, &cascade.stages[2])?;

    // Input frame: keep the visible input verbatim and resample each
    // hallucinated mask back onto the original canvas.
    let mut completed = Floorplan::new(plan.id.clone(), plan.canvas);
    completed.components.extend(plan.visible_components().cloned());
    for comp in reconstruct_components(&cascade.stages[2]) {
        let mask = branches.transform.unmap_mask(&comp.mask, plan.canvas);
        if mask.is_empty() {
            continue;
        }
        if comp.ctype.is_room() {
            let blob = fill_diagonal_pinches(&largest_component(&mask).expect("nonempty"));
            let ring = trace_boundary(&blob)?;
            let poly: Vec<[f64; 2]> = ring.iter().map(|v| [v[0] as f64, v[1] as f64]).collect();
            completed.components.push(Component::room(comp.ctype, false, poly));
        } else {
            let (mut cx, mut cy, mut n) = (0.0f64, 0.0f64, 0.0f64);
            for (x, y) in mask.iter_set() {
                cx += x as f64 + 0.5;
                cy += y as f64 + 0.5;
                n += 1.0;
            }
            completed.components.push(Component {
                ctype: comp.ctype,
                visible: false,
                geometry: Geometry::Point([cx / n, cy / n]),
            });
        }
    }

    let diagnostics = InferDiagnostics {
        visible_rooms,
        visible_doors,
        feature_grid: encoded.grid,
        token_count: encoded.len(),
        memory_count: memory.tokens.nrows(),
        query_counts: [
            cascade.stages[0].embeddings.nrows(),
            cascade.stages[1].embeddings.nrows(),
            cascade.stages[2].embeddings.nrows(),
        ],
        normalized_canvas: (spec.canvas, spec.canvas),
    };
    Ok(InferResult { completed, normalized, cascade, diagnostics })
}

//! Cascading transformer decoders: direct invisible rooms, indirect invisible
//! rooms, then invisible doors, each stage consuming the previous stage's
//! query outputs, with shared type/bbox/mask heads and floorplan assembly.

use crate::error::{Error, Result};
use crate::nn::{layer_norm, multi_head_attention, relu_inplace, sigmoid32};
use crate::plan::{BBox, Component, ComponentType, Floorplan};
use crate::raster::{fill_diagonal_pinches, largest_component, trace_boundary, Mask};
use crate::encoder::Memory;
use crate::weights::{DecoderLayerWeights, WeightBundle};
use ndarray::{s, Array2};

/// Mask pixels are those with logit strictly above this value.
pub const MASK_LOGIT_THRESHOLD: f32 = 0.0;

/// Per-query mask logits on the memory lattice, upsampled by `scale` to
/// canvas resolution on demand (nearest neighbor).
#[derive(Debug, Clone, PartialEq)]
pub struct MaskLogits {
    /// [grid_h, grid_w]
    pub grid: Array2<f32>,
    pub scale: usize,
}

impl MaskLogits {
    pub fn canvas_dims(&self) -> (usize, usize) {
        (self.grid.ncols() * self.scale, self.grid.nrows() * self.scale)
    }

    /// Upsampled logits at canvas resolution.
    pub fn to_canvas(&self) -> Array2<f32> {
        let (w, h) = self.canvas_dims();
        Array2::from_shape_fn((h, w), |(y, x)| self.grid[[y / self.scale, x / self.scale]])
    }

    /// Binary mask of canvas pixels with logit above the threshold.
    pub fn threshold(&self) -> Mask {
        let (w, h) = self.canvas_dims();
        let mut mask = Mask::new(w, h);
        for y in 0..h {
            for x in 0..w {
                if self.grid[[y / self.scale, x / self.scale]] > MASK_LOGIT_THRESHOLD {
                    mask.set(x, y, true);
                }
            }
        }
        mask
    }
}

/// Output of the shared heads for one query token.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryPrediction {
    pub type_logits: Vec<f32>,
    pub bbox: BBox,
    pub mask: MaskLogits,
}

impl QueryPrediction {
    /// Argmax class and its softmax probability.
    pub fn top_class(&self) -> (ComponentType, f64) {
        let mut best = 0;
        for (i, v) in self.type_logits.iter().enumerate() {
            if *v > self.type_logits[best] {
                best = i;
            }
        }
        let max = self.type_logits[best] as f64;
        let denom: f64 = self.type_logits.iter().map(|&v| ((v as f64) - max).exp()).sum();
        (ComponentType::from_class_index(best).expect("15 logits"), 1.0 / denom)
    }
}

/// One cascade stage's outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadePrediction {
    pub stage: u8,
    /// Query embeddings after the decoder stack, one row per query.
    pub embeddings: Array2<f32>,
    pub queries: Vec<QueryPrediction>,
}

/// All three stages plus the exact query matrices each stage consumed.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadeOutput {
    pub stages: [CascadePrediction; 3],
    pub stage_inputs: [Array2<f32>; 3],
}

/// One decoder layer: self-attention over the queries, add & norm,
/// cross-attention into the encoder memory, add & norm, ReLU MLP, add & norm.
pub fn decoder_layer_forward(
    tgt: &Array2<f32>,
    mem: &Array2<f32>,
    layer: &DecoderLayerWeights,
    bundle: &WeightBundle,
) -> Result<Array2<f32>> {
    let norm = |x: &Array2<f32>, w| {
        if bundle.arch.layer_norm_enabled {
            layer_norm(x, w)
        } else {
            x.clone()
        }
    };
    let heads = bundle.arch.num_heads;
    let self_out = multi_head_attention(&layer.self_attn, tgt, tgt, heads)?;
    let tgt4 = norm(&(self_out + tgt), &layer.norm1);
    let cross_out = multi_head_attention(&layer.cross_attn, &tgt4, mem, heads)?;
    let tgt8 = norm(&(cross_out + &tgt4), &layer.norm2);
    let mut hidden = layer.linear1.forward(&tgt8);
    relu_inplace(&mut hidden);
    let mlp_out = layer.linear2.forward(&hidden);
    Ok(norm(&(mlp_out + &tgt8), &layer.norm3))
}

fn decoder_stack(
    tgt: &Array2<f32>,
    mem: &Memory,
    stack: &[DecoderLayerWeights],
    bundle: &WeightBundle,
) -> Result<Array2<f32>> {
    let mut out = tgt.clone();
    for layer in stack {
        out = decoder_layer_forward(&out, &mem.tokens, layer, bundle)?;
    }
    Ok(out)
}

/// Apply the shared heads to every query embedding of one stage.
///
/// The mask head scores each memory cell by a scaled dot product with the
/// projected query and upsamples the lattice to canvas resolution.
pub fn prediction_heads(
    embeddings: &Array2<f32>,
    mem: &Memory,
    bundle: &WeightBundle,
) -> Result<Vec<QueryPrediction>> {
    let d = bundle.arch.embed_dim;
    if embeddings.ncols() != d {
        return Err(Error::BadDims(format!("embeddings are {}-dim, expected {d}", embeddings.ncols())));
    }
    let (gw, gh) = mem.grid;
    if mem.tokens.nrows() != gw * gh {
        return Err(Error::BadDims("memory token count does not match its grid".into()));
    }
    let type_logits = bundle.heads.type_head.forward(embeddings);

    let mut bbox_hidden = bundle.heads.bbox[0].forward(embeddings);
    relu_inplace(&mut bbox_hidden);
    let mut bbox_hidden = bundle.heads.bbox[1].forward(&bbox_hidden);
    relu_inplace(&mut bbox_hidden);
    let bbox_raw = bundle.heads.bbox[2].forward(&bbox_hidden);

    let projected = bundle.heads.mask_proj.forward(embeddings);
    let mut mask_logits = projected.dot(&mem.tokens.t());
    mask_logits *= 1.0 / (d as f32).sqrt();

    let scale = bundle.arch.stride();
    let mut out = Vec::with_capacity(embeddings.nrows());
    for q in 0..embeddings.nrows() {
        let grid = Array2::from_shape_fn((gh, gw), |(y, x)| mask_logits[[q, y * gw + x]]);
        out.push(QueryPrediction {
            type_logits: type_logits.row(q).to_vec(),
            bbox: BBox::new(
                sigmoid32(bbox_raw[[q, 0]]) as f64,
                sigmoid32(bbox_raw[[q, 1]]) as f64,
                sigmoid32(bbox_raw[[q, 2]]) as f64,
                sigmoid32(bbox_raw[[q, 3]]) as f64,
            ),
            mask: MaskLogits { grid, scale },
        });
    }
    Ok(out)
}

/// Run the three cascades. The first consumes one learnable query per
/// visible door; the second appends 15 fresh indirect-room queries to the
/// first stage's outputs; the third appends 15 door queries to the second's.
pub fn cascade_forward(
    mem: &Memory,
    n_visible_doors: usize,
    bundle: &WeightBundle,
) -> Result<CascadeOutput> {
    let max = bundle.arch.max_visible_doors;
    if n_visible_doors == 0 {
        return Err(Error::EmptyInput("cascade needs at least one visible door".into()));
    }
    if n_visible_doors > max {
        return Err(Error::TooManyDoors(n_visible_doors, max));
    }

    let tgt1 = bundle.queries_direct.slice(s![0..n_visible_doors, ..]).to_owned();
    let s1 = decoder_stack(&tgt1, mem, &bundle.decoders[0], bundle)?;

    let tgt2 = concat_rows(&s1, &bundle.queries_indirect);
    let s2 = decoder_stack(&tgt2, mem, &bundle.decoders[1], bundle)?;

    let tgt3 = concat_rows(&s2, &bundle.queries_door);
    let s3 = decoder_stack(&tgt3, mem, &bundle.decoders[2], bundle)?;

    let stages = [
        CascadePrediction { stage: 1, queries: prediction_heads(&s1, mem, bundle)?, embeddings: s1 },
        CascadePrediction { stage: 2, queries: prediction_heads(&s2, mem, bundle)?, embeddings: s2 },
        CascadePrediction { stage: 3, queries: prediction_heads(&s3, mem, bundle)?, embeddings: s3 },
    ];
    Ok(CascadeOutput { stages, stage_inputs: [tgt1, tgt2, tgt3] })
}

fn concat_rows(a: &Array2<f32>, b: &Array2<f32>) -> Array2<f32> {
    let mut out = Array2::zeros((a.nrows() + b.nrows(), a.ncols()));
    out.slice_mut(s![0..a.nrows(), ..]).assign(a);
    out.slice_mut(s![a.nrows().., ..]).assign(b);
    out
}

/// A query turned into a concrete component candidate.
#[derive(Debug, Clone)]
pub struct ReconstructedComponent {
    pub ctype: ComponentType,
    /// Canvas-resolution mask, logits thresholded at 0.
    pub mask: Mask,
    pub bbox: BBox,
    /// Softmax probability of the argmax class.
    pub score: f64,
}

/// Drop `no-component` queries and threshold the rest into masks.
pub fn reconstruct_components(pred: &CascadePrediction) -> Vec<ReconstructedComponent> {
    pred.queries
        .iter()
        .filter_map(|q| {
            let (ctype, score) = q.top_class();
            if ctype == ComponentType::NoComponent {
                return None;
            }
            Some(ReconstructedComponent { ctype, mask: q.mask.threshold(), bbox: q.bbox, score })
        })
        .collect()
}

/// Complete a floorplan: the visible input components plus one component per
/// stage-3 query whose argmax type is not `no-component`.
///
/// Room masks are reduced to their largest 4-connected component and traced
/// into an exact rectilinear polygon; door masks become their center of mass.
/// Queries whose thresholded mask is empty reconstruct nothing.
pub fn assemble_floorplan(input_plan: &Floorplan, stage3: &CascadePrediction) -> Result<Floorplan> {
    let mut out = Floorplan::new(input_plan.id.clone(), input_plan.canvas);
    out.components.extend(input_plan.visible_components().cloned());

    for comp in reconstruct_components(stage3) {
        if comp.mask.is_empty() {
            continue;
        }
        if (comp.mask.w, comp.mask.h) != input_plan.canvas {
            return Err(Error::BadDims(format!(
                "mask canvas {}x{} vs plan canvas {}x{}",
                comp.mask.w, comp.mask.h, input_plan.canvas.0, input_plan.canvas.1
            )));
        }
        if comp.ctype.is_room() {
            let blob = fill_diagonal_pinches(&largest_component(&comp.mask).expect("nonempty mask"));
            let ring = trace_boundary(&blob)?;
            let poly: Vec<[f64; 2]> = ring.iter().map(|v| [v[0] as f64, v[1] as f64]).collect();
            out.components.push(Component::room(comp.ctype, false, poly));
        } else {
            let (mut cx, mut cy, mut n) = (0.0f64, 0.0f64, 0usize);
            for (x, y) in comp.mask.iter_set() {
                cx += x as f64 + 0.5;
                cy += y as f64 + 0.5;
                n += 1;
            }
            out.components.push(Component::door(
                comp.ctype,
                false,
                [cx / n as f64, cy / n as f64],
            ));
        }
    }
    Ok(out)
}

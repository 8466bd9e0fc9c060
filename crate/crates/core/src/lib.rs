//! Forward-only floorplan completion: encode a partial floorplan, hallucinate
//! the invisible rooms and doors with cascaded transformer decoders, score the
//! result with set-prediction losses and IoU metrics, and clean it up for
//! vector output.

pub mod decoder;
pub mod encoder;
pub mod error;
pub mod hungarian;
pub mod infer;
pub mod loss;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod plan;
pub mod raster;
pub mod refine;
pub mod svg;
pub mod synth;
pub mod weights;

pub use decoder::{
    assemble_floorplan, cascade_forward, CascadeOutput, CascadePrediction, MaskLogits,
    QueryPrediction, ReconstructedComponent, MASK_LOGIT_THRESHOLD,
};
pub use encoder::{
    backbone_forward, encoder_forward, freq_encoding, fuse_max, Branch, FeatureMap, Memory,
    TokenSet,
};
pub use error::{Error, Result};
pub use hungarian::{match_hungarian, solve_assignment, Assignment};
pub use infer::{infer_plan, InferDiagnostics, InferResult};
pub use loss::{
    cascade_targets, loss_bbox, loss_seg, loss_total, loss_type, plan_loss, ClassWeights,
    LossBreakdown, PlanLossReport, SegLossConfig, TargetComponent, TargetKind,
};
pub use metrics::{
    align_evaluate, evaluate, greedy_match, AlignConfig, MatchPair, MetricReport,
    DOOR_IOU_THRESHOLD, ROOM_IOU_THRESHOLD, TYPE_AWARE_MATCHING,
};
pub use pipeline::{
    augment, normalize_test, normalize_train, split_branches, AugmentConfig, BranchInputs,
    ContentTransform, NormalizeSpec, Regime, NORMALIZE_TEST, NORMALIZE_TRAIN,
};
pub use plan::{BBox, Component, ComponentType, Floorplan, Geometry, NUM_CHANNELS, NUM_CLASSES};
pub use raster::{
    bbox_of, connected_components, iou_masks, rasterize, Mask, RasterStack, CHANNEL_COLORS,
};
pub use refine::{
    iou_gate, keep_best_component, polygonize, refine_iterate, snap_doors, IdentityRefiner,
    MaskRefiner, MorphRefiner, SnappedDoors,
};
pub use svg::render_svg;
pub use synth::{gen_synthetic, SynthConfig};
pub use weights::{init_seeded, ArchConfig, WeightBundle};

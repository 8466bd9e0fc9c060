//! Visible room/door encoder: a stride-32 convolutional stub per branch
//! image, element-wise-max fusion across room instances, frequency
//! position/type encodings, and a 6-layer transformer encoder.

use crate::error::{Error, Result};
use crate::nn::{layer_norm, multi_head_attention, relu_inplace};
use crate::raster::RasterStack;
use crate::weights::{ConvLayer, WeightBundle};
use ndarray::Array2;

/// Stride-32 feature lattice; `feat` holds one row per grid cell, row-major
/// in (y, x).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub gw: usize,
    pub gh: usize,
    pub feat: Array2<f32>,
}

/// Branch provenance of a token, with the paper's type scalars.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Both,
    Room,
    Door,
}

impl Branch {
    pub fn type_scalar(self) -> f64 {
        match self {
            Branch::Both => 1001.0,
            Branch::Room => 1002.0,
            Branch::Door => 1003.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenInfo {
    /// 1-based grid coordinates.
    pub x: usize,
    pub y: usize,
    pub branch: Branch,
}

/// Ordered token sequence: branch-major (both, room, door), row-major within
/// a branch.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSet {
    pub tokens: Array2<f32>,
    pub info: Vec<TokenInfo>,
    pub grid: (usize, usize),
}

/// The `both`-branch block of encoded tokens, fed to every decoder cascade
/// via cross-attention.
#[derive(Debug, Clone, PartialEq)]
pub struct Memory {
    pub tokens: Array2<f32>,
    pub grid: (usize, usize),
}

impl TokenSet {
    pub fn len(&self) -> usize {
        self.tokens.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.nrows() == 0
    }

    pub fn memory(&self) -> Memory {
        let rows: Vec<usize> = self
            .info
            .iter()
            .enumerate()
            .filter(|(_, i)| i.branch == Branch::Both)
            .map(|(r, _)| r)
            .collect();
        let mut tokens = Array2::zeros((rows.len(), self.tokens.ncols()));
        for (dst, &src) in rows.iter().enumerate() {
            tokens.row_mut(dst).assign(&self.tokens.row(src));
        }
        Memory { tokens, grid: self.grid }
    }
}

/// 3x3 stride-2 pad-1 convolution via im2col, followed by ReLU.
fn conv3x3_stride2_relu(
    input: &Array2<f32>,
    w: usize,
    h: usize,
    layer: &ConvLayer,
) -> (Array2<f32>, usize, usize) {
    let c_out = layer.weight.shape()[0];
    let c_in = layer.weight.shape()[1];
    debug_assert_eq!(input.ncols(), c_in);
    let (ow, oh) = (w / 2, h / 2);

    let mut wmat = Array2::<f32>::zeros((c_in * 9, c_out));
    for oc in 0..c_out {
        for ic in 0..c_in {
            for ky in 0..3 {
                for kx in 0..3 {
                    wmat[[ic * 9 + ky * 3 + kx, oc]] = layer.weight[[oc, ic, ky, kx]];
                }
            }
        }
    }

    let mut cols = Array2::<f32>::zeros((ow * oh, c_in * 9));
    for oy in 0..oh {
        for ky in 0..3 {
            let sy = (2 * oy + ky) as i64 - 1;
            if sy < 0 || sy >= h as i64 {
                continue;
            }
            for ox in 0..ow {
                let row = oy * ow + ox;
                for kx in 0..3 {
                    let sx = (2 * ox + kx) as i64 - 1;
                    if sx < 0 || sx >= w as i64 {
                        continue;
                    }
                    let src = sy as usize * w + sx as usize;
                    for ic in 0..c_in {
                        cols[[row, ic * 9 + ky * 3 + kx]] = input[[src, ic]];
                    }
                }
            }
        }
    }

    let mut out = cols.dot(&wmat);
    out += &layer.bias;
    relu_inplace(&mut out);
    (out, ow, oh)
}

/// Run one branch image through the backbone stub and the 1x1 projection.
pub fn backbone_forward(stack: &RasterStack, bundle: &WeightBundle) -> Result<FeatureMap> {
    let stride = bundle.arch.stride();
    if stack.w % stride != 0 || stack.h % stride != 0 || stack.w == 0 || stack.h == 0 {
        return Err(Error::BadDims(format!(
            "input {}x{} is not a positive multiple of stride {stride}",
            stack.w, stack.h
        )));
    }
    let mut feat = Array2::<f32>::zeros((stack.w * stack.h, stack.channels.len()));
    for (ci, ch) in stack.channels.iter().enumerate() {
        for (x, y) in ch.iter_set() {
            feat[[y * stack.w + x, ci]] = 1.0;
        }
    }
    let (mut w, mut h) = (stack.w, stack.h);
    for layer in &bundle.backbone {
        let (next, nw, nh) = conv3x3_stride2_relu(&feat, w, h, layer);
        feat = next;
        w = nw;
        h = nh;
    }
    let projected = bundle.proj.forward(&feat);
    Ok(FeatureMap { gw: w, gh: h, feat: projected })
}

/// Element-wise maximum across instance feature maps.
pub fn fuse_max(maps: &[FeatureMap]) -> Result<FeatureMap> {
    let first = maps.first().ok_or_else(|| Error::EmptyInput("no feature maps to fuse".into()))?;
    let mut out = first.clone();
    for m in &maps[1..] {
        if (m.gw, m.gh) != (out.gw, out.gh) || m.feat.dim() != out.feat.dim() {
            return Err(Error::BadDims("feature map shapes differ".into()));
        }
        out.feat.zip_mut_with(&m.feat, |a, &b| *a = a.max(b));
    }
    Ok(out)
}

/// d-dimensional frequency encoding: cosines over i = 1..d/2, then sines,
/// with frequencies 10^(8i/d).
pub fn freq_encoding(t: f64, d: usize) -> Result<Vec<f64>> {
    if d % 2 != 0 {
        return Err(Error::BadDims(format!("encoding dimension {d} is odd")));
    }
    let half = d / 2;
    let mut out = Vec::with_capacity(d);
    for i in 1..=half {
        out.push((10f64.powf(8.0 * i as f64 / d as f64) * t).cos());
    }
    for i in 1..=half {
        out.push((10f64.powf(8.0 * i as f64 / d as f64) * t).sin());
    }
    Ok(out)
}

/// Position-plus-type offset added to every token of a branch:
/// [P_{d/2}(x), P_{d/2}(y)] + P_d(type), positions 1-based.
pub fn pos_type_encoding(x: usize, y: usize, branch: Branch, d: usize) -> Result<Vec<f64>> {
    let px = freq_encoding(x as f64, d / 2)?;
    let py = freq_encoding(y as f64, d / 2)?;
    let pt = freq_encoding(branch.type_scalar(), d)?;
    Ok((0..d)
        .map(|i| {
            let pos = if i < d / 2 { px[i] } else { py[i - d / 2] };
            pos + pt[i]
        })
        .collect())
}

/// Tokenize a fused feature map: add position and type encodings, row-major.
pub fn add_pos_type(map: &FeatureMap, branch: Branch) -> Result<(Array2<f32>, Vec<TokenInfo>)> {
    let d = map.feat.ncols();
    if d % 4 != 0 {
        return Err(Error::BadDims(format!("embedding dim {d} must be divisible by 4")));
    }
    let mut tokens = map.feat.clone();
    let mut info = Vec::with_capacity(map.gw * map.gh);
    for y in 1..=map.gh {
        for x in 1..=map.gw {
            let enc = pos_type_encoding(x, y, branch, d)?;
            let row = (y - 1) * map.gw + (x - 1);
            for (i, v) in enc.iter().enumerate() {
                tokens[[row, i]] += *v as f32;
            }
            info.push(TokenInfo { x, y, branch });
        }
    }
    Ok((tokens, info))
}

/// Concatenate the three encoded branches into the encoder input sequence.
pub fn build_token_set(both: &FeatureMap, room: &FeatureMap, door: &FeatureMap) -> Result<TokenSet> {
    if (room.gw, room.gh) != (both.gw, both.gh) || (door.gw, door.gh) != (both.gw, both.gh) {
        return Err(Error::BadDims("branch grids differ".into()));
    }
    let d = both.feat.ncols();
    let n = both.gw * both.gh;
    let mut tokens = Array2::<f32>::zeros((3 * n, d));
    let mut info = Vec::with_capacity(3 * n);
    for (slot, (map, branch)) in
        [(both, Branch::Both), (room, Branch::Room), (door, Branch::Door)].iter().enumerate()
    {
        let (t, i) = add_pos_type(map, *branch)?;
        tokens.slice_mut(ndarray::s![slot * n..(slot + 1) * n, ..]).assign(&t);
        info.extend(i);
    }
    Ok(TokenSet { tokens, info, grid: (both.gw, both.gh) })
}

/// One encoder layer: self-attention, add & norm, 2048-wide ReLU MLP,
/// add & norm. Dropout is identity at inference.
fn encoder_layer(
    src: &Array2<f32>,
    layer: &crate::weights::EncoderLayerWeights,
    bundle: &WeightBundle,
) -> Result<Array2<f32>> {
    let norm = |x: &Array2<f32>, w| {
        if bundle.arch.layer_norm_enabled {
            layer_norm(x, w)
        } else {
            x.clone()
        }
    };
    let attended = multi_head_attention(&layer.self_attn, src, src, bundle.arch.num_heads)?;
    let src4 = norm(&(attended + src), &layer.norm1);
    let mut hidden = layer.linear1.forward(&src4);
    relu_inplace(&mut hidden);
    let src7 = layer.linear2.forward(&hidden);
    Ok(norm(&(src7 + &src4), &layer.norm2))
}

/// Run the full encoder stack; the output keeps the input ordering and
/// provenance, so `.memory()` yields the `both` block.
pub fn encoder_forward(tokens: &TokenSet, bundle: &WeightBundle) -> Result<TokenSet> {
    if tokens.tokens.ncols() != bundle.arch.embed_dim {
        return Err(Error::BadDims(format!(
            "tokens are {}-dim, weights expect {}",
            tokens.tokens.ncols(),
            bundle.arch.embed_dim
        )));
    }
    let mut src = tokens.tokens.clone();
    for layer in &bundle.encoder {
        src = encoder_layer(&src, layer, bundle)?;
    }
    Ok(TokenSet { tokens: src, info: tokens.info.clone(), grid: tokens.grid })
}

/// Encode one sample's branch inputs end to end: backbone per instance,
/// max-fusion, tokenization, encoder stack.
pub fn encode_branches(
    branches: &crate::pipeline::BranchInputs,
    bundle: &WeightBundle,
) -> Result<TokenSet> {
    let room_maps: Vec<FeatureMap> = branches
        .room_images
        .iter()
        .map(|s| backbone_forward(s, bundle))
        .collect::<Result<_>>()?;
    let both_maps: Vec<FeatureMap> = branches
        .both_images
        .iter()
        .map(|s| backbone_forward(s, bundle))
        .collect::<Result<_>>()?;
    let room = fuse_max(&room_maps)?;
    let both = fuse_max(&both_maps)?;
    let door = backbone_forward(&branches.door_image, bundle)?;
    let tokens = build_token_set(&both, &room, &door)?;
    encoder_forward(&tokens, bundle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::{init_seeded, ArchConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_arch() -> ArchConfig {
        ArchConfig {
            backbone_channels: vec![4, 8],
            encoder_layers: 2,
            decoder_layers: 1,
            embed_dim: 32,
            mlp_dim: 48,
            ..ArchConfig::default()
        }
    }

    fn random_map(rng: &mut ChaCha8Rng, gw: usize, gh: usize, d: usize) -> FeatureMap {
        FeatureMap { gw, gh, feat: Array2::from_shape_fn((gw * gh, d), |_| rng.gen_range(-1.0..1.0)) }
    }

    #[test]
    fn backbone_geometry() {
        let arch = small_arch();
        let bundle = init_seeded(&arch, 3);
        let stack = RasterStack::new(64, 32);
        let map = backbone_forward(&stack, &bundle).unwrap();
        assert_eq!((map.gw, map.gh), (16, 8));
        assert_eq!(map.feat.dim(), (16 * 8, 32));
        assert!(matches!(
            backbone_forward(&RasterStack::new(50, 64), &bundle),
            Err(Error::BadDims(_))
        ));
    }

    #[test]
    fn backbone_zero_input_zero_bias_gives_zeros() {
        let arch = small_arch();
        let mut bundle = init_seeded(&arch, 3);
        for conv in &mut bundle.backbone {
            conv.bias.fill(0.0);
        }
        bundle.proj.bias.fill(0.0);
        let map = backbone_forward(&RasterStack::new(32, 32), &bundle).unwrap();
        assert!(map.feat.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backbone_is_deterministic() {
        let bundle = init_seeded(&small_arch(), 9);
        let mut stack = RasterStack::new(32, 32);
        stack.channels[1].set(10, 12, true);
        stack.channels[5].set(3, 3, true);
        assert_eq!(
            backbone_forward(&stack, &bundle).unwrap(),
            backbone_forward(&stack, &bundle).unwrap()
        );
    }

    #[test]
    fn fuse_max_identity_and_commutative() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let maps: Vec<FeatureMap> = (0..4).map(|_| random_map(&mut rng, 3, 2, 8)).collect();
        assert_eq!(fuse_max(&maps[..1]).unwrap(), maps[0]);
        let fwd = fuse_max(&maps).unwrap();
        let rev: Vec<FeatureMap> = maps.iter().rev().cloned().collect();
        assert_eq!(fuse_max(&rev).unwrap(), fwd);
        assert!(matches!(fuse_max(&[]), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn fuse_max_elementwise() {
        let a = FeatureMap { gw: 1, gh: 1, feat: ndarray::array![[1.0, 5.0]] };
        let b = FeatureMap { gw: 1, gh: 1, feat: ndarray::array![[3.0, 2.0]] };
        assert_eq!(fuse_max(&[a, b]).unwrap().feat, ndarray::array![[3.0, 5.0]]);
    }

    #[test]
    fn freq_encoding_at_zero() {
        assert_eq!(freq_encoding(0.0, 4).unwrap(), vec![1.0, 1.0, 0.0, 0.0]);
        assert!(matches!(freq_encoding(0.0, 5), Err(Error::BadDims(_))));
    }

    #[test]
    fn freq_encoding_matches_scalar_evaluation() {
        // d = 2: single frequency 10^(8/2) = 1e4.
        let enc = freq_encoding(1.0, 2).unwrap();
        assert_eq!(enc, vec![(1e4f64).cos(), (1e4f64).sin()]);
    }

    #[test]
    fn freq_encoding_pairs_on_unit_circle() {
        for &t in &[0.0, 1.0, 7.0, 1001.0, 1003.0] {
            let d = 32;
            let enc = freq_encoding(t, d).unwrap();
            for i in 0..d / 2 {
                let norm = enc[i] * enc[i] + enc[d / 2 + i] * enc[d / 2 + i];
                assert!((norm - 1.0).abs() < 1e-12, "t={t} i={i} norm={norm}");
            }
        }
    }

    #[test]
    fn zero_features_reduce_to_encodings() {
        let map = FeatureMap { gw: 2, gh: 2, feat: Array2::zeros((4, 32)) };
        let (tokens, info) = add_pos_type(&map, Branch::Both).unwrap();
        let expect = pos_type_encoding(1, 1, Branch::Both, 32).unwrap();
        for (i, v) in expect.iter().enumerate() {
            assert!((tokens[[0, i]] as f64 - v).abs() < 1e-6);
        }
        assert_eq!(info[0], TokenInfo { x: 1, y: 1, branch: Branch::Both });
        assert_eq!(info[3], TokenInfo { x: 2, y: 2, branch: Branch::Both });
    }

    #[test]
    fn branch_types_differ_by_constant_offset() {
        let d = 32;
        let room = pos_type_encoding(3, 5, Branch::Room, d).unwrap();
        let door = pos_type_encoding(3, 5, Branch::Door, d).unwrap();
        let r2 = pos_type_encoding(7, 2, Branch::Room, d).unwrap();
        let d2 = pos_type_encoding(7, 2, Branch::Door, d).unwrap();
        for i in 0..d {
            let delta_a = room[i] - door[i];
            let delta_b = r2[i] - d2[i];
            assert!((delta_a - delta_b).abs() < 1e-12);
        }
    }

    #[test]
    fn encoder_preserves_counts_and_exposes_memory() {
        let arch = small_arch();
        let bundle = init_seeded(&arch, 21);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let both = random_map(&mut rng, 4, 4, 32);
        let room = random_map(&mut rng, 4, 4, 32);
        let door = random_map(&mut rng, 4, 4, 32);
        let tokens = build_token_set(&both, &room, &door).unwrap();
        assert_eq!(tokens.len(), 3 * 16);
        let encoded = encoder_forward(&tokens, &bundle).unwrap();
        assert_eq!(encoded.len(), 3 * 16);
        let memory = encoded.memory();
        assert_eq!(memory.tokens.nrows(), 16);
        // Both-branch tokens come first by construction.
        assert_eq!(memory.tokens, encoded.tokens.slice(ndarray::s![0..16, ..]).to_owned());
        // Determinism.
        assert_eq!(encoder_forward(&tokens, &bundle).unwrap(), encoded);
    }
}

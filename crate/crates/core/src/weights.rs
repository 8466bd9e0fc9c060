//! Network weights: typed bundle, deterministic seeded initialization, and
//! the on-disk container (a JSON manifest of named tensors plus one raw
//! little-endian f32 blob stored next to it with a `.bin` extension).

use crate::error::{Error, Result};
use crate::nn::{AttentionWeights, LinearWeights, NormWeights};
use crate::plan::{NUM_CHANNELS, NUM_CLASSES};
use ndarray::{Array1, Array2, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

/// Architecture knobs. The encoder recipe is fixed at 6 layers; decoder depth
/// per cascade and the backbone stub widths are configurable.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchConfig {
    pub backbone_channels: Vec<usize>,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub num_heads: usize,
    pub embed_dim: usize,
    pub mlp_dim: usize,
    /// Prepared query embeddings for the first cascade (one per visible door).
    pub max_visible_doors: usize,
    pub indirect_queries: usize,
    pub door_queries: usize,
    /// Test knob: layer norms replaced by identity when false.
    pub layer_norm_enabled: bool,
}

impl Default for ArchConfig {
    fn default() -> ArchConfig {
        ArchConfig {
            backbone_channels: vec![16, 32, 64, 128, 256],
            encoder_layers: 6,
            decoder_layers: 2,
            num_heads: 8,
            embed_dim: 256,
            mlp_dim: 2048,
            max_visible_doors: 20,
            indirect_queries: 15,
            door_queries: 15,
            layer_norm_enabled: true,
        }
    }
}

impl ArchConfig {
    /// Backbone downsampling factor: one stride-2 stage per conv.
    pub fn stride(&self) -> usize {
        1 << self.backbone_channels.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    /// [out_c, in_c, 3, 3]
    pub weight: Array4<f32>,
    pub bias: Array1<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayerWeights {
    pub self_attn: AttentionWeights,
    pub norm1: NormWeights,
    pub linear1: LinearWeights,
    pub linear2: LinearWeights,
    pub norm2: NormWeights,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderLayerWeights {
    pub self_attn: AttentionWeights,
    pub norm1: NormWeights,
    pub cross_attn: AttentionWeights,
    pub norm2: NormWeights,
    pub linear1: LinearWeights,
    pub linear2: LinearWeights,
    pub norm3: NormWeights,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadWeights {
    /// 15-way type classifier.
    pub type_head: LinearWeights,
    /// 3-layer bbox MLP (256 -> 256 -> 256 -> 4).
    pub bbox: [LinearWeights; 3],
    /// Query projection for the attention-map mask head.
    pub mask_proj: LinearWeights,
}

/// Every tensor of the network, immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightBundle {
    pub arch: ArchConfig,
    pub backbone: Vec<ConvLayer>,
    pub proj: LinearWeights,
    pub encoder: Vec<EncoderLayerWeights>,
    pub decoders: [Vec<DecoderLayerWeights>; 3],
    pub heads: HeadWeights,
    pub queries_direct: Array2<f32>,
    pub queries_indirect: Array2<f32>,
    pub queries_door: Array2<f32>,
}

/// Canonical (name, shape) list for an architecture; also fixes blob layout.
fn tensor_specs(arch: &ArchConfig) -> Vec<(String, Vec<usize>)> {
    let d = arch.embed_dim;
    let mut specs: Vec<(String, Vec<usize>)> = Vec::new();

    let mut in_c = NUM_CHANNELS;
    for (i, &out_c) in arch.backbone_channels.iter().enumerate() {
        specs.push((format!("backbone.conv{}.weight", i + 1), vec![out_c, in_c, 3, 3]));
        specs.push((format!("backbone.conv{}.bias", i + 1), vec![out_c]));
        in_c = out_c;
    }
    specs.push(("backbone.proj.weight".into(), vec![d, in_c]));
    specs.push(("backbone.proj.bias".into(), vec![d]));

    let attn = |specs: &mut Vec<(String, Vec<usize>)>, prefix: &str| {
        for part in ["q", "k", "v", "out"] {
            specs.push((format!("{prefix}.{part}.weight"), vec![d, d]));
            specs.push((format!("{prefix}.{part}.bias"), vec![d]));
        }
    };
    let norm = |specs: &mut Vec<(String, Vec<usize>)>, prefix: &str| {
        specs.push((format!("{prefix}.scale"), vec![d]));
        specs.push((format!("{prefix}.shift"), vec![d]));
    };
    let mlp = |specs: &mut Vec<(String, Vec<usize>)>, prefix: &str| {
        specs.push((format!("{prefix}.linear1.weight"), vec![arch.mlp_dim, d]));
        specs.push((format!("{prefix}.linear1.bias"), vec![arch.mlp_dim]));
        specs.push((format!("{prefix}.linear2.weight"), vec![d, arch.mlp_dim]));
        specs.push((format!("{prefix}.linear2.bias"), vec![d]));
    };

    for l in 0..arch.encoder_layers {
        let p = format!("encoder.layer{l}");
        attn(&mut specs, &format!("{p}.self_attn"));
        norm(&mut specs, &format!("{p}.norm1"));
        mlp(&mut specs, &p);
        norm(&mut specs, &format!("{p}.norm2"));
    }
    for c in 1..=3 {
        for l in 0..arch.decoder_layers {
            let p = format!("decoder{c}.layer{l}");
            attn(&mut specs, &format!("{p}.self_attn"));
            norm(&mut specs, &format!("{p}.norm1"));
            attn(&mut specs, &format!("{p}.cross_attn"));
            norm(&mut specs, &format!("{p}.norm2"));
            mlp(&mut specs, &p);
            norm(&mut specs, &format!("{p}.norm3"));
        }
    }
    specs.push(("heads.type.weight".into(), vec![NUM_CLASSES, d]));
    specs.push(("heads.type.bias".into(), vec![NUM_CLASSES]));
    for (i, out) in [d, d, 4].into_iter().enumerate() {
        specs.push((format!("heads.bbox.l{}.weight", i + 1), vec![out, d]));
        specs.push((format!("heads.bbox.l{}.bias", i + 1), vec![out]));
    }
    specs.push(("heads.mask.proj.weight".into(), vec![d, d]));
    specs.push(("heads.mask.proj.bias".into(), vec![d]));
    specs.push(("queries.direct".into(), vec![arch.max_visible_doors, d]));
    specs.push(("queries.indirect".into(), vec![arch.indirect_queries, d]));
    specs.push(("queries.door".into(), vec![arch.door_queries, d]));
    specs
}

type TensorMap = BTreeMap<String, (Vec<usize>, Vec<f32>)>;

const INIT_RANGE: f32 = 0.05;

/// Deterministic random bundle: uniform(-0.05, 0.05) everywhere except norm
/// scales (1) and shifts (0). Fill order follows the canonical tensor list.
pub fn init_seeded(arch: &ArchConfig, seed: u64) -> WeightBundle {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut map = TensorMap::new();
    for (name, shape) in tensor_specs(arch) {
        let len: usize = shape.iter().product();
        let data = if name.ends_with(".scale") {
            vec![1.0f32; len]
        } else if name.ends_with(".shift") {
            vec![0.0f32; len]
        } else {
            (0..len).map(|_| rng.gen_range(-INIT_RANGE..INIT_RANGE)).collect()
        };
        map.insert(name, (shape, data));
    }
    from_tensor_map(arch.clone(), &map).expect("seeded init matches its own spec")
}

fn take2(map: &TensorMap, name: &str) -> Result<Array2<f32>> {
    let (shape, data) =
        map.get(name).ok_or_else(|| Error::BadWeights(format!("missing tensor {name}")))?;
    if shape.len() != 2 {
        return Err(Error::BadWeights(format!("{name} is not rank 2")));
    }
    Array2::from_shape_vec((shape[0], shape[1]), data.clone())
        .map_err(|e| Error::BadWeights(format!("{name}: {e}")))
}

fn take1(map: &TensorMap, name: &str) -> Result<Array1<f32>> {
    let (shape, data) =
        map.get(name).ok_or_else(|| Error::BadWeights(format!("missing tensor {name}")))?;
    if shape.len() != 1 {
        return Err(Error::BadWeights(format!("{name} is not rank 1")));
    }
    Ok(Array1::from_vec(data.clone()))
}

fn take_linear(map: &TensorMap, prefix: &str) -> Result<LinearWeights> {
    Ok(LinearWeights {
        weight: take2(map, &format!("{prefix}.weight"))?,
        bias: take1(map, &format!("{prefix}.bias"))?,
    })
}

fn take_attention(map: &TensorMap, prefix: &str) -> Result<AttentionWeights> {
    Ok(AttentionWeights {
        q: take_linear(map, &format!("{prefix}.q"))?,
        k: take_linear(map, &format!("{prefix}.k"))?,
        v: take_linear(map, &format!("{prefix}.v"))?,
        out: take_linear(map, &format!("{prefix}.out"))?,
    })
}

fn take_norm(map: &TensorMap, prefix: &str) -> Result<NormWeights> {
    Ok(NormWeights {
        scale: take1(map, &format!("{prefix}.scale"))?,
        shift: take1(map, &format!("{prefix}.shift"))?,
    })
}

fn from_tensor_map(arch: ArchConfig, map: &TensorMap) -> Result<WeightBundle> {
    // Exact name/shape agreement with the architecture table.
    let specs = tensor_specs(&arch);
    if specs.len() != map.len() {
        return Err(Error::BadWeights(format!(
            "expected {} tensors, manifest has {}",
            specs.len(),
            map.len()
        )));
    }
    for (name, shape) in &specs {
        match map.get(name) {
            None => return Err(Error::BadWeights(format!("missing tensor {name}"))),
            Some((got, data)) => {
                if got != shape {
                    return Err(Error::BadWeights(format!(
                        "{name}: shape {got:?} does not match architecture {shape:?}"
                    )));
                }
                if data.len() != shape.iter().product::<usize>() {
                    return Err(Error::BadWeights(format!("{name}: data length mismatch")));
                }
            }
        }
    }

    let mut backbone = Vec::with_capacity(arch.backbone_channels.len());
    let mut in_c = NUM_CHANNELS;
    for (i, &out_c) in arch.backbone_channels.iter().enumerate() {
        let name = format!("backbone.conv{}.weight", i + 1);
        let (_, data) = map.get(&name).unwrap();
        let weight = Array4::from_shape_vec((out_c, in_c, 3, 3), data.clone())
            .map_err(|e| Error::BadWeights(format!("{name}: {e}")))?;
        let bias = take1(map, &format!("backbone.conv{}.bias", i + 1))?;
        backbone.push(ConvLayer { weight, bias });
        in_c = out_c;
    }

    let mut encoder = Vec::with_capacity(arch.encoder_layers);
    for l in 0..arch.encoder_layers {
        let p = format!("encoder.layer{l}");
        encoder.push(EncoderLayerWeights {
            self_attn: take_attention(map, &format!("{p}.self_attn"))?,
            norm1: take_norm(map, &format!("{p}.norm1"))?,
            linear1: take_linear(map, &format!("{p}.linear1"))?,
            linear2: take_linear(map, &format!("{p}.linear2"))?,
            norm2: take_norm(map, &format!("{p}.norm2"))?,
        });
    }

    let mut decoders: [Vec<DecoderLayerWeights>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for c in 1..=3usize {
        for l in 0..arch.decoder_layers {
            let p = format!("decoder{c}.layer{l}");
            decoders[c - 1].push(DecoderLayerWeights {
                self_attn: take_attention(map, &format!("{p}.self_attn"))?,
                norm1: take_norm(map, &format!("{p}.norm1"))?,
                cross_attn: take_attention(map, &format!("{p}.cross_attn"))?,
                norm2: take_norm(map, &format!("{p}.norm2"))?,
                linear1: take_linear(map, &format!("{p}.linear1"))?,
                linear2: take_linear(map, &format!("{p}.linear2"))?,
                norm3: take_norm(map, &format!("{p}.norm3"))?,
            });
        }
    }

    let heads = HeadWeights {
        type_head: take_linear(map, "heads.type")?,
        bbox: [
            take_linear(map, "heads.bbox.l1")?,
            take_linear(map, "heads.bbox.l2")?,
            take_linear(map, "heads.bbox.l3")?,
        ],
        mask_proj: take_linear(map, "heads.mask.proj")?,
    };

    Ok(WeightBundle {
        backbone,
        proj: take_linear(map, "backbone.proj")?,
        encoder,
        decoders,
        heads,
        queries_direct: take2(map, "queries.direct")?,
        queries_indirect: take2(map, "queries.indirect")?,
        queries_door: take2(map, "queries.door")?,
        arch,
    })
}

fn to_tensor_map(bundle: &WeightBundle) -> TensorMap {
    let mut map = TensorMap::new();
    for (i, conv) in bundle.backbone.iter().enumerate() {
        let shape = conv.weight.shape().to_vec();
        map.insert(
            format!("backbone.conv{}.weight", i + 1),
            (shape, conv.weight.iter().copied().collect()),
        );
        map.insert(
            format!("backbone.conv{}.bias", i + 1),
            (vec![conv.bias.len()], conv.bias.to_vec()),
        );
    }
    let put_linear = |map: &mut TensorMap, prefix: &str, w: &LinearWeights| {
        map.insert(
            format!("{prefix}.weight"),
            (vec![w.weight.nrows(), w.weight.ncols()], w.weight.iter().copied().collect()),
        );
        map.insert(format!("{prefix}.bias"), (vec![w.bias.len()], w.bias.to_vec()));
    };
    let put_attn = |map: &mut TensorMap, prefix: &str, w: &AttentionWeights| {
        for (part, lw) in [("q", &w.q), ("k", &w.k), ("v", &w.v), ("out", &w.out)] {
            map.insert(
                format!("{prefix}.{part}.weight"),
                (vec![lw.weight.nrows(), lw.weight.ncols()], lw.weight.iter().copied().collect()),
            );
            map.insert(format!("{prefix}.{part}.bias"), (vec![lw.bias.len()], lw.bias.to_vec()));
        }
    };
    let put_norm = |map: &mut TensorMap, prefix: &str, w: &NormWeights| {
        map.insert(format!("{prefix}.scale"), (vec![w.scale.len()], w.scale.to_vec()));
        map.insert(format!("{prefix}.shift"), (vec![w.shift.len()], w.shift.to_vec()));
    };

    put_linear(&mut map, "backbone.proj", &bundle.proj);
    for (l, layer) in bundle.encoder.iter().enumerate() {
        let p = format!("encoder.layer{l}");
        put_attn(&mut map, &format!("{p}.self_attn"), &layer.self_attn);
        put_norm(&mut map, &format!("{p}.norm1"), &layer.norm1);
        put_linear(&mut map, &format!("{p}.linear1"), &layer.linear1);
        put_linear(&mut map, &format!("{p}.linear2"), &layer.linear2);
        put_norm(&mut map, &format!("{p}.norm2"), &layer.norm2);
    }
    for (c, stack) in bundle.decoders.iter().enumerate() {
        for (l, layer) in stack.iter().enumerate() {
            let p = format!("decoder{}.layer{l}", c + 1);
            put_attn(&mut map, &format!("{p}.self_attn"), &layer.self_attn);
            put_norm(&mut map, &format!("{p}.norm1"), &layer.norm1);
            put_attn(&mut map, &format!("{p}.cross_attn"), &layer.cross_attn);
            put_norm(&mut map, &format!("{p}.norm2"), &layer.norm2);
            put_linear(&mut map, &format!("{p}.linear1"), &layer.linear1);
            put_linear(&mut map, &format!("{p}.linear2"), &layer.linear2);
            put_norm(&mut map, &format!("{p}.norm3"), &layer.norm3);
        }
    }
    put_linear(&mut map, "heads.type", &bundle.heads.type_head);
    put_linear(&mut map, "heads.bbox.l1", &bundle.heads.bbox[0]);
    put_linear(&mut map, "heads.bbox.l2", &bundle.heads.bbox[1]);
    put_linear(&mut map, "heads.bbox.l3", &bundle.heads.bbox[2]);
    put_linear(&mut map, "heads.mask.proj", &bundle.heads.mask_proj);
    for (name, q) in [
        ("queries.direct", &bundle.queries_direct),
        ("queries.indirect", &bundle.queries_indirect),
        ("queries.door", &bundle.queries_door),
    ] {
        map.insert(name.into(), (vec![q.nrows(), q.ncols()], q.iter().copied().collect()));
    }
    map
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    shape: Vec<usize>,
    /// Byte offset into the blob file.
    offset: u64,
    dtype: String,
}

fn blob_path(manifest_path: &Path) -> std::path::PathBuf {
    manifest_path.with_extension("bin")
}

impl WeightBundle {
    /// Write the manifest JSON at `manifest_path` and the raw f32 blob next
    /// to it (same stem, `.bin` extension).
    pub fn save(&self, manifest_path: &Path) -> Result<()> {
        let map = to_tensor_map(self);
        let mut manifest: BTreeMap<String, ManifestEntry> = BTreeMap::new();
        let mut blob: Vec<u8> = Vec::new();
        for (name, shape) in tensor_specs(&self.arch) {
            let (got_shape, data) = &map[&name];
            debug_assert_eq!(*got_shape, shape);
            manifest.insert(
                name,
                ManifestEntry { shape, offset: blob.len() as u64, dtype: "f32le".into() },
            );
            for v in data {
                blob.extend_from_slice(&v.to_le_bytes());
            }
        }
        std::fs::write(manifest_path, serde_json::to_vec_pretty(&manifest)?)?;
        std::fs::write(blob_path(manifest_path), blob)?;
        Ok(())
    }

    /// Load and validate a bundle; shapes must match the architecture table
    /// implied by the manifest's layer/stage counts.
    pub fn load(manifest_path: &Path) -> Result<WeightBundle> {
        let manifest: BTreeMap<String, ManifestEntry> =
            serde_json::from_slice(&std::fs::read(manifest_path)?)?;
        let blob = std::fs::read(blob_path(manifest_path))?;

        let mut map = TensorMap::new();
        for (name, entry) in &manifest {
            if entry.dtype != "f32le" {
                return Err(Error::BadWeights(format!("{name}: unsupported dtype {}", entry.dtype)));
            }
            let len: usize = entry.shape.iter().product();
            let start = entry.offset as usize;
            let end = start + len * 4;
            if end > blob.len() {
                return Err(Error::BadWeights(format!("{name}: blob too short")));
            }
            let data: Vec<f32> = blob[start..end]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            map.insert(name.clone(), (entry.shape.clone(), data));
        }
        let arch = infer_arch(&map)?;
        from_tensor_map(arch, &map)
    }
}

/// Recover the architecture knobs from tensor names and shapes.
fn infer_arch(map: &TensorMap) -> Result<ArchConfig> {
    let count_layers = |prefix: &str| -> usize {
        (0..).take_while(|l| map.contains_key(&format!("{prefix}.layer{l}.norm1.scale"))).count()
    };
    let n_convs =
        (1..).take_while(|i| map.contains_key(&format!("backbone.conv{i}.bias"))).count();
    if n_convs == 0 {
        return Err(Error::BadWeights("no backbone conv stages found".into()));
    }
    let mut backbone_channels = Vec::with_capacity(n_convs);
    for i in 1..=n_convs {
        let (shape, _) = map
            .get(&format!("backbone.conv{i}.weight"))
            .ok_or_else(|| Error::BadWeights(format!("missing backbone.conv{i}.weight")))?;
        if shape.len() != 4 {
            return Err(Error::BadWeights(format!("backbone.conv{i}.weight is not rank 4")));
        }
        backbone_channels.push(shape[0]);
    }
    let embed_dim = take1(map, "backbone.proj.bias")?.len();
    let mlp_dim = take1(map, "encoder.layer0.linear1.bias")?.len();
    let encoder_layers = count_layers("encoder");
    let decoder_layers = count_layers("decoder1");
    if decoder_layers == 0
        || count_layers("decoder2") != decoder_layers
        || count_layers("decoder3") != decoder_layers
    {
        return Err(Error::BadWeights("decoder cascades must share the same depth".into()));
    }
    let rows = |name: &str| -> Result<usize> { Ok(take2(map, name)?.nrows()) };
    Ok(ArchConfig {
        backbone_channels,
        encoder_layers,
        decoder_layers,
        max_visible_doors: rows("queries.direct")?,
        indirect_queries: rows("queries.indirect")?,
        door_queries: rows("queries.door")?,
        embed_dim,
        mlp_dim,
        ..ArchConfig::default()
    })
}

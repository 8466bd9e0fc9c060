//! Optional key=value configuration file; explicit command-line flags win
//! over file entries.

use floorhal_core::{ArchConfig, AugmentConfig, Error, Result, SegLossConfig};
use std::path::Path;

#[derive(Debug, Clone, Default)]
pub struct FileConfig {
    pub decoder_layers: Option<usize>,
    pub backbone_channels: Option<Vec<usize>>,
    pub focal_gamma: Option<f64>,
    pub focal_alpha: Option<f64>,
    pub align_rooms_only: Option<bool>,
    pub flip_prob: Option<f64>,
    pub rot_prob: Option<f64>,
    pub crop_enabled: Option<bool>,
    pub crop_min_frac: Option<f64>,
    pub crop_max_frac: Option<f64>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<FileConfig> {
        let mut cfg = FileConfig::default();
        let Some(path) = path else { return Ok(cfg) };
        let text = std::fs::read_to_string(path)?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::BadConfig(format!("line {}: expected key = value", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |what: &str| Error::BadConfig(format!("line {}: bad {what}: {value}", lineno + 1));
            match key {
                "decoder_layers" => {
                    cfg.decoder_layers = Some(value.parse().map_err(|_| bad("integer"))?)
                }
                "backbone_channels" => {
                    let channels: std::result::Result<Vec<usize>, _> =
                        value.split(',').map(|v| v.trim().parse()).collect();
                    cfg.backbone_channels = Some(channels.map_err(|_| bad("channel list"))?)
                }
                "focal_gamma" => cfg.focal_gamma = Some(value.parse().map_err(|_| bad("float"))?),
                "focal_alpha" => cfg.focal_alpha = Some(value.parse().map_err(|_| bad("float"))?),
                "align_rooms_only" => {
                    cfg.align_rooms_only = Some(value.parse().map_err(|_| bad("bool"))?)
                }
                "flip_prob" => cfg.flip_prob = Some(value.parse().map_err(|_| bad("float"))?),
                "rot_prob" => cfg.rot_prob = Some(value.parse().map_err(|_| bad("float"))?),
                "crop_enabled" => cfg.crop_enabled = Some(value.parse().map_err(|_| bad("bool"))?),
                "crop_min_frac" => cfg.crop_min_frac = Some(value.parse().map_err(|_| bad("float"))?),
                "crop_max_frac" => cfg.crop_max_frac = Some(value.parse().map_err(|_| bad("float"))?),
                other => return Err(Error::BadConfig(format!("unknown config key {other:?}"))),
            }
        }
        Ok(cfg)
    }

    pub fn arch(&self, decoder_layers_flag: Option<usize>) -> ArchConfig {
        let mut arch = ArchConfig::default();
        if let Some(channels) = &self.backbone_channels {
            arch.backbone_channels = channels.clone();
        }
        if let Some(layers) = self.decoder_layers {
            arch.decoder_layers = layers;
        }
        if let Some(layers) = decoder_layers_flag {
            arch.decoder_layers = layers;
        }
        arch
    }

    pub fn seg_loss(&self) -> SegLossConfig {
        let mut cfg = SegLossConfig::default();
        if let Some(g) = self.focal_gamma {
            cfg.focal_gamma = g;
        }
        if let Some(a) = self.focal_alpha {
            cfg.focal_alpha = a;
        }
        cfg
    }

    pub fn augment(&self, seed: u64) -> AugmentConfig {
        let mut cfg = AugmentConfig { seed, ..AugmentConfig::default() };
        if let Some(v) = self.flip_prob {
            cfg.flip_prob = v;
        }
        if let Some(v) = self.rot_prob {
            cfg.rot_prob = v;
        }
        if let Some(v) = self.crop_enabled {
            cfg.crop_enabled = v;
        }
        if let Some(v) = self.crop_min_frac {
            cfg.crop_min_frac = v;
        }
        if let Some(v) = self.crop_max_frac {
            cfg.crop_max_frac = v;
        }
        cfg
    }
}

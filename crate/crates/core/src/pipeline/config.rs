use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::dsp::AugmentPolicy;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, TrainConfig};

/// Model and optimizer settings for a training run. `seed` also fixes the
/// track split.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub preset: String,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            preset: "toy".into(),
            model: ModelConfig::toy(),
            train: TrainConfig::default(),
        }
    }
}

/// `key = value` lines; `#` starts a comment.
pub fn parse_key_values(text: &str, path: &Path) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Annotation {
                path: path.display().to_string(),
                line: i + 1,
                message: format!("expected key = value, got {line:?}"),
            });
        };
        out.push((i + 1, k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn aug(t: &mut TrainConfig) -> &mut AugmentPolicy {
    t.augment.get_or_insert_with(AugmentPolicy::default)
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value {value:?} for {key}")))
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let pairs: Vec<(String, String)> = parse_key_values(&text, path)?
            .into_iter()
            .map(|(_, k, v)| (k, v))
            .collect();
        Self::from_pairs(&pairs)
    }

    /// Apply overrides on top of the defaults. A `preset` key is applied
    /// before any other model key regardless of position.
    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        let mut cfg = RunConfig::default();
        if let Some((_, name)) = pairs.iter().rev().find(|(k, _)| k == "preset") {
            cfg.model = ModelConfig::preset(name)?;
            cfg.preset = name.clone();
        }
        for (k, v) in pairs {
            cfg.set(k, v)?;
        }
        cfg.model.validate()?;
        cfg.train.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let m = &mut self.model;
        let t = &mut self.train;
        match key {
            "preset" => {}
            "n_layers" => m.n_layers = parse(key, value)?,
            "model_dim" => m.model_dim = parse(key, value)?,
            "n_heads" => m.n_heads = parse(key, value)?,
            "conv_kernel" => m.conv_kernel = parse(key, value)?,
            "dropout" => m.dropout = parse(key, value)?,
            "fusion_dim" => m.fusion_dim = parse(key, value)?,
            "front_kernel" => m.front_kernel = parse(key, value)?,
            "learning_rate" => t.learning_rate = parse(key, value)?,
            "min_learning_rate" => t.min_learning_rate = parse(key, value)?,
            "weight_decay" => t.weight_decay = parse(key, value)?,
            "restart_period" => t.restart_period = parse(key, value)?,
            "restart_mult" => t.restart_mult = parse(key, value)?,
            "batch_size" => t.batch_size = parse(key, value)?,
            "patience" => t.patience = parse(key, value)?,
            "max_epochs" => t.max_epochs = parse(key, value)?,
            "seed" => t.seed = parse(key, value)?,
            "root_loss_weight" => t.root_loss_weight = parse(key, value)?,
            "bass_loss_weight" => t.bass_loss_weight = parse(key, value)?,
            "pitch_loss_weight" => t.pitch_loss_weight = parse(key, value)?,
            "max_freq_mask_bins" => aug(t).max_freq_mask_bins = parse(key, value)?,
            "max_time_mask_frames" => aug(t).max_time_mask_frames = parse(key, value)?,
            "masks_per_axis" => aug(t).masks_per_axis = parse(key, value)?,
            "augment" => {
                if parse::<bool>(key, value)? {
                    aug(t);
                } else {
                    t.augment = None;
                }
            }
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Every effective setting, one `key = value` per line, readable back by
    /// `from_file`.
    pub fn echo(&self) -> String {
        let m = &self.model;
        let t = &self.train;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("preset", self.preset.clone());
        kv("n_layers", m.n_layers.to_string());
        kv("model_dim", m.model_dim.to_string());
        kv("n_heads", m.n_heads.to_string());
        kv("conv_kernel", m.conv_kernel.to_string());
        kv("dropout", m.dropout.to_string());
        kv("fusion_dim", m.fusion_dim.to_string());
        kv("front_kernel", m.front_kernel.to_string());
        kv("learning_rate", t.learning_rate.to_string());
        kv("min_learning_rate", t.min_learning_rate.to_string());
        kv("weight_decay", t.weight_decay.to_string());
        kv("restart_period", t.restart_period.to_string());
        kv("restart_mult", t.restart_mult.to_string());
        kv("batch_size", t.batch_size.to_string());
        kv("patience", t.patience.to_string());
        kv("max_epochs", t.max_epochs.to_string());
        kv("seed", t.seed.to_string());
        kv("root_loss_weight", t.root_loss_weight.to_string());
        kv("bass_loss_weight", t.bass_loss_weight.to_string());
        kv("pitch_loss_weight", t.pitch_loss_weight.to_string());
        kv("augment", t.augment.is_some().to_string());
        if let Some(a) = &t.augment {
            kv("max_freq_mask_bins", a.max_freq_mask_bins.to_string());
            kv("max_time_mask_frames", a.max_time_mask_frames.to_string());
            kv("masks_per_axis", a.masks_per_axis.to_string());
        }
        s
    }
}

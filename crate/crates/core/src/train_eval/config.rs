use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph_conv::AdjacencyConfig;
use crate::losses::LossWeights;
use crate::models::{ClassifierConfig, DiscriminatorConfig, GeneratorConfig};
use crate::tensor::AdamConfig;

/// Run configuration, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub kernel_size: usize,
    pub g_steps_per_d_step: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    /// GAN epochs; one epoch is as many full iterations as the training split supports.
    pub epochs: usize,
    pub seed: u64,
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    pub n_au: usize,
    pub base_channels: usize,
    pub n_rrmb: usize,
    pub sim_threshold: f64,
    pub cls_epochs: usize,
    pub cls_lr: f64,
    pub cls_batch_size: usize,
    /// Share of the training split held out to select the best classifier epoch.
    pub val_fraction: f64,
    /// Test images used for the periodic evaluation during GAN training.
    pub eval_samples: usize,
    /// Iterations between periodic evaluations; 0 evaluates at epoch ends only.
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            batch_size: 8,
            kernel_size: 3,
            g_steps_per_d_step: 3,
            lambda1: 0.001,
            lambda2: 0.001,
            lambda3: 0.5,
            epochs: 6,
            seed: 0,
            data_dir: PathBuf::from("data"),
            out_dir: PathBuf::from("runs"),
            n_au: 8,
            base_channels: 32,
            n_rrmb: 3,
            sim_threshold: 0.9,
            cls_epochs: 12,
            cls_lr: 1e-3,
            cls_batch_size: 16,
            val_fraction: 0.1,
            eval_samples: 64,
            eval_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::InvalidArgument(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = toml::from_str(&text).map_err(|e| Error::format(path, e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_toml_string()).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        for (name, v) in [("lr", self.lr), ("cls_lr", self.cls_lr)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("cls_batch_size", self.cls_batch_size),
            ("g_steps_per_d_step", self.g_steps_per_d_step),
            ("n_au", self.n_au),
            ("base_channels", self.base_channels),
        ] {
            if v == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        if self.kernel_size % 2 == 0 {
            return bad(format!("kernel_size must be odd, got {}", self.kernel_size));
        }
        if !(-1.0..=1.0).contains(&self.sim_threshold) {
            return bad(format!("sim_threshold must lie in [-1, 1], got {}", self.sim_threshold));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad(format!("val_fraction must lie in [0, 1), got {}", self.val_fraction));
        }
        self.loss_weights().validate()
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights { lambda1: self.lambda1, lambda2: self.lambda2, lambda3: self.lambda3 }
    }

    pub fn adjacency(&self) -> AdjacencyConfig {
        AdjacencyConfig { sim_threshold: Some(self.sim_threshold), ..AdjacencyConfig::default() }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, ..AdamConfig::default() }
    }

    /// Generator mapping `input_side` inputs to `output_side` outputs.
    pub fn generator_config(&self, input_side: usize, output_side: usize) -> Result<GeneratorConfig> {
        let ratio = output_side / input_side.max(1);
        if input_side == 0 || output_side % input_side != 0 || !ratio.is_power_of_two() {
            return Err(Error::InvalidArgument(format!(
                "ground-truth side {output_side} must be a power-of-two multiple of input side {input_side}"
            )));
        }
        Ok(GeneratorConfig {
            base_channels: self.base_channels,
            n_rrmb: self.n_rrmb,
            upsample_stages: ratio.trailing_zeros() as usize,
            kernel_size: self.kernel_size,
            input_side,
            adjacency: self.adjacency(),
        })
    }

    pub fn discriminator_config(&self, side: usize) -> DiscriminatorConfig {
        DiscriminatorConfig { kernel_size: self.kernel_size, input_side: side, ..DiscriminatorConfig::default() }
    }

    pub fn classifier_config(&self, side: usize) -> ClassifierConfig {
        ClassifierConfig {
            n_au: self.n_au,
            kernel_size: self.kernel_size,
            input_side: side,
            adjacency: self.adjacency(),
            ..ClassifierConfig::default()
        }
    }
}

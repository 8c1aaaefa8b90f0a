//! Flat `key = value` run configuration.
//!
//! One assignment per line; `#` starts a comment (whole-line or trailing);
//! blank lines are fine. Every key has a default, unknown keys are
//! rejected, and the resolved config can be echoed back in canonical form
//! so two people can diff what their runs actually used.

use std::fmt;

use gdca_core::loss::LossWeights;
use gdca_core::model::GeneratorConfig;
use gdca_core::train::TrainSchedule;

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub base_channels: usize,
    pub n_ca_blocks: usize,
    pub n_le_blocks: usize,
    pub ca_reduction: usize,
    pub skip_weight_init: f64,
    pub w_percep: f64,
    pub w_img_gan: f64,
    pub w_feat_gan: f64,
    pub pretrain_steps: u64,
    pub gan_steps: u64,
    pub batch_size: usize,
    pub lr_pretrain: f64,
    pub lr_gan: f64,
    pub seed: u64,
    pub extractor_seed: u64,
    pub patch_size: usize,
    pub dataset_dir: String,
    pub checkpoint: String,
    pub resume: bool,
    pub checkpoint_interval: u64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            base_channels: 64,
            n_ca_blocks: 4,
            n_le_blocks: 4,
            ca_reduction: 4,
            skip_weight_init: 1.0,
            w_percep: 1.0,
            w_img_gan: 1e-3,
            w_feat_gan: 1e-3,
            pretrain_steps: 1000,
            gan_steps: 1000,
            batch_size: 4,
            lr_pretrain: 1e-4,
            lr_gan: 1e-4,
            seed: 0,
            extractor_seed: 0,
            patch_size: 24,
            dataset_dir: String::from("data"),
            checkpoint: String::from("gdca.ckpt"),
            resume: false,
            checkpoint_interval: 100,
        }
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Config, ConfigError> {
        let mut config = Config::default();
        let mut seen: Vec<String> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                ConfigError(format!("line {line_no}: expected `key = value`, got `{line}`"))
            })?;
            let key = key.trim();
            let value = value.trim();
            if seen.iter().any(|k| k == key) {
                return Err(ConfigError(format!("line {line_no}: duplicate key `{key}`")));
            }
            seen.push(key.to_string());
            config.assign(key, value, line_no)?;
        }
        config.validate()?;
        Ok(config)
    }

    fn assign(&mut self, key: &str, value: &str, line: usize) -> Result<(), ConfigError> {
        fn int<T: std::str::FromStr>(key: &str, value: &str, line: usize) -> Result<T, ConfigError> {
            value.parse().map_err(|_| {
                ConfigError(format!("line {line}: expected integer for {key}, got `{value}`"))
            })
        }
        fn real(key: &str, value: &str, line: usize) -> Result<f64, ConfigError> {
            value.parse().map_err(|_| {
                ConfigError(format!("line {line}: expected number for {key}, got `{value}`"))
            })
        }
        fn boolean(key: &str, value: &str, line: usize) -> Result<bool, ConfigError> {
            match value {
                "true" => Ok(true),
                "false" => Ok(false),
                _ => Err(ConfigError(format!(
                    "line {line}: expected true or false for {key}, got `{value}`"
                ))),
            }
        }
        match key {
            "base_channels" => self.base_channels = int(key, value, line)?,
            "n_ca_blocks" => self.n_ca_blocks = int(key, value, line)?,
            "n_le_blocks" => self.n_le_blocks = int(key, value, line)?,
            "ca_reduction" => self.ca_reduction = int(key, value, line)?,
            "skip_weight_init" => self.skip_weight_init = real(key, value, line)?,
            "w_percep" => self.w_percep = real(key, value, line)?,
            "w_img_gan" => self.w_img_gan = real(key, value, line)?,
            "w_feat_gan" => self.w_feat_gan = real(key, value, line)?,
            "pretrain_steps" => self.pretrain_steps = int(key, value, line)?,
            "gan_steps" => self.gan_steps = int(key, value, line)?,
            "batch_size" => self.batch_size = int(key, value, line)?,
            "lr_pretrain" => self.lr_pretrain = real(key, value, line)?,
            "lr_gan" => self.lr_gan = real(key, value, line)?,
            "seed" => self.seed = int(key, value, line)?,
            "extractor_seed" => self.extractor_seed = int(key, value, line)?,
            "patch_size" => self.patch_size = int(key, value, line)?,
            "dataset_dir" => self.dataset_dir = value.to_string(),
            "checkpoint" => self.checkpoint = value.to_string(),
            "resume" => self.resume = boolean(key, value, line)?,
            "checkpoint_interval" => self.checkpoint_interval = int(key, value, line)?,
            _ => return Err(ConfigError(format!("line {line}: unknown key `{key}`"))),
        }
        Ok(())
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let err = |m: String| Err(ConfigError(m));
        if self.batch_size == 0 {
            return err("batch_size must be positive".into());
        }
        if self.checkpoint_interval == 0 {
            return err("checkpoint_interval must be positive".into());
        }
        if self.patch_size < 8 {
            return err(format!("patch_size must be at least 8, got {}", self.patch_size));
        }
        self.generator_config()
            .validate()
            .map_err(|e| ConfigError(e.to_string()))?;
        self.loss_weights()
            .validate()
            .map_err(|e| ConfigError(e.to_string()))?;
        Ok(())
    }

    pub fn generator_config(&self) -> GeneratorConfig {
        GeneratorConfig {
            base_channels: self.base_channels,
            n_ca_blocks: self.n_ca_blocks,
            n_le_blocks: self.n_le_blocks,
            ca_reduction: self.ca_reduction,
            skip_weight_init: self.skip_weight_init,
        }
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            w_percep: self.w_percep,
            w_img_gan: self.w_img_gan,
            w_feat_gan: self.w_feat_gan,
        }
    }

    pub fn schedule(&self) -> TrainSchedule {
        TrainSchedule {
            pretrain_steps: self.pretrain_steps,
            gan_steps: self.gan_steps,
            batch_size: self.batch_size,
            lr_pretrain: self.lr_pretrain,
            lr_gan: self.lr_gan,
            seed: self.seed,
        }
    }
}

impl fmt::Display for Config {
    /// Canonical echo: every key, fixed order, parseable back.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "base_channels = {}", self.base_channels)?;
        writeln!(f, "n_ca_blocks = {}", self.n_ca_blocks)?;
        writeln!(f, "n_le_blocks = {}", self.n_le_blocks)?;
        writeln!(f, "ca_reduction = {}", self.ca_reduction)?;
        writeln!(f, "skip_weight_init = {}", self.skip_weight_init)?;
        writeln!(f, "w_percep = {}", self.w_percep)?;
        writeln!(f, "w_img_gan = {}", self.w_img_gan)?;
        writeln!(f, "w_feat_gan = {}", self.w_feat_gan)?;
        writeln!(f, "pretrain_steps = {}", self.pretrain_steps)?;
        writeln!(f, "gan_steps = {}", self.gan_steps)?;
        writeln!(f, "batch_size = {}", self.batch_size)?;
        writeln!(f, "lr_pretrain = {}", self.lr_pretrain)?;
        writeln!(f, "lr_gan = {}", self.lr_gan)?;
        writeln!(f, "seed = {}", self.seed)?;
        writeln!(f, "extractor_seed = {}", self.extractor_seed)?;
        writeln!(f, "patch_size = {}", self.patch_size)?;
        writeln!(f, "dataset_dir = {}", self.dataset_dir)?;
        writeln!(f, "checkpoint = {}", self.checkpoint)?;
        writeln!(f, "resume = {}", self.resume)?;
        write!(f, "checkpoint_interval = {}", self.checkpoint_interval)
    }
}

//! Training hyperparameters and the `paper` / `desk` presets.

use std::str::FromStr;

use crate::config::{ConfigError, KeyValues};
use crate::nn::AdamConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrainPreset {
    /// 1000 epochs, batch 256.
    Paper,
    /// 200 epochs, batch 32.
    Desk,
}

impl TrainPreset {
    pub fn name(self) -> &'static str {
        match self {
            TrainPreset::Paper => "paper",
            TrainPreset::Desk => "desk",
        }
    }
}

impl FromStr for TrainPreset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "paper" => Ok(TrainPreset::Paper),
            "desk" => Ok(TrainPreset::Desk),
            other => Err(format!("unknown training preset `{other}` (expected paper or desk)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub window: usize,
    /// Seeds the parameter initialization and the per-epoch shuffles.
    pub seed: u64,
    /// Write a checkpoint every this many epochs; 0 keeps only the final one.
    pub checkpoint_interval: usize,
    /// Samples per forward/backward shard. Bounds memory for large batches;
    /// results do not depend on it being split across threads.
    pub micro_batch: usize,
    pub threads: usize,
    /// Stop after this many epochs without a validation improvement.
    pub patience: Option<usize>,
}

impl TrainConfig {
    pub fn preset(preset: TrainPreset) -> Self {
        let (epochs, batch_size) = match preset {
            TrainPreset::Paper => (1000, 256),
            TrainPreset::Desk => (200, 32),
        };
        Self {
            epochs,
            batch_size,
            adam: AdamConfig::default(),
            window: 5,
            seed: 0,
            checkpoint_interval: 0,
            micro_batch: 32,
            threads: 1,
            patience: None,
        }
    }

    pub fn paper() -> Self {
        Self::preset(TrainPreset::Paper)
    }

    pub fn desk() -> Self {
        Self::preset(TrainPreset::Desk)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.epochs == 0 {
            return Err("epochs must be at least 1".into());
        }
        if self.batch_size == 0 || self.micro_batch == 0 {
            return Err("batch_size and micro_batch must be at least 1".into());
        }
        if self.window == 0 {
            return Err("window must be at least 1".into());
        }
        if self.threads == 0 {
            return Err("threads must be at least 1".into());
        }
        let a = &self.adam;
        if !(a.lr > 0.0 && a.lr.is_finite()) {
            return Err(format!("learning rate must be positive, got {}", a.lr));
        }
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.eps > 0.0) {
            return Err("adam betas must lie in [0, 1) and eps must be positive".into());
        }
        if self.patience == Some(0) {
            return Err("patience must be at least 1".into());
        }
        Ok(())
    }

    /// Reads training keys; `preset` (if present) picks the base values.
    pub fn from_key_values(kv: &mut KeyValues) -> Result<Self, ConfigError> {
        let preset = match kv.take::<String>("preset")? {
            Some(name) => name.parse::<TrainPreset>().map_err(ConfigError::Invalid)?,
            None => TrainPreset::Desk,
        };
        let base = Self::preset(preset);
        let patience: Option<usize> = kv.take("patience")?;
        let cfg = Self {
            epochs: kv.take_or("epochs", base.epochs)?,
            batch_size: kv.take_or("batch_size", base.batch_size)?,
            adam: AdamConfig {
                lr: kv.take_or("lr", base.adam.lr)?,
                beta1: kv.take_or("beta1", base.adam.beta1)?,
                beta2: kv.take_or("beta2", base.adam.beta2)?,
                eps: kv.take_or("eps", base.adam.eps)?,
            },
            window: kv.take_or("window", base.window)?,
            seed: kv.take_or("seed", base.seed)?,
            checkpoint_interval: kv.take_or("checkpoint_interval", base.checkpoint_interval)?,
            micro_batch: kv.take_or("micro_batch", base.micro_batch)?,
            threads: kv.take_or("threads", base.threads)?,
            patience,
        };
        cfg.validate().map_err(ConfigError::Invalid)?;
        Ok(cfg)
    }

    pub fn to_key_values(&self) -> String {
        let mut out = format!(
            "epochs = {}\nbatch_size = {}\nlr = {:?}\nbeta1 = {:?}\nbeta2 = {:?}\neps = {:?}\nwindow = {}\nseed = {}\ncheckpoint_interval = {}\nmicro_batch = {}\nthreads = {}\n",
            self.epochs,
            self.batch_size,
            self.adam.lr,
            self.adam.beta1,
            self.adam.beta2,
            self.adam.eps,
            self.window,
            self.seed,
            self.checkpoint_interval,
            self.micro_batch,
            self.threads
        );
        if let Some(p) = self.patience {
            out.push_str(&format!("patience = {p}\n"));
        }
        out
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::desk()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets() {
        let p = TrainConfig::paper();
        assert_eq!((p.epochs, p.batch_size, p.adam.lr, p.window), (1000, 256, 5e-4, 5));
        let d = TrainConfig::desk();
        assert_eq!((d.epochs, d.batch_size), (200, 32));
    }

    #[test]
    fn key_values_round_trip() {
        let mut cfg = TrainConfig::paper();
        cfg.seed = 9;
        cfg.patience = Some(4);
        let mut kv = KeyValues::parse(&cfg.to_key_values()).unwrap();
        let back = TrainConfig::from_key_values(&mut kv).unwrap();
        kv.finish().unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn preset_key_and_validation() {
        let mut kv = KeyValues::parse("preset = paper\nepochs = 3").unwrap();
        let cfg = TrainConfig::from_key_values(&mut kv).unwrap();
        assert_eq!((cfg.epochs, cfg.batch_size), (3, 256));
        let mut kv = KeyValues::parse("epochs = 0").unwrap();
        assert!(TrainConfig::from_key_values(&mut kv).is_err());
        let mut kv = KeyValues::parse("preset = huge").unwrap();
        assert!(TrainConfig::from_key_values(&mut kv).is_err());
    }
}

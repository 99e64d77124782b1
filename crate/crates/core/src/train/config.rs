use serde::{Deserialize, Serialize};

use crate::config::KvConfig;
use crate::error::{Error, Result};
use crate::losses::{LossSpec, Variant};
use crate::nn::Activation;

/// Hyperparameters for one pipeline run (pretrain, probe, fine-tune).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub decay_epoch: usize,
    pub decay_factor: f64,
    pub lambda_hr: f64,
    pub fr_weight: f64,
    pub variant: Variant,
    pub seed: u64,
    pub lp_epochs: usize,
    pub lp_lr: f64,
    pub pretrain_epochs: usize,
    pub pretrain_lr: f64,
    pub hidden_dims: Vec<usize>,
    pub feature_dim: usize,
    pub activation: Activation,
    /// Record per-step batch losses in addition to per-epoch summaries.
    pub trace_steps: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            lr: 0.001,
            decay_epoch: 24,
            decay_factor: 0.1,
            lambda_hr: 0.1,
            fr_weight: 1.0,
            variant: Variant::Rpf,
            seed: 0,
            lp_epochs: 10,
            lp_lr: 0.01,
            pretrain_epochs: 20,
            pretrain_lr: 0.02,
            hidden_dims: vec![64],
            feature_dim: 32,
            activation: Activation::Relu,
            trace_steps: false,
        }
    }
}

pub const TRAIN_KEYS: [&str; 17] = [
    "epochs",
    "batch_size",
    "lr",
    "decay_epoch",
    "decay_factor",
    "lambda_hr",
    "fr_weight",
    "variant",
    "seed",
    "lp_epochs",
    "lp_lr",
    "pretrain_epochs",
    "pretrain_lr",
    "hidden_dims",
    "feature_dim",
    "activation",
    "trace_steps",
];

impl TrainConfig {
    pub fn loss_spec(&self) -> LossSpec {
        LossSpec {
            variant: self.variant,
            lambda_hr: self.lambda_hr,
            fr_weight: self.fr_weight,
        }
    }

    /// Layer widths of the feature extractor, input first.
    pub fn layer_dims(&self, input_dim: usize) -> Vec<usize> {
        let mut dims = vec![input_dim];
        dims.extend(&self.hidden_dims);
        dims.push(self.feature_dim);
        dims
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.decay_epoch > self.epochs {
            return bad(format!("decay_epoch {} exceeds epochs {}", self.decay_epoch, self.epochs));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.feature_dim == 0 || self.hidden_dims.contains(&0) {
            return bad("layer widths must be positive".into());
        }
        for (name, v) in [("lr", self.lr), ("lp_lr", self.lp_lr), ("pretrain_lr", self.pretrain_lr)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be finite and ≥ 0, got {v}"));
            }
        }
        if !(self.decay_factor > 0.0 && self.decay_factor.is_finite()) {
            return bad(format!("decay_factor must be positive, got {}", self.decay_factor));
        }
        self.loss_spec().validate()
    }

    pub fn to_kv(&self) -> KvConfig {
        let mut kv = KvConfig::default();
        kv.set("epochs", &self.epochs.to_string());
        kv.set("batch_size", &self.batch_size.to_string());
        kv.set("lr", &self.lr.to_string());
        kv.set("decay_epoch", &self.decay_epoch.to_string());
        kv.set("decay_factor", &self.decay_factor.to_string());
        kv.set("lambda_hr", &self.lambda_hr.to_string());
        kv.set("fr_weight", &self.fr_weight.to_string());
        kv.set("variant", self.variant.name());
        kv.set("seed", &self.seed.to_string());
        kv.set("lp_epochs", &self.lp_epochs.to_string());
        kv.set("lp_lr", &self.lp_lr.to_string());
        kv.set("pretrain_epochs", &self.pretrain_epochs.to_string());
        kv.set("pretrain_lr", &self.pretrain_lr.to_string());
        kv.set(
            "hidden_dims",
            &self.hidden_dims.iter().map(usize::to_string).collect::<Vec<_>>().join(","),
        );
        kv.set("feature_dim", &self.feature_dim.to_string());
        kv.set("activation", &self.activation.to_string());
        kv.set("trace_steps", &self.trace_steps.to_string());
        kv
    }

    /// Reads known keys over the defaults; unknown keys are an error.
    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        let mut c = TrainConfig::default();
        for (key, value) in kv.iter() {
            match key {
                "epochs" => c.epochs = kv.parse(key)?,
                "batch_size" => c.batch_size = kv.parse(key)?,
                "lr" => c.lr = kv.parse(key)?,
                "decay_epoch" => c.decay_epoch = kv.parse(key)?,
                "decay_factor" => c.decay_factor = kv.parse(key)?,
                "lambda_hr" => c.lambda_hr = kv.parse(key)?,
                "fr_weight" => c.fr_weight = kv.parse(key)?,
                "variant" => c.variant = value.parse()?,
                "seed" => c.seed = kv.parse(key)?,
                "lp_epochs" => c.lp_epochs = kv.parse(key)?,
                "lp_lr" => c.lp_lr = kv.parse(key)?,
                "pretrain_epochs" => c.pretrain_epochs = kv.parse(key)?,
                "pretrain_lr" => c.pretrain_lr = kv.parse(key)?,
                "hidden_dims" => {
                    c.hidden_dims = value
                        .split(',')
                        .filter(|t| !t.trim().is_empty())
                        .map(|t| {
                            t.trim()
                                .parse()
                                .map_err(|_| Error::InvalidConfig(format!("bad width `{t}` in hidden_dims")))
                        })
                        .collect::<Result<_>>()?
                }
                "feature_dim" => c.feature_dim = kv.parse(key)?,
                "activation" => c.activation = value.parse()?,
                "trace_steps" => c.trace_steps = kv.parse(key)?,
                other => return Err(Error::InvalidConfig(format!("unknown training key `{other}`"))),
            }
        }
        c.validate()?;
        Ok(c)
    }

    /// SHA-256 of the canonical key=value text.
    pub fn hash(&self) -> String {
        self.to_kv().hash()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = TrainConfig::default();
        assert_eq!(TrainConfig::from_kv(&c.to_kv()).unwrap(), c);
        assert_eq!(c.to_kv().iter().count(), TRAIN_KEYS.len());
        for (k, _) in c.to_kv().iter() {
            assert!(TRAIN_KEYS.contains(&k));
        }
    }

    #[test]
    fn invariants() {
        let mut c = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
        c.epochs = 10;
        assert!(c.validate().is_err());
        c.decay_epoch = 10;
        assert!(c.validate().is_ok());
        let mut kv = KvConfig::default();
        kv.set("bogus", "1");
        assert!(TrainConfig::from_kv(&kv).is_err());
    }
}

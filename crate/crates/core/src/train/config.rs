//! Training configuration, read from TOML; every field has a default.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::encoders::{EncoderConfig, SneMode};
use crate::error::{Error, Result};
use crate::kb::{DEFAULT_DAMPING, DEFAULT_TOP_N};
use crate::numerical::NtConfig;
use crate::reasoner::{BasicTrainConfig, NsmConfig, RetrievalConfig, DEFAULT_STEPS};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    /// Adam step size for transformer pre-training.
    pub learning_rate: f64,
    /// Adam step size for joint Φ/Ψ training through the mixture.
    pub train_learning_rate: f64,
    /// Triplet margin.
    pub margin: f64,
    /// Entity pruning threshold.
    pub mu: f64,
    /// Numerical relations kept per question.
    pub k: usize,
    pub nt_layers: usize,
    pub nt_heads: usize,
    pub d_h: usize,
    pub d_enc: usize,
    pub n_min: usize,
    pub n_max: usize,
    pub pretrain_batch: usize,
    pub train_batch: usize,
    pub pretrain_epochs: usize,
    pub train_epochs: usize,
    /// Early stopping patience on validation Hits@1 (0 disables).
    pub patience: usize,
    /// Weight of the triplet loss next to the prediction loss.
    pub ntl_weight: f64,
    pub triplets_per_instance: usize,
    pub distractors: usize,
    /// Augmented questions as a fraction of the real training set.
    pub theta: f64,
    pub nsm_steps: usize,
    pub basic_epochs: usize,
    pub basic_batch: usize,
    pub basic_learning_rate: f64,
    pub damping: f64,
    pub top_n: usize,
    /// Global gradient norm clip; 0 disables.
    pub clip_norm: f64,
    pub sam: bool,
    pub sne: bool,
    pub qind: bool,
    pub qgnd: bool,
    pub npl: bool,
    pub ntl: bool,
    pub pretrain: bool,
    pub augment: bool,
    /// Off gives the basic-only model.
    pub numerical: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            learning_rate: 1e-4,
            train_learning_rate: 1e-3,
            margin: 0.5,
            mu: 0.05,
            k: 3,
            nt_layers: 2,
            nt_heads: 8,
            d_h: 64,
            d_enc: 64,
            n_min: 2,
            n_max: 50,
            pretrain_batch: 300,
            train_batch: 40,
            pretrain_epochs: 15,
            train_epochs: 50,
            patience: 5,
            ntl_weight: 1.0,
            triplets_per_instance: 5,
            distractors: 9,
            theta: 0.1,
            nsm_steps: DEFAULT_STEPS,
            basic_epochs: 30,
            basic_batch: 16,
            basic_learning_rate: 1e-3,
            damping: DEFAULT_DAMPING,
            top_n: DEFAULT_TOP_N,
            clip_norm: 5.0,
            sam: true,
            sne: true,
            qind: true,
            qgnd: true,
            npl: true,
            ntl: true,
            pretrain: true,
            augment: true,
            numerical: true,
        }
    }
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical TOML rendering.
    pub fn hash(&self) -> String {
        crate::nn::params::hex(&Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::config(msg));
        if !(self.learning_rate > 0.0 && self.train_learning_rate > 0.0 && self.basic_learning_rate > 0.0) {
            return bad("learning rates must be positive".into());
        }
        if self.margin < 0.0 {
            return bad(format!("margin {} is negative", self.margin));
        }
        if !(0.0..1.0).contains(&self.mu) {
            return bad(format!("mu {} outside [0, 1)", self.mu));
        }
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if self.n_min < 2 || self.n_min > self.n_max {
            return bad(format!("number range [{}, {}] is invalid", self.n_min, self.n_max));
        }
        if self.pretrain_batch == 0 || self.train_batch == 0 || self.basic_batch == 0 {
            return bad("batch sizes must be positive".into());
        }
        if self.theta < 0.0 {
            return bad(format!("theta {} is negative", self.theta));
        }
        if self.pretrain && !self.qind && !self.qgnd {
            return bad("pretraining is on but both QIND and QGND are disabled".into());
        }
        if self.pretrain && !self.npl && !self.ntl {
            return bad("pretraining is on but both NPL and NTL are disabled".into());
        }
        self.nt_config().validate()?;
        self.encoder_config().validate()
    }

    pub fn encoder_config(&self) -> EncoderConfig {
        EncoderConfig {
            d_enc: self.d_enc,
            seed: self.seed,
        }
    }

    pub fn sne_mode(&self) -> SneMode {
        if self.sne {
            SneMode::StartEnd
        } else {
            SneMode::ClsPool
        }
    }

    pub fn nt_config(&self) -> NtConfig {
        NtConfig {
            d_h: self.d_h,
            layers: self.nt_layers,
            heads: self.nt_heads,
            sam: self.sam,
            ..NtConfig::default()
        }
    }

    pub fn nsm_config(&self) -> NsmConfig {
        NsmConfig {
            d_enc: self.d_enc,
            d_h: self.d_h,
            steps: self.nsm_steps,
        }
    }

    pub fn retrieval(&self) -> RetrievalConfig {
        RetrievalConfig {
            damping: self.damping,
            top_n: self.top_n,
        }
    }

    pub fn basic_train(&self) -> BasicTrainConfig {
        BasicTrainConfig {
            epochs: self.basic_epochs,
            batch_size: self.basic_batch,
            learning_rate: self.basic_learning_rate,
            seed: self.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = TrainConfig::default();
        assert_eq!((c.learning_rate, c.margin, c.mu, c.k), (1e-4, 0.5, 0.05, 3));
        assert_eq!((c.nt_layers, c.nt_heads, c.n_min, c.n_max), (2, 8, 2, 50));
        assert_eq!((c.pretrain_batch, c.train_batch), (300, 40));
        c.validate().unwrap();
    }

    #[test]
    fn toml_round_trip_and_partial_files() {
        let c = TrainConfig {
            seed: 9,
            sam: false,
            ..TrainConfig::default()
        };
        assert_eq!(TrainConfig::from_toml(&c.to_toml()).unwrap(), c);
        let p = TrainConfig::from_toml("mu = 0.1\nsne = false\n").unwrap();
        assert_eq!(p.mu, 0.1);
        assert_eq!(p.sne_mode(), SneMode::ClsPool);
        assert!(TrainConfig::from_toml("bogus = 1").is_err());
        assert_ne!(c.hash(), TrainConfig::default().hash());
    }

    #[test]
    fn inconsistent_flags_rejected() {
        let c = TrainConfig {
            qind: false,
            qgnd: false,
            ..TrainConfig::default()
        };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let c = TrainConfig { pretrain: false, ..c };
        c.validate().unwrap();
        assert!(TrainConfig {
            n_min: 1,
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
    }
}

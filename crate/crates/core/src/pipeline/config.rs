use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::contrastive::LossConfig;
use crate::datagen::SharedPatternSpec;
use crate::error::{Error, Result};
use crate::eval::ProbeConfig;
use crate::mi::MineConfig;

/// Where the experiment's datasets come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    /// Directory holding `<name>_train.csv` / `<name>_test.csv`; `None` generates
    /// a synthetic pair from `synthetic` instead.
    pub dir: Option<PathBuf>,
    pub source: String,
    pub targets: Vec<String>,
    pub synthetic: SharedPatternSpec,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            dir: None,
            source: "source".into(),
            targets: vec!["target".into()],
            synthetic: SharedPatternSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
    pub rep_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: vec![128, 64],
            rep_dim: 32,
        }
    }
}

/// Optimizer and schedule for one training stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageConfig {
    pub epochs: usize,
    pub lr: f64,
    pub lr_min: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Input augmentation strength applied to each training batch (0 = off).
    pub augment: f64,
    /// Cosine schedule length in epochs when training stops before it ends;
    /// `None` uses `epochs`.
    #[serde(default)]
    pub horizon: Option<usize>,
}

impl StageConfig {
    fn validate(&self, name: &str) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("{name}.lr must be positive")));
        }
        if !(self.lr_min >= 0.0 && self.lr_min <= self.lr) {
            return Err(Error::Config(format!("{name}.lr_min must lie in [0, lr]")));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("{name}.momentum must lie in [0, 1)")));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config(format!("{name}.weight_decay must be ≥ 0")));
        }
        if !(self.augment >= 0.0 && self.augment.is_finite()) {
            return Err(Error::Config(format!("{name}.augment must be ≥ 0")));
        }
        if self.horizon.is_some_and(|h| h < self.epochs) {
            return Err(Error::Config(format!("{name}.horizon must be ≥ {name}.epochs")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Evaluate every this many epochs; epoch 0 and the final epoch are always evaluated.
    pub every: usize,
    /// Checkpoint every this many epochs when a checkpoint directory is given (0 = never).
    pub checkpoint_every: usize,
    pub probe: ProbeConfig,
    pub kmeans_seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            every: 1,
            checkpoint_every: 0,
            probe: ProbeConfig::default(),
            kmeans_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiConfig {
    /// Estimate I(X;T) and I(T;Y) every this many epochs (0 = never).
    pub every: usize,
    pub ixt: MineConfig,
    pub ity: MineConfig,
}

impl Default for MiConfig {
    fn default() -> Self {
        Self {
            every: 5,
            ixt: MineConfig::default(),
            ity: MineConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub seed: u64,
    pub batch_size: usize,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub stage1: StageConfig,
    pub stage2: StageConfig,
    pub loss: LossConfig,
    pub bank_momentum: f64,
    pub eval: EvalConfig,
    pub mi: MiConfig,
}

impl Default for TrainConfig {
    /// Desk-scale defaults: 40 + 80 epochs on the default synthetic pair.
    ///
    /// Stage 1 uses τ = 0.1; stage 2 fine-tunes at lr 5e-2 with β = 0, since at
    /// this scale any revitalization weight ≥ 0.005 costs over a point of source
    /// accuracy.
    fn default() -> Self {
        Self {
            seed: 0,
            batch_size: 64,
            data: DataConfig::default(),
            model: ModelConfig::default(),
            stage1: StageConfig {
                epochs: 40,
                lr: 5e-2,
                lr_min: 0.0,
                momentum: 0.9,
                weight_decay: 5e-4,
                augment: 0.0,
                horizon: None,
            },
            stage2: StageConfig {
                epochs: 80,
                lr: 5e-2,
                lr_min: 0.0,
                momentum: 0.9,
                weight_decay: 5e-4,
                augment: 0.0,
                horizon: None,
            },
            loss: LossConfig {
                tau_stage1: 0.1,
                beta: 0.0,
                ..LossConfig::default()
            },
            bank_momentum: 0.5,
            eval: EvalConfig::default(),
            mi: MiConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Full-scale schedule: 200 + 100 epochs, batch 64, lr 5e-2 then 5e-3,
    /// weight decay 5e-4, α = 0.01, β = 1.0, τ = 0.5 / 0.4, with the full probe
    /// and MINE protocols.
    pub fn reference() -> Self {
        let mut c = Self::default();
        c.stage1.epochs = 200;
        c.stage2.epochs = 100;
        c.stage2.lr = 5e-3;
        c.loss = LossConfig {
            alpha: 0.01,
            beta: 1.0,
            tau_stage1: 0.5,
            tau_stage2: 0.4,
            ..LossConfig::default()
        };
        c.eval.probe = ProbeConfig::reference();
        c.mi.ixt = MineConfig::reference_ixt();
        c.mi.ity = MineConfig::reference_ity();
        c
    }

    /// Temporal-analysis baseline: single stage with minimum lr 1e-2, stopped
    /// at epoch 190 of a 200-epoch cosine schedule.
    pub fn reference_early_stop() -> Self {
        let mut c = Self::reference();
        c.stage1.epochs = 190;
        c.stage1.horizon = Some(200);
        c.stage1.lr_min = 1e-2;
        c.stage2.epochs = 0;
        c
    }

    pub fn total_epochs(&self) -> usize {
        self.stage1.epochs + self.stage2.epochs
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be ≥ 1".into()));
        }
        if self.model.rep_dim == 0 || self.model.hidden.iter().any(|&h| h == 0) {
            return Err(Error::Config("model widths must be ≥ 1".into()));
        }
        if self.data.targets.is_empty() {
            return Err(Error::Config("at least one target dataset is required".into()));
        }
        if self.data.dir.is_none() {
            self.data.synthetic.validate()?;
        }
        self.stage1.validate("stage1")?;
        self.stage2.validate("stage2")?;
        self.loss.validate()?;
        if !(0.0..=1.0).contains(&self.bank_momentum) {
            return Err(Error::Config("bank_momentum must lie in [0, 1]".into()));
        }
        if self.eval.every == 0 {
            return Err(Error::Config("eval.every must be ≥ 1".into()));
        }
        self.eval.probe.validate()?;
        if self.mi.every > 0 {
            self.mi.ixt.validate()?;
            self.mi.ity.validate()?;
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON serialization.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

/// Sub-seed for a named purpose, so streams never share state.
pub fn derive_seed(master: u64, purpose: &str, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(purpose.as_bytes());
    h.update(index.to_le_bytes());
    let digest = h.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

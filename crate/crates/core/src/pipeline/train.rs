//! Vanilla and two-stage training loops.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::checkpoint::save_checkpoint;
use super::config::{derive_seed, StageConfig, TrainConfig};
use super::evaluate::{evaluate_epoch, EpochRecord, ExperimentData, MiSchedule};
use super::trajectory::{CheckpointRef, TrainMode, Trajectory};
use crate::contrastive::{
    cross_entropy, snapshot_information_bank, stage1_loss, stage2_loss, InformationBank, MemoryBank,
};
use crate::datagen::augment;
use crate::error::{Error, Result};
use crate::numerics::{backward, cosine_lr, sgd_step, Backbone, Classifier, CosineSchedule, LinearHead, Matrix, SgdState};

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub trajectory: Trajectory,
    pub model: Classifier,
    /// The frozen stage-2 bank as it stands after the last stage-2 step.
    pub information_bank: Option<InformationBank>,
    /// Copy of the bank's cached keys taken right after the snapshot.
    pub bank_keys_at_boundary: Option<Matrix>,
}

#[derive(Default)]
pub struct TrainOptions<'a> {
    /// Directory for `epoch_<n>.ckpt` files; checkpoints are written only when set
    /// and `eval.checkpoint_every > 0`.
    pub checkpoint_dir: Option<PathBuf>,
    /// Called with every record as soon as it is measured.
    pub on_record: Option<&'a mut dyn FnMut(&EpochRecord)>,
}

/// Backbone and head initialized from the master seed.
pub fn init_model(config: &TrainConfig, data: &ExperimentData) -> Result<Classifier> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "init", 0));
    let backbone = Backbone::init(data.input_dim(), &config.model.hidden, config.model.rep_dim, &mut rng)?;
    let head = LinearHead::init(config.model.rep_dim, data.source.class_count(), &mut rng);
    Classifier::new(backbone, head)
}

enum Objective<'b> {
    CrossEntropy,
    Aggregate(&'b mut MemoryBank),
    Revitalize(&'b InformationBank),
}

struct Runner<'c, 'o> {
    config: &'c TrainConfig,
    data: &'c ExperimentData,
    options: TrainOptions<'o>,
    trajectory: Trajectory,
    total_epochs: usize,
    epoch: usize,
    negatives_rng: ChaCha8Rng,
    last_checkpoint: Option<PathBuf>,
}

impl Runner<'_, '_> {
    fn after_epoch(&mut self, model: &Classifier, stage: u8) -> Result<()> {
        let epoch = self.epoch;
        let eval = &self.config.eval;
        if epoch == 0 || epoch % eval.every == 0 || epoch == self.total_epochs {
            let mi = MiSchedule {
                config: &self.config.mi,
                seed: self.config.seed,
            };
            let record = evaluate_epoch(model, self.data, eval, Some(mi), epoch, stage)?;
            if let Some(cb) = self.options.on_record.as_mut() {
                cb(&record);
            }
            self.trajectory.records.push(record);
        }
        if let Some(dir) = &self.options.checkpoint_dir {
            let every = eval.checkpoint_every;
            if every > 0 && (epoch % every == 0 || epoch == self.total_epochs) {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                let path = checkpoint_path(dir, epoch);
                save_checkpoint(model, &path)?;
                self.trajectory.checkpoints.push(CheckpointRef {
                    epoch,
                    path: path.clone(),
                });
                self.last_checkpoint = Some(path);
            }
        }
        Ok(())
    }

    fn diverged(&self, step: usize) -> Error {
        Error::Diverged {
            epoch: self.epoch,
            step,
            last_checkpoint: self.last_checkpoint.clone(),
        }
    }

    fn run_stage(
        &mut self,
        model: &mut Classifier,
        stage: &StageConfig,
        epochs: usize,
        horizon: usize,
        tag: u8,
        mut objective: Objective<'_>,
    ) -> Result<()> {
        if epochs == 0 {
            return Ok(());
        }
        let train = &self.data.source.train;
        let n = train.len();
        let batch = self.config.batch_size.min(n);
        let steps_per_epoch = n.div_ceil(batch);
        let schedule = CosineSchedule::new(stage.lr, stage.lr_min, horizon * steps_per_epoch)?;
        let mut sgd = SgdState::new(&*model, stage.lr, stage.momentum, stage.weight_decay)?;
        let mut order: Vec<usize> = (0..n).collect();
        let mut step = 0usize;
        for _ in 0..epochs {
            self.epoch += 1;
            let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(self.config.seed, "shuffle", self.epoch as u64));
            order.sort_unstable();
            order.shuffle(&mut shuffle_rng);
            for (b, ids) in order.chunks(batch).enumerate() {
                let mut xb = train.features.select_rows(ids)?;
                if stage.augment > 0.0 {
                    let seed = derive_seed(self.config.seed, "augment", (self.epoch as u64) << 32 | b as u64);
                    xb = augment(&xb, stage.augment, seed)?;
                }
                let labels: Vec<usize> = ids.iter().map(|&i| train.labels[i]).collect();
                let pass = model.forward(&xb)?;
                let loss_cfg = &self.config.loss;
                let (loss, grad_logits, grad_reps, normalized) = match &mut objective {
                    Objective::CrossEntropy => {
                        let (l, g) = cross_entropy(&pass.logits, &labels)?;
                        (l, g, None, None)
                    }
                    Objective::Aggregate(bank) => {
                        let s = stage1_loss(pass.reps(), &pass.logits, &labels, ids, bank, loss_cfg, &mut self.negatives_rng)
                            .map_err(|e| self.numeric_to_diverged(e, step))?;
                        (s.total, s.grad_logits, s.grad_reps, s.normalized_reps)
                    }
                    Objective::Revitalize(bank) => {
                        let s = stage2_loss(pass.reps(), &pass.logits, &labels, ids, Some(bank), loss_cfg, &mut self.negatives_rng)
                            .map_err(|e| self.numeric_to_diverged(e, step))?;
                        (s.total, s.grad_logits, s.grad_reps, s.normalized_reps)
                    }
                };
                if !loss.is_finite() {
                    return Err(self.diverged(step));
                }
                let grads = backward(&model.backbone, &model.head, &pass, grad_reps.as_ref(), Some(&grad_logits))?;
                sgd.learning_rate = cosine_lr(&schedule, step)?;
                sgd_step(model, &grads.tensors(), &mut sgd).map_err(|e| self.numeric_to_diverged(e, step))?;
                if let (Objective::Aggregate(bank), Some(reps)) = (&mut objective, normalized.as_ref()) {
                    bank.update(ids, reps)?;
                }
                step += 1;
            }
            self.after_epoch(model, tag)?;
        }
        Ok(())
    }

    fn numeric_to_diverged(&self, e: Error, step: usize) -> Error {
        match e {
            Error::Numeric(_) => self.diverged(step),
            other => other,
        }
    }
}

fn start<'c, 'o>(
    mode: TrainMode,
    config: &'c TrainConfig,
    data: &'c ExperimentData,
    options: TrainOptions<'o>,
) -> Result<(Runner<'c, 'o>, Classifier)> {
    config.validate()?;
    let model = init_model(config, data)?;
    let mut mi_datasets = vec![data.source.name().to_string()];
    mi_datasets.extend(data.target_names());
    let runner = Runner {
        config,
        data,
        options,
        trajectory: Trajectory {
            mode,
            fingerprint: config.fingerprint(),
            targets: data.target_names(),
            mi_datasets,
            records: Vec::new(),
            checkpoints: Vec::new(),
        },
        total_epochs: config.total_epochs(),
        epoch: 0,
        negatives_rng: ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "negatives", 0)),
        last_checkpoint: None,
    };
    Ok((runner, model))
}

/// Cross-entropy only, for `stage1.epochs + stage2.epochs` epochs under the
/// stage-1 optimizer settings and a single cosine schedule (extended by
/// `stage1.horizon` when set).
pub fn train_vanilla(config: &TrainConfig, data: &ExperimentData, options: TrainOptions<'_>) -> Result<TrainOutcome> {
    let (mut runner, mut model) = start(TrainMode::Vanilla, config, data, options)?;
    runner.after_epoch(&model, 1)?;
    let total = config.total_epochs();
    let horizon = config.stage1.horizon.map_or(total, |h| h + config.stage2.epochs);
    runner.run_stage(&mut model, &config.stage1, total, horizon, 1, Objective::CrossEntropy)?;
    Ok(TrainOutcome {
        trajectory: runner.trajectory,
        model,
        information_bank: None,
        bank_keys_at_boundary: None,
    })
}

/// Stage 1 minimizes `α·L_IAS + L_CE` against a memory bank initialized from an
/// epoch-0 forward pass; stage 2 snapshots the backbone into an information bank
/// and minimizes `β·L_IRS + L_CE` with a fresh optimizer and schedule.
pub fn train_ctc(config: &TrainConfig, data: &ExperimentData, options: TrainOptions<'_>) -> Result<TrainOutcome> {
    let (mut runner, mut model) = start(TrainMode::Ctc, config, data, options)?;
    runner.after_epoch(&model, 1)?;
    let train_x = &data.source.train.features;
    let (s1, s2) = (&config.stage1, &config.stage2);
    let (h1, h2) = (s1.horizon.unwrap_or(s1.epochs), s2.horizon.unwrap_or(s2.epochs));
    if config.loss.alpha != 0.0 {
        let reps = model.backbone.extract(train_x)?;
        let mut bank = MemoryBank::from_reps(&reps, config.bank_momentum)?;
        runner.run_stage(&mut model, s1, s1.epochs, h1, 1, Objective::Aggregate(&mut bank))?;
    } else {
        runner.run_stage(&mut model, s1, s1.epochs, h1, 1, Objective::CrossEntropy)?;
    }
    let (information_bank, bank_keys_at_boundary) = if config.stage2.epochs > 0 {
        let info = snapshot_information_bank(&model.backbone, train_x)?;
        let keys = info.keys().clone();
        runner.run_stage(&mut model, s2, s2.epochs, h2, 2, Objective::Revitalize(&info))?;
        (Some(info), Some(keys))
    } else {
        (None, None)
    };
    Ok(TrainOutcome {
        trajectory: runner.trajectory,
        model,
        information_bank,
        bank_keys_at_boundary,
    })
}

pub fn train(mode: TrainMode, config: &TrainConfig, data: &ExperimentData, options: TrainOptions<'_>) -> Result<TrainOutcome> {
    match mode {
        TrainMode::Vanilla => train_vanilla(config, data, options),
        TrainMode::Ctc => train_ctc(config, data, options),
    }
}

/// Path of the checkpoint written at `epoch` inside `dir`.
pub fn checkpoint_path(dir: &Path, epoch: usize) -> PathBuf {
    dir.join(format!("epoch_{epoch:04}.ckpt"))
}

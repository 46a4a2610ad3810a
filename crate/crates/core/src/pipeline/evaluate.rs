//! Per-epoch measurement of discriminability, transferability and MI.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{derive_seed, DataConfig, EvalConfig, MiConfig};
use crate::contrastive::cross_entropy;
use crate::datagen::{gen_shared_pair, load_matrix_csv, DatasetPair};
use crate::error::{Error, Result};
use crate::eval::metrics::normalize_or_zero;
use crate::eval::probe::argmax;
use crate::eval::{kmeans, linear_probe, nmi, recall_at_1};
use crate::mi::{mine_estimate, one_hot, MiEstimate};
use crate::numerics::{Classifier, Matrix};

/// One source dataset and the targets its representations are transferred to.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentData {
    pub source: DatasetPair,
    pub targets: Vec<DatasetPair>,
}

impl ExperimentData {
    pub fn new(source: DatasetPair, targets: Vec<DatasetPair>) -> Result<Self> {
        if targets.is_empty() {
            return Err(Error::Config("at least one target dataset is required".into()));
        }
        let d = source.train.dim();
        for ds in std::iter::once(&source).chain(&targets) {
            for split in [&ds.train, &ds.test] {
                if split.dim() != d {
                    return Err(Error::dim(format!("feature width of {}", split.file_name()), d, split.dim()));
                }
            }
        }
        Ok(Self { source, targets })
    }

    pub fn input_dim(&self) -> usize {
        self.source.train.dim()
    }

    pub fn target_names(&self) -> Vec<String> {
        self.targets.iter().map(|t| t.name().to_string()).collect()
    }

    /// Source first, then targets.
    pub fn all(&self) -> impl Iterator<Item = &DatasetPair> {
        std::iter::once(&self.source).chain(&self.targets)
    }
}

fn load_pair(dir: &Path, name: &str) -> Result<DatasetPair> {
    let mut train = load_matrix_csv(&dir.join(format!("{name}_train.csv")), None)?;
    let mut test = load_matrix_csv(&dir.join(format!("{name}_test.csv")), None)?;
    let classes = train.class_count.max(test.class_count);
    train.class_count = classes;
    test.class_count = classes;
    Ok(DatasetPair { train, test })
}

/// Loads `<dir>/<name>_{train,test}.csv` files, or generates the synthetic pair.
pub fn load_experiment_data(config: &DataConfig) -> Result<ExperimentData> {
    match &config.dir {
        Some(dir) => {
            let source = load_pair(dir, &config.source)?;
            let targets = config
                .targets
                .iter()
                .map(|t| load_pair(dir, t))
                .collect::<Result<Vec<_>>>()?;
            ExperimentData::new(source, targets)
        }
        None => {
            let pair = gen_shared_pair(&config.synthetic)?;
            ExperimentData::new(pair.source, vec![pair.target])
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub dataset: String,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiResult {
    pub dataset: String,
    pub ixt: MiEstimate,
    pub ity: MiEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub stage: u8,
    /// Source cross-entropy over the full train split, nats.
    pub train_loss: f64,
    /// Source cross-entropy over the test split, nats.
    pub test_loss: f64,
    /// Source top-1 accuracy of the model's own head on the test split.
    pub test_acc: f64,
    pub r_at_1: f64,
    pub nmi: f64,
    pub probe: Vec<ProbeResult>,
    /// Source first, then targets; `None` when MI was not scheduled this epoch.
    pub mi: Option<Vec<MiResult>>,
}

impl EpochRecord {
    pub fn probe_accuracy(&self, target: &str) -> Option<f64> {
        self.probe.iter().find(|p| p.dataset == target).map(|p| p.accuracy)
    }

    /// Mean probe accuracy over all targets.
    pub fn mean_probe(&self) -> f64 {
        if self.probe.is_empty() {
            return 0.0;
        }
        self.probe.iter().map(|p| p.accuracy).sum::<f64>() / self.probe.len() as f64
    }
}

fn loss_and_accuracy(model: &Classifier, x: &Matrix, labels: &[usize]) -> Result<(f64, f64, Matrix)> {
    let pass = model.forward(x)?;
    let (loss, _) = cross_entropy(&pass.logits, labels)?;
    let correct = pass
        .logits
        .row_iter()
        .zip(labels)
        .filter(|(row, &y)| argmax(row) == y)
        .count();
    let acc = if labels.is_empty() { 0.0 } else { correct as f64 / labels.len() as f64 };
    Ok((loss, acc, pass.reps().clone()))
}

/// What to estimate with MINE this epoch, if anything.
#[derive(Debug, Clone, Copy)]
pub struct MiSchedule<'a> {
    pub config: &'a MiConfig,
    pub seed: u64,
}

fn estimate_mi(
    model: &Classifier,
    data: &ExperimentData,
    mi: MiSchedule<'_>,
    epoch: usize,
) -> Result<Vec<MiResult>> {
    struct Job {
        a: Matrix,
        b: Matrix,
        ixt: bool,
        seed: u64,
    }
    let mut jobs = Vec::new();
    for (k, ds) in data.all().enumerate() {
        let x = &ds.test.features;
        let t = model.backbone.extract(x)?;
        let y = one_hot(&ds.test.labels, ds.class_count())?;
        let base = (epoch as u64) << 16 | (k as u64) << 1;
        jobs.push(Job { a: x.clone(), b: t.clone(), ixt: true, seed: derive_seed(mi.seed, "mine", base) });
        jobs.push(Job { a: t, b: y, ixt: false, seed: derive_seed(mi.seed, "mine", base | 1) });
    }
    let results: Vec<Result<MiEstimate>> = std::thread::scope(|s| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|j| {
                let cfg = if j.ixt { &mi.config.ixt } else { &mi.config.ity };
                s.spawn(move || mine_estimate(&j.a, &j.b, cfg, j.seed))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::State("MINE worker panicked".into()))))
            .collect()
    });
    let mut it = results.into_iter();
    let mut out = Vec::new();
    for ds in data.all() {
        let ixt = it.next().expect("one job per quantity")?;
        let ity = it.next().expect("one job per quantity")?;
        out.push(MiResult {
            dataset: ds.name().to_string(),
            ixt,
            ity,
        });
    }
    Ok(out)
}

/// Measures one model state. Deterministic in its inputs, so evaluating a
/// reloaded checkpoint reproduces the record.
pub fn evaluate_epoch(
    model: &Classifier,
    data: &ExperimentData,
    eval: &EvalConfig,
    mi: Option<MiSchedule<'_>>,
    epoch: usize,
    stage: u8,
) -> Result<EpochRecord> {
    if !model.backbone.layers().iter().all(|l| l.weight.is_finite() && l.bias.iter().all(|v| v.is_finite())) {
        return Err(Error::Numeric(format!("backbone has non-finite parameters at epoch {epoch}")));
    }
    let src = &data.source;
    let (train_loss, _, _) = loss_and_accuracy(model, &src.train.features, &src.train.labels)?;
    let (test_loss, test_acc, reps) = loss_and_accuracy(model, &src.test.features, &src.test.labels)?;
    let r_at_1 = recall_at_1(&reps, &src.test.labels)?;
    let k = src.class_count().min(reps.rows());
    let clusters = kmeans(&normalize_or_zero(&reps), k, eval.kmeans_seed)?;
    let nmi_value = nmi(&clusters.assignments, &src.test.labels)?;

    let mut probe = Vec::with_capacity(data.targets.len());
    for t in &data.targets {
        let tr = model.backbone.extract(&t.train.features)?;
        let te = model.backbone.extract(&t.test.features)?;
        probe.push(ProbeResult {
            dataset: t.name().to_string(),
            accuracy: linear_probe(&tr, &t.train.labels, &te, &t.test.labels, &eval.probe)?,
        });
    }

    let mi = match mi {
        Some(s) if s.config.every > 0 && epoch % s.config.every == 0 => Some(estimate_mi(model, data, s, epoch)?),
        _ => None,
    };
    Ok(EpochRecord {
        epoch,
        stage,
        train_loss,
        test_loss,
        test_acc,
        r_at_1,
        nmi: nmi_value,
        probe,
        mi,
    })
}

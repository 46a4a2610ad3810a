//! Trajectory persistence: `trajectory.csv` for plotting, `trajectory.json` for fidelity.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::evaluate::EpochRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    Vanilla,
    Ctc,
}

impl TrainMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TrainMode::Vanilla => "vanilla",
            TrainMode::Ctc => "ctc",
        }
    }
}

impl std::str::FromStr for TrainMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vanilla" => Ok(TrainMode::Vanilla),
            "ctc" => Ok(TrainMode::Ctc),
            other => Err(Error::Config(format!("unknown mode '{other}' (expected vanilla or ctc)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointRef {
    pub epoch: usize,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub mode: TrainMode,
    pub fingerprint: String,
    pub targets: Vec<String>,
    /// Datasets with MI columns: source first, then targets.
    pub mi_datasets: Vec<String>,
    pub records: Vec<EpochRecord>,
    pub checkpoints: Vec<CheckpointRef>,
}

impl Trajectory {
    pub fn csv_header(&self) -> Vec<String> {
        let mut cols: Vec<String> = ["epoch", "stage", "train_loss", "test_loss", "r_at_1", "nmi"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        cols.extend(self.targets.iter().map(|t| format!("probe_{t}")));
        cols.extend(self.mi_datasets.iter().map(|d| format!("ixt_{d}")));
        cols.extend(self.mi_datasets.iter().map(|d| format!("ity_{d}")));
        cols
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.csv_header().join(",");
        out.push('\n');
        for r in &self.records {
            let mut cells = vec![
                r.epoch.to_string(),
                r.stage.to_string(),
                r.train_loss.to_string(),
                r.test_loss.to_string(),
                r.r_at_1.to_string(),
                r.nmi.to_string(),
            ];
            for t in &self.targets {
                cells.push(r.probe_accuracy(t).map(|v| v.to_string()).unwrap_or_default());
            }
            let mi_cell = |d: &str, ixt: bool| -> String {
                r.mi
                    .as_ref()
                    .and_then(|m| m.iter().find(|e| e.dataset == d))
                    .map(|e| if ixt { e.ixt.value } else { e.ity.value }.to_string())
                    .unwrap_or_default()
            };
            for d in &self.mi_datasets {
                cells.push(mi_cell(d, true));
            }
            for d in &self.mi_datasets {
                cells.push(mi_cell(d, false));
            }
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

fn write_file(path: &Path, body: &[u8]) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    w.write_all(body).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

/// Writes `trajectory.csv` and `trajectory.json` into `dir`.
pub fn emit_trajectory(trajectory: &Trajectory, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_file(&dir.join("trajectory.csv"), trajectory.to_csv().as_bytes())?;
    let json = serde_json::to_vec_pretty(trajectory).map_err(|e| Error::Data(e.to_string()))?;
    write_file(&dir.join("trajectory.json"), &json)
}

/// Reads `trajectory.json` from a directory (or the file itself).
pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let file = if path.is_dir() { path.join("trajectory.json") } else { path.to_path_buf() };
    let text = std::fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        source_name: file.display().to_string(),
        line: e.line() as u64,
        message: e.to_string(),
    })
}

/// `trajectory.csv` parsed back into columns; empty cells are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl TrajectoryTable {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn probe_columns(&self) -> Vec<(usize, &str)> {
        self.columns
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.strip_prefix("probe_").map(|n| (i, n)))
            .collect()
    }
}

const LEADING: [&str; 6] = ["epoch", "stage", "train_loss", "test_loss", "r_at_1", "nmi"];

pub fn read_trajectory_csv(path: &Path) -> Result<TrajectoryTable> {
    let source_name = path.display().to_string();
    let err = |line: u64, message: String| Error::Parse {
        source_name: source_name.clone(),
        line,
        message,
    };
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(file);
    let columns: Vec<String> = reader
        .headers()
        .map_err(|e| err(1, e.to_string()))?
        .iter()
        .map(|s| s.to_string())
        .collect();
    if columns.len() < LEADING.len() || columns[..LEADING.len()] != LEADING {
        return Err(err(1, format!("header must start with {}", LEADING.join(","))));
    }
    let mut rows = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let line = k as u64 + 2;
        let record = record.map_err(|e| err(line, e.to_string()))?;
        if record.len() != columns.len() {
            return Err(err(line, format!("expected {} columns, found {}", columns.len(), record.len())));
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(j, cell)| {
                if cell.is_empty() {
                    Ok(None)
                } else {
                    cell.parse::<f64>()
                        .map(Some)
                        .map_err(|_| err(line, format!("column {}: '{cell}' is not a number", columns[j])))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        if row[0].is_none() {
            return Err(err(line, "missing epoch".into()));
        }
        rows.push(row);
    }
    Ok(TrajectoryTable { columns, rows })
}

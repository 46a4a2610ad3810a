use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// Labeled feature matrix for one split of one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub split: Split,
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub class_count: usize,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        split: Split,
        features: Matrix,
        labels: Vec<usize>,
        class_count: usize,
    ) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::dim("dataset labels", features.rows(), labels.len()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::Index {
                what: "label",
                index: bad,
                bound: class_count,
            });
        }
        if !features.is_finite() {
            return Err(Error::Numeric("dataset features must be finite".into()));
        }
        Ok(Self {
            name: name.into(),
            split,
            features,
            labels,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// Conventional file name `<name>_<split>.csv`.
    pub fn file_name(&self) -> String {
        format!("{}_{}.csv", self.name, self.split.as_str())
    }
}

/// Train and test splits of one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetPair {
    pub train: Dataset,
    pub test: Dataset,
}

impl DatasetPair {
    pub fn name(&self) -> &str {
        &self.train.name
    }

    pub fn class_count(&self) -> usize {
        self.train.class_count.max(self.test.class_count)
    }
}

/// Writes `label,f0,f1,…` with shortest round-trip float formatting.
pub fn save_matrix_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut line = String::from("label");
    for j in 0..dataset.dim() {
        line.push_str(&format!(",f{j}"));
    }
    writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    for (row, &label) in dataset.features.row_iter().zip(&dataset.labels) {
        line.clear();
        line.push_str(&label.to_string());
        for v in row {
            line.push(',');
            line.push_str(&v.to_string());
        }
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a `label,f0,f1,…` CSV.
///
/// The dataset name is the file stem minus a trailing `_train`/`_test`, which
/// also sets the split (train when absent). `class_count` bounds the labels
/// when given; otherwise it is inferred as `max label + 1`.
pub fn load_matrix_csv(path: &Path, class_count: Option<usize>) -> Result<Dataset> {
    let source_name = path.display().to_string();
    let parse_err = |line: u64, message: String| Error::Parse {
        source_name: source_name.clone(),
        line,
        message,
    };
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let header = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    if header.get(0) != Some("label") {
        return Err(parse_err(1, "header must start with 'label'".into()));
    }
    let width = header.len() - 1;
    for (j, name) in header.iter().skip(1).enumerate() {
        if name != format!("f{j}") {
            return Err(parse_err(1, format!("expected column 'f{j}', found '{name}'")));
        }
    }

    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let line = record
            .as_ref()
            .ok()
            .and_then(|r| r.position())
            .map_or(k as u64 + 2, |p| p.line());
        let record = record.map_err(|e| parse_err(line, e.to_string()))?;
        if record.len() != width + 1 {
            return Err(parse_err(
                line,
                format!("expected {} columns, found {}", width + 1, record.len()),
            ));
        }
        let label: usize = record[0]
            .parse()
            .map_err(|_| parse_err(line, format!("label '{}' is not a class index", &record[0])))?;
        if let Some(c) = class_count {
            if label >= c {
                return Err(parse_err(line, format!("label {label} outside [0, {c})")));
            }
        }
        labels.push(label);
        for (j, cell) in record.iter().skip(1).enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(line, format!("column f{j}: '{cell}' is not a number")))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("column f{j}: non-finite value")));
            }
            data.push(v);
        }
    }
    let classes = class_count.unwrap_or_else(|| labels.iter().copied().max().map_or(0, |m| m + 1));
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset");
    let (name, split) = if let Some(n) = stem.strip_suffix("_test") {
        (n, Split::Test)
    } else if let Some(n) = stem.strip_suffix("_train") {
        (n, Split::Train)
    } else {
        (stem, Split::Train)
    };
    let features = Matrix::new(labels.len(), width, data)?;
    Dataset::new(name, split, features, labels, classes)
}

/// Numeric CSV with a header row and no label column (MINE sample files).
pub fn load_numeric_csv(path: &Path) -> Result<Matrix> {
    let source_name = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let width = reader
        .headers()
        .map_err(|e| Error::Parse {
            source_name: source_name.clone(),
            line: 1,
            message: e.to_string(),
        })?
        .len();
    let mut data = Vec::new();
    let mut rows = 0;
    for (k, record) in reader.records().enumerate() {
        let line = k as u64 + 2;
        let record = record.map_err(|e| Error::Parse {
            source_name: source_name.clone(),
            line,
            message: e.to_string(),
        })?;
        if record.len() != width {
            return Err(Error::Parse {
                source_name,
                line,
                message: format!("expected {width} columns, found {}", record.len()),
            });
        }
        for cell in record.iter() {
            data.push(cell.parse::<f64>().map_err(|_| Error::Parse {
                source_name: source_name.clone(),
                line,
                message: format!("'{cell}' is not a number"),
            })?);
        }
        rows += 1;
    }
    Matrix::new(rows, width, data)
}

/// Writes a numeric CSV with header `c0,c1,…`.
pub fn save_numeric_csv(m: &Matrix, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let header: Vec<String> = (0..m.cols()).map(|j| format!("c{j}")).collect();
    writeln!(w, "{}", header.join(",")).map_err(|e| Error::io(path, e))?;
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", cells.join(",")).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

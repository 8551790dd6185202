//! Datasets: CSV ingestion, the synthetic generator, stratified splitting
//! and min-max scaling.

mod csv;
mod scaler;
mod split;
mod synthetic;

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use self::csv::{load_csv, read_csv, CsvOptions, LabelOrder};
pub use scaler::MinMaxScaler;
pub use split::{stratified_split, Split};
pub use synthetic::{largest_remainder, make_synthetic, SyntheticSpec};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Csv { path: PathBuf, label_column: String },
    Synthetic(SyntheticSpec),
    /// Built from arrays handed over by a caller.
    InMemory,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Vec<usize>,
    pub num_classes: usize,
    pub name: String,
    /// Original label text for each encoded class.
    pub class_names: Vec<String>,
    pub provenance: Provenance,
}

/// What gets logged and written next to generated data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub name: String,
    pub n_samples: usize,
    pub n_features: usize,
    pub num_classes: usize,
    pub class_counts: Vec<usize>,
    pub imbalance_ratio: Option<f64>,
}

impl Dataset {
    /// Checks that labels are in range and every class is populated.
    pub fn new(
        x: Matrix,
        y: Vec<usize>,
        class_names: Vec<String>,
        name: impl Into<String>,
        provenance: Provenance,
    ) -> Result<Dataset> {
        let num_classes = class_names.len();
        if y.len() != x.rows() {
            return Err(Error::shape("dataset", x.shape(), (y.len(), 1)));
        }
        if let Some(&label) = y.iter().find(|&&l| l >= num_classes) {
            return Err(Error::InvalidLabel {
                label,
                classes: num_classes,
            });
        }
        let ds = Dataset {
            x,
            y,
            num_classes,
            name: name.into(),
            class_names,
            provenance,
        };
        if let Some(k) = ds.class_counts().iter().position(|&c| c == 0) {
            return Err(Error::InvalidInput(format!("class {k} has no samples")));
        }
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.x.cols()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &label in &self.y {
            counts[label] += 1;
        }
        counts
    }

    /// Largest class count over smallest class count.
    pub fn imbalance_ratio(&self) -> Result<f64> {
        imbalance_ratio(&self.class_counts())
    }

    /// Rows at `indices`, keeping the class set and provenance. Classes may
    /// end up empty in the subset.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(indices),
            y: indices.iter().map(|&i| self.y[i]).collect(),
            num_classes: self.num_classes,
            name: self.name.clone(),
            class_names: self.class_names.clone(),
            provenance: self.provenance.clone(),
        }
    }

    pub fn with_features(&self, x: Matrix) -> Result<Dataset> {
        if x.rows() != self.len() {
            return Err(Error::shape("with_features", x.shape(), self.x.shape()));
        }
        Ok(Dataset {
            x,
            ..self.clone()
        })
    }

    pub fn summary(&self) -> DatasetSummary {
        let counts = self.class_counts();
        DatasetSummary {
            name: self.name.clone(),
            n_samples: self.len(),
            n_features: self.n_features(),
            num_classes: self.num_classes,
            imbalance_ratio: imbalance_ratio(&counts).ok(),
            class_counts: counts,
        }
    }

    /// Features `f0..f{d-1}` then a final `label` column holding the class
    /// names. Floats are written in shortest round-trip form.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = ::csv::Writer::from_writer(out);
        let map_err = |e: ::csv::Error| Error::InvalidInput(format!("csv write: {e}"));
        let mut header: Vec<String> = (0..self.n_features()).map(|j| format!("f{j}")).collect();
        header.push("label".into());
        w.write_record(&header).map_err(map_err)?;
        let mut record = Vec::with_capacity(header.len());
        for (row, &label) in self.x.row_iter().zip(&self.y) {
            record.clear();
            record.extend(row.iter().map(|v| format!("{v:?}")));
            record.push(self.class_names[label].clone());
            w.write_record(&record).map_err(map_err)?;
        }
        w.flush().map_err(|e| Error::InvalidInput(format!("csv write: {e}")))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

pub fn imbalance_ratio(class_counts: &[usize]) -> Result<f64> {
    if class_counts.len() < 2 {
        return Err(Error::Contract(format!(
            "imbalance ratio needs at least 2 classes, got {}",
            class_counts.len()
        )));
    }
    let max = *class_counts.iter().max().unwrap_or(&0);
    let min = *class_counts.iter().min().unwrap_or(&0);
    if min == 0 {
        return Err(Error::Contract("imbalance ratio with an empty class".into()));
    }
    Ok(max as f64 / min as f64)
}

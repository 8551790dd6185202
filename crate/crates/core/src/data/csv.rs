use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Provenance};
use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// How label strings are mapped to class indices.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelOrder {
    /// Class 0 is the first label seen, class 1 the next new one, ...
    #[default]
    FirstAppearance,
    /// Labels sorted numerically when they all parse as integers,
    /// lexicographically otherwise.
    Sorted,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvOptions {
    pub label_column: String,
    #[serde(default)]
    pub label_order: LabelOrder,
    #[serde(default = "comma")]
    pub delimiter: char,
}

fn comma() -> char {
    ','
}

impl CsvOptions {
    pub fn new(label_column: impl Into<String>) -> Self {
        CsvOptions {
            label_column: label_column.into(),
            label_order: LabelOrder::default(),
            delimiter: ',',
        }
    }

    pub fn sorted(self) -> Self {
        CsvOptions {
            label_order: LabelOrder::Sorted,
            ..self
        }
    }
}

/// Loads a headed CSV; every column except the label column must be numeric.
pub fn load_csv(path: &Path, options: &CsvOptions) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    let ds = read_csv(file, options, path, name)?;
    let s = ds.summary();
    log::info!(
        "loaded {}: n={}, d={}, class counts {:?}, IR {}",
        path.display(),
        s.n_samples,
        s.n_features,
        s.class_counts,
        s.imbalance_ratio.map_or("n/a".into(), |r| format!("{r:.2}"))
    );
    Ok(ds)
}

/// Like [`load_csv`] but from any reader; `path` is only used in messages
/// and provenance.
pub fn read_csv<R: Read>(reader: R, options: &CsvOptions, path: &Path, name: String) -> Result<Dataset> {
    let data_err = |message: String| Error::Data {
        path: path.to_path_buf(),
        message,
    };
    if !options.delimiter.is_ascii() {
        return Err(Error::Config("CSV delimiter must be ASCII".into()));
    }
    let mut rdr = ::csv::ReaderBuilder::new()
        .delimiter(options.delimiter as u8)
        .has_headers(true)
        .trim(::csv::Trim::All)
        .from_reader(reader);

    let headers = rdr
        .headers()
        .map_err(|e| data_err(format!("cannot read header: {e}")))?
        .clone();
    if headers.is_empty() || headers.iter().all(str::is_empty) {
        return Err(data_err("empty file".into()));
    }
    let label_idx = headers
        .iter()
        .position(|h| h == options.label_column)
        .ok_or_else(|| {
            data_err(format!(
                "label column `{}` not found (columns: {})",
                options.label_column,
                headers.iter().collect::<Vec<_>>().join(", ")
            ))
        })?;
    let n_features = headers.len() - 1;

    let mut values = Vec::new();
    let mut raw_labels = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| data_err(format!("malformed row: {e}")))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != headers.len() {
            return Err(data_err(format!(
                "row {line}: {} fields, header has {}",
                record.len(),
                headers.len()
            )));
        }
        for (j, cell) in record.iter().enumerate() {
            if j == label_idx {
                if cell.is_empty() {
                    return Err(data_err(format!(
                        "row {line}, column `{}`: empty label",
                        &headers[j]
                    )));
                }
                raw_labels.push(cell.to_string());
                continue;
            }
            if cell.is_empty() {
                return Err(data_err(format!("row {line}, column `{}`: empty cell", &headers[j])));
            }
            let v: f64 = cell.parse().map_err(|_| {
                data_err(format!(
                    "row {line}, column `{}`: `{cell}` is not a number",
                    &headers[j]
                ))
            })?;
            if !v.is_finite() {
                return Err(data_err(format!(
                    "row {line}, column `{}`: non-finite value `{cell}`",
                    &headers[j]
                )));
            }
            values.push(v);
        }
    }
    if raw_labels.is_empty() {
        return Err(data_err("no data rows".into()));
    }

    let class_names = class_order(&raw_labels, options.label_order);
    let index: HashMap<&str, usize> = class_names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let y = raw_labels.iter().map(|l| index[l.as_str()]).collect();
    let x = Matrix::from_vec(raw_labels.len(), n_features, values)?;
    Dataset::new(
        x,
        y,
        class_names,
        name,
        Provenance::Csv {
            path: path.to_path_buf(),
            label_column: options.label_column.clone(),
        },
    )
}

fn class_order(labels: &[String], order: LabelOrder) -> Vec<String> {
    let mut seen = Vec::new();
    let mut set = std::collections::HashSet::new();
    for l in labels {
        if set.insert(l.as_str()) {
            seen.push(l.clone());
        }
    }
    if order == LabelOrder::Sorted {
        let numeric: Option<Vec<i64>> = seen.iter().map(|s| s.parse().ok()).collect();
        match numeric {
            Some(_) => seen.sort_by_key(|s| s.parse::<i64>().unwrap_or_default()),
            None => seen.sort(),
        }
    }
    seen
}

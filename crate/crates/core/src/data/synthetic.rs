//! Hypercube-cluster generator for imbalanced multi-class data.
//!
//! Each class owns one or more distinct vertices of the
//! `{−class_sep, +class_sep}^n_informative` hypercube. Informative features
//! are the vertex plus standard Gaussian noise, redundant features are
//! random linear combinations of the informative ones, and the remaining
//! features are pure noise. Columns and rows are shuffled at the end.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Provenance};
use crate::error::{Error, Result};
use crate::tensor::Matrix;

pub const SYNTHETIC_SPEC_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    #[serde(default = "spec_version")]
    pub version: u32,
    pub n_samples: usize,
    pub n_features: usize,
    pub n_informative: usize,
    pub n_redundant: usize,
    pub n_classes: usize,
    #[serde(default = "one")]
    pub n_clusters_per_class: usize,
    pub class_weights: Vec<f64>,
    pub class_sep: f64,
    pub seed: u64,
}

fn spec_version() -> u32 {
    SYNTHETIC_SPEC_VERSION
}

fn one() -> usize {
    1
}

impl Default for SyntheticSpec {
    /// 10,000 samples, 20 features, 5 classes, imbalance ratio exactly 16.
    /// Six clusters per class keep the classes far from linearly separable.
    fn default() -> Self {
        SyntheticSpec {
            version: SYNTHETIC_SPEC_VERSION,
            n_samples: 10_000,
            n_features: 20,
            n_informative: 10,
            n_redundant: 5,
            n_classes: 5,
            n_clusters_per_class: 6,
            class_weights: vec![0.5152, 0.2576, 0.1288, 0.0662, 0.0322],
            class_sep: 2.0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    /// Collects every invalid field instead of stopping at the first.
    pub fn validate(&self) -> Result<()> {
        let mut bad: Vec<String> = Vec::new();
        if self.version != SYNTHETIC_SPEC_VERSION {
            bad.push(format!("version: unsupported {}", self.version));
        }
        if self.n_samples == 0 {
            bad.push("n_samples: must be >= 1".into());
        }
        if self.n_classes < 2 {
            bad.push("n_classes: must be >= 2".into());
        }
        if self.n_informative == 0 || self.n_informative > 63 {
            bad.push("n_informative: must be in 1..=63".into());
        }
        if self.n_informative + self.n_redundant > self.n_features {
            bad.push(format!(
                "n_features: {} < n_informative + n_redundant = {}",
                self.n_features,
                self.n_informative + self.n_redundant
            ));
        }
        if self.n_clusters_per_class == 0 {
            bad.push("n_clusters_per_class: must be >= 1".into());
        }
        if self.class_weights.len() != self.n_classes {
            bad.push(format!(
                "class_weights: {} entries for {} classes",
                self.class_weights.len(),
                self.n_classes
            ));
        }
        if self.class_weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            bad.push("class_weights: every weight must be > 0".into());
        } else {
            let total: f64 = self.class_weights.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                bad.push(format!("class_weights: sum to {total}, expected 1"));
            }
        }
        if !(self.class_sep >= 0.0 && self.class_sep.is_finite()) {
            bad.push("class_sep: must be finite and >= 0".into());
        }
        if bad.is_empty() && self.class_counts().contains(&0) {
            bad.push("n_samples: too small to give every class a sample".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid synthetic spec: {}", bad.join("; "))))
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        largest_remainder(&self.class_weights, self.n_samples)
    }

    pub fn from_json(text: &str) -> Result<SyntheticSpec> {
        let spec: SyntheticSpec =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("synthetic spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Integer allocation of `total` proportional to `weights`: floors first,
/// then the leftover units go to the largest fractional parts (lowest index
/// on ties).
///
/// Quotas and remainders are compared on a 1e-9 grid, so rounding noise in
/// `w / sum * total` cannot break a tie that is exact in real arithmetic.
pub fn largest_remainder(weights: &[f64], total: usize) -> Vec<usize> {
    const GRID: f64 = 1e9;
    let sum: f64 = weights.iter().sum();
    if weights.is_empty() || !(sum > 0.0) {
        return vec![0; weights.len()];
    }
    let quotas: Vec<f64> = weights
        .iter()
        .map(|w| {
            let q = w / sum * total as f64;
            if (q - q.round()).abs() * GRID < 1.0 {
                q.round()
            } else {
                q
            }
        })
        .collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let remainder = |k: usize| ((quotas[k] - quotas[k].floor()) * GRID).round() as u64;
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| remainder(b).cmp(&remainder(a)).then(a.cmp(&b)));
    for &k in order.iter().cycle().take(total.saturating_sub(assigned)) {
        counts[k] += 1;
    }
    counts
}

pub fn make_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let n_vertices = spec.n_classes * spec.n_clusters_per_class;
    if (n_vertices as u128) > (1u128 << spec.n_informative) {
        return Err(Error::Config(format!(
            "invalid synthetic spec: {n_vertices} clusters need more than the {} vertices of a {}-cube",
            1u128 << spec.n_informative,
            spec.n_informative
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let counts = spec.class_counts();
    let (n, d, k) = (spec.n_samples, spec.n_features, spec.n_informative);

    // distinct vertices, sampled without replacement
    let mask = if k == 64 { u64::MAX } else { (1u64 << k) - 1 };
    let mut seen = HashSet::new();
    let mut vertices = Vec::with_capacity(n_vertices);
    while vertices.len() < n_vertices {
        let v = rng.random::<u64>() & mask;
        if seen.insert(v) {
            vertices.push(v);
        }
    }

    let mut x = Matrix::zeros(n, d);
    let mut y = Vec::with_capacity(n);
    let mut row = 0;
    for (class, &count) in counts.iter().enumerate() {
        let clusters = spec.n_clusters_per_class;
        for c in 0..clusters {
            let size = count / clusters + usize::from(c < count % clusters);
            let vertex = vertices[class * clusters + c];
            for _ in 0..size {
                for j in 0..k {
                    let sign = if vertex >> j & 1 == 1 { 1.0 } else { -1.0 };
                    let noise: f64 = rng.sample(StandardNormal);
                    x[(row, j)] = sign * spec.class_sep + noise;
                }
                y.push(class);
                row += 1;
            }
        }
    }

    let coefficients = Matrix::from_fn(k, spec.n_redundant, |_, _| rng.random_range(-1.0..=1.0));
    for i in 0..n {
        for r in 0..spec.n_redundant {
            let v: f64 = (0..k).map(|j| x[(i, j)] * coefficients[(j, r)]).sum();
            x[(i, k + r)] = v;
        }
        for j in k + spec.n_redundant..d {
            x[(i, j)] = rng.sample(StandardNormal);
        }
    }

    let mut columns: Vec<usize> = (0..d).collect();
    columns.shuffle(&mut rng);
    let mut rows: Vec<usize> = (0..n).collect();
    rows.shuffle(&mut rng);
    let shuffled = Matrix::from_fn(n, d, |i, j| x[(rows[i], columns[j])]);
    let labels = rows.iter().map(|&i| y[i]).collect();

    Dataset::new(
        shuffled,
        labels,
        (0..spec.n_classes).map(|c| c.to_string()).collect(),
        "synthetic",
        Provenance::Synthetic(spec.clone()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn largest_remainder_examples() {
        assert_eq!(largest_remainder(&[0.9, 0.1], 100), vec![90, 10]);
        let w: Vec<f64> = [16.0, 8.0, 4.0, 2.0, 1.0].iter().map(|v| v / 31.0).collect();
        assert_eq!(largest_remainder(&w, 10_000), vec![5161, 2581, 1290, 645, 323]);
        assert_eq!(largest_remainder(&[1.0, 1.0, 1.0], 10), vec![4, 3, 3]);
        // the three 0.6 remainders tie exactly; float noise must not decide
        let w = [5152.0, 2576.0, 1288.0, 662.0, 322.0];
        assert_eq!(largest_remainder(&w, 8000), vec![4122, 2061, 1030, 530, 257]);
    }

    #[test]
    fn default_spec_has_exact_ratio() {
        let spec = SyntheticSpec::default();
        let counts = spec.class_counts();
        assert_eq!(counts, vec![5152, 2576, 1288, 662, 322]);
        assert_eq!(counts.iter().sum::<usize>(), 10_000);
        assert_eq!(counts[0] as f64 / counts[4] as f64, 16.0);
    }

    #[test]
    fn validation_lists_every_bad_field() {
        let spec = SyntheticSpec {
            n_redundant: 15,
            class_weights: vec![0.5, 0.5],
            class_sep: -1.0,
            ..SyntheticSpec::default()
        };
        let msg = spec.validate().unwrap_err().to_string();
        for field in ["n_features", "class_weights", "class_sep"] {
            assert!(msg.contains(field), "{msg}");
        }
    }

    #[test]
    fn too_many_classes_for_the_cube() {
        let spec = SyntheticSpec {
            n_samples: 100,
            n_features: 4,
            n_informative: 2,
            n_redundant: 0,
            n_classes: 5,
            n_clusters_per_class: 1,
            class_weights: vec![0.2; 5],
            ..SyntheticSpec::default()
        };
        assert!(matches!(make_synthetic(&spec), Err(Error::Config(_))));
    }

    #[test]
    fn redundant_columns_are_combinations() {
        // no noise columns, so every column is informative or redundant
        let spec = SyntheticSpec {
            n_samples: 60,
            n_features: 5,
            n_informative: 3,
            n_redundant: 2,
            n_classes: 2,
            n_clusters_per_class: 1,
            class_weights: vec![0.5, 0.5],
            ..SyntheticSpec::default()
        };
        let ds = make_synthetic(&spec).unwrap();
        assert_eq!(ds.x.shape(), (60, 5));
        assert_eq!(ds.class_counts(), vec![30, 30]);
        // rank of the 60x5 matrix is 3: check via Gram determinant ~ 0
        let gram = ds.x.matmul_tn(&ds.x).unwrap();
        let det = crate::tensor::Lu::factor(&gram).map(|lu| lu.determinant()).unwrap_or(0.0);
        let scale: f64 = (0..5).map(|i| gram[(i, i)]).product();
        assert!(det.abs() < 1e-9 * scale, "det {det} scale {scale}");
    }
}

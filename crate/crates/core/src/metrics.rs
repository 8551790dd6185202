//! Imbalance-aware classification metrics. All scores are percentages.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `counts[i][j]` = samples of true class `i` predicted as `j`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

pub fn confusion(y_true: &[usize], y_pred: &[usize], classes: usize) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Contract(format!(
            "confusion: {} true labels vs {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.is_empty() {
        return Err(Error::Contract("confusion: no samples".into()));
    }
    let mut counts = vec![0u64; classes * classes];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t >= classes || p >= classes {
            return Err(Error::InvalidLabel {
                label: t.max(p),
                classes,
            });
        }
        counts[t * classes + p] += 1;
    }
    Ok(ConfusionMatrix { classes, counts })
}

impl ConfusionMatrix {
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<ConfusionMatrix> {
        let classes = counts.len();
        if counts.iter().any(|r| r.len() != classes) {
            return Err(Error::Contract("confusion matrix must be square".into()));
        }
        Ok(ConfusionMatrix {
            classes,
            counts: counts.into_iter().flatten().collect(),
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.classes.max(1)).map(<[u64]>::to_vec).collect()
    }

    pub fn true_count(&self, c: usize) -> u64 {
        (0..self.classes).map(|j| self.get(c, j)).sum()
    }

    pub fn predicted_count(&self, c: usize) -> u64 {
        (0..self.classes).map(|i| self.get(i, c)).sum()
    }

    /// One-vs-rest tallies for class `c`.
    pub fn one_vs_rest(&self, c: usize) -> Tally {
        let tp = self.get(c, c);
        let fn_ = self.true_count(c) - tp;
        let fp = self.predicted_count(c) - tp;
        Tally {
            tp,
            fp,
            fn_,
            tn: self.total() - tp - fp - fn_,
        }
    }

    /// The positive class for binary scoring: the one with fewer true
    /// samples, class 1 on a tie.
    pub fn minority_class(&self) -> usize {
        if self.true_count(0) < self.true_count(1) {
            0
        } else {
            1
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Tally {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Tally {
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// `2TP / (2TP + FP + FN)`; a class never seen nor predicted scores 1.
    pub fn f1(&self) -> f64 {
        let den = 2 * self.tp + self.fp + self.fn_;
        if den == 0 {
            1.0
        } else {
            (2 * self.tp) as f64 / den as f64
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum F1Mode {
    /// Two classes: the minority class is the positive one.
    BinaryMinority,
    /// Unweighted mean of one-vs-rest F1.
    Macro,
}

impl F1Mode {
    pub fn for_classes(classes: usize) -> F1Mode {
        if classes == 2 {
            F1Mode::BinaryMinority
        } else {
            F1Mode::Macro
        }
    }
}

pub fn f1_score(cm: &ConfusionMatrix) -> f64 {
    let c = cm.classes();
    let f1 = match F1Mode::for_classes(c) {
        F1Mode::BinaryMinority => cm.one_vs_rest(cm.minority_class()).f1(),
        F1Mode::Macro => (0..c).map(|k| cm.one_vs_rest(k).f1()).sum::<f64>() / c as f64,
    };
    100.0 * f1
}

/// Mean per-class recall. Every class needs at least one true sample.
pub fn balanced_accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let c = cm.classes();
    if let Some(k) = (0..c).find(|&k| cm.true_count(k) == 0) {
        return Err(Error::Contract(format!(
            "balanced accuracy undefined: class {k} has no true samples"
        )));
    }
    let total: f64 = (0..c).map(|k| cm.one_vs_rest(k).recall()).sum();
    Ok(100.0 * total / c as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub f1: f64,
    pub balanced_accuracy: f64,
    pub accuracy: f64,
    #[serde(rename = "per_class.precision")]
    pub per_class_precision: Vec<f64>,
    #[serde(rename = "per_class.recall")]
    pub per_class_recall: Vec<f64>,
    #[serde(rename = "per_class.f1")]
    pub per_class_f1: Vec<f64>,
    pub f1_mode: F1Mode,
}

impl MetricReport {
    pub fn from_confusion(cm: &ConfusionMatrix) -> Result<MetricReport> {
        let c = cm.classes();
        let tallies: Vec<Tally> = (0..c).map(|k| cm.one_vs_rest(k)).collect();
        let correct: u64 = (0..c).map(|k| cm.get(k, k)).sum();
        Ok(MetricReport {
            f1: f1_score(cm),
            balanced_accuracy: balanced_accuracy(cm)?,
            accuracy: 100.0 * ratio(correct, cm.total()),
            per_class_precision: tallies.iter().map(|t| 100.0 * t.precision()).collect(),
            per_class_recall: tallies.iter().map(|t| 100.0 * t.recall()).collect(),
            per_class_f1: tallies.iter().map(|t| 100.0 * t.f1()).collect(),
            f1_mode: F1Mode::for_classes(c),
        })
    }

    pub fn evaluate(y_true: &[usize], y_pred: &[usize], classes: usize) -> Result<MetricReport> {
        Self::from_confusion(&confusion(y_true, y_pred, classes)?)
    }
}

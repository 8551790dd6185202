use std::path::PathBuf;

use ogab::activation::{self, ActivationKind, OgabLayer, OgabOptions, Smooth};
use ogab::data::{self, Dataset, Provenance, SyntheticSpec};
use ogab::metrics::{self, MetricReport};
use ogab::model::{train, MlpConfig, MlpModel, TrainConfig};
use ogab::Matrix;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: ogab::Error) -> PyErr {
    if e.is_input_error() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Matrix> {
    if rows.is_empty() {
        return Err(PyValueError::new_err("matrix needs at least one row"));
    }
    Matrix::from_rows(&rows).map_err(to_py)
}

fn options(groups: usize, sigma: &str, orthogonal: bool, group_bias: bool) -> PyResult<OgabOptions> {
    Ok(OgabOptions {
        groups,
        sigma: Smooth::parse(sigma).map_err(to_py)?,
        orthogonal,
        group_bias,
    })
}

#[pyclass(name = "OgabLayer", module = "ogab_py")]
pub struct PyOgabLayer {
    inner: OgabLayer,
}

#[pymethods]
impl PyOgabLayer {
    #[new]
    #[pyo3(signature = (dim, groups=5, sigma="tanh", orthogonal=true, group_bias=true, seed=0))]
    fn new(dim: usize, groups: usize, sigma: &str, orthogonal: bool, group_bias: bool, seed: u64) -> PyResult<Self> {
        let opts = options(groups, sigma, orthogonal, group_bias)?;
        let inner = OgabLayer::init(dim, &opts, seed).map_err(to_py)?;
        Ok(PyOgabLayer { inner })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn groups(&self) -> usize {
        self.inner.groups()
    }

    #[getter]
    fn param_count(&self) -> usize {
        self.inner.param_count()
    }

    fn forward(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        Ok(self.inner.forward(&matrix(x)?).map_err(to_py)?.to_rows())
    }

    /// Q, or None when the orthogonal path is disabled.
    fn rotation(&self) -> PyResult<Option<Vec<Vec<f64>>>> {
        Ok(self.inner.rotation().map_err(to_py)?.map(|q| q.to_rows()))
    }

    fn gate_probs(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        Ok(self.inner.gate_probs(&matrix(x)?).map_err(to_py)?.to_rows())
    }

    fn __repr__(&self) -> String {
        let o = self.inner.options();
        format!(
            "OgabLayer(dim={}, groups={}, sigma='{}', orthogonal={}, group_bias={})",
            self.inner.dim(),
            o.groups,
            o.sigma.name(),
            o.orthogonal,
            o.group_bias
        )
    }
}

#[pyclass(name = "Model", module = "ogab_py")]
pub struct PyModel {
    inner: MlpModel,
}

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (input_dim, num_classes, activation="relu", groups=5, sigma="tanh", hidden_dim=64, num_layers=4, seed=0))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        input_dim: usize,
        num_classes: usize,
        activation: &str,
        groups: usize,
        sigma: &str,
        hidden_dim: usize,
        num_layers: usize,
        seed: u64,
    ) -> PyResult<Self> {
        let sigma = Smooth::parse(sigma).map_err(to_py)?;
        let kind = ActivationKind::parse(activation, groups, sigma).map_err(to_py)?;
        let cfg = MlpConfig {
            hidden_dim,
            num_layers,
            seed,
            ..MlpConfig::new(input_dim, num_classes, kind)
        };
        Ok(PyModel {
            inner: MlpModel::build(&cfg).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyModel {
            inner: MlpModel::load(&path).map_err(to_py)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(to_py)
    }

    fn count_parameters(&self) -> usize {
        self.inner.count_parameters()
    }

    /// Minibatch Adam; returns the per-epoch loss. The GIL is released
    /// while training.
    #[pyo3(signature = (x, y, epochs=500, learning_rate=0.01, batch_size=500, seed=0))]
    fn fit(
        &mut self,
        py: Python<'_>,
        x: Vec<Vec<f64>>,
        y: Vec<usize>,
        epochs: usize,
        learning_rate: f64,
        batch_size: usize,
        seed: u64,
    ) -> PyResult<Vec<f64>> {
        let x = matrix(x)?;
        let tc = TrainConfig {
            learning_rate,
            epochs,
            batch_size,
            ..TrainConfig::default()
        };
        let model = &mut self.inner;
        let report = py.detach(|| train(model, &x, &y, &tc, seed)).map_err(to_py)?;
        Ok(report.loss_curve)
    }

    fn forward(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        Ok(self.inner.forward(&matrix(x)?).map_err(to_py)?.to_rows())
    }

    fn predict(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<usize>> {
        self.inner.predict(&matrix(x)?).map_err(to_py)
    }

    /// Post-activation output of hidden layer `layer` (0-based).
    fn hidden_output(&self, x: Vec<Vec<f64>>, layer: usize) -> PyResult<Vec<Vec<f64>>> {
        Ok(self.inner.hidden_output(&matrix(x)?, layer).map_err(to_py)?.to_rows())
    }
}

#[pyfunction]
fn skew(a: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    Ok(activation::skew(&matrix(a)?).map_err(to_py)?.to_rows())
}

#[pyfunction]
fn cayley(s: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    Ok(activation::cayley(&matrix(s)?).map_err(to_py)?.to_rows())
}

#[pyfunction]
fn orthogonal_map(x: Vec<Vec<f64>>, q: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    Ok(activation::orthogonal_map(&matrix(x)?, &matrix(q)?).map_err(to_py)?.to_rows())
}

#[pyfunction]
fn f1_score(y_true: Vec<usize>, y_pred: Vec<usize>, num_classes: usize) -> PyResult<f64> {
    let cm = metrics::confusion(&y_true, &y_pred, num_classes).map_err(to_py)?;
    Ok(metrics::f1_score(&cm))
}

#[pyfunction]
fn balanced_accuracy(y_true: Vec<usize>, y_pred: Vec<usize>, num_classes: usize) -> PyResult<f64> {
    let cm = metrics::confusion(&y_true, &y_pred, num_classes).map_err(to_py)?;
    metrics::balanced_accuracy(&cm).map_err(to_py)
}

/// F1, balanced accuracy, accuracy and the per-class figures, as a dict.
#[pyfunction]
fn evaluate<'py>(
    py: Python<'py>,
    y_true: Vec<usize>,
    y_pred: Vec<usize>,
    num_classes: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let r = MetricReport::evaluate(&y_true, &y_pred, num_classes).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("f1", r.f1)?;
    d.set_item("balanced_accuracy", r.balanced_accuracy)?;
    d.set_item("accuracy", r.accuracy)?;
    d.set_item("per_class.precision", r.per_class_precision)?;
    d.set_item("per_class.recall", r.per_class_recall)?;
    d.set_item("per_class.f1", r.per_class_f1)?;
    Ok(d)
}

/// Features and labels of the synthetic dataset. `spec_json` overrides the
/// built-in default spec.
#[pyfunction]
#[pyo3(signature = (spec_json=None))]
fn make_synthetic(py: Python<'_>, spec_json: Option<&str>) -> PyResult<(Vec<Vec<f64>>, Vec<usize>)> {
    let spec = match spec_json {
        Some(text) => SyntheticSpec::from_json(text).map_err(to_py)?,
        None => SyntheticSpec::default(),
    };
    let ds = py.detach(|| data::make_synthetic(&spec)).map_err(to_py)?;
    Ok((ds.x.to_rows(), ds.y))
}

#[pyfunction]
fn imbalance_ratio(labels: Vec<usize>) -> PyResult<f64> {
    let classes = labels.iter().max().map_or(0, |&m| m + 1);
    let mut counts = vec![0usize; classes];
    for &l in &labels {
        counts[l] += 1;
    }
    counts.retain(|&c| c > 0);
    data::imbalance_ratio(&counts).map_err(to_py)
}

/// Per-class train/test row indices.
#[pyfunction]
#[pyo3(signature = (y, ratio=0.8, seed=0))]
fn stratified_split(y: Vec<usize>, ratio: f64, seed: u64) -> PyResult<(Vec<usize>, Vec<usize>)> {
    let classes = y.iter().max().map_or(0, |&m| m + 1);
    let x = Matrix::zeros(y.len(), 1);
    let names = (0..classes).map(|c| c.to_string()).collect();
    let ds = Dataset::new(x, y, names, "labels", Provenance::InMemory).map_err(to_py)?;
    let split = data::stratified_split(&ds, ratio, seed).map_err(to_py)?;
    Ok((split.train_indices, split.test_indices))
}

#[pymodule]
fn ogab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyOgabLayer>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(skew, m)?)?;
    m.add_function(wrap_pyfunction!(cayley, m)?)?;
    m.add_function(wrap_pyfunction!(orthogonal_map, m)?)?;
    m.add_function(wrap_pyfunction!(f1_score, m)?)?;
    m.add_function(wrap_pyfunction!(balanced_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(make_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(imbalance_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(stratified_split, m)?)?;
    Ok(())
}

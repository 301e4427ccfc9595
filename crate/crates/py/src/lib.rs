//! Python bindings: thin wrappers over the dataset, model, attack,
//! exploration, oracle and bound APIs. Reports cross the boundary as plain
//! dicts/lists so downstream code needs no wrapper types.

use ndarray::Array1;
use pyo3::exceptions::{PyIndexError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use pyo3::IntoPyObjectExt;

use mlatk_core::attack::{targeted_attack, AttackMethod, AttackSpec, Margin};
use mlatk_core::bounds::{adv_free_bound, linear_bound, mlp_bound, BoundReport, Thm2Variant};
use mlatk_core::checkpoint::{load_model, model_checksum, save_model};
use mlatk_core::dataset::{self, Dataset, Split};
use mlatk_core::explore::{gase_with, ExploreOpts, Population};
use mlatk_core::model::{Activation, Loss, Model};
use mlatk_core::oracle;
use mlatk_core::train::{train_linear, train_mlp, TrainConfig};
use mlatk_core::Error;

fn to_py_err(e: Error) -> PyErr {
    if e.is_config() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn json_to_py(py: Python<'_>, value: &serde_json::Value) -> PyResult<Py<PyAny>> {
    match value {
        serde_json::Value::Null => Ok(py.None()),
        serde_json::Value::Bool(b) => b.into_py_any(py),
        serde_json::Value::Number(n) => {
            if let Some(v) = n.as_i64() {
                v.into_py_any(py)
            } else if let Some(v) = n.as_u64() {
                v.into_py_any(py)
            } else {
                n.as_f64().unwrap_or(f64::NAN).into_py_any(py)
            }
        }
        serde_json::Value::String(s) => s.into_py_any(py),
        serde_json::Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            list.into_py_any(py)
        }
        serde_json::Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, v) in map {
                dict.set_item(k, json_to_py(py, v)?)?;
            }
            dict.into_py_any(py)
        }
    }
}

fn report_to_py<T: serde::Serialize>(py: Python<'_>, report: &T) -> PyResult<Py<PyAny>> {
    let value = serde_json::to_value(report)
        .map_err(|e| PyRuntimeError::new_err(format!("serialization failed: {}", e)))?;
    json_to_py(py, &value)
}

fn parse_loss(name: &str) -> PyResult<Loss> {
    match name {
        "zero_one" => Ok(Loss::ZeroOne),
        "lse" => Ok(Loss::Lse),
        "squared_hinge" => Ok(Loss::SquaredHinge),
        "logistic" => Ok(Loss::Logistic),
        other => Err(PyValueError::new_err(format!("unknown loss {:?}", other))),
    }
}

fn parse_activation(name: &str) -> PyResult<Activation> {
    match name {
        "identity" => Ok(Activation::Identity),
        "tanh" => Ok(Activation::Tanh),
        "sigmoid" => Ok(Activation::Sigmoid),
        other => Err(PyValueError::new_err(format!("unknown activation {:?}", other))),
    }
}

fn parse_attack(name: &str) -> PyResult<AttackMethod> {
    match name {
        "pgd" => Ok(AttackMethod::Pgd),
        "penalty" => Ok(AttackMethod::Penalty),
        "exact_linear" => Ok(AttackMethod::ExactLinear),
        other => Err(PyValueError::new_err(format!("unknown attack method {:?}", other))),
    }
}

fn make_spec(
    mu_r: f64,
    method: &str,
    margin: f64,
    max_iter: usize,
    restarts: usize,
    seed: u64,
    preserve_others: bool,
) -> PyResult<AttackSpec> {
    Ok(AttackSpec {
        margin: Margin::Uniform(margin),
        max_iter,
        restarts,
        seed,
        preserve_others,
        ..AttackSpec::with_method(mu_r, parse_attack(method)?)
    })
}

fn vec_to_array(v: Vec<f64>) -> Array1<f64> {
    Array1::from_vec(v)
}

#[pyclass(name = "Dataset")]
struct PyDataset {
    inner: Dataset,
}

#[pymethods]
impl PyDataset {
    /// Synthesize a low-rank-teacher multi-label dataset.
    #[staticmethod]
    #[pyo3(signature = (n, d, m, rank=None, label_corr=0.0, noise=0.0, seed=0))]
    fn synth(
        n: usize,
        d: usize,
        m: usize,
        rank: Option<usize>,
        label_corr: f64,
        noise: f64,
        seed: u64,
    ) -> PyResult<PyDataset> {
        let rank = rank.unwrap_or_else(|| d.min(m));
        let (ds, _) = dataset::synthesize(n, d, m, rank, label_corr, noise, seed).map_err(to_py_err)?;
        Ok(PyDataset { inner: ds })
    }

    /// Load the sparse text format.
    #[staticmethod]
    fn load(path: &str) -> PyResult<PyDataset> {
        Ok(PyDataset { inner: dataset::load_sparse(path).map_err(to_py_err)? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        dataset::save_sparse(&self.inner, path).map_err(to_py_err)
    }

    /// Re-assign split tags with a seeded shuffle.
    #[pyo3(signature = (train, val, test, seed=0))]
    fn split(&mut self, train: f64, val: f64, test: f64, seed: u64) -> PyResult<()> {
        dataset::split(&mut self.inner, (train, val, test), seed).map_err(to_py_err)
    }

    fn normalize(&mut self, mu_x: f64) -> PyResult<()> {
        dataset::normalize(&mut self.inner, mu_x).map_err(to_py_err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m
    }

    /// `(x, y)` of one instance as plain lists.
    fn instance(&self, i: usize) -> PyResult<(Vec<f64>, Vec<f64>)> {
        if i >= self.inner.len() {
            return Err(PyIndexError::new_err(format!(
                "instance {} out of range ({} instances)",
                i,
                self.inner.len()
            )));
        }
        let inst = self.inner.instance(i);
        Ok((inst.x.to_vec(), inst.y.to_vec()))
    }

    /// `(train, val, test)` instance counts.
    fn split_counts(&self) -> (usize, usize, usize) {
        self.inner.split_counts()
    }
}

#[pyclass(name = "Model")]
struct PyModel {
    inner: Model,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn load(path: &str) -> PyResult<PyModel> {
        Ok(PyModel { inner: load_model(path).map_err(to_py_err)? })
    }

    /// Train a linear model on the dataset's train split.
    #[staticmethod]
    #[pyo3(signature = (
        ds, epochs=100, lr=0.1, batch=32, seed=0, l2=0.0, lambda_nuc=0.0,
        loss="squared_hinge", adv_training=false, adv_mu_r=0.5,
        adv_fraction=0.5, adv_iters=40
    ))]
    #[allow(clippy::too_many_arguments)]
    fn train_linear(
        ds: &PyDataset,
        epochs: usize,
        lr: f64,
        batch: usize,
        seed: u64,
        l2: f64,
        lambda_nuc: f64,
        loss: &str,
        adv_training: bool,
        adv_mu_r: f64,
        adv_fraction: f64,
        adv_iters: usize,
    ) -> PyResult<PyModel> {
        let cfg = TrainConfig {
            loss: parse_loss(loss)?,
            l2,
            lambda_nuc,
            adv_training,
            adv_mu_r,
            adv_fraction,
            adv_iters,
            epochs,
            lr,
            batch,
            seed,
            ..TrainConfig::default()
        };
        let run = train_linear(&ds.inner, &cfg).map_err(to_py_err)?;
        Ok(PyModel { inner: run.model })
    }

    /// Train an MLP; `hidden` lists the hidden widths, the label-count
    /// output layer is appended automatically.
    #[staticmethod]
    #[pyo3(signature = (
        ds, hidden, activation="tanh", epochs=100, lr=0.1, batch=32, seed=0,
        l2=0.0, lambda_nuc=0.0, loss="logistic", adv_training=false,
        adv_mu_r=0.5, adv_fraction=0.5, adv_iters=40
    ))]
    #[allow(clippy::too_many_arguments)]
    fn train_mlp(
        ds: &PyDataset,
        hidden: Vec<usize>,
        activation: &str,
        epochs: usize,
        lr: f64,
        batch: usize,
        seed: u64,
        l2: f64,
        lambda_nuc: f64,
        loss: &str,
        adv_training: bool,
        adv_mu_r: f64,
        adv_fraction: f64,
        adv_iters: usize,
    ) -> PyResult<PyModel> {
        let act = parse_activation(activation)?;
        let mut arch: Vec<(usize, Activation)> = hidden.into_iter().map(|w| (w, act)).collect();
        arch.push((ds.inner.m, Activation::Identity));
        let cfg = TrainConfig {
            loss: parse_loss(loss)?,
            l2,
            lambda_nuc,
            adv_training,
            adv_mu_r,
            adv_fraction,
            adv_iters,
            epochs,
            lr,
            batch,
            seed,
            ..TrainConfig::default()
        };
        let run = train_mlp(&ds.inner, &cfg, &arch).map_err(to_py_err)?;
        Ok(PyModel { inner: run.model })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        save_model(&self.inner, path).map_err(to_py_err)
    }

    /// Per-label margin scores `h(x)`.
    fn scores(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        if x.len() != self.inner.d() {
            return Err(PyValueError::new_err(format!(
                "input has {} features, model expects {}",
                x.len(),
                self.inner.d()
            )));
        }
        Ok(self.inner.scores(&vec_to_array(x)).to_vec())
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d()
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m()
    }

    #[getter]
    fn kind(&self) -> &'static str {
        match self.inner {
            Model::Linear(_) => "linear",
            Model::Mlp(_) => "mlp",
        }
    }

    fn checksum(&self) -> String {
        model_checksum(&self.inner)
    }
}

/// Minimal-norm attack flipping the target labels (optionally preserving
/// the rest). Returns r, norm, feasible, margins_ok, flipped, iterations.
#[pyfunction(name = "targeted_attack")]
#[pyo3(signature = (
    model, x, y, targets, mu_r, method="pgd", margin=1e-3, max_iter=500,
    restarts=3, seed=0, preserve_others=true
))]
#[allow(clippy::too_many_arguments)]
fn py_targeted_attack(
    py: Python<'_>,
    model: &PyModel,
    x: Vec<f64>,
    y: Vec<f64>,
    targets: Vec<usize>,
    mu_r: f64,
    method: &str,
    margin: f64,
    max_iter: usize,
    restarts: usize,
    seed: u64,
    preserve_others: bool,
) -> PyResult<Py<PyAny>> {
    let spec = make_spec(mu_r, method, margin, max_iter, restarts, seed, preserve_others)?;
    let out = targeted_attack(&model.inner, &vec_to_array(x), &vec_to_array(y), &targets, &spec)
        .map_err(to_py_err)?;
    let dict = PyDict::new(py);
    dict.set_item("r", out.r.to_vec())?;
    dict.set_item("norm", out.norm)?;
    dict.set_item("feasible", out.feasible)?;
    dict.set_item("margins_ok", out.margins_ok)?;
    dict.set_item("flipped", out.flipped)?;
    dict.set_item("iterations", out.iterations)?;
    dict.into_py_any(py)
}

/// Greedy label-space exploration. Returns selected, r, norm, step_norms,
/// attack_calls, stop.
#[pyfunction(name = "gase")]
#[pyo3(signature = (
    model, x, y, mu_r, attack="pgd", margin=1e-3, max_iter=500, restarts=3,
    seed=0, preserve_others=true, max_labels=None, tie_tol=1e-9
))]
#[allow(clippy::too_many_arguments)]
fn py_gase(
    py: Python<'_>,
    model: &PyModel,
    x: Vec<f64>,
    y: Vec<f64>,
    mu_r: f64,
    attack: &str,
    margin: f64,
    max_iter: usize,
    restarts: usize,
    seed: u64,
    preserve_others: bool,
    max_labels: Option<usize>,
    tie_tol: f64,
) -> PyResult<Py<PyAny>> {
    let spec = make_spec(mu_r, attack, margin, max_iter, restarts, seed, preserve_others)?;
    let opts = ExploreOpts { max_labels, tie_tol };
    let run = gase_with(&model.inner, &vec_to_array(x), &vec_to_array(y), &spec, &opts)
        .map_err(to_py_err)?;
    let dict = PyDict::new(py);
    dict.set_item("selected", run.selected)?;
    dict.set_item("r", run.r.to_vec())?;
    dict.set_item("norm", run.norm)?;
    dict.set_item("step_norms", run.step_norms)?;
    dict.set_item("attack_calls", run.attack_calls)?;
    dict.set_item(
        "stop",
        serde_json::to_value(run.stop)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default(),
    )?;
    dict.into_py_any(py)
}

/// Attackability indicator: labels misclassified at `x + r`.
#[pyfunction]
fn indicator(model: &PyModel, x: Vec<f64>, y: Vec<f64>, r: Vec<f64>) -> PyResult<usize> {
    let (d, m) = (model.inner.d(), model.inner.m());
    if x.len() != d || r.len() != d || y.len() != m {
        return Err(PyValueError::new_err(format!(
            "expected |x| = |r| = {} and |y| = {}, got {}, {}, {}",
            d,
            m,
            x.len(),
            r.len(),
            y.len()
        )));
    }
    let xp = vec_to_array(x) + vec_to_array(r);
    let h = model.inner.scores(&xp);
    let y = vec_to_array(y);
    Ok((0..m).filter(|&j| y[j] * h[j] <= 0.0).count())
}

/// Exact largest feasible flip count (brute force, linear models).
#[pyfunction]
#[pyo3(signature = (model, x, y, mu_r, margin=1e-3, seed=0, preserve_others=true))]
fn exact_cstar(
    py: Python<'_>,
    model: &PyModel,
    x: Vec<f64>,
    y: Vec<f64>,
    mu_r: f64,
    margin: f64,
    seed: u64,
    preserve_others: bool,
) -> PyResult<Py<PyAny>> {
    let spec = make_spec(mu_r, "exact_linear", margin, 500, 3, seed, preserve_others)?;
    let report = oracle::exact_cstar(&model.inner, &vec_to_array(x), &vec_to_array(y), &spec)
        .map_err(to_py_err)?;
    report_to_py(py, &report)
}

/// Exact flips-minus-cost optimum (brute force, linear models).
#[pyfunction]
#[pyo3(signature = (model, x, y, mu_r, margin=1e-3, seed=0, preserve_others=true))]
fn psi_optimum(
    py: Python<'_>,
    model: &PyModel,
    x: Vec<f64>,
    y: Vec<f64>,
    mu_r: f64,
    margin: f64,
    seed: u64,
    preserve_others: bool,
) -> PyResult<Py<PyAny>> {
    let spec = make_spec(mu_r, "exact_linear", margin, 500, 3, seed, preserve_others)?;
    let report = oracle::psi_optimum(&model.inner, &vec_to_array(x), &vec_to_array(y), &spec)
        .map_err(to_py_err)?;
    report_to_py(py, &report)
}

/// Greedy-vs-oracle certification over one split of a dataset.
#[pyfunction]
#[pyo3(signature = (model, ds, mu_r, split="test", population="all", margin=1e-3, seed=0, max_labels=None))]
#[allow(clippy::too_many_arguments)]
fn certify(
    py: Python<'_>,
    model: &PyModel,
    ds: &PyDataset,
    mu_r: f64,
    split: &str,
    population: &str,
    margin: f64,
    seed: u64,
    max_labels: Option<usize>,
) -> PyResult<Py<PyAny>> {
    let split = Split::from_name(split).map_err(to_py_err)?;
    let population = Population::from_name(population).map_err(to_py_err)?;
    let spec = make_spec(mu_r, "exact_linear", margin, 500, 3, seed, false)?;
    let opts = ExploreOpts { max_labels, tie_tol: 1e-9 };
    let report = oracle::certify(&model.inner, &ds.inner, split, &spec, population, &opts)
        .map_err(to_py_err)?;
    report_to_py(py, &report)
}

/// Generalization bound rows (theorem rows plus the adversary-free row).
#[pyfunction]
#[pyo3(signature = (model, ds, mu_r, sigma, split="test", variant="both"))]
fn bounds(
    py: Python<'_>,
    model: &PyModel,
    ds: &PyDataset,
    mu_r: f64,
    sigma: f64,
    split: &str,
    variant: &str,
) -> PyResult<Py<PyAny>> {
    let split = Split::from_name(split).map_err(to_py_err)?;
    let mut reports: Vec<BoundReport> = Vec::new();
    match &model.inner {
        Model::Linear(_) => {
            reports.push(linear_bound(&model.inner, &ds.inner, split, mu_r, sigma).map_err(to_py_err)?);
        }
        Model::Mlp(_) => {
            let variants: Vec<Thm2Variant> = match variant {
                "both" => vec![Thm2Variant::Main, Thm2Variant::Supp],
                name => vec![Thm2Variant::from_name(name).map_err(to_py_err)?],
            };
            for v in variants {
                reports.push(
                    mlp_bound(&model.inner, &ds.inner, split, mu_r, sigma, v).map_err(to_py_err)?,
                );
            }
        }
    }
    reports.push(adv_free_bound(&model.inner, &ds.inner, split, sigma).map_err(to_py_err)?);
    report_to_py(py, &reports)
}

#[pyfunction]
fn version() -> &'static str {
    env!("CARGO_PKG_VERSION")
}

#[pymodule]
fn mlatk(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(py_targeted_attack, m)?)?;
    m.add_function(wrap_pyfunction!(py_gase, m)?)?;
    m.add_function(wrap_pyfunction!(indicator, m)?)?;
    m.add_function(wrap_pyfunction!(exact_cstar, m)?)?;
    m.add_function(wrap_pyfunction!(psi_optimum, m)?)?;
    m.add_function(wrap_pyfunction!(certify, m)?)?;
    m.add_function(wrap_pyfunction!(bounds, m)?)?;
    m.add_function(wrap_pyfunction!(version, m)?)?;
    Ok(())
}

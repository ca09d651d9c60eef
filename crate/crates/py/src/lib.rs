//! Python bindings. Feature matrices are passed as sequences of samples
//! (`n × dim`, e.g. nested lists or 2-D numpy arrays); labels as sequences of
//! class ids; kernels come back as nested lists.

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use ujmmd::checks::{self, CheckOptions};
use ujmmd::data::{self, DomainPair, FeatureMatrix, HardLabels, SyntheticSpec};
use ujmmd::kernels::{self, KernelSpec, LabelKernel};
use ujmmd::mmd;
use ujmmd::pipeline::{self, HyperParams, MethodSpec, Normalization, Preset, RunResult};
use ujmmd::DMatrix;

fn to_py(e: ujmmd::Error) -> PyErr {
    match e {
        ujmmd::Error::Numerical(_) => PyRuntimeError::new_err(e.to_string()),
        ujmmd::Error::Io { .. } => PyOSError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for ujmmd::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(to_py)
    }
}

fn features(rows: Vec<Vec<f64>>) -> PyResult<FeatureMatrix> {
    FeatureMatrix::from_sample_rows(&rows).py()
}

fn labels(ids: Vec<usize>, classes: usize) -> PyResult<HardLabels> {
    HardLabels::new(ids, classes).py()
}

/// `classes`, or one more than the largest id seen.
fn class_count<'a>(classes: Option<usize>, ids: impl IntoIterator<Item = &'a Vec<usize>>) -> usize {
    classes.unwrap_or_else(|| ids.into_iter().flatten().max().map_or(0, |m| m + 1))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn result_dict<'py>(py: Python<'py>, r: &RunResult) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("preset", &r.preset)?;
    d.set_item("seed", r.seed)?;
    d.set_item("per_iteration_accuracy", &r.per_iteration_accuracy)?;
    d.set_item("final_accuracy", r.final_accuracy)?;
    d.set_item("feature_distance", r.final_feature_distance)?;
    d.set_item("hsi", r.final_hsi)?;
    d.set_item("pseudo_label_history", &r.pseudo_label_history)?;
    Ok(d)
}

/// Source and target samples with source labels and optional target truth.
#[pyclass(name = "DomainPair", module = "pyujmmd", frozen)]
struct PyDomainPair {
    inner: DomainPair,
}

#[pymethods]
impl PyDomainPair {
    #[new]
    #[pyo3(signature = (source_features, source_labels, target_features, target_labels=None, classes=None))]
    fn new(
        source_features: Vec<Vec<f64>>,
        source_labels: Vec<usize>,
        target_features: Vec<Vec<f64>>,
        target_labels: Option<Vec<usize>>,
        classes: Option<usize>,
    ) -> PyResult<Self> {
        let c = class_count(classes, [&source_labels].into_iter().chain(target_labels.as_ref()));
        let inner = DomainPair::new(
            features(source_features)?,
            labels(source_labels, c)?,
            features(target_features)?,
            target_labels.map(|t| labels(t, c)).transpose()?,
        )
        .py()?;
        Ok(Self { inner })
    }

    #[getter]
    fn n_s(&self) -> usize {
        self.inner.n_s()
    }

    #[getter]
    fn n_t(&self) -> usize {
        self.inner.n_t()
    }

    #[getter]
    fn classes(&self) -> usize {
        self.inner.classes()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn source_labels(&self) -> Vec<usize> {
        self.inner.source_labels().ids().to_vec()
    }

    #[getter]
    fn target_labels(&self) -> Option<Vec<usize>> {
        self.inner.target_truth().map(|t| t.ids().to_vec())
    }

    /// Source samples as a list of rows.
    fn source_features(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.source_features().values().transpose())
    }

    /// Target samples as a list of rows.
    fn target_features(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.target_features().values().transpose())
    }

    fn __repr__(&self) -> String {
        format!(
            "DomainPair(n_s={}, n_t={}, dim={}, classes={}, target_labels={})",
            self.inner.n_s(),
            self.inner.n_t(),
            self.inner.dim(),
            self.inner.classes(),
            self.inner.target_truth().is_some()
        )
    }
}

/// A preset with optional overrides.
#[pyclass(name = "Method", module = "pyujmmd", frozen)]
struct PyMethod {
    inner: MethodSpec,
}

#[pymethods]
impl PyMethod {
    #[new]
    #[pyo3(signature = (
        preset,
        *,
        hyperparams="small",
        lambda_=None,
        dim=None,
        iters=None,
        delta=None,
        kernel=None,
        ridge=None,
        knn_k=None,
        normalization=None,
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        preset: &str,
        hyperparams: &str,
        lambda_: Option<f64>,
        dim: Option<usize>,
        iters: Option<usize>,
        delta: Option<f64>,
        kernel: Option<&str>,
        ridge: Option<f64>,
        knn_k: Option<usize>,
        normalization: Option<&str>,
    ) -> PyResult<Self> {
        let preset: Preset = preset.parse().py()?;
        let mut hp = match hyperparams.to_ascii_lowercase().as_str() {
            "small" => HyperParams::SMALL,
            "large" => HyperParams::LARGE,
            other => {
                return Err(PyValueError::new_err(format!(
                    "unknown hyperparams {other:?}; expected small or large"
                )))
            }
        };
        hp.lambda = lambda_.unwrap_or(hp.lambda);
        hp.dim = dim.unwrap_or(hp.dim);
        hp.iters = iters.unwrap_or(hp.iters);
        hp.delta = delta.unwrap_or(hp.delta);
        let mut inner = MethodSpec::from_preset(preset, &hp).py()?;
        if let Some(k) = kernel {
            inner.kernel = k.parse::<KernelSpec>().py()?;
        }
        inner.ridge = ridge;
        inner.knn_k = knn_k.unwrap_or(inner.knn_k);
        if let Some(n) = normalization {
            inner.normalization = n.parse::<Normalization>().py()?;
        }
        inner.validate().py()?;
        Ok(Self { inner })
    }

    #[getter]
    fn label(&self) -> &str {
        &self.inner.label
    }

    #[getter]
    fn lambda_(&self) -> f64 {
        self.inner.lambda
    }

    #[getter]
    fn delta(&self) -> f64 {
        self.inner.delta.get()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim
    }

    #[getter]
    fn iters(&self) -> usize {
        self.inner.iters
    }

    #[getter]
    fn kernel(&self) -> String {
        self.inner.kernel.to_string()
    }

    #[getter]
    fn normalization(&self) -> &'static str {
        self.inner.normalization.name()
    }

    fn __repr__(&self) -> String {
        format!(
            "Method({:?}, lambda_={}, dim={}, iters={}, delta={}, kernel={:?}, normalization={:?})",
            self.inner.label,
            self.inner.lambda,
            self.inner.dim,
            self.inner.iters,
            self.inner.delta.get(),
            self.inner.kernel.to_string(),
            self.inner.normalization.name()
        )
    }
}

/// Preset names in canonical order.
#[pyfunction]
fn presets() -> Vec<&'static str> {
    Preset::ALL.iter().map(|p| p.name()).collect()
}

/// One count for every class, or one per class.
#[derive(FromPyObject)]
enum Counts {
    Same(usize),
    Each(Vec<usize>),
}

impl Counts {
    fn expand(self, classes: usize) -> Vec<usize> {
        match self {
            Counts::Same(n) => vec![n; classes],
            Counts::Each(v) => v,
        }
    }
}

/// Gaussian class blobs; the target means are translated by `domain_shift`.
#[pyfunction]
#[pyo3(signature = (classes, per_class_source, per_class_target, dim, class_separation, domain_shift, seed=0))]
fn synthetic_pair(
    classes: usize,
    per_class_source: Counts,
    per_class_target: Counts,
    dim: usize,
    class_separation: f64,
    domain_shift: f64,
    seed: u64,
) -> PyResult<PyDomainPair> {
    let spec = SyntheticSpec {
        classes,
        per_class_source: per_class_source.expand(classes),
        per_class_target: per_class_target.expand(classes),
        dim,
        class_separation,
        domain_shift,
        seed,
    };
    Ok(PyDomainPair {
        inner: data::generate_synthetic(&spec).py()?,
    })
}

/// Drops `drop_fraction` of the source samples of each class in the first
/// half of the classes and of the target samples of each class in the second
/// half.
#[pyfunction]
#[pyo3(signature = (pair, drop_fraction=0.5, seed=0))]
fn simulate_label_shift(pair: &PyDomainPair, drop_fraction: f64, seed: u64) -> PyResult<PyDomainPair> {
    Ok(PyDomainPair {
        inner: data::simulate_label_shift(&pair.inner, drop_fraction, seed).py()?,
    })
}

/// Runs the pseudo-label loop; returns a dict with the run record fields.
#[pyfunction]
#[pyo3(signature = (pair, method, seed=0))]
fn run_da<'py>(py: Python<'py>, pair: &PyDomainPair, method: &PyMethod, seed: u64) -> PyResult<Bound<'py, PyDict>> {
    let result = py.detach(|| pipeline::run_da(&pair.inner, &method.inner, seed)).py()?;
    result_dict(py, &result)
}

/// `(feature_distance, hsi)` of the final embedding against target truth.
#[pyfunction]
#[pyo3(signature = (pair, method, seed=0))]
fn evaluate_ablation(py: Python<'_>, pair: &PyDomainPair, method: &PyMethod, seed: u64) -> PyResult<(f64, f64)> {
    py.detach(|| pipeline::evaluate_ablation(&pair.inner, &method.inner, seed))
        .py()
}

/// Label-shift protocol with seeds `base_seed .. base_seed + repeats`;
/// returns `{"mean", "std", "per_run"}`.
#[pyfunction]
#[pyo3(signature = (pair, method, repeats=10, base_seed=0))]
fn run_label_shift_experiment<'py>(
    py: Python<'py>,
    pair: &PyDomainPair,
    method: &PyMethod,
    repeats: usize,
    base_seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let summary = py
        .detach(|| pipeline::run_label_shift_experiment(&pair.inner, &method.inner, repeats, base_seed))
        .py()?;
    let d = PyDict::new(py);
    d.set_item("mean", summary.mean)?;
    d.set_item("std", summary.std)?;
    let runs = summary
        .per_run
        .iter()
        .map(|r| result_dict(py, r))
        .collect::<PyResult<Vec<_>>>()?;
    d.set_item("per_run", runs)?;
    Ok(d)
}

/// Euclidean k-NN majority vote.
#[pyfunction]
#[pyo3(signature = (train, train_labels, test, k=1, classes=None))]
fn knn_predict(
    train: Vec<Vec<f64>>,
    train_labels: Vec<usize>,
    test: Vec<Vec<f64>>,
    k: usize,
    classes: Option<usize>,
) -> PyResult<Vec<usize>> {
    let c = class_count(classes, [&train_labels]);
    let predicted = pipeline::knn_predict(&features(train)?, &labels(train_labels, c)?, &features(test)?, k).py()?;
    Ok(predicted.ids().to_vec())
}

/// Feature kernel over samples: `linear`, `rbf`, `rbf:<sigma>`, `poly` or
/// `poly:<degree>:<offset>`.
#[pyfunction]
#[pyo3(signature = (samples, kernel="linear"))]
fn feature_kernel(samples: Vec<Vec<f64>>, kernel: &str) -> PyResult<Vec<Vec<f64>>> {
    let spec: KernelSpec = kernel.parse().py()?;
    let k = kernels::feature_kernel(&features(samples)?, &spec).py()?;
    Ok(rows(k.values()))
}

/// Label kernel over `source ∥ target`; `variant` 1 (marginal) to 4
/// (shift-corrected).
#[pyfunction]
#[pyo3(signature = (variant, source_labels, target_labels, classes=None))]
fn label_kernel(
    variant: u8,
    source_labels: Vec<usize>,
    target_labels: Vec<usize>,
    classes: Option<usize>,
) -> PyResult<Vec<Vec<f64>>> {
    let c = class_count(classes, [&source_labels, &target_labels]);
    let v = LabelKernel::from_variant(variant).py()?;
    let k = kernels::label_kernel(v, &labels(source_labels, c)?, &labels(target_labels, c)?, c).py()?;
    Ok(rows(k.values()))
}

/// `(joint MMD, HSI)` of `source ∥ target` samples under the given label
/// kernel variant and feature kernel.
#[pyfunction]
#[pyo3(signature = (samples, source_labels, target_labels, variant=3, kernel="linear", classes=None))]
fn joint_discrepancy(
    samples: Vec<Vec<f64>>,
    source_labels: Vec<usize>,
    target_labels: Vec<usize>,
    variant: u8,
    kernel: &str,
    classes: Option<usize>,
) -> PyResult<(f64, f64)> {
    let c = class_count(classes, [&source_labels, &target_labels]);
    let (n_s, n_t) = (source_labels.len(), target_labels.len());
    let spec: KernelSpec = kernel.parse().py()?;
    let x = features(samples)?;
    if x.n_samples() != n_s + n_t {
        return Err(PyValueError::new_err(format!(
            "{} samples but {} labels",
            x.n_samples(),
            n_s + n_t
        )));
    }
    let kxx = kernels::feature_kernel(&x, &spec).py()?;
    let v = LabelKernel::from_variant(variant).py()?;
    let kyy = kernels::label_kernel(v, &labels(source_labels, c)?, &labels(target_labels, c)?, c).py()?;
    let distance = mmd::jmmd_distance(&kxx, &kyy, &mmd::mmd_marginal(n_s, n_t).py()?).py()?;
    let hsi = mmd::hsi_metric(&kxx, &kyy, n_s, n_t).py()?;
    Ok((distance, hsi))
}

/// Runs the property suite; returns `(name, passed, detail)` per property.
#[pyfunction]
#[pyo3(signature = (inject_sign_error=false))]
fn check(py: Python<'_>, inject_sign_error: bool) -> Vec<(&'static str, bool, String)> {
    let report = py.detach(|| {
        checks::run_all(CheckOptions {
            flip_marginal_cross_sign: inject_sign_error,
        })
    });
    report
        .outcomes
        .into_iter()
        .map(|o| (o.name, o.passed, o.detail))
        .collect()
}

#[pymodule]
fn pyujmmd(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDomainPair>()?;
    m.add_class::<PyMethod>()?;
    m.add_function(wrap_pyfunction!(presets, m)?)?;
    m.add_function(wrap_pyfunction!(synthetic_pair, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_label_shift, m)?)?;
    m.add_function(wrap_pyfunction!(run_da, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_ablation, m)?)?;
    m.add_function(wrap_pyfunction!(run_label_shift_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(knn_predict, m)?)?;
    m.add_function(wrap_pyfunction!(feature_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(label_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(joint_discrepancy, m)?)?;
    m.add_function(wrap_pyfunction!(check, m)?)?;
    Ok(())
}

//! Python bindings for `pawp-core`.
//!
//! Tensors cross the boundary as flat lists in phase-major order: element
//! `(i, j, k)` of an `I1 x I2 x I3` tensor sits at `(k * I1 + i) * I2 + j`.
//! Feature matrices are lists of rows.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use pawp_core::classifier::{self, ClassWeighting, LinearClassifier, SvmOptions, TrainDiagnostics};
use pawp_core::evaluation;
use pawp_core::features::FeatureMatrix;
use pawp_core::mpca::{self, MpcaArtifact, MpcaConfig, MpcaModel};
use pawp_core::pipeline::{self, Preset, RunConfig, SynthSpec};
use pawp_core::registration::{self, Point};
use pawp_core::{Error, Tensor3};

create_exception!(pawp, PawpError, PyRuntimeError, "Pipeline or numerical failure.");

fn to_py(e: Error) -> PyErr {
    let msg = e.to_string();
    match e {
        Error::Shape(_)
        | Error::InvalidArgument(_)
        | Error::NonFinite { .. }
        | Error::SingleClass { .. }
        | Error::CollinearLandmarks { .. }
        | Error::Config(_) => PyValueError::new_err(msg),
        Error::Io { .. } => PyOSError::new_err(msg),
        _ => PawpError::new_err(msg),
    }
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<FeatureMatrix> {
    FeatureMatrix::from_rows(&rows).map_err(to_py)
}

fn tensor(dims: [usize; 3], data: Vec<f64>) -> PyResult<Tensor3> {
    Tensor3::from_vec(dims, data).map_err(to_py)
}

fn json_to_py(py: Python<'_>, value: &serde_json::Value) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PawpError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

/// Multilinear PCA fitted on equally shaped tensors.
#[pyclass(frozen, module = "pawp")]
struct Mpca {
    model: MpcaModel,
}

#[pymethods]
impl Mpca {
    /// Fits on flat phase-major samples of shape `dims`.
    #[staticmethod]
    #[pyo3(signature = (samples, dims, variance_ratio = 0.97, max_iter = 15, tol = 1e-6))]
    fn fit(samples: Vec<Vec<f64>>, dims: [usize; 3], variance_ratio: f64, max_iter: usize, tol: f64) -> PyResult<Self> {
        let tensors = samples
            .into_iter()
            .map(|s| tensor(dims, s))
            .collect::<PyResult<Vec<_>>>()?;
        let cfg = MpcaConfig {
            variance_ratio,
            max_iter,
            tol,
        };
        Ok(Mpca {
            model: mpca::fit(&tensors, &cfg).map_err(to_py)?,
        })
    }

    /// Projects one sample and returns its vectorised core tensor.
    fn transform(&self, sample: Vec<f64>) -> PyResult<Vec<f64>> {
        let t = tensor(self.model.input_dims(), sample)?;
        Ok(mpca::vectorize(&mpca::transform(&self.model, &t).map_err(to_py)?))
    }

    #[getter]
    fn input_dims(&self) -> [usize; 3] {
        self.model.input_dims()
    }

    #[getter]
    fn output_dims(&self) -> [usize; 3] {
        self.model.output_dims()
    }

    #[getter]
    fn feature_count(&self) -> usize {
        self.model.feature_count()
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.model.iterations_run
    }

    /// Captured scatter after initialisation and after each sweep.
    #[getter]
    fn scatter_history(&self) -> Vec<f64> {
        self.model.scatter_history.clone()
    }

    #[getter]
    fn captured_fraction(&self) -> f64 {
        if self.model.input_scatter > 0.0 {
            self.model.captured_scatter / self.model.input_scatter
        } else {
            1.0
        }
    }

    /// Column-orthonormal projection of `mode` (0, 1 or 2) as a list of rows.
    fn projection(&self, mode: usize) -> PyResult<Vec<Vec<f64>>> {
        let u = self
            .model
            .projections
            .get(mode)
            .ok_or_else(|| PyValueError::new_err(format!("mode {mode} is not 0, 1 or 2")))?;
        Ok((0..u.nrows()).map(|i| u.row(i).iter().copied().collect()).collect())
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        let artifact = MpcaArtifact {
            model: self.model.clone(),
            selection: None,
        };
        let file = File::create(&path).map_err(|e| to_py(Error::io(&path, e)))?;
        artifact
            .write_to(&mut BufWriter::new(file))
            .map_err(|e| to_py(Error::io(&path, e)))
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let file = File::open(&path).map_err(|e| to_py(Error::io(&path, e)))?;
        let artifact = MpcaArtifact::read_from(&mut BufReader::new(file)).map_err(to_py)?;
        Ok(Mpca { model: artifact.model })
    }

    fn __repr__(&self) -> String {
        let [a, b, c] = self.model.input_dims();
        let [p, q, r] = self.model.output_dims();
        format!("Mpca({a}x{b}x{c} -> {p}x{q}x{r})")
    }
}

/// Linear SVM trained by dual coordinate descent.
#[pyclass(frozen, module = "pawp")]
struct LinearSvm {
    model: LinearClassifier,
    diagnostics: TrainDiagnostics,
}

#[pymethods]
impl LinearSvm {
    #[staticmethod]
    #[pyo3(signature = (features, labels, c = 1.0, tol = 1e-6, max_epochs = 100_000, seed = 0, balanced = false))]
    fn train(
        features: Vec<Vec<f64>>,
        labels: Vec<bool>,
        c: f64,
        tol: f64,
        max_epochs: usize,
        seed: u64,
        balanced: bool,
    ) -> PyResult<Self> {
        let opts = SvmOptions {
            tol,
            max_epochs,
            seed,
            class_weighting: if balanced { ClassWeighting::Balanced } else { ClassWeighting::None },
        };
        let (model, diagnostics) = classifier::train_with_options(&matrix(features)?, &labels, c, &opts).map_err(to_py)?;
        Ok(LinearSvm { model, diagnostics })
    }

    fn decision_scores(&self, features: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        self.model.decision_scores(&matrix(features)?).map_err(to_py)
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.model.weights.clone()
    }

    #[getter]
    fn bias(&self) -> f64 {
        self.model.bias
    }

    #[getter]
    fn converged(&self) -> bool {
        self.diagnostics.converged
    }

    #[getter]
    fn relative_gap(&self) -> f64 {
        self.diagnostics.relative_gap()
    }

    #[getter]
    fn epochs(&self) -> usize {
        self.diagnostics.epochs
    }
}

/// Mann-Whitney AUC with ties counted as one half.
#[pyfunction]
fn roc_auc(scores: Vec<f64>, labels: Vec<bool>) -> PyResult<f64> {
    evaluation::roc_auc(&scores, &labels).map_err(to_py)
}

/// Matthews correlation; 0 when any marginal is empty.
#[pyfunction]
fn mcc(tp: i64, fp: i64, tn: i64, fn_: i64) -> PyResult<f64> {
    evaluation::mcc(tp, fp, tn, fn_).map_err(to_py)
}

#[pyfunction]
fn net_benefit(probabilities: Vec<f64>, labels: Vec<bool>, threshold: f64) -> f64 {
    evaluation::net_benefit(&probabilities, &labels, threshold)
}

/// Decision curve over thresholds 0.01..0.99 as a dict of lists.
#[pyfunction]
fn dca_curve<'py>(py: Python<'py>, probabilities: Vec<f64>, labels: Vec<bool>) -> PyResult<Bound<'py, PyDict>> {
    let c = evaluation::dca_curve(&probabilities, &labels, &evaluation::default_thresholds()).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("thresholds", c.thresholds)?;
    d.set_item("model", c.net_benefit_model)?;
    d.set_item("treat_all", c.net_benefit_treat_all)?;
    d.set_item("treat_none", c.net_benefit_treat_none)?;
    d.set_item("prevalence", c.prevalence)?;
    Ok(d)
}

/// Per-column Fisher scores of a feature matrix.
#[pyfunction]
fn fisher_scores(features: Vec<Vec<f64>>, labels: Vec<bool>) -> PyResult<Vec<f64>> {
    Ok(mpca::fisher_scores(&matrix(features)?, &labels).map_err(to_py)?.scores)
}

/// Indices of the `k` largest scores, ties by ascending index.
#[pyfunction]
fn select_top_k(scores: Vec<f64>, k: usize) -> Vec<usize> {
    mpca::select_top_k(&scores, k).selected_indices
}

/// Affine map taking three source points onto three targets, as
/// `(linear, translation)` with points given as `(row, col)`.
#[pyfunction]
fn estimate_affine(src: [Point; 3], dst: [Point; 3]) -> PyResult<([[f64; 2]; 2], [f64; 2])> {
    let t = registration::estimate_affine(&src, &dst).map_err(to_py)?;
    Ok((t.linear, t.translation))
}

/// Writes a synthetic cohort into `out` and returns the run config path.
#[pyfunction]
#[pyo3(signature = (out, preset = "easy", subjects = 600, size = 64, phases = 20, seed = 0, resolutions = None))]
fn synthesize(
    out: PathBuf,
    preset: &str,
    subjects: usize,
    size: usize,
    phases: usize,
    seed: u64,
    resolutions: Option<Vec<usize>>,
) -> PyResult<PathBuf> {
    let preset: Preset = preset.parse().map_err(to_py)?;
    let mut spec = SynthSpec::preset(preset, subjects, size, phases, seed);
    if let Some(r) = resolutions {
        spec.resolutions = r;
    }
    std::fs::create_dir_all(&out).map_err(|e| to_py(Error::io(&out, e)))?;
    Ok(pipeline::synthesize(&spec, &out).map_err(to_py)?.config)
}

/// Runs the full pipeline and returns `{"summary", "report", "output_dir"}`.
#[pyfunction]
#[pyo3(signature = (config, output_dir = None, seed = None))]
fn run_pipeline(py: Python<'_>, config: PathBuf, output_dir: Option<PathBuf>, seed: Option<u64>) -> PyResult<Py<PyAny>> {
    let mut cfg = RunConfig::load(&config).map_err(to_py)?;
    if let Some(o) = output_dir {
        cfg.output_dir = o;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let outcome = py.detach(|| pipeline::run_pipeline(&cfg)).map_err(to_py)?;
    let value = serde_json::json!({
        "summary": outcome.summary,
        "report": outcome.report,
        "output_dir": outcome.output_dir,
    });
    json_to_py(py, &value)
}

#[pymodule]
pub fn pawp(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("PawpError", m.py().get_type::<PawpError>())?;
    m.add_class::<Mpca>()?;
    m.add_class::<LinearSvm>()?;
    m.add_function(wrap_pyfunction!(roc_auc, m)?)?;
    m.add_function(wrap_pyfunction!(mcc, m)?)?;
    m.add_function(wrap_pyfunction!(net_benefit, m)?)?;
    m.add_function(wrap_pyfunction!(dca_curve, m)?)?;
    m.add_function(wrap_pyfunction!(fisher_scores, m)?)?;
    m.add_function(wrap_pyfunction!(select_top_k, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_affine, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    Ok(())
}

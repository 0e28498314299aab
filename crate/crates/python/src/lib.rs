//! Python bindings. Matrices cross the boundary as lists of rows; reports
//! and configs as plain dicts.

use glc_core::data::{load_dataset, make_synthetic as core_synthetic, save_dataset, MultiViewDataset, Setting};
use glc_core::error::GlcError;
use glc_core::graph::{
    build_global_graph, ggc_loss as core_ggc, lwc_total, select_pairs, LocalOptions, SigmaMode, ViewEmbedding,
};
use glc_core::model::Profile;
use glc_core::nn::DenseMatrix;
use glc_core::pipeline::{self, TrainConfig};
use glc_core::rng;
use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: GlcError) -> PyErr {
    match e {
        GlcError::Io { .. } => PyOSError::new_err(e.to_string()),
        GlcError::Numeric(_) => PyArithmeticError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<DenseMatrix> {
    DenseMatrix::from_rows(&rows).map_err(to_py)
}

fn to_object<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_object<T: serde::de::DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// A multi-view dataset with its availability mask.
#[pyclass(name = "Dataset", module = "glc")]
struct PyDataset {
    inner: MultiViewDataset,
}

#[pymethods]
impl PyDataset {
    /// `views[v][i]` is sample `i` in view `v`; `mask[i][v]` marks availability.
    #[new]
    #[pyo3(signature = (views, n_clusters, labels=None, mask=None))]
    fn new(
        views: Vec<Vec<Vec<f64>>>,
        n_clusters: usize,
        labels: Option<Vec<usize>>,
        mask: Option<Vec<Vec<bool>>>,
    ) -> PyResult<Self> {
        let views = views.into_iter().map(matrix).collect::<PyResult<Vec<_>>>()?;
        let mask = match mask {
            None => None,
            Some(rows) => {
                let n = rows.len();
                let v = rows.first().map_or(0, Vec::len);
                let bits = rows.into_iter().flatten().collect();
                Some(glc_core::data::IndicatorMatrix::new(n, v, bits).map_err(to_py)?)
            }
        };
        let inner = MultiViewDataset::new(views, labels, mask, n_clusters).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: load_dataset(path).map_err(to_py)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        save_dataset(&self.inner, path).map_err(to_py).map(|_| ())
    }

    #[getter]
    fn n_samples(&self) -> usize {
        self.inner.n_samples()
    }

    #[getter]
    fn n_views(&self) -> usize {
        self.inner.n_views()
    }

    #[getter]
    fn n_clusters(&self) -> usize {
        self.inner.n_clusters
    }

    #[getter]
    fn dims(&self) -> Vec<usize> {
        self.inner.dims()
    }

    #[getter]
    fn labels(&self) -> Option<Vec<usize>> {
        self.inner.labels.clone()
    }

    #[getter]
    fn mask(&self) -> Vec<Vec<bool>> {
        (0..self.inner.n_samples())
            .map(|i| self.inner.mask.row(i).to_vec())
            .collect()
    }

    fn view(&self, v: usize) -> PyResult<Vec<Vec<f64>>> {
        self.inner
            .views
            .get(v)
            .map(DenseMatrix::to_rows)
            .ok_or_else(|| PyValueError::new_err(format!("view {v} out of range")))
    }

    /// Apply `clean`, `incomplete`, `noise` or `combined` at `rate`.
    #[pyo3(signature = (setting, rate, noise_std=0.4, seed=0))]
    fn corrupt(&self, setting: &str, rate: f64, noise_std: f64, seed: u64) -> PyResult<Self> {
        let setting: Setting = setting.parse().map_err(to_py)?;
        Ok(Self {
            inner: setting.apply(&self.inner, rate, noise_std, seed).map_err(to_py)?,
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(n_samples={}, dims={:?}, n_clusters={}, incomplete_rows={})",
            self.inner.n_samples(),
            self.inner.dims(),
            self.inner.n_clusters,
            self.inner.mask.incomplete_rows()
        )
    }
}

#[pyfunction]
#[pyo3(signature = (n, k, dims, separation=1.0, seed=0))]
fn make_synthetic(n: usize, k: usize, dims: Vec<usize>, separation: f64, seed: u64) -> PyResult<PyDataset> {
    Ok(PyDataset {
        inner: core_synthetic(n, k, &dims, separation, seed).map_err(to_py)?,
    })
}

/// Training config of a profile (`paper` or `desk`) as a dict.
#[pyfunction]
#[pyo3(signature = (profile="paper"))]
fn default_config<'py>(py: Python<'py>, profile: &str) -> PyResult<Bound<'py, PyAny>> {
    let profile: Profile = profile.parse().map_err(to_py)?;
    to_object(py, &TrainConfig::for_profile(profile))
}

/// Pretrain, train and evaluate. `config` is a dict of training keys; keys
/// left out take the paper defaults. Returns the report, history CSV and
/// resolved config.
#[pyfunction]
#[pyo3(signature = (dataset, config=None))]
fn run_experiment<'py>(
    py: Python<'py>,
    dataset: &PyDataset,
    config: Option<&Bound<'py, PyDict>>,
) -> PyResult<Bound<'py, PyDict>> {
    let config: TrainConfig = match config {
        Some(c) => from_object(c.as_any())?,
        None => TrainConfig::default(),
    };
    let ds = dataset.inner.clone();
    let result = py
        .detach(move || pipeline::run_experiment(&ds, &config))
        .map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("report", to_object(py, &result.report)?)?;
    out.set_item("history_csv", result.history.to_csv())?;
    out.set_item("config", to_object(py, &result.config)?)?;
    Ok(out)
}

#[pyfunction]
fn metrics<'py>(py: Python<'py>, pred: Vec<usize>, truth: Vec<usize>) -> PyResult<Bound<'py, PyAny>> {
    to_object(py, &pipeline::metrics(&pred, &truth).map_err(to_py)?)
}

#[pyfunction]
fn accuracy(pred: Vec<usize>, truth: Vec<usize>) -> PyResult<f64> {
    pipeline::accuracy(&pred, &truth).map_err(to_py)
}

#[pyfunction]
fn nmi(pred: Vec<usize>, truth: Vec<usize>) -> PyResult<f64> {
    pipeline::nmi(&pred, &truth).map_err(to_py)
}

#[pyfunction]
fn ari(pred: Vec<usize>, truth: Vec<usize>) -> PyResult<f64> {
    pipeline::ari(&pred, &truth).map_err(to_py)
}

/// Returns `(labels, inertia)`.
#[pyfunction]
#[pyo3(signature = (features, k, restarts=10, seed=0))]
fn kmeans(features: Vec<Vec<f64>>, k: usize, restarts: usize, seed: u64) -> PyResult<(Vec<usize>, f64)> {
    let r = pipeline::kmeans(&matrix(features)?, k, restarts, seed).map_err(to_py)?;
    Ok((r.labels, r.inertia))
}

/// Global-graph loss over the stacked features of every view.
#[pyfunction]
#[pyo3(signature = (views, pos=1.0, neg=50.0, tau=0.5))]
fn ggc_loss(views: Vec<Vec<Vec<f64>>>, pos: f64, neg: f64, tau: f64) -> PyResult<f64> {
    let views = views.into_iter().map(matrix).collect::<PyResult<Vec<_>>>()?;
    let graph = build_global_graph(&views).map_err(to_py)?;
    let pairs = select_pairs(&graph.similarity, pos, neg).map_err(to_py)?;
    core_ggc(&graph, &pairs, tau, false).map_err(to_py)
}

/// Local-graph loss between two fully paired views. `sigma=None` uses the
/// median squared cross-view distance.
#[pyfunction]
#[pyo3(signature = (h_u, h_v, tau=0.5, sigma=None))]
fn lwc_loss(h_u: Vec<Vec<f64>>, h_v: Vec<Vec<f64>>, tau: f64, sigma: Option<f64>) -> PyResult<f64> {
    let (hu, hv) = (matrix(h_u)?, matrix(h_v)?);
    if hu.rows() != hv.rows() {
        return Err(PyValueError::new_err(format!(
            "{} rows against {}",
            hu.rows(),
            hv.rows()
        )));
    }
    let positions: Vec<usize> = (0..hu.rows()).collect();
    let opts = LocalOptions {
        tau,
        sigma: sigma.map_or(SigmaMode::Median, SigmaMode::Fixed),
        normalize_weights: false,
    };
    let views = [
        ViewEmbedding {
            features: &hu,
            positions: &positions,
        },
        ViewEmbedding {
            features: &hv,
            positions: &positions,
        },
    ];
    lwc_total(&views, &opts).map_err(to_py)
}

#[pyfunction]
fn derive_seed(seed: u64, label: &str) -> u64 {
    rng::derive_seed(seed, label)
}

#[pymodule]
fn glc(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_function(wrap_pyfunction!(make_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(metrics, m)?)?;
    m.add_function(wrap_pyfunction!(accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(nmi, m)?)?;
    m.add_function(wrap_pyfunction!(ari, m)?)?;
    m.add_function(wrap_pyfunction!(kmeans, m)?)?;
    m.add_function(wrap_pyfunction!(ggc_loss, m)?)?;
    m.add_function(wrap_pyfunction!(lwc_loss, m)?)?;
    m.add_function(wrap_pyfunction!(derive_seed, m)?)?;
    Ok(())
}

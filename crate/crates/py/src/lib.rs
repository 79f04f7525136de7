//! Python bindings: networks and centralities, synthetic data, loaded
//! datasets with the link-prediction experiment, and exact Shapley values.

use std::path::PathBuf;
use std::sync::Mutex;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use refnet::centrality::{self, CentralityTable, EigenConfig};
use refnet::embed::{FeatureSet, ModelKind};
use refnet::ingest::{load_consultations, load_physicians, write_consultations, write_physicians, ConsultationRecord, IngestConfig};
use refnet::linkpred::{self, ExperimentConfig, ExperimentData};
use refnet::netbuild::{extract_interactions, interval_distribution, ExtractConfig};
use refnet::numkit::Dense;
use refnet::synth::{generate, SynthConfig};

fn err(e: refnet::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(name = "Network", module = "refnet")]
struct PyNetwork {
    inner: refnet::Network,
}

#[pymethods]
impl PyNetwork {
    #[new]
    #[pyo3(signature = (n, directed = false))]
    fn new(n: usize, directed: bool) -> Self {
        PyNetwork {
            inner: refnet::Network::new(n, directed),
        }
    }

    #[pyo3(signature = (u, v, weight = 1.0))]
    fn add_edge(&mut self, u: usize, v: usize, weight: f64) -> PyResult<()> {
        self.inner.add_edge(u, v, weight).map_err(err)
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.inner.node_count()
    }

    #[getter]
    fn edge_count(&self) -> usize {
        self.inner.edge_count()
    }

    #[getter]
    fn directed(&self) -> bool {
        self.inner.is_directed()
    }

    fn external_ids(&self) -> Vec<String> {
        self.inner.external_ids().to_vec()
    }

    fn neighbors(&self, u: usize) -> PyResult<Vec<(usize, f64)>> {
        self.inner.neighbors(u).map(<[_]>::to_vec).map_err(err)
    }

    fn edges(&self) -> Vec<(usize, usize, f64)> {
        self.inner.edges().collect()
    }

    fn degree_centrality(&self) -> PyResult<Vec<f64>> {
        centrality::degree_centrality(&self.inner).map(|c| c.values).map_err(err)
    }

    #[pyo3(signature = (tol = 1e-10, max_iter = 10_000))]
    fn eigenvector_centrality(&self, tol: f64, max_iter: usize) -> PyResult<Vec<f64>> {
        centrality::eigenvector_centrality(&self.inner, EigenConfig { tol, max_iter })
            .map(|c| c.values)
            .map_err(err)
    }

    fn betweenness_centrality(&self) -> PyResult<Vec<f64>> {
        centrality::betweenness_centrality(&self.inner).map(|c| c.values).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Network(nodes={}, edges={}, directed={})",
            self.inner.node_count(),
            self.inner.edge_count(),
            self.inner.is_directed()
        )
    }
}

/// Consultations and physicians loaded from the ingest CSVs.
#[pyclass(name = "Dataset", module = "refnet")]
struct PyDataset {
    records: Vec<ConsultationRecord>,
    data: ExperimentData,
    rejected: usize,
}

#[pymethods]
impl PyDataset {
    #[staticmethod]
    #[pyo3(signature = (consultations, physicians, max_gap_days = Some(30)))]
    fn load(py: Python<'_>, consultations: PathBuf, physicians: PathBuf, max_gap_days: Option<u32>) -> PyResult<Self> {
        py.detach(|| {
            let cfg = IngestConfig::default();
            let table = load_consultations(&consultations, cfg.window)?;
            let profiles = load_physicians(&physicians, &cfg)?;
            let extract = ExtractConfig {
                max_gap_days,
                ..ExtractConfig::default()
            };
            let data = ExperimentData::prepare(&table.records, profiles, &extract, EigenConfig::default(), cfg.window.end_year())?;
            Ok(PyDataset {
                rejected: table.rejections.len(),
                records: table.records,
                data,
            })
        })
        .map_err(err)
    }

    #[getter]
    fn consultations(&self) -> usize {
        self.records.len()
    }

    #[getter]
    fn rejected(&self) -> usize {
        self.rejected
    }

    /// `(pc, sc, unknown)` physician counts.
    fn census(&self) -> (usize, usize, usize) {
        let c = self.data.profiles.census();
        (c.pc, c.sc, c.unknown)
    }

    fn referral_network(&self) -> PyNetwork {
        PyNetwork {
            inner: self.data.referral.clone(),
        }
    }

    fn professional_network(&self) -> PyNetwork {
        PyNetwork {
            inner: self.data.professional.clone(),
        }
    }

    /// `(bucket upper edge or None for the open bucket, count, cumulative share)`
    /// over all interactions regardless of gap.
    fn interval_distribution(&self) -> PyResult<Vec<(Option<u32>, usize, f64)>> {
        let all = extract_interactions(
            &self.records,
            &self.data.profiles,
            ExtractConfig {
                max_gap_days: None,
                ..ExtractConfig::default()
            },
        );
        let d = interval_distribution(&all).map_err(err)?;
        Ok((0..d.counts.len())
            .map(|i| (d.bucket_edges.get(i).copied(), d.counts[i], d.cumulative[i]))
            .collect())
    }

    /// Professional-network centralities keyed by column name.
    fn centrality<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let c: &CentralityTable = &self.data.centrality;
        let d = PyDict::new(py);
        d.set_item("node_id", c.physician_ids.clone())?;
        d.set_item("degree", c.degree.clone())?;
        d.set_item("eigenvector", c.eigenvector.clone())?;
        d.set_item("betweenness", c.betweenness.clone())?;
        Ok(d)
    }

    /// With/without professional-network features for each model and seed;
    /// one dict per run.
    #[pyo3(signature = (seeds = vec![0], models = None))]
    fn link_prediction<'py>(
        &self,
        py: Python<'py>,
        seeds: Vec<u64>,
        models: Option<Vec<String>>,
    ) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let models: Vec<ModelKind> = match models {
            None => ModelKind::ALL.to_vec(),
            Some(m) => m.iter().map(|s| s.parse()).collect::<refnet::Result<_>>().map_err(err)?,
        };
        let runs = py
            .detach(|| {
                linkpred::run_experiment(&self.data, &models, &FeatureSet::ALL, &seeds, &ExperimentConfig::default(), "")
            })
            .map_err(err)?;
        runs.iter()
            .map(|r| {
                let d = PyDict::new(py);
                d.set_item("model", r.report.model.as_str())?;
                d.set_item("features", r.report.features.as_str())?;
                d.set_item("seed", r.report.seed)?;
                d.set_item("accuracy", r.report.accuracy)?;
                d.set_item("auc", r.report.auc)?;
                d.set_item("loss", r.report.loss)?;
                Ok(d)
            })
            .collect()
    }
}

/// Writes `consultations.csv`, `physicians.csv` and `manifest.csv` to
/// `out_dir`; returns the manifest as a dict.
#[pyfunction]
#[pyo3(signature = (out_dir, seed = 42, alpha = None, gamma = None, beta = None, patients = None))]
fn generate_synthetic<'py>(
    py: Python<'py>,
    out_dir: PathBuf,
    seed: u64,
    alpha: Option<f64>,
    gamma: Option<f64>,
    beta: Option<f64>,
    patients: Option<usize>,
) -> PyResult<Bound<'py, PyDict>> {
    let d = SynthConfig::default();
    let cfg = SynthConfig {
        seed,
        alpha: alpha.unwrap_or(d.alpha),
        gamma: gamma.unwrap_or(d.gamma),
        beta: beta.unwrap_or(d.beta),
        patients: patients.unwrap_or(d.patients),
        ..d
    };
    let out = py.detach(|| generate(&cfg)).map_err(err)?;
    let io = |e: std::io::Error| PyErr::from(e);
    std::fs::create_dir_all(&out_dir).map_err(io)?;
    let create = |name: &str| std::fs::File::create(out_dir.join(name)).map_err(io);
    write_consultations(&out.consultations, create("consultations.csv")?).map_err(err)?;
    write_physicians(&out.physicians, create("physicians.csv")?).map_err(err)?;
    out.write_manifest(create("manifest.csv")?).map_err(err)?;
    let m = PyDict::new(py);
    for (k, v) in out.manifest() {
        m.set_item(k, v)?;
    }
    Ok(m)
}

/// Exact Shapley values of `model(row) -> float` at `x` against the rows of
/// `background`, by enumerating every coalition.
#[pyfunction]
fn exact_shapley<'py>(
    py: Python<'py>,
    model: Py<PyAny>,
    x: Vec<f64>,
    background: Vec<Vec<f64>>,
) -> PyResult<Bound<'py, PyDict>> {
    let bg = Dense::from_rows(&background).map_err(err)?;
    let failure: Mutex<Option<PyErr>> = Mutex::new(None);
    let f = |row: &[f64]| -> f64 {
        Python::attach(|py| {
            model
                .call1(py, (row.to_vec(),))
                .and_then(|v| v.extract::<f64>(py))
                .unwrap_or_else(|e| {
                    failure.lock().unwrap().get_or_insert(e);
                    f64::NAN
                })
        })
    };
    let a = refnet::explain::exact_shapley(&f, &x, &bg).map_err(err)?;
    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    let d = PyDict::new(py);
    d.set_item("phi", a.phi)?;
    d.set_item("base_value", a.base_value)?;
    d.set_item("prediction", a.prediction)?;
    Ok(d)
}

#[pyfunction]
fn roc_auc(scores: Vec<f64>, labels: Vec<f64>) -> PyResult<f64> {
    linkpred::roc_auc(&scores, &labels).map_err(err)
}

#[pymodule(name = "refnet")]
fn refnet_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyNetwork>()?;
    m.add_class::<PyDataset>()?;
    m.add_function(wrap_pyfunction!(generate_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(exact_shapley, m)?)?;
    m.add_function(wrap_pyfunction!(roc_auc, m)?)?;
    Ok(())
}

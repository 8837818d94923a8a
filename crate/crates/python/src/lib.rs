//! Python bindings. Datasets cross the boundary as a feature matrix (list of
//! rows) plus `s` and `u` label lists.

use std::path::PathBuf;
use std::sync::Arc;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use otrepair::density::{DiscreteDistribution, InterpolatedSupport};
use otrepair::model::{validate_dataset, Dataset, LabeledRecord, Role};
use otrepair::repair::{self, RepairModel, Resolution};
use otrepair::{datagen, io, metrics, transport};

fn py_err(e: otrepair::Error) -> PyErr {
    PyValueError::new_err(format!("[{}] {e}", e.class()))
}

fn to_dataset(features: Vec<Vec<f64>>, s: Vec<u8>, u: Vec<u8>, role: Role) -> PyResult<Dataset> {
    if features.len() != s.len() || features.len() != u.len() {
        return Err(PyValueError::new_err("features, s and u must have the same length"));
    }
    let d = features.first().map_or(0, Vec::len);
    let records = features
        .into_iter()
        .zip(s.into_iter().zip(u))
        .map(|(x, (s, u))| LabeledRecord::new(x, s, u))
        .collect();
    validate_dataset(records, d, role).map_err(py_err)
}

fn features_of(data: &Dataset) -> Vec<Vec<f64>> {
    data.records().iter().map(|r| r.features.clone()).collect()
}

fn pmf(mass: Vec<f64>, lo: f64, hi: f64) -> PyResult<DiscreteDistribution> {
    let support = InterpolatedSupport::uniform(lo, hi, mass.len()).map_err(py_err)?;
    DiscreteDistribution::new(Arc::new(support), mass).map_err(py_err)
}

/// A designed repair model.
#[pyclass(name = "RepairModel", module = "otrepair_py", frozen)]
struct PyRepairModel {
    inner: RepairModel,
}

#[pymethods]
impl PyRepairModel {
    /// Designs plans on a research set.
    #[staticmethod]
    #[pyo3(signature = (features, s, u, n_q = 50, t = 0.5))]
    fn design(features: Vec<Vec<f64>>, s: Vec<u8>, u: Vec<u8>, n_q: usize, t: f64) -> PyResult<Self> {
        let data = to_dataset(features, s, u, Role::Research)?;
        let inner = repair::design_repair_model(&data, &Resolution::Uniform(n_q), t).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: io::load_model(&path).map_err(py_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        io::save_model(&self.inner, &path).map_err(py_err)
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d()
    }

    #[getter]
    fn feature_names(&self) -> Vec<String> {
        self.inner.metadata().feature_names.clone()
    }

    fn support(&self, u: u8, k: usize) -> PyResult<Vec<f64>> {
        self.check(u, 0, k)?;
        Ok(self.inner.slice(u, k).support().states().to_vec())
    }

    fn barycenter(&self, u: u8, k: usize) -> PyResult<Vec<f64>> {
        self.check(u, 0, k)?;
        Ok(self.inner.slice(u, k).barycenter().mass().to_vec())
    }

    /// Dense plan matrix for `(u, s, k)`.
    fn plan(&self, u: u8, s: u8, k: usize) -> PyResult<Vec<Vec<f64>>> {
        self.check(u, s, k)?;
        Ok(self.inner.slice(u, k).plan(s).dense())
    }

    /// Repairs a labelled dataset; returns the repaired feature rows.
    fn repair(&self, py: Python<'_>, features: Vec<Vec<f64>>, s: Vec<u8>, u: Vec<u8>, seed: u64) -> PyResult<Vec<Vec<f64>>> {
        let data = to_dataset(features, s, u, Role::Archive)?;
        let (out, _) = py
            .detach(|| repair::repair_dataset(&data, &self.inner, seed))
            .map_err(py_err)?;
        Ok(features_of(&out))
    }

    fn __repr__(&self) -> String {
        format!(
            "RepairModel(d={}, n_q={}, t={})",
            self.inner.d(),
            self.inner.slice(0, 0).support().len(),
            self.inner.metadata().t
        )
    }
}

impl PyRepairModel {
    fn check(&self, u: u8, s: u8, k: usize) -> PyResult<()> {
        if u > 1 || s > 1 || k >= self.inner.d() {
            return Err(PyValueError::new_err(format!("no slice (u={u}, s={s}, k={k})")));
        }
        Ok(())
    }
}

/// On-sample geometric repair of a research set.
#[pyfunction]
#[pyo3(signature = (features, s, u, t = 0.5))]
fn geometric_repair(features: Vec<Vec<f64>>, s: Vec<u8>, u: Vec<u8>, t: f64) -> PyResult<Vec<Vec<f64>>> {
    let data = to_dataset(features, s, u, Role::Research)?;
    Ok(features_of(&repair::geometric_repair(&data, t).map_err(py_err)?))
}

#[pyfunction]
#[pyo3(signature = (sample0, sample1, grid = metrics::DEFAULT_EVAL_GRID, floor = metrics::DEFAULT_DENSITY_FLOOR))]
fn symmetrized_kld(sample0: Vec<f64>, sample1: Vec<f64>, grid: usize, floor: f64) -> PyResult<f64> {
    metrics::symmetrized_kld(&sample0, &sample1, grid, floor).map_err(py_err)
}

/// Returns `(per_feature, total)`; undefined entries are `None`.
#[pyfunction]
#[pyo3(signature = (features, s, u, grid = metrics::DEFAULT_EVAL_GRID, floor = metrics::DEFAULT_DENSITY_FLOOR))]
fn conditional_fairness(
    py: Python<'_>,
    features: Vec<Vec<f64>>,
    s: Vec<u8>,
    u: Vec<u8>,
    grid: usize,
    floor: f64,
) -> PyResult<(Vec<f64>, f64)> {
    let data = to_dataset(features, s, u, Role::Research)?;
    let report = py
        .detach(|| metrics::conditional_fairness(&data, grid, floor))
        .map_err(py_err)?;
    Ok((report.per_feature, report.total))
}

/// W_p distance between two pmfs on the uniform grid `lo..=hi`.
#[pyfunction]
#[pyo3(signature = (mu, nu, lo, hi, p = 2))]
fn wasserstein(mu: Vec<f64>, nu: Vec<f64>, lo: f64, hi: f64, p: u32) -> PyResult<f64> {
    let mu = pmf(mu, lo, hi)?;
    let nu = DiscreteDistribution::new(Arc::clone(mu.support()), nu).map_err(py_err)?;
    transport::wasserstein_p(&mu, &nu, p).map_err(py_err)
}

/// The `t`-barycentre of two pmfs on the uniform grid `lo..=hi`.
#[pyfunction]
#[pyo3(signature = (mu0, mu1, lo, hi, t = 0.5))]
fn barycenter(mu0: Vec<f64>, mu1: Vec<f64>, lo: f64, hi: f64, t: f64) -> PyResult<Vec<f64>> {
    let mu0 = pmf(mu0, lo, hi)?;
    let mu1 = DiscreteDistribution::new(Arc::clone(mu0.support()), mu1).map_err(py_err)?;
    Ok(transport::barycenter(&mu0, &mu1, t).map_err(py_err)?.mass().to_vec())
}

type Split = (Vec<Vec<f64>>, Vec<u8>, Vec<u8>);

fn split_of(data: &Dataset) -> Split {
    let r = data.records();
    (features_of(data), r.iter().map(|r| r.s).collect(), r.iter().map(|r| r.u).collect())
}

/// Draws research and archive sets from the reference two-feature mixture.
#[pyfunction]
#[pyo3(signature = (seed, n_research = 500, n_archive = 5000))]
fn sample_reference(seed: u64, n_research: usize, n_archive: usize) -> PyResult<(Split, Split)> {
    let mut spec = datagen::MixtureSpec::reference(seed);
    spec.n_research = n_research;
    spec.n_archive = n_archive;
    let (research, archive) = datagen::sample_mixture(&spec).map_err(py_err)?;
    Ok((split_of(&research), split_of(&archive)))
}

#[pymodule]
mod otrepair_py {
    #[pymodule_export]
    use super::{
        barycenter, conditional_fairness, geometric_repair, sample_reference, symmetrized_kld, wasserstein,
        PyRepairModel,
    };
}

//! Python bindings for the `selab` self-energy sparsity toolkit.

use nalgebra::DMatrix;
use num_complex::Complex64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use selab::anomalous::AnomalousGreens as CoreAnomalousGreens;
use selab::contour::{convergence_study, kadanoff_baym_equilibrium};
use selab::equilibrium::{
    FiniteTemperatureGreens as CoreFiniteGreens, GreensFunction, ZeroTemperatureGreens as CoreZeroGreens,
};
use selab::gibbs::{classical_self_energy, gibbs_moments as core_gibbs_moments, GibbsInteraction, GibbsModel, GibbsPath, QuadratureParams};
use selab::linalg::CMatrix;
use selab::model::{bose_impurity, random_anomalous, random_impurity, siam, BoseImpurityParams, LoadedModel, ModelFile};
use selab::report::{fragment_mask, nambu_fragment_mask, BlockNorms};
use selab::{AnomalousModel as CoreAnomalousModel, ImpurityModel, Statistics};

fn py_err(e: selab::Error) -> PyErr {
    PyValueError::new_err(format!("[{}] {e}", e.class()))
}

type Rows = Vec<Vec<Complex64>>;

fn to_rows(m: &CMatrix) -> Rows {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

fn real_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

fn square<T: Copy + nalgebra::Scalar>(rows: &[Vec<T>], what: &str) -> PyResult<DMatrix<T>> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err(format!("{what} must be a square matrix")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn statistics(name: &str) -> PyResult<Statistics> {
    match name {
        "fermion" => Ok(Statistics::Fermion),
        "boson" => Ok(Statistics::Boson),
        other => Err(PyValueError::new_err(format!("unknown statistics {other:?}"))),
    }
}

fn norms_dict(m: &CMatrix, mask: &[bool]) -> Vec<(&'static str, f64)> {
    BlockNorms::of(m, mask).named().to_vec()
}

/// Number-conserving impurity Hamiltonian.
#[pyclass(frozen)]
struct Model(ImpurityModel);

#[pymethods]
impl Model {
    #[staticmethod]
    #[pyo3(signature = (u=2.0, eps_imp=-1.0, eps_bath=0.0, v=0.5))]
    fn siam(u: f64, eps_imp: f64, eps_bath: f64, v: f64) -> PyResult<Self> {
        siam(u, eps_imp, eps_bath, v).map(Model).map_err(py_err)
    }

    #[staticmethod]
    #[pyo3(signature = (d, u))]
    fn bose_impurity(d: usize, u: f64) -> PyResult<Self> {
        bose_impurity(BoseImpurityParams::new(d, u)).map(Model).map_err(py_err)
    }

    #[staticmethod]
    #[pyo3(signature = (d, p, seed, statistics="fermion"))]
    fn random(d: usize, p: usize, seed: u64, statistics: &str) -> PyResult<Self> {
        random_impurity(d, p, seed, self::statistics(statistics)?).map(Model).map_err(py_err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        match ModelFile::from_json(text).and_then(|f| f.into_model()).map_err(py_err)? {
            LoadedModel::Impurity(m) => Ok(Model(m)),
            LoadedModel::Anomalous(_) => Err(PyValueError::new_err("file describes an anomalous model")),
        }
    }

    fn to_json(&self) -> PyResult<String> {
        ModelFile::from_impurity(&self.0).to_json().map_err(py_err)
    }

    fn with_p(&self, p: usize) -> PyResult<Self> {
        self.0.with_p(p).map(Model).map_err(py_err)
    }

    #[getter]
    fn d(&self) -> usize {
        self.0.d()
    }

    #[getter]
    fn p(&self) -> usize {
        self.0.p()
    }

    #[getter]
    fn statistics(&self) -> &'static str {
        match self.0.statistics() {
            Statistics::Fermion => "fermion",
            Statistics::Boson => "boson",
        }
    }

    #[getter]
    fn h(&self) -> Rows {
        to_rows(self.0.h())
    }

    fn __repr__(&self) -> String {
        format!("Model(statistics={}, d={}, p={})", self.statistics(), self.0.d(), self.0.p())
    }
}

/// Green's function of the `N`-particle ground state.
#[pyclass(frozen)]
struct ZeroTemperatureGreens {
    inner: CoreZeroGreens,
    p: usize,
}

#[pymethods]
impl ZeroTemperatureGreens {
    #[new]
    fn new(model: &Model, particles: usize) -> PyResult<Self> {
        let inner = CoreZeroGreens::new(&model.0, particles).map_err(py_err)?;
        Ok(Self { inner, p: model.0.p() })
    }

    fn evaluate(&self, z: Complex64) -> PyResult<Rows> {
        self.inner.evaluate(z).map(|m| to_rows(&m)).map_err(py_err)
    }

    fn self_energy(&self, z: Complex64) -> PyResult<Rows> {
        self.inner.self_energy(z).map(|m| to_rows(&m)).map_err(py_err)
    }

    /// Frobenius norms of the self-energy blocks at `z`.
    fn block_norms(&self, z: Complex64) -> PyResult<Vec<(&'static str, f64)>> {
        let sigma = self.inner.self_energy(z).map_err(py_err)?;
        Ok(norms_dict(&sigma, &fragment_mask(self.inner.dim(), self.p)))
    }

    #[getter]
    fn poles(&self) -> Vec<f64> {
        self.inner.poles().to_vec()
    }
}

/// Grand-canonical Green's function at inverse temperature `beta`.
#[pyclass(frozen)]
struct FiniteTemperatureGreens {
    inner: CoreFiniteGreens,
    p: usize,
}

#[pymethods]
impl FiniteTemperatureGreens {
    #[new]
    #[pyo3(signature = (model, beta, mu=0.0, n_max=None))]
    fn new(model: &Model, beta: f64, mu: f64, n_max: Option<usize>) -> PyResult<Self> {
        let inner = CoreFiniteGreens::new(&model.0, beta, mu, n_max).map_err(py_err)?;
        Ok(Self { inner, p: model.0.p() })
    }

    fn evaluate(&self, z: Complex64) -> PyResult<Rows> {
        self.inner.evaluate(z).map(|m| to_rows(&m)).map_err(py_err)
    }

    fn self_energy(&self, z: Complex64) -> PyResult<Rows> {
        self.inner.self_energy(z).map(|m| to_rows(&m)).map_err(py_err)
    }

    fn block_norms(&self, z: Complex64) -> PyResult<Vec<(&'static str, f64)>> {
        let sigma = self.inner.self_energy(z).map_err(py_err)?;
        Ok(norms_dict(&sigma, &fragment_mask(self.inner.dim(), self.p)))
    }

    #[getter]
    fn n_max(&self) -> usize {
        self.inner.n_max()
    }
}

/// Model with pairing terms `Delta` on the environment.
#[pyclass(frozen)]
struct AnomalousModel(CoreAnomalousModel);

#[pymethods]
impl AnomalousModel {
    #[staticmethod]
    fn random(d: usize, p: usize, seed: u64) -> PyResult<Self> {
        random_anomalous(d, p, seed).map(AnomalousModel).map_err(py_err)
    }

    #[staticmethod]
    fn quadratic(h: Vec<Vec<Complex64>>, delta: Vec<Vec<Complex64>>, p: usize) -> PyResult<Self> {
        let h = square(&h, "h")?;
        let delta = square(&delta, "delta")?;
        CoreAnomalousModel::new(h, delta, vec![], p).map(AnomalousModel).map_err(py_err)
    }

    fn with_p(&self, p: usize) -> PyResult<Self> {
        self.0.with_p(p).map(AnomalousModel).map_err(py_err)
    }

    #[getter]
    fn d(&self) -> usize {
        self.0.d()
    }

    #[getter]
    fn p(&self) -> usize {
        self.0.p()
    }
}

/// Nambu Green's function of the ground state.
#[pyclass(frozen)]
struct AnomalousGreens {
    inner: CoreAnomalousGreens,
    p: usize,
}

#[pymethods]
impl AnomalousGreens {
    #[new]
    fn new(model: &AnomalousModel) -> PyResult<Self> {
        let inner = CoreAnomalousGreens::new(&model.0).map_err(py_err)?;
        Ok(Self { inner, p: model.0.p() })
    }

    fn evaluate(&self, z: Complex64) -> PyResult<Rows> {
        self.inner.evaluate(z).map(|m| to_rows(&m)).map_err(py_err)
    }

    fn self_energy(&self, z: Complex64) -> PyResult<Rows> {
        self.inner.self_energy(z).map(|m| to_rows(&m)).map_err(py_err)
    }

    fn block_norms(&self, z: Complex64) -> PyResult<Vec<(&'static str, f64)>> {
        let sigma = self.inner.self_energy(z).map_err(py_err)?;
        Ok(norms_dict(&sigma, &nambu_fragment_mask(self.inner.d(), self.p)))
    }

    fn redundancy_violation(&self, z: Complex64) -> PyResult<f64> {
        self.inner.redundancy_violation(z).map_err(py_err)
    }
}

/// Second moments of a classical Gibbs measure and the environment norm of
/// its self-energy.
///
/// Returns `(G, order, env_norm)`. At most one of `v` (quartic) and `j`
/// (Ising spins on the fragment) may be given.
#[pyfunction]
#[pyo3(signature = (a, p, v=None, j=None, path="factorized", tol=1e-9))]
fn gibbs_moments(
    a: Vec<Vec<f64>>,
    p: usize,
    v: Option<Vec<Vec<f64>>>,
    j: Option<Vec<Vec<f64>>>,
    path: &str,
    tol: f64,
) -> PyResult<(Vec<Vec<f64>>, usize, f64)> {
    let interaction = match (v, j) {
        (None, None) => GibbsInteraction::None,
        (Some(v), None) => GibbsInteraction::Quartic(square(&v, "v")?),
        (None, Some(j)) => GibbsInteraction::Spin(square(&j, "j")?),
        _ => return Err(PyValueError::new_err("give at most one of v and j")),
    };
    let path: GibbsPath = path.parse().map_err(py_err)?;
    let model = GibbsModel::new(square(&a, "a")?, p, interaction).map_err(py_err)?;
    let params = QuadratureParams { tol, ..QuadratureParams::default() };
    let result = core_gibbs_moments(&model, path, &params).map_err(py_err)?;
    let (_, report) = classical_self_energy(model.a(), &result.g, p, tol).map_err(py_err)?;
    Ok((real_rows(&result.g), result.order, report.max_env()))
}

/// Kadanoff-Baym convergence study; returns a dict of fitted orders and the
/// group-property violation.
#[pyfunction]
#[pyo3(signature = (model, t1, beta, intervals, t0=0.0, mu=0.0, n_max=None))]
fn contour_study(
    model: &Model,
    t1: f64,
    beta: f64,
    intervals: Vec<usize>,
    t0: f64,
    mu: f64,
    n_max: Option<usize>,
) -> PyResult<Vec<(&'static str, f64)>> {
    let (contour, ch) = kadanoff_baym_equilibrium(t0, t1, beta, &model.0, mu, None).map_err(py_err)?;
    let grids: Vec<Vec<usize>> = intervals.into_iter().map(|k| vec![k]).collect();
    let study = convergence_study(&contour, &ch, &grids, n_max, 1e-10).map_err(py_err)?;
    Ok(vec![
        ("left_order", study.left_order),
        ("right_order", study.right_order),
        ("jump_order", study.jump_order),
        ("group_violation", study.max_group_violation()),
    ])
}

/// Runs the `selab` command line with `args` (without the program name) and
/// returns its exit code.
#[pyfunction]
fn run_cli(py: Python<'_>, args: Vec<String>) -> i32 {
    let argv = std::iter::once("selab".to_string()).chain(args);
    py.detach(|| selab::cli::main_with_args(argv))
}

#[pymodule]
fn pyselab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Model>()?;
    m.add_class::<ZeroTemperatureGreens>()?;
    m.add_class::<FiniteTemperatureGreens>()?;
    m.add_class::<AnomalousModel>()?;
    m.add_class::<AnomalousGreens>()?;
    m.add_function(wrap_pyfunction!(gibbs_moments, m)?)?;
    m.add_function(wrap_pyfunction!(contour_study, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}

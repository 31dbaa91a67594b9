//! Python module `snn_solver`.

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use snn_core::geometry;
use snn_core::harness::{self, XMode};
use snn_core::linalg;
use snn_core::oracles::{self, OracleResult};
use snn_core::{Cascade, Matrix, ProblemKind, SnnError, SnnParams, SpikeMode, Vector};

create_exception!(snn_solver, SolverError, PyException);

fn err(e: SnnError) -> PyErr {
    SolverError::new_err(e.to_string())
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<Matrix> {
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(PyValueError::new_err("rows have different lengths"));
    }
    Ok(Matrix::from_row_iterator(rows.len(), m, rows.iter().flatten().copied()))
}

fn rows(f: &Matrix) -> Vec<Vec<f64>> {
    f.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn kind(name: &str, beta: Option<f64>) -> PyResult<ProblemKind> {
    match (name, beta) {
        ("nnls", _) => Ok(ProblemKind::Nnls),
        ("l1", _) => Ok(ProblemKind::L1MinNonneg),
        ("l1signed", _) => Ok(ProblemKind::L1MinSigned),
        ("lasso", Some(b)) => ProblemKind::lasso(b).map_err(err),
        ("lasso", None) => Err(PyValueError::new_err("lasso needs beta")),
        _ => Err(PyValueError::new_err(format!("unknown kind {name:?}"))),
    }
}

fn mode(name: &str) -> PyResult<SpikeMode> {
    match name {
        "signed" => Ok(SpikeMode::Signed),
        "nonneg" => Ok(SpikeMode::Nonneg),
        _ => Err(PyValueError::new_err(format!("unknown spike mode {name:?}"))),
    }
}

fn mode_name(m: SpikeMode) -> &'static str {
    match m {
        SpikeMode::Signed => "signed",
        SpikeMode::Nonneg => "nonneg",
    }
}

/// Problem data: matrix `F` (rows are neurons) and target `x`.
#[pyclass(frozen)]
struct Instance {
    inner: snn_core::Instance,
}

#[pymethods]
impl Instance {
    #[new]
    #[pyo3(signature = (f, x))]
    fn new(f: Vec<Vec<f64>>, x: Vec<f64>) -> PyResult<Self> {
        let inner = snn_core::Instance::new(matrix(&f)?, Vector::from_vec(x)).map_err(err)?;
        Ok(Self { inner })
    }

    /// Random-sphere instance; `x_mode` is `"gaussian"` or `"sparse:K"`.
    #[staticmethod]
    #[pyo3(signature = (n, m, seed, x_mode = "gaussian"))]
    fn rsm(n: usize, m: usize, seed: u64, x_mode: &str) -> PyResult<Self> {
        let x_mode = XMode::parse(x_mode).map_err(err)?;
        let (inner, _) = harness::gen_instance(n, m, seed, x_mode).map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m()
    }

    #[getter(F)]
    fn f(&self) -> Vec<Vec<f64>> {
        rows(self.inner.f())
    }

    #[getter]
    fn x(&self) -> Vec<f64> {
        self.inner.x().iter().copied().collect()
    }

    fn __repr__(&self) -> String {
        format!("Instance(n={}, m={})", self.inner.n(), self.inner.m())
    }
}

#[pyclass(frozen)]
struct Params {
    inner: SnnParams,
}

#[pymethods]
impl Params {
    #[new]
    #[pyo3(signature = (*, alpha, eta, dt, t_max, tau = 0.0, mode = "signed", exhaustive = true))]
    fn new(alpha: f64, eta: f64, dt: f64, t_max: u64, tau: f64, mode: &str, exhaustive: bool) -> PyResult<Self> {
        let inner = SnnParams {
            tau,
            alpha,
            eta,
            dt,
            mode: self::mode(mode)?,
            cascade: if exhaustive { Cascade::Exhaustive } else { Cascade::Once },
            t_max,
        };
        inner.validate().map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn tau(&self) -> f64 {
        self.inner.tau
    }
    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha
    }
    #[getter]
    fn eta(&self) -> f64 {
        self.inner.eta
    }
    #[getter]
    fn dt(&self) -> f64 {
        self.inner.dt
    }
    #[getter]
    fn t_max(&self) -> u64 {
        self.inner.t_max
    }
    #[getter]
    fn mode(&self) -> &'static str {
        mode_name(self.inner.mode)
    }

    fn __repr__(&self) -> String {
        let p = &self.inner;
        format!(
            "Params(tau={}, alpha={}, eta={}, dt={}, mode={:?}, t_max={})",
            p.tau,
            p.alpha,
            p.eta,
            p.dt,
            mode_name(p.mode),
            p.t_max
        )
    }
}

/// Parameters chosen from the instance for `kind` (`nnls`, `l1`,
/// `l1signed`, `lasso`).
#[pyfunction]
#[pyo3(signature = (inst, kind = "nnls", beta = None))]
fn auto_params(inst: &Instance, kind: &str, beta: Option<f64>) -> PyResult<Params> {
    let inner = harness::auto_params(&inst.inner, self::kind(kind, beta)?).map_err(err)?;
    Ok(Params { inner })
}

#[pyclass(frozen)]
struct Trace {
    inner: snn_core::Trace,
}

#[pymethods]
impl Trace {
    fn __len__(&self) -> usize {
        self.inner.rows.len()
    }

    /// One dict per probed step, keyed like the CSV columns.
    fn rows<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        self.inner
            .rows
            .iter()
            .map(|r| {
                let d = PyDict::new(py);
                d.set_item("step", r.step)?;
                d.set_item("time", r.time)?;
                d.set_item("residual_l2", r.residual_l2)?;
                d.set_item("l1_rate", r.l1_rate)?;
                d.set_item("cum_spikes", r.cum_spikes)?;
                d.set_item("pinv_norm_v", r.pinv_norm_v)?;
                d.set_item("dual_violation", r.dual_violation)?;
                d.set_item("conservation_defect", r.conservation_defect)?;
                Ok(d)
            })
            .collect()
    }

    #[getter]
    fn coupling_defects(&self) -> Vec<f64> {
        self.inner.diagnostics.iter().map(|d| d.coupling_defect).collect()
    }

    #[getter]
    fn last_rate(&self) -> Option<Vec<f64>> {
        self.inner.last_rate.as_ref().map(|r| r.iter().copied().collect())
    }

    fn save_csv(&self, path: std::path::PathBuf) -> PyResult<()> {
        self.inner.save_csv(&path).map_err(err)
    }
}

/// Network with its own state, advanced by `step` or run to `t_max`.
#[pyclass]
struct Network {
    net: snn_core::Network,
    state: snn_core::SnnState,
}

#[pymethods]
impl Network {
    #[new]
    fn new(inst: &Instance, params: &Params) -> PyResult<Self> {
        let net = snn_core::Network::new(&inst.inner, params.inner).map_err(err)?;
        let state = net.init();
        Ok(Self { net, state })
    }

    /// Advances one step; returns the number of cascade rounds.
    fn step(&mut self) -> PyResult<usize> {
        Ok(self.net.step(&mut self.state).map_err(err)?.cascade_rounds())
    }

    /// Runs a fresh copy of the network from zero to `t_max`.
    #[pyo3(signature = (probe_every = 1))]
    fn run(&self, py: Python<'_>, probe_every: u64) -> PyResult<Trace> {
        let net = &self.net;
        let inner = py.detach(|| net.run(probe_every)).map_err(|f| err(f.error))?;
        Ok(Trace { inner })
    }

    #[getter]
    fn steps(&self) -> u64 {
        self.state.step
    }
    #[getter]
    fn v(&self) -> Vec<f64> {
        self.state.v.iter().copied().collect()
    }
    #[getter]
    fn u(&self) -> Vec<f64> {
        self.state.u.iter().copied().collect()
    }
    #[getter]
    fn cum_spikes(&self) -> Vec<f64> {
        self.state.cum_spikes.iter().copied().collect()
    }

    fn firing_rate(&self) -> PyResult<Vec<f64>> {
        Ok(self.net.firing_rate(&self.state).map_err(err)?.iter().copied().collect())
    }

    fn conservation_defect(&self) -> PyResult<f64> {
        self.net.conservation_defect(&self.state).map_err(err)
    }

    fn coupling_defect(&self) -> f64 {
        self.net.coupling_defect(&self.state)
    }
}

fn oracle_dict<'py>(py: Python<'py>, o: OracleResult) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("r_star", o.r_star.as_slice().to_vec())?;
    d.set_item("opt_value", o.opt_value)?;
    d.set_item("residual", o.residual)?;
    d.set_item("kkt_residual", o.kkt_residual)?;
    d.set_item("iterations", o.iterations)?;
    Ok(d)
}

#[pyfunction]
#[pyo3(signature = (inst, tol = 1e-10))]
fn nnls_oracle<'py>(py: Python<'py>, inst: &Instance, tol: f64) -> PyResult<Bound<'py, PyDict>> {
    oracle_dict(py, oracles::nnls_oracle(&inst.inner, tol).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (inst, mode = "nonneg"))]
fn l1min_oracle<'py>(py: Python<'py>, inst: &Instance, mode: &str) -> PyResult<Bound<'py, PyDict>> {
    oracle_dict(py, oracles::l1min_oracle(&inst.inner, self::mode(mode)?).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (inst, beta, tol = 1e-10))]
fn lasso_oracle<'py>(py: Python<'py>, inst: &Instance, beta: f64, tol: f64) -> PyResult<Bound<'py, PyDict>> {
    oracle_dict(py, oracles::lasso_oracle(&inst.inner, beta, tol).map_err(err)?)
}

/// Niceness components of `F`; `gamma > 0` means nice.
#[pyfunction]
fn niceness<'py>(py: Python<'py>, f: Vec<Vec<f64>>) -> PyResult<Bound<'py, PyDict>> {
    let rep = geometry::niceness(&matrix(&f)?).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("gamma", rep.gamma)?;
    d.set_item("gamma_nondegen", rep.gamma_nondegen)?;
    d.set_item("gamma_vertex", rep.gamma_vertex)?;
    d.set_item("gamma_coeff", rep.gamma_coeff)?;
    d.set_item("enumerated_subsets", rep.enumerated_subsets)?;
    Ok(d)
}

/// `|| w ||` in the pseudo-inverse Gram metric of `F`.
#[pyfunction]
fn pinv_gram_norm(f: Vec<Vec<f64>>, w: Vec<f64>) -> PyResult<f64> {
    linalg::pinv_gram_norm(&matrix(&f)?, &Vector::from_vec(w)).map_err(err)
}

type CheckRow = (String, String, Option<f64>, Option<f64>);

/// Invariant checks of a trace as `(name, status, observed, tolerance)`.
#[pyfunction]
#[pyo3(signature = (trace, inst, params, kind = None, beta = None))]
fn verify(
    trace: &Trace,
    inst: &Instance,
    params: &Params,
    kind: Option<&str>,
    beta: Option<f64>,
) -> PyResult<Vec<CheckRow>> {
    let kind = kind.map(|k| self::kind(k, beta)).transpose()?;
    let rep = harness::verify(&trace.inner, &inst.inner, &params.inner, kind).map_err(err)?;
    Ok(rep
        .checks
        .into_iter()
        .map(|c| {
            let status = match c.status {
                harness::CheckStatus::Pass => "pass",
                harness::CheckStatus::Fail => "fail",
                harness::CheckStatus::NotApplicable => "n/a",
            };
            (c.name, status.to_owned(), c.observed, c.tolerance)
        })
        .collect())
}

#[pymodule]
fn snn_solver(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("SolverError", m.py().get_type::<SolverError>())?;
    m.add_class::<Instance>()?;
    m.add_class::<Params>()?;
    m.add_class::<Network>()?;
    m.add_class::<Trace>()?;
    m.add_function(wrap_pyfunction!(auto_params, m)?)?;
    m.add_function(wrap_pyfunction!(nnls_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(l1min_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(lasso_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(niceness, m)?)?;
    m.add_function(wrap_pyfunction!(pinv_gram_norm, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    Ok(())
}

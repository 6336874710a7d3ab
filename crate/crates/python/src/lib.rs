//! Python module `sysid`.
//!
//! Matrices cross the boundary as lists of rows, vectors as flat lists.
//! Library errors surface as `ValueError`.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use sysid_core::altmin::{self, AltMinOptions};
use sysid_core::asymptotics;
use sysid_core::full_obs::{self, GdOptions};
use sysid_core::partial_obs::{self, DecisionPoint, PgdOptions};
use sysid_core::realization::{self, ImpulseResponse, SystemRealization};
use sysid_core::{linalg, model, smoother, Matrix, Vector};

type Rows = Vec<Vec<f64>>;

fn err(e: sysid_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn matrix(rows: &Rows, name: &str) -> PyResult<Matrix> {
    linalg::from_rows(rows)
        .ok_or_else(|| PyValueError::new_err(format!("{name}: expected a non-empty list of equal-length rows")))
}

fn rows(m: &Matrix) -> Rows {
    linalg::to_rows(m)
}

fn vector(v: &[f64]) -> Vector {
    Vector::from_column_slice(v)
}

fn lists(vs: &[Vector]) -> Rows {
    vs.iter().map(|v| v.iter().copied().collect()).collect()
}

/// Fully observed trajectory `x_1..x_T`.
#[pyclass(frozen, from_py_object)]
#[derive(Clone)]
struct Trajectory(model::Trajectory);

#[pymethods]
impl Trajectory {
    #[new]
    fn new(states: Rows) -> PyResult<Self> {
        let states = states.iter().map(|s| vector(s)).collect();
        Ok(Self(model::Trajectory::new(states).map_err(err)?))
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn horizon(&self) -> usize {
        self.0.horizon()
    }

    #[getter]
    fn states(&self) -> Rows {
        lists(self.0.states())
    }

    fn __repr__(&self) -> String {
        format!("Trajectory(n={}, T={})", self.0.dim(), self.0.horizon())
    }
}

/// Initial state, observation matrix and observations `y_2..y_T`.
#[pyclass(frozen, from_py_object)]
#[derive(Clone)]
struct ObservedData(model::ObservedData);

#[pymethods]
impl ObservedData {
    #[new]
    #[pyo3(signature = (x, c, observations))]
    fn new(x: Vec<f64>, c: Rows, observations: Rows) -> PyResult<Self> {
        let ys = observations.iter().map(|y| vector(y)).collect();
        Ok(Self(model::ObservedData::new(vector(&x), matrix(&c, "C")?, ys).map_err(err)?))
    }

    #[staticmethod]
    fn from_trajectory(traj: &Trajectory) -> Self {
        Self(model::ObservedData::from_trajectory(&traj.0))
    }

    #[getter]
    fn state_dim(&self) -> usize {
        self.0.state_dim()
    }

    #[getter]
    fn obs_dim(&self) -> usize {
        self.0.obs_dim()
    }

    #[getter]
    fn horizon(&self) -> usize {
        self.0.horizon()
    }

    #[getter]
    fn initial(&self) -> Vec<f64> {
        self.0.initial().iter().copied().collect()
    }

    #[getter]
    fn obs_matrix(&self) -> Rows {
        rows(self.0.obs_matrix())
    }

    #[getter]
    fn observations(&self) -> Rows {
        lists(self.0.observations())
    }

    fn __repr__(&self) -> String {
        format!(
            "ObservedData(n={}, p={}, T={})",
            self.0.state_dim(),
            self.0.obs_dim(),
            self.0.horizon()
        )
    }
}

/// Per-iteration history of an iterative solver.
#[pyclass(frozen, from_py_object)]
#[derive(Clone)]
struct DescentReport(sysid_core::DescentReport);

#[pymethods]
impl DescentReport {
    #[getter]
    fn objective(&self) -> Vec<f64> {
        self.0.objective.clone()
    }

    #[getter]
    fn grad_norm(&self) -> Vec<f64> {
        self.0.grad_norm.clone()
    }

    #[getter]
    fn step(&self) -> Vec<f64> {
        self.0.step.clone()
    }

    #[getter]
    fn iterate_norm(&self) -> Vec<f64> {
        self.0.iterate_norm.clone()
    }

    #[getter]
    fn termination(&self) -> &'static str {
        match self.0.termination {
            sysid_core::Termination::Converged => "converged",
            sysid_core::Termination::MaxIters => "max_iters",
            sysid_core::Termination::Diverged => "diverged",
            sysid_core::Termination::StepSearchFailed => "step_search_failed",
        }
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.0.iterations()
    }

    #[getter]
    fn converged(&self) -> bool {
        self.0.converged()
    }

    #[getter]
    fn objective_increases(&self) -> usize {
        self.0.objective_increases
    }

    fn __repr__(&self) -> String {
        format!("DescentReport(termination={}, iterations={})", self.termination(), self.iterations())
    }
}

#[pyfunction]
fn simulate_full(a: Rows, x: Vec<f64>, horizon: usize) -> PyResult<Trajectory> {
    Ok(Trajectory(model::simulate_full(&matrix(&a, "A")?, &vector(&x), horizon).map_err(err)?))
}

#[pyfunction]
fn simulate_observed(a: Rows, c: Rows, x: Vec<f64>, horizon: usize) -> PyResult<ObservedData> {
    let data = model::simulate_observed(&matrix(&a, "A")?, &matrix(&c, "C")?, &vector(&x), horizon).map_err(err)?;
    Ok(ObservedData(data))
}

#[pyfunction]
fn least_squares(traj: &Trajectory) -> PyResult<Rows> {
    Ok(rows(&full_obs::least_squares(&traj.0).map_err(err)?))
}

#[pyfunction]
fn ridge(traj: &Trajectory, gamma: f64) -> PyResult<Rows> {
    Ok(rows(&full_obs::ridge(&traj.0, gamma).map_err(err)?))
}

/// Returns `(p_2..p_T, optimal dual value)`.
#[pyfunction]
fn dual_solve(traj: &Trajectory, gamma: f64) -> PyResult<(Rows, f64)> {
    let (coeffs, value) = full_obs::dual_solve(&traj.0, gamma).map_err(err)?;
    Ok((lists(coeffs.as_slice()), value))
}

#[pyfunction]
fn step_bound(traj: &Trajectory, gamma: f64) -> f64 {
    full_obs::step_bound(&traj.0, gamma)
}

#[pyfunction]
#[pyo3(signature = (traj, gamma, step=None, max_iters=1_000_000, grad_tol=1e-10, init=None))]
fn gradient_descent(
    traj: &Trajectory,
    gamma: f64,
    step: Option<f64>,
    max_iters: usize,
    grad_tol: f64,
    init: Option<Rows>,
) -> PyResult<(Rows, DescentReport)> {
    let opts = GdOptions {
        step,
        max_iters,
        grad_tol,
        init: init.map(|m| matrix(&m, "init")).transpose()?,
    };
    let (a, report) = full_obs::gradient_descent(&traj.0, gamma, &opts).map_err(err)?;
    Ok((rows(&a), DescentReport(report)))
}

/// Ridge estimates after each appended transition, starting from `x_1..x_start`.
#[pyfunction]
fn recursive_ridge(traj: &Trajectory, gamma: f64, start: usize) -> PyResult<Vec<Rows>> {
    let states = traj.0.states();
    if start < 2 || start > states.len() {
        return Err(PyValueError::new_err(format!("start must lie in 2..={}", states.len())));
    }
    let head = model::Trajectory::new(states[..start].to_vec()).map_err(err)?;
    let mut state = full_obs::RidgeState::from_trajectory(&head, gamma).map_err(err)?;
    let mut out = vec![rows(state.estimate())];
    for t in start..states.len() {
        state = state.recursive_update(&states[t - 1], &states[t]).map_err(err)?;
        out.push(rows(state.estimate()));
    }
    Ok(out)
}

#[pyfunction]
fn neumann_expansion(traj: &Trajectory, gamma: f64, order: usize) -> PyResult<Rows> {
    Ok(rows(&full_obs::neumann_expansion(&traj.0, gamma, order).map_err(err)?))
}

#[pyfunction]
fn min_norm_consistent(traj: &Trajectory) -> Rows {
    rows(&full_obs::min_norm_consistent(&traj.0))
}

#[pyfunction]
fn lift_estimator(data: &ObservedData, gamma: f64) -> PyResult<Rows> {
    Ok(rows(&partial_obs::lift_estimator(&data.0, gamma).map_err(err)?))
}

fn decision_point(a: &Rows, v: &Rows) -> PyResult<DecisionPoint> {
    Ok(DecisionPoint {
        a: matrix(a, "A")?,
        v: v.iter().map(|x| vector(x)).collect(),
    })
}

/// Returns `(J, dJ/dA, dJ/dv)` at `Z = (A, v)`.
#[pyfunction]
fn objective_and_gradient(a: Rows, v: Rows, data: &ObservedData, gamma: f64, mu: f64) -> PyResult<(f64, Rows, Rows)> {
    let ev = partial_obs::objective_and_gradient(&decision_point(&a, &v)?, &data.0, gamma, mu).map_err(err)?;
    Ok((ev.value, rows(&ev.gradient.a), lists(&ev.gradient.v)))
}

#[pyfunction]
fn trust_ball(data: &ObservedData, gamma: f64, mu: f64) -> PyResult<f64> {
    partial_obs::trust_ball(&data.0, gamma, mu).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (data, gamma, mu, grad_tol=1e-8, max_iters=100_000, starts=1, seed=0))]
#[allow(clippy::too_many_arguments)]
fn projected_gradient<'py>(
    py: Python<'py>,
    data: &ObservedData,
    gamma: f64,
    mu: f64,
    grad_tol: f64,
    max_iters: usize,
    starts: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let opts = PgdOptions {
        grad_tol,
        max_iters,
        ..Default::default()
    };
    let run = partial_obs::multi_start(&data.0, gamma, mu, &opts, starts.max(1), seed).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("A", rows(&run.point.a))?;
    out.set_item("v", lists(&run.point.v))?;
    out.set_item("states", lists(&run.states))?;
    out.set_item("adjoints", lists(&run.adjoints))?;
    out.set_item("stationarity", run.stationarity)?;
    out.set_item("report", DescentReport(run.report))?;
    Ok(out)
}

/// Minimizer in the states for fixed `A`: returns `(x_1..x_T, p_2..p_T)`.
#[pyfunction]
fn smoother_solve(a: Rows, data: &ObservedData, gamma: f64, mu: f64) -> PyResult<(Rows, Rows)> {
    let sol = smoother::smoother_solve(&matrix(&a, "A")?, &data.0, gamma, mu).map_err(err)?;
    Ok((lists(&sol.states), lists(&sol.adjoints)))
}

#[pyfunction]
#[pyo3(signature = (data, gamma, mu, rho=0.0, grad_tol=1e-9, max_iters=100_000, init=None))]
#[allow(clippy::too_many_arguments)]
fn alternate<'py>(
    py: Python<'py>,
    data: &ObservedData,
    gamma: f64,
    mu: f64,
    rho: f64,
    grad_tol: f64,
    max_iters: usize,
    init: Option<Rows>,
) -> PyResult<Bound<'py, PyDict>> {
    let opts = AltMinOptions {
        max_iters,
        grad_tol,
        init: init.map(|m| matrix(&m, "init")).transpose()?,
    };
    let run = altmin::alternate(&data.0, gamma, mu, rho, &opts).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("A", rows(&run.a))?;
    out.set_item("states", lists(&run.states))?;
    out.set_item("adjoints", lists(&run.adjoints))?;
    out.set_item("stationarity", run.stationarity)?;
    out.set_item("ledger_imbalance", run.ledger.iter().map(|e| e.imbalance()).collect::<Vec<_>>())?;
    out.set_item("report", DescentReport(run.report))?;
    Ok(out)
}

#[pyfunction]
fn dual_control_step(a: Rows, data: &ObservedData, gamma: f64, mu: f64) -> PyResult<Rows> {
    Ok(rows(&altmin::dual_control_step(&matrix(&a, "A")?, &data.0, gamma, mu).map_err(err)?))
}

/// Markov parameters `G_1..G_count` of `(A, B, C)`.
#[pyfunction]
fn markov_params(a: Rows, b: Rows, c: Rows, count: usize) -> PyResult<Vec<Rows>> {
    let sys = SystemRealization::new(matrix(&a, "A")?, matrix(&b, "B")?, matrix(&c, "C")?).map_err(err)?;
    let g = realization::markov_params(&sys, count).map_err(err)?;
    Ok(g.blocks()[1..].iter().map(rows).collect())
}

fn impulse_response(markov: &[Rows]) -> PyResult<ImpulseResponse> {
    let blocks = markov
        .iter()
        .enumerate()
        .map(|(t, g)| matrix(g, &format!("G_{}", t + 1)))
        .collect::<PyResult<Vec<_>>>()?;
    let first = blocks
        .first()
        .ok_or_else(|| PyValueError::new_err("need at least one Markov parameter"))?;
    let (p, m) = first.shape();
    ImpulseResponse::from_markov(m, p, blocks).map_err(err)
}

/// Minimal order from `G_1..G_N` (needs `N >= 2 max_depth + 3`), or `None`.
#[pyfunction]
#[pyo3(signature = (markov, max_depth, rank_tol=1e-9))]
fn silverman_order(markov: Vec<Rows>, max_depth: usize, rank_tol: f64) -> PyResult<Option<usize>> {
    let g = impulse_response(&markov)?;
    Ok(realization::silverman_order(&g, max_depth, rank_tol).map_err(err)?.order)
}

/// Returns `(A, B, C)` of the given order reproducing `G_1..G_N`.
#[pyfunction]
#[pyo3(signature = (markov, order, rank_tol=1e-9))]
fn minimal_realization(markov: Vec<Rows>, order: usize, rank_tol: f64) -> PyResult<(Rows, Rows, Rows)> {
    let sys = realization::minimal_realization(&impulse_response(&markov)?, order, rank_tol).map_err(err)?;
    Ok((rows(&sys.a), rows(&sys.b), rows(&sys.c)))
}

/// First-order coefficient `A_1` of `A^gamma = Abar + A_1 / gamma + ...`.
#[pyfunction]
fn first_order_correction(abar: Rows, c: Rows, x: Vec<f64>, horizon: usize) -> PyResult<Rows> {
    let fo = asymptotics::first_order_correction(&matrix(&abar, "Abar")?, &matrix(&c, "C")?, &vector(&x), horizon)
        .map_err(err)?;
    Ok(rows(&fo.a1))
}

#[pyfunction]
fn expansion_validation<'py>(
    py: Python<'py>,
    abar: Rows,
    c: Rows,
    x: Vec<f64>,
    horizon: usize,
    gammas: Vec<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let diag = asymptotics::expansion_validation(
        &matrix(&abar, "Abar")?,
        &matrix(&c, "C")?,
        &vector(&x),
        horizon,
        &gammas,
        &AltMinOptions::default(),
    )
    .map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("min_norm", rows(&diag.min_norm))?;
    out.set_item("A1", diag.a1.as_ref().map(rows))?;
    out.set_item("estimates", diag.points.iter().map(|p| rows(&p.estimate)).collect::<Vec<_>>())?;
    out.set_item("distance", diag.points.iter().map(|p| p.distance_to_min_norm).collect::<Vec<_>>())?;
    out.set_item("relative_gap", diag.points.iter().map(|p| p.relative_gap).collect::<Vec<_>>())?;
    out.set_item("top_gap", diag.top_gap)?;
    out.set_item("monotone_distance", diag.monotone_distance)?;
    Ok(out)
}

#[pymodule]
fn sysid(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", sysid_core::VERSION)?;
    m.add_class::<Trajectory>()?;
    m.add_class::<ObservedData>()?;
    m.add_class::<DescentReport>()?;
    m.add_function(wrap_pyfunction!(simulate_full, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_observed, m)?)?;
    m.add_function(wrap_pyfunction!(least_squares, m)?)?;
    m.add_function(wrap_pyfunction!(ridge, m)?)?;
    m.add_function(wrap_pyfunction!(dual_solve, m)?)?;
    m.add_function(wrap_pyfunction!(step_bound, m)?)?;
    m.add_function(wrap_pyfunction!(gradient_descent, m)?)?;
    m.add_function(wrap_pyfunction!(recursive_ridge, m)?)?;
    m.add_function(wrap_pyfunction!(neumann_expansion, m)?)?;
    m.add_function(wrap_pyfunction!(min_norm_consistent, m)?)?;
    m.add_function(wrap_pyfunction!(lift_estimator, m)?)?;
    m.add_function(wrap_pyfunction!(objective_and_gradient, m)?)?;
    m.add_function(wrap_pyfunction!(trust_ball, m)?)?;
    m.add_function(wrap_pyfunction!(projected_gradient, m)?)?;
    m.add_function(wrap_pyfunction!(smoother_solve, m)?)?;
    m.add_function(wrap_pyfunction!(alternate, m)?)?;
    m.add_function(wrap_pyfunction!(dual_control_step, m)?)?;
    m.add_function(wrap_pyfunction!(markov_params, m)?)?;
    m.add_function(wrap_pyfunction!(silverman_order, m)?)?;
    m.add_function(wrap_pyfunction!(minimal_realization, m)?)?;
    m.add_function(wrap_pyfunction!(first_order_correction, m)?)?;
    m.add_function(wrap_pyfunction!(expansion_validation, m)?)?;
    Ok(())
}

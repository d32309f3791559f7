//! Python bindings for `kahler_flow`.

use std::path::PathBuf;

use pyo3::exceptions::{PyArithmeticError, PyIOError, PyValueError};
use pyo3::prelude::*;

use kahler_flow::chern;
use kahler_flow::cli::{self, RunConfig, Suite};
use kahler_flow::flow::{self, FlowState, StepControl};
use kahler_flow::functionals;
use kahler_flow::models::{self, ModelId, ModelParams, ModelSpec};
use kahler_flow::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        Error::StepSizeUnderflow { .. } | Error::NonFiniteValue(_) | Error::PositivityLost { .. } => {
            PyArithmeticError::new_err(e.to_string())
        }
        other => PyValueError::new_err(other.to_string()),
    }
}

/// A catalog model with its class data.
#[pyclass(name = "Model", module = "kahler_flow_py", frozen)]
struct PyModel {
    spec: ModelSpec,
}

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (name, *, genus=None, v_e=None, a0=None, b0=None, c0=None, epsilon=None, lambda_=None, grid_points=None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        name: &str,
        genus: Option<u32>,
        v_e: Option<f64>,
        a0: Option<f64>,
        b0: Option<f64>,
        c0: Option<f64>,
        epsilon: Option<f64>,
        lambda_: Option<f64>,
        grid_points: Option<usize>,
    ) -> PyResult<Self> {
        let id: ModelId = name.parse().map_err(to_py)?;
        let d = ModelParams::default();
        let params = ModelParams {
            genus: genus.unwrap_or(d.genus),
            v_e: v_e.unwrap_or(d.v_e),
            a0: a0.unwrap_or(d.a0),
            b0: b0.unwrap_or(d.b0),
            c0: c0.unwrap_or(d.c0),
            epsilon: epsilon.unwrap_or(d.epsilon),
            lambda: lambda_.unwrap_or(d.lambda),
            grid_points,
        };
        let spec = ModelSpec::build(id, &params).map_err(to_py)?;
        Ok(Self { spec })
    }

    #[getter]
    fn name(&self) -> &'static str {
        self.spec.id.as_str()
    }

    #[getter]
    fn dimension(&self) -> usize {
        self.spec.n
    }

    #[getter]
    fn nef(&self) -> bool {
        self.spec.nef_flag
    }

    #[getter]
    fn big(&self) -> bool {
        self.spec.big_flag
    }

    #[getter]
    fn semi_positive(&self) -> bool {
        self.spec.semi_positive_flag
    }

    #[getter]
    fn is_grid(&self) -> bool {
        self.spec.is_grid()
    }

    /// Coefficients of `2π c₁(K_X)` in the `H^{1,1}` basis.
    #[getter]
    fn k_class(&self) -> Vec<f64> {
        self.spec.k_class.coeffs.clone()
    }

    /// Coefficients of `[ω_t]`.
    fn class_at(&self, t: f64) -> Vec<f64> {
        chern::class_trajectory(&self.spec, t).coeffs
    }

    fn numerical_dimension(&self) -> PyResult<usize> {
        chern::numerical_dimension(&self.spec).map_err(to_py)
    }

    /// First time `[ω_t]` leaves the Kähler cone, if before `horizon`.
    #[pyo3(signature = (horizon=f64::INFINITY))]
    fn cone_exit(&self, horizon: f64) -> Option<f64> {
        flow::detect_cone_exit(&self.spec, horizon)
    }

    /// Exact potential at `t` on models with a closed form.
    fn oracle(&self, t: f64) -> PyResult<Vec<f64>> {
        models::oracle_solution(&self.spec, t).map_err(to_py)
    }

    /// `(topological, curvature_integral, lower_bound, c2_integral, c1_sq_integral)`
    /// for the initial metric.
    fn my_number(&self) -> PyResult<(f64, f64, f64, f64, f64)> {
        let state = FlowState::initial(&self.spec).map_err(to_py)?;
        report_tuple(&self.spec, &state)
    }

    fn __repr__(&self) -> String {
        format!("Model({:?})", self.spec.id.as_str())
    }
}

fn report_tuple(spec: &ModelSpec, state: &FlowState) -> PyResult<(f64, f64, f64, f64, f64)> {
    let r = chern::my_number(spec, &state.metric).map_err(to_py)?;
    Ok((
        r.my_topological,
        r.my_curvature_integral,
        r.my_lower_bound,
        r.c2_integral,
        r.c1_sq_integral,
    ))
}

/// A flow trajectory that can be advanced in place.
#[pyclass(name = "Flow", module = "kahler_flow_py")]
struct PyFlow {
    spec: ModelSpec,
    ctl: StepControl,
    state: FlowState,
}

#[pymethods]
impl PyFlow {
    #[new]
    #[pyo3(signature = (model, dt=1e-3))]
    fn new(model: &PyModel, dt: f64) -> PyResult<Self> {
        let spec = model.spec.clone();
        let ctl = StepControl::new(dt).map_err(to_py)?;
        let state = FlowState::initial(&spec).map_err(to_py)?;
        Ok(Self { spec, ctl, state })
    }

    #[getter]
    fn t(&self) -> f64 {
        self.state.t
    }

    /// Ansatz coefficients or grid potential, row-major.
    #[getter]
    fn phi(&self) -> Vec<f64> {
        self.state.phi.clone()
    }

    #[getter]
    fn scalar_l2_accum(&self) -> f64 {
        self.state.ledger.scalar_l2_accum
    }

    #[getter]
    fn ricci_l2_accum(&self) -> f64 {
        self.state.ledger.ricci_l2_accum
    }

    fn step(&mut self, py: Python<'_>) -> PyResult<f64> {
        let next = py
            .detach(|| flow::step(&self.spec, &self.state, &self.ctl))
            .map_err(to_py)?;
        self.state = next;
        Ok(self.state.t)
    }

    fn advance_to(&mut self, py: Python<'_>, t_end: f64) -> PyResult<f64> {
        let current = self.state.clone();
        let next = py
            .detach(|| flow::advance_to(&self.spec, current, t_end, &self.ctl))
            .map_err(to_py)?;
        self.state = next;
        Ok(self.state.t)
    }

    fn volume(&self) -> f64 {
        self.state.metric.volume_weights().iter().sum()
    }

    fn energy(&self) -> PyResult<f64> {
        functionals::dirichlet_energy(&self.state, &self.spec.refvol).map_err(to_py)
    }

    /// The three terms whose sum is `dE/dt`.
    fn abc(&self) -> PyResult<(f64, f64, f64)> {
        let [a, b, c] = functionals::abc_decomposition(&self.state, &self.spec).map_err(to_py)?;
        Ok((a, b, c))
    }

    fn my_number(&self) -> PyResult<(f64, f64, f64, f64, f64)> {
        report_tuple(&self.spec, &self.state)
    }
}

/// Names of the catalog models.
#[pyfunction]
fn model_names() -> Vec<&'static str> {
    ModelId::ALL.iter().map(|m| m.as_str()).collect()
}

/// Runs the flow from a config file; returns `(exit_code, summary)`.
#[pyfunction]
#[pyo3(signature = (config, out=None))]
fn run(py: Python<'_>, config: PathBuf, out: Option<PathBuf>) -> PyResult<(i32, Vec<(String, String)>)> {
    let mut cfg = RunConfig::load(&config).map_err(to_py)?;
    if let Some(out) = out {
        cfg.out_dir = out;
    }
    let outcome = py.detach(|| cli::run(&cfg)).map_err(to_py)?;
    Ok((outcome.exit_code(), outcome.summary))
}

/// `(status, model, check, measured, tolerance)`.
type CheckRow = (String, String, String, f64, f64);

/// Runs a verification suite; returns one row per check.
#[pyfunction]
fn verify(py: Python<'_>, suite: &str) -> PyResult<Vec<CheckRow>> {
    let mut cfg = RunConfig::new(ModelId::FlatTorus);
    cfg.suite = suite.parse::<Suite>().map_err(to_py)?;
    let results = py.detach(|| cli::verify(&cfg)).map_err(to_py)?;
    Ok(results
        .into_iter()
        .map(|r| {
            let status = match r.status {
                cli::CheckStatus::Pass => "PASS".to_string(),
                cli::CheckStatus::Fail => "FAIL".to_string(),
                cli::CheckStatus::Skipped(why) => format!("SKIPPED: {why}"),
            };
            (status, r.model.to_string(), r.name, r.measured, r.tolerance)
        })
        .collect())
}

#[pymodule]
fn kahler_flow_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_class::<PyFlow>()?;
    m.add_function(wrap_pyfunction!(model_names, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    Ok(())
}

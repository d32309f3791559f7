//! Verification suites over the model catalog.
//!
//! Each suite runs every applicable model as an independent case; cases run
//! on up to [`thread_count`](super::thread_count) threads and results are
//! reported in catalog order.

use std::f64::consts::PI;
use std::fmt;

use super::{thread_count, RunConfig, Suite, EXIT_ASSERTION, EXIT_OK};
use crate::chern;
use crate::error::{Error, Result};
use crate::flow::{self, FlowState, StepControl};
use crate::functionals::{self, AccumulatorLedger};
use crate::geometry;
use crate::models::{self, ModelId, ModelParams, ModelSpec};

#[derive(Debug, Clone, PartialEq)]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub suite: Suite,
    pub model: ModelId,
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub status: CheckStatus,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.status {
            CheckStatus::Skipped(why) => write!(f, "SKIPPED {} {} {}: {why}", self.suite, self.model, self.name),
            status => write!(
                f,
                "{} {} {} {} measured={:.6e} tolerance={:.6e}",
                if *status == CheckStatus::Pass { "PASS" } else { "FAIL" },
                self.suite,
                self.model,
                self.name,
                self.measured,
                self.tolerance
            ),
        }
    }
}

/// Collects results for one model case.
struct Case {
    suite: Suite,
    model: ModelId,
    results: Vec<CheckResult>,
}

impl Case {
    fn new(suite: Suite, model: ModelId) -> Self {
        Self {
            suite,
            model,
            results: Vec::new(),
        }
    }

    fn push(&mut self, name: &str, measured: f64, tolerance: f64, pass: bool) {
        self.results.push(CheckResult {
            suite: self.suite,
            model: self.model,
            name: name.to_string(),
            measured,
            tolerance,
            status: if pass { CheckStatus::Pass } else { CheckStatus::Fail },
        });
    }

    /// `measured ≤ tolerance`.
    fn at_most(&mut self, name: &str, measured: f64, tolerance: f64) {
        self.push(name, measured, tolerance, measured <= tolerance);
    }

    /// `measured ∈ [lo, hi]`, reported with the half-width as tolerance.
    fn within(&mut self, name: &str, measured: f64, lo: f64, hi: f64) {
        self.push(name, measured, hi, (lo..=hi).contains(&measured));
    }

    fn skip(&mut self, name: &str, why: String) {
        self.results.push(CheckResult {
            suite: self.suite,
            model: self.model,
            name: name.to_string(),
            measured: f64::NAN,
            tolerance: f64::NAN,
            status: CheckStatus::Skipped(why),
        });
    }

    fn error(&mut self, name: &str, err: &Error) {
        self.results.push(CheckResult {
            suite: self.suite,
            model: self.model,
            name: format!("{name} ({err})"),
            measured: f64::NAN,
            tolerance: f64::NAN,
            status: CheckStatus::Fail,
        });
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

/// Runs `config.suite` over the catalog with `config.params`.
pub fn verify(config: &RunConfig) -> Result<Vec<CheckResult>> {
    if config.suite == Suite::Run {
        return Err(Error::ConfigInvalid("verify needs a verify-* suite".into()));
    }
    run_suite(config.suite, &config.params)
}

pub fn run_suite(suite: Suite, params: &ModelParams) -> Result<Vec<CheckResult>> {
    let ids = ModelId::ALL;
    // build everything first so configuration errors surface before any work
    let models: Vec<ModelSpec> = ids
        .iter()
        .map(|id| ModelSpec::build(*id, params))
        .collect::<Result<_>>()?;
    let threads = thread_count().min(models.len()).max(1);
    let mut slots: Vec<Option<Vec<CheckResult>>> = vec![None; models.len()];
    std::thread::scope(|scope| {
        for (chunk_models, chunk_slots) in models
            .chunks(models.len().div_ceil(threads))
            .zip(slots.chunks_mut(models.len().div_ceil(threads)))
        {
            scope.spawn(move || {
                for (m, slot) in chunk_models.iter().zip(chunk_slots.iter_mut()) {
                    *slot = Some(run_case(suite, m));
                }
            });
        }
    });
    Ok(slots.into_iter().flatten().flatten().collect())
}

pub fn exit_code(results: &[CheckResult]) -> i32 {
    if results.iter().any(|r| r.status == CheckStatus::Fail) {
        EXIT_ASSERTION
    } else {
        EXIT_OK
    }
}

fn run_case(suite: Suite, model: &ModelSpec) -> Vec<CheckResult> {
    let mut case = Case::new(suite, model.id);
    let outcome = match suite {
        Suite::VerifyChern => chern_case(model, &mut case),
        Suite::VerifyEvolution => evolution_case(model, &mut case),
        Suite::VerifyBounds => bounds_case(model, &mut case),
        Suite::VerifyExistence => existence_case(model, &mut case),
        Suite::Run => Ok(()),
    };
    if let Err(e) = outcome {
        case.error("case", &e);
    }
    case.results
}

/// `2(n+1)c₂ - n c₁²` for the catalog surfaces.
pub fn expected_my_number(model: &ModelSpec) -> f64 {
    match model.id {
        ModelId::Cp2Round => 0.0,
        ModelId::ProductSigmaSigma => {
            let g1 = model.params.genus as f64 - 1.0;
            8.0 * g1 * g1
        }
        ModelId::ProductESigma | ModelId::FlatTorus | ModelId::AbelianPerturbed => 0.0,
    }
}

/// Tolerance on Chern-Weil integrals, relative to the larger of 1 and the
/// expected value.
fn chern_tolerance(scale: f64) -> f64 {
    1e-8 * scale.abs().max(1.0)
}

fn chern_case(model: &ModelSpec, case: &mut Case) -> Result<()> {
    case.at_most(
        "my_topological_value",
        (model.c2_topological * 6.0 - 2.0 * model.c1_sq_topological() - expected_my_number(model)).abs(),
        1e-12,
    );
    let times: &[f64] = match model.id {
        ModelId::Cp2Round => &[0.0, 0.02, 0.04],
        ModelId::AbelianPerturbed | ModelId::FlatTorus => &[0.0],
        _ => &[0.0, 0.5, 3.0],
    };
    let ctl = StepControl::new(1e-3)?;
    let mut state = FlowState::initial(model)?;
    for &t in times {
        state = flow::advance_to(model, state, t, &ctl)?;
        let rep = chern::my_number(model, &state.metric)?;
        let tol = chern_tolerance(rep.my_topological);
        case.at_most(
            &format!("my_identity t={t}"),
            (rep.my_topological - rep.my_curvature_integral).abs(),
            tol,
        );
        case.at_most(
            &format!("c2_integral t={t}"),
            (rep.c2_integral - model.c2_topological).abs(),
            chern_tolerance(model.c2_topological),
        );
        case.at_most(
            &format!("c1_sq_integral t={t}"),
            (rep.c1_sq_integral - model.c1_sq_topological()).abs(),
            chern_tolerance(model.c1_sq_topological()),
        );
        case.at_most(
            &format!("my_lower_bound t={t}"),
            rep.my_lower_bound - rep.my_curvature_integral,
            1e-10 * rep.my_curvature_integral.abs().max(1.0),
        );
    }
    Ok(())
}

/// Scalar and volume residuals of the abelian model with `points` per axis,
/// over `[t0, t0 + delta]` with integrator step `delta / 2`.
pub fn abelian_residuals(params: &ModelParams, points: usize, t0: f64, delta: f64) -> Result<(f64, f64)> {
    let m = ModelSpec::build(
        ModelId::AbelianPerturbed,
        &ModelParams {
            grid_points: Some(points),
            ..params.clone()
        },
    )?;
    let start = flow::advance_to(&m, FlowState::initial(&m)?, t0, &StepControl::new(delta.min(0.01))?)?;
    let ctl = StepControl::new(delta / 2.0)?;
    let next = flow::advance_to(&m, start.clone(), t0 + delta, &ctl)?;
    flow::evolution_residuals(&m, &next, &start, &ctl)
}

/// Ratios of successive residuals under grid doubling.
pub fn spatial_factors(residuals: &[f64]) -> Vec<f64> {
    residuals.windows(2).map(|w| w[0] / w[1]).collect()
}

/// Observed orders `log₂((r(Δ) - r(Δ/2)) / (r(Δ/2) - r(Δ/4)))` from residuals
/// at halving `Δ`; differencing removes the `Δ`-independent spatial floor.
pub fn observed_orders(residuals: &[f64]) -> Vec<f64> {
    let diffs: Vec<f64> = residuals.windows(2).map(|w| w[0] - w[1]).collect();
    diffs.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

pub const SPATIAL_POINTS: [usize; 3] = [16, 32, 64];
pub const ORDER_DELTAS: [f64; 4] = [0.04, 0.02, 0.01, 0.005];
pub const ORDER_T0: f64 = 0.1;

fn evolution_case(model: &ModelSpec, case: &mut Case) -> Result<()> {
    if model.ansatz().is_some() {
        // the interval shrinks with the time left before a cone exit, where
        // curvature blows up like 1/(T - t)
        let (t0, delta) = match flow::detect_cone_exit(model, f64::INFINITY) {
            Some(exit) => (0.0, 2e-3 * exit),
            None => (0.5, 0.01),
        };
        let ctl = StepControl::new(delta.min(1e-3))?;
        let prev = flow::advance_to(model, FlowState::initial(model)?, t0, &ctl)?;
        let next = flow::advance_to(model, prev.clone(), t0 + delta, &ctl)?;
        let (sr, vr) = flow::evolution_residuals(model, &next, &prev, &ctl)?;
        case.at_most("scalar_residual", sr, 1e-8);
        case.at_most("volume_residual", vr, 1e-8);
        // closed-form trajectory
        let horizon = match flow::detect_cone_exit(model, 10.0) {
            Some(t) => 0.9 * t,
            None => 10.0,
        };
        let ctl = StepControl::new(1e-3)?;
        let mut state = FlowState::initial(model)?;
        let mut worst: f64 = 0.0;
        let samples = 100;
        for k in 1..=samples {
            let t = horizon * k as f64 / samples as f64;
            state = flow::advance_to(model, state, t, &ctl)?;
            let exact = models::oracle_solution(model, t)?;
            for (a, b) in state.phi.iter().zip(&exact) {
                worst = worst.max(((a - b) / b).abs());
            }
        }
        case.at_most("closed_form_trajectory", worst, 1e-8);
        return Ok(());
    }
    match model.id {
        ModelId::FlatTorus => {
            let ctl = StepControl::new(0.01)?;
            let prev = FlowState::initial(model)?;
            let next = flow::advance_to(model, prev.clone(), 0.01, &ctl)?;
            let (sr, vr) = flow::evolution_residuals(model, &next, &prev, &ctl)?;
            case.at_most("scalar_residual", sr, 1e-12);
            case.at_most("volume_residual", vr, 1e-12);
        }
        ModelId::AbelianPerturbed => {
            let p = &model.params;
            let (sr, vr) = abelian_residuals(p, 64, 0.0, 1e-4)?;
            case.at_most("scalar_residual N=64", sr, 1e-3);
            case.at_most("volume_residual N=64", vr, 1e-3);
            let mut scalar = Vec::new();
            let mut volume = Vec::new();
            for n in SPATIAL_POINTS {
                let (s, v) = abelian_residuals(p, n, 0.0, 1e-4)?;
                scalar.push(s);
                volume.push(v);
            }
            for (i, f) in spatial_factors(&scalar).into_iter().enumerate() {
                case.within(&format!("scalar_spatial_factor {}", SPATIAL_POINTS[i]), f, 8.0, 32.0);
            }
            for (i, f) in spatial_factors(&volume).into_iter().enumerate() {
                case.within(&format!("volume_spatial_factor {}", SPATIAL_POINTS[i]), f, 8.0, 32.0);
            }
            let mut by_dt = Vec::new();
            for d in ORDER_DELTAS {
                by_dt.push(abelian_residuals(p, 64, ORDER_T0, d)?.0);
            }
            for (i, q) in observed_orders(&by_dt).into_iter().enumerate() {
                case.within(&format!("time_order dt={}", ORDER_DELTAS[i]), q, 3.0, 5.0);
            }
        }
        _ => {}
    }
    Ok(())
}

/// `2b₀V ln a₀ / (a₀ - 1)`, the infinite-horizon scalar accumulator of E×Σ.
pub fn product_scalar_integral(params: &ModelParams) -> f64 {
    let v = params.v_e * 4.0 * PI * (params.genus as f64 - 1.0);
    let a0 = params.a0;
    if (a0 - 1.0).abs() < 1e-12 {
        2.0 * params.b0 * v
    } else {
        2.0 * params.b0 * v * a0.ln() / (a0 - 1.0)
    }
}

/// Runs to `horizon`, recording `E_t` at `t = 0`, and returns the state and
/// the accumulators sampled at `checkpoints`.
fn accumulate(
    model: &ModelSpec,
    ctl: &StepControl,
    horizon: f64,
    checkpoints: &[f64],
) -> Result<(FlowState, Vec<(f64, f64)>)> {
    let mut state = FlowState::initial(model)?;
    let e0 = functionals::dirichlet_energy(&state, &model.refvol)?;
    let abc = functionals::abc_decomposition(&state, model)?;
    state.ledger.record_sample(0.0, e0, abc);
    let mut samples = vec![(0.0, 0.0)];
    for &t in checkpoints.iter().filter(|t| **t > 0.0 && **t < horizon) {
        state = flow::advance_to(model, state, t, ctl)?;
        samples.push((t, state.ledger.scalar_l2_accum));
    }
    state = flow::advance_to(model, state, horizon, ctl)?;
    samples.push((horizon, state.ledger.scalar_l2_accum));
    Ok((state, samples))
}

fn bounds_case(model: &ModelSpec, case: &mut Case) -> Result<()> {
    if !model.nef_flag {
        case.skip("reduction_slack", "not nef".into());
        case.skip("scalar_bound", "hypothesis violated: not nef".into());
        return Ok(());
    }
    let ctl = StepControl::new(if model.is_grid() { 0.01 } else { 1e-3 })?;
    let (state10, samples) = accumulate(model, &ctl, 10.0, &(1..20).map(|k| 0.5 * k as f64).collect::<Vec<_>>())?;
    let red = functionals::check_reduction_inequality(&AccumulatorLedger::default(), &state10.ledger, model, 0.0, 10.0)?;
    case.push("reduction_slack [0,10]", red.slack, 1e-6, red.slack >= -1e-6);

    let horizon = if model.id == ModelId::ProductESigma { 30.0 } else { 10.0 };
    let state = if horizon > 10.0 {
        flow::advance_to(model, state10, horizon, &ctl)?
    } else {
        state10
    };
    match functionals::check_scalar_theorem(&state.ledger, model, horizon) {
        Ok(rep) => {
            let tol = 1e-6 * rep.bound.abs().max(1.0);
            case.push(
                &format!("scalar_bound horizon={horizon}"),
                rep.scalar_theorem_slack,
                tol,
                rep.scalar_theorem_slack >= -tol,
            );
        }
        Err(Error::HypothesisViolated(why)) => case.skip("scalar_bound", format!("hypothesis violated: {why}")),
        Err(e) => return Err(e),
    }
    match model.id {
        ModelId::ProductESigma => {
            let exact = product_scalar_integral(&model.params);
            case.at_most(
                "scalar_accumulator_closed_form",
                ((state.ledger.scalar_l2_accum - exact) / exact).abs(),
                1e-6,
            );
        }
        ModelId::FlatTorus => {
            case.at_most("scalar_accumulator_zero", state.ledger.scalar_l2_accum.abs(), 0.0);
        }
        ModelId::AbelianPerturbed => {
            let fit = functionals::exponential_tail_fit(&samples);
            case.push("scalar_tail_rate", fit.rate, 0.5, fit.rate >= 0.5);
        }
        _ => {}
    }
    Ok(())
}

pub const EXISTENCE_HORIZON: f64 = 50.0;

fn existence_case(model: &ModelSpec, case: &mut Case) -> Result<()> {
    let ctl = if model.is_grid() {
        StepControl::new(0.05)?
    } else {
        StepControl::new(1e-3)?
    };
    let failure = flow::integrator_failure_time(model, &ctl, EXISTENCE_HORIZON)?;
    if model.nef_flag {
        case.push(
            "runs_to_horizon",
            failure.unwrap_or(EXISTENCE_HORIZON),
            EXISTENCE_HORIZON,
            failure.is_none(),
        );
    } else {
        let predicted = flow::detect_cone_exit(model, EXISTENCE_HORIZON);
        match (failure, predicted) {
            (Some(t), Some(p)) => case.at_most("failure_near_cone_exit", ((t - p) / p).abs(), 0.05),
            _ => case.push("failure_near_cone_exit", f64::NAN, 0.05, false),
        }
        if model.id == ModelId::Cp2Round {
            let lambda = model.params.lambda;
            let exact = ((lambda + 6.0 * PI) / (6.0 * PI)).ln();
            case.at_most(
                "cone_exit_formula",
                rel(predicted.unwrap_or(f64::NAN), exact),
                1e-12,
            );
        }
    }
    // gauge volume is the class volume along the way
    let state = flow::advance_to(model, FlowState::initial(model)?, 0.02, &ctl)?;
    let vol = geometry::integrate(&vec![1.0; state.metric.num_points()], &state.metric)?;
    let alpha = chern::class_trajectory(model, state.t);
    let class_vol = chern::pair_powers(&alpha, 0, &alpha, &model.intersection_form)?;
    case.at_most(
        "volume_vs_class t=0.02",
        ((vol - class_vol) / class_vol).abs(),
        if model.is_grid() { 1e-3 } else { 1e-8 },
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_and_factor_arithmetic() {
        let r: Vec<f64> = [1.0f64, 0.5, 0.25, 0.125].iter().map(|d| 3.0 * d.powi(4) + 1e-3).collect();
        for q in observed_orders(&r) {
            assert!((q - 4.0).abs() < 1e-9);
        }
        assert_eq!(spatial_factors(&[16.0, 1.0]), vec![16.0]);
    }

    #[test]
    fn product_closed_form_default() {
        let v = product_scalar_integral(&ModelParams::default());
        assert!((v - 8.0 * PI * 2f64.ln()).abs() < 1e-12);
        assert!((v - 17.420_688_722_428_8).abs() < 1e-12);
    }

    #[test]
    fn display_lines() {
        let r = CheckResult {
            suite: Suite::VerifyChern,
            model: ModelId::Cp2Round,
            name: "x".into(),
            measured: 1.0,
            tolerance: 2.0,
            status: CheckStatus::Pass,
        };
        assert!(r.to_string().starts_with("PASS verify-chern cp2_round x measured="));
        let s = CheckResult {
            status: CheckStatus::Skipped("big".into()),
            ..r
        };
        assert_eq!(s.to_string(), "SKIPPED verify-chern cp2_round x: big");
    }
}

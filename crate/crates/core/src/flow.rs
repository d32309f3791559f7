//! Time integration of the normalized Kähler-Ricci flow `∂ω = -Ric(ω) - ω`.
//!
//! Ansatz models integrate the exact reduced system `c_i' = -ρ_i - c_i` with
//! classical RK4.
//!
//! Grid models (trivial canonical class) carry the rescaled potential `u`
//! with `ω_t = e^{-t}(ω_flat + i∂∂̄u)`, so `[ω_t] = α_t` for every `u`. The
//! flow becomes `u_t = e^t log det(I + H(u))` where `H = ¼ Hess u` is the
//! complex Hessian. Splitting `log det(I + H) = L u + N(u)` with the linear
//! part `L = ¼(∂₁² + ∂₂²)` and the purely nonlinear remainder
//! `N = log(1 + x) - x + det H`, `x = tr H + det H`, the linear part is
//! propagated exactly by `exp((e^{t₁} - e^{t₀}) L)` (a separable circulant
//! heat kernel) and `N` by an integrating-factor (Lawson) RK4 step.
//!
//! The time integrals `∫R²ωⁿ` and `∫|Ric+ω|²ωⁿ` are integrated as extra
//! quadrature components of the same RK4 step, from the stage states.

use crate::chern;
use crate::error::{Error, Result};
use crate::functionals::{accumulator_integrands, AccumulatorLedger};
use crate::geometry::{self, linalg, stencil, KahlerMetric};
use crate::models::{self, ModelSpec, Reduction};

/// Maximum number of step halvings before a step is declared impossible.
pub const MAX_HALVINGS: u32 = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub dt: f64,
    pub max_dt: f64,
    /// Multiplies the stability cap.
    pub safety: f64,
    pub cfl_constant: f64,
}

impl StepControl {
    pub fn new(dt: f64) -> Result<Self> {
        let ctl = Self {
            dt,
            max_dt: dt,
            safety: 0.9,
            cfl_constant: 0.5,
        };
        ctl.check()?;
        Ok(ctl)
    }

    pub fn check(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt <= self.max_dt && self.dt.is_finite()) {
            return Err(Error::ConfigInvalid(format!(
                "step control needs 0 < dt <= max_dt, got dt = {}, max_dt = {}",
                self.dt, self.max_dt
            )));
        }
        if !(self.safety > 0.0 && self.safety < 1.0) {
            return Err(Error::ConfigInvalid(format!("safety must lie in (0, 1), got {}", self.safety)));
        }
        if !(self.cfl_constant > 0.0) {
            return Err(Error::ConfigInvalid(format!("cfl constant must be positive, got {}", self.cfl_constant)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FlowState {
    pub t: f64,
    /// Rescaled potential (grid) or factor coefficients (ansatz).
    pub phi: Vec<f64>,
    pub metric: KahlerMetric,
    pub ledger: AccumulatorLedger,
}

impl FlowState {
    pub fn initial(model: &ModelSpec) -> Result<Self> {
        Self::at(model, 0.0, model.initial_potential(), AccumulatorLedger::default())
    }

    pub fn at(model: &ModelSpec, t: f64, phi: Vec<f64>, ledger: AccumulatorLedger) -> Result<Self> {
        let metric = geometry::metric_from_potential(model, t, &phi)?;
        let mut ledger = ledger;
        let (_, _, r_min) = accumulator_integrands(&metric)?;
        ledger.observe_scalar(r_min);
        Ok(Self { t, phi, metric, ledger })
    }
}

/// `log(1 + x) - x`, accurate for small `|x|`.
fn log1p_minus_x(x: f64) -> f64 {
    if x.abs() < 1e-2 {
        // alternating series, truncation below 1e-20 relative
        let mut term = x;
        let mut acc = 0.0;
        for k in 2..=10 {
            term *= -x;
            acc += term / k as f64;
        }
        acc
    } else {
        x.ln_1p() - x
    }
}

/// Nonlinear remainder `N(u) = log det(I + H) - tr H` at each grid point.
fn grid_nonlinear(model: &ModelSpec, u: &[f64]) -> Vec<f64> {
    let np = model.chart.points_per_axis;
    let hs = stencil::hessian(u, np, model.chart.spacing);
    (0..u.len())
        .map(|p| {
            let (a, b, d) = (0.25 * hs.xx[p], 0.25 * hs.xy[p], 0.25 * hs.yy[p]);
            let det = a * d - b * b;
            log1p_minus_x(a + d + det) + det
        })
        .collect()
}

/// `log det(I + H)` at each grid point.
fn grid_log_det(model: &ModelSpec, u: &[f64]) -> Vec<f64> {
    let np = model.chart.points_per_axis;
    let hs = stencil::hessian(u, np, model.chart.spacing);
    (0..u.len())
        .map(|p| {
            let (a, b, d) = (0.25 * hs.xx[p], 0.25 * hs.xy[p], 0.25 * hs.yy[p]);
            (a + d + a * d - b * b).ln_1p()
        })
        .collect()
}

/// Time derivative of the state: `e^t log det(I + H(u))` on grids, the
/// reduced vector field on ansatz models.
pub fn flow_rhs(model: &ModelSpec, state: &FlowState) -> Result<Vec<f64>> {
    match &model.reduction {
        Reduction::Ansatz(spec) => Ok(models::ansatz_vector_field(spec, &state.phi)),
        Reduction::Grid { .. } => {
            let scale = state.t.exp();
            let out: Vec<f64> = grid_log_det(model, &state.phi).iter().map(|v| scale * v).collect();
            if out.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteValue("flow right-hand side"));
            }
            Ok(out)
        }
    }
}

/// Stability cap for the explicit part of a grid step: the explicit operator
/// has symbol `e^t (g̃⁻¹ - I) : ¼ Hess`, bounded by `e^t ‖g̃⁻¹ - I‖ / h²`.
pub fn stability_cap(model: &ModelSpec, state: &FlowState, ctl: &StepControl) -> f64 {
    if !model.is_grid() {
        return f64::INFINITY;
    }
    let n = model.n;
    let scale = (-state.t).exp();
    let mut worst: f64 = 0.0;
    for p in 0..state.metric.num_points() {
        let mut m: Vec<f64> = state.metric.g_inv.at(p).iter().map(|v| v * scale).collect();
        for i in 0..n {
            m[i * n + i] -= 1.0;
        }
        worst = worst.max(linalg::spectral_radius(&m, n));
    }
    if worst == 0.0 {
        return f64::INFINITY;
    }
    let h = model.chart.spacing;
    ctl.safety * ctl.cfl_constant * h * h / (state.t.exp() * worst)
}

struct StageValue {
    /// Nonlinear remainder (grid) or full vector field (ansatz).
    slope: Vec<f64>,
    quad: [f64; 2],
    r_min: f64,
}

fn stage(model: &ModelSpec, t: f64, u: &[f64]) -> Result<(StageValue, KahlerMetric)> {
    let metric = geometry::metric_from_potential(model, t, u)?;
    let value = stage_on(model, t, u, &metric)?;
    Ok((value, metric))
}

fn stage_on(model: &ModelSpec, t: f64, u: &[f64], metric: &KahlerMetric) -> Result<StageValue> {
    let (q_scalar, q_ricci, r_min) = accumulator_integrands(metric)?;
    let slope = match &model.reduction {
        Reduction::Ansatz(spec) => models::ansatz_vector_field(spec, u),
        Reduction::Grid { .. } => {
            let scale = t.exp();
            grid_nonlinear(model, u).into_iter().map(|v| scale * v).collect()
        }
    };
    if slope.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue("flow right-hand side"));
    }
    Ok(StageValue {
        slope,
        quad: [q_scalar, q_ricci],
        r_min,
    })
}

fn axpy(a: &[f64], s: f64, x: &[f64]) -> Vec<f64> {
    a.iter().zip(x).map(|(ai, xi)| ai + s * xi).collect()
}

/// One RK4 step of size `h` without retries.
fn try_step(model: &ModelSpec, state: &FlowState, h: f64) -> Result<FlowState> {
    let t0 = state.t;
    let t_half = t0 + 0.5 * h;
    let t1 = t0 + h;
    let u0 = &state.phi;
    let s1 = stage_on(model, t0, u0, &state.metric)?;
    let (u1, s2, s3, s4) = match &model.reduction {
        Reduction::Ansatz(_) => {
            let (s2, _) = stage(model, t_half, &axpy(u0, 0.5 * h, &s1.slope))?;
            let (s3, _) = stage(model, t_half, &axpy(u0, 0.5 * h, &s2.slope))?;
            let (s4, _) = stage(model, t1, &axpy(u0, h, &s3.slope))?;
            let u1: Vec<f64> = (0..u0.len())
                .map(|i| u0[i] + h / 6.0 * (s1.slope[i] + 2.0 * (s2.slope[i] + s3.slope[i]) + s4.slope[i]))
                .collect();
            (u1, s2, s3, s4)
        }
        Reduction::Grid { .. } => {
            let np = model.chart.points_per_axis;
            let dx = model.chart.spacing;
            // exp(σL) with L = ¼Δ splits into exp(σ/4 ∂₁²) exp(σ/4 ∂₂²)
            let e0 = t0.exp();
            let sigma_a = e0 * (0.5 * h).exp_m1();
            let sigma_b = t_half.exp() * (0.5 * h).exp_m1();
            let k_a = stencil::heat_kernel(0.25 * sigma_a, np, dx);
            let k_b = stencil::heat_kernel(0.25 * sigma_b, np, dx);
            let a = stencil::apply_separable(&k_a, u0, np);
            let b = stencil::apply_separable(&k_a, &s1.slope, np);
            let (s2, _) = stage(model, t_half, &axpy(&a, 0.5 * h, &b))?;
            let (s3, _) = stage(model, t_half, &axpy(&a, 0.5 * h, &s2.slope))?;
            let u4 = stencil::apply_separable(&k_b, &axpy(&a, h, &s3.slope), np);
            let (s4, _) = stage(model, t1, &u4)?;
            let inner: Vec<f64> = (0..u0.len())
                .map(|i| a[i] + h / 6.0 * b[i] + h / 3.0 * (s2.slope[i] + s3.slope[i]))
                .collect();
            let propagated = stencil::apply_separable(&k_b, &inner, np);
            let u1 = axpy(&propagated, h / 6.0, &s4.slope);
            (u1, s2, s3, s4)
        }
    };
    let metric = geometry::metric_from_potential(model, t1, &u1)?;
    let (_, _, r_min_end) = accumulator_integrands(&metric)?;
    let mut ledger = state.ledger.clone();
    let weights = [1.0, 2.0, 2.0, 1.0];
    let stages = [&s1, &s2, &s3, &s4];
    let mut incr = [0.0; 2];
    for (w, s) in weights.iter().zip(stages) {
        incr[0] += w * s.quad[0];
        incr[1] += w * s.quad[1];
    }
    ledger.scalar_l2_accum += h / 6.0 * incr[0];
    ledger.ricci_l2_accum += h / 6.0 * incr[1];
    ledger.observe_scalar(s1.r_min.min(r_min_end));
    Ok(FlowState {
        t: t1,
        phi: u1,
        metric,
        ledger,
    })
}

/// Attempts a step of size `h`, halving on loss of positivity.
fn step_with(model: &ModelSpec, state: &FlowState, h: f64) -> Result<FlowState> {
    let mut h = h;
    for _ in 0..=MAX_HALVINGS {
        match try_step(model, state, h) {
            Ok(next) => return Ok(next),
            Err(Error::PositivityLost { .. }) => h *= 0.5,
            Err(e) => return Err(e),
        }
    }
    Err(Error::StepSizeUnderflow { t: state.t, dt: 2.0 * h })
}

/// One accepted step of size `min(dt, max_dt, stability cap)`.
pub fn step(model: &ModelSpec, state: &FlowState, ctl: &StepControl) -> Result<FlowState> {
    ctl.check()?;
    let h = ctl.dt.min(ctl.max_dt).min(stability_cap(model, state, ctl));
    step_with(model, state, h)
}

/// Integrates from `state.t` to exactly `t_end`.
pub fn advance_to(model: &ModelSpec, state: FlowState, t_end: f64, ctl: &StepControl) -> Result<FlowState> {
    ctl.check()?;
    let mut state = state;
    while state.t < t_end {
        let remaining = t_end - state.t;
        let cap = ctl.dt.min(ctl.max_dt).min(stability_cap(model, &state, ctl));
        // land exactly on t_end, avoiding a sliver step
        let (h, last) = if remaining <= cap * (1.0 + 1e-9) {
            (remaining, true)
        } else {
            (cap, false)
        };
        let mut next = step_with(model, &state, h)?;
        if last && next.t != t_end {
            next = FlowState {
                metric: geometry::metric_from_potential(model, t_end, &next.phi)?,
                t: t_end,
                ..next
            };
        }
        state = next;
    }
    Ok(state)
}

/// Pointwise `(R, ΔR + |Ric+ω|² - (R+n), -(R+n), log det g)`.
///
/// Curvature comes from the Riemann tensor rather than from `log det g`, so
/// on grids the residual sees the spatial discretization error of the flow.
fn evolution_fields(metric: &KahlerMetric) -> Result<[Vec<f64>; 4]> {
    let n = metric.n();
    let nf = n as f64;
    let curv = geometry::curvature(metric)?;
    let scalar = curv.scalar;
    let lap = geometry::laplacian(metric, &scalar);
    let mut scalar_rhs = Vec::with_capacity(scalar.len());
    let mut volume_rhs = Vec::with_capacity(scalar.len());
    for p in 0..metric.num_points() {
        let g = metric.g.at(p);
        let shifted: Vec<f64> = curv.ric.at(p).iter().zip(g).map(|(r, gi)| r + gi).collect();
        let norm = linalg::trace_product(metric.g_inv.at(p), &shifted, &shifted, n);
        scalar_rhs.push(lap[p] + norm - (scalar[p] + nf));
        volume_rhs.push(-(scalar[p] + nf));
    }
    let log_det = metric.det.iter().map(|d| d.ln()).collect();
    Ok([scalar, scalar_rhs, volume_rhs, log_det])
}

/// Residuals of `∂R = ΔR + |Ric+ω|² - (R+n)` and `∂ log ωⁿ = -(R+n)` between
/// two accepted states: the difference quotient over `[t₀, t₁]` against the
/// Simpson average of the right-hand side, whose midpoint value comes from
/// integrating `prev` over half the interval. Both are L∞ norms.
pub fn evolution_residuals(
    model: &ModelSpec,
    state: &FlowState,
    prev: &FlowState,
    ctl: &StepControl,
) -> Result<(f64, f64)> {
    let delta = state.t - prev.t;
    if !(delta > 0.0) {
        return Ok((0.0, 0.0));
    }
    let mid = advance_to(model, prev.clone(), prev.t + 0.5 * delta, ctl)?;
    let [r0, sr0, vr0, ld0] = evolution_fields(&prev.metric)?;
    let [_, srm, vrm, _] = evolution_fields(&mid.metric)?;
    let [r1, sr1, vr1, ld1] = evolution_fields(&state.metric)?;
    let mut scalar_res: f64 = 0.0;
    let mut volume_res: f64 = 0.0;
    for p in 0..r0.len() {
        let dr = (r1[p] - r0[p]) / delta;
        let simpson_r = (sr0[p] + 4.0 * srm[p] + sr1[p]) / 6.0;
        scalar_res = scalar_res.max((dr - simpson_r).abs());
        let dv = (ld1[p] - ld0[p]) / delta;
        let simpson_v = (vr0[p] + 4.0 * vrm[p] + vr1[p]) / 6.0;
        volume_res = volume_res.max((dv - simpson_v).abs());
    }
    Ok((scalar_res, volume_res))
}

/// First time the class trajectory leaves the Kähler cone, if before `horizon`.
///
/// Each coefficient is `K_i + (w_i - K_i)e^{-t}`, which vanishes at
/// `t = log((w_i - K_i)/(-K_i))` when `K_i < 0`.
pub fn detect_cone_exit(model: &ModelSpec, horizon: f64) -> Option<f64> {
    let exit = model
        .omega0_class
        .coeffs
        .iter()
        .zip(&model.k_class.coeffs)
        .filter(|(_, k)| **k < 0.0)
        .map(|(w, k)| ((w - k) / -k).ln())
        .fold(f64::INFINITY, f64::min);
    if exit.is_finite() && exit <= horizon {
        debug_assert!(chern::class_trajectory(model, exit).coeffs.iter().any(|c| c.abs() < 1e-9));
        Some(exit)
    } else {
        None
    }
}

/// Runs the flow until the integrator fails or `horizon` is reached; returns
/// the failure time if the step size underflowed.
pub fn integrator_failure_time(model: &ModelSpec, ctl: &StepControl, horizon: f64) -> Result<Option<f64>> {
    ctl.check()?;
    let mut state = FlowState::initial(model)?;
    while state.t < horizon {
        let h = (horizon - state.t)
            .min(ctl.dt)
            .min(ctl.max_dt)
            .min(stability_cap(model, &state, ctl));
        match step_with(model, &state, h) {
            Ok(next) => state = next,
            Err(Error::StepSizeUnderflow { t, .. }) => return Ok(Some(t)),
            Err(e) => return Err(e),
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ModelId, ModelParams};
    use std::f64::consts::PI;

    fn model(id: ModelId) -> ModelSpec {
        ModelSpec::build(id, &ModelParams::default()).unwrap()
    }

    #[test]
    fn series_matches_log1p() {
        for &x in &[1e-3f64, -5e-3, 9e-3, 0.05, -0.2] {
            let direct = x.ln_1p() - x;
            assert!((log1p_minus_x(x) - direct).abs() < 1e-17 + 1e-12 * direct.abs(), "{x}");
        }
        assert_eq!(log1p_minus_x(0.0), 0.0);
    }

    #[test]
    fn rhs_examples() {
        let m = model(ModelId::ProductESigma);
        let s = FlowState::at(&m, 0.0, vec![1.0, 1.0], AccumulatorLedger::default()).unwrap();
        assert_eq!(flow_rhs(&m, &s).unwrap(), vec![0.0, -1.0]);
        let cp2 = model(ModelId::Cp2Round);
        let s = FlowState::at(&cp2, 0.0, vec![3.0], AccumulatorLedger::default()).unwrap();
        assert_eq!(flow_rhs(&cp2, &s).unwrap(), vec![-6.0]);
        let torus = model(ModelId::FlatTorus);
        let s = FlowState::initial(&torus).unwrap();
        let rhs = flow_rhs(&torus, &s).unwrap();
        assert!(rhs.iter().all(|v| *v == rhs[0]));
    }

    #[test]
    fn e_sigma_tracks_closed_form() {
        let m = model(ModelId::ProductESigma);
        let ctl = StepControl::new(1e-3).unwrap();
        let mut state = FlowState::initial(&m).unwrap();
        for k in 1..=10 {
            state = advance_to(&m, state, k as f64, &ctl).unwrap();
            let exact = models::oracle_solution(&m, state.t).unwrap();
            for (a, b) in state.phi.iter().zip(&exact) {
                assert!(((a - b) / b).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn flat_torus_stays_flat() {
        let m = model(ModelId::FlatTorus);
        let ctl = StepControl::new(0.05).unwrap();
        let mut state = FlowState::initial(&m).unwrap();
        for _ in 0..20 {
            state = step(&m, &state, &ctl).unwrap();
            let curv = geometry::curvature(&state.metric).unwrap();
            assert!(curv.scalar.iter().all(|r| *r == 0.0));
        }
        assert_eq!(state.ledger.scalar_l2_accum, 0.0);
    }

    #[test]
    fn cone_exit_times() {
        assert_eq!(detect_cone_exit(&model(ModelId::FlatTorus), 50.0), None);
        assert_eq!(detect_cone_exit(&model(ModelId::ProductESigma), 50.0), None);
        assert_eq!(detect_cone_exit(&model(ModelId::ProductSigmaSigma), f64::INFINITY), None);
        let cp2 = model(ModelId::Cp2Round);
        let exact = ((1.0 + 6.0 * PI) / (6.0 * PI)).ln();
        let t = detect_cone_exit(&cp2, 50.0).unwrap();
        assert!((t - exact).abs() < 1e-15);
        let ctl = StepControl::new(1e-3).unwrap();
        let fail = integrator_failure_time(&cp2, &ctl, 50.0).unwrap().unwrap();
        assert!(((fail - exact) / exact).abs() < 0.05, "{fail} vs {exact}");
    }

    #[test]
    fn e_sigma_residuals_vanish() {
        let m = model(ModelId::ProductESigma);
        let ctl = StepControl::new(1e-3).unwrap();
        let prev = advance_to(&m, FlowState::initial(&m).unwrap(), 0.5, &ctl).unwrap();
        let next = advance_to(&m, prev.clone(), 0.51, &ctl).unwrap();
        let (sr, vr) = evolution_residuals(&m, &next, &prev, &ctl).unwrap();
        assert!(sr <= 1e-8 && vr <= 1e-8, "{sr} {vr}");
    }

    #[test]
    fn abelian_volume_matches_class() {
        let m = ModelSpec::build(
            ModelId::AbelianPerturbed,
            &ModelParams {
                grid_points: Some(32),
                ..Default::default()
            },
        )
        .unwrap();
        let ctl = StepControl::new(0.01).unwrap();
        let state = advance_to(&m, FlowState::initial(&m).unwrap(), 0.2, &ctl).unwrap();
        let vol = geometry::integrate(&vec![1.0; state.metric.num_points()], &state.metric).unwrap();
        let alpha = chern::class_trajectory(&m, state.t);
        let class_vol = chern::pair(&[&alpha, &alpha], &m.intersection_form).unwrap();
        assert!(((vol - class_vol) / class_vol).abs() < 1e-3);
    }
}

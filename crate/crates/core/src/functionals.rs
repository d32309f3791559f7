//! Energy functionals along the flow and the explicit integral inequalities.

use crate::chern::{self, pair_powers};
use crate::error::{Error, Result};
use crate::flow::FlowState;
use crate::geometry::{self, linalg, KahlerMetric};
use crate::models::{self, ModelSpec, Purpose, ReferenceVolume};

/// Time integrals and sampled history carried by a flow run.
#[derive(Debug, Clone, PartialEq)]
pub struct AccumulatorLedger {
    /// `∫₀^t ds ∫ R² ωⁿ`.
    pub scalar_l2_accum: f64,
    /// `∫₀^t ds ∫ |Ric+ω|² ωⁿ`.
    pub ricci_l2_accum: f64,
    /// Sampled `(t, E_t)`.
    pub e_history: Vec<(f64, f64)>,
    /// ABC terms at the same samples as `e_history`.
    pub abc_history: Vec<[f64; 3]>,
    pub abc_terms: Option<[f64; 3]>,
    /// Smallest scalar curvature seen at any accepted state or stage.
    pub inf_scalar: f64,
}

impl Default for AccumulatorLedger {
    fn default() -> Self {
        Self {
            scalar_l2_accum: 0.0,
            ricci_l2_accum: 0.0,
            e_history: Vec::new(),
            abc_history: Vec::new(),
            abc_terms: None,
            inf_scalar: f64::INFINITY,
        }
    }
}

impl AccumulatorLedger {
    pub fn observe_scalar(&mut self, r_min: f64) {
        self.inf_scalar = self.inf_scalar.min(r_min);
    }

    pub fn record_sample(&mut self, t: f64, energy: f64, abc: [f64; 3]) {
        self.e_history.push((t, energy));
        self.abc_history.push(abc);
        self.abc_terms = Some(abc);
    }

    /// `C = max(0, -inf R)`.
    pub fn lower_scalar_c(&self) -> f64 {
        if self.inf_scalar.is_finite() {
            (-self.inf_scalar).max(0.0)
        } else {
            0.0
        }
    }

    pub fn e0(&self) -> Option<f64> {
        self.e_history.first().map(|(_, e)| *e)
    }
}

/// `(∫R²ωⁿ, ∫|Ric+ω|²ωⁿ, min R)` with `Ric = -i∂∂̄ log det g`.
pub fn accumulator_integrands(metric: &KahlerMetric) -> Result<(f64, f64, f64)> {
    let n = metric.n();
    let ric = geometry::ricci_form(metric);
    let weights = metric.volume_weights();
    let mut q_scalar = 0.0;
    let mut q_ricci = 0.0;
    let mut r_min = f64::INFINITY;
    let mut shifted = vec![0.0; n * n];
    for p in 0..metric.num_points() {
        let ginv = metric.g_inv.at(p);
        let r = linalg::trace_with(ginv, ric.at(p), n);
        for ((s, a), b) in shifted.iter_mut().zip(ric.at(p)).zip(metric.g.at(p)) {
            *s = a + b;
        }
        q_scalar += r * r * weights[p];
        q_ricci += linalg::trace_product(ginv, &shifted, &shifted, n) * weights[p];
        r_min = r_min.min(r);
    }
    if !(q_scalar.is_finite() && q_ricci.is_finite()) {
        return Err(Error::NonFiniteValue("accumulator integrand"));
    }
    Ok((q_scalar, q_ricci, r_min))
}

/// `f_t = log(ω_tⁿ / Ω)`.
pub fn log_density(state: &FlowState, refvol: &ReferenceVolume) -> Result<Vec<f64>> {
    let metric = &state.metric;
    metric
        .det
        .iter()
        .zip(&refvol.density)
        .enumerate()
        .map(|(p, (d, omega))| {
            if *d > 0.0 && *omega > 0.0 {
                Ok((d / omega).ln())
            } else {
                Err(Error::NonPositiveDensity { point: p })
            }
        })
        .collect()
}

/// `E_t = ∫ i∂f∧∂̄f∧ω^{n-1} = (1/n) ∫ |∂f|² ωⁿ`.
pub fn dirichlet_energy(state: &FlowState, refvol: &ReferenceVolume) -> Result<f64> {
    let f = log_density(state, refvol)?;
    let grad = geometry::gradient_norm_sq(&state.metric, &f);
    Ok(geometry::integrate(&grad, &state.metric)? / state.metric.n() as f64)
}

/// The three terms of `dE/dt`:
/// `-(2/n)∫R²ωⁿ`, `-2∫R(-Ric Ω)∧ω^{n-1}`, and
/// `(n-1)∫i∂f∧∂̄f∧ω^{n-2}∧(-Ric-ω)`.
///
/// Wedges of `(1,1)`-forms are evaluated with
/// `α∧β∧ω^{n-2} = (tr α tr β - ⟨α,β⟩) ωⁿ / (n(n-1))` and
/// `β∧ω^{n-1} = tr β ωⁿ / n`.
pub fn abc_decomposition(state: &FlowState, model: &ModelSpec) -> Result<[f64; 3]> {
    let metric = &state.metric;
    let n = metric.n();
    if n < 2 {
        return Err(Error::DimensionTooSmall { n });
    }
    let nf = n as f64;
    let ric = geometry::ricci_form(metric);
    let scalar = metric.trace(&ric);
    let neg_ric_omega = geometry::MatrixField {
        n,
        data: model.refvol.ric_omega_form.data.iter().map(|v| -v).collect(),
    };
    let tr_neg_ric_omega = metric.trace(&neg_ric_omega);
    let f = log_density(state, &model.refvol)?;
    let grad = geometry::gradient_form(metric, &f);
    let mut b = ric.clone();
    for (bv, gv) in b.data.iter_mut().zip(&metric.g.data) {
        *bv = -*bv - gv;
    }
    let tr_a = metric.trace(&grad);
    let tr_b = metric.trace(&b);
    let ab = metric.inner(&grad, &b);

    let t1: Vec<f64> = scalar.iter().map(|r| r * r).collect();
    let t2: Vec<f64> = scalar.iter().zip(&tr_neg_ric_omega).map(|(r, w)| r * w).collect();
    let t3: Vec<f64> = (0..scalar.len()).map(|p| tr_a[p] * tr_b[p] - ab[p]).collect();
    Ok([
        -2.0 / nf * geometry::integrate(&t1, metric)?,
        -2.0 / nf * geometry::integrate(&t2, metric)?,
        geometry::integrate(&t3, metric)? / nf,
    ])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReductionReport {
    pub lhs: f64,
    pub rhs: f64,
    /// Boundary expression replacing the constant.
    pub boundary: f64,
    pub slack: f64,
    /// `n² ∫ (2πc₁(K_X)·α^{n-1}) dt`, the term the inequality drops.
    pub dropped_term: f64,
}

/// `∫_{t0}^{t1} n²(K·α_t^{n-1}) dt` by composite Simpson on the class polynomial.
pub fn dropped_term(model: &ModelSpec, t0: f64, t1: f64) -> Result<f64> {
    let n = model.n;
    // even step count, spacing at most 1/400
    let steps = 2 * ((200.0 * (t1 - t0)).ceil() as usize).max(32);
    let h = (t1 - t0) / steps as f64;
    let mut acc = 0.0;
    for i in 0..=steps {
        let t = t0 + i as f64 * h;
        let alpha = chern::class_trajectory(model, t);
        let v = pair_powers(&model.k_class, 1, &alpha, &model.intersection_form)?;
        let w = if i == 0 || i == steps {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc += w * v;
    }
    Ok((n * n) as f64 * acc * h / 3.0)
}

/// `∫∫|Ric+ω|² ≤ ∫∫R² + C` over `[t0, t1]` with
/// `C = n(K·α^{n-1})|_{t0} - n(K·α^{n-1})|_{t1} + αⁿ|_{t0} - αⁿ|_{t1}`.
pub fn check_reduction_inequality(
    start: &AccumulatorLedger,
    end: &AccumulatorLedger,
    model: &ModelSpec,
    t0: f64,
    t1: f64,
) -> Result<ReductionReport> {
    if !model.nef_flag {
        return Err(Error::NotNef(model.id.to_string()));
    }
    let n = model.n as f64;
    let form = &model.intersection_form;
    let k = &model.k_class;
    let boundary_at = |t: f64| -> Result<(f64, f64)> {
        let alpha = chern::class_trajectory(model, t);
        Ok((pair_powers(k, 1, &alpha, form)?, pair_powers(&alpha, 0, &alpha, form)?))
    };
    let (k0, v0) = boundary_at(t0)?;
    let (k1, v1) = boundary_at(t1)?;
    let boundary = n * k0 - n * k1 + v0 - v1;
    let lhs = end.ricci_l2_accum - start.ricci_l2_accum;
    let rhs = end.scalar_l2_accum - start.scalar_l2_accum + boundary;
    Ok(ReductionReport {
        lhs,
        rhs,
        boundary,
        slack: rhs - lhs,
        dropped_term: dropped_term(model, t0, t1)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundReport {
    /// Observed `-inf R` (zero if `R ≥ 0` throughout).
    pub lower_scalar_c: f64,
    pub c_prime: f64,
    pub nu: usize,
    pub e0: f64,
    /// `(n/2)E₀ + (n/2)C'/(n-ν)`.
    pub bound: f64,
    pub scalar_l2_accum: f64,
    pub reduction_slack: f64,
    /// `bound - accumulator`.
    pub scalar_theorem_slack: f64,
}

/// `sup_{t ∈ [0, horizon]} e^{(n-ν)t} (K·α_t^{n-1})`, sampled densely.
pub fn decay_supremum(model: &ModelSpec, nu: usize, horizon: f64) -> Result<f64> {
    let n = model.n;
    let samples = ((1000.0 * horizon).ceil() as usize).max(1000);
    let mut best: f64 = 0.0;
    for i in 0..=samples {
        let t = horizon * i as f64 / samples as f64;
        let alpha = chern::class_trajectory(model, t);
        let v = pair_powers(&model.k_class, 1, &alpha, &model.intersection_form)?;
        best = best.max(((n - nu) as f64 * t).exp() * v);
    }
    Ok(best)
}

/// Checks `∫₀^T dt ∫R²ωⁿ ≤ (n/2)E₀ + (n/2)C'/(n-ν)` with
/// `C' = 2C sup_t e^{(n-ν)t}(K·α_t^{n-1})` and `C` the observed `-inf R`.
pub fn check_scalar_theorem(
    ledger: &AccumulatorLedger,
    model: &ModelSpec,
    horizon: f64,
) -> Result<BoundReport> {
    if let Err(Error::InvalidModel(items)) = models::validate(model, Purpose::ScalarTheorem) {
        return Err(Error::HypothesisViolated(format!("requires {}", items.join(", "))));
    }
    let nu = chern::numerical_dimension(model)?;
    let n = model.n;
    if nu >= n {
        return Err(Error::HypothesisViolated("K_X is big".to_string()));
    }
    let c = ledger.lower_scalar_c();
    let c_prime = 2.0 * c * decay_supremum(model, nu, horizon)?;
    let e0 = ledger
        .e0()
        .ok_or_else(|| Error::HypothesisViolated("no energy sample at t = 0".to_string()))?;
    let nf = n as f64;
    let bound = nf / 2.0 * e0 + nf / 2.0 * c_prime / (n - nu) as f64;
    let reduction = check_reduction_inequality(&AccumulatorLedger::default(), ledger, model, 0.0, horizon)?;
    Ok(BoundReport {
        lower_scalar_c: c,
        c_prime,
        nu,
        e0,
        bound,
        scalar_l2_accum: ledger.scalar_l2_accum,
        reduction_slack: reduction.slack,
        scalar_theorem_slack: bound - ledger.scalar_l2_accum,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThirdTermCheck {
    pub term3: f64,
    /// `∫(-Ric-ω)∧ω^{n-1}` from the curvature.
    pub class_integral: f64,
    /// `(-e^{-t}([ω₀] - 2πc₁(K_X)) · α_t^{n-1})`.
    pub class_pairing: f64,
}

impl ThirdTermCheck {
    pub fn term_nonpositive(&self, tol: f64) -> bool {
        self.term3 <= tol
    }

    pub fn class_defect(&self) -> f64 {
        (self.class_integral - self.class_pairing).abs()
    }
}

/// Sign of the third term and the class identity `[-Ric-ω] = -e^{-t}([ω₀] - 2πc₁(K_X))`.
pub fn third_term_sign_check(state: &FlowState, model: &ModelSpec) -> Result<ThirdTermCheck> {
    let [_, _, term3] = abc_decomposition(state, model)?;
    let metric = &state.metric;
    let n = metric.n();
    let nf = n as f64;
    let ric = geometry::ricci_form(metric);
    let scalar = metric.trace(&ric);
    let integrand: Vec<f64> = scalar.iter().map(|r| -r - nf).collect();
    let class_integral = geometry::integrate(&integrand, metric)? / nf;
    let alpha = chern::class_trajectory(model, state.t);
    let shifted = model.omega0_class.sub(&model.k_class).scale(-(-state.t).exp());
    let class_pairing = pair_powers(&shifted, 1, &alpha, &model.intersection_form)?;
    Ok(ThirdTermCheck {
        term3,
        class_integral,
        class_pairing,
    })
}

/// Exponential fit to the increments of a converging accumulator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailFit {
    /// Fitted decay rate of the increments; infinite if they vanish exactly.
    pub rate: f64,
    /// Estimated remaining integral beyond the last sample.
    pub tail: f64,
}

/// Fits `increment_k ≈ A e^{-rate t_k}` on equally spaced samples `(t, accum)`
/// by least squares on the logarithm, and sums the geometric tail.
pub fn exponential_tail_fit(samples: &[(f64, f64)]) -> TailFit {
    let incs: Vec<(f64, f64)> = samples
        .windows(2)
        .map(|w| (w[1].0, w[1].1 - w[0].1))
        .filter(|(_, d)| *d > 0.0)
        .collect();
    if incs.len() < 2 {
        return TailFit {
            rate: f64::INFINITY,
            tail: 0.0,
        };
    }
    let m = incs.len() as f64;
    let mean_t = incs.iter().map(|(t, _)| t).sum::<f64>() / m;
    let mean_y = incs.iter().map(|(_, d)| d.ln()).sum::<f64>() / m;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (t, d) in &incs {
        sxy += (t - mean_t) * (d.ln() - mean_y);
        sxx += (t - mean_t) * (t - mean_t);
    }
    let rate = -sxy / sxx;
    let spacing = samples[samples.len() - 1].0 - samples[samples.len() - 2].0;
    let last = incs[incs.len() - 1].1;
    let tail = if rate > 0.0 {
        let q = (-rate * spacing).exp();
        last * q / (1.0 - q)
    } else {
        f64::INFINITY
    };
    TailFit { rate, tail }
}

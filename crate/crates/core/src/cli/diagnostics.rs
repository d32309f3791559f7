//! Per-sample diagnostics rows and the pointwise and integral checks run on them.

use std::fmt::Write as _;

use crate::chern::{self, pair_powers};
use crate::error::{Error, Result};
use crate::flow::FlowState;
use crate::functionals::{self, AccumulatorLedger};
use crate::geometry::{self, CurvatureBundle, KahlerMetric, TracelessBundle};
use crate::models::ModelSpec;

pub const CSV_HEADER: &str = "t,R_min,R_max,scalar_l2,scalar_l2_accum,ricci_l2,ricci_l2_accum,E_t,abc1,abc2,abc3,volume,class_0,class_1,reduction_slack,bound_slack";

pub const NUM_COLUMNS: usize = 16;

/// One time sample. Columns that do not apply to a model (a second class
/// coefficient on a one-dimensional `H^{1,1}`, slacks outside the
/// hypotheses of the corresponding inequality) are written as 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsRow {
    pub t: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub scalar_l2: f64,
    pub scalar_l2_accum: f64,
    pub ricci_l2: f64,
    pub ricci_l2_accum: f64,
    pub e_t: f64,
    pub abc: [f64; 3],
    pub volume: f64,
    pub class: [f64; 2],
    pub reduction_slack: f64,
    pub bound_slack: f64,
}

impl DiagnosticsRow {
    pub fn columns(&self) -> [f64; NUM_COLUMNS] {
        [
            self.t,
            self.r_min,
            self.r_max,
            self.scalar_l2,
            self.scalar_l2_accum,
            self.ricci_l2,
            self.ricci_l2_accum,
            self.e_t,
            self.abc[0],
            self.abc[1],
            self.abc[2],
            self.volume,
            self.class[0],
            self.class[1],
            self.reduction_slack,
            self.bound_slack,
        ]
    }

    pub fn from_columns(c: [f64; NUM_COLUMNS]) -> Self {
        Self {
            t: c[0],
            r_min: c[1],
            r_max: c[2],
            scalar_l2: c[3],
            scalar_l2_accum: c[4],
            ricci_l2: c[5],
            ricci_l2_accum: c[6],
            e_t: c[7],
            abc: [c[8], c[9], c[10]],
            volume: c[11],
            class: [c[12], c[13]],
            reduction_slack: c[14],
            bound_slack: c[15],
        }
    }

    pub fn to_csv_line(&self) -> String {
        let mut line = String::new();
        for (i, v) in self.columns().iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            let _ = write!(line, "{v:.16e}");
        }
        line
    }

    pub fn parse_csv_line(line: &str) -> Result<Self> {
        let values: Vec<f64> = line
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::ConfigInvalid(format!("bad CSV field {s:?}")))
            })
            .collect::<Result<_>>()?;
        let cols: [f64; NUM_COLUMNS] = values
            .try_into()
            .map_err(|v: Vec<f64>| Error::ConfigInvalid(format!("expected {NUM_COLUMNS} CSV fields, got {}", v.len())))?;
        Ok(Self::from_columns(cols))
    }
}

/// Parses a diagnostics CSV including its header.
pub fn parse_csv(text: &str) -> Result<Vec<DiagnosticsRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == CSV_HEADER => {}
        _ => return Err(Error::ConfigInvalid("missing diagnostics CSV header".into())),
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(DiagnosticsRow::parse_csv_line)
        .collect()
}

/// Outcome of one check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub measured: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    /// `measured ≤ tolerance`.
    fn at_most(name: &'static str, measured: f64, tolerance: f64) -> Self {
        Self {
            name,
            measured,
            tolerance,
            pass: measured <= tolerance,
        }
    }

    /// `measured ≥ -tolerance`.
    fn at_least_neg(name: &'static str, measured: f64, tolerance: f64) -> Self {
        Self {
            name,
            measured,
            tolerance,
            pass: measured >= -tolerance,
        }
    }
}

/// Tolerances that depend on whether the metric lives on a grid.
#[derive(Debug, Clone, Copy)]
struct Tolerances {
    symmetry: f64,
    volume_rel: f64,
    class_identity: f64,
}

fn tolerances(model: &ModelSpec) -> Tolerances {
    if model.is_grid() {
        // fourth-order truncation, measured at N = 64 and scaled
        let scale = (64.0 / model.chart.points_per_axis as f64).powi(4);
        Tolerances {
            symmetry: 1e-4 * scale,
            volume_rel: 1e-3,
            class_identity: 1e-3,
        }
    } else {
        Tolerances {
            symmetry: 1e-8,
            volume_rel: 1e-6,
            class_identity: 1e-8,
        }
    }
}

/// Pointwise tensor identities on one metric: Kähler symmetries of `Rm`,
/// vanishing traces of `Rm°` and `Ric°`, nonnegative norms, and
/// `|Ric+ω|² = |Ric°|² + (R+n)²/n`.
pub fn tensor_checks(model: &ModelSpec, curv: &CurvatureBundle, tl: &TracelessBundle) -> Vec<Check> {
    let tol = tolerances(model);
    let metric = &curv.metric;
    let nf = metric.n() as f64;
    let scale = curv.scalar.iter().fold(1.0f64, |m, r| m.max(r.abs()));
    let (ric_trace, rm_trace) = tl.trace_defects(metric);
    let mut decomposition: f64 = 0.0;
    let mut min_norm = f64::INFINITY;
    for p in 0..metric.num_points() {
        let lhs = tl.norm_ric_plus_omega_sq[p];
        let rhs = tl.norm_ric0_sq[p] + (curv.scalar[p] + nf).powi(2) / nf;
        decomposition = decomposition.max((lhs - rhs).abs() / (1.0 + lhs.abs()));
        min_norm = min_norm
            .min(tl.norm_rm0_sq[p])
            .min(tl.norm_ric0_sq[p])
            .min(tl.norm_ric_plus_omega_sq[p]);
    }
    vec![
        Check::at_most("kahler_symmetry", curv.symmetry_defect(), tol.symmetry * scale),
        Check::at_most("trace_ric0", ric_trace, 1e-10 * scale),
        Check::at_most("trace_rm0", rm_trace, 1e-10 * scale),
        Check::at_most("ric_omega_decomposition", decomposition, 1e-10),
        Check::at_least_neg("norms_nonnegative", min_norm, 1e-12 * scale * scale),
    ]
}

/// Volume against `α_tⁿ`.
pub fn volume_check(model: &ModelSpec, metric: &KahlerMetric, t: f64) -> Result<(f64, Check)> {
    let volume = geometry::integrate(&vec![1.0; metric.num_points()], metric)?;
    let alpha = chern::class_trajectory(model, t);
    let class_volume = pair_powers(&alpha, 0, &alpha, &model.intersection_form)?;
    let rel = ((volume - class_volume) / class_volume).abs();
    Ok((volume, Check::at_most("volume_vs_class", rel, tolerances(model).volume_rel)))
}

/// Computes the row at `state.t`, records `E_t` and the ABC terms in the
/// state's ledger, and runs every per-sample check. `prev_accum` holds the
/// scalar and Ricci accumulators at the previous sample of the same run.
pub fn sample_row(
    model: &ModelSpec,
    state: &mut FlowState,
    prev_accum: Option<(f64, f64)>,
) -> Result<(DiagnosticsRow, Vec<Check>)> {
    let t = state.t;
    let n = model.n;
    let (scalar_l2, ricci_l2, _) = functionals::accumulator_integrands(&state.metric)?;
    let ric = geometry::ricci_form(&state.metric);
    let scalar = state.metric.trace(&ric);
    let r_min = scalar.iter().copied().fold(f64::INFINITY, f64::min);
    let r_max = scalar.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e_t = functionals::dirichlet_energy(state, &model.refvol)?;
    let abc = functionals::abc_decomposition(state, model)?;
    state.ledger.record_sample(t, e_t, abc);
    let ledger: &AccumulatorLedger = &state.ledger;

    let curv = geometry::curvature(&state.metric)?;
    let tl = geometry::traceless_parts(&curv)?;
    let mut checks = tensor_checks(model, &curv, &tl);

    let (volume, vol_check) = volume_check(model, &state.metric, t)?;
    checks.push(vol_check);

    let alpha = chern::class_trajectory(model, t);
    let mut class = [0.0; 2];
    for (c, v) in class.iter_mut().zip(&alpha.coeffs) {
        *c = *v;
    }

    if n == 2 {
        let my = chern::my_number(model, &state.metric)?;
        let scale = 1.0 + my.my_curvature_integral.abs();
        checks.push(Check::at_least_neg(
            "my_lower_bound",
            my.my_curvature_integral - my.my_lower_bound,
            1e-10 * scale,
        ));
    }

    let k_pair = pair_powers(&model.k_class, 1, &alpha, &model.intersection_form)?;
    let energy_scale = 1.0 + e_t.abs();
    checks.push(Check::at_least_neg("energy_nonnegative", e_t, 1e-14 * energy_scale));

    let mut reduction_slack = 0.0;
    if model.nef_flag {
        checks.push(Check::at_least_neg("k_pairing_nonnegative", k_pair, 1e-12));
        let report = functionals::check_reduction_inequality(&AccumulatorLedger::default(), ledger, model, 0.0, t)?;
        reduction_slack = report.slack;
        checks.push(Check::at_least_neg("reduction_slack", reduction_slack, 1e-6));
    }

    if model.semi_positive_flag {
        // -2∫R(-Ric Ω)∧ω^{n-1} ≤ 2C (K·α^{n-1})
        let c = ledger.lower_scalar_c();
        let excess = abc[1] - 2.0 * c * k_pair;
        checks.push(Check::at_most("second_term_estimate", excess, 1e-8 * (1.0 + abc[1].abs())));
    }

    if model.nef_flag {
        let third = functionals::third_term_sign_check(state, model)?;
        let tol = tolerances(model).class_identity;
        checks.push(Check::at_most("third_term_nonpositive", third.term3, 1e-10 * energy_scale));
        checks.push(Check::at_most(
            "third_term_class_identity",
            third.class_defect(),
            tol * (1.0 + third.class_pairing.abs()),
        ));
    }

    let mut bound_slack = 0.0;
    match functionals::check_scalar_theorem(ledger, model, t) {
        Ok(report) => {
            bound_slack = report.scalar_theorem_slack;
            checks.push(Check::at_least_neg("scalar_bound_slack", bound_slack, 1e-6 * (1.0 + report.bound)));
        }
        Err(Error::HypothesisViolated(_)) | Err(Error::NotNef(_)) => {}
        Err(e) => return Err(e),
    }

    if let Some((scalar_prev, ricci_prev)) = prev_accum {
        checks.push(Check::at_least_neg(
            "scalar_accum_nondecreasing",
            ledger.scalar_l2_accum - scalar_prev,
            0.0,
        ));
        checks.push(Check::at_least_neg(
            "ricci_accum_nondecreasing",
            ledger.ricci_l2_accum - ricci_prev,
            0.0,
        ));
    }

    let row = DiagnosticsRow {
        t,
        r_min,
        r_max,
        scalar_l2,
        scalar_l2_accum: ledger.scalar_l2_accum,
        ricci_l2,
        ricci_l2_accum: ledger.ricci_l2_accum,
        e_t,
        abc,
        volume,
        class,
        reduction_slack,
        bound_slack,
    };
    let finite = row.columns().iter().all(|v| v.is_finite());
    checks.push(Check {
        name: "row_finite",
        measured: if finite { 0.0 } else { f64::NAN },
        tolerance: 0.0,
        pass: finite,
    });
    Ok((row, checks))
}

/// `max(1e-6, 10 Δ²)` for sample spacing `Δ`.
pub fn abc_tolerance(spacing: f64) -> f64 {
    (10.0 * spacing * spacing).max(1e-6)
}

/// Value and first-derivative weights at `x` of the Lagrange interpolant on
/// the nodes `0, 1, …, m-1`.
fn lagrange_weights<const M: usize>(x: f64) -> ([f64; M], [f64; M]) {
    let mut value = [0.0; M];
    let mut deriv = [0.0; M];
    for j in 0..M {
        let denom: f64 = (0..M).filter(|&m| m != j).map(|m| j as f64 - m as f64).product();
        value[j] = (0..M).filter(|&m| m != j).map(|m| x - m as f64).product::<f64>() / denom;
        deriv[j] = (0..M)
            .filter(|&i| i != j)
            .map(|i| {
                (0..M)
                    .filter(|&m| m != j && m != i)
                    .map(|m| x - m as f64)
                    .product::<f64>()
            })
            .sum::<f64>()
            / denom;
    }
    (value, deriv)
}

/// Worst gap, over every sampled interval, between the finite-difference
/// `dE/dt` and the sum of the ABC terms, together with its tolerance.
///
/// Each interval is compared at its midpoint: the derivative of the quartic
/// through the five nearest samples of `E` against the same interpolant of
/// the ABC sum. Windows with uneven spacing (a final sample that lands
/// short of the grid) are skipped.
pub fn abc_history_check(ledger: &AccumulatorLedger) -> Option<Check> {
    const M: usize = 5;
    let e = &ledger.e_history;
    let m = e.len();
    if m < M {
        return None;
    }
    let sums: Vec<f64> = ledger.abc_history.iter().map(|a| a.iter().sum()).collect();
    let mut worst: f64 = 0.0;
    let mut max_spacing: f64 = 0.0;
    for k in 0..m - 1 {
        let lo = k.saturating_sub(M / 2 - 1).min(m - M);
        let window = &e[lo..lo + M];
        let h = (window[M - 1].0 - window[0].0) / (M - 1) as f64;
        let uneven = window
            .windows(2)
            .any(|w| ((w[1].0 - w[0].0) - h).abs() > 1e-9 * h);
        if uneven {
            continue;
        }
        max_spacing = max_spacing.max(h);
        let (value, deriv) = lagrange_weights::<M>((k - lo) as f64 + 0.5);
        let de: f64 = deriv.iter().zip(window).map(|(w, (_, v))| w * v).sum::<f64>() / h;
        let abc: f64 = value.iter().zip(&sums[lo..lo + M]).map(|(w, v)| w * v).sum();
        worst = worst.max((de - abc).abs());
    }
    Some(Check::at_most("abc_vs_energy_derivative", worst, abc_tolerance(max_spacing)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ModelId, ModelParams};

    #[test]
    fn csv_line_round_trips() {
        let row = DiagnosticsRow::from_columns(std::array::from_fn(|i| (i as f64 + 0.1) / 3.0));
        let back = DiagnosticsRow::parse_csv_line(&row.to_csv_line()).unwrap();
        assert_eq!(back, row);
        assert_eq!(CSV_HEADER.split(',').count(), NUM_COLUMNS);
        assert!(DiagnosticsRow::parse_csv_line("1,2,3").is_err());
    }

    #[test]
    fn product_row_passes_every_check() {
        let m = ModelSpec::build(ModelId::ProductESigma, &ModelParams::default()).unwrap();
        let mut state = FlowState::initial(&m).unwrap();
        let (row, checks) = sample_row(&m, &mut state, None).unwrap();
        for c in &checks {
            assert!(c.pass, "{c:?}");
        }
        let v = 4.0 * std::f64::consts::PI;
        let (a, b) = (2.0, 1.0);
        assert!((row.abc[0] + 2.0 * b * v / a).abs() < 1e-10);
        assert!((row.abc[1] - 2.0 * b * v / a).abs() < 1e-10);
        assert_eq!(row.abc[2], 0.0);
        assert_eq!(state.ledger.e_history.len(), 1);
    }

    #[test]
    fn flat_torus_row_is_zero_curvature() {
        let m = ModelSpec::build(ModelId::FlatTorus, &ModelParams::default()).unwrap();
        let mut state = FlowState::initial(&m).unwrap();
        let (row, checks) = sample_row(&m, &mut state, None).unwrap();
        assert!(checks.iter().all(|c| c.pass), "{checks:?}");
        for v in [row.r_min, row.r_max, row.scalar_l2, row.e_t, row.abc[0], row.abc[1], row.abc[2]] {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn lagrange_weights_reproduce_polynomials() {
        let (value, deriv) = lagrange_weights::<5>(1.5);
        let f = |x: f64| x.powi(4) - 2.0 * x;
        let v: f64 = (0..5).map(|j| value[j] * f(j as f64)).sum();
        let d: f64 = (0..5).map(|j| deriv[j] * f(j as f64)).sum();
        assert!((v - f(1.5)).abs() < 1e-12);
        assert!((d - (4.0 * 1.5f64.powi(3) - 2.0)).abs() < 1e-12);
    }

    #[test]
    fn abc_check_on_polynomial_history() {
        // E = t³ is reproduced exactly by the quartic interpolant
        let mut ledger = AccumulatorLedger::default();
        for k in 0..12 {
            let t = 0.1 * k as f64;
            ledger.record_sample(t, t.powi(3), [3.0 * t * t, 0.0, 0.0]);
        }
        let c = abc_history_check(&ledger).unwrap();
        assert!(c.pass && c.measured < 1e-12, "{c:?}");
        assert!((c.tolerance - 0.1).abs() < 1e-12);
        ledger.abc_history[6][1] = 1.0;
        assert!(!abc_history_check(&ledger).unwrap().pass);
    }
}

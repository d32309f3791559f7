//! Discrete Kähler metrics and their curvature.
//!
//! Conventions: `ω = i g_{ij̄} dz^i ∧ dz̄^j`, `Ric = -i∂∂̄ log det g`,
//! `R = g^{ij̄} Ric_{ij̄}`. Fixed points of the normalized flow satisfy
//! `Ric = -ω`, so `R = -n` there.
//!
//! Every chart used here carries coordinates in which `g_{ij̄}` is real
//! symmetric: grid potentials depend only on `(Re z₁, Re z₂)` and ansatz
//! metrics are block-diagonal multiples of a space-form metric written in
//! normal coordinates at a point. Hermitian matrices are therefore stored as
//! real symmetric ones and conjugation is the identity.
//!
//! On grid charts `∂/∂z_k` acts on functions of `x = Re z` as `½ ∂/∂x_k`,
//! so the complex Hessian is one quarter of the real Hessian.

pub mod linalg;
pub mod stencil;

use crate::error::{Error, Result};
use crate::models::{ModelSpec, Reduction};

/// Discretization of a model manifold.
#[derive(Debug, Clone, PartialEq)]
pub struct GridChart {
    /// Complex dimension.
    pub n: usize,
    /// Number of real coordinates the fields depend on (0 or 2).
    pub reduction_dims: usize,
    pub points_per_axis: usize,
    /// Grid spacing; every axis has period 1.
    pub spacing: f64,
}

impl GridChart {
    /// Chart for spatially constant (ansatz) fields: a single sample point.
    pub fn ansatz(n: usize) -> Self {
        Self {
            n,
            reduction_dims: 0,
            points_per_axis: 1,
            spacing: 1.0,
        }
    }

    /// Doubly periodic grid on the unit square in `(Re z₁, Re z₂)`.
    pub fn periodic(n: usize, points_per_axis: usize) -> Result<Self> {
        if points_per_axis < 8 {
            return Err(Error::ConfigInvalid(format!(
                "grid needs at least 8 points per axis, got {points_per_axis}"
            )));
        }
        if n != 2 {
            return Err(Error::DimensionUnsupported { n });
        }
        Ok(Self {
            n,
            reduction_dims: 2,
            points_per_axis,
            spacing: 1.0 / points_per_axis as f64,
        })
    }

    pub fn is_grid(&self) -> bool {
        self.reduction_dims > 0
    }

    pub fn num_points(&self) -> usize {
        self.points_per_axis.pow(self.reduction_dims as u32)
    }

    /// Quadrature weight of one sample point.
    pub fn cell_weight(&self) -> f64 {
        self.spacing.powi(self.reduction_dims as i32)
    }

    /// Samples `f(x₁, x₂)` on the grid points.
    pub fn sample(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        if !self.is_grid() {
            return vec![f(0.0, 0.0)];
        }
        let n = self.points_per_axis;
        let h = self.spacing;
        let mut out = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                out.push(f(i as f64 * h, j as f64 * h));
            }
        }
        out
    }
}

/// A field of real symmetric `n × n` matrices, one per sample point.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixField {
    pub n: usize,
    pub data: Vec<f64>,
}

impl MatrixField {
    pub fn zeros(n: usize, points: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n * points],
        }
    }

    pub fn num_points(&self) -> usize {
        self.data.len() / (self.n * self.n)
    }

    pub fn at(&self, p: usize) -> &[f64] {
        let m = self.n * self.n;
        &self.data[p * m..(p + 1) * m]
    }

    pub fn at_mut(&mut self, p: usize) -> &mut [f64] {
        let m = self.n * self.n;
        &mut self.data[p * m..(p + 1) * m]
    }
}

/// One factor of a product of constant holomorphic sectional curvature spaces,
/// `coefficient · ω_ref` with `ω_ref` of holomorphic sectional curvature
/// `holomorphic_curvature`. Its reference curvature tensor in normal
/// coordinates is `(κ/2)(δ_ij δ_kl + δ_il δ_kj)` and `Ric(ω_ref) = κ(d+1)/2 · ω_ref`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceFormBlock {
    pub dim: usize,
    pub holomorphic_curvature: f64,
    pub coefficient: f64,
}

impl SpaceFormBlock {
    /// Einstein constant of the reference metric: `Ric(ω_ref) = ρ ω_ref`.
    pub fn einstein_constant(&self) -> f64 {
        0.5 * self.holomorphic_curvature * (self.dim as f64 + 1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KahlerMetric {
    pub chart: GridChart,
    pub g: MatrixField,
    pub g_inv: MatrixField,
    pub det: Vec<f64>,
    /// `ωⁿ = volume_constant · det(g) · (cell measure)`.
    pub volume_constant: f64,
    /// Present for ansatz metrics, whose curvature is known exactly.
    pub blocks: Option<Vec<SpaceFormBlock>>,
}

impl KahlerMetric {
    /// Validates symmetry and positivity; a failure is reported with `t = NaN`.
    pub fn new(
        chart: GridChart,
        g: MatrixField,
        volume_constant: f64,
        blocks: Option<Vec<SpaceFormBlock>>,
    ) -> Result<Self> {
        let n = chart.n;
        let points = chart.num_points();
        assert_eq!(g.n, n);
        assert_eq!(g.num_points(), points);
        let mut g_inv = MatrixField::zeros(n, points);
        let mut det = vec![0.0; points];
        for p in 0..points {
            let m = g.at(p);
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteValue("metric"));
            }
            for i in 0..n {
                for j in 0..i {
                    if (m[i * n + j] - m[j * n + i]).abs() > 1e-14 {
                        return Err(Error::SingularMetric { point: p });
                    }
                }
            }
            match linalg::inverse_spd(m, n) {
                Some((inv, d)) => {
                    g_inv.at_mut(p).copy_from_slice(&inv);
                    det[p] = d;
                }
                None => {
                    return Err(Error::PositivityLost {
                        t: f64::NAN,
                        point: p,
                        min_eigenvalue: linalg::min_eigenvalue(m, n),
                    })
                }
            }
        }
        Ok(Self {
            chart,
            g,
            g_inv,
            det,
            volume_constant,
            blocks,
        })
    }

    pub fn n(&self) -> usize {
        self.chart.n
    }

    pub fn num_points(&self) -> usize {
        self.chart.num_points()
    }

    /// Pointwise `ωⁿ` weight so that `∫ f ωⁿ = Σ f_p · weight_p`.
    pub fn volume_weights(&self) -> Vec<f64> {
        let c = self.volume_constant * self.chart.cell_weight();
        self.det.iter().map(|d| d * c).collect()
    }

    /// Pointwise `g^{ij̄} A_{ij̄}`.
    pub fn trace(&self, a: &MatrixField) -> Vec<f64> {
        let n = self.n();
        (0..self.num_points())
            .map(|p| linalg::trace_with(self.g_inv.at(p), a.at(p), n))
            .collect()
    }

    /// Pointwise `⟨A, B⟩_ω = g^{il̄} A_{ij̄} g^{kj̄} B_{kl̄}`.
    pub fn inner(&self, a: &MatrixField, b: &MatrixField) -> Vec<f64> {
        let n = self.n();
        (0..self.num_points())
            .map(|p| linalg::trace_product(self.g_inv.at(p), a.at(p), b.at(p), n))
            .collect()
    }
}

/// Builds `ω_t` from a potential sampled on the model chart.
///
/// Grid models (trivial canonical class) use the rescaled gauge
/// `ω_t = e^{-t}(ω_flat + i∂∂̄φ)`, which keeps `[ω_t] = e^{-t}[ω₀] = α_t`.
/// Ansatz models read `phi` as the factor coefficients.
pub fn metric_from_potential(model: &ModelSpec, t: f64, phi: &[f64]) -> Result<KahlerMetric> {
    let chart = model.chart.clone();
    let n = chart.n;
    let result = match &model.reduction {
        Reduction::Grid { .. } => {
            let np = chart.points_per_axis;
            if phi.len() != np * np {
                return Err(Error::ConfigInvalid(format!(
                    "potential has {} samples, chart has {}",
                    phi.len(),
                    np * np
                )));
            }
            let hs = stencil::hessian(phi, np, chart.spacing);
            let scale = (-t).exp();
            let mut g = MatrixField::zeros(n, np * np);
            for p in 0..np * np {
                let m = g.at_mut(p);
                m[0] = scale * (1.0 + 0.25 * hs.xx[p]);
                m[1] = scale * 0.25 * hs.xy[p];
                m[2] = m[1];
                m[3] = scale * (1.0 + 0.25 * hs.yy[p]);
            }
            KahlerMetric::new(chart, g, model.volume_constant, None)
        }
        Reduction::Ansatz(spec) => {
            if phi.len() != spec.factors.len() {
                return Err(Error::ConfigInvalid(format!(
                    "ansatz state has {} coefficients, model has {} factors",
                    phi.len(),
                    spec.factors.len()
                )));
            }
            let blocks: Vec<SpaceFormBlock> = spec
                .factors
                .iter()
                .zip(phi)
                .map(|(f, c)| SpaceFormBlock {
                    dim: f.dim,
                    holomorphic_curvature: f.holomorphic_curvature,
                    coefficient: *c,
                })
                .collect();
            let mut g = MatrixField::zeros(n, 1);
            let mut offset = 0;
            for b in &blocks {
                for i in offset..offset + b.dim {
                    g.data[i * n + i] = b.coefficient;
                }
                offset += b.dim;
            }
            KahlerMetric::new(chart, g, model.volume_constant, Some(blocks))
        }
    };
    result.map_err(|e| match e {
        Error::PositivityLost {
            point,
            min_eigenvalue,
            ..
        } => Error::PositivityLost {
            t,
            point,
            min_eigenvalue,
        },
        other => other,
    })
}

/// Curvature quantities of a metric. `rm` holds `R_{ij̄kl̄}` at index
/// `((i n + j) n + k) n + l` within each point's block of `n⁴` entries.
#[derive(Debug, Clone)]
pub struct CurvatureBundle {
    pub rm: Vec<f64>,
    pub ric: MatrixField,
    pub scalar: Vec<f64>,
    pub metric: KahlerMetric,
}

impl CurvatureBundle {
    pub fn rm_at(&self, p: usize) -> &[f64] {
        let m = self.metric.n().pow(4);
        &self.rm[p * m..(p + 1) * m]
    }

    /// Largest violation of `R_{ij̄kl̄} = R_{kj̄il̄} = R_{il̄kj̄} = conj(R_{jīlk̄})`.
    pub fn symmetry_defect(&self) -> f64 {
        let n = self.metric.n();
        let idx = |i: usize, j: usize, k: usize, l: usize| ((i * n + j) * n + k) * n + l;
        let mut worst: f64 = 0.0;
        for p in 0..self.metric.num_points() {
            let r = self.rm_at(p);
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        for l in 0..n {
                            let v = r[idx(i, j, k, l)];
                            worst = worst
                                .max((v - r[idx(k, j, i, l)]).abs())
                                .max((v - r[idx(i, l, k, j)]).abs())
                                .max((v - r[idx(j, i, l, k)]).abs());
                        }
                    }
                }
            }
        }
        worst
    }
}

/// Riemann, Ricci and scalar curvature.
///
/// `R_{ij̄kl̄} = -∂_k∂_l̄ g_{ij̄} + g^{pq̄} ∂_k g_{iq̄} ∂_l̄ g_{pj̄}` with fourth-order
/// periodic differences on grid charts; exact for ansatz metrics.
/// `Ric_{ij̄} = g^{kl̄} R_{ij̄kl̄}` and `R = g^{ij̄} Ric_{ij̄}`.
pub fn curvature(metric: &KahlerMetric) -> Result<CurvatureBundle> {
    let n = metric.n();
    let points = metric.num_points();
    let n4 = n.pow(4);
    let idx = |i: usize, j: usize, k: usize, l: usize| ((i * n + j) * n + k) * n + l;
    let mut rm = vec![0.0; n4 * points];

    if let Some(blocks) = &metric.blocks {
        let mut offset = 0;
        for b in blocks {
            let c = 0.5 * b.holomorphic_curvature * b.coefficient;
            let range = offset..offset + b.dim;
            for i in range.clone() {
                for j in range.clone() {
                    for k in range.clone() {
                        for l in range.clone() {
                            let delta = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
                            rm[idx(i, j, k, l)] = c * (delta(i, j) * delta(k, l) + delta(i, l) * delta(k, j));
                        }
                    }
                }
            }
            offset += b.dim;
        }
    } else {
        let np = metric.chart.points_per_axis;
        let h = metric.chart.spacing;
        // component fields g11, g12, g22
        let comps: Vec<Vec<f64>> = [(0usize, 0usize), (0, 1), (1, 1)]
            .iter()
            .map(|&(i, j)| (0..points).map(|p| metric.g.at(p)[i * n + j]).collect())
            .collect();
        let comp_index = |i: usize, j: usize| match (i.min(j), i.max(j)) {
            (0, 0) => 0,
            (0, 1) => 1,
            _ => 2,
        };
        let first: Vec<[Vec<f64>; 2]> = comps
            .iter()
            .map(|c| [stencil::d1(c, np, h, 0), stencil::d1(c, np, h, 1)])
            .collect();
        let second: Vec<stencil::Hessian> = comps.iter().map(|c| stencil::hessian(c, np, h)).collect();
        for p in 0..points {
            let ginv = metric.g_inv.at(p);
            let dg = |i: usize, j: usize, k: usize| first[comp_index(i, j)][k][p];
            let ddg = |i: usize, j: usize, k: usize, l: usize| {
                let hs = &second[comp_index(i, j)];
                match (k.min(l), k.max(l)) {
                    (0, 0) => hs.xx[p],
                    (0, 1) => hs.xy[p],
                    _ => hs.yy[p],
                }
            };
            let block = &mut rm[p * n4..(p + 1) * n4];
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        for l in 0..n {
                            let mut quad = 0.0;
                            for a in 0..n {
                                for b in 0..n {
                                    quad += ginv[a * n + b] * dg(i, b, k) * dg(a, j, l);
                                }
                            }
                            block[idx(i, j, k, l)] = 0.25 * (quad - ddg(i, j, k, l));
                        }
                    }
                }
            }
        }
    }

    let mut ric = MatrixField::zeros(n, points);
    let mut scalar = vec![0.0; points];
    for p in 0..points {
        let ginv = metric.g_inv.at(p);
        let block = &rm[p * n4..(p + 1) * n4];
        let r = ric.at_mut(p);
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for k in 0..n {
                    for l in 0..n {
                        acc += ginv[k * n + l] * block[idx(i, j, k, l)];
                    }
                }
                r[i * n + j] = acc;
            }
        }
        scalar[p] = linalg::trace_with(ginv, r, n);
    }
    if scalar.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue("scalar curvature"));
    }
    Ok(CurvatureBundle {
        rm,
        ric,
        scalar,
        metric: metric.clone(),
    })
}

/// Ricci form from its defining formula `Ric = -i∂∂̄ log det g`.
///
/// Independent of [`curvature`]: on grids it differentiates `log det g`
/// directly instead of tracing the Riemann tensor, so the two routes agree
/// only up to discretization error there. Exact for ansatz metrics.
pub fn ricci_form(metric: &KahlerMetric) -> MatrixField {
    let n = metric.n();
    let points = metric.num_points();
    let mut ric = MatrixField::zeros(n, points);
    if let Some(blocks) = &metric.blocks {
        let mut offset = 0;
        for b in blocks {
            for i in offset..offset + b.dim {
                ric.data[i * n + i] = b.einstein_constant();
            }
            offset += b.dim;
        }
        return ric;
    }
    let np = metric.chart.points_per_axis;
    let log_det: Vec<f64> = metric.det.iter().map(|d| d.ln()).collect();
    let hs = stencil::hessian(&log_det, np, metric.chart.spacing);
    for p in 0..points {
        let r = ric.at_mut(p);
        r[0] = -0.25 * hs.xx[p];
        r[1] = -0.25 * hs.xy[p];
        r[2] = r[1];
        r[3] = -0.25 * hs.yy[p];
    }
    ric
}

/// Traceless curvature and the pointwise norms entering the Chern identity.
#[derive(Debug, Clone)]
pub struct TracelessBundle {
    pub rm0: Vec<f64>,
    pub ric0: MatrixField,
    pub norm_rm0_sq: Vec<f64>,
    pub norm_ric0_sq: Vec<f64>,
    pub norm_ric_plus_omega_sq: Vec<f64>,
    /// `|Rm|²`, `|Ric|²` kept for the Chern-Weil cross-checks.
    pub norm_rm_sq: Vec<f64>,
    pub norm_ric_sq: Vec<f64>,
}

impl TracelessBundle {
    /// Largest pointwise `|g^{ij̄} Ric°_{ij̄}|` and `|g^{ij̄} g^{kl̄} Rm°_{ij̄kl̄}|`.
    pub fn trace_defects(&self, metric: &KahlerMetric) -> (f64, f64) {
        let n = metric.n();
        let n4 = n.pow(4);
        let idx = |i: usize, j: usize, k: usize, l: usize| ((i * n + j) * n + k) * n + l;
        let mut ric_defect: f64 = 0.0;
        let mut rm_defect: f64 = 0.0;
        for p in 0..metric.num_points() {
            let ginv = metric.g_inv.at(p);
            ric_defect = ric_defect.max(linalg::trace_with(ginv, self.ric0.at(p), n).abs());
            let block = &self.rm0[p * n4..(p + 1) * n4];
            let mut acc = 0.0;
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        for l in 0..n {
                            acc += ginv[j * n + i] * ginv[l * n + k] * block[idx(i, j, k, l)];
                        }
                    }
                }
            }
            rm_defect = rm_defect.max(acc.abs());
        }
        (ric_defect, rm_defect)
    }
}

/// Squared norm of a rank-4 tensor with all indices raised by `g^{-1}`.
fn rank4_norm_sq(t: &[f64], ginv: &[f64], n: usize) -> f64 {
    // raise one slot at a time: u = (g^-1 ⊗ g^-1 ⊗ g^-1 ⊗ g^-1) t
    let n4 = n.pow(4);
    let mut cur = t.to_vec();
    let mut next = vec![0.0; n4];
    let strides = [n * n * n, n * n, n, 1];
    for stride in strides {
        for (flat, out) in next.iter_mut().enumerate() {
            let digit = (flat / stride) % n;
            let base = flat - digit * stride;
            let mut acc = 0.0;
            for m in 0..n {
                acc += ginv[digit * n + m] * cur[base + m * stride];
            }
            *out = acc;
        }
        std::mem::swap(&mut cur, &mut next);
    }
    cur.iter().zip(t).map(|(a, b)| a * b).sum()
}

/// `Rm° = Rm - R/(n(n+1)) (g_{ij̄}g_{kl̄} + g_{il̄}g_{kj̄})` and `Ric° = Ric - (R/n) g`.
pub fn traceless_parts(curv: &CurvatureBundle) -> Result<TracelessBundle> {
    let metric = &curv.metric;
    let n = metric.n();
    if n < 2 {
        return Err(Error::DimensionTooSmall { n });
    }
    let points = metric.num_points();
    let n4 = n.pow(4);
    let nf = n as f64;
    let idx = |i: usize, j: usize, k: usize, l: usize| ((i * n + j) * n + k) * n + l;
    let mut rm0 = vec![0.0; n4 * points];
    let mut ric0 = MatrixField::zeros(n, points);
    let mut norm_rm0_sq = vec![0.0; points];
    let mut norm_ric0_sq = vec![0.0; points];
    let mut norm_ric_plus_omega_sq = vec![0.0; points];
    let mut norm_rm_sq = vec![0.0; points];
    let mut norm_ric_sq = vec![0.0; points];
    for p in 0..points {
        let g = metric.g.at(p);
        let ginv = metric.g_inv.at(p);
        let r = curv.scalar[p];
        let c = r / (nf * (nf + 1.0));
        let src = curv.rm_at(p);
        let dst = &mut rm0[p * n4..(p + 1) * n4];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        dst[idx(i, j, k, l)] = src[idx(i, j, k, l)]
                            - c * (g[i * n + j] * g[k * n + l] + g[i * n + l] * g[k * n + j]);
                    }
                }
            }
        }
        let ric = curv.ric.at(p);
        let out = ric0.at_mut(p);
        let mut shifted = vec![0.0; n * n];
        for a in 0..n * n {
            out[a] = ric[a] - r / nf * g[a];
            shifted[a] = ric[a] + g[a];
        }
        norm_rm0_sq[p] = rank4_norm_sq(dst, ginv, n);
        norm_rm_sq[p] = rank4_norm_sq(src, ginv, n);
        norm_ric0_sq[p] = linalg::trace_product(ginv, out, out, n);
        norm_ric_sq[p] = linalg::trace_product(ginv, ric, ric, n);
        norm_ric_plus_omega_sq[p] = linalg::trace_product(ginv, &shifted, &shifted, n);
    }
    Ok(TracelessBundle {
        rm0,
        ric0,
        norm_rm0_sq,
        norm_ric0_sq,
        norm_ric_plus_omega_sq,
        norm_rm_sq,
        norm_ric_sq,
    })
}

/// `Δ_ω f = g^{ij̄} ∂_i ∂_j̄ f`; identically zero on ansatz charts.
pub fn laplacian(metric: &KahlerMetric, f: &[f64]) -> Vec<f64> {
    if !metric.chart.is_grid() {
        return vec![0.0; f.len()];
    }
    let np = metric.chart.points_per_axis;
    let hs = stencil::hessian(f, np, metric.chart.spacing);
    (0..metric.num_points())
        .map(|p| {
            let gi = metric.g_inv.at(p);
            0.25 * (gi[0] * hs.xx[p] + 2.0 * gi[1] * hs.xy[p] + gi[3] * hs.yy[p])
        })
        .collect()
}

/// `∫_X f ωⁿ`.
pub fn integrate(field: &[f64], metric: &KahlerMetric) -> Result<f64> {
    if field.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue("integrand"));
    }
    let c = metric.volume_constant * metric.chart.cell_weight();
    Ok(field.iter().zip(&metric.det).map(|(f, d)| f * d).sum::<f64>() * c)
}

/// Pointwise `|∂f|²_ω = g^{ij̄} ∂_i f ∂_j̄ f` of a real function.
pub fn gradient_norm_sq(metric: &KahlerMetric, f: &[f64]) -> Vec<f64> {
    if !metric.chart.is_grid() {
        return vec![0.0; f.len()];
    }
    let np = metric.chart.points_per_axis;
    let h = metric.chart.spacing;
    let fx = stencil::d1(f, np, h, 0);
    let fy = stencil::d1(f, np, h, 1);
    (0..metric.num_points())
        .map(|p| {
            let gi = metric.g_inv.at(p);
            0.25 * (gi[0] * fx[p] * fx[p] + 2.0 * gi[1] * fx[p] * fy[p] + gi[3] * fy[p] * fy[p])
        })
        .collect()
}

/// The (1,1)-form `i ∂f ∧ ∂̄f` as a matrix field `∂_i f ∂_j̄ f`.
pub fn gradient_form(metric: &KahlerMetric, f: &[f64]) -> MatrixField {
    let n = metric.n();
    let points = metric.num_points();
    let mut out = MatrixField::zeros(n, points);
    if !metric.chart.is_grid() {
        return out;
    }
    let np = metric.chart.points_per_axis;
    let h = metric.chart.spacing;
    let fx = stencil::d1(f, np, h, 0);
    let fy = stencil::d1(f, np, h, 1);
    for p in 0..points {
        let m = out.at_mut(p);
        let d = [0.5 * fx[p], 0.5 * fy[p]];
        for i in 0..2 {
            for j in 0..2 {
                m[i * n + j] = d[i] * d[j];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ModelId, ModelParams, ModelSpec};
    use std::f64::consts::PI;

    fn abelian(eps: f64, n: usize) -> ModelSpec {
        let params = ModelParams {
            epsilon: eps,
            grid_points: Some(n),
            ..ModelParams::default()
        };
        ModelSpec::build(ModelId::AbelianPerturbed, &params).unwrap()
    }

    #[test]
    fn flat_potential_gives_identity() {
        let model = ModelSpec::build(ModelId::FlatTorus, &ModelParams::default()).unwrap();
        let phi = vec![0.0; model.chart.num_points()];
        let g = metric_from_potential(&model, 0.0, &phi).unwrap();
        for p in 0..g.num_points() {
            assert_eq!(g.g.at(p), &[1.0, 0.0, 0.0, 1.0]);
        }
        let curv = curvature(&g).unwrap();
        assert!(curv.rm.iter().all(|v| *v == 0.0));
        assert!(curv.scalar.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn quarter_hessian_on_three_points() {
        let eps = 0.01;
        let model = abelian(eps, 64);
        let phi = model.initial_potential();
        let g = metric_from_potential(&model, 0.0, &phi).unwrap();
        // hand values: g11 = 1 - eps π² cos 2πx₁ at x₁ = 0, 1/4, 1/2
        for (i, expect) in [(0usize, 1.0 - eps * PI * PI), (16, 1.0), (32, 1.0 + eps * PI * PI)] {
            let p = i + 64 * 5;
            let m = g.g.at(p);
            assert!((m[0] - expect).abs() < 2e-7, "{} vs {}", m[0], expect);
            assert!(m[1].abs() < 1e-15);
        }
    }

    #[test]
    fn large_potential_loses_positivity() {
        let model = abelian(0.01, 16);
        let eps = 0.2; // 1 - 0.2 π² < 0
        let phi = model.chart.sample(|x, _| eps * (2.0 * PI * x).cos());
        match metric_from_potential(&model, 0.0, &phi) {
            Err(Error::PositivityLost { min_eigenvalue, t, .. }) => {
                assert!(min_eigenvalue <= 0.0);
                assert_eq!(t, 0.0);
            }
            other => panic!("expected PositivityLost, got {other:?}"),
        }
    }

    #[test]
    fn laplacian_of_cosine_on_flat_chart() {
        let model = ModelSpec::build(ModelId::FlatTorus, &ModelParams { grid_points: Some(32), ..Default::default() }).unwrap();
        let g = metric_from_potential(&model, 0.0, &vec![0.0; 32 * 32]).unwrap();
        let f = g.chart.sample(|x, _| (2.0 * PI * x).cos());
        let lap = laplacian(&g, &f);
        let exact = g.chart.sample(|x, _| -PI * PI * (2.0 * PI * x).cos());
        let err = lap.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        // fourth-order truncation at N = 32 is about 2e-5 relative
        assert!(err < 1e-4 * PI * PI, "err {err}");
        assert!(laplacian(&g, &vec![7.0; 32 * 32]).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn flat_torus_volume_is_two() {
        let model = ModelSpec::build(ModelId::FlatTorus, &ModelParams::default()).unwrap();
        let g = metric_from_potential(&model, 0.0, &model.initial_potential()).unwrap();
        let ones = vec![1.0; g.num_points()];
        assert!((integrate(&ones, &g).unwrap() - 2.0).abs() < 1e-14);
        assert_eq!(integrate(&vec![0.0; g.num_points()], &g).unwrap(), 0.0);
        let mut bad = ones.clone();
        bad[3] = f64::NAN;
        assert!(matches!(integrate(&bad, &g), Err(Error::NonFiniteValue(_))));
    }

    #[test]
    fn grid_ricci_routes_agree() {
        let model = abelian(0.01, 64);
        let g = metric_from_potential(&model, 0.0, &model.initial_potential()).unwrap();
        let curv = curvature(&g).unwrap();
        let direct = ricci_form(&g);
        let err = curv
            .ric
            .data
            .iter()
            .zip(&direct.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-4, "err {err}");
        assert!(curv.symmetry_defect() < 1e-4);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(16))]

            #[test]
            fn decomposition_identity_on_random_potentials(
                eps in -0.005f64..0.005,
                kx in 1usize..3,
                ky in 1usize..3,
                t in 0.0f64..3.0,
            ) {
                // |Ric+ω|² = |Ric°|² + (R+n)²/n and zero traces, pointwise
                let m = abelian(0.0, 16);
                let phi = m.chart.sample(|x, y| {
                    eps * ((2.0 * PI * kx as f64 * x).sin() + (2.0 * PI * ky as f64 * y).cos())
                });
                let g = metric_from_potential(&m, t, &phi).unwrap();
                let curv = curvature(&g).unwrap();
                let tl = traceless_parts(&curv).unwrap();
                let n = g.n() as f64;
                for p in 0..g.num_points() {
                    let lhs = tl.norm_ric_plus_omega_sq[p];
                    let rhs = tl.norm_ric0_sq[p] + (curv.scalar[p] + n).powi(2) / n;
                    prop_assert!((lhs - rhs).abs() < 1e-10 * (1.0 + lhs.abs()));
                    prop_assert!(tl.norm_rm0_sq[p] >= -1e-12);
                }
                let (ric_trace, rm_trace) = tl.trace_defects(&g);
                prop_assert!(ric_trace < 1e-10 && rm_trace < 1e-10);
            }

            #[test]
            fn space_form_products_are_einstein_per_factor(
                a in 0.2f64..5.0,
                b in 0.2f64..5.0,
            ) {
                let m = ModelSpec::build(ModelId::ProductSigmaSigma, &ModelParams::default()).unwrap();
                let g = metric_from_potential(&m, 0.0, &[a, b]).unwrap();
                let curv = curvature(&g).unwrap();
                // Ric = -I on each hyperbolic factor, so R = -1/a - 1/b
                prop_assert!((curv.scalar[0] + 1.0 / a + 1.0 / b).abs() < 1e-12 * (1.0 / a + 1.0 / b));
                let tl = traceless_parts(&curv).unwrap();
                prop_assert!(tl.norm_rm0_sq[0] >= 0.0);
            }
        }
    }
}

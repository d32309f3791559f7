//! Cohomology class arithmetic, Chern-Weil densities, and the Miyaoka-Yau
//! characteristic number of a surface.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::{self, CurvatureBundle, KahlerMetric};
use crate::models::{ModelId, ModelSpec};

/// Coefficients of a `(1,1)` class on a model's `H^{1,1}` basis.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassVector {
    pub coeffs: Vec<f64>,
    pub basis_id: ModelId,
}

impl ClassVector {
    pub fn new(coeffs: Vec<f64>, basis_id: ModelId) -> Self {
        Self { coeffs, basis_id }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(self.coeffs.iter().map(|c| c * s).collect(), self.basis_id)
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::new(
            self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect(),
            self.basis_id,
        )
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self::new(
            self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect(),
            self.basis_id,
        )
    }
}

/// Symmetric `n`-multilinear table of basis intersection numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct IntersectionForm {
    pub n: usize,
    pub basis_size: usize,
    /// Entry for basis indices `(i_1, …, i_n)` at `Σ i_k b^{n-k}`.
    pub table: Vec<f64>,
}

impl IntersectionForm {
    pub fn new(n: usize, basis_size: usize, table: Vec<f64>) -> Self {
        assert_eq!(table.len(), basis_size.pow(n as u32));
        Self {
            n,
            basis_size,
            table,
        }
    }

    /// Surface intersection form from a symmetric `b × b` matrix.
    pub fn from_bilinear(matrix: &[f64], basis_size: usize) -> Self {
        Self::new(2, basis_size, matrix.to_vec())
    }

    fn digits(&self, mut flat: usize) -> Vec<usize> {
        let mut out = vec![0; self.n];
        for slot in out.iter_mut().rev() {
            *slot = flat % self.basis_size;
            flat /= self.basis_size;
        }
        out
    }

    pub fn is_symmetric(&self) -> bool {
        let b = self.basis_size;
        (0..self.table.len()).all(|flat| {
            let mut d = self.digits(flat);
            d.sort_unstable();
            let sorted = d.iter().fold(0, |acc, i| acc * b + i);
            self.table[flat] == self.table[sorted]
        })
    }
}

/// Multilinear evaluation `(β_1 · … · β_n)`.
pub fn pair(classes: &[&ClassVector], form: &IntersectionForm) -> Result<f64> {
    if classes.len() != form.n {
        return Err(Error::ArityMismatch {
            expected: form.n,
            got: classes.len(),
        });
    }
    for c in classes {
        if c.coeffs.len() != form.basis_size {
            return Err(Error::ArityMismatch {
                expected: form.basis_size,
                got: c.coeffs.len(),
            });
        }
    }
    let mut total = 0.0;
    for (flat, entry) in form.table.iter().enumerate() {
        if *entry == 0.0 {
            continue;
        }
        let weight: f64 = form
            .digits(flat)
            .iter()
            .zip(classes)
            .map(|(i, c)| c.coeffs[*i])
            .product();
        total += entry * weight;
    }
    Ok(total)
}

/// `(β^k · γ^{n-k})`.
pub fn pair_powers(beta: &ClassVector, k: usize, gamma: &ClassVector, form: &IntersectionForm) -> Result<f64> {
    let mut classes = vec![beta; k];
    classes.extend(std::iter::repeat_n(gamma, form.n.saturating_sub(k)));
    pair(&classes, form)
}

/// `α_t = e^{-t}[ω₀] + (1 - e^{-t}) 2πc₁(K_X)`.
pub fn class_trajectory(model: &ModelSpec, t: f64) -> ClassVector {
    let decay = (-t).exp();
    let rise = -(-t).exp_m1();
    ClassVector::new(
        model
            .omega0_class
            .coeffs
            .iter()
            .zip(&model.k_class.coeffs)
            .map(|(w, k)| decay * w + rise * k)
            .collect(),
        model.id,
    )
}

/// Membership in the Kähler cone of the model basis: every coefficient
/// strictly positive. On the product and projective models this is the
/// whole cone; on the torus it is the cone of diagonal classes, which
/// contains every class the flow visits.
pub fn in_kahler_cone(class: &ClassVector) -> bool {
    class.coeffs.iter().all(|c| *c > 0.0)
}

/// `ν = max{k : (c₁(K_X)^k · [ω₀]^{n-k}) ≠ 0}`.
pub fn numerical_dimension(model: &ModelSpec) -> Result<usize> {
    if !model.nef_flag {
        return Err(Error::NotNef(model.id.to_string()));
    }
    let form = &model.intersection_form;
    let scale = pair_powers(&model.omega0_class, 0, &model.omega0_class, form)?.abs();
    let mut nu = 0;
    for k in 1..=model.n {
        let v = pair_powers(&model.k_class, k, &model.omega0_class, form)?;
        if v.abs() > 1e-12 * scale.max(1.0) {
            nu = k;
        }
    }
    Ok(nu)
}

/// Coefficient of `dz¹∧dz̄¹∧dz²∧dz̄²` in `α ∧ β` for `(1,1)`-forms
/// `α = α_{kl̄} dz^k∧dz̄^l`.
fn wedge(a: &[f64], b: &[f64]) -> f64 {
    a[0] * b[3] + a[3] * b[0] - a[1] * b[2] - a[2] * b[1]
}

/// Chern-Weil representatives of `c₁²` and `c₂` as densities against `ωⁿ`,
/// so that `integrate(density, metric)` is the characteristic number.
///
/// Built from the curvature endomorphism `Θ^i_j = g^{iq̄} R_{jq̄kl̄} dz^k∧dz̄^l`:
/// `c₁² ∝ tr Θ ∧ tr Θ` and `c₂ ∝ tr Θ ∧ tr Θ - tr(Θ ∧ Θ)`. With
/// `ω² = -2 det g · dz¹∧dz̄¹∧dz²∧dz̄²` the normalizations are
/// `1/(8π² det g)` and `1/(16π² det g)`.
pub fn chern_forms(curv: &CurvatureBundle) -> Result<(Vec<f64>, Vec<f64>)> {
    let metric = &curv.metric;
    let n = metric.n();
    if n != 2 {
        return Err(Error::DimensionUnsupported { n });
    }
    let points = metric.num_points();
    let mut c1_sq = vec![0.0; points];
    let mut c2 = vec![0.0; points];
    for p in 0..points {
        let ginv = metric.g_inv.at(p);
        let rm = curv.rm_at(p);
        // theta[i][j] is the (1,1)-form Θ^i_j
        let mut theta = [[[0.0; 4]; 2]; 2];
        for (i, row) in theta.iter_mut().enumerate() {
            for (j, form) in row.iter_mut().enumerate() {
                for (kl, slot) in form.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for q in 0..2 {
                        acc += ginv[i * 2 + q] * rm[(j * 2 + q) * 4 + kl];
                    }
                    *slot = acc;
                }
            }
        }
        let mut tr = [0.0; 4];
        for (kl, slot) in tr.iter_mut().enumerate() {
            *slot = theta[0][0][kl] + theta[1][1][kl];
        }
        let tr_sq = wedge(&tr, &tr);
        let mut tr_theta_sq = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                tr_theta_sq += wedge(&theta[i][j], &theta[j][i]);
            }
        }
        let det = metric.det[p];
        c1_sq[p] = tr_sq / (8.0 * PI * PI * det);
        c2[p] = (tr_sq - tr_theta_sq) / (16.0 * PI * PI * det);
    }
    Ok((c1_sq, c2))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChernReport {
    /// `(2(n+1)c₂ - n c₁²)` from the model's exact class data.
    pub my_topological: f64,
    /// `(1/(4π²n(n-1))) ∫ ((n+1)|Rm°|² - (n+2)|Ric°|²) ωⁿ`.
    pub my_curvature_integral: f64,
    /// Same integral with `|Ric°|²` replaced by `|Ric+ω|²`.
    pub my_lower_bound: f64,
    pub c2_integral: f64,
    pub c1_sq_integral: f64,
}

/// Both sides of the Miyaoka-Yau number on a surface.
pub fn my_number(model: &ModelSpec, metric: &KahlerMetric) -> Result<ChernReport> {
    let n = metric.n();
    if n != 2 {
        return Err(Error::DimensionUnsupported { n });
    }
    let curv = geometry::curvature(metric)?;
    let tl = geometry::traceless_parts(&curv)?;
    let nf = n as f64;
    let prefactor = 1.0 / (4.0 * PI * PI * nf * (nf - 1.0));
    let integrand: Vec<f64> = tl
        .norm_rm0_sq
        .iter()
        .zip(&tl.norm_ric0_sq)
        .map(|(rm, ric)| (nf + 1.0) * rm - (nf + 2.0) * ric)
        .collect();
    let lower: Vec<f64> = tl
        .norm_rm0_sq
        .iter()
        .zip(&tl.norm_ric_plus_omega_sq)
        .map(|(rm, ric)| (nf + 1.0) * rm - (nf + 2.0) * ric)
        .collect();
    let (c1_density, c2_density) = chern_forms(&curv)?;
    Ok(ChernReport {
        my_topological: 2.0 * (nf + 1.0) * model.c2_topological - nf * model.c1_sq_topological(),
        my_curvature_integral: prefactor * geometry::integrate(&integrand, metric)?,
        my_lower_bound: prefactor * geometry::integrate(&lower, metric)?,
        c2_integral: geometry::integrate(&c2_density, metric)?,
        c1_sq_integral: geometry::integrate(&c1_density, metric)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::metric_from_potential;
    use crate::models::{ModelParams, ModelSpec};

    fn model(id: ModelId) -> ModelSpec {
        ModelSpec::build(id, &ModelParams::default()).unwrap()
    }

    fn report(m: &ModelSpec, state: &[f64]) -> ChernReport {
        let g = metric_from_potential(m, 0.0, state).unwrap();
        my_number(m, &g).unwrap()
    }

    #[test]
    fn pairing_examples() {
        let m = model(ModelId::ProductESigma);
        let k = &m.k_class;
        assert_eq!(pair(&[k, k], &m.intersection_form).unwrap(), 0.0);
        let v = 4.0 * PI;
        for &t in &[0.0, 0.7, 3.0] {
            let alpha = class_trajectory(&m, t);
            let (a, b) = (1.0 + (-t).exp(), (-t).exp());
            let expect = 2.0 * a * b * v;
            let got = pair(&[&alpha, &alpha], &m.intersection_form).unwrap();
            assert!((got - expect).abs() < 1e-13 * expect);
        }
        let zero = IntersectionForm::from_bilinear(&[0.0; 4], 2);
        let e1 = ClassVector::new(vec![3.5, 0.0], m.id);
        assert_eq!(pair(&[&e1, &e1], &zero).unwrap(), 0.0);
        assert!(matches!(
            pair(&[&e1], &zero),
            Err(Error::ArityMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn trajectory_examples() {
        for m in crate::models::catalog() {
            assert_eq!(class_trajectory(&m, 0.0), m.omega0_class);
        }
        let m = model(ModelId::ProductESigma);
        let late = class_trajectory(&m, 60.0);
        assert!(late.coeffs[0].abs() < 1e-25 && (late.coeffs[1] - 1.0).abs() < 1e-15);
        let cp2 = model(ModelId::Cp2Round);
        let big_t = ((1.0 + 6.0 * PI) / (6.0 * PI)).ln();
        assert!(class_trajectory(&cp2, big_t).coeffs[0].abs() < 1e-14);
        let t: f64 = 0.02;
        let expect = (-t).exp() * (1.0 + 6.0 * PI) - 6.0 * PI;
        assert!((class_trajectory(&cp2, t).coeffs[0] - expect).abs() < 1e-13);
    }

    #[test]
    fn numerical_dimensions() {
        assert_eq!(numerical_dimension(&model(ModelId::FlatTorus)).unwrap(), 0);
        assert_eq!(numerical_dimension(&model(ModelId::ProductESigma)).unwrap(), 1);
        assert_eq!(numerical_dimension(&model(ModelId::ProductSigmaSigma)).unwrap(), 2);
        assert!(matches!(
            numerical_dimension(&model(ModelId::Cp2Round)),
            Err(Error::NotNef(_))
        ));
    }

    #[test]
    fn cp2_is_balanced() {
        let m = model(ModelId::Cp2Round);
        let r = report(&m, &m.initial_potential());
        assert!((r.my_topological - 0.0).abs() < 1e-12);
        assert!(r.my_curvature_integral.abs() < 1e-12);
        assert!((r.c2_integral - 3.0).abs() < 1e-12);
        assert!((r.c1_sq_integral - 9.0).abs() < 1e-12);
    }

    #[test]
    fn sigma_sigma_gives_eight() {
        let m = model(ModelId::ProductSigmaSigma);
        for state in [[2.0, 1.5], [1.0, 1.0], [0.3, 7.0]] {
            let r = report(&m, &state);
            assert!((r.my_topological - 8.0).abs() < 1e-12);
            assert!((r.my_curvature_integral - 8.0).abs() < 8e-12, "{r:?}");
            assert!((r.c2_integral - 4.0).abs() < 1e-12);
            assert!((r.c1_sq_integral - 8.0).abs() < 1e-12);
            assert!(r.my_curvature_integral >= r.my_lower_bound);
        }
    }

    #[test]
    fn e_sigma_and_torus_vanish() {
        let m = model(ModelId::ProductESigma);
        for state in [[2.0, 1.0], [1.0, 1.0], [5.0, 0.01]] {
            let r = report(&m, &state);
            assert_eq!(r.my_topological, 0.0);
            assert!(r.my_curvature_integral.abs() < 1e-12);
            assert!(r.c2_integral.abs() < 1e-12);
        }
        let t = model(ModelId::FlatTorus);
        let r = report(&t, &t.initial_potential());
        assert_eq!(r.my_curvature_integral, 0.0);
        assert_eq!(r.c2_integral, 0.0);
        assert_eq!(r.c1_sq_integral, 0.0);
    }

    #[test]
    fn abelian_c2_vanishes() {
        let m = model(ModelId::AbelianPerturbed);
        let g = metric_from_potential(&m, 0.0, &m.initial_potential()).unwrap();
        let r = my_number(&m, &g).unwrap();
        let vol = geometry::integrate(&vec![1.0; g.num_points()], &g).unwrap();
        assert!(r.c2_integral.abs() < 1e-6 * vol, "{r:?}");
        assert!(r.my_curvature_integral.abs() < 1e-3, "{r:?}");
    }

    #[test]
    fn wedge_route_matches_norm_route_pointwise() {
        let m = model(ModelId::AbelianPerturbed);
        let g = metric_from_potential(&m, 0.0, &m.initial_potential()).unwrap();
        let curv = geometry::curvature(&g).unwrap();
        let tl = geometry::traceless_parts(&curv).unwrap();
        let (c1, c2) = chern_forms(&curv).unwrap();
        for p in 0..g.num_points() {
            let r = curv.scalar[p];
            let c2_norm = (tl.norm_rm_sq[p] - 2.0 * tl.norm_ric_sq[p] + r * r) / (16.0 * PI * PI);
            let c1_norm = (r * r - tl.norm_ric_sq[p]) / (8.0 * PI * PI);
            assert!((c2[p] - c2_norm).abs() < 1e-8, "{} {}", c2[p], c2_norm);
            assert!((c1[p] - c1_norm).abs() < 1e-8);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn class_flow_is_a_semigroup(t in 0.0f64..20.0, s in 0.0f64..20.0, idx in 0usize..5) {
                // α_{t+s} = e^{-s} α_t + (1 - e^{-s}) K
                let m = model(ModelId::ALL[idx]);
                let at = class_trajectory(&m, t);
                let direct = class_trajectory(&m, t + s);
                let composed = at.scale((-s).exp()).add(&m.k_class.scale(-(-s).exp_m1()));
                for (a, b) in direct.coeffs.iter().zip(&composed.coeffs) {
                    prop_assert!((a - b).abs() < 1e-12 * (1.0 + a.abs()));
                }
            }

            #[test]
            fn pairing_is_symmetric_and_bilinear(
                a in proptest::collection::vec(-5.0f64..5.0, 2),
                b in proptest::collection::vec(-5.0f64..5.0, 2),
                c in proptest::collection::vec(-5.0f64..5.0, 2),
                lambda in -3.0f64..3.0,
            ) {
                let m = model(ModelId::ProductESigma);
                let f = &m.intersection_form;
                let (a, b, c) = (
                    ClassVector::new(a, m.id),
                    ClassVector::new(b, m.id),
                    ClassVector::new(c, m.id),
                );
                let ab = pair(&[&a, &b], f).unwrap();
                prop_assert!((ab - pair(&[&b, &a], f).unwrap()).abs() < 1e-12);
                let lin = pair(&[&a.scale(lambda).add(&c), &b], f).unwrap();
                let expect = lambda * ab + pair(&[&c, &b], f).unwrap();
                prop_assert!((lin - expect).abs() < 1e-9 * (1.0 + expect.abs()));
            }
        }
    }
}

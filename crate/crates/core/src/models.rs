//! Model manifolds: exact cohomology data, reference volumes, and the reduced
//! flows they carry.
//!
//! Ansatz models are products of constant holomorphic sectional curvature
//! factors. The normalized flow keeps each factor a constant multiple of its
//! reference metric, `ω_t = Σ c_i(t) ω_i`, with `c_i' = -ρ_i - c_i` where
//! `Ric(ω_i) = ρ_i ω_i`; this reduction is exact.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::chern::{self, ClassVector, IntersectionForm};
use crate::error::{Error, Result};
use crate::geometry::{GridChart, MatrixField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelId {
    FlatTorus,
    AbelianPerturbed,
    ProductESigma,
    ProductSigmaSigma,
    Cp2Round,
}

impl ModelId {
    pub const ALL: [ModelId; 5] = [
        ModelId::FlatTorus,
        ModelId::AbelianPerturbed,
        ModelId::ProductESigma,
        ModelId::ProductSigmaSigma,
        ModelId::Cp2Round,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ModelId::FlatTorus => "flat_torus_n2",
            ModelId::AbelianPerturbed => "abelian_perturbed",
            ModelId::ProductESigma => "product_E_sigma",
            ModelId::ProductSigmaSigma => "product_sigma_sigma",
            ModelId::Cp2Round => "cp2_round",
        }
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelId::ALL
            .iter()
            .copied()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::UnknownModel(s.to_string()))
    }
}

/// Overridable model parameters. Fields that do not apply to a model are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// Genus of the hyperbolic curve factors.
    pub genus: u32,
    /// Area of the elliptic curve factor.
    pub v_e: f64,
    /// Initial coefficient of the first hyperbolic factor.
    pub a0: f64,
    /// Initial coefficient of the elliptic factor.
    pub b0: f64,
    /// Initial coefficient of the second hyperbolic factor.
    pub c0: f64,
    /// Amplitude of the abelian potential perturbation.
    pub epsilon: f64,
    /// `[ω₀] = λH` on the projective plane.
    pub lambda: f64,
    /// Grid size; model default when absent.
    pub grid_points: Option<usize>,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            genus: 2,
            v_e: 1.0,
            a0: 2.0,
            b0: 1.0,
            c0: 1.5,
            epsilon: 0.01,
            lambda: 1.0,
            grid_points: None,
        }
    }
}

/// One factor of an ansatz product.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnsatzFactor {
    pub label: &'static str,
    pub dim: usize,
    pub holomorphic_curvature: f64,
    /// Basis element of `H^{1,1}` carried by `[ω_i]`.
    pub class_index: usize,
    /// `[ω_i]` equals `class_scale` times that basis element.
    pub class_scale: f64,
}

impl AnsatzFactor {
    /// `ρ` in `Ric(ω_i) = ρ ω_i`.
    pub fn einstein_constant(&self) -> f64 {
        0.5 * self.holomorphic_curvature * (self.dim as f64 + 1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnsatzSpec {
    pub factors: Vec<AnsatzFactor>,
    pub initial: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Reduction {
    /// Potentials on the periodic `(Re z₁, Re z₂)` grid; `epsilon` is the
    /// amplitude of the initial perturbation.
    Grid { epsilon: f64 },
    Ansatz(AnsatzSpec),
}

/// A smooth volume form `Ω = density · (chart measure)`, in the same
/// normalization as `det g`, so that `ωⁿ/Ω = det g / density`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceVolume {
    pub density: Vec<f64>,
    /// `Ric(Ω) = -i∂∂̄ log Ω`.
    pub ric_omega_form: MatrixField,
    /// Whether `-Ric(Ω)` is positive semidefinite everywhere.
    pub semi_positive_flag: bool,
}

impl ReferenceVolume {
    fn constant(n: usize, points: usize, ric_diag: &[f64]) -> Self {
        let mut ric = MatrixField::zeros(n, points);
        for p in 0..points {
            let m = ric.at_mut(p);
            for (i, v) in ric_diag.iter().enumerate() {
                m[i * n + i] = *v;
            }
        }
        let semi_positive_flag = (0..points).all(|p| {
            let neg: Vec<f64> = ric.at(p).iter().map(|v| -v).collect();
            crate::geometry::linalg::min_eigenvalue(&neg, n) >= 0.0
        });
        Self {
            density: vec![1.0; points],
            ric_omega_form: ric,
            semi_positive_flag,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub id: ModelId,
    pub n: usize,
    pub chart: GridChart,
    pub h11_basis: Vec<&'static str>,
    pub intersection_form: IntersectionForm,
    /// `2πc₁(K_X)`.
    pub k_class: ClassVector,
    pub omega0_class: ClassVector,
    pub c2_topological: f64,
    pub nef_flag: bool,
    pub big_flag: bool,
    pub semi_positive_flag: bool,
    pub refvol: ReferenceVolume,
    pub reduction: Reduction,
    /// `∫ f ωⁿ = volume_constant · Σ f det g · cell_weight`.
    pub volume_constant: f64,
    pub params: ModelParams,
}

/// What a model is about to be used for; hypotheses differ.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Flow,
    ScalarTheorem,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub model: ModelId,
    pub checks: Vec<(String, bool)>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.checks.iter().all(|(_, ok)| *ok)
    }

    fn violations(&self) -> Vec<String> {
        self.checks
            .iter()
            .filter(|(_, ok)| !ok)
            .map(|(name, _)| name.clone())
            .collect()
    }
}

fn hyperbolic_area(genus: u32) -> f64 {
    // Gauss-Bonnet with Gaussian curvature -1
    2.0 * PI * (2.0 * genus as f64 - 2.0)
}

fn product_form(v: f64) -> IntersectionForm {
    IntersectionForm::from_bilinear(&[0.0, v, v, 0.0], 2)
}

impl ModelSpec {
    pub fn build(id: ModelId, params: &ModelParams) -> Result<Self> {
        let p = params.clone();
        let mut bad = Vec::new();
        if matches!(id, ModelId::ProductESigma | ModelId::ProductSigmaSigma) && p.genus < 2 {
            bad.push(format!("hyperbolic factor needs genus >= 2, got {}", p.genus));
        }
        if id == ModelId::ProductESigma && !(p.v_e.is_finite() && p.v_e > 0.0) {
            bad.push(format!("elliptic area must be positive, got {}", p.v_e));
        }
        if !bad.is_empty() {
            return Err(Error::InvalidModel(bad));
        }
        match id {
            ModelId::FlatTorus | ModelId::AbelianPerturbed => {
                let default_n = if id == ModelId::FlatTorus { 16 } else { 64 };
                let chart = GridChart::periodic(2, p.grid_points.unwrap_or(default_n))?;
                let points = chart.num_points();
                let epsilon = if id == ModelId::FlatTorus { 0.0 } else { p.epsilon };
                Ok(Self {
                    id,
                    n: 2,
                    h11_basis: vec!["[i dz1 dz1bar]", "[i dz2 dz2bar]"],
                    intersection_form: product_form(1.0),
                    k_class: ClassVector::new(vec![0.0, 0.0], id),
                    omega0_class: ClassVector::new(vec![1.0, 1.0], id),
                    c2_topological: 0.0,
                    nef_flag: true,
                    big_flag: false,
                    semi_positive_flag: true,
                    refvol: ReferenceVolume::constant(2, points, &[0.0, 0.0]),
                    reduction: Reduction::Grid { epsilon },
                    volume_constant: 2.0,
                    chart,
                    params: p,
                })
            }
            ModelId::ProductESigma => {
                let v_sigma = hyperbolic_area(p.genus);
                let v = p.v_e * v_sigma;
                let factors = vec![
                    AnsatzFactor {
                        label: "hyperbolic",
                        dim: 1,
                        holomorphic_curvature: -1.0,
                        class_index: 1,
                        class_scale: 1.0,
                    },
                    AnsatzFactor {
                        label: "elliptic",
                        dim: 1,
                        holomorphic_curvature: 0.0,
                        class_index: 0,
                        class_scale: 1.0,
                    },
                ];
                Ok(Self {
                    id,
                    n: 2,
                    chart: GridChart::ansatz(2),
                    h11_basis: vec!["[omega_E]", "[omega_hyp]"],
                    intersection_form: product_form(v),
                    k_class: ClassVector::new(vec![0.0, 1.0], id),
                    omega0_class: ClassVector::new(vec![p.b0, p.a0], id),
                    c2_topological: 0.0,
                    nef_flag: true,
                    big_flag: false,
                    semi_positive_flag: true,
                    refvol: ReferenceVolume::constant(2, 1, &[-1.0, 0.0]),
                    reduction: Reduction::Ansatz(AnsatzSpec {
                        factors,
                        initial: vec![p.a0, p.b0],
                    }),
                    volume_constant: 2.0 * v,
                    params: p,
                })
            }
            ModelId::ProductSigmaSigma => {
                let v_sigma = hyperbolic_area(p.genus);
                let euler = 2.0 - 2.0 * p.genus as f64;
                let hyp = |class_index| AnsatzFactor {
                    label: "hyperbolic",
                    dim: 1,
                    holomorphic_curvature: -1.0,
                    class_index,
                    class_scale: 1.0,
                };
                Ok(Self {
                    id,
                    n: 2,
                    chart: GridChart::ansatz(2),
                    h11_basis: vec!["[omega_1]", "[omega_2]"],
                    intersection_form: product_form(v_sigma * v_sigma),
                    k_class: ClassVector::new(vec![1.0, 1.0], id),
                    omega0_class: ClassVector::new(vec![p.a0, p.c0], id),
                    c2_topological: euler * euler,
                    nef_flag: true,
                    big_flag: true,
                    semi_positive_flag: true,
                    refvol: ReferenceVolume::constant(2, 1, &[-1.0, -1.0]),
                    reduction: Reduction::Ansatz(AnsatzSpec {
                        factors: vec![hyp(0), hyp(1)],
                        initial: vec![p.a0, p.c0],
                    }),
                    volume_constant: 2.0 * v_sigma * v_sigma,
                    params: p,
                })
            }
            ModelId::Cp2Round => {
                // Fubini-Study with Ric(ω_FS) = 3 ω_FS, so [ω_FS] = 2πH
                let factor = AnsatzFactor {
                    label: "fubini-study",
                    dim: 2,
                    holomorphic_curvature: 2.0,
                    class_index: 0,
                    class_scale: 2.0 * PI,
                };
                Ok(Self {
                    id,
                    n: 2,
                    chart: GridChart::ansatz(2),
                    h11_basis: vec!["H"],
                    intersection_form: IntersectionForm::from_bilinear(&[1.0], 1),
                    k_class: ClassVector::new(vec![-6.0 * PI], id),
                    omega0_class: ClassVector::new(vec![p.lambda], id),
                    c2_topological: 3.0,
                    nef_flag: false,
                    big_flag: false,
                    semi_positive_flag: false,
                    refvol: ReferenceVolume::constant(2, 1, &[3.0, 3.0]),
                    reduction: Reduction::Ansatz(AnsatzSpec {
                        factors: vec![factor],
                        initial: vec![p.lambda / (2.0 * PI)],
                    }),
                    volume_constant: 4.0 * PI * PI,
                    params: p,
                })
            }
        }
    }

    pub fn is_grid(&self) -> bool {
        matches!(self.reduction, Reduction::Grid { .. })
    }

    pub fn ansatz(&self) -> Option<&AnsatzSpec> {
        match &self.reduction {
            Reduction::Ansatz(spec) => Some(spec),
            Reduction::Grid { .. } => None,
        }
    }

    /// Initial potential (grid models) or initial factor coefficients.
    pub fn initial_potential(&self) -> Vec<f64> {
        match &self.reduction {
            Reduction::Grid { epsilon } => {
                let eps = *epsilon;
                self.chart
                    .sample(|x, y| eps * ((2.0 * PI * x).cos() + (2.0 * PI * y).cos()))
            }
            Reduction::Ansatz(spec) => spec.initial.clone(),
        }
    }

    /// `c₁(X)²` from the class data: `(2πc₁(K_X))² / 4π²`.
    pub fn c1_sq_topological(&self) -> f64 {
        chern::pair(&[&self.k_class, &self.k_class], &self.intersection_form)
            .expect("model classes have matching arity")
            / (4.0 * PI * PI)
    }

    /// Cohomology class of an ansatz metric with the given coefficients.
    pub fn ansatz_class(&self, coeffs: &[f64]) -> Option<ClassVector> {
        let spec = self.ansatz()?;
        let mut out = vec![0.0; self.omega0_class.coeffs.len()];
        for (f, c) in spec.factors.iter().zip(coeffs) {
            out[f.class_index] += f.class_scale * c;
        }
        Some(ClassVector::new(out, self.id))
    }
}

/// The model catalog with default parameters.
pub fn catalog() -> Vec<ModelSpec> {
    ModelId::ALL
        .iter()
        .map(|id| ModelSpec::build(*id, &ModelParams::default()).expect("default models are valid"))
        .collect()
}

/// Closed-form ansatz state at time `t`: `c_i(t) = -ρ_i + (c_i(0) + ρ_i) e^{-t}`.
pub fn oracle_solution(model: &ModelSpec, t: f64) -> Result<Vec<f64>> {
    let spec = model
        .ansatz()
        .ok_or_else(|| Error::NoClosedForm(model.id.to_string()))?;
    // c₀ e^{-t} - ρ (1 - e^{-t}), with 1 - e^{-t} = -expm1(-t)
    let decay = (-t).exp();
    let rise = -(-t).exp_m1();
    Ok(spec
        .factors
        .iter()
        .zip(&spec.initial)
        .map(|(f, c0)| c0 * decay - f.einstein_constant() * rise)
        .collect())
}

/// The reduced vector field `c_i' = -ρ_i - c_i`.
pub fn ansatz_vector_field(spec: &AnsatzSpec, coeffs: &[f64]) -> Vec<f64> {
    spec.factors
        .iter()
        .zip(coeffs)
        .map(|(f, c)| -f.einstein_constant() - c)
        .collect()
}

/// Checks the model invariants and the hypotheses required for `purpose`.
pub fn validate(model: &ModelSpec, purpose: Purpose) -> Result<ValidationReport> {
    let mut checks = Vec::new();
    let basis = model.h11_basis.len();
    checks.push((
        "class vectors match basis size".to_string(),
        model.k_class.coeffs.len() == basis && model.omega0_class.coeffs.len() == basis,
    ));
    checks.push((
        "intersection form symmetric".to_string(),
        model.intersection_form.is_symmetric(),
    ));
    checks.push((
        "big implies nef".to_string(),
        !model.big_flag || model.nef_flag,
    ));
    checks.push((
        "semi-positive implies nef".to_string(),
        !model.semi_positive_flag || model.nef_flag,
    ));
    checks.push((
        "semi-positive flag matches -Ric(Omega) >= 0".to_string(),
        !model.semi_positive_flag || model.refvol.semi_positive_flag,
    ));
    checks.push((
        "reference density positive".to_string(),
        model.refvol.density.iter().all(|d| *d > 0.0),
    ));
    checks.push((
        "[omega_0] in the Kähler cone".to_string(),
        chern::in_kahler_cone(&model.omega0_class),
    ));
    if let Some(spec) = model.ansatz() {
        checks.push((
            "initial coefficients positive".to_string(),
            spec.initial.iter().all(|c| *c > 0.0),
        ));
    }
    if purpose == Purpose::ScalarTheorem {
        let diff = model.omega0_class.sub(&model.k_class);
        checks.push((
            "[omega_0] - 2 pi c1(K_X) in the Kähler cone".to_string(),
            chern::in_kahler_cone(&diff),
        ));
        checks.push(("K_X semi-positive".to_string(), model.semi_positive_flag));
        checks.push(("K_X not big".to_string(), !model.big_flag));
    }
    let report = ValidationReport {
        model: model.id,
        checks,
    };
    if report.is_valid() {
        Ok(report)
    } else {
        Err(Error::InvalidModel(report.violations()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_degenerate_factors() {
        let p = ModelParams { genus: 1, ..ModelParams::default() };
        assert!(ModelSpec::build(ModelId::ProductSigmaSigma, &p).is_err());
        assert!(ModelSpec::build(ModelId::ProductESigma, &p).is_err());
        let p = ModelParams { v_e: 0.0, ..ModelParams::default() };
        assert!(ModelSpec::build(ModelId::ProductESigma, &p).is_err());
        assert!(ModelSpec::build(ModelId::FlatTorus, &p).is_ok());
    }

    #[test]
    fn catalog_has_the_five_models() {
        let ids: Vec<&str> = catalog().iter().map(|m| m.id.as_str()).collect();
        assert_eq!(
            ids,
            ["flat_torus_n2", "abelian_perturbed", "product_E_sigma", "product_sigma_sigma", "cp2_round"]
        );
        for id in ModelId::ALL {
            assert_eq!(id.as_str().parse::<ModelId>().unwrap(), id);
        }
        assert!(matches!("k3".parse::<ModelId>(), Err(Error::UnknownModel(_))));
    }

    #[test]
    fn catalog_class_data() {
        let e_sigma = ModelSpec::build(ModelId::ProductESigma, &ModelParams::default()).unwrap();
        assert_eq!(e_sigma.k_class.coeffs, vec![0.0, 1.0]);
        let cp2 = ModelSpec::build(ModelId::Cp2Round, &ModelParams::default()).unwrap();
        assert!(!cp2.nef_flag);
        assert!((cp2.c1_sq_topological() - 9.0).abs() < 1e-14);
        assert_eq!(cp2.c2_topological, 3.0);
        let torus = ModelSpec::build(ModelId::FlatTorus, &ModelParams::default()).unwrap();
        assert_eq!(torus.k_class.coeffs, vec![0.0, 0.0]);
        assert_eq!(torus.c2_topological, 0.0);
        let ss = ModelSpec::build(ModelId::ProductSigmaSigma, &ModelParams::default()).unwrap();
        assert_eq!(ss.c2_topological, 4.0);
        assert!((ss.c1_sq_topological() - 8.0).abs() < 1e-13);
    }

    #[test]
    fn oracle_values() {
        let m = ModelSpec::build(ModelId::ProductESigma, &ModelParams::default()).unwrap();
        let s = oracle_solution(&m, 2f64.ln()).unwrap();
        assert!((s[0] - 1.5).abs() < 1e-15);
        assert!((s[1] - 0.5).abs() < 1e-15);
        for model in catalog().iter().filter(|m| !m.is_grid()) {
            assert_eq!(oracle_solution(model, 0.0).unwrap(), model.initial_potential());
        }
        let cp2 = ModelSpec::build(
            ModelId::Cp2Round,
            &ModelParams {
                lambda: 6.0 * PI,
                ..Default::default()
            },
        )
        .unwrap();
        assert!((cp2.initial_potential()[0] - 3.0).abs() < 1e-15);
        assert!(oracle_solution(&cp2, 2f64.ln()).unwrap()[0].abs() < 1e-15);
        let torus = ModelSpec::build(ModelId::FlatTorus, &ModelParams::default()).unwrap();
        assert!(matches!(oracle_solution(&torus, 1.0), Err(Error::NoClosedForm(_))));
    }

    #[test]
    fn oracle_satisfies_vector_field() {
        for model in catalog().iter().filter(|m| !m.is_grid()) {
            let spec = model.ansatz().unwrap();
            for &t in &[0.0, 0.01, 0.5, 3.0] {
                let c = oracle_solution(model, t).unwrap();
                let rhs = ansatz_vector_field(spec, &c);
                // derivative of the closed form: -(c₀ + ρ) e^{-t}
                for ((f, c0), r) in spec.factors.iter().zip(&spec.initial).zip(&rhs) {
                    let exact = -(c0 + f.einstein_constant()) * (-t).exp();
                    assert!((exact - r).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn validation_routes_hypotheses() {
        let m = ModelSpec::build(ModelId::ProductESigma, &ModelParams::default()).unwrap();
        assert!(validate(&m, Purpose::ScalarTheorem).unwrap().is_valid());
        let thin = ModelSpec::build(
            ModelId::ProductESigma,
            &ModelParams {
                a0: 0.5,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(validate(&thin, Purpose::Flow).is_ok());
        match validate(&thin, Purpose::ScalarTheorem) {
            Err(Error::InvalidModel(items)) => assert_eq!(items.len(), 1),
            other => panic!("unexpected {other:?}"),
        }
        let torus = ModelSpec::build(ModelId::FlatTorus, &ModelParams::default()).unwrap();
        assert!(validate(&torus, Purpose::ScalarTheorem).is_ok());
        for m in catalog() {
            assert!(validate(&m, Purpose::Flow).is_ok(), "{}", m.id);
        }
    }
}

//! Built-in model Hamiltonians.
//!
//! * `normal_form`: `H = eta + sum_j b_j / T0` on `(theta, y, eta, eta_y)`, with
//!   `theta` an angle of period `T0` and `b_j` the elementary quadratic forms
//!   (`mu y eta_y`, `omega (y^2 + eta_y^2) / 2`, loxodromic pairs). The orbit
//!   `{y = eta_y = 0}` has period `T0` and Floquet exponents exactly `mu_j`.
//! * `hyperboloid_geodesic`: geodesic flow on `x^2 + y^2 - z^2 = 1` in the chart
//!   `(cosh u cos v, cosh u sin v, sinh u)`, metric `diag(cosh 2u, cosh^2 u)`.
//! * `coulomb_stark`: `H = |xi|^2 + 1/|r| + a x_1` on `R^3`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::hamiltonian::{CustomHamiltonian, Hamiltonian, HamiltonianSystem, PhasePoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    NormalForm,
    HyperboloidGeodesic,
    CoulombStark,
    Custom,
}

impl ModelKind {
    fn parse(s: &str) -> Result<Self> {
        match s {
            "normal_form" => Ok(ModelKind::NormalForm),
            "hyperboloid_geodesic" => Ok(ModelKind::HyperboloidGeodesic),
            "coulomb_stark" => Ok(ModelKind::CoulombStark),
            "custom" => Ok(ModelKind::Custom),
            other => Err(Error::Config(format!("unknown system kind '{other}'"))),
        }
    }
}

/// Declarative description of a model system, loadable from
/// `{"kind": "...", "parameters": {...}}`.
///
/// `normal_form` parameters: `T0` and, for modes `j = 1, 2, ...`, `mu{j}_re`
/// and `mu{j}_im` (a missing part is zero). `coulomb_stark`: `a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSystemSpec {
    pub kind: ModelKind,
    #[serde(default)]
    pub parameters: BTreeMap<String, f64>,
}

#[derive(Deserialize)]
struct RawSpec {
    kind: String,
    #[serde(default)]
    parameters: BTreeMap<String, f64>,
}

impl ModelSystemSpec {
    pub fn new(kind: ModelKind) -> Self {
        ModelSystemSpec {
            kind,
            parameters: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.parameters.insert(key.to_string(), value);
        self
    }

    /// Normal form with the given per-return exponents `(re, im)`.
    pub fn normal_form(t0: f64, modes: &[(f64, f64)]) -> Self {
        let mut spec = ModelSystemSpec::new(ModelKind::NormalForm).with("T0", t0);
        for (j, (re, im)) in modes.iter().enumerate() {
            spec = spec
                .with(&format!("mu{}_re", j + 1), *re)
                .with(&format!("mu{}_im", j + 1), *im);
        }
        spec
    }

    pub fn hyperboloid() -> Self {
        ModelSystemSpec::new(ModelKind::HyperboloidGeodesic)
    }

    pub fn coulomb_stark(a: f64) -> Self {
        ModelSystemSpec::new(ModelKind::CoulombStark).with("a", a)
    }

    pub fn from_json_value(v: &serde_json::Value) -> Result<Self> {
        let raw: RawSpec = serde_json::from_value(v.clone())
            .map_err(|e| Error::Config(format!("invalid system definition: {e}")))?;
        let spec = ModelSystemSpec {
            kind: ModelKind::parse(&raw.kind)?,
            parameters: raw.parameters,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let v: serde_json::Value =
            serde_json::from_str(s).map_err(|e| Error::Config(format!("invalid system JSON: {e}")))?;
        Self::from_json_value(&v)
    }

    fn param(&self, key: &str) -> Option<f64> {
        self.parameters.get(key).copied()
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            ModelKind::NormalForm => {
                let t0 = self
                    .param("T0")
                    .ok_or_else(|| Error::Config("normal_form requires parameter T0".into()))?;
                if !(t0 > 0.0 && t0.is_finite()) {
                    return Err(Error::Config(format!("normal_form requires T0 > 0 (got {t0})")));
                }
                let modes = self.normal_form_modes()?;
                if modes.is_empty() {
                    return Err(Error::Config("normal_form requires at least one mode".into()));
                }
                Ok(())
            }
            ModelKind::CoulombStark => {
                let a = self
                    .param("a")
                    .ok_or_else(|| Error::Config("coulomb_stark requires parameter a".into()))?;
                if !(a > 0.0 && a.is_finite()) {
                    return Err(Error::Config(format!("coulomb_stark requires a > 0 (got {a})")));
                }
                Ok(())
            }
            ModelKind::HyperboloidGeodesic => Ok(()),
            ModelKind::Custom => Err(Error::Config(
                "custom systems are registered programmatically, not from a definition".into(),
            )),
        }
    }

    pub fn normal_form_modes(&self) -> Result<Vec<NormalMode>> {
        let mut modes = Vec::new();
        for j in 1.. {
            let re = self.param(&format!("mu{j}_re"));
            let im = self.param(&format!("mu{j}_im"));
            if re.is_none() && im.is_none() {
                break;
            }
            modes.push(NormalMode::from_exponent(re.unwrap_or(0.0), im.unwrap_or(0.0))?);
        }
        for key in self.parameters.keys() {
            let known = key == "T0"
                || (key.starts_with("mu") && (key.ends_with("_re") || key.ends_with("_im")));
            if !known {
                return Err(Error::Config(format!("unknown normal_form parameter '{key}'")));
            }
        }
        Ok(modes)
    }

    /// Stable identifier of the system definition (SHA-256 of canonical JSON).
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("spec serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    /// A point on (or near) the distinguished periodic orbit at energy `e`.
    pub fn seed_point(&self, e: f64) -> Result<PhasePoint> {
        self.validate()?;
        match self.kind {
            ModelKind::NormalForm => {
                let n = 1 + self.normal_form_modes()?.iter().map(|m| m.dof()).sum::<usize>();
                let x = vec![0.0; n];
                let mut xi = vec![0.0; n];
                xi[0] = e;
                PhasePoint::new(x, xi)
            }
            ModelKind::HyperboloidGeodesic => {
                if !(e > 0.0) {
                    return Err(Error::Config(format!(
                        "hyperboloid geodesics need energy E > 0 (got {e})"
                    )));
                }
                PhasePoint::new(vec![0.0, 0.0], vec![0.0, (2.0 * e).sqrt()])
            }
            ModelKind::CoulombStark => {
                let a = self.param("a").unwrap_or(1.0);
                let saddle = 2.0 * a.sqrt();
                if !(e > saddle) {
                    return Err(Error::Config(format!(
                        "coulomb_stark needs energy E > 2 sqrt(a) = {saddle} (got {e})"
                    )));
                }
                PhasePoint::new(vec![1.0 / a.sqrt(), 0.0, 0.0], vec![(e - saddle).sqrt(), 0.0, 0.0])
            }
            ModelKind::Custom => Err(Error::Config("custom systems have no built-in seed".into())),
        }
    }
}

/// One transversal mode of the normal-form model, given by its exponent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormalMode {
    /// `mu > 0`: `b = mu y eta_y`.
    Hyperbolic(f64),
    /// `mu = i omega`: `b = omega (y^2 + eta_y^2) / 2`.
    Elliptic(f64),
    /// `mu = a + i b`, `a > 0`, `b != 0`; occupies two degrees of freedom.
    Loxodromic(f64, f64),
}

impl NormalMode {
    pub fn from_exponent(re: f64, im: f64) -> Result<Self> {
        match (re, im) {
            (r, i) if r > 0.0 && i == 0.0 => Ok(NormalMode::Hyperbolic(r)),
            (r, i) if r == 0.0 && i != 0.0 => Ok(NormalMode::Elliptic(i)),
            (r, i) if r > 0.0 && i != 0.0 => Ok(NormalMode::Loxodromic(r, i)),
            (r, i) => Err(Error::Config(format!(
                "normal_form mode exponent {r} + {i}i must have Re > 0, or Re = 0 and Im != 0"
            ))),
        }
    }

    pub fn dof(&self) -> usize {
        match self {
            NormalMode::Loxodromic(..) => 2,
            _ => 1,
        }
    }
}

/// Quadratic normal-form Hamiltonian around an orbit of period `T0`.
#[derive(Debug, Clone)]
pub struct NormalForm {
    t0: f64,
    n: usize,
    /// Constant symmetric Hessian.
    hess: DMatrix<f64>,
}

impl NormalForm {
    pub fn new(t0: f64, modes: &[NormalMode]) -> Self {
        let n = 1 + modes.iter().map(|m| m.dof()).sum::<usize>();
        let mut hess = DMatrix::zeros(2 * n, 2 * n);
        let mut k = 1;
        for mode in modes {
            match *mode {
                NormalMode::Hyperbolic(mu) => {
                    let c = mu / t0;
                    hess[(k, n + k)] = c;
                    hess[(n + k, k)] = c;
                }
                NormalMode::Elliptic(omega) => {
                    let c = omega / t0;
                    hess[(k, k)] = c;
                    hess[(n + k, n + k)] = c;
                }
                NormalMode::Loxodromic(a, b) => {
                    // a (y1 eta1 + y2 eta2) + b (y2 eta1 - y1 eta2)
                    let (a, b) = (a / t0, b / t0);
                    let (y1, y2, e1, e2) = (k, k + 1, n + k, n + k + 1);
                    for (i, j, v) in [(y1, e1, a), (y2, e2, a), (y2, e1, b), (y1, e2, -b)] {
                        hess[(i, j)] = v;
                        hess[(j, i)] = v;
                    }
                }
            }
            k += mode.dof();
        }
        NormalForm { t0, n, hess }
    }
}

impl Hamiltonian for NormalForm {
    fn dof(&self) -> usize {
        self.n
    }

    fn energy(&self, z: &DVector<f64>) -> Result<f64> {
        let mut q = z.clone();
        q[0] = 0.0;
        q[self.n] = 0.0;
        Ok(z[self.n] + 0.5 * q.dot(&(&self.hess * &q)))
    }

    fn gradient(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        let mut q = z.clone();
        q[0] = 0.0;
        q[self.n] = 0.0;
        let mut g = &self.hess * &q;
        g[self.n] += 1.0;
        Ok(g)
    }

    fn hessian(&self, _z: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(self.hess.clone())
    }

    fn has_analytic_gradient(&self) -> bool {
        true
    }

    fn has_analytic_hessian(&self) -> bool {
        true
    }

    fn angle_periods(&self) -> Vec<Option<f64>> {
        let mut p = vec![None; self.n];
        p[0] = Some(self.t0);
        p
    }
}

/// Geodesic flow of the one-sheeted hyperboloid, coordinates `(u, v, xi_u, xi_v)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct HyperboloidGeodesic;

impl HyperboloidGeodesic {
    /// Metric coefficients `(g_uu, g_vv)` at `u`.
    pub fn metric(u: f64) -> (f64, f64) {
        ((2.0 * u).cosh(), u.cosh().powi(2))
    }
}

impl Hamiltonian for HyperboloidGeodesic {
    fn dof(&self) -> usize {
        2
    }

    fn energy(&self, z: &DVector<f64>) -> Result<f64> {
        let (u, pu, pv) = (z[0], z[2], z[3]);
        let (guu, gvv) = Self::metric(u);
        Ok(0.5 * (pu * pu / guu + pv * pv / gvv))
    }

    fn gradient(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        let (u, pu, pv) = (z[0], z[2], z[3]);
        let s2 = 1.0 / (2.0 * u).cosh();
        let t2 = (2.0 * u).tanh();
        let s1sq = 1.0 / u.cosh().powi(2);
        let t1 = u.tanh();
        Ok(DVector::from_vec(vec![
            -pu * pu * s2 * t2 - pv * pv * s1sq * t1,
            0.0,
            pu * s2,
            pv * s1sq,
        ]))
    }

    fn hessian(&self, z: &DVector<f64>) -> Result<DMatrix<f64>> {
        let (u, pu, pv) = (z[0], z[2], z[3]);
        let s2 = 1.0 / (2.0 * u).cosh();
        let t2 = (2.0 * u).tanh();
        let s1sq = 1.0 / u.cosh().powi(2);
        let t1 = u.tanh();
        let mut h = DMatrix::zeros(4, 4);
        h[(0, 0)] = -pu * pu * 2.0 * s2 * (s2 * s2 - t2 * t2) - pv * pv * s1sq * (s1sq - 2.0 * t1 * t1);
        h[(0, 2)] = -2.0 * pu * s2 * t2;
        h[(2, 0)] = h[(0, 2)];
        h[(0, 3)] = -2.0 * pv * s1sq * t1;
        h[(3, 0)] = h[(0, 3)];
        h[(2, 2)] = s2;
        h[(3, 3)] = s1sq;
        Ok(h)
    }

    fn has_analytic_gradient(&self) -> bool {
        true
    }

    fn has_analytic_hessian(&self) -> bool {
        true
    }

    fn angle_periods(&self) -> Vec<Option<f64>> {
        vec![None, Some(2.0 * std::f64::consts::PI)]
    }
}

/// Repulsive Coulomb potential with a Stark field: `|xi|^2 + 1/|r| + a x_1`.
#[derive(Debug, Clone, Copy)]
pub struct CoulombStark {
    pub a: f64,
}

const COULOMB_CORE: f64 = 1e-12;

impl CoulombStark {
    fn radius(&self, z: &DVector<f64>) -> Result<f64> {
        let r = (z[0] * z[0] + z[1] * z[1] + z[2] * z[2]).sqrt();
        if r < COULOMB_CORE {
            return Err(Error::Evaluation {
                point: z.iter().cloned().collect(),
                reason: "Coulomb singularity at r = 0".into(),
            });
        }
        Ok(r)
    }
}

impl Hamiltonian for CoulombStark {
    fn dof(&self) -> usize {
        3
    }

    fn energy(&self, z: &DVector<f64>) -> Result<f64> {
        let r = self.radius(z)?;
        Ok(z[3] * z[3] + z[4] * z[4] + z[5] * z[5] + 1.0 / r + self.a * z[0])
    }

    fn gradient(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        let r = self.radius(z)?;
        let r3 = r * r * r;
        Ok(DVector::from_vec(vec![
            -z[0] / r3 + self.a,
            -z[1] / r3,
            -z[2] / r3,
            2.0 * z[3],
            2.0 * z[4],
            2.0 * z[5],
        ]))
    }

    fn hessian(&self, z: &DVector<f64>) -> Result<DMatrix<f64>> {
        let r = self.radius(z)?;
        let r2 = r * r;
        let r5 = r2 * r2 * r;
        let mut h = DMatrix::zeros(6, 6);
        for i in 0..3 {
            for j in 0..3 {
                let delta = if i == j { r2 } else { 0.0 };
                h[(i, j)] = (3.0 * z[i] * z[j] - delta) / r5;
            }
            h[(3 + i, 3 + i)] = 2.0;
        }
        Ok(h)
    }

    fn has_analytic_gradient(&self) -> bool {
        true
    }

    fn has_analytic_hessian(&self) -> bool {
        true
    }
}

/// Builds the Hamiltonian system described by `spec`.
pub fn build_model(spec: &ModelSystemSpec) -> Result<HamiltonianSystem> {
    spec.validate()?;
    let label = format!("{:?}", spec.kind);
    Ok(match spec.kind {
        ModelKind::NormalForm => {
            let t0 = spec.param("T0").expect("validated");
            let modes = spec.normal_form_modes()?;
            HamiltonianSystem::new(label, NormalForm::new(t0, &modes))
        }
        ModelKind::HyperboloidGeodesic => HamiltonianSystem::new(label, HyperboloidGeodesic),
        ModelKind::CoulombStark => HamiltonianSystem::new(
            label,
            CoulombStark {
                a: spec.param("a").expect("validated"),
            },
        ),
        ModelKind::Custom => unreachable!("rejected by validate"),
    })
}

/// `H = |z|^2 / 2` on `T*R^n`; every orbit has period `2 pi`.
pub fn harmonic_oscillator(n: usize) -> HamiltonianSystem {
    HamiltonianSystem::new(
        "harmonic_oscillator",
        CustomHamiltonian::new(n, |z| 0.5 * z.norm_squared())
            .with_gradient(|z| z.clone())
            .with_hessian(move |z| DMatrix::identity(z.len(), z.len())),
    )
}

/// `H = |xi|^2 / 2`.
pub fn free_particle(n: usize) -> HamiltonianSystem {
    HamiltonianSystem::new(
        "free_particle",
        CustomHamiltonian::new(n, move |z| 0.5 * z.rows(n, n).norm_squared())
            .with_gradient(move |z| {
                let mut g = z.clone();
                g.rows_mut(0, n).fill(0.0);
                g
            })
            .with_hessian(move |_| {
                let mut h = DMatrix::zeros(2 * n, 2 * n);
                for i in n..2 * n {
                    h[(i, i)] = 1.0;
                }
                h
            }),
    )
}

//! Phase-space geometry and Hamiltonian evaluation.
//!
//! Phase-space vectors are ordered `(x_1..x_n, xi_1..xi_n)` and the symplectic
//! form is `sigma(u, v) = <J u, v>` with `J = [[0, I], [-I, 0]]`, so that the
//! Hamilton vector field reads `X_H = J grad H = (dH/dxi, -dH/dx)`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// A point `(x, xi)` of `T*R^n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub x: Vec<f64>,
    pub xi: Vec<f64>,
}

impl PhasePoint {
    pub fn new(x: Vec<f64>, xi: Vec<f64>) -> Result<Self> {
        let p = PhasePoint { x, xi };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.len() != self.xi.len() {
            return Err(Error::Dimension(format!(
                "x has length {} but xi has length {}",
                self.x.len(),
                self.xi.len()
            )));
        }
        if self.x.is_empty() {
            return Err(Error::Dimension("phase point needs at least one degree of freedom".into()));
        }
        if self.x.iter().chain(&self.xi).any(|v| !v.is_finite()) {
            return Err(Error::Evaluation {
                point: self.to_vector().iter().cloned().collect(),
                reason: "non-finite phase-space coordinate".into(),
            });
        }
        Ok(())
    }

    pub fn dof(&self) -> usize {
        self.x.len()
    }

    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_iterator(2 * self.x.len(), self.x.iter().chain(&self.xi).cloned())
    }

    /// Splits a `2n` vector into configuration and momentum halves.
    pub fn from_vector(z: &DVector<f64>) -> Self {
        let n = z.len() / 2;
        PhasePoint {
            x: z.rows(0, n).iter().cloned().collect(),
            xi: z.rows(n, n).iter().cloned().collect(),
        }
    }
}

/// The standard symplectic form on `R^{2m}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticForm {
    matrix: DMatrix<f64>,
}

impl SymplecticForm {
    pub fn standard(m: usize) -> Self {
        SymplecticForm {
            matrix: linalg::standard_j(m),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn eval(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        (&self.matrix * u).dot(v)
    }
}

/// A principal symbol `H_0` (plus an optional subprincipal term `H_1`) on `T*R^n`.
///
/// Only `dof` and `energy` are required. Gradients and Hessians fall back to
/// central finite differences with step `eps^(1/3) max(1, |z_i|)` (and
/// `eps^(1/4)` for second differences of the energy).
pub trait Hamiltonian: Send + Sync {
    fn dof(&self) -> usize;

    fn energy(&self, z: &DVector<f64>) -> Result<f64>;

    fn gradient(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        fd_gradient(&|w| self.energy(w), z)
    }

    fn hessian(&self, z: &DVector<f64>) -> Result<DMatrix<f64>> {
        if self.has_analytic_gradient() {
            fd_jacobian_of_gradient(&|w| self.gradient(w), z)
        } else {
            fd_hessian(&|w| self.energy(w), z)
        }
    }

    fn has_analytic_gradient(&self) -> bool {
        false
    }

    fn has_analytic_hessian(&self) -> bool {
        false
    }

    /// Subprincipal symbol `H_1`; zero unless overridden.
    fn subprincipal(&self, _z: &DVector<f64>) -> Result<f64> {
        Ok(0.0)
    }

    fn has_subprincipal(&self) -> bool {
        false
    }

    /// Period of each configuration coordinate that is an angle (`None` for
    /// coordinates on the real line).
    fn angle_periods(&self) -> Vec<Option<f64>> {
        vec![None; self.dof()]
    }
}

fn fd_step(value: f64, power: f64) -> f64 {
    f64::EPSILON.powf(power) * value.abs().max(1.0)
}

pub fn fd_gradient(
    f: &dyn Fn(&DVector<f64>) -> Result<f64>,
    z: &DVector<f64>,
) -> Result<DVector<f64>> {
    let mut g = DVector::zeros(z.len());
    let mut w = z.clone();
    for i in 0..z.len() {
        let h = fd_step(z[i], 1.0 / 3.0);
        w[i] = z[i] + h;
        let fp = f(&w)?;
        w[i] = z[i] - h;
        let fm = f(&w)?;
        w[i] = z[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    Ok(g)
}

fn fd_jacobian_of_gradient(
    g: &dyn Fn(&DVector<f64>) -> Result<DVector<f64>>,
    z: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let d = z.len();
    let mut h = DMatrix::zeros(d, d);
    let mut w = z.clone();
    for j in 0..d {
        let step = fd_step(z[j], 1.0 / 3.0);
        w[j] = z[j] + step;
        let gp = g(&w)?;
        w[j] = z[j] - step;
        let gm = g(&w)?;
        w[j] = z[j];
        h.set_column(j, &((gp - gm) / (2.0 * step)));
    }
    Ok(linalg::symmetrize(&h))
}

fn fd_hessian(f: &dyn Fn(&DVector<f64>) -> Result<f64>, z: &DVector<f64>) -> Result<DMatrix<f64>> {
    let d = z.len();
    let mut h = DMatrix::zeros(d, d);
    let f0 = f(z)?;
    let steps: Vec<f64> = z.iter().map(|&v| fd_step(v, 0.25)).collect();
    let mut w = z.clone();
    for i in 0..d {
        let hi = steps[i];
        w[i] = z[i] + hi;
        let fp = f(&w)?;
        w[i] = z[i] - hi;
        let fm = f(&w)?;
        w[i] = z[i];
        h[(i, i)] = (fp - 2.0 * f0 + fm) / (hi * hi);
        for j in 0..i {
            let hj = steps[j];
            let mut eval = |si: f64, sj: f64| {
                w[i] = z[i] + si * hi;
                w[j] = z[j] + sj * hj;
                let v = f(&w);
                w[i] = z[i];
                w[j] = z[j];
                v
            };
            let fpp = eval(1.0, 1.0)?;
            let fpm = eval(1.0, -1.0)?;
            let fmp = eval(-1.0, 1.0)?;
            let fmm = eval(-1.0, -1.0)?;
            let v = (fpp - fpm - fmp + fmm) / (4.0 * hi * hj);
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    Ok(h)
}

type ScalarFn = Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;
type GradientFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
type HessianFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// A Hamiltonian assembled from closures; derivatives are optional.
#[derive(Clone)]
pub struct CustomHamiltonian {
    n: usize,
    h0: ScalarFn,
    grad: Option<GradientFn>,
    hess: Option<HessianFn>,
    h1: Option<ScalarFn>,
    periods: Option<Vec<Option<f64>>>,
}

impl CustomHamiltonian {
    pub fn new(n: usize, h0: impl Fn(&DVector<f64>) -> f64 + Send + Sync + 'static) -> Self {
        CustomHamiltonian {
            n,
            h0: Arc::new(h0),
            grad: None,
            hess: None,
            h1: None,
            periods: None,
        }
    }

    pub fn with_angle_periods(mut self, periods: Vec<Option<f64>>) -> Self {
        self.periods = Some(periods);
        self
    }

    pub fn with_gradient(
        mut self,
        g: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        self.grad = Some(Arc::new(g));
        self
    }

    pub fn with_hessian(
        mut self,
        h: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.hess = Some(Arc::new(h));
        self
    }

    pub fn with_subprincipal(mut self, h1: impl Fn(&DVector<f64>) -> f64 + Send + Sync + 'static) -> Self {
        self.h1 = Some(Arc::new(h1));
        self
    }
}

impl Hamiltonian for CustomHamiltonian {
    fn dof(&self) -> usize {
        self.n
    }

    fn energy(&self, z: &DVector<f64>) -> Result<f64> {
        Ok((self.h0)(z))
    }

    fn gradient(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        match &self.grad {
            Some(g) => Ok(g(z)),
            None => fd_gradient(&|w| self.energy(w), z),
        }
    }

    fn hessian(&self, z: &DVector<f64>) -> Result<DMatrix<f64>> {
        match (&self.hess, &self.grad) {
            (Some(h), _) => Ok(h(z)),
            (None, Some(_)) => fd_jacobian_of_gradient(&|w| self.gradient(w), z),
            (None, None) => fd_hessian(&|w| self.energy(w), z),
        }
    }

    fn has_analytic_gradient(&self) -> bool {
        self.grad.is_some()
    }

    fn has_analytic_hessian(&self) -> bool {
        self.hess.is_some()
    }

    fn subprincipal(&self, z: &DVector<f64>) -> Result<f64> {
        Ok(self.h1.as_ref().map_or(0.0, |f| f(z)))
    }

    fn has_subprincipal(&self) -> bool {
        self.h1.is_some()
    }

    fn angle_periods(&self) -> Vec<Option<f64>> {
        self.periods.clone().unwrap_or_else(|| vec![None; self.n])
    }
}

/// Evaluator bundle for a Hamiltonian with finiteness checks on every output.
#[derive(Clone)]
pub struct HamiltonianSystem {
    inner: Arc<dyn Hamiltonian>,
    label: String,
}

impl fmt::Debug for HamiltonianSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HamiltonianSystem")
            .field("label", &self.label)
            .field("dof", &self.dof())
            .finish()
    }
}

fn non_finite(z: &DVector<f64>, what: &str) -> Error {
    Error::Evaluation {
        point: z.iter().cloned().collect(),
        reason: format!("non-finite {what}"),
    }
}

impl HamiltonianSystem {
    pub fn new(label: impl Into<String>, h: impl Hamiltonian + 'static) -> Self {
        HamiltonianSystem {
            inner: Arc::new(h),
            label: label.into(),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dof(&self) -> usize {
        self.inner.dof()
    }

    pub fn phase_dim(&self) -> usize {
        2 * self.inner.dof()
    }

    fn check_dim(&self, z: &DVector<f64>) -> Result<()> {
        if z.len() != self.phase_dim() {
            return Err(Error::Dimension(format!(
                "phase vector has length {}, system expects {}",
                z.len(),
                self.phase_dim()
            )));
        }
        Ok(())
    }

    pub fn energy(&self, z: &DVector<f64>) -> Result<f64> {
        self.check_dim(z)?;
        let e = self.inner.energy(z)?;
        if !e.is_finite() {
            return Err(non_finite(z, "energy"));
        }
        Ok(e)
    }

    pub fn gradient(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(z)?;
        let g = self.inner.gradient(z)?;
        if g.iter().any(|v| !v.is_finite()) {
            return Err(non_finite(z, "gradient"));
        }
        Ok(g)
    }

    pub fn hessian(&self, z: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_dim(z)?;
        let h = self.inner.hessian(z)?;
        if h.iter().any(|v| !v.is_finite()) {
            return Err(non_finite(z, "Hessian"));
        }
        Ok(h)
    }

    pub fn subprincipal(&self, z: &DVector<f64>) -> Result<f64> {
        let v = self.inner.subprincipal(z)?;
        if !v.is_finite() {
            return Err(non_finite(z, "subprincipal symbol"));
        }
        Ok(v)
    }

    pub fn has_subprincipal(&self) -> bool {
        self.inner.has_subprincipal()
    }

    pub fn has_analytic_gradient(&self) -> bool {
        self.inner.has_analytic_gradient()
    }

    pub fn angle_periods(&self) -> Vec<Option<f64>> {
        self.inner.angle_periods()
    }

    /// Lattice shift `s` (nonzero only in angular coordinates) that brings
    /// `z - s` closest to `reference`.
    pub fn angle_shift(&self, z: &DVector<f64>, reference: &DVector<f64>) -> DVector<f64> {
        let mut s = DVector::zeros(z.len());
        for (i, p) in self.angle_periods().into_iter().enumerate() {
            if let Some(p) = p {
                s[i] = ((z[i] - reference[i]) / p).round() * p;
            }
        }
        s
    }

    pub fn has_analytic_hessian(&self) -> bool {
        self.inner.has_analytic_hessian()
    }

    /// `X_H(z) = J grad H(z)`.
    pub fn vector_field(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        let g = self.gradient(z)?;
        Ok(apply_j(&g))
    }
}

/// `J v` for the standard `J`, without forming the matrix.
pub fn apply_j(v: &DVector<f64>) -> DVector<f64> {
    let n = v.len() / 2;
    let mut out = DVector::zeros(v.len());
    for i in 0..n {
        out[i] = v[n + i];
        out[n + i] = -v[i];
    }
    out
}

/// Hamilton vector field at a phase point.
pub fn hamilton_vector_field(sys: &HamiltonianSystem, p: &PhasePoint) -> Result<DVector<f64>> {
    p.validate()?;
    sys.vector_field(&p.to_vector())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn oscillator() -> HamiltonianSystem {
        HamiltonianSystem::new(
            "ho",
            CustomHamiltonian::new(1, |z| 0.5 * (z[0] * z[0] + z[1] * z[1])),
        )
    }

    #[test]
    fn oscillator_vector_field() {
        let p = PhasePoint::new(vec![1.0], vec![0.0]).unwrap();
        let x = hamilton_vector_field(&oscillator(), &p).unwrap();
        assert!(x[0].abs() < 1e-9);
        assert!((x[1] + 1.0).abs() < 1e-9);
    }

    #[test]
    fn free_motion_vector_field() {
        let sys = HamiltonianSystem::new(
            "free",
            CustomHamiltonian::new(1, |z| 0.5 * z[1] * z[1]).with_gradient(|z| DVector::from_vec(vec![0.0, z[1]])),
        );
        let p = PhasePoint::new(vec![0.7], vec![-1.3]).unwrap();
        let x = hamilton_vector_field(&sys, &p).unwrap();
        assert_eq!(x.as_slice(), &[-1.3, 0.0]);
    }

    #[test]
    fn finite_difference_hessian_of_quadratic() {
        let sys = HamiltonianSystem::new(
            "q",
            CustomHamiltonian::new(2, |z| z[0] * z[2] + 0.5 * z[1] * z[1] + 2.0 * z[3] * z[3] - z[0] * z[1]),
        );
        let h = sys.hessian(&DVector::from_vec(vec![0.3, -0.2, 1.1, 0.4])).unwrap();
        let expect = DMatrix::from_row_slice(
            4,
            4,
            &[0.0, -1.0, 1.0, 0.0, -1.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 4.0],
        );
        assert!((h - expect).amax() < 1e-6);
    }

    #[test]
    fn mismatched_point_is_rejected() {
        assert!(PhasePoint::new(vec![1.0, 2.0], vec![0.0]).is_err());
        assert!(PhasePoint::new(vec![f64::NAN], vec![0.0]).is_err());
    }

    #[test]
    fn non_finite_energy_reports_point() {
        let sys = HamiltonianSystem::new("bad", CustomHamiltonian::new(1, |z| 1.0 / z[0]));
        match sys.energy(&DVector::from_vec(vec![0.0, 1.0])) {
            Err(Error::Evaluation { point, .. }) => assert_eq!(point, vec![0.0, 1.0]),
            other => panic!("unexpected {other:?}"),
        }
    }
}

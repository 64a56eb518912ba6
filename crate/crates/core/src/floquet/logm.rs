//! Real logarithm of a symplectic matrix with Hamiltonian structure restored.

use nalgebra::DMatrix;

use super::classify::classify_multipliers;
use crate::error::{Error, Result};
use crate::linalg::{self, expm, gauss_legendre_01};

/// Square roots are taken until `|T - I| <= SQRT_TARGET`.
const SQRT_TARGET: f64 = 0.25;
const QUADRATURE_NODES: usize = 8;
const MAX_SQRTS: usize = 64;
pub const LOG_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct Logarithm {
    pub b: DMatrix<f64>,
    /// `|exp(B) - A| / max(1, |A|)`.
    pub exp_residual: f64,
    /// `|B^T J + J B|`.
    pub hamiltonian_residual: f64,
    pub square_roots: usize,
}

/// Principal square root by the Denman-Beavers iteration.
fn sqrtm(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let mut y = a.clone();
    let mut z = DMatrix::identity(n, n);
    for _ in 0..100 {
        let yi = y.clone().try_inverse();
        let zi = z.clone().try_inverse();
        let (yi, zi) = match (yi, zi) {
            (Some(yi), Some(zi)) => (yi, zi),
            _ => {
                return Err(Error::Logarithm {
                    residual: f64::INFINITY,
                    reason: "singular iterate in square-root iteration".into(),
                })
            }
        };
        let y_next = (&y + zi) * 0.5;
        let z_next = (&z + yi) * 0.5;
        let delta = (&y_next - &y).norm() / y_next.norm();
        y = y_next;
        z = z_next;
        if delta <= 1e-15 {
            break;
        }
    }
    let residual = (&y * &y - a).norm() / a.norm();
    if !(residual <= 1e-10) {
        return Err(Error::Logarithm {
            residual,
            reason: "square-root iteration did not converge".into(),
        });
    }
    Ok(y)
}

/// `log(I + X)` as `int_0^1 X (I + t X)^{-1} dt` by Gauss-Legendre quadrature.
fn log_near_identity(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = x.nrows();
    let (nodes, weights) = gauss_legendre_01(QUADRATURE_NODES);
    let mut out = DMatrix::zeros(n, n);
    for (t, w) in nodes.iter().zip(&weights) {
        let m = DMatrix::identity(n, n) + x * *t;
        let inv = m.try_inverse().ok_or_else(|| Error::Logarithm {
            residual: f64::INFINITY,
            reason: "singular factor in quadrature".into(),
        })?;
        out += x * inv * *w;
    }
    Ok(out)
}

/// Real logarithm `B` of a symplectic `A` (standard form) via the real Schur
/// factorization and inverse scaling and squaring.
pub fn symplectic_log(a: &DMatrix<f64>) -> Result<Logarithm> {
    classify_multipliers(a)?;
    let n = a.nrows();
    let (q, mut t) = linalg::real_schur(a)?;
    let id = DMatrix::<f64>::identity(n, n);
    let mut s = 0;
    while (&t - &id).norm() > SQRT_TARGET {
        if s == MAX_SQRTS {
            return Err(Error::Logarithm {
                residual: (&t - &id).norm(),
                reason: "too many square roots".into(),
            });
        }
        t = sqrtm(&t)?;
        s += 1;
    }
    let l = log_near_identity(&(&t - &id))? * 2f64.powi(s as i32);
    let b = linalg::hamiltonian_part(&(&q * l * q.transpose()));
    let exp_residual = linalg::spectral_norm(&(expm(&b) - a)) / linalg::spectral_norm(a).max(1.0);
    let hamiltonian_residual = linalg::hamiltonian_residual(&b);
    if !(exp_residual <= LOG_TOL) {
        return Err(Error::Logarithm {
            residual: exp_residual,
            reason: "exp(B) does not reproduce A".into(),
        });
    }
    Ok(Logarithm {
        b,
        exp_residual,
        hamiltonian_residual,
        square_roots: s,
    })
}

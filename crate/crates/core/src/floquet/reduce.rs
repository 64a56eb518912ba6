//! Restriction of the monodromy to a symplectic complement of the flow and
//! energy directions, in a standard symplectic basis.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::classify::eigenvalues;
use crate::error::{Error, Result};
use crate::linalg::{self, sigma};

/// Invariance of the flow direction and of `dH` under the monodromy is
/// accepted up to this relative residual.
const INVARIANCE_TOL: f64 = 1e-6;
/// Eigenvalues of the reduced map this close to 1 add to the trivial multiplicity.
const UNIT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReducedMonodromy {
    pub full: DMatrix<f64>,
    /// Linearized return map `A` in the basis below; `A^T J A = J`.
    pub reduced: DMatrix<f64>,
    /// Columns `e_1..e_m, f_1..f_m` with `sigma(e_i, f_j) = -delta_ij`, all
    /// other pairings zero.
    pub basis: DMatrix<f64>,
    pub trivial_multiplicity: usize,
    /// `max(|M X - X| / |X|, |M^T g - g| / |g|) / max(1, |M|)`.
    pub invariance_residual: f64,
    /// `|A^T J A - J| / max(1, |A|^2)`.
    pub symplectic_residual: f64,
}

/// Orthonormal basis of the Euclidean complement of `span{x, g}`, built by
/// projecting coordinate vectors and keeping the best-conditioned ones in order.
fn complement_basis(x: &DVector<f64>, g: &DVector<f64>) -> Result<Vec<DVector<f64>>> {
    let d = x.len();
    let xh = x / x.norm();
    let mut gh = g - &xh * xh.dot(g);
    let gn = gh.norm();
    if gn <= 1e-14 * g.norm().max(1e-300) || gn == 0.0 {
        return Err(Error::BasisConstruction { residual: gn });
    }
    gh /= gn;
    let mut chosen: Vec<DVector<f64>> = vec![xh, gh];
    let mut candidates: Vec<DVector<f64>> = (0..d)
        .map(|i| {
            let mut e = DVector::zeros(d);
            e[i] = 1.0;
            e
        })
        .collect();
    let mut out = Vec::with_capacity(d - 2);
    while out.len() < d - 2 {
        for c in candidates.iter_mut() {
            for q in &chosen {
                let p = q.dot(c);
                *c -= q * p;
            }
        }
        let (best, norm) = candidates
            .iter()
            .enumerate()
            .map(|(i, c)| (i, c.norm()))
            .fold((0, -1.0), |acc, v| if v.1 > acc.1 + 1e-12 { v } else { acc });
        if norm < 1e-8 {
            return Err(Error::BasisConstruction { residual: norm });
        }
        let v = candidates.remove(best) / norm;
        chosen.push(v.clone());
        out.push(v);
    }
    Ok(out)
}

/// Symplectic Gram-Schmidt on a basis of a symplectic subspace. Returns pairs
/// `(e_i, f_i)` with `sigma(e_i, f_i) = -1` and all cross pairings zero.
pub fn symplectic_gram_schmidt(vectors: Vec<DVector<f64>>) -> Result<(Vec<DVector<f64>>, Vec<DVector<f64>>)> {
    let mut rest = vectors;
    let mut es = Vec::new();
    let mut fs = Vec::new();
    while !rest.is_empty() {
        let e = rest.remove(0);
        let (idx, s) = rest
            .iter()
            .enumerate()
            .map(|(i, v)| (i, sigma(&e, v)))
            .fold((usize::MAX, 0.0f64), |acc, v| if v.1.abs() > acc.1.abs() { v } else { acc });
        if idx == usize::MAX || s.abs() < 1e-10 {
            return Err(Error::BasisConstruction { residual: s.abs() });
        }
        let f = rest.remove(idx) * (-1.0 / s);
        for v in rest.iter_mut() {
            let beta = -sigma(&e, v);
            let alpha = sigma(&f, v);
            *v -= &e * alpha + &f * beta;
            let n = v.norm();
            if n > 0.0 {
                *v /= n;
            }
        }
        es.push(e);
        fs.push(f);
    }
    Ok((es, fs))
}

/// Coordinates of `v` in the basis `(e, f)`, discarding any component along
/// the symplectic complement of the basis span.
fn coordinates(es: &[DVector<f64>], fs: &[DVector<f64>], v: &DVector<f64>) -> DVector<f64> {
    let m = es.len();
    let mut c = DVector::zeros(2 * m);
    for j in 0..m {
        c[j] = sigma(&fs[j], v);
        c[m + j] = -sigma(&es[j], v);
    }
    c
}

/// Reduces the monodromy `full` at a point with Hamilton field `x` and energy
/// gradient `g`.
pub fn reduce_monodromy(full: &DMatrix<f64>, x: &DVector<f64>, g: &DVector<f64>) -> Result<ReducedMonodromy> {
    let d = full.nrows();
    if full.ncols() != d || x.len() != d || g.len() != d || d % 2 != 0 {
        return Err(Error::Dimension(format!(
            "monodromy {}x{} with vectors of length {}, {}",
            full.nrows(),
            full.ncols(),
            x.len(),
            g.len()
        )));
    }
    if d < 4 {
        return Err(Error::Dimension("Floquet reduction needs at least two degrees of freedom".into()));
    }
    if x.norm() == 0.0 || g.norm() == 0.0 {
        return Err(Error::DegenerateSection { ratio: 0.0 });
    }

    let m_norm = linalg::spectral_norm(full).max(1.0);
    let r_x = (full * x - x).norm() / x.norm();
    let r_g = (full.transpose() * g - g).norm() / g.norm();
    let invariance_residual = r_x.max(r_g) / m_norm;

    let (es, fs) = symplectic_gram_schmidt(complement_basis(x, g)?)?;
    let m = es.len();
    let mut basis = DMatrix::zeros(d, 2 * m);
    for j in 0..m {
        basis.set_column(j, &es[j]);
        basis.set_column(m + j, &fs[j]);
    }
    let mut reduced = DMatrix::zeros(2 * m, 2 * m);
    for k in 0..2 * m {
        let w = full * basis.column(k);
        reduced.set_column(k, &coordinates(&es, &fs, &w));
    }

    let near_one = |tol: f64, eigs: &[nalgebra::Complex<f64>]| eigs.iter().filter(|l| (*l - 1.0).norm() <= tol).count();
    let trivial_multiplicity = if invariance_residual <= INVARIANCE_TOL {
        2 + near_one(UNIT_TOL, &eigenvalues(&reduced)?)
    } else {
        near_one(1e-3, &eigenvalues(full)?)
    };
    if trivial_multiplicity != 2 {
        return Err(Error::TrivialMultiplicity {
            multiplicity: trivial_multiplicity,
        });
    }
    let symplectic_residual = linalg::relative_symplectic_residual(&reduced);
    Ok(ReducedMonodromy {
        full: full.clone(),
        reduced,
        basis,
        trivial_multiplicity,
        invariance_residual,
        symplectic_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{E, FRAC_PI_2};

    /// Monodromy of a 2-DOF system whose first degree of freedom is the orbit
    /// direction (`theta' = 1`) and second has the transversal block `t`.
    fn embedded(t: [[f64; 2]; 2]) -> (DMatrix<f64>, DVector<f64>, DVector<f64>) {
        let mut m = DMatrix::identity(4, 4);
        m[(1, 1)] = t[0][0];
        m[(1, 3)] = t[0][1];
        m[(3, 1)] = t[1][0];
        m[(3, 3)] = t[1][1];
        let x = DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]);
        let g = DVector::from_vec(vec![0.0, 0.0, 1.0, 0.0]);
        (m, x, g)
    }

    #[test]
    fn block_structure_is_recovered() {
        let (m, x, g) = embedded([[E, 0.0], [0.0, 1.0 / E]]);
        let r = reduce_monodromy(&m, &x, &g).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[E, 0.0, 0.0, 1.0 / E]);
        assert!((r.reduced - expect).amax() < 1e-14);
        assert_eq!(r.trivial_multiplicity, 2);
    }

    #[test]
    fn shear_along_the_orbit_is_quotiented_out() {
        // period depending on energy shears theta against eta
        let (mut m, x, g) = embedded([[FRAC_PI_2.exp(), 0.0], [0.0, (-FRAC_PI_2).exp()]]);
        m[(0, 2)] = 0.7;
        let r = reduce_monodromy(&m, &x, &g).unwrap();
        assert!((r.reduced[(0, 0)] - 4.810477380965351).abs() < 1e-12);
        assert!((r.reduced[(1, 1)] - 0.20787957635076193).abs() < 1e-12);
        assert!(r.symplectic_residual < 1e-14);
    }

    #[test]
    fn identity_is_degenerate() {
        let m = DMatrix::identity(4, 4);
        let x = DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]);
        let g = DVector::from_vec(vec![0.0, 0.0, 1.0, 0.0]);
        match reduce_monodromy(&m, &x, &g) {
            Err(Error::TrivialMultiplicity { multiplicity }) => assert_eq!(multiplicity, 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn one_degree_of_freedom_is_rejected() {
        let m = DMatrix::identity(2, 2);
        let v = DVector::from_vec(vec![1.0, 0.0]);
        assert!(matches!(reduce_monodromy(&m, &v, &v), Err(Error::Dimension(_))));
    }

    #[test]
    fn gram_schmidt_yields_standard_pairs() {
        let vs: Vec<DVector<f64>> = (0..4)
            .map(|i| DVector::from_fn(4, |r, _| ((r + 1) as f64 * (i + 2) as f64).sin()))
            .collect();
        let (es, fs) = symplectic_gram_schmidt(vs).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let expect = if i == j { -1.0 } else { 0.0 };
                assert!((sigma(&es[i], &fs[j]) - expect).abs() < 1e-12);
                assert!(sigma(&es[i], &es[j]).abs() < 1e-12);
                assert!(sigma(&fs[i], &fs[j]).abs() < 1e-12);
            }
        }
    }
}

//! Floquet exponents, the stable/unstable splitting and the decomposition of
//! the quadratic form `b` into action coordinates.

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::classify::{cluster, eigenvalues, Tag};
use super::reduce::symplectic_gram_schmidt;
use super::PAIRING_TOL;
use crate::error::{Error, Result};
use crate::linalg::{self, sigma, sigma_c, standard_j, to_complex, C64};

const SEMISIMPLE_COND: f64 = 1e8;
pub const DECOMPOSITION_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Exponent {
    pub value: C64,
    pub multiplicity: usize,
    pub tag: Tag,
}

impl Exponent {
    pub fn is_hyperbolic(&self) -> bool {
        self.tag != Tag::Elliptic
    }
}

fn exponent_tag(mu: C64, scale: f64) -> Tag {
    if mu.re.abs() <= PAIRING_TOL * scale {
        Tag::Elliptic
    } else if mu.im.abs() <= PAIRING_TOL * scale {
        Tag::RealHyperbolic
    } else {
        Tag::Loxodromic
    }
}

/// Representatives `mu` of the spectrum `{+-mu}` of `B` with `Re mu > 0`, or
/// `Re mu = 0` and `Im mu > 0`; sorted by real part, then imaginary part,
/// both descending.
pub fn floquet_exponents(b: &DMatrix<f64>) -> Result<Vec<Exponent>> {
    let scale = linalg::spectral_norm(b).max(1.0);
    let eigs = eigenvalues(b)?;
    let mut kept = Vec::new();
    for &nu in &eigs {
        if nu.norm() <= PAIRING_TOL * scale {
            return Err(Error::ZeroExponent { re: nu.re, im: nu.im });
        }
        let on_axis = nu.re.abs() <= PAIRING_TOL * scale;
        if (!on_axis && nu.re > 0.0) || (on_axis && nu.im > 0.0) {
            kept.push(if on_axis { Complex::new(0.0, nu.im) } else { nu });
        }
    }
    let total = eigs.len() / 2;
    if kept.len() != total {
        return Err(Error::Pairing {
            mismatch: (kept.len() as f64 - total as f64).abs(),
        });
    }
    let mut out: Vec<Exponent> = cluster(&kept)
        .into_iter()
        .map(|(v, k)| {
            let tag = exponent_tag(v, scale);
            let value = if tag == Tag::RealHyperbolic { Complex::new(v.re, 0.0) } else { v };
            Exponent {
                value,
                multiplicity: k,
                tag,
            }
        })
        .collect();
    out.sort_by(|a, b| b.value.re.total_cmp(&a.value.re).then(b.value.im.total_cmp(&a.value.im)));
    Ok(out)
}

/// Exponents repeated by multiplicity.
pub fn modes(exponents: &[Exponent]) -> Vec<C64> {
    exponents
        .iter()
        .flat_map(|e| std::iter::repeat(e.value).take(e.multiplicity))
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Splitting {
    pub f_plus: DMatrix<C64>,
    pub f_minus: DMatrix<C64>,
    /// `max |sigma(u, v)|` over column pairs of each space.
    pub lagrangian_residual: f64,
    /// Smallest eigenvalue of the Hermitian form `(1/2i) sigma(u, conj v)` on
    /// `F_plus` (columns normalized).
    pub dissipativity_min: f64,
    /// The same form restricted to each exponent's eigenspace.
    pub dissipativity_per_exponent: Vec<f64>,
    pub condition: f64,
}

fn eigenspace(b: &DMatrix<C64>, mu: C64, dim: usize) -> DMatrix<C64> {
    eigenspace_checked(b, mu, dim).0
}

/// Eigenspace basis and the relative size of the largest kept singular value
/// of `B - mu` (small for a genuine eigenspace of that dimension).
fn eigenspace_checked(b: &DMatrix<C64>, mu: C64, dim: usize) -> (DMatrix<C64>, f64) {
    let n = b.nrows();
    let shifted = b - DMatrix::<C64>::identity(n, n) * mu;
    linalg::null_space_c(&shifted, dim)
}

/// Hermitian matrix `(1/2i) sigma(u_k, conj u_l)`.
fn dissipation_form(f: &DMatrix<C64>) -> DMatrix<C64> {
    let k = f.ncols();
    DMatrix::from_fn(k, k, |r, c| {
        let u = f.column(r).into_owned();
        let v = f.column(c).map(|z| z.conj());
        sigma_c(&u, &v) / Complex::new(0.0, 2.0)
    })
}

fn min_hermitian_eigenvalue(h: &DMatrix<C64>) -> f64 {
    if h.is_empty() {
        return f64::INFINITY;
    }
    let sym = (h + h.adjoint()) * Complex::new(0.5, 0.0);
    sym.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
}

fn lagrangian_residual(f: &DMatrix<C64>) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..f.ncols() {
        for j in 0..f.ncols() {
            let s = sigma_c(&f.column(i).into_owned(), &f.column(j).into_owned());
            worst = worst.max(s.norm());
        }
    }
    worst
}

pub fn invariant_splitting(b: &DMatrix<f64>, exponents: &[Exponent]) -> Result<Splitting> {
    let bc = to_complex(b);
    let n = b.nrows();
    let m = n / 2;
    let mut plus = Vec::new();
    let mut minus = Vec::new();
    let mut per_exponent = Vec::new();
    let mut defect: f64 = 0.0;
    for e in exponents {
        let (fp, dp) = eigenspace_checked(&bc, e.value, e.multiplicity);
        let (fm, dm) = eigenspace_checked(&bc, -e.value, e.multiplicity);
        defect = defect.max(dp).max(dm);
        per_exponent.push(min_hermitian_eigenvalue(&dissipation_form(&fp)));
        plus.push(fp);
        minus.push(fm);
    }
    let stack = |blocks: &[DMatrix<C64>]| {
        let mut out = DMatrix::<C64>::zeros(n, m);
        let mut c = 0;
        for blk in blocks {
            for j in 0..blk.ncols() {
                out.set_column(c, &blk.column(j));
                c += 1;
            }
        }
        out
    };
    let f_plus = stack(&plus);
    let f_minus = stack(&minus);
    let mut all = DMatrix::<C64>::zeros(n, n);
    all.view_mut((0, 0), (n, m)).copy_from(&f_plus);
    all.view_mut((0, m), (n, m)).copy_from(&f_minus);
    // a Jordan block shows up as a missing eigenvector: the null space of
    // B - mu is smaller than the algebraic multiplicity
    let condition = linalg::condition_number_c(&all);
    if !(condition <= SEMISIMPLE_COND) || defect * SEMISIMPLE_COND > 1.0 {
        return Err(Error::NonSemisimple {
            condition: condition.max(defect / f64::EPSILON),
        });
    }
    let lagrangian = lagrangian_residual(&f_plus).max(lagrangian_residual(&f_minus));
    Ok(Splitting {
        dissipativity_min: min_hermitian_eigenvalue(&dissipation_form(&f_plus)),
        dissipativity_per_exponent: per_exponent,
        lagrangian_residual: lagrangian,
        condition,
        f_plus,
        f_minus,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    /// `x xi`
    Hyperbolic,
    /// `(x^2 + xi^2) / 2`
    Elliptic,
    /// `x1 xi1 + x2 xi2`
    LoxodromicRadial,
    /// `x2 xi1 - x1 xi2`
    LoxodromicAngular,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ActionCoordinate {
    pub kind: ActionKind,
    /// Index of the exponent this coordinate belongs to.
    pub exponent: usize,
    pub coefficient: f64,
    /// Symmetric `Q` with `iota(rho) = rho^T Q rho` in reduced coordinates.
    pub matrix: DMatrix<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuadraticForm {
    /// Symmetric `Q_b` with `b(rho) = rho^T Q_b rho = sigma(rho, B rho) / 2`.
    pub b_matrix: DMatrix<f64>,
    /// Real symplectic basis `T` (columns `e_1..e_m, f_1..f_m`) adapted to `B`.
    pub adapted_basis: DMatrix<f64>,
    pub action_coordinates: Vec<ActionCoordinate>,
    /// `|Q_b - sum_j c_j Q_j| / max(1, |Q_b|)`.
    pub decomposition_residual: f64,
}

pub fn b_matrix(b: &DMatrix<f64>) -> DMatrix<f64> {
    let j = standard_j(b.nrows() / 2);
    linalg::symmetrize(&(j.transpose() * b)) * 0.5
}

fn real_parts(f: &DMatrix<C64>) -> Vec<DVector<f64>> {
    let mut out = Vec::new();
    for c in 0..f.ncols() {
        out.push(f.column(c).map(|z| z.re));
        out.push(f.column(c).map(|z| z.im));
    }
    out
}

/// Orthonormal real basis of the span of the given vectors, of dimension `dim`.
fn real_basis(vs: &[DVector<f64>], dim: usize) -> Result<Vec<DVector<f64>>> {
    let n = vs[0].len();
    let mut mat = DMatrix::zeros(n, vs.len());
    for (i, v) in vs.iter().enumerate() {
        mat.set_column(i, v);
    }
    let svd = mat.svd(true, false);
    let u = svd.u.expect("requested U");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    if order.len() < dim || svd.singular_values[order[dim - 1]] <= 1e-8 * svd.singular_values[order[0]] {
        return Err(Error::BasisConstruction { residual: f64::INFINITY });
    }
    Ok(order[..dim].iter().map(|&i| u.column(i).into_owned()).collect())
}

/// Dual basis of `f0` with respect to `e`: `sigma(e_i, f_j) = -delta_ij`.
fn dual_basis(es: &[DVector<f64>], f0: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
    let d = es.len();
    let g = DMatrix::from_fn(d, d, |i, j| sigma(&es[i], &f0[j]));
    let gi = g.clone().try_inverse().ok_or(Error::BasisConstruction { residual: f64::INFINITY })?;
    let c = -gi;
    Ok((0..d)
        .map(|j| {
            let mut v = DVector::zeros(es[0].len());
            for k in 0..d {
                v += &f0[k] * c[(k, j)];
            }
            v
        })
        .collect())
}

struct Block {
    es: Vec<DVector<f64>>,
    fs: Vec<DVector<f64>>,
    /// `(kind, coefficient, local pair indices)`
    forms: Vec<(ActionKind, f64, Vec<usize>)>,
    exponent: usize,
}

fn standard_form(kind: ActionKind, pairs: &[usize], m: usize) -> DMatrix<f64> {
    let mut q = DMatrix::zeros(2 * m, 2 * m);
    let mut put = |i: usize, j: usize, v: f64| {
        q[(i, j)] += v;
        q[(j, i)] += v;
    };
    match kind {
        ActionKind::Hyperbolic => put(pairs[0], m + pairs[0], 0.5),
        ActionKind::Elliptic => {
            put(pairs[0], pairs[0], 0.25);
            put(m + pairs[0], m + pairs[0], 0.25);
        }
        ActionKind::LoxodromicRadial => {
            put(pairs[0], m + pairs[0], 0.5);
            put(pairs[1], m + pairs[1], 0.5);
        }
        ActionKind::LoxodromicAngular => {
            put(pairs[1], m + pairs[0], 0.5);
            put(pairs[0], m + pairs[1], -0.5);
        }
    }
    q
}

/// Adapted symplectic basis and the decomposition `b = sum_j c_j iota_j`.
pub fn quadratic_form_b(b: &DMatrix<f64>, exponents: &[Exponent]) -> Result<QuadraticForm> {
    let n = b.nrows();
    let m = n / 2;
    let bc = to_complex(b);
    let mut blocks = Vec::new();
    let mut covered = vec![false; exponents.len()];
    for (idx, e) in exponents.iter().enumerate() {
        if covered[idx] {
            continue;
        }
        covered[idx] = true;
        let d = e.multiplicity;
        match e.tag {
            Tag::RealHyperbolic => {
                let es = real_basis(&real_parts(&eigenspace(&bc, e.value, d)), d)?;
                let f0 = real_basis(&real_parts(&eigenspace(&bc, -e.value, d)), d)?;
                let fs = dual_basis(&es, &f0)?;
                let forms = (0..d).map(|k| (ActionKind::Hyperbolic, e.value.re, vec![k])).collect();
                blocks.push(Block { es, fs, forms, exponent: idx });
            }
            Tag::Loxodromic => {
                // handle mu with Im > 0 together with its conjugate
                let rep = if e.value.im > 0.0 { e.value } else { e.value.conj() };
                if let Some(partner) = exponents
                    .iter()
                    .enumerate()
                    .position(|(k, o)| k != idx && (o.value - e.value.conj()).norm() <= PAIRING_TOL * e.value.norm().max(1.0))
                {
                    covered[partner] = true;
                }
                let fp = eigenspace(&bc, rep, d);
                let fm = eigenspace(&bc, -rep, d);
                // (Re u, Im u) pairs span the real invariant space of {mu, conj mu}
                let mut es = Vec::new();
                for c in 0..d {
                    es.push(fp.column(c).map(|z| z.re));
                    es.push(fp.column(c).map(|z| z.im));
                }
                let f0 = real_basis(&real_parts(&fm), 2 * d)?;
                let fs = dual_basis(&es, &f0)?;
                let mut forms = Vec::new();
                for c in 0..d {
                    forms.push((ActionKind::LoxodromicRadial, rep.re, vec![2 * c, 2 * c + 1]));
                    forms.push((ActionKind::LoxodromicAngular, rep.im, vec![2 * c, 2 * c + 1]));
                }
                blocks.push(Block { es, fs, forms, exponent: idx });
            }
            Tag::Elliptic => {
                let fp = eigenspace(&bc, e.value, d);
                // diagonalize the Hermitian form on the eigenspace
                // for u = fp v the form is v^* H^T v
                let h = dissipation_form(&fp).transpose();
                let sym = (&h + h.adjoint()) * Complex::new(0.5, 0.0);
                let eig = sym.symmetric_eigen();
                let omega = e.value.im;
                let mut es = Vec::new();
                let mut fs = Vec::new();
                let mut forms = Vec::new();
                for k in 0..d {
                    let lam = eig.eigenvalues[k];
                    if lam.abs() <= 1e-12 {
                        return Err(Error::BasisConstruction { residual: lam.abs() });
                    }
                    let u = &fp * eig.eigenvectors.column(k) * Complex::new(lam.abs().sqrt().recip(), 0.0);
                    // (1/2i) sigma(u, conj u) = -sigma(Re u, Im u) / 2 for this scaling
                    let a = u.map(|z| z.re);
                    let bv = u.map(|z| z.im);
                    let s = sigma(&a, &bv);
                    let kappa = if lam > 0.0 { 1.0 } else { -1.0 };
                    let scale = s.abs().sqrt();
                    let a = a / scale;
                    let f = if s < 0.0 { bv / scale } else { -bv / scale };
                    es.push(a);
                    fs.push(f);
                    forms.push((ActionKind::Elliptic, kappa * omega, vec![k]));
                }
                blocks.push(Block { es, fs, forms, exponent: idx });
            }
        }
    }

    let mut t = DMatrix::zeros(n, n);
    let mut col = 0;
    let mut pair_offset = Vec::new();
    for blk in &blocks {
        pair_offset.push(col);
        for (k, e) in blk.es.iter().enumerate() {
            t.set_column(col + k, e);
            t.set_column(m + col + k, &blk.fs[k]);
        }
        col += blk.es.len();
    }
    if col != m {
        return Err(Error::BasisConstruction { residual: (col as f64 - m as f64).abs() });
    }
    let j = standard_j(m);
    let sympl = linalg::spectral_norm(&(t.transpose() * &j * &t - &j)) / linalg::spectral_norm(&t).powi(2).max(1.0);
    if !(sympl <= 1e-8) {
        // cross-block pairings should vanish; repair with symplectic Gram-Schmidt
        let mut vs = Vec::new();
        for k in 0..m {
            vs.push(t.column(k).into_owned());
            vs.push(t.column(m + k).into_owned());
        }
        let (es, fs) = symplectic_gram_schmidt(vs)?;
        for k in 0..m {
            t.set_column(k, &es[k]);
            t.set_column(m + k, &fs[k]);
        }
    }
    let t_inv = t.clone().try_inverse().ok_or(Error::BasisConstruction { residual: f64::INFINITY })?;

    let qb = b_matrix(b);
    let mut actions = Vec::new();
    let mut recon = DMatrix::zeros(n, n);
    for (blk, &off) in blocks.iter().zip(&pair_offset) {
        for (kind, coefficient, pairs) in &blk.forms {
            let global: Vec<usize> = pairs.iter().map(|p| p + off).collect();
            let q_std = standard_form(*kind, &global, m);
            let q = linalg::symmetrize(&(t_inv.transpose() * q_std * &t_inv));
            recon += &q * *coefficient;
            actions.push(ActionCoordinate {
                kind: *kind,
                exponent: blk.exponent,
                coefficient: *coefficient,
                matrix: q,
            });
        }
    }
    let residual = linalg::spectral_norm(&(&qb - recon)) / linalg::spectral_norm(&qb).max(1.0);
    if !(residual <= DECOMPOSITION_TOL) {
        return Err(Error::BasisConstruction { residual });
    }
    Ok(QuadraticForm {
        b_matrix: qb,
        adapted_basis: t,
        action_coordinates: actions,
        decomposition_residual: residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, LN_2};

    fn quad(q: &DMatrix<f64>, r: &DVector<f64>) -> f64 {
        r.dot(&(q * r))
    }

    #[test]
    fn hyperbolic_exponent_and_form() {
        let b = DMatrix::from_row_slice(2, 2, &[LN_2, 0.0, 0.0, -LN_2]);
        let ex = floquet_exponents(&b).unwrap();
        assert_eq!(ex.len(), 1);
        assert!((ex[0].value.re - LN_2).abs() < 1e-15 && ex[0].value.im == 0.0);
        let s = invariant_splitting(&b, &ex).unwrap();
        assert!(s.f_plus[(1, 0)].norm() < 1e-15 && (s.f_plus[(0, 0)].norm() - 1.0).abs() < 1e-15);
        assert!(s.f_minus[(0, 0)].norm() < 1e-15);
        let q = quadratic_form_b(&b, &ex).unwrap();
        // b(x, xi) = ln 2 * x xi
        let r = DVector::from_vec(vec![0.7, -1.3]);
        assert!((quad(&q.b_matrix, &r) - LN_2 * 0.7 * -1.3).abs() < 1e-15);
        assert_eq!(q.action_coordinates.len(), 1);
        assert_eq!(q.action_coordinates[0].kind, ActionKind::Hyperbolic);
        assert!((q.action_coordinates[0].coefficient - LN_2).abs() < 1e-15);
    }

    #[test]
    fn elliptic_exponent_and_dissipativity() {
        let b = standard_j(1) * 0.3;
        let ex = floquet_exponents(&b).unwrap();
        assert!(ex[0].value.re == 0.0 && (ex[0].value.im - 0.3).abs() < 1e-15);
        let s = invariant_splitting(&b, &ex).unwrap();
        let u = s.f_plus.column(0);
        // proportional to e1 + i e2
        assert!((u[1] - u[0] * Complex::new(0.0, 1.0)).norm() < 1e-14);
        assert!(s.dissipativity_min > 0.0);
        let q = quadratic_form_b(&b, &ex).unwrap();
        let r = DVector::from_vec(vec![0.4, 0.9]);
        assert!((quad(&q.b_matrix, &r) - 0.3 * 0.5 * (0.16 + 0.81)).abs() < 1e-15);
        assert!((q.action_coordinates[0].coefficient - 0.3).abs() < 1e-14);
    }

    #[test]
    fn negative_krein_sign_flips_coefficient() {
        let b = standard_j(1) * -0.3;
        let ex = floquet_exponents(&b).unwrap();
        let q = quadratic_form_b(&b, &ex).unwrap();
        assert!((q.action_coordinates[0].coefficient + 0.3).abs() < 1e-14);
    }

    #[test]
    fn zero_exponent_is_rejected() {
        let b = DMatrix::zeros(2, 2);
        assert!(matches!(floquet_exponents(&b), Err(Error::ZeroExponent { .. })));
    }

    #[test]
    fn jordan_block_is_rejected() {
        // B = [[N, 0], [0, -N^T]] with N = [[0.5, 1], [0, 0.5]] is Hamiltonian and not semi-simple
        let b = DMatrix::from_row_slice(
            4,
            4,
            &[0.5, 1.0, 0.0, 0.0, 0.0, 0.5, 0.0, 0.0, 0.0, 0.0, -0.5, 0.0, 0.0, 0.0, -1.0, -0.5],
        );
        let ex = floquet_exponents(&b).unwrap();
        assert_eq!(ex[0].multiplicity, 2);
        assert!(matches!(invariant_splitting(&b, &ex), Err(Error::NonSemisimple { .. })));
    }

    #[test]
    fn two_mode_block_assembly() {
        // b = (pi/2) x1 xi1 + 0.3 (x2^2 + xi2^2) / 2 in coordinates (x1, x2, xi1, xi2)
        let mut hess = DMatrix::zeros(4, 4);
        hess[(0, 2)] = FRAC_PI_2;
        hess[(2, 0)] = FRAC_PI_2;
        hess[(1, 1)] = 0.3;
        hess[(3, 3)] = 0.3;
        let b = standard_j(2) * &hess;
        let ex = floquet_exponents(&b).unwrap();
        assert_eq!(ex.len(), 2);
        assert!((ex[0].value.re - FRAC_PI_2).abs() < 1e-14);
        assert!((ex[1].value.im - 0.3).abs() < 1e-14);
        let s = invariant_splitting(&b, &ex).unwrap();
        assert_eq!(s.f_plus.ncols(), 2);
        assert!(s.lagrangian_residual < 1e-9);
        let q = quadratic_form_b(&b, &ex).unwrap();
        assert!((&q.b_matrix - &hess * 0.5).amax() < 1e-15);
        assert!(q.decomposition_residual < 1e-10);
    }

    #[test]
    fn loxodromic_decomposition() {
        let (a, bb) = (0.2, 0.5);
        let b = DMatrix::from_row_slice(
            4,
            4,
            &[a, bb, 0.0, 0.0, -bb, a, 0.0, 0.0, 0.0, 0.0, -a, bb, 0.0, 0.0, -bb, -a],
        );
        let ex = floquet_exponents(&b).unwrap();
        assert_eq!(ex.len(), 2);
        assert!((ex[0].value - Complex::new(a, bb)).norm() < 1e-14);
        assert!((ex[1].value - Complex::new(a, -bb)).norm() < 1e-14);
        assert!(ex.iter().all(|e| e.tag == Tag::Loxodromic));
        let q = quadratic_form_b(&b, &ex).unwrap();
        assert_eq!(q.action_coordinates.len(), 2);
        assert!(q.decomposition_residual < 1e-10);
        let coeffs: Vec<f64> = q.action_coordinates.iter().map(|c| c.coefficient).collect();
        assert!((coeffs[0] - a).abs() < 1e-14 && (coeffs[1] - bb).abs() < 1e-14);
    }
}

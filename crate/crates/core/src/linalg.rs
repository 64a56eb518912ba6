//! Dense linear-algebra helpers shared by the flow, orbit and Floquet modules.

use nalgebra::{Complex, DMatrix, DVector};
use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

/// Standard symplectic matrix `J = [[0, I], [-I, 0]]` of size `2m`.
///
/// With `sigma(u, v) = <J u, v>` the Hamilton vector field is `J grad H`,
/// i.e. `(dH/dxi, -dH/dx)`.
pub fn standard_j(m: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(2 * m, 2 * m);
    for i in 0..m {
        j[(i, m + i)] = 1.0;
        j[(m + i, i)] = -1.0;
    }
    j
}

/// `sigma(u, v) = <J u, v>` for the standard form.
pub fn sigma(u: &DVector<f64>, v: &DVector<f64>) -> f64 {
    let m = u.len() / 2;
    let mut s = 0.0;
    // (J u)_i = u_{m+i}, (J u)_{m+i} = -u_i
    for i in 0..m {
        s += u[m + i] * v[i] - u[i] * v[m + i];
    }
    s
}

/// Complex-bilinear extension of `sigma` (no conjugation).
pub fn sigma_c(u: &DVector<C64>, v: &DVector<C64>) -> C64 {
    let m = u.len() / 2;
    let mut s = C64::new(0.0, 0.0);
    for i in 0..m {
        s += u[m + i] * v[i] - u[i] * v[m + i];
    }
    s
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().iter().cloned().fold(0.0, f64::max)
}

pub fn spectral_norm_c(m: &DMatrix<C64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().iter().cloned().fold(0.0, f64::max)
}

pub fn one_norm(m: &DMatrix<f64>) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `|| M^T J M - J ||_2` for the standard `J`.
pub fn symplectic_residual(m: &DMatrix<f64>) -> f64 {
    let j = standard_j(m.nrows() / 2);
    spectral_norm(&(m.transpose() * &j * m - &j))
}

/// Same residual scaled by `max(1, ||M||^2)`; the natural measure for
/// monodromies with large multipliers.
pub fn relative_symplectic_residual(m: &DMatrix<f64>) -> f64 {
    let n = spectral_norm(m);
    symplectic_residual(m) / (n * n).max(1.0)
}

/// `|| B^T J + J B ||_2`; zero exactly for Hamiltonian matrices.
pub fn hamiltonian_residual(b: &DMatrix<f64>) -> f64 {
    let j = standard_j(b.nrows() / 2);
    spectral_norm(&(b.transpose() * &j + &j * b))
}

/// Orthogonal projection of `b` onto Hamiltonian matrices: `(B + J B^T J) / 2`.
pub fn hamiltonian_part(b: &DMatrix<f64>) -> DMatrix<f64> {
    let j = standard_j(b.nrows() / 2);
    (b + &j * b.transpose() * &j) * 0.5
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn to_complex(m: &DMatrix<f64>) -> DMatrix<C64> {
    m.map(|x| C64::new(x, 0.0))
}

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

/// Matrix exponential by scaling and squaring with the degree-13 Pade approximant.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm needs a square matrix");
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let norm = one_norm(a);
    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let a = a / 2f64.powi(s);
    let id = DMatrix::<f64>::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = &PADE13;
    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9])
        + &a6 * b[7]
        + &a4 * b[5]
        + &a2 * b[3]
        + &id * b[1];
    let u = &a * u_inner;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8])
        + &a6 * b[6]
        + &a4 * b[4]
        + &a2 * b[2]
        + &id * b[0];
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q
        .lu()
        .solve(&p)
        .expect("Pade denominator is nonsingular for scaled arguments");
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

/// Real Schur factorization `a = Q T Q^T` with a bounded number of QR
/// sweeps. When the shifted QR iteration stalls, the matrix is rotated by an
/// orthogonal similarity and the factorization retried.
pub fn real_schur(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    let max_iter = 200 * n.max(1);
    let mut rot = DMatrix::<f64>::identity(n, n);
    for attempt in 0..6 {
        let b = rot.transpose() * a * &rot;
        if let Some(s) = nalgebra::Schur::try_new(b, f64::EPSILON, max_iter) {
            let (q, t) = s.unpack();
            return Ok((&rot * q, t));
        }
        let theta = 0.37 * (attempt + 1) as f64;
        let (sn, cs) = theta.sin_cos();
        let mut g = DMatrix::<f64>::identity(n, n);
        for i in (attempt % 2..n.saturating_sub(1)).step_by(2) {
            g[(i, i)] = cs;
            g[(i + 1, i + 1)] = cs;
            g[(i, i + 1)] = -sn;
            g[(i + 1, i)] = sn;
        }
        rot = rot * g;
    }
    Err(Error::NonConvergence {
        residual: f64::NAN,
        reason: "real Schur iteration stalled".into(),
    })
}

/// Eigenvalues read off the diagonal blocks of a real quasi-triangular matrix.
pub fn quasi_triangular_eigenvalues(t: &DMatrix<f64>) -> Vec<C64> {
    let n = t.nrows();
    let mut out = Vec::with_capacity(n);
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)] != 0.0 {
            let (a, b, c, d) = (t[(i, i)], t[(i, i + 1)], t[(i + 1, i)], t[(i + 1, i + 1)]);
            let mid = C64::new(0.5 * (a + d), 0.0);
            let disc = C64::new(0.25 * (a - d) * (a - d) + b * c, 0.0).sqrt();
            out.push(mid + disc);
            out.push(mid - disc);
            i += 2;
        } else {
            out.push(C64::new(t[(i, i)], 0.0));
            i += 1;
        }
    }
    out
}

/// Orthonormal basis (as columns) of the approximate null space of a complex
/// matrix, taking the `dim` right singular vectors with smallest singular
/// values. Returns the basis and the largest discarded-side singular value
/// ratio (smallest kept singular value / largest singular value).
pub fn null_space_c(a: &DMatrix<C64>, dim: usize) -> (DMatrix<C64>, f64) {
    let n = a.ncols();
    let svd = a.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max).max(1e-300);
    let mut basis = DMatrix::zeros(n, dim);
    let mut worst: f64 = 0.0;
    for (c, &idx) in order.iter().take(dim).enumerate() {
        worst = worst.max(svd.singular_values[idx] / smax);
        for r in 0..n {
            basis[(r, c)] = v_t[(idx, r)].conj();
        }
    }
    (basis, worst)
}

/// 2-norm condition number.
pub fn condition_number_c(m: &DMatrix<C64>) -> f64 {
    let sv = m.singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre_01(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = Vec::with_capacity(m);
    let mut weights = Vec::with_capacity(m);
    for i in 0..m {
        // Chebyshev-type initial guess, Newton on P_m.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(m, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(m, x);
        if d != 0.0 {
            dp = d;
        }
        nodes.push(0.5 * (1.0 - x));
        weights.push(1.0 / ((1.0 - x * x) * dp * dp));
    }
    (nodes, weights)
}

fn legendre(m: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if m == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=m {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = m as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn j_squares_to_minus_identity() {
        let j = standard_j(3);
        assert_eq!(&j * &j, -DMatrix::<f64>::identity(6, 6));
        assert_eq!(j.transpose(), -&j);
    }

    #[test]
    fn sigma_matches_matrix_definition() {
        let u = DVector::from_vec(vec![1.0, 2.0, -0.5, 0.25]);
        let v = DVector::from_vec(vec![-3.0, 0.5, 1.5, 2.0]);
        let j = standard_j(2);
        assert!((sigma(&u, &v) - (&j * &u).dot(&v)).abs() < 1e-15);
    }

    #[test]
    fn expm_of_generator_is_rotation() {
        let j = standard_j(1) * 0.3;
        let e = expm(&j);
        assert!((e[(0, 0)] - 0.3f64.cos()).abs() < 1e-15);
        assert!((e[(0, 1)] - 0.3f64.sin()).abs() < 1e-15);
        let big = DMatrix::from_diagonal(&DVector::from_vec(vec![10.0, -10.0]));
        let e = expm(&big);
        assert!((e[(0, 0)] / 10f64.exp() - 1.0).abs() < 1e-13);
        assert!((e[(1, 1)] / (-10f64).exp() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre_01(8);
        let integral: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(15)).sum();
        assert!((integral - 1.0 / 16.0).abs() < 1e-15);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn real_schur_reconstructs_and_reads_spectrum() {
        // rotation by 0.7 scaled by 2, plus a real eigenvalue 3
        let (c, sn) = (0.7f64.cos(), 0.7f64.sin());
        let d = DMatrix::from_row_slice(3, 3, &[2.0 * c, -2.0 * sn, 0.0, 2.0 * sn, 2.0 * c, 0.0, 0.0, 0.0, 3.0]);
        let p = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, -0.1, 0.3, 1.0, 0.4, -0.2, 0.1, 1.0]);
        let a = &p * d * p.clone().try_inverse().unwrap();
        let (q, t) = real_schur(&a).unwrap();
        assert!((&q * &t * q.transpose() - &a).norm() < 1e-12);
        assert!((q.transpose() * &q - DMatrix::<f64>::identity(3, 3)).norm() < 1e-13);
        let mut ev = quasi_triangular_eigenvalues(&t);
        ev.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
        let want = [C64::new(2.0 * c, -2.0 * sn), C64::new(2.0 * c, 2.0 * sn), C64::new(3.0, 0.0)];
        for (g, w) in ev.iter().zip(&want) {
            assert!((g - w).norm() < 1e-12, "{g} vs {w}");
        }
    }
}

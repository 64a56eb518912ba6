#![allow(dead_code)]

use std::f64::consts::PI;

use hypres::linalg::{expm, standard_j, C64};
use hypres::{CustomHamiltonian, HamiltonianSystem};
use nalgebra::{Complex, DMatrix, DVector};

/// `H = |xi|^2/2 + x^T K x / 2 + c sum x_i^4 / 4 + eps xi_1 x_2` with
/// analytic derivatives.
pub fn anharmonic(k: DMatrix<f64>, c: f64, eps: f64) -> HamiltonianSystem {
    let n = k.nrows();
    assert!(n >= 2);
    let (k1, k2, k3) = (k.clone(), k.clone(), k);
    let h = CustomHamiltonian::new(n, move |z: &DVector<f64>| {
        let x = z.rows(0, n);
        let xi = z.rows(n, n);
        0.5 * xi.norm_squared()
            + 0.5 * x.dot(&(&k1 * x))
            + 0.25 * c * x.iter().map(|v| v.powi(4)).sum::<f64>()
            + eps * xi[0] * x[1]
    })
    .with_gradient(move |z: &DVector<f64>| {
        let x = z.rows(0, n).into_owned();
        let mut g = DVector::zeros(2 * n);
        let kx = &k2 * &x;
        for i in 0..n {
            g[i] = kx[i] + c * x[i].powi(3);
            g[n + i] = z[n + i];
        }
        g[1] += eps * z[n];
        g[n] += eps * z[1];
        g
    })
    .with_hessian(move |z: &DVector<f64>| {
        let mut h = DMatrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            for j in 0..n {
                h[(i, j)] = k3[(i, j)];
            }
            h[(i, i)] += 3.0 * c * z[i] * z[i];
            h[(n + i, n + i)] = 1.0;
        }
        h[(1, n)] += eps;
        h[(n, 1)] += eps;
        h
    });
    HamiltonianSystem::new("anharmonic", h)
}

#[derive(Debug, Clone, Copy)]
pub enum Mode {
    Hyperbolic(f64),
    Elliptic(f64),
    Loxodromic(f64, f64),
}

impl Mode {
    pub fn slots(&self) -> usize {
        match self {
            Mode::Loxodromic(..) => 2,
            _ => 1,
        }
    }

    /// Exponents in the normalization `Re > 0`, or `Re = 0` and `Im > 0`.
    pub fn exponents(&self) -> Vec<C64> {
        match *self {
            Mode::Hyperbolic(mu) => vec![Complex::new(mu, 0.0)],
            Mode::Elliptic(w) => vec![Complex::new(0.0, w)],
            Mode::Loxodromic(a, b) => vec![Complex::new(a, b), Complex::new(a, -b)],
        }
    }
}

/// Hessian `S` of the quadratic Hamiltonian with the given modes, on
/// coordinates `(x_1..x_m, xi_1..xi_m)`. The linear flow is `J S`.
pub fn normal_hessian(modes: &[Mode]) -> DMatrix<f64> {
    let m: usize = modes.iter().map(Mode::slots).sum();
    let mut s = DMatrix::zeros(2 * m, 2 * m);
    let mut j = 0;
    let put = |s: &mut DMatrix<f64>, a: usize, b: usize, v: f64| {
        s[(a, b)] += v;
        if a != b {
            s[(b, a)] += v;
        }
    };
    for mode in modes {
        match *mode {
            Mode::Hyperbolic(mu) => put(&mut s, j, m + j, mu),
            Mode::Elliptic(w) => {
                put(&mut s, j, j, w);
                put(&mut s, m + j, m + j, w);
            }
            Mode::Loxodromic(a, b) => {
                let k = j + 1;
                put(&mut s, j, m + j, a);
                put(&mut s, k, m + k, a);
                put(&mut s, k, m + j, b);
                put(&mut s, j, m + k, -b);
            }
        }
        j += mode.slots();
    }
    s
}

/// `P exp(J S) P^{-1}` with `P = exp(J R)`, `R` symmetric built from `entries`.
pub fn conjugated_symplectic(modes: &[Mode], entries: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
    let s = normal_hessian(modes);
    let d = s.nrows();
    let j = standard_j(d / 2);
    let mut r = DMatrix::zeros(d, d);
    let mut it = entries.iter().cycle();
    for a in 0..d {
        for b in a..d {
            let v = *it.next().unwrap();
            r[(a, b)] = v;
            r[(b, a)] = v;
        }
    }
    let p = expm(&(&j * r));
    let p_inv = p.clone().try_inverse().unwrap();
    let b0 = &j * s;
    (&p * expm(&b0) * &p_inv, &p * b0 * p_inv)
}

pub fn sorted_exponents(mut v: Vec<C64>) -> Vec<C64> {
    v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    v
}

pub fn max_pair_distance(a: &[C64], b: &[C64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let a = sorted_exponents(a.to_vec());
    let b = sorted_exponents(b.to_vec());
    a.iter().zip(&b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn j_residual(m: &DMatrix<f64>) -> f64 {
    let j = standard_j(m.nrows() / 2);
    (m.transpose() * &j * m - j).norm()
}

/// Gaussian curvature of `E du^2 + G dv^2` with `E, G` functions of `u`,
/// by central differences.
pub fn curvature_of_rotation_metric(e: impl Fn(f64) -> f64, g: impl Fn(f64) -> f64, u: f64) -> f64 {
    let h = 1e-4;
    let w = |u: f64| (e(u) * g(u)).sqrt();
    let gu = |u: f64| (g(u + h) - g(u - h)) / (2.0 * h);
    let f = |u: f64| gu(u) / w(u);
    -(f(u + h) - f(u - h)) / (2.0 * h) / (2.0 * w(u))
}

/// Largest Floquet exponent of `J'' + K(s) J = 0` over `[0, length]`,
/// by classical RK4 with `steps` steps.
pub fn jacobi_exponent(k: impl Fn(f64) -> f64, length: f64, steps: usize) -> f64 {
    let h = length / steps as f64;
    let f = |s: f64, y: [f64; 2]| [y[1], -k(s) * y[0]];
    let mut cols = [[1.0, 0.0], [0.0, 1.0]];
    for y in cols.iter_mut() {
        let mut s = 0.0;
        for _ in 0..steps {
            let k1 = f(s, *y);
            let k2 = f(s + h / 2.0, [y[0] + h / 2.0 * k1[0], y[1] + h / 2.0 * k1[1]]);
            let k3 = f(s + h / 2.0, [y[0] + h / 2.0 * k2[0], y[1] + h / 2.0 * k2[1]]);
            let k4 = f(s + h, [y[0] + h * k3[0], y[1] + h * k3[1]]);
            for i in 0..2 {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            s += h;
        }
    }
    // monodromy [[a, b], [c, d]] with columns the two solutions
    let tr = cols[0][0] + cols[1][1];
    let det = cols[0][0] * cols[1][1] - cols[1][0] * cols[0][1];
    let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
    (tr / 2.0 + disc).ln()
}

pub const ELLIPTIC_MAX: f64 = PI - 0.15;

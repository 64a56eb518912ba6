//! One-dimensional interpolation on a strictly increasing grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_grid(x: &[f64], y_len: usize) -> Result<()> {
    if x.is_empty() || x.len() != y_len {
        return Err(Error::Dimension(format!(
            "interpolation needs matching nonempty grids (got {} abscissae, {} values)",
            x.len(),
            y_len
        )));
    }
    if x.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Dimension("interpolation grid must be strictly increasing".into()));
    }
    Ok(())
}

/// Index `i` with `x[i] <= t <= x[i+1]` (clamped to the end intervals).
fn interval(x: &[f64], t: f64) -> usize {
    if x.len() < 2 {
        return 0;
    }
    match x.partition_point(|&v| v <= t) {
        0 => 0,
        p if p >= x.len() => x.len() - 2,
        p => p - 1,
    }
}

/// Natural cubic spline. Falls back to linear (two points) or constant (one point).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    /// Second derivatives at the nodes.
    m: Vec<f64>,
}

impl CubicSpline {
    pub fn new(x: &[f64], y: &[f64]) -> Result<Self> {
        check_grid(x, y.len())?;
        let n = x.len();
        let mut m = vec![0.0; n];
        if n >= 3 {
            // tridiagonal system for interior second derivatives (Thomas algorithm)
            let k = n - 2;
            let mut diag = vec![0.0; k];
            let mut upper = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            for i in 0..k {
                let h0 = x[i + 1] - x[i];
                let h1 = x[i + 2] - x[i + 1];
                diag[i] = 2.0 * (h0 + h1);
                upper[i] = h1;
                rhs[i] = 6.0 * ((y[i + 2] - y[i + 1]) / h1 - (y[i + 1] - y[i]) / h0);
            }
            for i in 1..k {
                let lower = x[i + 1] - x[i];
                let w = lower / diag[i - 1];
                diag[i] -= w * upper[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            m[k] = rhs[k - 1] / diag[k - 1];
            for i in (0..k - 1).rev() {
                m[i + 1] = (rhs[i] - upper[i] * m[i + 2]) / diag[i];
            }
        }
        Ok(CubicSpline {
            x: x.to_vec(),
            y: y.to_vec(),
            m,
        })
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.eval_with_derivative(t).0
    }

    pub fn derivative(&self, t: f64) -> f64 {
        self.eval_with_derivative(t).1
    }

    pub fn eval_with_derivative(&self, t: f64) -> (f64, f64) {
        let n = self.x.len();
        if n == 1 {
            return (self.y[0], 0.0);
        }
        let i = interval(&self.x, t);
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        let (m0, m1) = (self.m[i], self.m[i + 1]);
        let v = a * self.y[i] + b * self.y[i + 1] + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0;
        let d = (self.y[i + 1] - self.y[i]) / h - (3.0 * a * a - 1.0) * h * m0 / 6.0 + (3.0 * b * b - 1.0) * h * m1 / 6.0;
        (v, d)
    }
}

/// Piecewise cubic Hermite interpolant from values and derivatives.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HermiteCubic {
    x: Vec<f64>,
    y: Vec<f64>,
    dy: Vec<f64>,
}

impl HermiteCubic {
    pub fn new(x: &[f64], y: &[f64], dy: &[f64]) -> Result<Self> {
        check_grid(x, y.len())?;
        check_grid(x, dy.len())?;
        Ok(HermiteCubic {
            x: x.to_vec(),
            y: y.to_vec(),
            dy: dy.to_vec(),
        })
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.eval_with_derivative(t).0
    }

    pub fn derivative(&self, t: f64) -> f64 {
        self.eval_with_derivative(t).1
    }

    pub fn eval_with_derivative(&self, t: f64) -> (f64, f64) {
        if self.x.len() == 1 {
            return (self.y[0] + self.dy[0] * (t - self.x[0]), self.dy[0]);
        }
        let i = interval(&self.x, t);
        let h = self.x[i + 1] - self.x[i];
        let s = (t - self.x[i]) / h;
        let (s2, s3) = (s * s, s * s * s);
        let (y0, y1, d0, d1) = (self.y[i], self.y[i + 1], self.dy[i] * h, self.dy[i + 1] * h);
        let v = (2.0 * s3 - 3.0 * s2 + 1.0) * y0 + (s3 - 2.0 * s2 + s) * d0 + (-2.0 * s3 + 3.0 * s2) * y1 + (s3 - s2) * d1;
        let d = ((6.0 * s2 - 6.0 * s) * y0 + (3.0 * s2 - 4.0 * s + 1.0) * d0 + (-6.0 * s2 + 6.0 * s) * y1 + (3.0 * s2 - 2.0 * s) * d1) / h;
        (v, d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spline_reproduces_linear_data() {
        let x = [0.0, 0.5, 1.5, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|t| 2.0 * t - 1.0).collect();
        let s = CubicSpline::new(&x, &y).unwrap();
        for t in [0.1, 0.7, 1.9, 2.5, 3.0] {
            assert!((s.eval(t) - (2.0 * t - 1.0)).abs() < 1e-14);
            assert!((s.derivative(t) - 2.0).abs() < 1e-13);
        }
    }

    #[test]
    fn spline_interpolates_nodes_and_is_accurate() {
        let x: Vec<f64> = (0..21).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = x.iter().map(|t| t.sin()).collect();
        let s = CubicSpline::new(&x, &y).unwrap();
        for (a, b) in x.iter().zip(&y) {
            assert!((s.eval(*a) - b).abs() < 1e-14);
        }
        assert!((s.eval(1.05) - 1.05f64.sin()).abs() < 1e-5);
    }

    #[test]
    fn hermite_is_exact_for_cubics() {
        let f = |t: f64| t * t * t - 2.0 * t;
        let df = |t: f64| 3.0 * t * t - 2.0;
        let x = [-1.0, 0.0, 2.0];
        let y: Vec<f64> = x.iter().map(|&t| f(t)).collect();
        let d: Vec<f64> = x.iter().map(|&t| df(t)).collect();
        let h = HermiteCubic::new(&x, &y, &d).unwrap();
        for t in [-0.5, 0.3, 1.7] {
            assert!((h.eval(t) - f(t)).abs() < 1e-13);
            assert!((h.derivative(t) - df(t)).abs() < 1e-12);
        }
    }

    #[test]
    fn bad_grids_are_rejected() {
        assert!(CubicSpline::new(&[0.0, 0.0], &[1.0, 2.0]).is_err());
        assert!(CubicSpline::new(&[], &[]).is_err());
        assert!(HermiteCubic::new(&[0.0, 1.0], &[1.0, 2.0], &[0.0]).is_err());
    }
}

//! Fixed-step three-stage Gauss-Legendre collocation (order 6, symplectic).
//!
//! Stages are solved by fixed-point iteration, which is adequate for the
//! non-stiff systems handled here.

use nalgebra::DVector;

use super::{Control, IntegratorOptions, Rhs, Step};
use crate::error::{Error, Result};

const MAX_ITER: usize = 100;

fn tableau() -> ([[f64; 3]; 3], [f64; 3]) {
    let s15 = 15f64.sqrt();
    let a = [
        [5.0 / 36.0, 2.0 / 9.0 - s15 / 15.0, 5.0 / 36.0 - s15 / 30.0],
        [5.0 / 36.0 + s15 / 24.0, 2.0 / 9.0, 5.0 / 36.0 - s15 / 24.0],
        [5.0 / 36.0 + s15 / 30.0, 2.0 / 9.0 + s15 / 15.0, 5.0 / 36.0],
    ];
    let b = [5.0 / 18.0, 4.0 / 9.0, 5.0 / 18.0];
    (a, b)
}

pub fn run(
    rhs: &mut Rhs<'_>,
    y0: &DVector<f64>,
    t_end: f64,
    step_size: f64,
    opts: &IntegratorOptions,
    observer: &mut dyn FnMut(&Step) -> Result<Control>,
) -> Result<(f64, DVector<f64>)> {
    let (a, b) = tableau();
    let dim = y0.len();
    let mut y = y0.clone();
    let mut t = 0.0;
    if t_end == 0.0 {
        return Ok((t, y));
    }
    let n_steps = (t_end.abs() / step_size.abs()).ceil().max(1.0) as usize;
    let h = t_end / n_steps as f64;
    let fail = |t: f64, y: &DVector<f64>, reason: String| Error::Integration {
        t,
        state: y.iter().cloned().collect(),
        reason,
    };
    let mut f0 = DVector::zeros(dim);
    rhs(&y, &mut f0).map_err(|e| fail(t, &y, e.to_string()))?;
    for i in 0..n_steps {
        let mut k = [f0.clone(), f0.clone(), f0.clone()];
        let mut converged = false;
        for _ in 0..MAX_ITER {
            let mut delta: f64 = 0.0;
            let mut next = k.clone();
            for s in 0..3 {
                let ys = &y + (&k[0] * a[s][0] + &k[1] * a[s][1] + &k[2] * a[s][2]) * h;
                rhs(&ys, &mut next[s]).map_err(|e| fail(t, &y, e.to_string()))?;
                for j in 0..dim {
                    let sc = opts.abs_tol + opts.rel_tol * ys[j].abs();
                    delta = delta.max(((next[s][j] - k[s][j]) * h / sc).abs());
                }
            }
            k = next;
            if delta < 1e-3 {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(fail(t, &y, "Gauss-Legendre stage iteration did not converge; reduce the step".into()));
        }
        let y1 = &y + (&k[0] * b[0] + &k[1] * b[1] + &k[2] * b[2]) * h;
        let mut f1 = DVector::zeros(dim);
        rhs(&y1, &mut f1).map_err(|e| fail(t, &y, e.to_string()))?;
        let t1 = if i + 1 == n_steps { t_end } else { t + h };
        let step = Step {
            t0: t,
            t1,
            y0: y.clone(),
            y1: y1.clone(),
            f0: f0.clone(),
            f1: f1.clone(),
            dense: None,
        };
        t = t1;
        y = y1;
        f0 = f1;
        if let Control::Stop = observer(&step)? {
            break;
        }
    }
    Ok((t, y))
}

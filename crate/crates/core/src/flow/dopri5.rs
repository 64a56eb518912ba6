//! Dormand-Prince 5(4) with the fourth-order continuous extension.

use nalgebra::DVector;

use super::{Control, IntegratorOptions, Rhs, Step};
use crate::error::{Error, Result};


const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

/// Dense-output coefficients of one accepted step.
#[derive(Debug, Clone)]
pub struct DenseDopri {
    r: [DVector<f64>; 5],
}

impl DenseDopri {
    pub fn eval(&self, theta: f64) -> DVector<f64> {
        let t1 = 1.0 - theta;
        &self.r[0]
            + (&self.r[1] + (&self.r[2] + (&self.r[3] + &self.r[4] * t1) * theta) * t1) * theta
    }
}

fn error_norm(y0: &DVector<f64>, y1: &DVector<f64>, err: &DVector<f64>, opts: &IntegratorOptions) -> f64 {
    let n = y0.len() as f64;
    let s: f64 = (0..y0.len())
        .map(|i| {
            let sc = opts.abs_tol + opts.rel_tol * y0[i].abs().max(y1[i].abs());
            (err[i] / sc).powi(2)
        })
        .sum();
    (s / n).sqrt()
}

fn initial_step(rhs: &mut Rhs<'_>, y0: &DVector<f64>, f0: &DVector<f64>, opts: &IntegratorOptions) -> f64 {
    let scale = |v: &DVector<f64>| {
        let n = v.len() as f64;
        (v.iter()
            .zip(y0.iter())
            .map(|(a, y)| (a / (opts.abs_tol + opts.rel_tol * y.abs())).powi(2))
            .sum::<f64>()
            / n)
            .sqrt()
    };
    let d0 = scale(y0);
    let d1 = scale(f0);
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h0 = h0.min(opts.max_step);
    let y1 = y0 + f0 * h0;
    let mut f1 = DVector::zeros(y0.len());
    if rhs(&y1, &mut f1).is_err() {
        return h0 * 1e-3;
    }
    let d2 = scale(&(&f1 - f0)) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(1.0 / 5.0)
    };
    (100.0 * h0).min(h1).min(opts.max_step)
}

/// Integrates `y' = rhs(y)` from `t = 0` to `t_end` (either sign), calling
/// `observer` after every accepted step. Returns the final time and state,
/// which differ from `t_end` only when the observer stopped the run.
pub fn run(
    rhs: &mut Rhs<'_>,
    y0: &DVector<f64>,
    t_end: f64,
    opts: &IntegratorOptions,
    observer: &mut dyn FnMut(&Step) -> Result<Control>,
) -> Result<(f64, DVector<f64>)> {
    let dim = y0.len();
    let dir = if t_end >= 0.0 { 1.0 } else { -1.0 };
    let mut t = 0.0;
    let mut y = y0.clone();
    if t_end == 0.0 {
        return Ok((t, y));
    }
    let mut k1 = DVector::zeros(dim);
    rhs(&y, &mut k1).map_err(|e| Error::Integration {
        t,
        state: y.iter().cloned().collect(),
        reason: format!("vector field failed at the initial point: {e}"),
    })?;
    let mut h = opts
        .initial_step
        .unwrap_or_else(|| initial_step(rhs, &y, &k1, opts))
        .abs()
        .min(t_end.abs())
        * dir;
    let mut k2 = DVector::zeros(dim);
    let mut k3 = DVector::zeros(dim);
    let mut k4 = DVector::zeros(dim);
    let mut k5 = DVector::zeros(dim);
    let mut k6 = DVector::zeros(dim);
    let mut k7 = DVector::zeros(dim);
    let mut steps = 0usize;
    let mut last_reject = false;
    let mut last_eval_error: Option<String> = None;

    loop {
        let remaining = t_end - t;
        if remaining * dir <= 0.0 {
            return Ok((t, y));
        }
        if steps >= opts.max_steps {
            return Err(Error::Integration {
                t,
                state: y.iter().cloned().collect(),
                reason: format!("exceeded {} steps", opts.max_steps),
            });
        }
        // land exactly on t_end
        let last = (h.abs() >= remaining.abs()) || (remaining.abs() - h.abs()) <= 1e-14 * t_end.abs();
        if last {
            h = remaining;
        }
        if h.abs() < opts.min_step * t.abs().max(1.0) {
            return Err(Error::Integration {
                t,
                state: y.iter().cloned().collect(),
                reason: match &last_eval_error {
                    Some(e) => format!("step size underflow ({e})"),
                    None => "step size underflow".into(),
                },
            });
        }

        let stages = (|| -> Result<DVector<f64>> {
            rhs(&(&y + &k1 * (h * A21)), &mut k2)?;
            rhs(&(&y + (&k1 * A31 + &k2 * A32) * h), &mut k3)?;
            rhs(&(&y + (&k1 * A41 + &k2 * A42 + &k3 * A43) * h), &mut k4)?;
            rhs(&(&y + (&k1 * A51 + &k2 * A52 + &k3 * A53 + &k4 * A54) * h), &mut k5)?;
            rhs(
                &(&y + (&k1 * A61 + &k2 * A62 + &k3 * A63 + &k4 * A64 + &k5 * A65) * h),
                &mut k6,
            )?;
            let y1 = &y + (&k1 * A71 + &k3 * A73 + &k4 * A74 + &k5 * A75 + &k6 * A76) * h;
            rhs(&y1, &mut k7)?;
            Ok(y1)
        })();

        let y1 = match stages {
            Ok(y1) if y1.iter().all(|v| v.is_finite()) && k7.iter().all(|v| v.is_finite()) => y1,
            Ok(_) => {
                last_eval_error = Some("non-finite stage".into());
                h *= 0.25;
                last_reject = true;
                continue;
            }
            Err(e) => {
                last_eval_error = Some(e.to_string());
                h *= 0.25;
                last_reject = true;
                continue;
            }
        };
        let err = (&k1 * E1 + &k3 * E3 + &k4 * E4 + &k5 * E5 + &k6 * E6 + &k7 * E7) * h;
        let en = error_norm(&y, &y1, &err, opts);
        if en <= 1.0 {
            steps += 1;
            let t1 = if last { t_end } else { t + h };
            let ydiff = &y1 - &y;
            let bspl = &k1 * h - &ydiff;
            let dense = DenseDopri {
                r: [
                    y.clone(),
                    ydiff.clone(),
                    bspl.clone(),
                    &ydiff - &k7 * h - &bspl,
                    (&k1 * D1 + &k3 * D3 + &k4 * D4 + &k5 * D5 + &k6 * D6 + &k7 * D7) * h,
                ],
            };
            let step = Step {
                t0: t,
                t1,
                y0: y.clone(),
                y1: y1.clone(),
                f0: k1.clone(),
                f1: k7.clone(),
                dense: Some(dense),
            };
            t = t1;
            y = y1;
            std::mem::swap(&mut k1, &mut k7);
            if let Control::Stop = observer(&step)? {
                return Ok((t, y));
            }
            let mut fac = SAFETY * en.max(1e-10).powf(-0.2);
            fac = fac.clamp(FAC_MIN, FAC_MAX);
            if last_reject {
                fac = fac.min(1.0);
            }
            h = (h * fac).abs().min(opts.max_step) * dir;
            last_reject = false;
            last_eval_error = None;
        } else {
            let fac = (SAFETY * en.powf(-0.2)).max(FAC_MIN);
            h *= fac;
            last_reject = true;
        }
    }
}

//! Periodic orbits at fixed energy by (multiple) shooting with a Newton
//! iteration on the initial point, the period and an energy multiplier.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{self, CrossingDirection, IntegratorOptions, Section, Trajectory};
use crate::hamiltonian::{HamiltonianSystem, PhasePoint};

/// Accepted closure residual `|Phi^T(rho) - rho|`.
pub const CLOSURE_TOL: f64 = 1e-8;
/// Accepted `|H(rho) - E|`.
pub const ENERGY_TOL: f64 = 1e-10;
/// Minimal `|<c, X_H>| / (|c| |X_H|)` at the reference point.
pub const TRANSVERSALITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OrbitOptions {
    pub integrator: IntegratorOptions,
    /// Number of shooting segments.
    pub segments: usize,
    pub max_iterations: usize,
    /// Newton stops once `|F| <= newton_tol`.
    pub newton_tol: f64,
    /// When the line search stalls, the iterate is still accepted below this residual.
    pub accept_tol: f64,
    /// Uniform samples stored over one period.
    pub samples: usize,
    /// Period guess; otherwise the first return to the section is used.
    pub period_guess: Option<f64>,
}

impl Default for OrbitOptions {
    fn default() -> Self {
        OrbitOptions {
            integrator: IntegratorOptions::default(),
            segments: 1,
            max_iterations: 40,
            newton_tol: 1e-11,
            accept_tol: 1e-9,
            samples: 1024,
            period_guess: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PeriodicOrbit {
    pub energy: f64,
    pub period: f64,
    pub ref_point: PhasePoint,
    /// Unit normal of the section through `ref_point`, along `X_H(ref_point)`.
    pub section_normal: DVector<f64>,
    /// Uniform samples `t_k = k T / N`, `k = 0..=N`.
    pub samples: Trajectory,
    pub action: f64,
    pub closure_residual: f64,
    pub energy_residual: f64,
    pub transversality: f64,
    /// `d Phi^T` at `ref_point`.
    pub monodromy: DMatrix<f64>,
    /// `int_0^T H_1(Phi^t(rho)) dt` when a subprincipal term is present.
    pub h1_integral: Option<f64>,
    pub newton_iterations: usize,
}

impl PeriodicOrbit {
    pub fn dof(&self) -> usize {
        self.ref_point.dof()
    }

    /// Orbit average of the subprincipal symbol (zero when absent).
    pub fn h1_average(&self) -> f64 {
        self.h1_integral.map(|v| v / self.period).unwrap_or(0.0)
    }
}

/// `S = int_0^T xi . dH/dxi dt` by the periodic trapezoid rule on the samples.
pub fn action(sys: &HamiltonianSystem, samples: &Trajectory) -> Result<f64> {
    let n_samples = samples.states.len().saturating_sub(1);
    if n_samples == 0 {
        return Err(Error::Dimension("orbit has no samples".into()));
    }
    let period = samples.times[n_samples] - samples.times[0];
    let n = sys.dof();
    let mut sum = 0.0;
    for s in &samples.states[..n_samples] {
        let z = s.to_vector();
        let g = sys.gradient(&z)?;
        sum += (0..n).map(|i| z[n + i] * g[n + i]).sum::<f64>();
    }
    Ok(sum * period / n_samples as f64)
}

fn periodic_integral(samples: &Trajectory, f: impl Fn(&DVector<f64>) -> Result<f64>) -> Result<f64> {
    let n_samples = samples.states.len() - 1;
    let period = samples.times[n_samples] - samples.times[0];
    let mut sum = 0.0;
    for s in &samples.states[..n_samples] {
        sum += f(&s.to_vector())?;
    }
    Ok(sum * period / n_samples as f64)
}

struct Shooting<'a> {
    sys: &'a HamiltonianSystem,
    energy: f64,
    section: &'a Section,
    segments: usize,
    opts: &'a IntegratorOptions,
}

/// Residual and Jacobian of the shooting system at `u = (z_0, .., z_{m-1}, T, beta)`.
struct Evaluation {
    f: DVector<f64>,
    jac: DMatrix<f64>,
    monodromy: DMatrix<f64>,
}

impl Shooting<'_> {
    fn dim(&self) -> usize {
        self.sys.phase_dim()
    }

    fn unpack(&self, u: &DVector<f64>) -> (Vec<DVector<f64>>, f64, f64) {
        let d = self.dim();
        let zs = (0..self.segments).map(|i| u.rows(i * d, d).into_owned()).collect();
        (zs, u[self.segments * d], u[self.segments * d + 1])
    }

    fn residual_only(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        let d = self.dim();
        let m = self.segments;
        let (zs, t, beta) = self.unpack(u);
        if !(t > 0.0) {
            return Err(Error::NonConvergence {
                residual: f64::INFINITY,
                reason: format!("period became non-positive ({t})"),
            });
        }
        let mut f = DVector::zeros(m * d + 2);
        for i in 0..m {
            let end = flow::flow_map(self.sys, &zs[i], t / m as f64, self.opts)?;
            let target = if i + 1 < m {
                zs[i + 1].clone()
            } else {
                let shift = self.sys.angle_shift(&end, &zs[0]);
                &zs[0] + shift - self.sys.gradient(&zs[0])? * beta
            };
            f.rows_mut(i * d, d).copy_from(&(end - target));
        }
        f[m * d] = self.sys.energy(&zs[0])? - self.energy;
        f[m * d + 1] = self.section.normal.dot(&(&zs[0] - &self.section.reference));
        Ok(f)
    }

    fn evaluate(&self, u: &DVector<f64>) -> Result<Evaluation> {
        let d = self.dim();
        let m = self.segments;
        let n_u = m * d + 2;
        let (zs, t, beta) = self.unpack(u);
        let mut f = DVector::zeros(n_u);
        let mut jac = DMatrix::zeros(n_u, n_u);
        let mut monodromy = DMatrix::identity(d, d);
        let g0 = self.sys.gradient(&zs[0])?;
        for i in 0..m {
            let (end, mi) = flow::variational_flow(self.sys, &zs[i], t / m as f64, self.opts)?;
            let x_end = self.sys.vector_field(&end)?;
            monodromy = &mi * monodromy;
            let row = i * d;
            jac.view_mut((row, i * d), (d, d)).copy_from(&mi);
            jac.view_mut((row, m * d), (d, 1)).copy_from(&(x_end / m as f64));
            if i + 1 < m {
                f.rows_mut(row, d).copy_from(&(&end - &zs[i + 1]));
                let mut blk = jac.view_mut((row, (i + 1) * d), (d, d));
                blk -= DMatrix::<f64>::identity(d, d);
            } else {
                let shift = self.sys.angle_shift(&end, &zs[0]);
                f.rows_mut(row, d).copy_from(&(&end - &zs[0] - shift + &g0 * beta));
                let hess = self.sys.hessian(&zs[0])?;
                let mut blk = jac.view_mut((row, 0), (d, d));
                blk += hess * beta - DMatrix::<f64>::identity(d, d);
                jac.view_mut((row, m * d + 1), (d, 1)).copy_from(&g0);
            }
        }
        f[m * d] = self.sys.energy(&zs[0])? - self.energy;
        f[m * d + 1] = self.section.normal.dot(&(&zs[0] - &self.section.reference));
        for k in 0..d {
            jac[(m * d, k)] = g0[k];
            jac[(m * d + 1, k)] = self.section.normal[k];
        }
        Ok(Evaluation { f, jac, monodromy })
    }
}

/// Orbit through the section `{<c, rho - rho_ref> = 0}` at energy `e`,
/// starting Newton from `guess` with period guess `t_guess`.
pub fn solve_orbit(
    sys: &HamiltonianSystem,
    guess: &DVector<f64>,
    t_guess: f64,
    e: f64,
    section: &Section,
    opts: &OrbitOptions,
) -> Result<PeriodicOrbit> {
    let d = sys.phase_dim();
    let m = opts.segments.max(1);
    if !(t_guess > 0.0) || !t_guess.is_finite() {
        return Err(Error::Config(format!("period guess must be positive (got {t_guess})")));
    }
    let shooting = Shooting {
        sys,
        energy: e,
        section,
        segments: m,
        opts: &opts.integrator,
    };

    // initial segment points along the guessed trajectory
    let mut u = DVector::zeros(m * d + 2);
    let init = flow::sample_uniform(sys, guess, t_guess, m, &opts.integrator)?;
    for i in 0..m {
        u.rows_mut(i * d, d).copy_from(&init.states[i].to_vector());
    }
    u[m * d] = t_guess;

    let mut iterations = 0;
    let mut eval = shooting.evaluate(&u)?;
    let mut norm = eval.f.norm();
    loop {
        if norm <= opts.newton_tol {
            break;
        }
        if iterations >= opts.max_iterations {
            if norm <= opts.accept_tol {
                break;
            }
            return Err(Error::NonConvergence {
                residual: norm,
                reason: format!("no convergence after {iterations} Newton steps"),
            });
        }
        iterations += 1;
        let step = eval.jac.clone().lu().solve(&(-&eval.f)).ok_or(Error::NonConvergence {
            residual: norm,
            reason: "singular shooting Jacobian".into(),
        })?;
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=10 {
            let trial = &u + &step * alpha;
            if let Ok(r) = shooting.residual_only(&trial) {
                let rn = r.norm();
                if rn * rn <= (1.0 - 2e-4 * alpha) * norm * norm {
                    accepted = Some(trial);
                    break;
                }
            }
            alpha *= 0.5;
        }
        match accepted {
            Some(trial) => {
                u = trial;
                eval = shooting.evaluate(&u)?;
                norm = eval.f.norm();
            }
            None if norm <= opts.accept_tol => break,
            None => {
                return Err(Error::NonConvergence {
                    residual: norm,
                    reason: "residual did not decrease over 10 damped steps".into(),
                })
            }
        }
    }

    let (zs, period, _beta) = shooting.unpack(&u);
    let z0 = zs[0].clone();
    finish_orbit(sys, &z0, period, e, eval.monodromy, iterations, opts)
}

fn finish_orbit(
    sys: &HamiltonianSystem,
    z0: &DVector<f64>,
    period: f64,
    e: f64,
    monodromy: DMatrix<f64>,
    iterations: usize,
    opts: &OrbitOptions,
) -> Result<PeriodicOrbit> {
    let samples = flow::sample_uniform(sys, z0, period, opts.samples.max(8), &opts.integrator)?;
    let end = samples.endpoint().to_vector();
    let closure_residual = (&end - z0 - sys.angle_shift(&end, z0)).norm();
    if !(closure_residual <= CLOSURE_TOL) {
        return Err(Error::NonConvergence {
            residual: closure_residual,
            reason: "orbit does not close to the required tolerance".into(),
        });
    }
    let energy_residual = (sys.energy(z0)? - e).abs();
    if !(energy_residual <= ENERGY_TOL) {
        return Err(Error::NonConvergence {
            residual: energy_residual,
            reason: "orbit energy misses the target".into(),
        });
    }
    let x = sys.vector_field(z0)?;
    let xn = x.norm();
    if xn == 0.0 {
        return Err(Error::DegenerateSection { ratio: 0.0 });
    }
    let normal = &x / xn;
    let transversality = normal.dot(&x).abs() / xn;
    if transversality < TRANSVERSALITY_TOL {
        return Err(Error::DegenerateSection { ratio: transversality });
    }
    let s = action(sys, &samples)?;
    let h1_integral = if sys.has_subprincipal() {
        Some(periodic_integral(&samples, |z| sys.subprincipal(z))?)
    } else {
        None
    };
    Ok(PeriodicOrbit {
        energy: e,
        period,
        ref_point: PhasePoint::from_vector(z0),
        section_normal: normal,
        samples,
        action: s,
        closure_residual,
        energy_residual,
        transversality,
        monodromy,
        h1_integral,
        newton_iterations: iterations,
    })
}

/// First return time to the section through `z` orthogonal to the flow,
/// crossing with the same orientation as the flow at `z`.
pub fn first_return_time(sys: &HamiltonianSystem, z: &DVector<f64>, opts: &IntegratorOptions) -> Result<f64> {
    let section = Section::orthogonal_to_flow(sys, z)?;
    let (t, _) = flow::crossing_from(sys, z, &section, CrossingDirection::Positive, opts)?;
    Ok(t)
}

/// Periodic orbit at energy `e` near `guess`, on the section through the
/// guess orthogonal to the flow there.
pub fn find_periodic_orbit(
    sys: &HamiltonianSystem,
    guess: &PhasePoint,
    e: f64,
    opts: &OrbitOptions,
) -> Result<PeriodicOrbit> {
    guess.validate()?;
    if guess.dof() != sys.dof() {
        return Err(Error::Dimension(format!(
            "guess has {} degrees of freedom, system has {}",
            guess.dof(),
            sys.dof()
        )));
    }
    let z = guess.to_vector();
    let section = Section::orthogonal_to_flow(sys, &z)?;
    let t_guess = match opts.period_guess {
        Some(t) => t,
        None => first_return_time(sys, &z, &opts.integrator)?,
    };
    solve_orbit(sys, &z, t_guess, e, &section, opts)
}

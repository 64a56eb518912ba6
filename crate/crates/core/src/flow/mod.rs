//! Hamiltonian flow `Phi^t`, the variational equations along it and
//! Poincare-section crossings.
//!
//! The default integrator is adaptive Dormand-Prince 5(4) with dense output;
//! a fixed-step Gauss-Legendre collocation scheme is available as a
//! symplectic cross-check.

mod dopri5;
mod gauss;

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::{HamiltonianSystem, PhasePoint};
use crate::linalg;

pub use dopri5::DenseDopri;

pub(crate) type Rhs<'a> = dyn FnMut(&DVector<f64>, &mut DVector<f64>) -> Result<()> + 'a;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Method {
    DormandPrince,
    /// Fixed step size `step`.
    GaussLegendre { step: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorOptions {
    pub method: Method,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_steps: usize,
    /// Minimal step relative to `max(1, |t|)`.
    pub min_step: f64,
    pub max_step: f64,
    pub initial_step: Option<f64>,
    /// Target for `|<c, rho - rho_ref>|` at a located section crossing.
    pub event_tol: f64,
    pub crossing_horizon: f64,
    /// Crossings earlier than this are ignored (the start point may lie on the section).
    pub min_return_time: f64,
    /// When set, trajectories whose energy drift exceeds this bound are rejected.
    pub energy_drift_bound: Option<f64>,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        IntegratorOptions {
            method: Method::DormandPrince,
            abs_tol: 1e-12,
            rel_tol: 1e-10,
            max_steps: 5_000_000,
            min_step: 1e-14,
            max_step: f64::INFINITY,
            initial_step: None,
            event_tol: 1e-12,
            crossing_horizon: 1e3,
            min_return_time: 1e-6,
            energy_drift_bound: None,
        }
    }
}

impl IntegratorOptions {
    /// Same options with tolerances divided by `factor`.
    pub fn tightened(&self, factor: f64) -> Self {
        IntegratorOptions {
            abs_tol: self.abs_tol / factor,
            rel_tol: self.rel_tol / factor,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Control {
    Continue,
    Stop,
}

/// One accepted step with enough data to interpolate inside it.
#[derive(Debug, Clone)]
pub struct Step {
    pub t0: f64,
    pub t1: f64,
    pub y0: DVector<f64>,
    pub y1: DVector<f64>,
    pub f0: DVector<f64>,
    pub f1: DVector<f64>,
    pub dense: Option<DenseDopri>,
}

impl Step {
    /// State at time `t` inside the step (continuous extension, or cubic
    /// Hermite interpolation for methods without one).
    pub fn eval(&self, t: f64) -> DVector<f64> {
        let h = self.t1 - self.t0;
        let theta = if h == 0.0 { 0.0 } else { (t - self.t0) / h };
        match &self.dense {
            Some(d) => d.eval(theta),
            None => {
                let t2 = theta * theta;
                let t3 = t2 * theta;
                &self.y0 * (2.0 * t3 - 3.0 * t2 + 1.0)
                    + &self.f0 * (h * (t3 - 2.0 * t2 + theta))
                    + &self.y1 * (-2.0 * t3 + 3.0 * t2)
                    + &self.f1 * (h * (t3 - t2))
            }
        }
    }
}

pub(crate) fn run(
    rhs: &mut Rhs<'_>,
    y0: &DVector<f64>,
    t_end: f64,
    opts: &IntegratorOptions,
    observer: &mut dyn FnMut(&Step) -> Result<Control>,
) -> Result<(f64, DVector<f64>)> {
    if !t_end.is_finite() {
        return Err(Error::Config(format!("integration time must be finite (got {t_end})")));
    }
    match opts.method {
        Method::DormandPrince => dopri5::run(rhs, y0, t_end, opts, observer),
        Method::GaussLegendre { step } => {
            if !(step > 0.0) {
                return Err(Error::Config("Gauss-Legendre step must be positive".into()));
            }
            gauss::run(rhs, y0, t_end, step, opts, observer)
        }
    }
}

fn flow_rhs(sys: &HamiltonianSystem) -> impl FnMut(&DVector<f64>, &mut DVector<f64>) -> Result<()> + '_ {
    move |y, out| {
        let f = sys.vector_field(y)?;
        out.copy_from(&f);
        Ok(())
    }
}

/// Extended state `(y, vec M)` with `y' = J grad H(y)`, `M' = J H''(y) M`.
fn variational_rhs(sys: &HamiltonianSystem) -> impl FnMut(&DVector<f64>, &mut DVector<f64>) -> Result<()> + '_ {
    let d = sys.phase_dim();
    let j = linalg::standard_j(d / 2);
    move |y, out| {
        let z = y.rows(0, d).into_owned();
        let f = sys.vector_field(&z)?;
        let hess = sys.hessian(&z)?;
        let m = DMatrix::from_column_slice(d, d, &y.as_slice()[d..]);
        let dm = &j * hess * m;
        out.rows_mut(0, d).copy_from(&f);
        out.rows_mut(d, d * d).copy_from_slice(dm.as_slice());
        Ok(())
    }
}

/// Sampled trajectory; `times` are monotone in the direction of integration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<PhasePoint>,
    pub energy_drift: f64,
}

impl Trajectory {
    pub fn endpoint(&self) -> &PhasePoint {
        self.states.last().expect("trajectory has at least one state")
    }

    /// CSV with columns `t, x_1..x_n, xi_1..xi_n, H0`.
    pub fn write_csv<W: Write>(&self, sys: &HamiltonianSystem, out: W) -> Result<()> {
        let n = sys.dof();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x_{i}")));
        header.extend((1..=n).map(|i| format!("xi_{i}")));
        header.push("H0".into());
        w.write_record(&header)?;
        for (t, p) in self.times.iter().zip(&self.states) {
            let z = p.to_vector();
            let mut row = vec![t.to_string()];
            row.extend(z.iter().map(|v| v.to_string()));
            row.push(sys.energy(&z)?.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_drift(drift: f64, t: f64, opts: &IntegratorOptions, state: &DVector<f64>) -> Result<()> {
    if let Some(bound) = opts.energy_drift_bound {
        if drift > bound {
            return Err(Error::Integration {
                t,
                state: state.iter().cloned().collect(),
                reason: format!("energy drift {drift:e} exceeds bound {bound:e}"),
            });
        }
    }
    Ok(())
}

/// Integrates the flow from `p0` for time `t_final`, recording every accepted step.
pub fn integrate(
    sys: &HamiltonianSystem,
    p0: &PhasePoint,
    t_final: f64,
    opts: &IntegratorOptions,
) -> Result<Trajectory> {
    p0.validate()?;
    let z0 = p0.to_vector();
    let e0 = sys.energy(&z0)?;
    let mut times = vec![0.0];
    let mut states = vec![p0.clone()];
    let mut drift: f64 = 0.0;
    let mut rhs = flow_rhs(sys);
    let mut energy_err: Option<Error> = None;
    run(&mut rhs, &z0, t_final, opts, &mut |step| {
        match sys.energy(&step.y1) {
            Ok(e) => drift = drift.max((e - e0).abs()),
            Err(e) => energy_err = Some(e),
        }
        times.push(step.t1);
        states.push(PhasePoint::from_vector(&step.y1));
        Ok(Control::Continue)
    })?;
    if let Some(e) = energy_err {
        return Err(e);
    }
    check_drift(drift, t_final, opts, &states.last().unwrap().to_vector())?;
    Ok(Trajectory {
        times,
        states,
        energy_drift: drift,
    })
}

/// Endpoint `Phi^t(z0)`.
pub fn flow_map(sys: &HamiltonianSystem, z0: &DVector<f64>, t: f64, opts: &IntegratorOptions) -> Result<DVector<f64>> {
    let mut rhs = flow_rhs(sys);
    let (_, y) = run(&mut rhs, z0, t, opts, &mut |_| Ok(Control::Continue))?;
    Ok(y)
}

/// Samples `Phi^t(z0)` at `t_k = k t_final / samples`, `k = 0..=samples`.
pub fn sample_uniform(
    sys: &HamiltonianSystem,
    z0: &DVector<f64>,
    t_final: f64,
    samples: usize,
    opts: &IntegratorOptions,
) -> Result<Trajectory> {
    let samples = samples.max(1);
    let grid: Vec<f64> = (0..=samples).map(|k| t_final * k as f64 / samples as f64).collect();
    let e0 = sys.energy(z0)?;
    let mut states = vec![PhasePoint::from_vector(z0)];
    let mut next = 1;
    let mut rhs = flow_rhs(sys);
    let (_, y_end) = run(&mut rhs, z0, t_final, opts, &mut |step| {
        while next < samples && (grid[next] - step.t1) * t_final.signum() <= 0.0 {
            states.push(PhasePoint::from_vector(&step.eval(grid[next])));
            next += 1;
        }
        Ok(Control::Continue)
    })?;
    while states.len() < samples {
        states.push(PhasePoint::from_vector(&y_end));
    }
    states.push(PhasePoint::from_vector(&y_end));
    let mut drift: f64 = 0.0;
    for s in &states {
        drift = drift.max((sys.energy(&s.to_vector())? - e0).abs());
    }
    check_drift(drift, t_final, opts, &y_end)?;
    Ok(Trajectory {
        times: grid,
        states,
        energy_drift: drift,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariationalResult {
    pub endpoint: PhasePoint,
    /// `d Phi^t` at the initial point.
    pub fundamental_matrix: DMatrix<f64>,
    /// `|| M^T J M - J ||_2`.
    pub symplectic_residual: f64,
}

/// Integrates base flow and variational equations as one extended system.
pub fn variational_flow(
    sys: &HamiltonianSystem,
    z0: &DVector<f64>,
    t: f64,
    opts: &IntegratorOptions,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let d = sys.phase_dim();
    let mut y0 = DVector::zeros(d + d * d);
    y0.rows_mut(0, d).copy_from(z0);
    for i in 0..d {
        y0[d + i * d + i] = 1.0;
    }
    let mut rhs = variational_rhs(sys);
    let (_, y) = run(&mut rhs, &y0, t, opts, &mut |_| Ok(Control::Continue))?;
    let end = y.rows(0, d).into_owned();
    let m = DMatrix::from_column_slice(d, d, &y.as_slice()[d..]);
    Ok((end, m))
}

pub fn integrate_variational(
    sys: &HamiltonianSystem,
    p0: &PhasePoint,
    t_final: f64,
    opts: &IntegratorOptions,
) -> Result<VariationalResult> {
    p0.validate()?;
    let (end, m) = variational_flow(sys, &p0.to_vector(), t_final, opts)?;
    let residual = linalg::symplectic_residual(&m);
    Ok(VariationalResult {
        endpoint: PhasePoint::from_vector(&end),
        fundamental_matrix: m,
        symplectic_residual: residual,
    })
}

/// Affine hyperplane `{<c, rho - rho_ref> = 0}` in phase space. Angular
/// coordinates are taken modulo their period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub normal: DVector<f64>,
    pub reference: DVector<f64>,
}

impl Section {
    pub fn new(normal: DVector<f64>, reference: DVector<f64>) -> Self {
        Section { normal, reference }
    }

    /// Section through `reference` orthogonal to the flow there.
    pub fn orthogonal_to_flow(sys: &HamiltonianSystem, reference: &DVector<f64>) -> Result<Self> {
        let x = sys.vector_field(reference)?;
        let norm = x.norm();
        if norm == 0.0 {
            return Err(Error::DegenerateSection { ratio: 0.0 });
        }
        Ok(Section::new(x / norm, reference.clone()))
    }

    /// Signed distance using the lattice translate of the reference nearest to `anchor`.
    pub fn value_near(&self, sys: &HamiltonianSystem, z: &DVector<f64>, anchor: &DVector<f64>) -> f64 {
        let shift = sys.angle_shift(anchor, &self.reference);
        self.normal.dot(&(z - &self.reference - shift))
    }

    pub fn value(&self, sys: &HamiltonianSystem, z: &DVector<f64>) -> f64 {
        self.value_near(sys, z, z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossingDirection {
    /// From negative to positive side.
    Positive,
    /// From positive to negative side.
    Negative,
    Either,
}

impl CrossingDirection {
    fn accepts(self, g0: f64, g1: f64) -> bool {
        let up = g0 < 0.0 && g1 >= 0.0;
        let down = g0 > 0.0 && g1 <= 0.0;
        match self {
            CrossingDirection::Positive => up,
            CrossingDirection::Negative => down,
            CrossingDirection::Either => up || down,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Crossing {
    pub time: f64,
    pub point: PhasePoint,
}

/// First crossing of `section` in the requested direction after
/// `opts.min_return_time`, searched up to `opts.crossing_horizon`.
pub fn section_crossing(
    sys: &HamiltonianSystem,
    p0: &PhasePoint,
    section: &Section,
    direction: CrossingDirection,
    opts: &IntegratorOptions,
) -> Result<Crossing> {
    p0.validate()?;
    let z0 = p0.to_vector();
    let (t, z) = crossing_from(sys, &z0, section, direction, opts)?;
    Ok(Crossing {
        time: t,
        point: PhasePoint::from_vector(&z),
    })
}

/// Points along the chord `y0 -> y1` spaced so that every lattice translate
/// met by the angular coordinates is nearest to one of them, in order.
fn lattice_anchors(periods: &[Option<f64>], y0: &DVector<f64>, y1: &DVector<f64>) -> Vec<DVector<f64>> {
    let mut count = 1usize;
    for (i, p) in periods.iter().enumerate() {
        if let Some(p) = p {
            count = count.max((2.0 * (y1[i] - y0[i]).abs() / p).ceil() as usize + 1);
        }
    }
    (0..=count)
        .map(|k| {
            let lam = k as f64 / count as f64;
            y0 + (y1 - y0) * lam
        })
        .collect()
}

pub(crate) fn crossing_from(
    sys: &HamiltonianSystem,
    z0: &DVector<f64>,
    section: &Section,
    direction: CrossingDirection,
    opts: &IntegratorOptions,
) -> Result<(f64, DVector<f64>)> {
    let periods = sys.angle_periods();
    let mut bracket: Option<(Step, DVector<f64>)> = None;
    let mut rhs = flow_rhs(sys);
    run(&mut rhs, z0, opts.crossing_horizon, opts, &mut |step| {
        if step.t1 < opts.min_return_time {
            return Ok(Control::Continue);
        }
        // a long step may pass several lattice translates of the reference
        for anchor in lattice_anchors(&periods, &step.y0, &step.y1) {
            let g0 = section.value_near(sys, &step.y0, &anchor);
            let g1 = section.value_near(sys, &step.y1, &anchor);
            if direction.accepts(g0, g1) {
                bracket = Some((step.clone(), anchor));
                return Ok(Control::Stop);
            }
        }
        Ok(Control::Continue)
    })?;
    let (step, anchor) = bracket.ok_or(Error::NoCrossing {
        horizon: opts.crossing_horizon,
    })?;
    let g = |t: f64| section.value_near(sys, &step.eval(t), &anchor);

    // Illinois false position on the interpolant, restricted to times past
    // the minimal return time.
    let (mut a, mut b) = (step.t0.max(opts.min_return_time.min(step.t1)), step.t1);
    let (mut ga, mut gb) = (g(a), g(b));
    if ga * gb > 0.0 {
        a = step.t0;
        ga = g(a);
    }
    let mut side = 0;
    let mut t_star = b;
    for _ in 0..200 {
        if gb == 0.0 {
            t_star = b;
            break;
        }
        let c = if ga != gb { b - gb * (b - a) / (gb - ga) } else { 0.5 * (a + b) };
        let c = if c <= a.min(b) || c >= a.max(b) { 0.5 * (a + b) } else { c };
        let gc = g(c);
        t_star = c;
        if (b - a).abs() < 1e-15 * c.abs().max(1.0) || gc == 0.0 {
            break;
        }
        if gc * gb < 0.0 {
            a = b;
            ga = gb;
            b = c;
            gb = gc;
            side = 0;
        } else {
            b = c;
            gb = gc;
            if side == 1 {
                ga *= 0.5;
            }
            side = 1;
        }
    }

    // Refine against the actual flow: integrate from the step start, then
    // Newton on the event function using d/dt <c, rho> = <c, X_H>.
    let mut t = t_star;
    let mut z = flow_map(sys, &step.y0, t - step.t0, opts)?;
    for _ in 0..20 {
        let gz = section.value_near(sys, &z, &anchor);
        if gz.abs() <= opts.event_tol {
            return Ok((t, z));
        }
        let slope = section.normal.dot(&sys.vector_field(&z)?);
        if slope == 0.0 {
            return Err(Error::DegenerateSection { ratio: 0.0 });
        }
        let dt = -gz / slope;
        z = flow_map(sys, &z, dt, opts)?;
        t += dt;
    }
    let gz = section.value_near(sys, &z, &anchor);
    if gz.abs() <= 100.0 * opts.event_tol {
        Ok((t, z))
    } else {
        Err(Error::NonConvergence {
            residual: gz.abs(),
            reason: "section crossing refinement".into(),
        })
    }
}

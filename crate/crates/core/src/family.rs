//! Natural-parameter continuation of a periodic orbit in energy.

use std::io::Write;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::Section;
use crate::hamiltonian::HamiltonianSystem;
use crate::interp::{CubicSpline, HermiteCubic};
use crate::orbit::{solve_orbit, OrbitOptions, PeriodicOrbit};

const MAX_BISECTIONS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Lower,
    Upper,
}

/// Where continuation stopped before reaching the end of the grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Boundary {
    pub side: Side,
    /// Last energy reached on this side.
    pub reached: f64,
    /// Grid energy that could not be reached.
    pub target: f64,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrbitFamily {
    /// Orbits in increasing energy.
    pub orbits: Vec<PeriodicOrbit>,
    pub boundaries: Vec<Boundary>,
    pub section: Section,
}

impl OrbitFamily {
    pub fn energies(&self) -> Vec<f64> {
        self.orbits.iter().map(|o| o.energy).collect()
    }

    pub fn periods(&self) -> Vec<f64> {
        self.orbits.iter().map(|o| o.period).collect()
    }

    pub fn actions(&self) -> Vec<f64> {
        self.orbits.iter().map(|o| o.action).collect()
    }

    pub fn energy_range(&self) -> (f64, f64) {
        let e = self.energies();
        (e[0], e[e.len() - 1])
    }

    pub fn is_partial(&self) -> bool {
        !self.boundaries.is_empty()
    }

    /// `S(E)` as a cubic Hermite interpolant using `S' = T`.
    pub fn action_interpolant(&self) -> Result<HermiteCubic> {
        HermiteCubic::new(&self.energies(), &self.actions(), &self.periods())
    }

    pub fn period_interpolant(&self) -> Result<CubicSpline> {
        CubicSpline::new(&self.energies(), &self.periods())
    }

    /// Nearest computed orbit.
    pub fn nearest(&self, e: f64) -> &PeriodicOrbit {
        self.orbits
            .iter()
            .min_by(|a, b| (a.energy - e).abs().total_cmp(&(b.energy - e).abs()))
            .expect("family is nonempty")
    }

    pub fn check_range(&self, e: f64) -> Result<()> {
        let (lo, hi) = self.energy_range();
        let slack = 1e-12 * (hi - lo).abs().max(1.0);
        if e < lo - slack || e > hi + slack {
            return Err(Error::OutOfRange { energy: e, min: lo, max: hi });
        }
        Ok(())
    }

    /// Largest `|dS/dE - T|` over interior grid points. The derivative is
    /// that of the interpolating polynomial through up to five neighbouring
    /// orbits, centered where the grid allows.
    pub fn action_identity_residual(&self) -> f64 {
        let e = self.energies();
        let s = self.actions();
        let t = self.periods();
        let n = e.len();
        let width = n.min(5);
        let mut worst: f64 = 0.0;
        for i in 1..n.saturating_sub(1) {
            let start = i.saturating_sub(width / 2).min(n - width);
            let nodes = &e[start..start + width];
            let ds: f64 = derivative_weights(nodes, i - start)
                .iter()
                .zip(&s[start..start + width])
                .map(|(w, v)| w * v)
                .sum();
            worst = worst.max((ds - t[i]).abs());
        }
        worst
    }

    /// CSV with columns `E, T, S`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["E", "T", "S"])?;
        for o in &self.orbits {
            w.write_record([o.energy.to_string(), o.period.to_string(), o.action.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Weights `w_j = L_j'(x_i)` of the Lagrange basis on `x`, so that
/// `sum_j w_j f(x_j)` differentiates the interpolant at node `i`.
fn derivative_weights(x: &[f64], i: usize) -> Vec<f64> {
    (0..x.len())
        .map(|j| {
            if j == i {
                (0..x.len()).filter(|&m| m != i).map(|m| 1.0 / (x[i] - x[m])).sum()
            } else {
                let mut w = 1.0 / (x[j] - x[i]);
                for m in (0..x.len()).filter(|&m| m != i && m != j) {
                    w *= (x[i] - x[m]) / (x[j] - x[m]);
                }
                w
            }
        })
        .collect()
}

/// Default energy grid: `points` energies evenly spaced over `[center - half_width, center + half_width]`.
pub fn energy_grid(center: f64, half_width: f64, points: usize) -> Vec<f64> {
    if points <= 1 {
        return vec![center];
    }
    (0..points)
        .map(|i| center - half_width + 2.0 * half_width * i as f64 / (points - 1) as f64)
        .collect()
}

struct Continuation<'a> {
    sys: &'a HamiltonianSystem,
    section: &'a Section,
    opts: &'a OrbitOptions,
}

impl Continuation<'_> {
    /// Orbit at `e` predicted from `last` (and the orbit before it, if any, by secant).
    fn step(&self, last: &PeriodicOrbit, before: Option<&PeriodicOrbit>, e: f64) -> Result<PeriodicOrbit> {
        let z1 = last.ref_point.to_vector();
        let (z, t) = match before {
            Some(b) if (last.energy - b.energy).abs() > 0.0 => {
                let r = (e - last.energy) / (last.energy - b.energy);
                let z0 = b.ref_point.to_vector();
                (&z1 + (&z1 - &z0) * r, last.period + (last.period - b.period) * r)
            }
            _ => (z1, last.period),
        };
        solve_orbit(self.sys, &z, t, e, self.section, self.opts)
    }

    /// Reaches `target` from `last`, halving the energy step on failure.
    fn reach(
        &self,
        last: &PeriodicOrbit,
        before: Option<&PeriodicOrbit>,
        target: f64,
    ) -> std::result::Result<PeriodicOrbit, Error> {
        let mut current = last.clone();
        let mut previous = before.cloned();
        let mut step = target - last.energy;
        let mut bisections = 0;
        loop {
            let e = if (target - current.energy).abs() <= step.abs() { target } else { current.energy + step };
            match self.step(&current, previous.as_ref(), e) {
                Ok(o) => {
                    if e == target {
                        return Ok(o);
                    }
                    previous = Some(std::mem::replace(&mut current, o));
                }
                Err(err) => {
                    if bisections == MAX_BISECTIONS {
                        return Err(err);
                    }
                    bisections += 1;
                    step *= 0.5;
                    // a shorter step makes the secant from the old pair unreliable
                    if previous.as_ref().is_some_and(|p| (p.energy - current.energy).abs() > 4.0 * step.abs()) {
                        previous = None;
                    }
                }
            }
        }
    }
}

/// Continues `seed` over `grid` (which must contain the seed energy) on the
/// seed's section. Failure to reach a grid energy ends that direction and is
/// recorded as a boundary.
pub fn continue_family(
    sys: &HamiltonianSystem,
    seed: &PeriodicOrbit,
    grid: &[f64],
    opts: &OrbitOptions,
) -> Result<OrbitFamily> {
    if grid.is_empty() {
        return Err(Error::Config("energy grid is empty".into()));
    }
    let mut energies = grid.to_vec();
    energies.sort_by(f64::total_cmp);
    energies.dedup();
    let tol = 1e-12 * energies.iter().fold(1.0f64, |a, e| a.max(e.abs()));
    let seed_idx = energies
        .iter()
        .position(|e| (e - seed.energy).abs() <= tol)
        .ok_or_else(|| Error::Config(format!("energy grid does not contain the seed energy {}", seed.energy)))?;

    let section = Section::new(seed.section_normal.clone(), seed.ref_point.to_vector());
    let cont = Continuation {
        sys,
        section: &section,
        opts,
    };
    let mut boundaries = Vec::new();

    let mut run = |indices: Vec<usize>, side: Side| -> Vec<PeriodicOrbit> {
        let mut out: Vec<PeriodicOrbit> = Vec::new();
        for i in indices {
            let last = out.last().unwrap_or(seed);
            let before = if out.len() >= 2 {
                out.get(out.len() - 2)
            } else if out.len() == 1 {
                Some(seed)
            } else {
                None
            };
            match cont.reach(last, before, energies[i]) {
                Ok(o) => out.push(o),
                Err(err) => {
                    warn!("continuation stopped at E = {}: {err}", last.energy);
                    boundaries.push(Boundary {
                        side,
                        reached: last.energy,
                        target: energies[i],
                        reason: err.to_string(),
                    });
                    break;
                }
            }
        }
        out
    };
    let mut lower = run((0..seed_idx).rev().collect(), Side::Lower);
    let upper = run((seed_idx + 1..energies.len()).collect(), Side::Upper);
    lower.reverse();
    let mut seed_on_grid = seed.clone();
    seed_on_grid.energy = energies[seed_idx];
    let mut orbits = lower;
    orbits.push(seed_on_grid);
    orbits.extend(upper);
    Ok(OrbitFamily {
        orbits,
        boundaries,
        section,
    })
}

/// Periods along the family, useful to check energy independence.
pub fn period_spread(family: &OrbitFamily) -> f64 {
    let t = family.periods();
    let lo = t.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = t.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    hi - lo
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_model, ModelSystemSpec};
    use crate::orbit::find_periodic_orbit;
    use std::f64::consts::{FRAC_PI_2, TAU};

    #[test]
    fn normal_form_period_is_constant() {
        let spec = ModelSystemSpec::normal_form(TAU, &[(FRAC_PI_2, 0.0)]);
        let sys = build_model(&spec).unwrap();
        let opts = OrbitOptions {
            samples: 64,
            ..Default::default()
        };
        let seed = find_periodic_orbit(&sys, &spec.seed_point(0.0).unwrap(), 0.0, &opts).unwrap();
        let fam = continue_family(&sys, &seed, &energy_grid(0.0, 0.1, 11), &opts).unwrap();
        assert_eq!(fam.orbits.len(), 11);
        assert!(!fam.is_partial());
        assert!(period_spread(&fam) < 1e-9);
        assert!(fam.action_identity_residual() < 1e-4);
        let s = fam.action_interpolant().unwrap();
        assert!((s.eval(0.033) - TAU * 0.033).abs() < 1e-9);
    }

    #[test]
    fn hyperboloid_action_scaling() {
        let spec = ModelSystemSpec::hyperboloid();
        let sys = build_model(&spec).unwrap();
        let opts = OrbitOptions {
            samples: 128,
            ..Default::default()
        };
        let seed = find_periodic_orbit(&sys, &spec.seed_point(0.5).unwrap(), 0.5, &opts).unwrap();
        let fam = continue_family(&sys, &seed, &[0.125, 0.5], &opts).unwrap();
        assert_eq!(fam.orbits.len(), 2);
        assert!((fam.orbits[0].action / fam.orbits[1].action - 0.5).abs() < 1e-6);
    }

    #[test]
    fn derivative_weights_are_exact_for_quartics() {
        let x = [0.0, 0.1, 0.25, 0.3, 0.5];
        let f = |t: f64| 1.0 + 2.0 * t - t * t + 3.0 * t.powi(3) - t.powi(4);
        let df = |t: f64| 2.0 - 2.0 * t + 9.0 * t * t - 4.0 * t.powi(3);
        for i in 0..5 {
            let d: f64 = derivative_weights(&x, i).iter().zip(&x).map(|(w, &t)| w * f(t)).sum();
            assert!((d - df(x[i])).abs() < 1e-11);
        }
    }

    #[test]
    fn seed_must_be_on_grid() {
        let spec = ModelSystemSpec::normal_form(TAU, &[(FRAC_PI_2, 0.0)]);
        let sys = build_model(&spec).unwrap();
        let opts = OrbitOptions {
            samples: 16,
            ..Default::default()
        };
        let seed = find_periodic_orbit(&sys, &spec.seed_point(0.0).unwrap(), 0.0, &opts).unwrap();
        assert!(matches!(continue_family(&sys, &seed, &[0.1, 0.2], &opts), Err(Error::Config(_))));
    }

    #[test]
    fn csv_export_has_header_and_rows() {
        let spec = ModelSystemSpec::normal_form(TAU, &[(FRAC_PI_2, 0.0)]);
        let sys = build_model(&spec).unwrap();
        let opts = OrbitOptions {
            samples: 16,
            ..Default::default()
        };
        let seed = find_periodic_orbit(&sys, &spec.seed_point(0.0).unwrap(), 0.0, &opts).unwrap();
        let fam = continue_family(&sys, &seed, &energy_grid(0.0, 0.1, 3), &opts).unwrap();
        let mut buf = Vec::new();
        fam.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.starts_with("E,T,S"));
    }
}

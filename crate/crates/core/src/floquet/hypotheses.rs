//! Certificates for the structural hypotheses on the orbit: principal type,
//! partial hyperbolicity, Williamson non-degeneracy and (strong) non-resonance.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::splitting::modes;
use super::FloquetData;
use crate::error::{Error, Result};
use crate::hamiltonian::HamiltonianSystem;
use crate::linalg::C64;
use crate::orbit::PeriodicOrbit;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HypothesisOptions {
    #[serde(rename = "K")]
    pub k_bound: u32,
    pub tol: f64,
}

impl Default for HypothesisOptions {
    fn default() -> Self {
        HypothesisOptions { k_bound: 12, tol: 1e-7 }
    }
}

/// Outcome of a lattice scan over integer vectors `0 < |k|_inf <= K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeScan {
    pub ok: bool,
    /// First violating vector in scan order.
    pub witness: Option<Vec<i64>>,
    /// Smallest `dist(sum k_j mu_j, 2 pi i Z)` among nonzero combinations
    /// that do not vanish identically.
    pub min_distance: f64,
}

/// Distance from `z` to the lattice `2 pi i Z`.
pub fn distance_to_lattice(z: C64) -> f64 {
    let k = (z.im / TAU).round();
    z.re.hypot(z.im - TAU * k)
}

/// Scans `k` in `[-K, K]^r` lexicographically, visiting one representative of
/// each `{k, -k}` (first nonzero entry positive). With `require_zero`, any
/// combination landing in `2 pi i Z` is a violation; otherwise only those
/// that do not vanish.
pub fn scan_lattice(mu: &[C64], k_bound: u32, tol: f64, require_zero: bool) -> LatticeScan {
    let r = mu.len();
    let kb = k_bound as i64;
    let mut min_distance = f64::INFINITY;
    if r == 0 || kb == 0 {
        return LatticeScan {
            ok: true,
            witness: None,
            min_distance,
        };
    }
    let mut k = vec![-kb; r];
    loop {
        if let Some(first) = k.iter().find(|&&v| v != 0) {
            if *first > 0 {
                let s: C64 = k.iter().zip(mu).map(|(&kj, &m)| m * kj as f64).sum();
                let d = distance_to_lattice(s);
                let vanishes = s.norm() < tol;
                if !vanishes {
                    min_distance = min_distance.min(d);
                }
                if d < tol && (require_zero || !vanishes) {
                    return LatticeScan {
                        ok: false,
                        witness: Some(k),
                        min_distance,
                    };
                }
            }
        }
        // odometer, last index fastest
        let mut i = r;
        loop {
            if i == 0 {
                return LatticeScan {
                    ok: true,
                    witness: None,
                    min_distance,
                };
            }
            i -= 1;
            if k[i] < kb {
                k[i] += 1;
                break;
            }
            k[i] = -kb;
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub principal_type_ok: bool,
    pub orbit_hyperbolic_ok: bool,
    pub williamson_ok: bool,
    pub nonresonance_ok: bool,
    pub strong_nonresonance_ok: bool,
    pub hyperbolic_dimension: usize,
    pub residuals: BTreeMap<String, f64>,
    pub witnesses: BTreeMap<String, Vec<i64>>,
    pub notes: BTreeMap<String, String>,
    #[serde(rename = "K_bound")]
    pub k_bound: u32,
    pub tolerance: f64,
}

impl HypothesisReport {
    pub fn all_ok(&self) -> bool {
        self.principal_type_ok
            && self.orbit_hyperbolic_ok
            && self.williamson_ok
            && self.nonresonance_ok
            && self.strong_nonresonance_ok
    }
}

/// Partial hyperbolicity and the lattice scans from the distinct exponents
/// alone. `transversal_dof` is `n - 1`.
pub fn check_exponents(
    exponents: &[C64],
    multiplicities: &[usize],
    transversal_dof: usize,
    opts: &HypothesisOptions,
) -> HypothesisReport {
    let tol = opts.tol;
    let mut residuals = BTreeMap::new();
    let mut witnesses = BTreeMap::new();
    let mut notes = BTreeMap::new();

    let hyperbolic_dimension = exponents
        .iter()
        .zip(multiplicities)
        .filter(|(m, _)| m.re > tol)
        .map(|(_, k)| k)
        .sum();
    let max_re = exponents.iter().map(|m| m.re).fold(f64::NEG_INFINITY, f64::max);
    residuals.insert("max_re_exponent".into(), if exponents.is_empty() { 0.0 } else { max_re });

    let weak = scan_lattice(exponents, opts.k_bound, tol, false);
    residuals.insert("nonresonance_min_distance".into(), weak.min_distance);
    if let Some(w) = &weak.witness {
        witnesses.insert("nonresonance".into(), w.clone());
    }

    let r = exponents.len();
    let distinct_full = r == transversal_dof && multiplicities.iter().all(|&k| k == 1);
    let strong = if distinct_full {
        scan_lattice(exponents, opts.k_bound, tol, true)
    } else {
        notes.insert(
            "strong_nonresonance".into(),
            format!("requires {transversal_dof} distinct exponents, found {r}"),
        );
        LatticeScan {
            ok: false,
            witness: None,
            min_distance: weak.min_distance,
        }
    };
    residuals.insert("strong_nonresonance_min_distance".into(), strong.min_distance);
    if let Some(w) = &strong.witness {
        witnesses.insert("strong_nonresonance".into(), w.clone());
    }

    HypothesisReport {
        principal_type_ok: true,
        orbit_hyperbolic_ok: hyperbolic_dimension >= 1,
        williamson_ok: true,
        nonresonance_ok: weak.ok,
        strong_nonresonance_ok: strong.ok,
        hyperbolic_dimension,
        residuals,
        witnesses,
        notes,
        k_bound: opts.k_bound,
        tolerance: tol,
    }
}

/// Full certificate set for an orbit. A failed Floquet analysis is recorded
/// as a Williamson failure rather than propagated.
pub fn check_hypotheses(
    sys: &HamiltonianSystem,
    orbit: &PeriodicOrbit,
    floquet: std::result::Result<&FloquetData, &Error>,
    opts: &HypothesisOptions,
) -> Result<HypothesisReport> {
    let tol = opts.tol;
    let mut min_speed = f64::INFINITY;
    for s in &orbit.samples.states {
        min_speed = min_speed.min(sys.vector_field(&s.to_vector())?.norm());
    }
    let closed = orbit.closure_residual <= crate::orbit::CLOSURE_TOL;

    let mut report = match floquet {
        Ok(f) => {
            let values: Vec<C64> = f.exponents.iter().map(|e| e.value).collect();
            let mult: Vec<usize> = f.exponents.iter().map(|e| e.multiplicity).collect();
            let mut rep = check_exponents(&values, &mult, sys.dof() - 1, opts);
            rep.residuals.insert("williamson_margin".into(), f.classification.degeneracy_margin);
            rep.residuals.insert("trivial_multiplicity".into(), f.reduction.trivial_multiplicity as f64);
            rep.residuals.insert("pairing_mismatch".into(), f.classification.pairing_mismatch);
            debug_assert_eq!(modes(&f.exponents).len(), sys.dof() - 1);
            rep
        }
        Err(e) => {
            let mut rep = check_exponents(&[], &[], sys.dof() - 1, opts);
            rep.williamson_ok = false;
            rep.orbit_hyperbolic_ok = false;
            rep.nonresonance_ok = false;
            rep.strong_nonresonance_ok = false;
            rep.notes.insert("williamson".into(), e.to_string());
            rep
        }
    };
    report.principal_type_ok = min_speed >= tol;
    report.residuals.insert("min_speed".into(), min_speed);
    report.residuals.insert("closure_residual".into(), orbit.closure_residual);
    report.orbit_hyperbolic_ok &= closed;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Complex;
    use std::f64::consts::LN_2;

    #[test]
    fn real_exponent_never_resonates() {
        let mu = [Complex::new(LN_2, 0.0)];
        let r = check_exponents(&mu, &[1], 1, &HypothesisOptions { k_bound: 50, tol: 1e-9 });
        assert!(r.orbit_hyperbolic_ok && r.nonresonance_ok && r.strong_nonresonance_ok);
        assert_eq!(r.hyperbolic_dimension, 1);
    }

    #[test]
    fn witness_for_rational_rotation() {
        let mu = [Complex::new(1.0, 0.0), Complex::new(0.0, TAU * 0.3)];
        let r = scan_lattice(&mu, 10, 1e-9, false);
        assert!(!r.ok);
        assert_eq!(r.witness, Some(vec![0, 10]));
        assert!(scan_lattice(&mu, 9, 1e-9, false).ok);
        assert!(scan_lattice(&mu, 9, 1e-9, true).ok);
    }

    #[test]
    fn irrational_rotation_passes() {
        let mu = [Complex::new(0.0, TAU * 0.3183098862)];
        let r = check_exponents(&mu, &[1], 1, &HypothesisOptions { k_bound: 12, tol: 1e-9 });
        assert!(r.nonresonance_ok);
        assert!(!r.orbit_hyperbolic_ok);
    }

    #[test]
    fn lattice_distance() {
        assert!((distance_to_lattice(Complex::new(0.0, TAU * 3.0 + 0.1)) - 0.1).abs() < 1e-12);
        assert!((distance_to_lattice(Complex::new(0.3, -TAU)) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn too_few_exponents_fail_strong_condition() {
        let mu = [Complex::new(1.0, 0.0)];
        let r = check_exponents(&mu, &[2], 2, &HypothesisOptions::default());
        assert!(r.nonresonance_ok && !r.strong_nonresonance_ok);
        assert!(r.notes.contains_key("strong_nonresonance"));
    }
}

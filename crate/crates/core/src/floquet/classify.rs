//! Williamson classification of the multipliers of a real symplectic matrix.

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use super::PAIRING_TOL;
use crate::error::{Error, Result};
use crate::linalg::{self, C64};

/// Eigenvalues from the real Schur form.
pub fn eigenvalues(a: &DMatrix<f64>) -> Result<Vec<C64>> {
    if a.is_empty() {
        return Ok(Vec::new());
    }
    let (_, t) = linalg::real_schur(a)?;
    Ok(linalg::quasi_triangular_eigenvalues(&t))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tag {
    Elliptic,
    RealHyperbolic,
    Loxodromic,
}

impl Tag {
    pub fn as_str(self) -> &'static str {
        match self {
            Tag::Elliptic => "elliptic",
            Tag::RealHyperbolic => "real-hyperbolic",
            Tag::Loxodromic => "loxodromic",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaggedMultiplier {
    pub value: C64,
    pub multiplicity: usize,
    pub tag: Tag,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Classification {
    /// Distinct multipliers, largest modulus first.
    pub multipliers: Vec<TaggedMultiplier>,
    /// Worst violation of closure under `l -> 1/l` (as `|l l' - 1|`) and
    /// `l -> conj l` (relative).
    pub pairing_mismatch: f64,
    /// Smallest relative distance of a multiplier to +1, -1 or the negative axis.
    pub degeneracy_margin: f64,
}

fn close(a: C64, b: C64) -> bool {
    (a - b).norm() <= PAIRING_TOL * a.norm().max(b.norm()).max(1.0)
}

/// Groups values within pairing tolerance, averaging each cluster. Ties are
/// resolved greedily by nearest distance.
pub(crate) fn cluster(values: &[C64]) -> Vec<(C64, usize)> {
    let mut out: Vec<(C64, usize)> = Vec::new();
    for &v in values {
        let best = out
            .iter()
            .enumerate()
            .filter(|(_, (c, _))| close(*c, v))
            .min_by(|a, b| (a.1 .0 - v).norm().total_cmp(&(b.1 .0 - v).norm()))
            .map(|(i, _)| i);
        match best {
            Some(i) => {
                let (c, k) = out[i];
                out[i] = ((c * k as f64 + v) / (k + 1) as f64, k + 1);
            }
            None => out.push((v, 1)),
        }
    }
    out
}

pub fn tag_of(l: C64) -> Tag {
    if (l.norm() - 1.0).abs() <= PAIRING_TOL {
        Tag::Elliptic
    } else if l.im.abs() <= PAIRING_TOL * l.norm() {
        Tag::RealHyperbolic
    } else {
        Tag::Loxodromic
    }
}

/// Closure of a multiset under inversion and conjugation.
pub fn pairing_mismatch(eigs: &[C64]) -> f64 {
    let mut worst: f64 = 0.0;
    for &l in eigs {
        let inv = eigs
            .iter()
            .map(|&k| (l * k - 1.0).norm())
            .fold(f64::INFINITY, f64::min);
        let conj = eigs
            .iter()
            .map(|&k| (l.conj() - k).norm() / l.norm().max(1.0))
            .fold(f64::INFINITY, f64::min);
        worst = worst.max(inv).max(conj);
    }
    worst
}

pub fn classify_multipliers(a: &DMatrix<f64>) -> Result<Classification> {
    let eigs = eigenvalues(a)?;
    let mut margin = f64::INFINITY;
    for &l in &eigs {
        let scale = l.norm().max(1.0);
        let d1 = (l - 1.0).norm() / scale;
        let d2 = (l + 1.0).norm() / scale;
        if d1 <= PAIRING_TOL || d2 <= PAIRING_TOL {
            return Err(Error::WilliamsonDegeneracy { re: l.re, im: l.im });
        }
        let neg = if l.re < 0.0 { l.im.abs() / scale } else { f64::INFINITY };
        if neg <= PAIRING_TOL {
            return Err(Error::Branch { re: l.re, im: l.im });
        }
        margin = margin.min(d1).min(d2).min(neg);
    }
    let mismatch = pairing_mismatch(&eigs);
    if mismatch > 1e3 * PAIRING_TOL {
        return Err(Error::Pairing { mismatch });
    }
    let mut multipliers: Vec<TaggedMultiplier> = cluster(&eigs)
        .into_iter()
        .map(|(v, k)| TaggedMultiplier {
            value: if v.im.abs() <= PAIRING_TOL * v.norm() { Complex::new(v.re, 0.0) } else { v },
            multiplicity: k,
            tag: tag_of(v),
        })
        .collect();
    multipliers.sort_by(|a, b| {
        b.value
            .norm()
            .total_cmp(&a.value.norm())
            .then(b.value.im.total_cmp(&a.value.im))
    });
    Ok(Classification {
        multipliers,
        pairing_mismatch: mismatch,
        degeneracy_margin: margin,
    })
}

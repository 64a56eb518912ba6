//! Leading-order resonance strings from an orbit family and its Floquet
//! exponents: a Bohr-Sommerfeld anchor along the orbit and a transversal
//! ladder in the exponents.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, TAU};
use std::io::Write;

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::OrbitFamily;
use crate::floquet::{analyze_monodromy, FloquetData};
use crate::hamiltonian::HamiltonianSystem;
use crate::interp::{CubicSpline, HermiteCubic};
use crate::linalg::C64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResonanceQuery {
    pub h: f64,
    pub delta: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub k_min: i64,
    pub k_max: i64,
    pub alpha_max: u32,
    pub maslov_index: i64,
    pub include_subprincipal: bool,
}

impl Default for ResonanceQuery {
    fn default() -> Self {
        ResonanceQuery {
            h: 0.01,
            delta: 1.0,
            c: 10.0,
            k_min: 0,
            k_max: 0,
            alpha_max: 3,
            maslov_index: 0,
            include_subprincipal: false,
        }
    }
}

impl ResonanceQuery {
    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0) || !self.h.is_finite() {
            return Err(Error::Config(format!("h must be positive (got {})", self.h)));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::Config(format!("delta must lie in (0, 1] (got {})", self.delta)));
        }
        if !(self.c > 0.0) || !self.c.is_finite() {
            return Err(Error::Config(format!("window depth C must be positive (got {})", self.c)));
        }
        Ok(())
    }

    /// Window depth `C h^delta`.
    pub fn depth(&self) -> f64 {
        self.c * self.h.powf(self.delta)
    }

    /// Quantized value `2 pi k h + (pi/2) nu h`.
    pub fn quantized_action(&self, k: i64) -> f64 {
        (TAU * k as f64 + FRAC_PI_2 * self.maslov_index as f64) * self.h
    }
}

/// `S(E)`, `T(E)` and the orbit integral of the subprincipal symbol over an energy grid.
#[derive(Debug, Clone)]
pub struct LongitudinalData {
    action: HermiteCubic,
    period: CubicSpline,
    h1: CubicSpline,
    range: (f64, f64),
}

impl LongitudinalData {
    pub fn new(energies: &[f64], actions: &[f64], periods: &[f64], h1_integrals: &[f64]) -> Result<Self> {
        if energies.is_empty() {
            return Err(Error::Dimension("empty energy grid".into()));
        }
        Ok(LongitudinalData {
            action: HermiteCubic::new(energies, actions, periods)?,
            period: CubicSpline::new(energies, periods)?,
            h1: CubicSpline::new(energies, h1_integrals)?,
            range: (energies[0], energies[energies.len() - 1]),
        })
    }

    pub fn from_family(family: &OrbitFamily) -> Result<Self> {
        let h1: Vec<f64> = family.orbits.iter().map(|o| o.h1_integral.unwrap_or(0.0)).collect();
        Self::new(&family.energies(), &family.actions(), &family.periods(), &h1)
    }

    pub fn range(&self) -> (f64, f64) {
        self.range
    }

    pub fn action(&self, e: f64) -> f64 {
        self.action.eval(e)
    }

    pub fn period(&self, e: f64) -> f64 {
        self.period.eval(e)
    }

    pub fn check_range(&self, e: f64) -> Result<()> {
        let (lo, hi) = self.range;
        let slack = 1e-12 * (hi - lo).abs().max(1.0);
        if e < lo - slack || e > hi + slack {
            return Err(Error::OutOfRange { energy: e, min: lo, max: hi });
        }
        Ok(())
    }

    /// `S(E) - h I(E) [flag]` and its derivative.
    fn phase(&self, e: f64, q: &ResonanceQuery) -> (f64, f64) {
        let (s, ds) = self.action.eval_with_derivative(e);
        if q.include_subprincipal {
            let (i, di) = self.h1.eval_with_derivative(e);
            (s - q.h * i, ds - q.h * di)
        } else {
            (s, ds)
        }
    }

    /// Interval of `k` whose quantized action is attained over the grid.
    pub fn admissible_k(&self, q: &ResonanceQuery) -> (i64, i64) {
        let (lo, _) = self.phase(self.range.0, q);
        let (hi, _) = self.phase(self.range.1, q);
        let shift = FRAC_PI_2 * q.maslov_index as f64 * q.h;
        let k_lo = ((lo.min(hi) - shift) / (TAU * q.h) - 1e-9).ceil() as i64;
        let k_hi = ((lo.max(hi) - shift) / (TAU * q.h) + 1e-9).floor() as i64;
        (k_lo, k_hi)
    }
}

/// Energy `E_k` with `S(E_k) - h I(E_k) [flag] = 2 pi k h + (pi/2) nu h`.
pub fn anchor(data: &LongitudinalData, k: i64, q: &ResonanceQuery) -> Result<f64> {
    q.validate()?;
    let target = q.quantized_action(k);
    let (a, b) = data.range;
    let (fa, _) = data.phase(a, q);
    let (fb, _) = data.phase(b, q);
    let scale = target.abs().max(1.0);
    let no_anchor = || {
        let (k_min, k_max) = data.admissible_k(q);
        Error::NoAnchor { k, k_min, k_max }
    };
    let ga = fa - target;
    let gb = fb - target;
    if ga.abs() <= 1e-13 * scale {
        return Ok(a);
    }
    if gb.abs() <= 1e-13 * scale {
        return Ok(b);
    }
    if ga * gb > 0.0 {
        return Err(no_anchor());
    }
    // safeguarded Newton on the bracket [lo, hi]
    let (mut lo, mut hi) = if ga < 0.0 { (a, b) } else { (b, a) };
    let mut e = a + (b - a) * (-ga) / (gb - ga);
    for _ in 0..200 {
        let (f, df) = data.phase(e, q);
        let g = f - target;
        if g.abs() <= 1e-13 * scale {
            return Ok(e);
        }
        if g < 0.0 {
            lo = e;
        } else {
            hi = e;
        }
        let newton = e - g / df;
        let inside = (newton - lo) * (newton - hi) < 0.0;
        e = if df != 0.0 && inside { newton } else { 0.5 * (lo + hi) };
        if (hi - lo).abs() <= 1e-15 * e.abs().max(1.0) {
            return Ok(e);
        }
    }
    let (f, _) = data.phase(e, q);
    Err(Error::NonConvergence {
        residual: (f - target).abs(),
        reason: format!("Bohr-Sommerfeld anchor for k = {k}"),
    })
}

pub fn longitudinal_anchor(family: &OrbitFamily, k: i64, q: &ResonanceQuery) -> Result<f64> {
    anchor(&LongitudinalData::from_family(family)?, k, q)
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

/// Reorders `next` to match `prev` by minimal total distance (exhaustive for
/// up to six modes, greedy beyond).
fn match_modes(prev: &[C64], next: &[C64]) -> Vec<C64> {
    let n = prev.len();
    if n <= 6 {
        let best = permutations(n)
            .into_iter()
            .min_by(|p, q| {
                let cost = |perm: &Vec<usize>| -> f64 { (0..n).map(|i| (prev[i] - next[perm[i]]).norm()).sum() };
                cost(p).total_cmp(&cost(q))
            })
            .unwrap_or_default();
        best.iter().map(|&j| next[j]).collect()
    } else {
        let mut left: Vec<C64> = next.to_vec();
        prev.iter()
            .map(|p| {
                let (i, _) = left
                    .iter()
                    .enumerate()
                    .min_by(|a, b| (a.1 - p).norm().total_cmp(&(b.1 - p).norm()))
                    .expect("same length");
                left.remove(i)
            })
            .collect()
    }
}

/// Floquet exponents (repeated by multiplicity) as functions of energy,
/// tracked by continuity and interpolated by cubic splines per mode.
#[derive(Debug, Clone)]
pub struct ExponentTrack {
    energies: Vec<f64>,
    tracked: Vec<Vec<C64>>,
    re: Vec<CubicSpline>,
    im: Vec<CubicSpline>,
}

impl ExponentTrack {
    pub fn new(energies: &[f64], modes: &[Vec<C64>]) -> Result<Self> {
        if energies.len() != modes.len() || modes.is_empty() {
            return Err(Error::Dimension("exponent track needs one mode list per energy".into()));
        }
        let n = modes[0].len();
        if modes.iter().any(|m| m.len() != n) {
            return Err(Error::Dimension("mode count changes along the family".into()));
        }
        let mut tracked = vec![modes[0].clone()];
        for m in &modes[1..] {
            let prev = tracked.last().expect("nonempty");
            tracked.push(match_modes(prev, m));
        }
        let mut re = Vec::new();
        let mut im = Vec::new();
        for j in 0..n {
            let r: Vec<f64> = tracked.iter().map(|m| m[j].re).collect();
            let i: Vec<f64> = tracked.iter().map(|m| m[j].im).collect();
            re.push(CubicSpline::new(energies, &r)?);
            im.push(CubicSpline::new(energies, &i)?);
        }
        Ok(ExponentTrack {
            energies: energies.to_vec(),
            tracked,
            re,
            im,
        })
    }

    /// Constant exponents (energy independent).
    pub fn constant(modes: &[C64]) -> Self {
        ExponentTrack::new(&[0.0], &[modes.to_vec()]).expect("single point track")
    }

    pub fn from_floquet(energies: &[f64], data: &[FloquetData]) -> Result<Self> {
        let modes: Vec<Vec<C64>> = data.iter().map(|f| f.modes()).collect();
        ExponentTrack::new(energies, &modes)
    }

    pub fn dim(&self) -> usize {
        self.re.len()
    }

    pub fn at(&self, e: f64) -> Vec<C64> {
        (0..self.dim())
            .map(|j| Complex::new(self.re[j].eval(e), self.im[j].eval(e)))
            .collect()
    }

    pub fn tracked(&self) -> (&[f64], &[Vec<C64>]) {
        (&self.energies, &self.tracked)
    }
}

/// Floquet data at every orbit of the family.
pub fn floquet_along_family(sys: &HamiltonianSystem, family: &OrbitFamily) -> Result<Vec<FloquetData>> {
    family
        .orbits
        .iter()
        .map(|o| analyze_monodromy(sys, &o.ref_point.to_vector(), &o.monodromy))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonanceEntry {
    pub k: i64,
    pub alpha: Vec<u32>,
    pub z: C64,
    /// Longitudinal anchor `E_k`.
    pub anchor: f64,
    /// `-Im z`.
    pub width: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResonanceString {
    /// Entries inside the window, ordered by `k`, then `alpha` lexicographically.
    pub entries: Vec<ResonanceEntry>,
    /// Entries outside the window.
    pub excluded: Vec<ResonanceEntry>,
    /// Real extent of the window (the family's energy range).
    pub window_real: (f64, f64),
    pub window_depth: f64,
}

impl ResonanceString {
    pub fn total(&self) -> usize {
        self.entries.len() + self.excluded.len()
    }

    /// CSV with columns `k, alpha_1..alpha_r, re_z, im_z, width`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let r = self
            .entries
            .iter()
            .chain(&self.excluded)
            .map(|e| e.alpha.len())
            .next()
            .unwrap_or(0);
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["k".to_string()];
        header.extend((1..=r).map(|j| format!("alpha_{j}")));
        header.extend(["re_z".to_string(), "im_z".to_string(), "width".to_string()]);
        w.write_record(&header)?;
        for e in &self.entries {
            let mut row = vec![e.k.to_string()];
            row.extend(e.alpha.iter().map(|a| a.to_string()));
            row.extend([e.z.re.to_string(), e.z.im.to_string(), e.width.to_string()]);
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// All multi-indices in `{0..=cap}^r`, lexicographic.
pub fn multi_indices(r: usize, cap: u32) -> Vec<Vec<u32>> {
    let mut out = vec![Vec::new()];
    for _ in 0..r {
        let mut next = Vec::new();
        for a in &out {
            for v in 0..=cap {
                let mut b = a.clone();
                b.push(v);
                next.push(b);
            }
        }
        out = next;
    }
    out
}

/// `z = E_k - (i h / T) sum_j (alpha_j + 1/2) mu_j`.
pub fn ladder(anchor: f64, period: f64, h: f64, modes: &[C64], alpha: &[u32]) -> C64 {
    let s: C64 = modes.iter().zip(alpha).map(|(m, &a)| m * (a as f64 + 0.5)).sum();
    Complex::new(anchor, 0.0) - Complex::new(0.0, h / period) * s
}

pub fn in_window(z: C64, real: (f64, f64), depth: f64) -> bool {
    let w = -z.im;
    z.re >= real.0 && z.re <= real.1 && w > 0.0 && w <= depth
}

/// Strings from precomputed longitudinal data and exponent track.
pub fn strings_from_data(data: &LongitudinalData, track: &ExponentTrack, q: &ResonanceQuery) -> Result<ResonanceString> {
    q.validate()?;
    let depth = q.depth();
    let real = data.range();
    let mut entries = Vec::new();
    let mut excluded = Vec::new();
    let alphas = multi_indices(track.dim(), q.alpha_max);
    for k in q.k_min..=q.k_max {
        let e_k = anchor(data, k, q)?;
        let t = data.period(e_k);
        let modes = track.at(e_k);
        for alpha in &alphas {
            let z = ladder(e_k, t, q.h, &modes, alpha);
            let entry = ResonanceEntry {
                k,
                alpha: alpha.clone(),
                z,
                anchor: e_k,
                width: -z.im,
            };
            if in_window(z, real, depth) {
                entries.push(entry);
            } else {
                excluded.push(entry);
            }
        }
    }
    Ok(ResonanceString {
        entries,
        excluded,
        window_real: real,
        window_depth: depth,
    })
}

pub fn resonance_strings(family: &OrbitFamily, track: &ExponentTrack, q: &ResonanceQuery) -> Result<ResonanceString> {
    strings_from_data(&LongitudinalData::from_family(family)?, track, q)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StringSummary {
    /// Transversal multi-index labelling the string.
    pub alpha: Vec<u32>,
    pub count: usize,
    pub min_width: f64,
    pub max_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonanceSummary {
    pub total_entries: usize,
    pub in_window: usize,
    pub excluded: usize,
    pub strings: Vec<StringSummary>,
    pub min_width: Option<f64>,
    pub max_width: Option<f64>,
    /// `h^{-n (1 - delta)}`.
    pub rank_scale: f64,
    /// `in_window / rank_scale`, reported for comparison only.
    pub density_ratio: f64,
}

pub fn string_report(strings: &ResonanceString, q: &ResonanceQuery) -> ResonanceSummary {
    let mut groups: BTreeMap<Vec<u32>, Vec<f64>> = BTreeMap::new();
    for e in &strings.entries {
        groups.entry(e.alpha.clone()).or_default().push(e.width);
    }
    let strings_out: Vec<StringSummary> = groups
        .into_iter()
        .map(|(alpha, w)| StringSummary {
            alpha,
            count: w.len(),
            min_width: w.iter().cloned().fold(f64::INFINITY, f64::min),
            max_width: w.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        })
        .collect();
    let widths = strings.entries.iter().map(|e| e.width);
    let min_width = widths.clone().reduce(f64::min);
    let max_width = widths.reduce(f64::max);
    let n = strings
        .entries
        .iter()
        .chain(&strings.excluded)
        .map(|e| e.alpha.len() + 1)
        .next()
        .unwrap_or(1);
    let rank_scale = q.h.powf(-(n as f64) * (1.0 - q.delta));
    ResonanceSummary {
        total_entries: strings.total(),
        in_window: strings.entries.len(),
        excluded: strings.excluded.len(),
        strings: strings_out,
        min_width,
        max_width,
        rank_scale,
        density_ratio: strings.entries.len() as f64 / rank_scale,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_data(slope: f64, s0: f64) -> LongitudinalData {
        let e: Vec<f64> = (0..11).map(|i| -0.1 + 0.02 * i as f64).collect();
        let s: Vec<f64> = e.iter().map(|x| slope * x + s0).collect();
        let t = vec![slope; e.len()];
        let z = vec![0.0; e.len()];
        LongitudinalData::new(&e, &s, &t, &z).unwrap()
    }

    fn query(k: i64) -> ResonanceQuery {
        ResonanceQuery {
            h: 0.01,
            k_min: k,
            k_max: k,
            ..Default::default()
        }
    }

    #[test]
    fn anchors_invert_linear_action() {
        let d = linear_data(TAU, 0.0);
        assert!((anchor(&d, 5, &query(5)).unwrap() - 0.05).abs() < 1e-14);
        assert!((anchor(&d, 3, &query(3)).unwrap() - 0.03).abs() < 1e-14);
        let q = ResonanceQuery {
            maslov_index: 2,
            ..query(3)
        };
        assert!((anchor(&d, 3, &q).unwrap() - 0.035).abs() < 1e-14);
    }

    #[test]
    fn missing_anchor_names_admissible_range() {
        let d = linear_data(TAU, 0.0);
        match anchor(&d, 50, &query(50)) {
            Err(Error::NoAnchor { k_min, k_max, .. }) => assert_eq!((k_min, k_max), (-10, 10)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ladder_arithmetic() {
        let z = ladder(0.03, TAU, 0.01, &[Complex::new(FRAC_PI_2, 0.0), Complex::new(0.0, 0.3)], &[1, 2]);
        assert!((z.re - (0.03 + 0.01 / TAU * 0.75)).abs() < 1e-15);
        assert!((z.im + 0.00375).abs() < 1e-15);
        for (a, w) in [(0u32, 0.005), (3, 0.035)] {
            let z = ladder(0.0, TAU, 0.01, &[Complex::new(TAU, 0.0)], &[a]);
            assert!((-z.im - w).abs() < 1e-15);
        }
    }

    #[test]
    fn counting_and_filtering() {
        let d = linear_data(TAU, 0.0);
        let track = ExponentTrack::constant(&[Complex::new(TAU, 0.0)]);
        let q = ResonanceQuery {
            h: 0.01,
            k_min: -2,
            k_max: 2,
            alpha_max: 2,
            delta: 1.0,
            c: 10.0,
            ..Default::default()
        };
        let s = strings_from_data(&d, &track, &q).unwrap();
        assert_eq!(s.total(), 15);
        // C h^delta = 0.1 admits every width
        assert_eq!(s.entries.len(), 15);
        let shallow = ResonanceQuery { c: 0.4, ..q.clone() };
        let s = strings_from_data(&d, &track, &shallow).unwrap();
        assert_eq!(s.entries.len(), 0);
        assert_eq!(s.excluded.len(), 15);
        let summary = string_report(&s, &shallow);
        assert_eq!(summary.excluded, 15);
        assert!(summary.strings.is_empty());
    }

    #[test]
    fn empty_k_range_gives_empty_summary() {
        let d = linear_data(TAU, 0.0);
        let track = ExponentTrack::constant(&[Complex::new(TAU, 0.0)]);
        let q = ResonanceQuery {
            k_min: 1,
            k_max: 0,
            ..Default::default()
        };
        let s = strings_from_data(&d, &track, &q).unwrap();
        let r = string_report(&s, &q);
        assert_eq!(r.total_entries, 0);
        assert!(r.min_width.is_none());
    }

    #[test]
    fn mode_tracking_follows_continuity() {
        let e = [0.0, 0.1, 0.2];
        let a = Complex::new(1.0, 0.0);
        let b = Complex::new(0.0, 0.5);
        let modes = vec![vec![a, b], vec![b * 1.01, a * 1.01], vec![a * 1.02, b * 1.02]];
        let t = ExponentTrack::new(&e, &modes).unwrap();
        let at = t.at(0.1);
        assert!((at[0] - a * 1.01).norm() < 1e-12);
        assert!((at[1] - b * 1.01).norm() < 1e-12);
    }

    #[test]
    fn subprincipal_shifts_the_anchor() {
        let e: Vec<f64> = (0..11).map(|i| -0.1 + 0.02 * i as f64).collect();
        let s: Vec<f64> = e.iter().map(|x| TAU * x).collect();
        let t = vec![TAU; e.len()];
        let i1 = vec![0.5; e.len()];
        let d = LongitudinalData::new(&e, &s, &t, &i1).unwrap();
        let q = ResonanceQuery {
            include_subprincipal: true,
            ..query(3)
        };
        let e3 = anchor(&d, 3, &q).unwrap();
        assert!((TAU * e3 - 0.01 * 0.5 - TAU * 0.03).abs() < 1e-14);
    }
}

use std::f64::consts::TAU;

use hypres::family::{continue_family, energy_grid};
use hypres::linalg::C64;
use hypres::models::ModelSystemSpec;
use hypres::orbit::{find_periodic_orbit, OrbitOptions};
use hypres::semiclassics::{
    floquet_along_family, in_window, ladder, longitudinal_anchor, resonance_strings, string_report, strings_from_data,
    ExponentTrack, LongitudinalData, ResonanceQuery,
};
use hypres::{build_model, Error};
use nalgebra::Complex;
use proptest::prelude::*;

fn exponent() -> impl Strategy<Value = C64> {
    prop_oneof![
        (0.05..4.0f64).prop_map(|a| Complex::new(a, 0.0)),
        (0.05..3.0f64).prop_map(|w| Complex::new(0.0, w)),
        (0.05..2.0f64, 0.1..3.0f64).prop_map(|(a, b)| Complex::new(a, b)),
    ]
}

fn linear_data(period: f64) -> LongitudinalData {
    let e: Vec<f64> = (0..21).map(|i| -0.1 + 0.01 * i as f64).collect();
    let s: Vec<f64> = e.iter().map(|x| period * x).collect();
    LongitudinalData::new(&e, &s, &vec![period; e.len()], &vec![0.0; e.len()]).unwrap()
}

proptest! {
    #[test]
    fn widths_are_positive_and_monotone(
        mu in prop::collection::vec(exponent(), 1..=3),
        period in 1.0..10.0f64,
        h in 1e-3..5e-2f64,
        alpha in prop::collection::vec(0u32..5, 3),
    ) {
        prop_assume!(mu.iter().any(|m| m.re > 0.0));
        let r = mu.len();
        let alpha = &alpha[..r];
        let z = ladder(0.0, period, h, &mu, alpha);
        prop_assert!(-z.im > 0.0);
        for j in 0..r {
            let mut up = alpha.to_vec();
            up[j] += 1;
            let z_up = ladder(0.0, period, h, &mu, &up);
            prop_assert!(-z_up.im >= -z.im);
            if mu[j].re > 0.0 {
                prop_assert!(-z_up.im > -z.im);
            }
        }
    }

    #[test]
    fn ground_width_of_single_mode(mu in 0.05..8.0f64, period in 0.5..10.0f64, h in 1e-4..1e-1f64) {
        let z = ladder(0.3, period, h, &[Complex::new(mu, 0.0)], &[0]);
        let expected = h * mu / (2.0 * period);
        prop_assert!((-z.im - expected).abs() <= 1e-12 * expected);
    }

    #[test]
    fn window_filter_matches_definition(
        c in 0.1..20.0f64,
        delta in 0.2..1.0f64,
        mu in 0.5..8.0f64,
        rot in 0.0..3.0f64,
        alpha_max in 0u32..6,
    ) {
        let d = linear_data(TAU);
        let track = ExponentTrack::constant(&[Complex::new(mu, rot)]);
        let q = ResonanceQuery { h: 0.01, delta, c, k_min: -10, k_max: 10, alpha_max, ..Default::default() };
        let s = strings_from_data(&d, &track, &q).unwrap();
        let depth = c * 0.01f64.powf(delta);
        prop_assert_eq!(s.total(), 21 * (alpha_max as usize + 1));
        for e in &s.entries {
            prop_assert!(e.z.re >= -0.1 && e.z.re <= 0.1 && e.width > 0.0 && e.width <= depth);
            prop_assert!(in_window(e.z, (-0.1, 0.1), depth));
        }
        for e in &s.excluded {
            prop_assert!(!(e.z.re >= -0.1 && e.z.re <= 0.1 && e.width > 0.0 && e.width <= depth));
        }
        let summary = string_report(&s, &q);
        prop_assert_eq!(summary.in_window + summary.excluded, summary.total_entries);
    }
}

#[test]
fn normal_form_widths_and_window() {
    let spec = ModelSystemSpec::normal_form(TAU, &[(TAU, 0.0)]);
    let sys = build_model(&spec).unwrap();
    let opts = OrbitOptions {
        samples: 64,
        ..Default::default()
    };
    let seed = find_periodic_orbit(&sys, &spec.seed_point(0.0).unwrap(), 0.0, &opts).unwrap();
    let fam = continue_family(&sys, &seed, &energy_grid(0.0, 0.1, 11), &opts).unwrap();
    let data = floquet_along_family(&sys, &fam).unwrap();
    let track = ExponentTrack::from_floquet(&fam.energies(), &data).unwrap();
    let q = ResonanceQuery {
        h: 0.01,
        delta: 1.0,
        c: 10.0,
        k_min: 3,
        k_max: 3,
        alpha_max: 3,
        ..Default::default()
    };
    let e3 = longitudinal_anchor(&fam, 3, &q).unwrap();
    assert!((e3 - 0.03).abs() < 1e-9);
    let s = resonance_strings(&fam, &track, &q).unwrap();
    let widths: Vec<f64> = s.entries.iter().map(|e| e.width).collect();
    for (w, expected) in widths.iter().zip([0.005, 0.015, 0.025, 0.035]) {
        assert!((w - expected).abs() < 1e-9, "{w} vs {expected}");
    }
    assert_eq!(widths.len(), 4);
    let narrow = ResonanceQuery { c: 1.0, ..q.clone() };
    let s = resonance_strings(&fam, &track, &narrow).unwrap();
    assert_eq!(s.entries.len(), 1);
    assert_eq!(s.entries[0].alpha, vec![0]);
    match longitudinal_anchor(&fam, 40, &q) {
        Err(Error::NoAnchor { k_min, k_max, .. }) => assert_eq!((k_min, k_max), (-10, 10)),
        other => panic!("expected missing anchor, got {other:?}"),
    }
}

#[test]
fn hyperboloid_ground_width_is_half_h() {
    let spec = ModelSystemSpec::hyperboloid();
    let sys = build_model(&spec).unwrap();
    let opts = OrbitOptions {
        samples: 128,
        ..Default::default()
    };
    let seed = find_periodic_orbit(&sys, &spec.seed_point(0.5).unwrap(), 0.5, &opts).unwrap();
    let fam = continue_family(&sys, &seed, &energy_grid(0.5, 0.05, 11), &opts).unwrap();
    let data = floquet_along_family(&sys, &fam).unwrap();
    let track = ExponentTrack::from_floquet(&fam.energies(), &data).unwrap();
    // S(E) = 2 pi sqrt(2E); k = 100 anchors at E = 1/2 for h = 0.01
    let q = ResonanceQuery {
        h: 0.01,
        k_min: 100,
        k_max: 100,
        alpha_max: 0,
        ..Default::default()
    };
    let s = resonance_strings(&fam, &track, &q).unwrap();
    assert_eq!(s.entries.len(), 1);
    let e = &s.entries[0];
    assert!((e.anchor - 0.5).abs() < 1e-7);
    assert!((e.width - 0.005).abs() <= 1e-6 * 0.01);
}

use std::f64::consts::{FRAC_PI_2, TAU};
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn hypres(args: &[&str], env: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_hypres"));
    cmd.args(args).env_remove("HYPRES_CACHE");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn write_config(dir: &TempDir, name: &str, cfg: Value) -> String {
    let p = dir.path().join(name);
    fs::write(&p, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    p.to_str().unwrap().to_string()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}); stderr: {}",
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

fn hyperboloid() -> Value {
    serde_json::json!({
        "system": {"kind": "hyperboloid_geodesic"},
        "energy": 0.5,
        "grid": {"half_width": 0.05, "points": 5},
        "shooting": {"samples": 128},
        "resonances": {"h": 0.01, "k_min": 100, "k_max": 100, "alpha_max": 2}
    })
}

fn normal_form(mu: &[(f64, f64)]) -> Value {
    let mut params = serde_json::Map::new();
    params.insert("T0".into(), TAU.into());
    for (j, (re, im)) in mu.iter().enumerate() {
        params.insert(format!("mu{}_re", j + 1), (*re).into());
        params.insert(format!("mu{}_im", j + 1), (*im).into());
    }
    serde_json::json!({
        "system": {"kind": "normal_form", "parameters": params},
        "energy": 0.0,
        "grid": {"half_width": 0.1, "points": 11},
        "shooting": {"samples": 64}
    })
}

#[test]
fn find_orbit_on_hyperboloid() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.json", hyperboloid());
    let out = hypres(&["find-orbit", "--config", &cfg], &[]);
    assert_eq!(out.status.code(), Some(0));
    let r = json(&out);
    assert!((r["orbit"]["period"].as_f64().unwrap() - TAU).abs() < 1e-6);
    assert_eq!(r["schema_version"], 1);
}

#[test]
fn floquet_on_normal_form() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.json", normal_form(&[(FRAC_PI_2, 0.0)]));
    let out = hypres(&["floquet", "--config", &cfg], &[]);
    assert_eq!(out.status.code(), Some(0));
    let r = json(&out);
    assert!((r["orbit"]["period"].as_f64().unwrap() - TAU).abs() < 1e-9);
    assert!((r["floquet"]["exponents"][0]["re"].as_f64().unwrap() - FRAC_PI_2).abs() < 1e-8);
    assert_eq!(r["floquet"]["hyperbolic_dimension"], 1);
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let mut bad = hyperboloid();
    bad["energy"] = (-1.0).into();
    let cfg = write_config(&dir, "c.json", bad);
    let out = hypres(&["find-orbit", "--config", &cfg, "--json-errors"], &[]);
    assert_eq!(out.status.code(), Some(2));
    let e = json(&out);
    assert_eq!(e["error"]["kind"], "configuration");
    assert!(e["error"]["message"].as_str().unwrap().contains("E > 0"));
    let missing = hypres(&["find-orbit", "--config", "/nonexistent/cfg.json"], &[]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn numerical_failures_exit_with_three() {
    let dir = TempDir::new().unwrap();
    let mut c = hyperboloid();
    c["integrator"] = serde_json::json!({"max_steps": 3});
    let cfg = write_config(&dir, "c.json", c);
    let out = hypres(&["find-orbit", "--config", &cfg, "--json-errors"], &[]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(json(&out)["error"]["kind"], "numerical");
}

#[test]
fn resonant_exponents_fail_check_under_strict() {
    let dir = TempDir::new().unwrap();
    let mut c = normal_form(&[(1.0, 0.0), (0.0, TAU * 0.3)]);
    c["hypotheses"] = serde_json::json!({"K": 10, "tol": 1e-9});
    let cfg = write_config(&dir, "c.json", c);
    let strict = hypres(&["check", "--config", &cfg, "--strict"], &[]);
    assert_eq!(strict.status.code(), Some(4));
    let r = json(&strict);
    assert_eq!(r["hypotheses"]["nonresonance_ok"], false);
    assert_eq!(r["hypotheses"]["witnesses"]["nonresonance"], serde_json::json!([0, 10]));
    assert!(String::from_utf8_lossy(&strict.stderr).contains("non-resonant exponents"));
    let lenient = hypres(&["check", "--config", &cfg], &[]);
    assert_eq!(lenient.status.code(), Some(0));
}

#[test]
fn hyperboloid_passes_check() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.json", hyperboloid());
    let out = hypres(&["check", "--config", &cfg, "--strict"], &[]);
    assert_eq!(out.status.code(), Some(0));
    let r = json(&out);
    for k in ["principal_type_ok", "orbit_hyperbolic_ok", "williamson_ok", "nonresonance_ok", "strong_nonresonance_ok"] {
        assert_eq!(r["hypotheses"][k], true, "{k}");
    }
}

#[test]
fn report_is_deterministic_and_writes_exports() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.json", hyperboloid());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let ra = hypres(&["report", "--config", &cfg, "--out", a.to_str().unwrap()], &[]);
    let rb = hypres(&["report", "--config", &cfg, "--out", b.to_str().unwrap()], &[]);
    assert_eq!(ra.status.code(), Some(0));
    assert_eq!(ra.stdout, rb.stdout);
    assert_eq!(fs::read(a.join("report.json")).unwrap(), fs::read(b.join("report.json")).unwrap());
    for f in ["orbit.csv", "family.csv", "resonances.csv"] {
        assert!(a.join(f).exists(), "{f}");
    }
    let fam = fs::read_to_string(a.join("family.csv")).unwrap();
    assert!(fam.starts_with("E,T,S"));
    assert_eq!(fam.lines().count(), 6);
    let res = fs::read_to_string(a.join("resonances.csv")).unwrap();
    assert!(res.starts_with("k,alpha_1,re_z,im_z,width"));
    let r = json(&ra);
    assert!(r["family"].is_object() && r["floquet"].is_object() && r["resonances"].is_object());
}

#[test]
fn resonances_respect_the_window() {
    let dir = TempDir::new().unwrap();
    let mut c = normal_form(&[(TAU, 0.0)]);
    c["resonances"] = serde_json::json!({"h": 0.01, "delta": 1.0, "C": 1.0, "k_min": 3, "k_max": 3, "alpha_max": 3});
    let cfg = write_config(&dir, "c.json", c);
    let out = hypres(&["resonances", "--config", &cfg], &[]);
    assert_eq!(out.status.code(), Some(0));
    let r = json(&out);
    let s = &r["resonances"]["summary"];
    assert_eq!(s["total_entries"], 4);
    assert_eq!(s["in_window"], 1);
    assert!((r["resonances"]["entries"][0]["im"].as_f64().unwrap() + 0.005).abs() < 1e-9);
}

#[test]
fn cache_hit_and_corruption() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.json", hyperboloid());
    let cache = dir.path().join("cache.json");
    let cache_arg = cache.to_str().unwrap();
    let first = json(&hypres(&["find-orbit", "--config", &cfg, "--cache", cache_arg], &[]));
    assert_eq!(first["provenance"]["orbit_source"], "computed");
    assert!(cache.exists());
    let second = json(&hypres(&["find-orbit", "--config", &cfg, "--cache", cache_arg], &[]));
    assert_eq!(second["provenance"]["orbit_source"], "cache");
    assert_eq!(first["orbit"], second["orbit"]);

    fs::write(&cache, b"{ not json").unwrap();
    let out = hypres(&["find-orbit", "--config", &cfg, "--cache", cache_arg], &[]);
    assert_eq!(out.status.code(), Some(0));
    let third = json(&out);
    assert_eq!(third["provenance"]["orbit_source"], "computed");
    assert!(third["provenance"]["notes"][0].as_str().unwrap().contains("corrupted"));
    assert!(String::from_utf8_lossy(&out.stderr).contains("recomputing"));
    assert_eq!(first["orbit"], third["orbit"]);
}

#[test]
fn cache_path_from_environment() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.json", hyperboloid());
    let env_cache = dir.path().join("env_cache.json");
    let flag_cache = dir.path().join("flag_cache.json");
    let out = hypres(
        &["find-orbit", "--config", &cfg, "--cache", flag_cache.to_str().unwrap()],
        &[("HYPRES_CACHE", env_cache.as_path())],
    );
    assert_eq!(out.status.code(), Some(0));
    assert!(env_cache.exists());
    assert!(!flag_cache.exists());
}

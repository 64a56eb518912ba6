//! Run configuration, orchestration of the analysis commands, the JSON run
//! report and the orbit cache.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, ErrorKind, Result};
use crate::family::{continue_family, energy_grid, Boundary, OrbitFamily};
use crate::floquet::{
    analyze_monodromy, check_hypotheses, FloquetData, HypothesisOptions, HypothesisReport, DECOMPOSITION_TOL, LOG_TOL,
    PAIRING_TOL,
};
use crate::flow::IntegratorOptions;
use crate::hamiltonian::{HamiltonianSystem, PhasePoint};
use crate::models::{build_model, ModelKind, ModelSystemSpec};
use crate::orbit::{find_periodic_orbit, OrbitOptions, PeriodicOrbit, CLOSURE_TOL, ENERGY_TOL};
use crate::semiclassics::{
    floquet_along_family, resonance_strings, string_report, ExponentTrack, ResonanceQuery, ResonanceString,
    ResonanceSummary,
};

pub const SCHEMA_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
/// Environment variable overriding the cache path.
pub const CACHE_ENV: &str = "HYPRES_CACHE";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub half_width: f64,
    pub points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            half_width: 0.05,
            points: 11,
        }
    }
}

/// Shooting settings; `segments` defaults per model when absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShootingOptions {
    pub segments: Option<usize>,
    pub max_iterations: usize,
    pub newton_tol: f64,
    pub accept_tol: f64,
    pub samples: usize,
    pub period_guess: Option<f64>,
}

impl Default for ShootingOptions {
    fn default() -> Self {
        let o = OrbitOptions::default();
        ShootingOptions {
            segments: None,
            max_iterations: o.max_iterations,
            newton_tol: o.newton_tol,
            accept_tol: o.accept_tol,
            samples: o.samples,
            period_guess: o.period_guess,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputPaths {
    pub dir: Option<PathBuf>,
    pub report: String,
    pub orbit_csv: String,
    pub family_csv: String,
    pub resonances_csv: String,
}

impl Default for OutputPaths {
    fn default() -> Self {
        OutputPaths {
            dir: None,
            report: "{command}.json".into(),
            orbit_csv: "orbit.csv".into(),
            family_csv: "family.csv".into(),
            resonances_csv: "resonances.csv".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: ModelSystemSpec,
    pub energy: f64,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub seed_point: Option<PhasePoint>,
    #[serde(default)]
    pub integrator: IntegratorOptions,
    #[serde(default)]
    pub shooting: ShootingOptions,
    #[serde(default)]
    pub hypotheses: HypothesisOptions,
    #[serde(default)]
    pub resonances: ResonanceQuery,
    #[serde(default)]
    pub output: OutputPaths,
}

impl RunConfig {
    pub fn new(system: ModelSystemSpec, energy: f64) -> Self {
        RunConfig {
            system,
            energy,
            grid: GridSpec::default(),
            seed_point: None,
            integrator: IntegratorOptions::default(),
            shooting: ShootingOptions::default(),
            hypotheses: HypothesisOptions::default(),
            resonances: ResonanceQuery::default(),
            output: OutputPaths::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid config JSON: {e}")))?;
        let system = v
            .get("system")
            .ok_or_else(|| Error::Config("config lacks 'system'".into()))
            .and_then(ModelSystemSpec::from_json_value)?;
        let mut rest = v.clone();
        if let Some(obj) = rest.as_object_mut() {
            obj.insert("system".into(), serde_json::to_value(&system)?);
        }
        let cfg: RunConfig = serde_json::from_value(rest).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        if !self.energy.is_finite() {
            return Err(Error::Config(format!("energy must be finite (got {})", self.energy)));
        }
        if self.grid.points == 0 {
            return Err(Error::Config("energy grid must contain at least one point".into()));
        }
        if !(self.grid.half_width >= 0.0) || !self.grid.half_width.is_finite() {
            return Err(Error::Config(format!(
                "grid half_width must be finite and nonnegative (got {})",
                self.grid.half_width
            )));
        }
        if let Some(p) = &self.seed_point {
            p.validate()?;
        }
        if self.shooting.segments == Some(0) {
            return Err(Error::Config("shooting needs at least one segment".into()));
        }
        if self.shooting.samples < 2 {
            return Err(Error::Config("orbit needs at least two samples".into()));
        }
        self.resonances.validate()
    }

    /// Hash of everything that influences numbers (output paths excluded).
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("output");
        }
        hex::encode(Sha256::digest(canonical_json(&v).as_bytes()))
    }

    pub fn orbit_options(&self) -> OrbitOptions {
        let default_segments = match self.system.kind {
            ModelKind::CoulombStark => 4,
            _ => 1,
        };
        OrbitOptions {
            integrator: self.integrator.clone(),
            segments: self.shooting.segments.unwrap_or(default_segments),
            max_iterations: self.shooting.max_iterations,
            newton_tol: self.shooting.newton_tol,
            accept_tol: self.shooting.accept_tol,
            samples: self.shooting.samples,
            period_guess: self.shooting.period_guess,
        }
    }

    pub fn seed(&self) -> Result<PhasePoint> {
        match &self.seed_point {
            Some(p) => Ok(p.clone()),
            None => self.system.seed_point(self.energy),
        }
    }

    pub fn energies(&self) -> Vec<f64> {
        let mut grid = energy_grid(self.energy, self.grid.half_width, self.grid.points);
        let tol = 1e-9 * self.grid.half_width.max(self.energy.abs()).max(1e-300);
        match grid.iter_mut().find(|e| (**e - self.energy).abs() <= tol) {
            Some(e) => *e = self.energy,
            None => grid.push(self.energy),
        }
        grid
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    FindOrbit,
    Continue,
    Floquet,
    Check,
    Resonances,
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::FindOrbit => "find-orbit",
            Command::Continue => "continue",
            Command::Floquet => "floquet",
            Command::Check => "check",
            Command::Resonances => "resonances",
            Command::Report => "report",
        }
    }
}

/// Exit status for an error: 2 configuration, 3 numerical, 4 hypothesis
/// (only with `strict`, otherwise 3).
pub fn exit_code(err: &Error, strict: bool) -> i32 {
    match err.kind() {
        ErrorKind::Configuration => 2,
        ErrorKind::Numerical => 3,
        ErrorKind::Hypothesis if strict => 4,
        ErrorKind::Hypothesis => 3,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorInfo {
    pub kind: String,
    pub name: String,
    pub message: String,
}

impl From<&Error> for ErrorInfo {
    fn from(e: &Error) -> Self {
        ErrorInfo {
            kind: format!("{:?}", e.kind()).to_lowercase(),
            name: e.name().into(),
            message: e.to_string(),
        }
    }
}

pub fn error_json(err: &Error, exit: i32) -> String {
    let v = serde_json::json!({
        "error": ErrorInfo::from(err),
        "exit_status": exit,
    });
    canonical_json(&v)
}

// ---------------------------------------------------------------------------
// report fragments

#[derive(Debug, Clone, Serialize)]
pub struct SystemSummary {
    pub kind: ModelKind,
    pub parameters: BTreeMap<String, f64>,
    pub dof: usize,
    pub system_hash: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct OrbitSummary {
    pub energy: f64,
    pub period: f64,
    pub action: f64,
    pub closure_residual: f64,
    pub energy_residual: f64,
    pub transversality: f64,
    pub newton_iterations: usize,
    pub samples: usize,
    pub ref_point: PhasePoint,
    pub section_normal: Vec<f64>,
    pub h1_integral: Option<f64>,
}

impl From<&PeriodicOrbit> for OrbitSummary {
    fn from(o: &PeriodicOrbit) -> Self {
        OrbitSummary {
            energy: o.energy,
            period: o.period,
            action: o.action,
            closure_residual: o.closure_residual,
            energy_residual: o.energy_residual,
            transversality: o.transversality,
            newton_iterations: o.newton_iterations,
            samples: o.samples.times.len(),
            ref_point: o.ref_point.clone(),
            section_normal: o.section_normal.iter().cloned().collect(),
            h1_integral: o.h1_integral,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FamilyPoint {
    pub energy: f64,
    pub period: f64,
    pub action: f64,
    pub closure_residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FamilySummary {
    pub energy_range: (f64, f64),
    pub partial: bool,
    pub action_identity_residual: f64,
    pub points: Vec<FamilyPoint>,
    pub boundaries: Vec<Boundary>,
}

impl From<&OrbitFamily> for FamilySummary {
    fn from(f: &OrbitFamily) -> Self {
        FamilySummary {
            energy_range: f.energy_range(),
            partial: f.is_partial(),
            action_identity_residual: f.action_identity_residual(),
            points: f
                .orbits
                .iter()
                .map(|o| FamilyPoint {
                    energy: o.energy,
                    period: o.period,
                    action: o.action,
                    closure_residual: o.closure_residual,
                })
                .collect(),
            boundaries: f.boundaries.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ComplexEntry {
    pub re: f64,
    pub im: f64,
    pub multiplicity: usize,
    pub tag: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ActionEntry {
    pub kind: String,
    pub exponent: usize,
    pub coefficient: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FloquetTable {
    pub multipliers: Vec<ComplexEntry>,
    pub exponents: Vec<ComplexEntry>,
    pub hyperbolic_dimension: usize,
    pub trivial_multiplicity: usize,
    pub action_coordinates: Vec<ActionEntry>,
    pub residuals: BTreeMap<String, f64>,
}

impl From<&FloquetData> for FloquetTable {
    fn from(f: &FloquetData) -> Self {
        let mut residuals = BTreeMap::new();
        residuals.insert("invariance".into(), f.reduction.invariance_residual);
        residuals.insert("reduced_symplectic".into(), f.reduction.symplectic_residual);
        residuals.insert("pairing_mismatch".into(), f.classification.pairing_mismatch);
        residuals.insert("degeneracy_margin".into(), f.classification.degeneracy_margin);
        residuals.insert("log_exp".into(), f.log_exp_residual);
        residuals.insert("log_hamiltonian".into(), f.log_hamiltonian_residual);
        residuals.insert("lagrangian_splitting".into(), f.splitting.lagrangian_residual);
        residuals.insert("dissipativity_min".into(), f.splitting.dissipativity_min);
        residuals.insert("splitting_condition".into(), f.splitting.condition);
        residuals.insert("quadratic_decomposition".into(), f.quadratic_form.decomposition_residual);
        FloquetTable {
            multipliers: f
                .multipliers()
                .iter()
                .map(|m| ComplexEntry {
                    re: m.value.re,
                    im: m.value.im,
                    multiplicity: m.multiplicity,
                    tag: m.tag.as_str().into(),
                })
                .collect(),
            exponents: f
                .exponents
                .iter()
                .map(|e| ComplexEntry {
                    re: e.value.re,
                    im: e.value.im,
                    multiplicity: e.multiplicity,
                    tag: e.tag.as_str().into(),
                })
                .collect(),
            hyperbolic_dimension: f.hyperbolic_dimension,
            trivial_multiplicity: f.reduction.trivial_multiplicity,
            action_coordinates: f
                .quadratic_form
                .action_coordinates
                .iter()
                .map(|a| ActionEntry {
                    kind: serde_json::to_value(a.kind)
                        .ok()
                        .and_then(|v| v.as_str().map(str::to_string))
                        .unwrap_or_default(),
                    exponent: a.exponent,
                    coefficient: a.coefficient,
                })
                .collect(),
            residuals,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ResonanceRow {
    pub k: i64,
    pub alpha: Vec<u32>,
    pub re: f64,
    pub im: f64,
    pub anchor: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResonanceFragment {
    pub query: ResonanceQuery,
    pub window_real: (f64, f64),
    pub window_depth: f64,
    pub summary: ResonanceSummary,
    pub entries: Vec<ResonanceRow>,
}

impl ResonanceFragment {
    fn new(q: &ResonanceQuery, s: &ResonanceString) -> Self {
        ResonanceFragment {
            query: q.clone(),
            window_real: s.window_real,
            window_depth: s.window_depth,
            summary: string_report(s, q),
            entries: s
                .entries
                .iter()
                .map(|e| ResonanceRow {
                    k: e.k,
                    alpha: e.alpha.clone(),
                    re: e.z.re,
                    im: e.z.im,
                    anchor: e.anchor,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub config_hash: String,
    pub tool_version: String,
    pub orbit_source: String,
    pub notes: Vec<String>,
    pub tolerances: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub command: String,
    pub system: SystemSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub orbit: Option<OrbitSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub family: Option<FamilySummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub floquet: Option<FloquetTable>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub floquet_error: Option<ErrorInfo>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hypotheses: Option<HypothesisReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resonances: Option<ResonanceFragment>,
    pub provenance: Provenance,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        canonical_json(&serde_json::to_value(self).expect("report serializes"))
    }
}

/// Results kept alongside the report for CSV side channels.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub orbit: Option<PeriodicOrbit>,
    pub family: Option<OrbitFamily>,
    pub strings: Option<ResonanceString>,
}

// ---------------------------------------------------------------------------
// deterministic JSON

fn write_value(out: &mut String, v: &Value, indent: usize) {
    let pad = |n: usize| "  ".repeat(n);
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                let _ = write!(out, "{i}");
            } else if let Some(u) = n.as_u64() {
                let _ = write!(out, "{u}");
            } else {
                let x = n.as_f64().expect("number");
                // no signed zeros in reports
                let x = if x == 0.0 { 0.0 } else { x };
                let _ = write!(out, "{x:.16e}");
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("string serializes")),
        Value::Array(a) => {
            if a.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push_str("[\n");
            for (i, x) in a.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                write_value(out, x, indent + 1);
                out.push_str(if i + 1 < a.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push(']');
        }
        Value::Object(m) => {
            if m.is_empty() {
                out.push_str("{}");
                return;
            }
            out.push_str("{\n");
            for (i, (k, x)) in m.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                out.push_str(&serde_json::to_string(k).expect("key serializes"));
                out.push_str(": ");
                write_value(out, x, indent + 1);
                out.push_str(if i + 1 < m.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push('}');
        }
    }
}

/// Pretty JSON in insertion order with every float printed to 17 significant digits.
pub fn canonical_json(v: &Value) -> String {
    let mut s = String::new();
    write_value(&mut s, v, 0);
    s.push('\n');
    s
}

// ---------------------------------------------------------------------------
// cache

/// Orbit cache: one JSON object mapping keys to serialized orbits.
#[derive(Debug, Clone)]
pub struct OrbitCache {
    path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CacheLookup {
    Hit,
    Miss,
    Corrupted(String),
}

impl OrbitCache {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        OrbitCache { path: path.into() }
    }

    /// Key `"{hash}:{energy}"`, the hash covering system, seed and solver settings.
    pub fn key(cfg: &RunConfig) -> String {
        let v = serde_json::json!({
            "system": cfg.system,
            "seed_point": cfg.seed_point,
            "integrator": cfg.integrator,
            "shooting": cfg.shooting,
        });
        let h = hex::encode(Sha256::digest(canonical_json(&v).as_bytes()));
        format!("{}:{:.16e}", &h[..16], cfg.energy)
    }

    fn read_all(&self) -> std::result::Result<serde_json::Map<String, Value>, String> {
        match fs::read_to_string(&self.path) {
            Ok(text) => match serde_json::from_str::<Value>(&text) {
                Ok(Value::Object(m)) => Ok(m),
                Ok(_) => Err("cache file is not a JSON object".into()),
                Err(e) => Err(format!("cache file unreadable: {e}")),
            },
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Default::default()),
            Err(e) => Err(format!("cache file unreadable: {e}")),
        }
    }

    pub fn load(&self, key: &str, sys: &HamiltonianSystem, energy: f64) -> (Option<PeriodicOrbit>, CacheLookup) {
        let map = match self.read_all() {
            Ok(m) => m,
            Err(e) => return (None, CacheLookup::Corrupted(e)),
        };
        let Some(v) = map.get(key) else {
            return (None, CacheLookup::Miss);
        };
        match serde_json::from_value::<PeriodicOrbit>(v.clone()) {
            Ok(o) => {
                let d = 2 * sys.dof();
                let sane = o.dof() == sys.dof()
                    && o.energy == energy
                    && o.closure_residual <= CLOSURE_TOL
                    && o.monodromy.shape() == (d, d)
                    && o.samples.times.len() >= 2;
                if sane {
                    (Some(o), CacheLookup::Hit)
                } else {
                    (None, CacheLookup::Corrupted(format!("entry {key} fails validation")))
                }
            }
            Err(e) => (None, CacheLookup::Corrupted(format!("entry {key} unreadable: {e}"))),
        }
    }

    pub fn store(&self, key: &str, orbit: &PeriodicOrbit) -> Result<()> {
        let mut map = self.read_all().unwrap_or_default();
        map.insert(key.into(), serde_json::to_value(orbit)?);
        if let Some(dir) = self.path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        fs::write(&self.path, serde_json::to_string(&Value::Object(map))?)?;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// commands

#[derive(Debug, Clone, Default)]
pub struct RunContext {
    pub cache: Option<PathBuf>,
}

struct Pipeline<'a> {
    cfg: &'a RunConfig,
    sys: HamiltonianSystem,
    ctx: &'a RunContext,
    notes: Vec<String>,
    orbit_source: String,
}

impl<'a> Pipeline<'a> {
    fn new(cfg: &'a RunConfig, ctx: &'a RunContext) -> Result<Self> {
        cfg.validate()?;
        Ok(Pipeline {
            cfg,
            sys: build_model(&cfg.system)?,
            ctx,
            notes: Vec::new(),
            orbit_source: "computed".into(),
        })
    }

    fn orbit(&mut self) -> Result<PeriodicOrbit> {
        let cache = self.ctx.cache.as_ref().map(OrbitCache::new);
        let key = OrbitCache::key(self.cfg);
        if let Some(c) = &cache {
            match c.load(&key, &self.sys, self.cfg.energy) {
                (Some(o), _) => {
                    info!("orbit loaded from cache ({key})");
                    self.orbit_source = "cache".into();
                    self.notes.push(format!("orbit loaded from cache entry {key}"));
                    return Ok(o);
                }
                (None, CacheLookup::Corrupted(reason)) => {
                    warn!("{reason}; recomputing");
                    self.notes.push(format!("corrupted cache entry recomputed: {reason}"));
                }
                (None, _) => {}
            }
        }
        let seed = self.cfg.seed()?;
        let orbit = find_periodic_orbit(&self.sys, &seed, self.cfg.energy, &self.cfg.orbit_options())?;
        if let Some(c) = &cache {
            if let Err(e) = c.store(&key, &orbit) {
                warn!("could not write cache: {e}");
                self.notes.push(format!("cache not written: {e}"));
            }
        }
        Ok(orbit)
    }

    fn family(&self, seed: &PeriodicOrbit) -> Result<OrbitFamily> {
        continue_family(&self.sys, seed, &self.cfg.energies(), &self.cfg.orbit_options())
    }

    fn floquet(&self, orbit: &PeriodicOrbit) -> Result<FloquetData> {
        analyze_monodromy(&self.sys, &orbit.ref_point.to_vector(), &orbit.monodromy)
    }

    fn strings(&self, family: &OrbitFamily) -> Result<ResonanceString> {
        let data = floquet_along_family(&self.sys, family)?;
        let track = ExponentTrack::from_floquet(&family.energies(), &data)?;
        resonance_strings(family, &track, &self.cfg.resonances)
    }

    fn provenance(&self) -> Provenance {
        let mut tolerances = BTreeMap::new();
        tolerances.insert("integrator_abs_tol".into(), self.cfg.integrator.abs_tol);
        tolerances.insert("integrator_rel_tol".into(), self.cfg.integrator.rel_tol);
        tolerances.insert("event_tol".into(), self.cfg.integrator.event_tol);
        tolerances.insert("newton_tol".into(), self.cfg.shooting.newton_tol);
        tolerances.insert("closure_tol".into(), CLOSURE_TOL);
        tolerances.insert("energy_tol".into(), ENERGY_TOL);
        tolerances.insert("pairing_tol".into(), PAIRING_TOL);
        tolerances.insert("log_tol".into(), LOG_TOL);
        tolerances.insert("decomposition_tol".into(), DECOMPOSITION_TOL);
        tolerances.insert("hypothesis_tol".into(), self.cfg.hypotheses.tol);
        Provenance {
            config_hash: self.cfg.hash(),
            tool_version: TOOL_VERSION.into(),
            orbit_source: self.orbit_source.clone(),
            notes: self.notes.clone(),
            tolerances,
        }
    }
}

/// Runs `cmd` on `cfg`. Errors from the requested stage propagate; a failed
/// Floquet analysis under `check`/`report` is recorded in the report instead.
pub fn run(cmd: Command, cfg: &RunConfig, ctx: &RunContext) -> Result<RunOutput> {
    let mut p = Pipeline::new(cfg, ctx)?;
    let orbit = p.orbit()?;
    let mut family = None;
    let mut floquet = None;
    let mut floquet_error = None;
    let mut hypotheses = None;
    let mut strings = None;

    match cmd {
        Command::FindOrbit => {}
        Command::Continue => family = Some(p.family(&orbit)?),
        Command::Floquet => floquet = Some(p.floquet(&orbit)?),
        Command::Check | Command::Report => {
            let f = p.floquet(&orbit);
            hypotheses = Some(check_hypotheses(&p.sys, &orbit, f.as_ref(), &cfg.hypotheses)?);
            match f {
                Ok(f) => floquet = Some(f),
                Err(e) => floquet_error = Some(ErrorInfo::from(&e)),
            }
            if cmd == Command::Report {
                let fam = p.family(&orbit)?;
                if floquet.is_some() {
                    strings = Some(p.strings(&fam)?);
                }
                family = Some(fam);
            }
        }
        Command::Resonances => {
            let fam = p.family(&orbit)?;
            strings = Some(p.strings(&fam)?);
            family = Some(fam);
        }
    }

    let report = RunReport {
        schema_version: SCHEMA_VERSION,
        command: cmd.name().into(),
        system: SystemSummary {
            kind: cfg.system.kind,
            parameters: cfg.system.parameters.clone(),
            dof: p.sys.dof(),
            system_hash: cfg.system.hash(),
        },
        orbit: Some(OrbitSummary::from(&orbit)),
        family: family.as_ref().map(FamilySummary::from),
        floquet: floquet.as_ref().map(FloquetTable::from),
        floquet_error,
        hypotheses,
        resonances: strings.as_ref().map(|s| ResonanceFragment::new(&cfg.resonances, s)),
        provenance: p.provenance(),
    };
    Ok(RunOutput {
        report,
        orbit: Some(orbit),
        family,
        strings,
    })
}

/// Writes the JSON report and CSV side channels into `dir`.
pub fn write_outputs(out: &RunOutput, cfg: &RunConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let name = cfg.output.report.replace("{command}", &out.report.command);
    let path = dir.join(name);
    fs::write(&path, out.report.to_json())?;
    written.push(path);
    if let Some(o) = &out.orbit {
        let path = dir.join(&cfg.output.orbit_csv);
        let sys = build_model(&cfg.system)?;
        o.samples.write_csv(&sys, fs::File::create(&path)?)?;
        written.push(path);
    }
    if let Some(f) = &out.family {
        let path = dir.join(&cfg.output.family_csv);
        f.write_csv(fs::File::create(&path)?)?;
        written.push(path);
    }
    if let Some(s) = &out.strings {
        let path = dir.join(&cfg.output.resonances_csv);
        s.write_csv(fs::File::create(&path)?)?;
        written.push(path);
    }
    Ok(written)
}

/// Human-readable hypothesis table.
pub fn render_check(r: &HypothesisReport) -> String {
    let mark = |b: bool| if b { "pass" } else { "FAIL" };
    let mut s = String::new();
    let rows = [
        ("principal type (X_H != 0 on orbit)", r.principal_type_ok),
        ("partially hyperbolic orbit", r.orbit_hyperbolic_ok),
        ("Williamson non-degenerate", r.williamson_ok),
        ("non-resonant exponents", r.nonresonance_ok),
        ("strongly non-resonant exponents", r.strong_nonresonance_ok),
    ];
    for (label, ok) in rows {
        let _ = writeln!(s, "{label:<38} {}", mark(ok));
    }
    let _ = writeln!(s, "hyperbolic dimension                   {}", r.hyperbolic_dimension);
    let _ = writeln!(s, "lattice bound K = {}, tolerance {:e}", r.k_bound, r.tolerance);
    for (k, w) in &r.witnesses {
        let _ = writeln!(s, "witness ({k}): {w:?}");
    }
    for (k, v) in &r.residuals {
        let _ = writeln!(s, "  {k:<34} {v:.6e}");
    }
    for (k, n) in &r.notes {
        let _ = writeln!(s, "note ({k}): {n}");
    }
    s
}

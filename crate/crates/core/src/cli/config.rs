//! Run configuration: TOML text, scenario defaults and command-line overrides.
//!
//! Precedence, highest first: command-line flags, the configuration file,
//! the defaults of the selected scenario.

use std::collections::HashMap;
use std::fmt;
use std::ops::Range;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use toml::Spanned;

use crate::analysis::HierarchySpec;
use crate::bounds::BoundParams;
use crate::expr::Expr;
use crate::solver::{GridMode, GridSpec, InitialData, ModelParams};

pub const CONFIG_SCHEMA: &str = "hfoil-config/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    ModelEvolution,
    LinearKgBound,
    LinearWaveBound,
    SobolevSuite,
    FrameIdentitySuite,
    ConvergenceSuite,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::ModelEvolution,
        Scenario::LinearKgBound,
        Scenario::LinearWaveBound,
        Scenario::SobolevSuite,
        Scenario::FrameIdentitySuite,
        Scenario::ConvergenceSuite,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            Scenario::ModelEvolution => "model-evolution",
            Scenario::LinearKgBound => "linear-kg-bound",
            Scenario::LinearWaveBound => "linear-wave-bound",
            Scenario::SobolevSuite => "sobolev-suite",
            Scenario::FrameIdentitySuite => "frame-identity-suite",
            Scenario::ConvergenceSuite => "convergence-suite",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    Zero,
    Bump,
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub mode: GridMode,
    pub dx: f64,
    pub courant: f64,
    /// Outer radius or half-width; sized from the run when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extent: Option<f64>,
}

impl GridConfig {
    /// Grid at spacing `dx` reaching at least `needed`.
    pub fn spec(&self, dx: f64, needed: f64) -> GridSpec {
        let extent = self.extent.unwrap_or(needed);
        GridSpec { mode: self.mode, extent, dx, courant: self.courant }
    }
}

/// Cauchy data on `t = t_init`, zero velocities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub profile: Profile,
    pub t_init: f64,
    pub eps_u: f64,
    pub eps_v: f64,
    /// Bump radius or Gaussian `σ`.
    pub width: f64,
    /// Centre of bump data; off-centre data needs a 3D grid.
    pub center: [f64; 3],
}

impl DataConfig {
    pub fn build(&self) -> InitialData {
        match self.profile {
            Profile::Zero => InitialData::zero(self.t_init),
            Profile::Gaussian => InitialData::gaussians(self.t_init, self.eps_u, self.eps_v, self.width),
            Profile::Bump => {
                let c = self.center;
                InitialData {
                    u0: Expr::radial_bump(self.eps_u, c, self.width),
                    v0: Expr::radial_bump(self.eps_v, c, self.width),
                    support_radius: (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt() + self.width,
                    ..InitialData::bumps(self.t_init, self.eps_u, self.eps_v, self.width)
                }
            }
        }
    }
}

/// Scenario knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub s_min: f64,
    pub until_s: f64,
    /// Number of log-spaced hyperboloids in `[s_min, until_s]`.
    pub slices: usize,
    pub t_min: f64,
    pub t_max: f64,
    /// Number of log-spaced flat times in `[t_min, t_max]`.
    pub samples: usize,
    /// Grids `dx, dx/2, …` in refinement studies.
    pub refinements: usize,
    pub kg_amplitudes: Vec<f64>,
    pub c_weights: Vec<f64>,
    pub wave_pairs: Vec<[f64; 2]>,
    pub drift_resolutions: Vec<f64>,
    /// Courant number of the radial energy-drift runs.
    pub drift_courant: f64,
    pub members: usize,
    pub snapshot: bool,
}

/// Flat-slice decay companion runs of model-evolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayConfig {
    pub enabled: bool,
    pub dx: f64,
    pub width: f64,
    pub t_init: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub schema: String,
    pub scenario: Scenario,
    /// At most `i64::MAX`, the TOML integer range.
    pub seed: u64,
    pub deterministic: bool,
    pub out: PathBuf,
    pub grid: GridConfig,
    pub model: ModelParams,
    pub data: DataConfig,
    pub hierarchy: HierarchySpec,
    pub bounds: BoundParams,
    pub run: RunSpec,
    pub decay: DecayConfig,
}

impl RunConfig {
    pub fn defaults(scenario: Scenario) -> RunConfig {
        let grid = |mode, dx| GridConfig { mode, dx, courant: 0.5, extent: None };
        let data = |profile, t_init, eps_u, eps_v, width| DataConfig {
            profile,
            t_init,
            eps_u,
            eps_v,
            width,
            center: [0.0; 3],
        };
        let run = RunSpec {
            s_min: 12.3,
            until_s: 50.0,
            slices: 24,
            t_min: 10.0,
            t_max: 200.0,
            samples: 40,
            refinements: 2,
            kg_amplitudes: vec![0.0, 0.1],
            c_weights: vec![1.0, 10.0, 100.0],
            wave_pairs: vec![[0.5, 0.5], [0.5, -0.25]],
            drift_resolutions: vec![0.02, 0.01],
            drift_courant: 0.9,
            members: 10,
            snapshot: true,
        };
        let mut cfg = RunConfig {
            schema: CONFIG_SCHEMA.into(),
            scenario,
            seed: 0,
            deterministic: false,
            out: PathBuf::from("hfoil-out").join(scenario.id()),
            grid: grid(GridMode::Radial1d, 0.1),
            model: ModelParams::default(),
            data: data(Profile::Gaussian, 11.2, 0.01, 0.01, 1.0),
            hierarchy: HierarchySpec::default(),
            bounds: BoundParams::default(),
            run,
            decay: DecayConfig { enabled: true, dx: 0.025, width: 1.0, t_init: 5.0, t_min: 10.0, t_max: 200.0, samples: 60 },
        };
        match scenario {
            Scenario::ModelEvolution => {}
            Scenario::LinearKgBound => {
                cfg.grid = grid(GridMode::Radial1d, 0.025);
                cfg.model = ModelParams::free(1.0);
                cfg.data = data(Profile::Bump, 5.0, 0.0, 0.01, 3.5);
                cfg.run.s_min = 6.0;
                cfg.run.until_s = 20.0;
                cfg.run.slices = 20;
            }
            Scenario::LinearWaveBound => {
                cfg.grid = grid(GridMode::Radial1d, 0.05);
                cfg.model = ModelParams::free(1.0);
                cfg.data = data(Profile::Zero, 2.0, 0.0, 0.0, 1.0);
            }
            Scenario::SobolevSuite => {
                cfg.grid = grid(GridMode::Full3d, 0.04);
                cfg.run.s_min = 2.0;
                cfg.run.until_s = 20.0;
                cfg.run.slices = 8;
            }
            Scenario::FrameIdentitySuite => {
                cfg.grid = grid(GridMode::Full3d, 0.08);
                cfg.run.refinements = 3;
            }
            Scenario::ConvergenceSuite => {
                cfg.grid = grid(GridMode::Full3d, 0.1);
                cfg.model = ModelParams::isotropic(0.3, 0.2, 0.5, 0.1, -0.05, 1.0);
                cfg.data = data(Profile::Bump, 1.95, 1.0, 0.0, 0.9);
                cfg.run.refinements = 3;
                cfg.run.s_min = 2.0;
                cfg.run.until_s = 10.0;
                cfg.run.slices = 9;
            }
        }
        cfg
    }

    /// TOML echo of the resolved configuration.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Grids `dx, dx/2, …`.
    pub fn resolutions(&self) -> Vec<f64> {
        (0..self.run.refinements).map(|k| self.grid.dx / f64::powi(2.0, k as i32)).collect()
    }

    fn validate(&self, spans: &Spans) -> Result<(), ConfigError> {
        let bad = |field: &str, msg: String| Err(spans.invalid(field, msg));
        let g = &self.grid;
        if !(g.dx > 0.0 && g.dx.is_finite()) {
            return bad("grid.dx", format!("must be > 0, got {}", g.dx));
        }
        let limit = GridSpec { mode: g.mode, extent: 1.0, dx: g.dx, courant: g.courant }.courant_limit();
        if !(g.courant > 0.0 && g.courant <= limit) {
            return bad("grid.courant", format!("must lie in (0, {limit}] for this grid mode, got {}", g.courant));
        }
        if let Some(e) = g.extent {
            if !(e > g.dx) {
                return bad("grid.extent", format!("must exceed dx, got {e}"));
            }
        }
        if let Err(e) = self.model.validate() {
            return bad("model", e.to_string());
        }
        let d = &self.data;
        if !(d.width > 0.0) {
            return bad("data.width", format!("must be > 0, got {}", d.width));
        }
        if !(d.eps_u.is_finite() && d.eps_v.is_finite()) {
            return bad("data.eps_u", "amplitudes must be finite".into());
        }
        if d.center != [0.0; 3] {
            if g.mode == GridMode::Radial1d {
                return bad("data.center", "off-centre data needs grid.mode = \"full-3d\"".into());
            }
            if d.profile != Profile::Bump {
                return bad("data.center", "only bump data can be moved off the origin".into());
            }
        }
        if d.profile != Profile::Zero {
            if let Err(e) = d.build().validate(0.0) {
                return bad("data.t_init", e.to_string());
            }
        }
        if let Err(e) = self.hierarchy.validate() {
            let field = if !(self.hierarchy.delta > 0.0 && self.hierarchy.delta < 0.1) {
                "hierarchy.delta"
            } else if self.hierarchy.n < 8 {
                "hierarchy.n"
            } else {
                "hierarchy"
            };
            return bad(field, e.to_string());
        }
        if let Err(e) = self.bounds.validate() {
            return bad("bounds", e.to_string());
        }
        if self.bounds.mass != self.model.c {
            return bad("bounds.mass", format!("must equal model.c = {}, got {}", self.model.c, self.bounds.mass));
        }
        let r = &self.run;
        if !(r.s_min > 1.0 && r.until_s > r.s_min) {
            return bad("run.until_s", format!("need 1 < s_min < until_s, got [{}, {}]", r.s_min, r.until_s));
        }
        if !(r.t_min > 0.0 && r.t_max > r.t_min) {
            return bad("run.t_max", format!("need 0 < t_min < t_max, got [{}, {}]", r.t_min, r.t_max));
        }
        if r.slices < 2 || r.samples < 2 {
            return bad("run.slices", "slices and samples must be >= 2".into());
        }
        if r.refinements < 2 {
            return bad("run.refinements", format!("must be >= 2, got {}", r.refinements));
        }
        if r.members == 0 {
            return bad("run.members", "must be >= 1".into());
        }
        if r.c_weights.iter().any(|c| !(*c > 0.0)) || r.c_weights.is_empty() {
            return bad("run.c_weights", "need at least one weight, all > 0".into());
        }
        if self.seed > i64::MAX as u64 {
            return bad("seed", format!("must be at most {}", i64::MAX));
        }
        if r.drift_resolutions.len() < 2 || r.drift_resolutions.iter().any(|d| !(*d > 0.0)) {
            return bad("run.drift_resolutions", "need two or more spacings > 0".into());
        }
        if !(r.drift_courant > 0.0 && r.drift_courant <= 0.9) {
            return bad("run.drift_courant", format!("must lie in (0, 0.9], got {}", r.drift_courant));
        }
        let k = &self.decay;
        if !(k.dx > 0.0 && k.width > 0.0 && k.width < k.t_init - 1.0 && k.t_max > k.t_min && k.samples >= 2) {
            return bad("decay", "need dx > 0, 0 < width < t_init - 1, t_min < t_max, samples >= 2".into());
        }
        let radial_only = matches!(
            self.scenario,
            Scenario::ModelEvolution | Scenario::LinearKgBound | Scenario::LinearWaveBound
        );
        if radial_only && g.mode != GridMode::Radial1d {
            return bad("grid.mode", format!("{} records radial profiles and needs \"radial-1d\"", self.scenario));
        }
        if self.scenario == Scenario::LinearKgBound && self.bounds.s0 != d.t_init {
            return bad("bounds.s0", format!("must equal data.t_init = {}, got {}", d.t_init, self.bounds.s0));
        }
        if self.scenario == Scenario::LinearWaveBound && r.t_min < 2.0 {
            return bad("run.t_min", "the wave envelope needs t >= 2".into());
        }
        Ok(())
    }
}

/// Command-line values that replace configuration fields.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub scenario: Option<Scenario>,
    pub resolution: Option<f64>,
    pub epsilon: Option<f64>,
    pub until_s: Option<f64>,
    pub deterministic: bool,
    pub out: Option<PathBuf>,
}

impl Overrides {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(dx) = self.resolution {
            cfg.grid.dx = dx;
        }
        if let Some(e) = self.epsilon {
            if cfg.data.eps_u != 0.0 {
                cfg.data.eps_u = e;
            }
            if cfg.data.eps_v != 0.0 {
                cfg.data.eps_v = e;
            }
            cfg.hierarchy.epsilon = e;
        }
        if let Some(s) = self.until_s {
            cfg.run.until_s = s;
        }
        if self.deterministic {
            cfg.deterministic = true;
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("{}{field}: {message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Invalid { field: String, line: Option<usize>, message: String },
}

/// Source spans of the keys present in the text.
struct Spans<'a> {
    text: &'a str,
    map: HashMap<&'static str, Range<usize>>,
}

impl Spans<'_> {
    fn line_col(&self, offset: usize) -> (usize, usize) {
        let before = &self.text[..offset.min(self.text.len())];
        let line = before.matches('\n').count() + 1;
        let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
        (line, column)
    }

    fn invalid(&self, field: &str, message: String) -> ConfigError {
        let line = self.map.iter().find(|(k, _)| **k == field || k.starts_with(&format!("{field}."))).map(|(_, s)| self.line_col(s.start).0);
        ConfigError::Invalid { field: field.into(), line, message }
    }
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    schema: Option<Spanned<String>>,
    scenario: Option<Spanned<Scenario>>,
    seed: Option<Spanned<u64>>,
    deterministic: Option<Spanned<bool>>,
    out: Option<Spanned<PathBuf>>,
    #[serde(default)]
    grid: RawGrid,
    #[serde(default)]
    model: RawModel,
    #[serde(default)]
    data: RawData,
    #[serde(default)]
    hierarchy: RawHierarchy,
    #[serde(default)]
    bounds: RawBounds,
    #[serde(default)]
    run: RawRun,
    #[serde(default)]
    decay: RawDecay,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    mode: Option<Spanned<GridMode>>,
    dx: Option<Spanned<f64>>,
    courant: Option<Spanned<f64>>,
    extent: Option<Spanned<f64>>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawModel {
    p: Option<Spanned<[[f64; 4]; 4]>>,
    r: Option<Spanned<f64>>,
    h: Option<Spanned<[[f64; 4]; 4]>>,
    c: Option<Spanned<f64>>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawData {
    profile: Option<Spanned<Profile>>,
    t_init: Option<Spanned<f64>>,
    eps_u: Option<Spanned<f64>>,
    eps_v: Option<Spanned<f64>>,
    width: Option<Spanned<f64>>,
    center: Option<Spanned<[f64; 3]>>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawHierarchy {
    n: Option<Spanned<u32>>,
    delta: Option<Spanned<f64>>,
    c1: Option<Spanned<f64>>,
    epsilon: Option<Spanned<f64>>,
    tolerance: Option<Spanned<f64>>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawBounds {
    c_weight: Option<Spanned<f64>>,
    mass: Option<Spanned<f64>>,
    dl: Option<Spanned<f64>>,
    s0: Option<Spanned<f64>>,
    mu: Option<Spanned<f64>>,
    nu: Option<Spanned<f64>>,
    include_remainder: Option<Spanned<bool>>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawRun {
    s_min: Option<Spanned<f64>>,
    until_s: Option<Spanned<f64>>,
    slices: Option<Spanned<usize>>,
    t_min: Option<Spanned<f64>>,
    t_max: Option<Spanned<f64>>,
    samples: Option<Spanned<usize>>,
    refinements: Option<Spanned<usize>>,
    kg_amplitudes: Option<Spanned<Vec<f64>>>,
    c_weights: Option<Spanned<Vec<f64>>>,
    wave_pairs: Option<Spanned<Vec<[f64; 2]>>>,
    drift_resolutions: Option<Spanned<Vec<f64>>>,
    drift_courant: Option<Spanned<f64>>,
    members: Option<Spanned<usize>>,
    snapshot: Option<Spanned<bool>>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawDecay {
    enabled: Option<Spanned<bool>>,
    dx: Option<Spanned<f64>>,
    width: Option<Spanned<f64>>,
    t_init: Option<Spanned<f64>>,
    t_min: Option<Spanned<f64>>,
    t_max: Option<Spanned<f64>>,
    samples: Option<Spanned<usize>>,
}

macro_rules! overlay {
    ($spans:expr, $section:literal, $raw:expr => $dst:expr; $($f:ident),+) => {
        $(
            if let Some(v) = $raw.$f {
                $spans.insert(concat!($section, ".", stringify!($f)), v.span());
                $dst.$f = v.into_inner();
            }
        )+
    };
}

/// Parses configuration text with the default overrides.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    parse_config_with(text, &Overrides::default())
}

/// Parses configuration text, fills the scenario defaults, applies the
/// command-line overrides and validates the result.
pub fn parse_config_with(text: &str, overrides: &Overrides) -> Result<RunConfig, ConfigError> {
    let mut spans = Spans { text, map: HashMap::new() };
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((1, 1), |s| spans.line_col(s.start));
        ConfigError::Syntax { line, column, message: e.message().to_string() }
    })?;
    if let Some(s) = &raw.schema {
        if s.get_ref() != CONFIG_SCHEMA {
            spans.map.insert("schema", s.span());
            return Err(spans.invalid("schema", format!("expected \"{CONFIG_SCHEMA}\", got \"{}\"", s.get_ref())));
        }
    }
    let scenario = overrides
        .scenario
        .or(raw.scenario.as_ref().map(|s| *s.get_ref()))
        .unwrap_or(Scenario::ModelEvolution);
    let mut cfg = RunConfig::defaults(scenario);
    let m = &mut spans.map;
    if let Some(v) = raw.seed {
        m.insert("seed", v.span());
        cfg.seed = v.into_inner();
    }
    if let Some(v) = raw.deterministic {
        m.insert("deterministic", v.span());
        cfg.deterministic = v.into_inner();
    }
    if let Some(v) = raw.out {
        m.insert("out", v.span());
        cfg.out = v.into_inner();
    }
    let (g, md, d, h, b, r, k) = (raw.grid, raw.model, raw.data, raw.hierarchy, raw.bounds, raw.run, raw.decay);
    overlay!(m, "grid", g => cfg.grid; mode, dx, courant);
    if let Some(v) = g.extent {
        m.insert("grid.extent", v.span());
        cfg.grid.extent = Some(v.into_inner());
    }
    overlay!(m, "model", md => cfg.model; p, r, h, c);
    overlay!(m, "data", d => cfg.data; profile, t_init, eps_u, eps_v, width, center);
    overlay!(m, "hierarchy", h => cfg.hierarchy; n, delta, c1, epsilon, tolerance);
    overlay!(m, "bounds", b => cfg.bounds; c_weight, mass, dl, s0, mu, nu, include_remainder);
    overlay!(m, "run", r => cfg.run; s_min, until_s, slices, t_min, t_max, samples, refinements, kg_amplitudes,
        c_weights, wave_pairs, drift_resolutions, drift_courant, members, snapshot);
    overlay!(m, "decay", k => cfg.decay; enabled, dx, width, t_init, t_min, t_max, samples);
    if m.contains_key("model.c") && !m.contains_key("bounds.mass") {
        cfg.bounds.mass = cfg.model.c;
    }
    if scenario == Scenario::LinearKgBound && m.contains_key("data.t_init") && !m.contains_key("bounds.s0") {
        cfg.bounds.s0 = cfg.data.t_init;
    }
    overrides.apply(&mut cfg);
    cfg.model = ModelParams::new(cfg.model.p, cfg.model.r, cfg.model.h, cfg.model.c)
        .map_err(|e| spans.invalid("model", e.to_string()))?;
    cfg.validate(&spans)?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_model_evolution_defaults() {
        let cfg = parse_config("").unwrap();
        assert_eq!(cfg, RunConfig::defaults(Scenario::ModelEvolution));
        assert_eq!(cfg.hierarchy.n, 8);
        assert_eq!(cfg.hierarchy.delta, 0.02);
        assert_eq!(cfg.model.c, 1.0);
        assert_eq!(cfg.bounds.c_weight, 10.0);
        assert_eq!(cfg.grid.courant, 0.5);
    }

    #[test]
    fn large_delta_is_rejected_with_its_line() {
        let err = parse_config("scenario = \"model-evolution\"\n\n[hierarchy]\ndelta = 0.2\n").unwrap_err();
        match err {
            ConfigError::Invalid { field, line, .. } => {
                assert_eq!(field, "hierarchy.delta");
                assert_eq!(line, Some(4));
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn radial_grid_rejects_off_centre_data() {
        let text = "[grid]\nmode = \"radial-1d\"\n[data]\nprofile = \"bump\"\ncenter = [0.5, 0.0, 0.0]\n";
        let err = parse_config(text).unwrap_err();
        assert!(matches!(&err, ConfigError::Invalid { field, line: Some(5), .. } if field == "data.center"), "{err}");
    }

    #[test]
    fn unknown_keys_and_bad_types_report_positions() {
        let err = parse_config("seed = 1\n[grid]\nspacing = 0.1\n").unwrap_err();
        assert!(matches!(err, ConfigError::Syntax { line: 3, .. }), "{err}");
        let err = parse_config("[data]\nwidth = \"wide\"\n").unwrap_err();
        assert!(matches!(err, ConfigError::Syntax { line: 2, .. }), "{err}");
    }

    #[test]
    fn flags_override_the_file() {
        let text = "scenario = \"linear-kg-bound\"\n[grid]\ndx = 0.05\n[run]\nuntil_s = 12.0\n";
        let o = Overrides {
            resolution: Some(0.02),
            until_s: Some(15.0),
            epsilon: Some(0.001),
            deterministic: true,
            ..Default::default()
        };
        let cfg = parse_config_with(text, &o).unwrap();
        assert_eq!(cfg.scenario, Scenario::LinearKgBound);
        assert_eq!(cfg.grid.dx, 0.02);
        assert_eq!(cfg.run.until_s, 15.0);
        assert_eq!((cfg.data.eps_u, cfg.data.eps_v), (0.0, 0.001));
        assert!(cfg.deterministic);
        let cfg = parse_config_with(text, &Overrides { scenario: Some(Scenario::SobolevSuite), ..Default::default() });
        assert!(cfg.is_ok());
    }

    #[test]
    fn echo_round_trips() {
        for s in Scenario::ALL {
            let cfg = RunConfig::defaults(s);
            let back = parse_config(&cfg.to_toml()).unwrap();
            assert_eq!(back, cfg, "{s}");
        }
    }

    #[test]
    fn kg_scenario_needs_radial_grid() {
        let err = parse_config("scenario = \"linear-kg-bound\"\n[grid]\nmode = \"full-3d\"\n").unwrap_err();
        assert!(matches!(&err, ConfigError::Invalid { field, .. } if field == "grid.mode"), "{err}");
    }
}

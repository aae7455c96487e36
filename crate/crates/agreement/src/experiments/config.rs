//! Experiment configuration: TOML sections, preset defaults, overrides and validation.
//!
//! Values are layered in this order, later layers winning:
//! preset defaults, then the config file, then `--set key=value`, then `--seed`/`--out`.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use toml::{Table, Value};

use super::presets::{preset, preset_names, Preset};
use crate::complex::{builtin, SimplicialComplex};
use crate::list_decoder::PipelineParams;
use crate::stats::Mode;

pub const BUILTINS: [&str; 5] = ["complete", "projective-plane", "torus", "hexagon-cone", "kneser"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub key: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

fn list_diagnostics(diags: &[Diagnostic]) -> String {
    diags.iter().map(|d| format!("  {d}")).collect::<Vec<_>>().join("\n")
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown preset `{name}`; available presets: {}", .available.join(", "))]
    UnknownPreset { name: String, available: Vec<String> },
    #[error("no preset given; name one on the command line or set `preset` in the file")]
    NoPreset,
    #[error("the file names preset `{file}` but `{requested}` was requested")]
    PresetMismatch { file: String, requested: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{origin}: {message}")]
    Parse { origin: String, message: String },
    #[error("--set {0}: expected key=value")]
    BadOverride(String),
    #[error("invalid configuration:\n{}", list_diagnostics(.0))]
    Invalid(Vec<Diagnostic>),
}

/// Which complex to build. Exactly one of `builtin` and `facets` is set.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComplexSpec {
    pub builtin: Option<String>,
    /// Facet file: an `n d` header line, then one facet per line.
    pub facets: Option<PathBuf>,
    pub n: Option<usize>,
    pub d: Option<usize>,
    /// Subset size of the Kneser graph.
    pub t: Option<usize>,
}

impl ComplexSpec {
    pub fn complete(n: usize, d: usize) -> ComplexSpec {
        ComplexSpec {
            builtin: Some("complete".into()),
            n: Some(n),
            d: Some(d),
            ..ComplexSpec::default()
        }
    }

    pub fn named(name: &str) -> ComplexSpec {
        ComplexSpec {
            builtin: Some(name.into()),
            ..ComplexSpec::default()
        }
    }

    pub fn kneser(n: usize, t: usize) -> ComplexSpec {
        ComplexSpec {
            builtin: Some("kneser".into()),
            n: Some(n),
            t: Some(t),
            ..ComplexSpec::default()
        }
    }

    pub fn is_kneser(&self) -> bool {
        self.builtin.as_deref() == Some("kneser")
    }

    /// Build the complex. Kneser specs are graphs, not complexes, and are refused here.
    pub fn build(&self) -> Result<SimplicialComplex, String> {
        if let Some(path) = &self.facets {
            let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            return SimplicialComplex::parse_facet_file(&text).map_err(|e| format!("{}: {e}", path.display()));
        }
        match self.builtin.as_deref() {
            Some("complete") => {
                let (n, d) = (self.n.unwrap_or(0), self.d.unwrap_or(0));
                SimplicialComplex::complete(n, d).map_err(|e| e.to_string())
            }
            Some("projective-plane") => Ok(builtin::projective_plane()),
            Some("torus") => Ok(builtin::torus()),
            Some("hexagon-cone") => Ok(builtin::hexagon_cone()),
            Some(other) => Err(format!("`{other}` does not name a complex")),
            None => Err("no complex given".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TesterParams {
    pub k: usize,
    pub s: usize,
    /// Tolerated disagreement fraction when measuring agreement with a global function.
    pub nu: f64,
    pub trials: u64,
    pub mode: Mode,
}

impl Default for TesterParams {
    fn default() -> TesterParams {
        TesterParams {
            k: 4,
            s: 2,
            nu: 0.0,
            trials: 100_000,
            mode: Mode::Exact,
        }
    }
}

/// Sizes of the planted inputs a preset generates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixtureParams {
    pub instances: usize,
    /// Planted list length or alphabet size.
    pub m: usize,
    /// Fraction of faces replaced by noise.
    pub noise: f64,
    /// Hamming distance, in vertices, between planted functions.
    pub distance: usize,
    pub planted_fraction: f64,
    /// Vertices kept by each random restriction.
    pub restrict_to: usize,
    /// Lower level of the down-up walk.
    pub level: usize,
}

impl Default for FixtureParams {
    fn default() -> FixtureParams {
        FixtureParams {
            instances: 20,
            m: 2,
            noise: 0.0,
            distance: 0,
            planted_fraction: 0.5,
            restrict_to: 0,
            level: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunParams {
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for RunParams {
    fn default() -> RunParams {
        RunParams {
            seed: 1,
            out: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub preset: String,
    pub complex: ComplexSpec,
    /// Second complex: a control, a companion or a smaller variant, depending on the preset.
    pub control: Option<ComplexSpec>,
    pub tester: TesterParams,
    pub fixture: FixtureParams,
    pub pipeline: PipelineParams,
    pub run: RunParams,
}

impl ExperimentConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn from_toml(text: &str) -> Result<ExperimentConfig, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            origin: "config".into(),
            message: e.to_string(),
        })
    }

    /// SHA-256 of the canonical TOML form, ignoring the output directory.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.run.out = PathBuf::new();
        let digest = Sha256::digest(canonical.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    /// `key=value` pairs with dotted keys, e.g. `tester.k=6`.
    pub set: Vec<String>,
}

/// Whether `section` names its own complex source, in which case it replaces the
/// default section instead of being merged into it.
fn names_source(key: &str, section: &Table) -> bool {
    matches!(key, "complex" | "control") && (section.contains_key("builtin") || section.contains_key("facets"))
}

fn merge(base: &mut Table, top: Table) {
    for (key, value) in top {
        match (base.get_mut(&key), value) {
            (Some(Value::Table(_)), Value::Table(t)) if names_source(&key, &t) => {
                base.insert(key, Value::Table(t));
            }
            (Some(Value::Table(b)), Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

fn parse_scalar(text: &str) -> Value {
    match format!("v = {text}").parse::<Table>() {
        Ok(mut t) => t.remove("v").expect("key parsed"),
        Err(_) => Value::String(text.to_string()),
    }
}

fn apply_set(table: &mut Table, pair: &str) -> Result<(), ConfigError> {
    let (key, value) = pair
        .split_once('=')
        .ok_or_else(|| ConfigError::BadOverride(pair.to_string()))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(ConfigError::BadOverride(pair.to_string()));
    }
    let mut cur = table;
    for part in &path[..path.len() - 1] {
        let slot = cur
            .entry(part.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        cur = match slot {
            Value::Table(t) => t,
            _ => {
                return Err(ConfigError::Parse {
                    origin: format!("--set {key}"),
                    message: format!("`{part}` is not a section"),
                })
            }
        };
    }
    let last = path[path.len() - 1];
    if path.len() == 2 && matches!(path[0], "complex" | "control") && matches!(last, "builtin" | "facets") {
        cur.clear();
    }
    cur.insert(last.to_string(), parse_scalar(value.trim()));
    Ok(())
}

fn read_file(path: &Path) -> Result<Table, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let origin = path.display().to_string();
    let parse = |message: String| ConfigError::Parse {
        origin: origin.clone(),
        message,
    };
    // Typed pass first so unknown keys and wrong types carry a line and column.
    toml::from_str::<ExperimentConfig>(&text).map_err(|e| parse(e.to_string()))?;
    text.parse::<Table>().map_err(|e| parse(e.to_string()))
}

/// Resolve the layered configuration for `preset` (or the file's `preset` key) and
/// validate it.
pub fn resolve(requested: Option<&str>, overrides: &Overrides) -> Result<ExperimentConfig, ConfigError> {
    let file = overrides.config.as_deref().map(read_file).transpose()?;
    let from_file = file
        .as_ref()
        .and_then(|t| t.get("preset"))
        .and_then(Value::as_str)
        .map(str::to_string);
    let name = match (requested, from_file) {
        (Some(r), Some(f)) if r != f => {
            return Err(ConfigError::PresetMismatch {
                file: f,
                requested: r.to_string(),
            })
        }
        (Some(r), _) => r.to_string(),
        (None, Some(f)) => f,
        (None, None) => return Err(ConfigError::NoPreset),
    };
    let preset = preset(&name).ok_or_else(|| ConfigError::UnknownPreset {
        name: name.clone(),
        available: preset_names().iter().map(|s| s.to_string()).collect(),
    })?;
    let mut table = Table::try_from(preset.defaults()).expect("defaults serialize");
    if let Some(file) = file {
        merge(&mut table, file);
    }
    for pair in &overrides.set {
        apply_set(&mut table, pair)?;
    }
    let mut cfg: ExperimentConfig = table.try_into().map_err(|e: toml::de::Error| ConfigError::Parse {
        origin: "overrides".into(),
        message: e.to_string(),
    })?;
    if let Some(seed) = overrides.seed {
        cfg.run.seed = seed;
    }
    if let Some(out) = &overrides.out {
        cfg.run.out = out.clone();
    }
    let diags = validate(&cfg);
    if diags.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigError::Invalid(diags))
    }
}

/// Parse and range-check the file at `path`; the preset comes from its `preset` key.
pub fn validate_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    resolve(
        None,
        &Overrides {
            config: Some(path.to_path_buf()),
            ..Overrides::default()
        },
    )
}

struct Checker {
    diags: Vec<Diagnostic>,
}

impl Checker {
    fn fail(&mut self, key: &str, message: impl Into<String>) {
        self.diags.push(Diagnostic {
            key: key.to_string(),
            message: message.into(),
        });
    }

    fn unit(&mut self, key: &str, v: f64) {
        if !(0.0..=1.0).contains(&v) {
            self.fail(key, format!("{v} is outside [0, 1]"));
        }
    }

    fn positive(&mut self, key: &str, v: u64) {
        if v == 0 {
            self.fail(key, "must be at least 1");
        }
    }
}

/// `(n, d)` of the complex, or `(n, t)` for a Kneser spec, when it can be determined.
fn check_complex(c: &mut Checker, section: &str, spec: &ComplexSpec) -> Option<(usize, usize)> {
    let key = |k: &str| format!("{section}.{k}");
    match (&spec.builtin, &spec.facets) {
        (Some(_), Some(_)) => {
            c.fail(&format!("{section}.builtin, {section}.facets"), "set exactly one of the two");
            return None;
        }
        (None, None) => {
            c.fail(&format!("{section}.builtin, {section}.facets"), "one of the two is required");
            return None;
        }
        _ => {}
    }
    if let Some(path) = &spec.facets {
        for (k, v) in [("n", spec.n), ("d", spec.d), ("t", spec.t)] {
            if v.is_some() {
                c.fail(&key(k), "is read from the facet file header, remove it");
            }
        }
        return match std::fs::read_to_string(path) {
            Err(e) => {
                c.fail(&key("facets"), format!("cannot read {}: {e}", path.display()));
                None
            }
            Ok(text) => match SimplicialComplex::parse_facet_file(&text) {
                Ok(x) => Some((x.n(), x.d())),
                Err(e) => {
                    c.fail(&key("facets"), format!("{}: {e}", path.display()));
                    None
                }
            },
        };
    }
    let name = spec.builtin.as_deref().unwrap_or_default();
    let unused = |c: &mut Checker, fields: &[(&str, Option<usize>)]| {
        for (k, v) in fields {
            if v.is_some() {
                c.fail(&key(k), format!("is not used by `{name}`"));
            }
        }
    };
    match name {
        "complete" => {
            unused(c, &[("t", spec.t)]);
            let (Some(n), Some(d)) = (spec.n, spec.d) else {
                c.fail(&format!("{section}.n, {section}.d"), "`complete` needs both n and d");
                return None;
            };
            if d == 0 || d > n || n > 64 {
                c.fail(&format!("{section}.n, {section}.d"), format!("need 1 <= d <= n <= 64, got n={n}, d={d}"));
                return None;
            }
            Some((n, d))
        }
        "kneser" => {
            unused(c, &[("d", spec.d)]);
            let (Some(n), Some(t)) = (spec.n, spec.t) else {
                c.fail(&format!("{section}.n, {section}.t"), "`kneser` needs both n and t");
                return None;
            };
            if t == 0 || 2 * t > n || n > 64 {
                c.fail(&format!("{section}.n, {section}.t"), format!("need 1 <= t and 2t <= n <= 64, got n={n}, t={t}"));
                return None;
            }
            Some((n, t))
        }
        "projective-plane" | "torus" | "hexagon-cone" => {
            unused(c, &[("n", spec.n), ("d", spec.d), ("t", spec.t)]);
            spec.build().ok().map(|x| (x.n(), x.d()))
        }
        other => {
            c.fail(&key("builtin"), format!("unknown complex `{other}`; known: {}", BUILTINS.join(", ")));
            None
        }
    }
}

fn check_levels(c: &mut Checker, section: &str, k: usize, s: usize, d: Option<usize>) {
    if s > k {
        c.fail(&format!("{section}.s, {section}.k"), format!("{section}.s = {s} exceeds {section}.k = {k}"));
    }
    if k == 0 {
        c.fail(&format!("{section}.k"), "must be at least 1");
    }
    if let Some(d) = d {
        if k > d {
            c.fail(&format!("{section}.k, complex.d"), format!("{section}.k = {k} exceeds the complex dimension {d}"));
        }
    }
}

fn check_pipeline(c: &mut Checker, p: &PipelineParams, d: Option<usize>) {
    check_levels(c, "pipeline", p.k, p.s, d);
    c.unit("pipeline.nu", p.nu);
    if !(p.delta > 0.0 && p.delta <= 1.0) {
        c.fail("pipeline.delta", format!("{} is outside (0, 1]", p.delta));
    }
    if !(0.0..0.5).contains(&p.eta) {
        c.fail("pipeline.eta", format!("{} is outside [0, 0.5)", p.eta));
    }
    if let Some(step) = p.decrement {
        if !(0.0..=p.delta).contains(&step) {
            c.fail("pipeline.decrement, pipeline.delta", format!("decrement {step} must lie in [0, delta]"));
        }
    }
    for (key, v) in [
        ("pipeline.local_threshold", p.local_threshold),
        ("pipeline.min_good_fraction", p.min_good_fraction),
        ("pipeline.johnson_threshold", p.johnson_threshold),
        ("pipeline.list_threshold", p.list_threshold),
        ("pipeline.majority_threshold", p.majority_threshold),
        ("pipeline.stability_min", p.stability_min),
        ("pipeline.arbitrary_max", p.arbitrary_max),
        ("pipeline.c_threshold", p.c_threshold),
    ] {
        c.unit(key, v);
    }
    for (key, v) in [
        ("pipeline.rounds", p.rounds as u64),
        ("pipeline.round_grid", p.round_grid as u64),
        ("pipeline.radius_steps", p.radius_steps as u64),
        ("pipeline.local_faces", p.local_faces as u64),
        ("pipeline.local_trials", p.local_trials),
        ("pipeline.scan_trials", p.scan_trials),
        ("pipeline.subfaces_per_face", p.subfaces_per_face as u64),
        ("pipeline.list_trials", p.list_trials),
        ("pipeline.pool", p.pool as u64),
        ("pipeline.min_support", p.min_support as u64),
        ("pipeline.audit_trials", p.audit_trials),
        ("pipeline.r_trials", p.r_trials),
        ("pipeline.t", p.t as u64),
    ] {
        c.positive(key, v);
    }
    if let Some(d) = d {
        if 3 * p.t > d {
            c.fail("pipeline.t, complex.d", format!("need 3t <= d, got t={}, d={d}", p.t));
        }
        if let Some(size) = p.sub_face {
            if size < p.k || size > d {
                c.fail("pipeline.sub_face", format!("{size} is outside [pipeline.k, d] = [{}, {d}]", p.k));
            }
        }
    }
}

/// Every diagnostic for `cfg`; empty when the configuration is usable.
pub fn validate(cfg: &ExperimentConfig) -> Vec<Diagnostic> {
    let mut c = Checker { diags: Vec::new() };
    let Some(preset) = preset(&cfg.preset) else {
        c.fail(
            "preset",
            format!("unknown preset `{}`; available: {}", cfg.preset, preset_names().join(", ")),
        );
        return c.diags;
    };
    let sizes = check_complex(&mut c, "complex", &cfg.complex);
    if cfg.complex.is_kneser() != (preset == Preset::KneserPropagation) {
        c.fail(
            "complex.builtin",
            if cfg.complex.is_kneser() {
                "`kneser` is only used by kneser-propagation"
            } else {
                "kneser-propagation needs `builtin = \"kneser\"`"
            },
        );
    }
    let control = match &cfg.control {
        Some(spec) => {
            if spec.is_kneser() {
                c.fail("control.builtin", "the control must be a complex");
            }
            check_complex(&mut c, "control", spec)
        }
        None => {
            if preset.uses_control() {
                c.fail("control", format!("{} needs a [control] complex", preset.name()));
            }
            None
        }
    };
    let d = sizes.filter(|_| !cfg.complex.is_kneser()).map(|(_, d)| d);
    let n = sizes.map(|(n, _)| n);
    let t = &cfg.tester;
    if preset.uses_tester() {
        check_levels(&mut c, "tester", t.k, t.s, d);
        if let Some((_, cd)) = control.filter(|_| preset.tests_control()) {
            if t.k > cd {
                c.fail("tester.k, control.d", format!("tester.k = {} exceeds the control dimension {cd}", t.k));
            }
        }
        c.unit("tester.nu", t.nu);
        if t.mode == Mode::MonteCarlo {
            c.positive("tester.trials", t.trials);
        }
    }
    if preset.uses_pipeline() {
        check_pipeline(&mut c, &cfg.pipeline, if preset == Preset::DecodeEndToEnd { d } else { None });
    }
    let f = &cfg.fixture;
    c.unit("fixture.noise", f.noise);
    c.unit("fixture.planted_fraction", f.planted_fraction);
    c.positive("fixture.instances", f.instances as u64);
    if !(1..=crate::perm::MAX_ALPHABET).contains(&f.m) {
        c.fail("fixture.m", format!("{} is outside 1..={}", f.m, crate::perm::MAX_ALPHABET));
    }
    match preset {
        Preset::PlantedAdversary if f.m > 2 => c.fail(
            "fixture.m",
            "planted lists on single vertices hold at most 2 distinct functions",
        ),
        Preset::ShortlistRecovery => {
            if let Some(n) = n.filter(|&n| f.distance > n) {
                c.fail("fixture.distance", format!("{} exceeds the {n} vertices", f.distance));
            }
            if f.distance == 0 {
                c.fail("fixture.distance", "planted functions must differ");
            }
        }
        Preset::SubinstanceStability => {
            if cfg.complex.builtin.as_deref() != Some("complete") {
                c.fail("complex.builtin", "the dense instance lives on a complete complex");
            }
            if let Some(n) = n {
                if f.restrict_to < t.k || f.restrict_to > n {
                    c.fail("fixture.restrict_to", format!("{} is outside [tester.k, n] = [{}, {n}]", f.restrict_to, t.k));
                } else if f.restrict_to > crate::assignment::EXHAUSTIVE_MAX_VERTICES {
                    c.fail(
                        "fixture.restrict_to",
                        format!("exact values need at most {} vertices", crate::assignment::EXHAUSTIVE_MAX_VERTICES),
                    );
                }
            }
        }
        Preset::SpectralAudit => {
            if let Some(d) = d.filter(|&d| f.level == 0 || f.level > d) {
                c.fail("fixture.level", format!("{} is outside 1..={d}", f.level));
            }
        }
        Preset::StrongWeakLaw => {
            if let Some(d) = d.filter(|&d| d < 3) {
                c.fail("complex.d", format!("triangles need d >= 3, got {d}"));
            }
        }
        _ => {}
    }
    c.diags
}

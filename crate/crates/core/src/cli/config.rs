//! Flat dotted-key configuration.
//!
//! Grammar, one entry per line:
//!
//! ```text
//! document := { line '\n' }
//! line     := blank | '#' comment | key '=' value [ '#' comment ]
//! key      := segment { '.' segment }        segment := [a-z0-9_]+
//! value    := number | number '/sqrt2' | list | word
//! list     := value { ',' value }
//! ```
//!
//! Values are resolved in layers: built-in defaults, then the preset named by
//! `preset`, then the document, then command-line overrides. Every resolved
//! key remembers where its value came from.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::liouville::{DissipationBasis, DissipationParams};
use crate::spikes::{RegimeConfig, SpikeConfig, SyncConfig};

/// Where a default value comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    /// Value printed in the published model description.
    Published,
    /// Physics choice the source leaves open.
    Assumption,
    /// Numerical or plumbing setting.
    Artifact,
}

impl Provenance {
    pub fn label(self) -> &'static str {
        match self {
            Provenance::Published => "published",
            Provenance::Assumption => "assumption",
            Provenance::Artifact => "artifact",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Source {
    Default(Provenance),
    Preset(String, Provenance),
    Line(usize),
    Override,
}

impl Source {
    /// Provenance of a value the user did not choose.
    pub fn provenance(&self) -> Option<Provenance> {
        match self {
            Source::Default(p) | Source::Preset(_, p) => Some(*p),
            _ => None,
        }
    }

    fn locate(&self) -> String {
        match self {
            Source::Default(_) => "default".into(),
            Source::Preset(name, _) => format!("preset {name}"),
            Source::Line(n) => format!("line {n}"),
            Source::Override => "command line".into(),
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Default(p) => write!(f, "default, {}", p.label()),
            Source::Preset(name, p) => write!(f, "preset {name}, {}", p.label()),
            Source::Line(n) => write!(f, "config line {n}"),
            Source::Override => f.write_str("command line"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Kind {
    Float,
    /// A float or the word given, which stands for a derived default.
    FloatOr(&'static str),
    Count,
    Bool,
    FloatList,
    Choice(&'static [&'static str]),
    Path,
}

struct KeySpec {
    key: &'static str,
    kind: Kind,
    default: Option<&'static str>,
    provenance: Provenance,
    note: &'static str,
}

const RUN_KINDS: &[&str] = &["spectrum", "g2", "flux", "imbalance", "spikes", "sweep"];
pub const PRESETS: &[&str] = &["fig2a", "fig2b", "fig3a", "fig3b", "fig3c", "fig4a", "fig4b"];

use Provenance::{Artifact, Assumption, Published};

const KEYS: &[KeySpec] = &[
    KeySpec { key: "preset", kind: Kind::Choice(PRESETS), default: None, provenance: Artifact, note: "" },
    KeySpec {
        key: "model.omega1",
        kind: Kind::Float,
        default: Some("1.0"),
        provenance: Assumption,
        note: "cavity 1 frequency is not given for the simulations",
    },
    KeySpec {
        key: "model.omega2",
        kind: Kind::Float,
        default: Some("0.9"),
        provenance: Assumption,
        note: "cavity 2 frequency is not given for the simulations",
    },
    KeySpec {
        key: "model.omega_q",
        kind: Kind::FloatOr("omega_eff"),
        default: Some("omega_eff"),
        provenance: Assumption,
        note: "qubit resonant with the privileged mode",
    },
    KeySpec {
        key: "model.k_eff",
        kind: Kind::Float,
        default: None,
        provenance: Published,
        note: "k_eff with k1 = k2 = k_eff/sqrt2",
    },
    KeySpec { key: "model.hopping", kind: Kind::FloatList, default: None, provenance: Published, note: "J, replaces c2" },
    KeySpec { key: "model.truncation", kind: Kind::Count, default: Some("6"), provenance: Artifact, note: "Fock levels per mode" },
    KeySpec {
        key: "model.dissipate_on",
        kind: Kind::Choice(&["normal", "bare"]),
        default: Some("normal"),
        provenance: Published,
        note: "damping acts on the normal modes",
    },
    KeySpec { key: "dissipation.kappa1", kind: Kind::Float, default: Some("0.001"), provenance: Published, note: "" },
    KeySpec { key: "dissipation.kappa2", kind: Kind::Float, default: Some("0.001"), provenance: Published, note: "" },
    KeySpec { key: "dissipation.gamma", kind: Kind::Float, default: Some("0.001"), provenance: Published, note: "" },
    KeySpec { key: "dissipation.gamma_phi", kind: Kind::Float, default: Some("0.01"), provenance: Published, note: "" },
    KeySpec { key: "dissipation.n_th", kind: Kind::Float, default: Some("0.15"), provenance: Published, note: "" },
    KeySpec { key: "run.kind", kind: Kind::Choice(RUN_KINDS), default: None, provenance: Artifact, note: "" },
    KeySpec {
        key: "run.tau_max",
        kind: Kind::Float,
        default: Some("60"),
        provenance: Assumption,
        note: "time axis extent is not printed",
    },
    KeySpec { key: "run.dt", kind: Kind::Float, default: Some("0.05"), provenance: Artifact, note: "output grid spacing" },
    KeySpec { key: "run.omega_min", kind: Kind::Float, default: Some("0.0"), provenance: Artifact, note: "" },
    KeySpec { key: "run.omega_max", kind: Kind::Float, default: Some("2.5"), provenance: Artifact, note: "" },
    KeySpec { key: "run.omega_points", kind: Kind::Count, default: Some("1001"), provenance: Artifact, note: "" },
    KeySpec {
        key: "run.initial_state",
        kind: Kind::Choice(&["dressed", "bare"]),
        default: Some("dressed"),
        provenance: Assumption,
        note: "one photon in the hybrid bright mode (dressed) or in bare alpha1 (bare)",
    },
    KeySpec {
        key: "run.measure_time",
        kind: Kind::Float,
        default: Some("0.0"),
        provenance: Assumption,
        note: "measurement starts with the initial state",
    },
    KeySpec {
        key: "run.gamma0",
        kind: Kind::FloatOr("kappa1"),
        default: Some("kappa1"),
        provenance: Assumption,
        note: "output coupling equals the cavity loss rate",
    },
    KeySpec {
        key: "run.observables",
        kind: Kind::Choice(&["polaritons", "ports"]),
        default: Some("polaritons"),
        provenance: Published,
        note: "operators for g2 runs",
    },
    KeySpec {
        key: "run.convergence",
        kind: Kind::Bool,
        default: Some("true"),
        provenance: Artifact,
        note: "rerun at truncation + 2 and report drift",
    },
    KeySpec { key: "spikes.threshold_sigma", kind: Kind::Float, default: Some("4.0"), provenance: Artifact, note: "" },
    KeySpec { key: "spikes.min_separation", kind: Kind::Float, default: Some("1.0"), provenance: Artifact, note: "" },
    KeySpec { key: "spikes.window_fraction", kind: Kind::Float, default: Some("0.1"), provenance: Artifact, note: "" },
    KeySpec {
        key: "spikes.gain_target",
        kind: Kind::FloatOr("none"),
        default: Some("none"),
        provenance: Artifact,
        note: "expected transmitted gain summary",
    },
    KeySpec {
        key: "sync.phase_tolerance",
        kind: Kind::Float,
        default: Some("0.7853981633974483"),
        provenance: Artifact,
        note: "",
    },
    KeySpec { key: "sync.lock_threshold", kind: Kind::Float, default: Some("0.8"), provenance: Artifact, note: "" },
    KeySpec { key: "sync.damping_ratio", kind: Kind::Float, default: Some("0.5"), provenance: Artifact, note: "" },
    KeySpec { key: "regime.min_crossings", kind: Kind::Count, default: Some("2"), provenance: Artifact, note: "" },
    KeySpec { key: "regime.oscillation_amplitude", kind: Kind::Float, default: Some("0.1"), provenance: Artifact, note: "" },
    KeySpec { key: "regime.localized_mean", kind: Kind::Float, default: Some("0.5"), provenance: Artifact, note: "" },
    KeySpec { key: "regime.localized_amplitude", kind: Kind::Float, default: Some("0.25"), provenance: Artifact, note: "" },
    KeySpec { key: "sweep.k_values", kind: Kind::FloatList, default: None, provenance: Artifact, note: "" },
    KeySpec { key: "sweep.j_values", kind: Kind::FloatList, default: None, provenance: Artifact, note: "" },
    KeySpec { key: "output.dir", kind: Kind::Path, default: Some("out"), provenance: Artifact, note: "" },
    KeySpec { key: "output.plots", kind: Kind::Bool, default: Some("true"), provenance: Artifact, note: "" },
];

struct PresetEntry {
    key: &'static str,
    value: &'static str,
    provenance: Provenance,
    note: &'static str,
}

const fn pe(key: &'static str, value: &'static str, provenance: Provenance, note: &'static str) -> PresetEntry {
    PresetEntry { key, value, provenance, note }
}

const FIG2A: &[PresetEntry] = &[
    pe("run.kind", "spectrum", Published, "cavity emission spectrum"),
    pe("model.k_eff", "0.5/sqrt2", Published, "strong coupling"),
    pe("model.hopping", "0.0,0.5,1.0", Published, ""),
    pe("run.tau_max", "200", Assumption, "spectral window"),
    pe("run.dt", "0.1", Artifact, ""),
];
const FIG2B: &[PresetEntry] = &[
    pe("run.kind", "spectrum", Published, "cavity emission spectrum"),
    pe("model.k_eff", "1.0/sqrt2", Published, "ultrastrong coupling"),
    pe("model.hopping", "0.0,0.5,1.0", Published, ""),
    pe("run.tau_max", "200", Assumption, "spectral window"),
    pe("run.dt", "0.1", Artifact, ""),
];
const FIG3A: &[PresetEntry] = &[
    pe("run.kind", "g2", Published, "polariton coherence and imbalance"),
    pe("model.k_eff", "0.1/sqrt2", Published, "weak coupling"),
    pe("model.hopping", "0.5", Assumption, "hopping not fixed for this figure"),
];
const FIG3B: &[PresetEntry] = &[
    pe("run.kind", "g2", Published, "polariton coherence and imbalance"),
    pe("model.k_eff", "0.5/sqrt2", Published, "strong coupling"),
    pe("model.hopping", "0.5", Assumption, "hopping not fixed for this figure"),
];
const FIG3C: &[PresetEntry] = &[
    pe("run.kind", "g2", Published, "polariton coherence and imbalance"),
    pe("model.k_eff", "1.0/sqrt2", Published, "ultrastrong coupling"),
    pe("model.hopping", "0.5", Assumption, "hopping not fixed for this figure"),
];
const FIG4A: &[PresetEntry] = &[
    pe("run.kind", "spikes", Published, "reflected and transmitted output fields"),
    pe("model.k_eff", "0.1", Published, ""),
    pe("model.hopping", "0.5", Published, ""),
    pe("spikes.gain_target", "3.0", Published, "transmitted gain"),
];
const FIG4B: &[PresetEntry] = &[
    pe("run.kind", "spikes", Published, "reflected and transmitted output fields"),
    pe("model.k_eff", "0.5", Published, ""),
    pe("model.hopping", "1.0", Published, ""),
    pe("spikes.gain_target", "4.5", Published, "transmitted gain"),
];

fn preset_entries(name: &str) -> Option<&'static [PresetEntry]> {
    Some(match name {
        "fig2a" => FIG2A,
        "fig2b" => FIG2B,
        "fig3a" => FIG3A,
        "fig3b" => FIG3B,
        "fig3c" => FIG3C,
        "fig4a" => FIG4A,
        "fig4b" => FIG4B,
        _ => return None,
    })
}

fn spec_of(key: &str) -> Option<&'static KeySpec> {
    KEYS.iter().find(|k| k.key == key)
}

/// One `key = value` line of a document.
#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

/// Syntactically valid document with known, non-repeated keys.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Document {
    pub entries: Vec<Entry>,
}

fn valid_key(key: &str) -> bool {
    !key.is_empty()
        && key
            .split('.')
            .all(|s| !s.is_empty() && s.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_'))
}

pub fn parse_document(text: &str) -> Result<Document> {
    let mut entries: Vec<Entry> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(Error::Config(format!("line {line}: expected `key = value`, got `{content}`")));
        };
        let key = key.trim();
        let value = value.trim();
        if !valid_key(key) {
            return Err(Error::Config(format!("line {line}: malformed key `{key}`")));
        }
        let Some(spec) = spec_of(key) else {
            return Err(Error::Config(format!("line {line}: unknown key `{key}`")));
        };
        if value.is_empty() {
            return Err(Error::Config(format!("line {line}: {key}: missing value")));
        }
        if let Some(prev) = entries.iter().find(|e| e.key == key) {
            return Err(Error::Config(format!(
                "line {line}: {key}: duplicate key (first set on line {})",
                prev.line
            )));
        }
        parse_value(spec, value).map_err(|e| Error::Config(format!("line {line}: {key}: {e}")))?;
        entries.push(Entry { key: key.to_string(), value: value.to_string(), line });
    }
    Ok(Document { entries })
}

/// A typed value with a canonical text form.
#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Float(f64),
    Derived(&'static str),
    Count(usize),
    Bool(bool),
    FloatList(Vec<f64>),
    Word(String),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Float(x) => write!(f, "{x:?}"),
            Value::Derived(w) => f.write_str(w),
            Value::Count(n) => write!(f, "{n}"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::FloatList(v) => {
                let parts: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
                f.write_str(&parts.join(","))
            }
            Value::Word(w) => f.write_str(w),
        }
    }
}

fn parse_float(text: &str) -> std::result::Result<f64, String> {
    let (num, scale) = match text.strip_suffix("/sqrt2") {
        Some(n) => (n.trim(), std::f64::consts::FRAC_1_SQRT_2),
        None => (text, 1.0),
    };
    let x: f64 = num.parse().map_err(|_| format!("expected a number, got `{text}`"))?;
    if !x.is_finite() {
        return Err(format!("expected a finite number, got `{text}`"));
    }
    Ok(x * scale)
}

fn parse_value(spec: &KeySpec, text: &str) -> std::result::Result<Value, String> {
    match spec.kind {
        Kind::Float => parse_float(text).map(Value::Float),
        Kind::FloatOr(word) if text == word => Ok(Value::Derived(word)),
        Kind::FloatOr(word) => {
            parse_float(text).map(Value::Float).map_err(|e| format!("{e} (or `{word}`)"))
        }
        Kind::Count => text
            .parse::<usize>()
            .map(Value::Count)
            .map_err(|_| format!("expected a non-negative integer, got `{text}`")),
        Kind::Bool => match text {
            "true" => Ok(Value::Bool(true)),
            "false" => Ok(Value::Bool(false)),
            _ => Err(format!("expected `true` or `false`, got `{text}`")),
        },
        Kind::FloatList => {
            let v = text.split(',').map(|s| parse_float(s.trim())).collect::<std::result::Result<Vec<_>, _>>()?;
            Ok(Value::FloatList(v))
        }
        Kind::Choice(options) => {
            if options.contains(&text) {
                Ok(Value::Word(text.to_string()))
            } else {
                Err(format!("expected one of {}, got `{text}`", options.join("|")))
            }
        }
        Kind::Path => Ok(Value::Word(text.to_string())),
    }
}

/// A resolved key.
#[derive(Clone, Debug, PartialEq)]
pub struct Setting {
    pub key: &'static str,
    pub value: Value,
    pub source: Source,
    pub note: &'static str,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunKind {
    Spectrum,
    G2,
    Flux,
    Imbalance,
    Spikes,
    Sweep,
}

impl RunKind {
    pub fn label(self) -> &'static str {
        match self {
            RunKind::Spectrum => "spectrum",
            RunKind::G2 => "g2",
            RunKind::Flux => "flux",
            RunKind::Imbalance => "imbalance",
            RunKind::Spikes => "spikes",
            RunKind::Sweep => "sweep",
        }
    }

    fn from_label(s: &str) -> Self {
        match s {
            "spectrum" => RunKind::Spectrum,
            "g2" => RunKind::G2,
            "flux" => RunKind::Flux,
            "imbalance" => RunKind::Imbalance,
            "spikes" => RunKind::Spikes,
            _ => RunKind::Sweep,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitialState {
    /// One excitation of `η` on top of the qubit-displaced vacuum.
    Dressed,
    /// `|g⟩ ⊗ |1, 0⟩` in the normal-mode basis.
    Bare,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObservableSet {
    Polaritons,
    Ports,
}

#[derive(Clone, Debug)]
pub struct ScenarioConfig {
    pub preset: Option<String>,
    pub kind: RunKind,
    pub omega1: f64,
    pub omega2: f64,
    /// `None` means resonant with `ω_eff`.
    pub omega_q: Option<f64>,
    pub k_eff: f64,
    pub hopping: Vec<f64>,
    pub truncation: usize,
    pub dissipate_on: DissipationBasis,
    pub dissipation: DissipationParams,
    pub tau_max: f64,
    pub dt: f64,
    pub omega_min: f64,
    pub omega_max: f64,
    pub omega_points: usize,
    pub initial_state: InitialState,
    pub measure_time: f64,
    /// `None` means `κ₁`.
    pub gamma0: Option<f64>,
    pub observables: ObservableSet,
    pub convergence: bool,
    pub spikes: SpikeConfig,
    pub gain_target: Option<f64>,
    pub sync: SyncConfig,
    pub regime: RegimeConfig,
    pub sweep_k: Vec<f64>,
    pub sweep_j: Vec<f64>,
    pub output_dir: PathBuf,
    pub plots: bool,
    /// Every key in registry order.
    pub settings: Vec<Setting>,
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    resolve(&parse_document(text)?, &[])
}

/// Layer defaults, the selected preset, the document and `overrides`.
pub fn resolve(doc: &Document, overrides: &[(String, String)]) -> Result<ScenarioConfig> {
    let mut raw: BTreeMap<&'static str, (String, Source)> = BTreeMap::new();
    for spec in KEYS {
        if let Some(d) = spec.default {
            raw.insert(spec.key, (d.to_string(), Source::Default(spec.provenance)));
        }
    }
    for (key, value) in overrides {
        let spec = spec_of(key).ok_or_else(|| Error::Config(format!("command line: unknown key `{key}`")))?;
        parse_value(spec, value).map_err(|e| Error::Config(format!("command line: {key}: {e}")))?;
    }
    let preset = overrides
        .iter()
        .rev()
        .find(|(k, _)| k == "preset")
        .map(|(_, v)| v.clone())
        .or_else(|| doc.entries.iter().find(|e| e.key == "preset").map(|e| e.value.clone()));
    if let Some(name) = &preset {
        let entries = preset_entries(name).ok_or_else(|| Error::Config(format!("unknown preset `{name}`")))?;
        for e in entries {
            let spec = spec_of(e.key).expect("preset keys are registered");
            raw.insert(spec.key, (e.value.to_string(), Source::Preset(name.clone(), e.provenance)));
        }
    }
    for e in &doc.entries {
        let spec = spec_of(&e.key).expect("document keys are checked");
        raw.insert(spec.key, (e.value.clone(), Source::Line(e.line)));
    }
    for (key, value) in overrides {
        let spec = spec_of(key).expect("override keys are checked");
        raw.insert(spec.key, (value.clone(), Source::Override));
    }

    let kind = raw.get("run.kind").map(|(v, _)| v.as_str());
    let mut required = vec!["run.kind"];
    if kind == Some("sweep") {
        required.extend(["sweep.k_values", "sweep.j_values"]);
    } else {
        required.extend(["model.k_eff", "model.hopping"]);
    }
    let missing: Vec<&str> = required.into_iter().filter(|k| !raw.contains_key(k)).collect();
    if !missing.is_empty() {
        return Err(Error::Config(format!(
            "missing required keys: {} (set them or choose a `preset` from {})",
            missing.join(", "),
            PRESETS.join("|")
        )));
    }

    let mut settings = Vec::new();
    for spec in KEYS {
        if let Some((text, source)) = raw.get(spec.key) {
            let value = parse_value(spec, text)
                .map_err(|e| Error::Config(format!("{}: {}: {e}", source.locate(), spec.key)))?;
            let note = match source {
                Source::Preset(name, _) => preset_entries(name)
                    .and_then(|es| es.iter().find(|e| e.key == spec.key))
                    .map(|e| if e.note.is_empty() { spec.note } else { e.note })
                    .unwrap_or(spec.note),
                _ => spec.note,
            };
            settings.push(Setting { key: spec.key, value, source: source.clone(), note });
        }
    }
    build(preset, settings)
}

struct Lookup<'a>(&'a [Setting]);

impl Lookup<'_> {
    fn get(&self, key: &str) -> &Setting {
        self.0.iter().find(|s| s.key == key).expect("resolved key")
    }

    fn fail(&self, key: &str, msg: &str) -> Error {
        let s = self.get(key);
        Error::Config(format!("{}: {key}: {msg}", s.source.locate()))
    }

    fn float(&self, key: &str) -> f64 {
        match self.get(key).value {
            Value::Float(x) => x,
            _ => f64::NAN,
        }
    }

    fn positive(&self, key: &str) -> Result<f64> {
        let x = self.float(key);
        if x > 0.0 {
            Ok(x)
        } else {
            Err(self.fail(key, &format!("must be positive, got {x}")))
        }
    }

    fn non_negative(&self, key: &str) -> Result<f64> {
        let x = self.float(key);
        if x >= 0.0 {
            Ok(x)
        } else {
            Err(self.fail(key, &format!("must be non-negative, got {x}")))
        }
    }

    fn optional(&self, key: &str) -> Option<f64> {
        match self.get(key).value {
            Value::Float(x) => Some(x),
            _ => None,
        }
    }

    fn count(&self, key: &str) -> usize {
        match self.get(key).value {
            Value::Count(n) => n,
            _ => 0,
        }
    }

    fn flag(&self, key: &str) -> bool {
        matches!(self.get(key).value, Value::Bool(true))
    }

    fn word(&self, key: &str) -> &str {
        match &self.get(key).value {
            Value::Word(w) => w,
            _ => "",
        }
    }

    fn list(&self, key: &str) -> Vec<f64> {
        match &self.get(key).value {
            Value::FloatList(v) => v.clone(),
            _ => Vec::new(),
        }
    }

    fn has(&self, key: &str) -> bool {
        self.0.iter().any(|s| s.key == key)
    }
}

fn build(preset: Option<String>, settings: Vec<Setting>) -> Result<ScenarioConfig> {
    let s = Lookup(&settings);
    let kind = RunKind::from_label(s.word("run.kind"));
    let sweep = kind == RunKind::Sweep;

    let k_eff = if s.has("model.k_eff") { s.non_negative("model.k_eff")? } else { f64::NAN };
    let hopping = if s.has("model.hopping") { s.list("model.hopping") } else { Vec::new() };
    let truncation = s.count("model.truncation");
    if truncation < 2 {
        return Err(s.fail("model.truncation", "need at least 2 levels per mode"));
    }
    let dissipation = DissipationParams {
        kappa1: s.non_negative("dissipation.kappa1")?,
        kappa2: s.non_negative("dissipation.kappa2")?,
        gamma: s.non_negative("dissipation.gamma")?,
        gamma_phi: s.non_negative("dissipation.gamma_phi")?,
        n_th: s.non_negative("dissipation.n_th")?,
    };
    let dt = s.positive("run.dt")?;
    let tau_max = s.positive("run.tau_max")?;
    if tau_max < dt {
        return Err(s.fail("run.tau_max", &format!("must be at least run.dt = {dt}")));
    }
    let omega_min = s.float("run.omega_min");
    let omega_max = s.float("run.omega_max");
    if omega_max <= omega_min {
        return Err(s.fail("run.omega_max", "must exceed run.omega_min"));
    }
    let omega_points = s.count("run.omega_points");
    if omega_points < 2 {
        return Err(s.fail("run.omega_points", "need at least 2 frequencies"));
    }
    let gamma0 = s.optional("run.gamma0");
    if let Some(g) = gamma0 {
        if g < 0.0 {
            return Err(s.fail("run.gamma0", "must be non-negative"));
        }
    }
    let spikes = SpikeConfig {
        threshold_sigma: s.positive("spikes.threshold_sigma")?,
        min_separation: s.non_negative("spikes.min_separation")?,
        window_fraction: s.positive("spikes.window_fraction")?,
    };
    if spikes.window_fraction > 1.0 {
        return Err(s.fail("spikes.window_fraction", "must not exceed 1"));
    }
    let gain_target = s.optional("spikes.gain_target");
    let lock_threshold = s.float("sync.lock_threshold");
    if !(0.0..=1.0).contains(&lock_threshold) {
        return Err(s.fail("sync.lock_threshold", "must lie in [0, 1]"));
    }
    let sync = SyncConfig {
        phase_tolerance: s.positive("sync.phase_tolerance")?,
        lock_threshold,
        damping_ratio: s.positive("sync.damping_ratio")?,
    };
    let regime = RegimeConfig {
        min_crossings: s.count("regime.min_crossings"),
        oscillation_amplitude: s.non_negative("regime.oscillation_amplitude")?,
        localized_mean: s.non_negative("regime.localized_mean")?,
        localized_amplitude: s.non_negative("regime.localized_amplitude")?,
    };

    let mut sweep_k = Vec::new();
    let mut sweep_j = Vec::new();
    if sweep {
        sweep_k = s.list("sweep.k_values");
        sweep_j = s.list("sweep.j_values");
        if sweep_k.iter().any(|&k| k < 0.0) {
            return Err(s.fail("sweep.k_values", "couplings must be non-negative"));
        }
    } else if hopping.is_empty() {
        return Err(s.fail("model.hopping", "need at least one value"));
    }

    Ok(ScenarioConfig {
        preset,
        kind,
        omega1: s.positive("model.omega1")?,
        omega2: s.positive("model.omega2")?,
        omega_q: s.optional("model.omega_q"),
        k_eff,
        hopping,
        truncation,
        dissipate_on: match s.word("model.dissipate_on") {
            "bare" => DissipationBasis::Bare,
            _ => DissipationBasis::Normal,
        },
        dissipation,
        tau_max,
        dt,
        omega_min,
        omega_max,
        omega_points,
        initial_state: match s.word("run.initial_state") {
            "bare" => InitialState::Bare,
            _ => InitialState::Dressed,
        },
        measure_time: s.non_negative("run.measure_time")?,
        gamma0,
        observables: match s.word("run.observables") {
            "ports" => ObservableSet::Ports,
            _ => ObservableSet::Polaritons,
        },
        convergence: s.flag("run.convergence"),
        spikes,
        gain_target,
        sync,
        regime,
        sweep_k,
        sweep_j,
        output_dir: PathBuf::from(s.word("output.dir")),
        plots: s.flag("output.plots"),
        settings,
    })
}

impl ScenarioConfig {
    /// Name of the output folder and plot script.
    pub fn label(&self) -> String {
        self.preset.clone().unwrap_or_else(|| self.kind.label().to_string())
    }

    pub fn gamma0(&self) -> f64 {
        self.gamma0.unwrap_or(self.dissipation.kappa1)
    }

    /// Number of samples of the delay grid `0, dt, ..., tau_max`.
    pub fn tau_samples(&self) -> usize {
        (self.tau_max / self.dt).round() as usize + 1
    }

    pub fn omega_grid(&self) -> Vec<f64> {
        let n = self.omega_points;
        let step = (self.omega_max - self.omega_min) / (n - 1) as f64;
        (0..n).map(|i| self.omega_min + step * i as f64).collect()
    }

    /// Canonical `key = value` text of everything that affects results.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        for s in self.settings.iter().filter(|s| !s.key.starts_with("output.")) {
            out.push_str(&format!("{} = {}\n", s.key, s.value));
        }
        out
    }

    /// SHA-256 of [`canonical`](Self::canonical), hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Settings left at a default or preset value marked as an assumption.
    pub fn assumptions(&self) -> Vec<&Setting> {
        self.settings
            .iter()
            .filter(|s| s.source.provenance() == Some(Provenance::Assumption))
            .collect()
    }

    /// Copy with the truncation replaced.
    pub fn with_truncation(&self, n: usize) -> Self {
        let mut c = self.clone();
        c.truncation = n;
        for s in c.settings.iter_mut().filter(|s| s.key == "model.truncation") {
            s.value = Value::Count(n);
            s.source = Source::Override;
        }
        c
    }
}

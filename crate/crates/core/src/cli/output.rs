//! CSV, manifest and plot-script writers, and the scenario driver.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value as Json};
use sha2::{Digest, Sha256};

use super::config::{RunKind, ScenarioConfig};
use super::scenario::{compute, Bundle, Cell, Table};
use super::sweep::sweep;
use crate::error::Result;

/// Largest relative series change between truncations N and N+2 that
/// still counts as converged.
pub const DRIFT_TOL: f64 = 1e-4;
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Round-trip number format: 17 significant digits.
pub fn format_number(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

fn format_cell(c: &Cell) -> String {
    match c {
        Cell::Num(x) => format_number(*x),
        Cell::Text(t) => t.clone(),
    }
}

/// CSV text with a `#` header carrying the config hash, every resolved
/// setting with its provenance, and the assumption ledger.
pub fn render_csv(cfg: &ScenarioConfig, hash: &str, table: &Table) -> String {
    let mut out = String::new();
    out.push_str(&format!("# jtqed {VERSION}\n"));
    out.push_str(&format!("# table: {}\n", table.name));
    out.push_str(&format!("# config_hash: {hash}\n"));
    for s in cfg.settings.iter().filter(|s| !s.key.starts_with("output.")) {
        out.push_str(&format!("# setting {} = {} ({})\n", s.key, s.value, s.source));
    }
    for s in cfg.assumptions() {
        out.push_str(&format!("# assumption {} = {}: {}\n", s.key, s.value, s.note));
    }
    out.push_str(&table.columns.join(","));
    out.push('\n');
    for row in &table.rows {
        let cells: Vec<String> = row.iter().map(format_cell).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// `max|a − b| / max|b|` over samples finite in both. A sample finite in
/// one series only makes the drift infinite.
pub fn series_drift(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let mut diff: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        match (x.is_finite(), y.is_finite()) {
            (true, true) => {
                diff = diff.max((x - y).abs());
                scale = scale.max(y.abs());
            }
            (false, false) => {}
            _ => return f64::INFINITY,
        }
    }
    if scale > 0.0 { diff / scale } else { diff }
}

/// Drift of every compared column, keyed `table:column`.
pub fn bundle_drift(base: &Bundle, reference: &Bundle) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    for t in &base.tables {
        let Some(keys) = t.keys else { continue };
        let Some(r) = reference.tables.iter().find(|r| r.name == t.name) else {
            out.insert(format!("{}:*", t.name), f64::INFINITY);
            continue;
        };
        for (j, col) in t.columns.iter().enumerate().skip(keys) {
            let numeric = t.rows.iter().all(|row| matches!(row[j], Cell::Num(_)));
            if !numeric {
                continue;
            }
            let (a, b) = (t.column(col).unwrap_or_default(), r.column(col).unwrap_or_default());
            out.insert(format!("{}:{col}", t.name), series_drift(&a, &b));
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct ConvergenceReport {
    pub checked: bool,
    pub reference_truncation: usize,
    pub drift: BTreeMap<String, f64>,
    pub max_drift: f64,
    pub worst: Option<String>,
    pub converged: bool,
}

impl ConvergenceReport {
    fn from_drift(reference_truncation: usize, drift: BTreeMap<String, f64>) -> Self {
        let mut max_drift: f64 = 0.0;
        let mut worst = None;
        for (k, &d) in &drift {
            if d > max_drift || (d.is_nan() && !max_drift.is_nan()) {
                max_drift = d;
                worst = Some(k.clone());
            }
        }
        let converged = max_drift <= DRIFT_TOL;
        Self { checked: true, reference_truncation, drift, max_drift, worst, converged }
    }

    fn unchecked(n: usize) -> Self {
        Self { checked: false, reference_truncation: n, drift: BTreeMap::new(), max_drift: 0.0, worst: None, converged: true }
    }

    fn to_json(&self) -> Json {
        let drift: Map<String, Json> = self.drift.iter().map(|(k, v)| (k.clone(), finite_or_string(*v))).collect();
        json!({
            "checked": self.checked,
            "reference_truncation": self.reference_truncation,
            "tolerance": DRIFT_TOL,
            "max_drift": finite_or_string(self.max_drift),
            "worst_series": self.worst,
            "converged": self.converged,
            "series": drift,
        })
    }
}

fn finite_or_string(x: f64) -> Json {
    if x.is_finite() { json!(x) } else { json!(format_number(x)) }
}

/// What a finished run left on disk.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    /// CSV files, in write order.
    pub files: Vec<PathBuf>,
    pub manifest: Json,
    pub convergence: ConvergenceReport,
    pub bundle: Bundle,
}

impl RunOutcome {
    /// 0 when converged, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.convergence.converged { 0 } else { 2 }
    }
}

fn compute_any(cfg: &ScenarioConfig) -> Result<Bundle> {
    if cfg.kind == RunKind::Sweep { sweep(cfg) } else { compute(cfg) }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Gnuplot script drawing every compared table against its first column.
pub fn plot_script(cfg: &ScenarioConfig, hash: &str, tables: &[Table]) -> String {
    let mut s = String::new();
    s.push_str(&format!("# jtqed {VERSION} plot script for {}\n# config_hash: {hash}\n", cfg.label()));
    s.push_str("set datafile separator ','\nset datafile commentschars '#'\nset key autotitle columnhead\n");
    s.push_str("set terminal pngcairo size 900,600\n");
    for t in tables.iter().filter(|t| t.keys == Some(1)) {
        s.push_str(&format!("set output '{}.png'\nset xlabel '{}'\n", t.name, t.columns[0]));
        let series: Vec<String> =
            (2..=t.columns.len()).map(|i| format!("'{}.csv' using 1:{i} with lines", t.name)).collect();
        s.push_str(&format!("plot {}\n", series.join(", \\\n     ")));
    }
    s
}

/// Run, check truncation convergence, and write CSVs, plot script and
/// manifest under `output_dir/label`.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunOutcome> {
    let hash = cfg.hash();
    let bundle = compute_any(cfg)?;
    let convergence = if cfg.convergence {
        let n2 = cfg.truncation + 2;
        let reference = compute_any(&cfg.with_truncation(n2))?;
        ConvergenceReport::from_drift(n2, bundle_drift(&bundle, &reference))
    } else {
        ConvergenceReport::unchecked(cfg.truncation)
    };
    write_outputs(cfg, &hash, bundle, convergence)
}

fn write_outputs(cfg: &ScenarioConfig, hash: &str, bundle: Bundle, convergence: ConvergenceReport) -> Result<RunOutcome> {
    let dir = cfg.output_dir.join(cfg.label());
    fs::create_dir_all(&dir)?;
    let mut files = Vec::new();
    let mut listing = Vec::new();
    for t in &bundle.tables {
        let text = render_csv(cfg, hash, t);
        let path = dir.join(format!("{}.csv", t.name));
        fs::write(&path, &text)?;
        listing.push(json!({ "file": format!("{}.csv", t.name), "rows": t.rows.len(), "sha256": sha256_hex(text.as_bytes()) }));
        files.push(path);
    }
    if cfg.plots {
        let script = plot_script(cfg, hash, &bundle.tables);
        let name = format!("plot_{}.gp", cfg.label());
        fs::write(dir.join(&name), &script)?;
        listing.push(json!({ "file": name, "sha256": sha256_hex(script.as_bytes()) }));
    }

    let mut warnings = bundle.warnings.clone();
    if !convergence.converged {
        warnings.push(format!(
            "truncation {} is not converged: drift {} in {} exceeds {DRIFT_TOL:e}",
            cfg.truncation,
            format_number(convergence.max_drift),
            convergence.worst.as_deref().unwrap_or("?")
        ));
    }
    let config: Map<String, Json> = cfg
        .settings
        .iter()
        .map(|s| (s.key.to_string(), json!({ "value": s.value.to_string(), "source": s.source.to_string() })))
        .collect();
    let assumptions: Vec<Json> = cfg
        .assumptions()
        .iter()
        .map(|s| json!({ "key": s.key, "value": s.value.to_string(), "note": s.note }))
        .collect();
    let manifest = json!({
        "version": VERSION,
        "label": cfg.label(),
        "kind": cfg.kind.label(),
        "config_hash": hash,
        "truncation": cfg.truncation,
        "config": config,
        "assumptions": assumptions,
        "convergence": convergence.to_json(),
        "files": listing,
        "summary": bundle.summary,
        "warnings": warnings,
        "exit_code": if convergence.converged { 0 } else { 2 },
    });
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| crate::Error::Config(e.to_string()))?;
    fs::write(dir.join("manifest.json"), text + "\n")?;
    Ok(RunOutcome { dir, files, manifest, convergence, bundle })
}

/// Names of the CSV files in `dir`, sorted.
pub fn csv_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    v.sort();
    Ok(v)
}

//! Command-line front end: configuration, scenario presets, export.

pub mod config;
pub mod output;
pub mod scenario;
pub mod sweep;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::{parse_config, parse_document, resolve, Provenance, RunKind, ScenarioConfig, PRESETS};
pub use output::{run_scenario, RunOutcome, DRIFT_TOL};

use crate::error::Error;
use crate::fockspace::{expectation, DensityMatrix};
use crate::jt_model::{impedance_matching_check, polaritons_from_ops};
use crate::liouville::{evolve, steady_state_with, trace_weights, uniform_grid, SteadyStateMethod};
use scenario::{build_model, initial_state};

/// Overrides `output.dir` unless `--set output.dir=...` is given.
pub const OUTPUT_ENV: &str = "JTQED_OUTPUT_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "jtqed", version, about = "Jahn-Teller coupled-cavity simulator")]
pub struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Override one key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Fock levels per cavity mode.
    #[arg(long, global = true, value_name = "N")]
    pub truncation: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Steady-state emission spectrum of mode 1.
    Spectrum,
    /// Second-order coherence after a single-photon start.
    G2,
    /// Output photon flux at every port.
    Flux,
    /// Cavity and polariton population imbalance.
    Imbalance,
    /// Reflected/transmitted statistics, spike train and synchronization.
    Spikes,
    /// Regime map over `sweep.k_values` x `sweep.j_values`.
    Sweep,
    /// Run a named figure preset.
    Preset {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(PRESETS))]
        name: String,
    },
    /// Run the invariant suite on the configured (or a built-in) model.
    Check,
}

fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::Integrator { .. } | Error::Solver(_) | Error::DegenerateSteadyState { .. } => EXIT_NUMERICAL,
        _ => EXIT_USAGE,
    }
}

fn overrides(cli: &Cli) -> Result<Vec<(String, String)>, Error> {
    let mut out = Vec::new();
    match &cli.command {
        Command::Preset { name } => out.push(("preset".into(), name.clone())),
        Command::Spectrum => out.push(("run.kind".into(), "spectrum".into())),
        Command::G2 => out.push(("run.kind".into(), "g2".into())),
        Command::Flux => out.push(("run.kind".into(), "flux".into())),
        Command::Imbalance => out.push(("run.kind".into(), "imbalance".into())),
        Command::Spikes => out.push(("run.kind".into(), "spikes".into())),
        Command::Sweep => out.push(("run.kind".into(), "sweep".into())),
        Command::Check => {}
    }
    if let Ok(dir) = std::env::var(OUTPUT_ENV) {
        if !dir.is_empty() {
            out.push(("output.dir".into(), dir));
        }
    }
    for s in &cli.set {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{s}`")))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    if let Some(n) = cli.truncation {
        out.push(("model.truncation".into(), n.to_string()));
    }
    Ok(out)
}

fn load(cli: &Cli) -> Result<ScenarioConfig, Error> {
    let text = match &cli.config {
        Some(p) => std::fs::read_to_string(p)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?,
        None => String::new(),
    };
    let doc = parse_document(&text)?;
    let mut ov = overrides(cli)?;
    if matches!(cli.command, Command::Check) {
        let has_model = doc.entries.iter().any(|e| e.key == "preset" || e.key == "model.k_eff")
            || ov.iter().any(|(k, _)| k == "preset" || k == "model.k_eff");
        if !has_model {
            ov.insert(0, ("preset".into(), "fig3c".into()));
        }
        if !doc.entries.iter().any(|e| e.key == "run.kind") && !ov.iter().any(|(k, _)| k == "run.kind") {
            ov.insert(0, ("run.kind".into(), "g2".into()));
        }
    }
    resolve(&doc, &ov)
}

/// Parse `args` (program name first) and run; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let cfg = match load(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    if matches!(cli.command, Command::Check) {
        return match check(&cfg) {
            Ok(lines) => {
                let failed = lines.iter().filter(|l| !l.pass).count();
                for l in &lines {
                    println!("{} {}: {}", if l.pass { "PASS" } else { "FAIL" }, l.name, l.detail);
                }
                if failed == 0 { EXIT_OK } else { EXIT_USAGE }
            }
            Err(e) => {
                eprintln!("error: {e}");
                exit_code_for(&e)
            }
        };
    }
    match run_scenario(&cfg) {
        Ok(out) => {
            println!("wrote {} files to {}", out.files.len(), out.dir.display());
            let c = &out.convergence;
            if c.checked {
                println!(
                    "truncation {} vs {}: max drift {} ({})",
                    cfg.truncation,
                    c.reference_truncation,
                    output::format_number(c.max_drift),
                    if c.converged { "converged" } else { "NOT converged" }
                );
            }
            for w in out.manifest["warnings"].as_array().into_iter().flatten() {
                eprintln!("warning: {}", w.as_str().unwrap_or_default());
            }
            out.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

/// One line of the invariant suite.
#[derive(Clone, Debug)]
pub struct CheckLine {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

fn line(name: &'static str, value: f64, tol: f64) -> CheckLine {
    CheckLine { name, pass: value <= tol, detail: format!("{value:.3e} (tolerance {tol:.0e})") }
}

/// Structural invariants of the model at the first configured hopping.
pub fn check(cfg: &ScenarioConfig) -> Result<Vec<CheckLine>, Error> {
    let j = cfg.hopping.first().copied().unwrap_or(0.5);
    let k = if cfg.k_eff.is_finite() { cfg.k_eff } else { cfg.sweep_k.first().copied().unwrap_or(0.0) };
    let m = build_model(cfg, k, j)?;
    let p = &m.params;
    let mut out = Vec::new();

    out.push(line("hamiltonian hermitian", m.h.hermiticity_error(), 1e-12));
    let sum_err = (p.e1 + p.e2 - p.omega_eff - p.omega_prime).abs();
    let prod_err = (p.e1 * p.e2 - (p.omega_eff * p.omega_prime - p.c2 * p.c2)).abs();
    out.push(line("polariton energy sum", sum_err, 1e-12));
    out.push(line("polariton energy product", prod_err, 1e-12));

    let w = trace_weights(&m.ops.space.identity().into_matrix());
    let trace_leak = m
        .l
        .matrix()
        .vecmat(&w)
        .iter()
        .fold(0.0_f64, |a, x| a.max(x.norm()));
    out.push(line("liouvillian trace preserving", trace_leak, 1e-12));

    let imp = impedance_matching_check(&m.h, p)?;
    out.push(line("quadrature commutator identity", imp.max_commutator_residual, 1e-10));

    let (p1, p2) = polaritons_from_ops(&m.ops, p);
    let comm = p1.try_mul(&p2.dagger())?.try_sub(&p2.dagger().try_mul(&p1)?)?;
    let mask = m.ops.space.truncation_safe_mask();
    let mut comm_err: f64 = 0.0;
    for (r, &ok_r) in mask.iter().enumerate() {
        for (c, &ok_c) in mask.iter().enumerate() {
            if ok_r && ok_c {
                comm_err = comm_err.max(comm.matrix()[(r, c)].norm());
            }
        }
    }
    out.push(line("polaritons commute", comm_err, 1e-12));

    let rho0 = initial_state(&m, cfg.initial_state)?;
    let n1 = expectation(&m.ops.number1(), &rho0)?.re;
    let n2 = expectation(&m.ops.number2(), &rho0)?.re;
    out.push(line("initial imbalance is +1", ((n1 - n2) / (n1 + n2) - 1.0).abs(), 1e-12));

    let t = uniform_grid(0.5, 21);
    let traj = evolve(&rho0, &m.l, &t, &[])?;
    out.push(line("evolution trace drift", traj.trace_drift, 1e-10));
    out.push(line("evolution positivity", (-traj.min_eigenvalue).max(0.0), 1e-10));

    let ss = steady_state_with(&m.l, SteadyStateMethod::Auto)?;
    out.push(line("steady state residual", ss.residual, 1e-10));
    let ev = DensityMatrix::eigenvalues(&ss.state);
    let min = ev.iter().copied().fold(f64::INFINITY, f64::min);
    out.push(line("steady state positivity", (-min).max(0.0), 1e-10));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_1() {
        assert_eq!(run(["jtqed", "preset", "fig9"]), EXIT_USAGE);
        assert_eq!(run(["jtqed", "g2"]), EXIT_USAGE);
        assert_eq!(run(["jtqed", "--set", "nonsense", "g2"]), EXIT_USAGE);
    }

    #[test]
    fn check_passes_at_small_truncation() {
        let cfg = resolve(&parse_document("preset = fig3c\nmodel.truncation = 4").unwrap(), &[]).unwrap();
        for l in check(&cfg).unwrap() {
            assert!(l.pass, "{} {}", l.name, l.detail);
        }
    }
}

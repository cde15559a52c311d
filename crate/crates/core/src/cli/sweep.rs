//! Regime map over a (k_eff, J) grid.

use rayon::prelude::*;
use serde_json::{json, Map};

use super::config::ScenarioConfig;
use super::scenario::{build_model, initial_state, output_statistics, Bundle, Cell, Model, Table};
use crate::correlations::{g2_multi, population_imbalance, CorrelationOptions, PortObservables};
use crate::error::{Error, Result};
use crate::jt_model::polaritons_from_ops;
use crate::liouville::{steady_state_with, uniform_grid, SteadyStateMethod};
use crate::spikes::{classify_regime, gain_ratio};

pub const SWEEP_COLUMNS: [&str; 11] = [
    "k_eff", "J", "regime", "g2_p1_0", "g2_p2_0", "gain", "flux_1", "flux_2", "flux_3_1", "flux_3_2", "error",
];

/// Sorted, de-duplicated grid axis.
pub fn axis(values: &[f64]) -> Result<Vec<f64>> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("sweep values must be finite".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    Ok(v)
}

struct PointResult {
    regime: String,
    numbers: [f64; 7],
}

fn point(cfg: &ScenarioConfig, m: &Model) -> Result<PointResult> {
    let rho0 = initial_state(m, cfg.initial_state)?;
    let tau = uniform_grid(cfg.dt, cfg.tau_samples());
    let (p1, p2) = polaritons_from_ops(&m.ops, &m.params);
    let (n1, n2) = (m.ops.number1(), m.ops.number2());
    let (series, extra) =
        g2_multi(&m.l, &rho0, &[&p1, &p2], &[&n1, &n2], cfg.measure_time, &tau, &CorrelationOptions::default())?;
    let z = population_imbalance(&tau, &extra[0], &extra[1])?.z;
    let finite: Vec<f64> = z.iter().copied().filter(|x| x.is_finite()).collect();
    let regime = classify_regime(&finite, &cfg.regime)?.regime.label().to_string();

    let stats = output_statistics(cfg, m)?;
    let gain = gain_ratio(&stats.n1, &stats.n2)?.summary.unwrap_or(f64::NAN);

    let ss = steady_state_with(&m.l, SteadyStateMethod::Auto)?;
    let flux = PortObservables::new(&m.h)?.fluxes(cfg.gamma0(), &ss.state)?;
    Ok(PointResult {
        regime,
        numbers: [series[0].at_zero(), series[1].at_zero(), gain, flux[0].1, flux[1].1, flux[2].1, flux[3].1],
    })
}

fn row(cfg: &ScenarioConfig, k: f64, j: f64) -> Vec<Cell> {
    let mut cells = vec![Cell::Num(k), Cell::Num(j)];
    match build_model(cfg, k, j).and_then(|m| point(cfg, &m)) {
        Ok(p) => {
            cells.push(Cell::Text(p.regime));
            cells.extend(p.numbers.iter().map(|&x| Cell::Num(x)));
            cells.push(Cell::Text(String::new()));
        }
        Err(e) => {
            cells.push(Cell::Text("error".into()));
            cells.extend([f64::NAN; 7].iter().map(|&x| Cell::Num(x)));
            cells.push(Cell::Text(e.to_string().replace([',', '\n'], ";")));
        }
    }
    cells
}

/// One row per grid point in `(k_eff, J)` order. Points run in parallel;
/// failures land in the `error` column.
pub fn sweep(cfg: &ScenarioConfig) -> Result<Bundle> {
    let ks = axis(&cfg.sweep_k)?;
    let js = axis(&cfg.sweep_j)?;
    let grid: Vec<(f64, f64)> = ks.iter().flat_map(|&k| js.iter().map(move |&j| (k, j))).collect();
    let rows: Vec<Vec<Cell>> = grid.par_iter().map(|&(k, j)| row(cfg, k, j)).collect();
    let failed = rows.iter().filter(|r| matches!(&r[10], Cell::Text(t) if !t.is_empty())).count();
    let mut summary = Map::new();
    summary.insert("points".into(), json!(rows.len()));
    summary.insert("failed".into(), json!(failed));
    let mut warnings = Vec::new();
    if failed > 0 {
        warnings.push(format!("{failed} sweep points failed; see the error column"));
    }
    let table = Table {
        name: "sweep".into(),
        columns: SWEEP_COLUMNS.map(String::from).to_vec(),
        rows,
        keys: Some(2),
    };
    Ok(Bundle { tables: vec![table], summary, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_sorts_and_dedups() {
        assert_eq!(axis(&[1.0, 0.0, 0.5, 1.0]).unwrap(), vec![0.0, 0.5, 1.0]);
        assert!(axis(&[f64::NAN]).is_err());
    }
}

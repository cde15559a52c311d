//! Physics of each run kind, producing tables and a summary.

use std::f64::consts::{FRAC_1_SQRT_2, TAU};

use nalgebra::DVector;
use num_complex::Complex64 as C64;
use serde_json::{json, Map, Value as Json};

use super::config::{InitialState, ObservableSet, RunKind, ScenarioConfig};
use crate::correlations::{
    g2_multi, population_imbalance, power_spectrum, spectral_peaks, two_time_corr, CorrelationOptions, Port,
    PortObservables,
};
use crate::error::{Error, Result};
use crate::fockspace::{DensityMatrix, HilbertSpace, Operator};
use crate::jt_model::{
    effective_from_ops, effective_params, ground_state, polaritons_from_ops, CavityOps, EffectiveParams, RawParams,
    MODE1,
};
use crate::liouville::{build_liouvillian, evolve, steady_state_with, uniform_grid, Liouvillian, SteadyStateMethod};
use crate::spikes::{classify_regime, detect_spikes, gain_ratio, phase_locking, RegimeConfig};

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Num(f64),
    Text(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    /// Leading key columns; the rest are compared across truncations.
    /// `None` keeps the table out of the comparison.
    pub keys: Option<usize>,
}

impl Table {
    /// Numeric table from column-major data; the first column is the key.
    pub fn numeric(name: impl Into<String>, columns: &[&str], data: &[&[f64]]) -> Self {
        let n = data.first().map_or(0, |c| c.len());
        let rows = (0..n).map(|i| data.iter().map(|c| Cell::Num(c[i])).collect()).collect();
        Self { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows, keys: Some(1) }
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(
            self.rows
                .iter()
                .map(|r| match &r[j] {
                    Cell::Num(x) => *x,
                    Cell::Text(_) => f64::NAN,
                })
                .collect(),
        )
    }
}

/// Everything a run produces before it is written out.
#[derive(Clone, Debug, Default)]
pub struct Bundle {
    pub tables: Vec<Table>,
    pub summary: Map<String, Json>,
    pub warnings: Vec<String>,
}

/// One parameter point, ready to simulate.
#[derive(Clone, Debug)]
pub struct Model {
    pub params: EffectiveParams,
    pub ops: CavityOps,
    pub h: Operator,
    pub l: Liouvillian,
}

/// Effective parameters for equal couplings `k₁ = k₂ = k_eff/√2`. The mode
/// structure does not depend on `k_eff`, so `k_eff = 0` is allowed.
pub fn model_params(cfg: &ScenarioConfig, k_eff: f64, hopping: f64) -> Result<EffectiveParams> {
    if !(k_eff >= 0.0 && k_eff.is_finite()) {
        return Err(Error::InvalidParams(format!("k_eff must be non-negative, got {k_eff}")));
    }
    let raw = RawParams {
        omega1: cfg.omega1,
        omega2: cfg.omega2,
        k1: FRAC_1_SQRT_2,
        k2: FRAC_1_SQRT_2,
        omega_q: cfg.omega_q,
        hopping: Some(hopping),
    };
    Ok(effective_params(&raw)?.with_coupling(k_eff))
}

pub fn build_model(cfg: &ScenarioConfig, k_eff: f64, hopping: f64) -> Result<Model> {
    let params = model_params(cfg, k_eff, hopping)?;
    let space = HilbertSpace::cavity_pair(cfg.truncation)?;
    let ops = CavityOps::new(&space)?;
    let h = effective_from_ops(&ops, &params);
    let l = build_liouvillian(&h, &cfg.dissipation, cfg.dissipate_on)?;
    Ok(Model { params, ops, h, l })
}

fn coherent(n: usize, beta: f64) -> Vec<f64> {
    let mut c = Vec::with_capacity(n);
    let mut term = (-0.5 * beta * beta).exp();
    for m in 0..n {
        c.push(term);
        term *= beta / ((m + 1) as f64).sqrt();
    }
    c
}

/// Single-photon initial state.
pub fn initial_state(model: &Model, kind: InitialState) -> Result<DensityMatrix> {
    let space = &model.ops.space;
    match kind {
        InitialState::Bare => DensityMatrix::basis_state(space, &[1, 1, 0]),
        InitialState::Dressed => {
            // η-vacuum with the qubit in |g⟩: Σ_s ⟨s|g⟩ |s⟩|β = −k s⟩, s = ±1
            let n = space.factors()[MODE1].dim;
            let k = model.params.k_eff;
            let plus = coherent(n, -k);
            let minus = coherent(n, k);
            let mut vac = DVector::from_element(space.total_dim(), C64::new(0.0, 0.0));
            for m in 0..n {
                // |±⟩ = (|e⟩ ± |g⟩)/√2 and ⟨±|g⟩ = ±1/√2
                let e = 0.5 * (plus[m] - minus[m]);
                let g = 0.5 * (plus[m] + minus[m]);
                vac[space.basis_index(&[0, m, 0])?] = C64::new(e, 0.0);
                vac[space.basis_index(&[1, m, 0])?] = C64::new(g, 0.0);
            }
            let ket = model.ops.eta(k).dagger().matrix() * vac;
            DensityMatrix::from_ket(space, &ket)
        }
    }
}

fn delay_grid(cfg: &ScenarioConfig) -> Vec<f64> {
    uniform_grid(cfg.dt, cfg.tau_samples())
}

fn tag(j: f64) -> String {
    format!("J{j:?}")
}

fn number(o: &Operator) -> Operator {
    &o.dagger() * o
}

fn regime_json(z: &[f64], cfg: &RegimeConfig) -> Json {
    let finite: Vec<f64> = z.iter().copied().filter(|x| x.is_finite()).collect();
    match classify_regime(&finite, cfg) {
        Ok(r) => json!({
            "regime": r.regime.label(),
            "zero_crossings": r.zero_crossings,
            "amplitude": r.amplitude,
            "mean": r.mean,
        }),
        Err(e) => json!({ "regime": "unavailable", "reason": e.to_string() }),
    }
}

fn params_json(p: &EffectiveParams) -> Json {
    json!({
        "omega_eff": p.omega_eff,
        "omega_prime": p.omega_prime,
        "k_eff": p.k_eff,
        "c2": p.c2,
        "theta": p.theta,
        "e1": p.e1,
        "e2": p.e2,
        "omega_q": p.omega_q,
        "coupling_source": p.coupling_source.label(),
    })
}

/// Run a non-sweep scenario at the configured truncation.
pub fn compute(cfg: &ScenarioConfig) -> Result<Bundle> {
    let mut bundle = Bundle::default();
    for &j in &cfg.hopping {
        let model = build_model(cfg, cfg.k_eff, j)?;
        let mut summary = Map::new();
        summary.insert("parameters".into(), params_json(&model.params));
        match cfg.kind {
            RunKind::Spectrum => spectrum_run(cfg, &model, j, &mut bundle, &mut summary)?,
            RunKind::G2 => g2_run(cfg, &model, j, &mut bundle, &mut summary)?,
            RunKind::Imbalance => imbalance_run(cfg, &model, j, &mut bundle, &mut summary)?,
            RunKind::Flux => flux_run(cfg, &model, j, &mut bundle, &mut summary)?,
            RunKind::Spikes => spikes_run(cfg, &model, j, &mut bundle, &mut summary)?,
            RunKind::Sweep => return Err(Error::Config("sweep runs go through the sweep driver".into())),
        }
        bundle.summary.insert(tag(j), Json::Object(summary));
    }
    Ok(bundle)
}

/// Sideband analysis of a spectrum: the two most prominent peaks.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sidebands {
    pub positions: (f64, f64),
    pub heights: (f64, f64),
    pub splitting: f64,
    /// `|P_a − P_b| / max(P_a, P_b)`.
    pub asymmetry: f64,
}

pub fn sidebands(omega: &[f64], p: &[f64]) -> Option<Sidebands> {
    let peaks = spectral_peaks(omega, p);
    if peaks.len() < 2 {
        return None;
    }
    let (mut a, mut b) = (peaks[0], peaks[1]);
    if a.position > b.position {
        std::mem::swap(&mut a, &mut b);
    }
    Some(Sidebands {
        positions: (a.position, b.position),
        heights: (a.height, b.height),
        splitting: b.position - a.position,
        asymmetry: (a.height - b.height).abs() / a.height.max(b.height),
    })
}

fn spectrum_run(cfg: &ScenarioConfig, m: &Model, j: f64, out: &mut Bundle, summary: &mut Map<String, Json>) -> Result<()> {
    let ss = steady_state_with(&m.l, SteadyStateMethod::Auto)?;
    let x = m.ops.quadrature(MODE1);
    let tau = delay_grid(cfg);
    let corr = two_time_corr(&m.l, &ss.state, &x, &x, &tau, &CorrelationOptions::default())?;
    let omega = cfg.omega_grid();
    let spec = power_spectrum(&corr, &omega)?;
    out.tables.push(Table::numeric(format!("spectrum_{}", tag(j)), &["omega", "P"], &[&spec.omega, &spec.values]));
    let peaks: Vec<Json> = spectral_peaks(&spec.omega, &spec.values)
        .iter()
        .take(5)
        .map(|p| json!({ "omega": p.position, "height": p.height, "prominence": p.prominence }))
        .collect();
    summary.insert(
        "steady_state".into(),
        json!({ "residual": ss.residual, "iterations": ss.iterations, "method": format!("{:?}", ss.method) }),
    );
    summary.insert("taper".into(), json!(spec.taper));
    summary.insert("peaks".into(), Json::Array(peaks));
    summary.insert(
        "sidebands".into(),
        match sidebands(&spec.omega, &spec.values) {
            Some(s) => json!({
                "positions": [s.positions.0, s.positions.1],
                "heights": [s.heights.0, s.heights.1],
                "splitting": s.splitting,
                "asymmetry": s.asymmetry,
            }),
            None => Json::Null,
        },
    );
    for w in &spec.warnings {
        out.warnings.push(format!("{}: {w}", tag(j)));
    }
    Ok(())
}

/// `2π/|E₁ − E₂|`, the polariton beat period.
pub fn beat_period(p: &EffectiveParams) -> f64 {
    TAU / (p.e1 - p.e2).abs()
}

/// `g²(τ) > g²(0)` at every valid sample with `0 < τ ≤ period`.
pub fn antibunched(tau: &[f64], g2: &[f64], period: f64) -> bool {
    let g0 = g2[0];
    let mut seen = false;
    for (t, g) in tau.iter().zip(g2).skip(1) {
        if *t > period {
            break;
        }
        if g.is_finite() {
            seen = true;
            if !(*g > g0) {
                return false;
            }
        }
    }
    seen && g0.is_finite()
}

fn g2_run(cfg: &ScenarioConfig, m: &Model, j: f64, out: &mut Bundle, summary: &mut Map<String, Json>) -> Result<()> {
    let rho0 = initial_state(m, cfg.initial_state)?;
    let tau = delay_grid(cfg);
    let opts = CorrelationOptions::default();
    let (n1, n2) = (m.ops.number1(), m.ops.number2());
    let (labels, ops): (Vec<&str>, Vec<Operator>) = match cfg.observables {
        ObservableSet::Polaritons => {
            let (p1, p2) = polaritons_from_ops(&m.ops, &m.params);
            (vec!["p1", "p2"], vec![p1, p2])
        }
        ObservableSet::Ports => {
            let ports = PortObservables::new(&m.h)?;
            (Port::ALL.iter().map(|p| p.label()).collect(), Port::ALL.iter().map(|&p| ports.get(p).plus.clone()).collect())
        }
    };
    let refs: Vec<&Operator> = ops.iter().collect();
    let (series, extra) = g2_multi(&m.l, &rho0, &refs, &[&n1, &n2], cfg.measure_time, &tau, &opts)?;
    let zc = population_imbalance(&tau, &extra[0], &extra[1])?;

    let mut columns = vec!["tau".to_string()];
    let mut data: Vec<&[f64]> = vec![&tau];
    for (l, s) in labels.iter().zip(&series) {
        columns.push(format!("g2_{l}"));
        data.push(&s.values);
    }
    for (l, s) in labels.iter().zip(&series) {
        columns.push(format!("n_{l}"));
        data.push(&s.occupation);
    }
    let zp = if cfg.observables == ObservableSet::Polaritons {
        Some(population_imbalance(&tau, &series[0].occupation, &series[1].occupation)?)
    } else {
        None
    };
    if let Some(zp) = &zp {
        columns.push("z_p".into());
        data.push(&zp.z);
    }
    columns.extend(["n_c1".into(), "n_c2".into(), "z_c".into()]);
    data.extend([extra[0].as_slice(), extra[1].as_slice(), zc.z.as_slice()]);
    let cols: Vec<&str> = columns.iter().map(|s| s.as_str()).collect();
    out.tables.push(Table::numeric(format!("g2_{}", tag(j)), &cols, &data));

    let period = beat_period(&m.params);
    let mut g0 = Map::new();
    let mut anti = Map::new();
    for (l, s) in labels.iter().zip(&series) {
        g0.insert(l.to_string(), json!(s.at_zero()));
        anti.insert(l.to_string(), json!(antibunched(&s.tau, &s.values, period)));
        let masked = s.valid.iter().filter(|v| !**v).count();
        if masked > 0 {
            out.warnings.push(format!("{}: g2_{l} masked at {masked} samples (vanishing occupation)", tag(j)));
        }
    }
    summary.insert("g2_zero".into(), Json::Object(g0));
    summary.insert("beat_period".into(), json!(period));
    summary.insert("antibunched_first_period".into(), Json::Object(anti));
    summary.insert("cavity_regime".into(), regime_json(&zc.z, &cfg.regime));
    if let Some(zp) = &zp {
        summary.insert("polariton_regime".into(), regime_json(&zp.z, &cfg.regime));
    }
    summary.insert("z_c_initial".into(), json!(zc.z[0]));
    Ok(())
}

fn imbalance_run(cfg: &ScenarioConfig, m: &Model, j: f64, out: &mut Bundle, summary: &mut Map<String, Json>) -> Result<()> {
    let rho0 = initial_state(m, cfg.initial_state)?;
    let t = delay_grid(cfg);
    let (p1, p2) = polaritons_from_ops(&m.ops, &m.params);
    let obs = [m.ops.number1(), m.ops.number2(), number(&p1), number(&p2)];
    let traj = evolve(&rho0, &m.l, &t, &obs)?;
    let s: Vec<Vec<f64>> = (0..4).map(|k| traj.real_series(k)).collect();
    let zc = population_imbalance(&t, &s[0], &s[1])?;
    let zp = population_imbalance(&t, &s[2], &s[3])?;
    out.tables.push(Table::numeric(
        format!("imbalance_{}", tag(j)),
        &["t", "n_c1", "n_c2", "N_c", "z_c", "n_p1", "n_p2", "N_p", "z_p"],
        &[&t, &s[0], &s[1], &zc.total, &zc.z, &s[2], &s[3], &zp.total, &zp.z],
    ));
    summary.insert("cavity_regime".into(), regime_json(&zc.z, &cfg.regime));
    summary.insert("polariton_regime".into(), regime_json(&zp.z, &cfg.regime));
    summary.insert("trace_drift".into(), json!(traj.trace_drift));
    summary.insert("min_eigenvalue".into(), json!(traj.min_eigenvalue));
    Ok(())
}

fn flux_run(cfg: &ScenarioConfig, m: &Model, j: f64, out: &mut Bundle, summary: &mut Map<String, Json>) -> Result<()> {
    let rho0 = initial_state(m, cfg.initial_state)?;
    let t = delay_grid(cfg);
    let g0 = cfg.gamma0();
    let ports = PortObservables::new(&m.h)?;
    let obs: Vec<Operator> =
        Port::ALL.iter().map(|&p| (&ports.get(p).minus * &ports.get(p).plus).scale_re(g0)).collect();
    let traj = evolve(&rho0, &m.l, &t, &obs)?;
    let s: Vec<Vec<f64>> = (0..4).map(|k| traj.real_series(k)).collect();
    out.tables.push(Table::numeric(
        format!("flux_{}", tag(j)),
        &["t", "flux_1", "flux_2", "flux_3_1", "flux_3_2"],
        &[&t, &s[0], &s[1], &s[2], &s[3]],
    ));
    let ss = steady_state_with(&m.l, SteadyStateMethod::Auto)?;
    let gs = DensityMatrix::from_ket(&m.ops.space, &ground_state(&m.h))?;
    let to_json = |v: Vec<(Port, f64)>| {
        Json::Object(v.into_iter().map(|(p, f)| (p.label().to_string(), json!(f))).collect())
    };
    summary.insert("gamma0".into(), json!(g0));
    summary.insert("steady_state_flux".into(), to_json(ports.fluxes(g0, &ss.state)?));
    summary.insert("ground_state_flux".into(), to_json(ports.fluxes(g0, &gs)?));
    Ok(())
}

/// Reflected/transmitted photon statistics of one parameter point.
#[derive(Clone, Debug)]
pub struct OutputStatistics {
    pub tau: Vec<f64>,
    pub g2_t: Vec<f64>,
    pub g2_r: Vec<f64>,
    /// `⟨X⁻X⁺⟩` at the reflected port 3₁.
    pub n1: Vec<f64>,
    /// `⟨X⁻X⁺⟩` at the transmitted port 3₂.
    pub n2: Vec<f64>,
    pub z: Vec<f64>,
}

pub fn output_statistics(cfg: &ScenarioConfig, m: &Model) -> Result<OutputStatistics> {
    let rho0 = initial_state(m, cfg.initial_state)?;
    let tau = delay_grid(cfg);
    let ports = PortObservables::new(&m.h)?;
    let xt = &ports.get(Port::Normal2).plus;
    let xr = &ports.get(Port::Normal1).plus;
    let (n1, n2) = (m.ops.number1(), m.ops.number2());
    let (mut s, extra) = g2_multi(&m.l, &rho0, &[xt, xr], &[&n1, &n2], cfg.measure_time, &tau, &CorrelationOptions::default())?;
    let z = population_imbalance(&tau, &extra[0], &extra[1])?.z;
    let r = s.pop().expect("two series");
    let t = s.pop().expect("two series");
    Ok(OutputStatistics { tau, g2_t: t.values, g2_r: r.values, n1: r.occupation, n2: t.occupation, z })
}

fn spikes_run(cfg: &ScenarioConfig, m: &Model, j: f64, out: &mut Bundle, summary: &mut Map<String, Json>) -> Result<()> {
    let st = output_statistics(cfg, m)?;
    out.tables.push(Table::numeric(
        format!("fig4_{}", tag(j)),
        &["tau", "g2_T", "g2_R", "n1", "n2", "z"],
        &[&st.tau, &st.g2_t, &st.g2_r, &st.n1, &st.n2, &st.z],
    ));

    let train = detect_spikes(&st.tau, &st.g2_t, &cfg.spikes)?;
    let rows = (0..train.len())
        .map(|i| {
            vec![
                Cell::Num(train.times[i]),
                Cell::Num(train.indices[i] as f64),
                Cell::Num(train.amplitudes[i]),
                Cell::Text(train.kinds[i].label().to_string()),
                Cell::Num(train.baseline[train.indices[i]]),
                Cell::Num(train.threshold[train.indices[i]]),
            ]
        })
        .collect();
    out.tables.push(Table {
        name: format!("spikes_{}", tag(j)),
        columns: ["time", "index", "amplitude", "kind", "baseline", "threshold"].map(String::from).to_vec(),
        rows,
        keys: None,
    });

    let mut sync_rows = vec![vec![Cell::Text("spikes".into()), Cell::Num(train.len() as f64)]];
    match phase_locking(&train, &st.tau, &st.z, &cfg.sync) {
        Ok(r) => {
            sync_rows.push(vec![Cell::Text("lock_ratio".into()), Cell::Num(r.lock_ratio)]);
            sync_rows.push(vec![Cell::Text("mean_phase_offset".into()), Cell::Num(r.mean_phase_offset)]);
            sync_rows.push(vec![Cell::Text("assigned".into()), Cell::Num(r.assigned as f64)]);
            sync_rows.push(vec![Cell::Text("envelope_ratio".into()), Cell::Num(r.envelope_ratio)]);
            sync_rows.push(vec![Cell::Text("regime".into()), Cell::Text(r.regime.label().into())]);
            summary.insert("sync".into(), json!({
                "regime": r.regime.label(),
                "lock_ratio": r.lock_ratio,
                "mean_phase_offset": r.mean_phase_offset,
                "envelope_ratio": r.envelope_ratio,
            }));
        }
        Err(e) => {
            sync_rows.push(vec![Cell::Text("regime".into()), Cell::Text("unavailable".into())]);
            summary.insert("sync".into(), json!({ "regime": "unavailable", "reason": e.to_string() }));
        }
    }
    out.tables.push(Table {
        name: format!("sync_{}", tag(j)),
        columns: vec!["quantity".into(), "value".into()],
        rows: sync_rows,
        keys: None,
    });
    summary.insert("spike_count".into(), json!(train.len()));

    let gain = gain_ratio(&st.n1, &st.n2)?;
    let windows_hold = gain.windows.iter().all(|&(a, b)| (a..b).all(|i| st.n2[i] > st.n1[i]));
    let mut g = json!({
        "summary": gain.summary,
        "transmitted_fraction": gain.transmitted_fraction,
        "windows": gain.windows.len(),
        "target": cfg.gain_target,
    });
    if let Some(target) = cfg.gain_target {
        let band = [0.5 * target, 1.5 * target];
        let in_band = gain.summary.is_some_and(|s| s >= band[0] && s <= band[1]);
        g["band"] = json!(band);
        g["in_band"] = json!(in_band);
        if !in_band {
            out.warnings.push(format!(
                "{}: gain summary {:?} misses the band [{}, {}]; fallback applies",
                tag(j),
                gain.summary,
                band[0],
                band[1]
            ));
        }
        g["fallback"] = json!({
            "windows_identified": !gain.windows.is_empty(),
            "n2_exceeds_n1_on_windows": !gain.windows.is_empty() && windows_hold,
            "monotone_across_presets": "compare gain.summary of the weak and strong presets",
        });
    }
    summary.insert("gain".into(), g);
    summary.insert("cavity_regime".into(), regime_json(&st.z, &cfg.regime));
    Ok(())
}

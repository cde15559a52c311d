//! Two-time correlations, spectra, photon statistics and port observables.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::fockspace::{expectation, DensityMatrix, Operator, HERMITIAN_TOL};
use crate::jt_model::CavityOps;
use crate::linalg;
use crate::liouville::{dot, grid_step, propagate, trace_weights, Liouvillian, Propagation};

/// Energies closer than this are treated as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-10;
/// Below this, `⟨O†O⟩` is treated as zero.
pub const OCCUPATION_FLOOR: f64 = 1e-12;
/// A correlation counts as decayed once `|C(T)|` drops below this fraction of its peak.
pub const DECAY_FRACTION: f64 = 1e-6;
/// `‖L ρ‖` above which a state is not treated as stationary.
pub const STATIONARY_TOL: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct PositiveFrequency {
    pub plus: Operator,
    pub minus: Operator,
    /// Eigenpairs with `|E_j − E_k| ≤ DEGENERACY_TOL`, `j < k`, that were
    /// assigned to `plus` by index order.
    pub degenerate_pairs: usize,
}

/// `X⁺ = Σ_{E_j < E_k} ⟨j|O|k⟩ |j⟩⟨k|` in the eigenbasis of `h`.
pub fn positive_frequency_part(h: &Operator, o: &Operator) -> Result<PositiveFrequency> {
    let herm = h.hermiticity_error();
    if herm > HERMITIAN_TOL {
        return Err(Error::NotHermitian(herm));
    }
    if h.space() != o.space() {
        return Err(Error::SpaceMismatch { left: h.space().to_string(), right: o.space().to_string() });
    }
    let e = linalg::eigh(h.matrix());
    let u = &e.vectors;
    let mut ot = u.adjoint() * o.matrix() * u;
    let d = ot.nrows();
    let mut degenerate_pairs = 0;
    for k in 0..d {
        for j in 0..d {
            // eigenvalues are sorted, so j < k means E_j ≤ E_k
            if j < k {
                if (e.values[k] - e.values[j]).abs() <= DEGENERACY_TOL {
                    degenerate_pairs += 1;
                }
            } else {
                ot[(j, k)] = C64::new(0.0, 0.0);
            }
        }
    }
    let plus = Operator::from_matrix(h.space(), u * ot * u.adjoint())?;
    let minus = plus.dagger();
    Ok(PositiveFrequency { plus, minus, degenerate_pairs })
}

/// `γ₀ Tr(X⁻X⁺ ρ)`.
pub fn output_flux(h: &Operator, o: &Operator, gamma0: f64, rho: &DensityMatrix) -> Result<f64> {
    if !(gamma0 >= 0.0 && gamma0.is_finite()) {
        return Err(Error::InvalidParams(format!("gamma0 must be non-negative, got {gamma0}")));
    }
    let x = positive_frequency_part(h, o)?;
    Ok(gamma0 * photon_rate(&x, rho)?)
}

/// `Tr(X⁻X⁺ ρ)`.
pub fn photon_rate(x: &PositiveFrequency, rho: &DensityMatrix) -> Result<f64> {
    Ok(expectation(&(&x.minus * &x.plus), rho)?.re)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Port {
    Cavity1,
    Cavity2,
    /// Port 3 seen through normal mode `α₁`.
    Normal1,
    /// Port 3 seen through normal mode `α₂`.
    Normal2,
}

impl Port {
    pub const ALL: [Port; 4] = [Port::Cavity1, Port::Cavity2, Port::Normal1, Port::Normal2];

    pub fn label(self) -> &'static str {
        match self {
            Port::Cavity1 => "1",
            Port::Cavity2 => "2",
            Port::Normal1 => "3_1",
            Port::Normal2 => "3_2",
        }
    }

    /// Field quadrature read at this port.
    pub fn quadrature(self, ops: &CavityOps) -> Operator {
        let (a1, a2) = ops.cavity_modes();
        let a = match self {
            Port::Cavity1 => a1,
            Port::Cavity2 => a2,
            Port::Normal1 => ops.alpha1.clone(),
            Port::Normal2 => ops.alpha2.clone(),
        };
        &a + &a.dagger()
    }
}

#[derive(Clone, Debug)]
pub struct PortObservables {
    pub ports: Vec<(Port, PositiveFrequency)>,
}

impl PortObservables {
    pub fn new(h: &Operator) -> Result<Self> {
        let ops = CavityOps::new(h.space())?;
        let ports = Port::ALL
            .iter()
            .map(|&p| positive_frequency_part(h, &p.quadrature(&ops)).map(|x| (p, x)))
            .collect::<Result<_>>()?;
        Ok(Self { ports })
    }

    pub fn get(&self, port: Port) -> &PositiveFrequency {
        &self.ports.iter().find(|(p, _)| *p == port).expect("all ports are built").1
    }

    /// `γ₀⟨X⁻X⁺⟩` for every port, in [`Port::ALL`] order.
    pub fn fluxes(&self, gamma0: f64, rho: &DensityMatrix) -> Result<Vec<(Port, f64)>> {
        if !(gamma0 >= 0.0 && gamma0.is_finite()) {
            return Err(Error::InvalidParams(format!("gamma0 must be non-negative, got {gamma0}")));
        }
        self.ports.iter().map(|(p, x)| Ok((*p, gamma0 * photon_rate(x, rho)?))).collect()
    }
}

#[derive(Clone, Debug)]
pub struct CorrelationSeries {
    pub tau: Vec<f64>,
    pub values: Vec<C64>,
    pub operators: (String, String),
    pub state_label: String,
    /// `max |L ρ|` of the state the correlation was taken in.
    pub stationarity_residual: f64,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct CorrelationOptions {
    pub propagation: Propagation,
}

fn check_space(l: &Liouvillian, ops: &[&Operator], rho: &DensityMatrix) -> Result<()> {
    let s = l.space();
    for o in ops.iter().map(|o| o.space()).chain(std::iter::once(rho.space())) {
        if o != s {
            return Err(Error::SpaceMismatch { left: s.to_string(), right: o.to_string() });
        }
    }
    Ok(())
}

fn check_tau(tau: &[f64]) -> Result<()> {
    if tau.first() != Some(&0.0) {
        return Err(Error::Grid("delay grid must start at 0".into()));
    }
    grid_step(tau).map(|_| ())
}

/// `⟨A(τ) B(0)⟩ = Tr[A e^{Lτ}(B ρ)]`.
pub fn two_time_corr(
    l: &Liouvillian,
    rho: &DensityMatrix,
    a: &Operator,
    b: &Operator,
    tau: &[f64],
    opts: &CorrelationOptions,
) -> Result<CorrelationSeries> {
    check_space(l, &[a, b], rho)?;
    check_tau(tau)?;
    let x0 = b.matrix() * rho.matrix();
    let w = trace_weights(a.matrix());
    let mut values = Vec::with_capacity(tau.len());
    propagate(l, x0.as_slice(), tau, opts.propagation, |_, x| {
        values.push(dot(&w, x));
        Ok(())
    })?;
    Ok(CorrelationSeries {
        tau: tau.to_vec(),
        values,
        operators: ("A".into(), "B".into()),
        state_label: String::new(),
        stationarity_residual: stationarity_residual(l, rho),
    })
}

pub fn stationarity_residual(l: &Liouvillian, rho: &DensityMatrix) -> f64 {
    linalg::max_abs_slice(&l.matrix().matvec(rho.matrix().as_slice()))
}

#[derive(Clone, Debug)]
pub struct SpectrumSeries {
    pub omega: Vec<f64>,
    pub values: Vec<f64>,
    /// Time constant `T_w` of the `e^{−τ/T_w}` taper.
    pub taper: f64,
    pub warnings: Vec<String>,
}

impl SpectrumSeries {
    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Trapezoidal `∫ P dω` over the grid.
    pub fn integrated_power(&self) -> f64 {
        self.omega
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(w, p)| 0.5 * (w[1] - w[0]) * (p[0] + p[1]))
            .sum()
    }
}

/// Fraction of the window length used as the taper time constant.
pub const TAPER_FRACTION: f64 = 0.2;

/// `P(ω) = 2 Re ∫₀^T C(τ) e^{−τ/T_w} e^{iωτ} dτ` by the trapezoid rule,
/// with `T_w = T/5`. The kernel sign puts a mode evolving as `e^{−iω₀τ}`
/// at `ω = +ω₀`.
pub fn power_spectrum(corr: &CorrelationSeries, omega: &[f64]) -> Result<SpectrumSeries> {
    check_tau(&corr.tau)?;
    let dt = grid_step(&corr.tau)?;
    let n = corr.tau.len();
    let window = corr.tau[n - 1];
    let taper = TAPER_FRACTION * window;
    let mut warnings = Vec::new();
    let peak = linalg::max_abs_slice(&corr.values);
    let tail = corr.values[n - 1].norm();
    if tail > DECAY_FRACTION * peak {
        warnings.push(format!(
            "correlation has not decayed at the window end (|C(T)|/max|C| = {:.3e})",
            tail / peak
        ));
    }
    if corr.stationarity_residual > STATIONARY_TOL {
        warnings.push(format!("state is not stationary (max |L rho| = {:.3e})", corr.stationarity_residual));
    }
    let weighted: Vec<C64> = corr
        .values
        .iter()
        .zip(&corr.tau)
        .enumerate()
        .map(|(j, (c, t))| {
            let w = if j == 0 || j == n - 1 { 0.5 * dt } else { dt };
            c * (w * (-t / taper).exp())
        })
        .collect();
    let values: Vec<f64> = omega
        .iter()
        .map(|&w| {
            // rotate by e^{iω dt} incrementally; renormalise to stop drift
            let step = C64::from_polar(1.0, w * dt);
            let mut phase = C64::new(1.0, 0.0);
            let mut acc = C64::new(0.0, 0.0);
            for (j, c) in weighted.iter().enumerate() {
                if j % 64 == 0 {
                    phase = C64::from_polar(1.0, w * dt * j as f64);
                }
                acc += c * phase;
                phase *= step;
            }
            2.0 * acc.re
        })
        .collect();
    let spec = SpectrumSeries { omega: omega.to_vec(), values, taper, warnings };
    let min = spec.min_value();
    let mut spec = spec;
    if min < -1e-9 {
        spec.warnings.push(format!("spectrum dips to {min:.3e} (truncation leakage)"));
    }
    Ok(spec)
}

/// Peak position and half width at half maximum, with linear interpolation
/// at the crossings.
pub fn peak_half_width(spec: &SpectrumSeries) -> Option<(f64, f64)> {
    let (imax, &pmax) = spec.values.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1))?;
    let half = 0.5 * pmax;
    let w = &spec.omega;
    let p = &spec.values;
    let mut left = None;
    for i in (0..imax).rev() {
        if p[i] <= half {
            left = Some(w[i] + (half - p[i]) / (p[i + 1] - p[i]) * (w[i + 1] - w[i]));
            break;
        }
    }
    let mut right = None;
    for i in imax + 1..p.len() {
        if p[i] <= half {
            right = Some(w[i - 1] + (p[i - 1] - half) / (p[i - 1] - p[i]) * (w[i] - w[i - 1]));
            break;
        }
    }
    Some((w[imax], 0.5 * (right? - left?)))
}

/// A local maximum of a sampled curve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Peak {
    pub index: usize,
    pub position: f64,
    pub height: f64,
    /// Height above the higher of the two minima separating it from taller
    /// ground on either side (or from the grid edge).
    pub prominence: f64,
}

/// Interior local maxima ordered by decreasing prominence. Plateaus count
/// once, at their first sample.
pub fn spectral_peaks(x: &[f64], y: &[f64]) -> Vec<Peak> {
    let n = y.len().min(x.len());
    let mut peaks = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if y[i] > y[i - 1] {
            let mut j = i;
            while j + 1 < n && y[j + 1] == y[i] {
                j += 1;
            }
            if j + 1 < n && y[j + 1] < y[i] {
                let h = y[i];
                let mut left = h;
                for k in (0..i).rev() {
                    if y[k] > h {
                        break;
                    }
                    left = left.min(y[k]);
                }
                let mut right = h;
                for &v in &y[j + 1..n] {
                    if v > h {
                        break;
                    }
                    right = right.min(v);
                }
                peaks.push(Peak { index: i, position: x[i], height: h, prominence: h - left.max(right) });
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    peaks.sort_by(|a, b| b.prominence.total_cmp(&a.prominence).then(a.index.cmp(&b.index)));
    peaks
}

#[derive(Clone, Debug)]
pub struct G2Series {
    pub tau: Vec<f64>,
    /// NaN where the denominator vanishes.
    pub values: Vec<f64>,
    /// `true` where `values` is defined.
    pub valid: Vec<bool>,
    /// Measurement start time.
    pub t: f64,
    /// `⟨O†O⟩(t + τ)`.
    pub occupation: Vec<f64>,
}

impl G2Series {
    pub fn at_zero(&self) -> f64 {
        self.values[0]
    }
}

/// `g²(τ) = Tr[O†O e^{Lτ}(O ρ(t) O†)] / (⟨O†O⟩(t) ⟨O†O⟩(t+τ))`.
pub fn g2(
    l: &Liouvillian,
    rho0: &DensityMatrix,
    o: &Operator,
    t: f64,
    tau: &[f64],
    opts: &CorrelationOptions,
) -> Result<G2Series> {
    let (mut series, _) = g2_multi(l, rho0, &[o], &[], t, tau, opts)?;
    Ok(series.remove(0))
}

/// [`g2`] for several operators at once. The state trajectory `ρ(t+τ)` is
/// propagated once and also yields `Re⟨E⟩(t+τ)` for every `extra` observable.
pub fn g2_multi(
    l: &Liouvillian,
    rho0: &DensityMatrix,
    ops: &[&Operator],
    extra: &[&Operator],
    t: f64,
    tau: &[f64],
    opts: &CorrelationOptions,
) -> Result<(Vec<G2Series>, Vec<Vec<f64>>)> {
    let all: Vec<&Operator> = ops.iter().chain(extra).copied().collect();
    check_space(l, &all, rho0)?;
    check_tau(tau)?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidParams(format!("measurement time must be non-negative, got {t}")));
    }
    let d = l.dim();
    let rho_t: DMatrix<C64> = if t > 0.0 {
        let mut last = Vec::new();
        propagate(l, rho0.matrix().as_slice(), &[0.0, t], opts.propagation, |_, x| {
            last = x.to_vec();
            Ok(())
        })?;
        linalg::unvec(&last, d)
    } else {
        rho0.matrix().clone()
    };
    let number_weights: Vec<Vec<C64>> =
        ops.iter().map(|o| trace_weights(&(o.matrix().adjoint() * o.matrix()))).collect();
    let extra_weights: Vec<Vec<C64>> = extra.iter().map(|e| trace_weights(e.matrix())).collect();

    let mut occupation = vec![Vec::with_capacity(tau.len()); ops.len()];
    let mut extras = vec![Vec::with_capacity(tau.len()); extra.len()];
    propagate(l, rho_t.as_slice(), tau, opts.propagation, |_, x| {
        for (w, out) in number_weights.iter().zip(occupation.iter_mut()) {
            out.push(dot(w, x).re);
        }
        for (w, out) in extra_weights.iter().zip(extras.iter_mut()) {
            out.push(dot(w, x).re);
        }
        Ok(())
    })?;

    let mut series = Vec::with_capacity(ops.len());
    for ((o, w), occupation) in ops.iter().zip(&number_weights).zip(occupation) {
        let sandwich = o.matrix() * &rho_t * o.matrix().adjoint();
        let mut numer = Vec::with_capacity(tau.len());
        propagate(l, sandwich.as_slice(), tau, opts.propagation, |_, x| {
            numer.push(dot(w, x).re);
            Ok(())
        })?;
        let n0 = occupation[0];
        let mut values = Vec::with_capacity(tau.len());
        let mut valid = Vec::with_capacity(tau.len());
        for (num, nt) in numer.iter().zip(&occupation) {
            let ok = n0 > OCCUPATION_FLOOR && *nt > OCCUPATION_FLOOR;
            valid.push(ok);
            values.push(if ok { num / (n0 * nt) } else { f64::NAN });
        }
        series.push(G2Series { tau: tau.to_vec(), values, valid, t, occupation });
    }
    Ok((series, extras))
}

#[derive(Clone, Debug)]
pub struct Imbalance {
    pub t: Vec<f64>,
    /// `(n₁ − n₂)/(n₁ + n₂)`, NaN where the total vanishes.
    pub z: Vec<f64>,
    pub total: Vec<f64>,
    pub valid: Vec<bool>,
}

pub fn population_imbalance(t: &[f64], n1: &[f64], n2: &[f64]) -> Result<Imbalance> {
    if n1.len() != t.len() || n2.len() != t.len() {
        return Err(Error::Grid(format!(
            "series lengths differ (t: {}, n1: {}, n2: {})",
            t.len(),
            n1.len(),
            n2.len()
        )));
    }
    let mut z = Vec::with_capacity(t.len());
    let mut total = Vec::with_capacity(t.len());
    let mut valid = Vec::with_capacity(t.len());
    for (a, b) in n1.iter().zip(n2) {
        let s = a + b;
        let ok = s > OCCUPATION_FLOOR;
        total.push(s);
        valid.push(ok);
        z.push(if ok { (a - b) / s } else { f64::NAN });
    }
    Ok(Imbalance { t: t.to_vec(), z, total, valid })
}

//! Spike trains in photon-statistics series and their synchronisation with
//! population-imbalance oscillations.

use std::f64::consts::{FRAC_PI_4, PI, TAU};

use crate::error::{Error, Result};
use crate::liouville::grid_step;

pub const MIN_SPIKE_SAMPLES: usize = 16;
pub const MIN_REGIME_SAMPLES: usize = 32;
/// Scales a median absolute deviation to a Gaussian σ.
const MAD_TO_SIGMA: f64 = 1.4826;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpikeConfig {
    pub threshold_sigma: f64,
    /// Minimum spacing between retained spikes, in time units.
    pub min_separation: f64,
    /// Running-median window as a fraction of the series length.
    pub window_fraction: f64,
}

impl Default for SpikeConfig {
    fn default() -> Self {
        Self { threshold_sigma: 4.0, min_separation: 1.0, window_fraction: 0.1 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpikeKind {
    Peak,
    Dip,
}

impl SpikeKind {
    pub fn label(self) -> &'static str {
        match self {
            SpikeKind::Peak => "peak",
            SpikeKind::Dip => "dip",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpikeTrain {
    pub times: Vec<f64>,
    pub indices: Vec<usize>,
    pub amplitudes: Vec<f64>,
    pub kinds: Vec<SpikeKind>,
    /// Running median of the input.
    pub baseline: Vec<f64>,
    /// Detection threshold above/below the baseline at each sample.
    pub threshold: Vec<f64>,
}

impl SpikeTrain {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Centered running median and MAD over `half` samples either side,
/// ignoring NaN samples.
fn running_stats(x: &[f64], half: usize) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let mut med = Vec::with_capacity(n);
    let mut mad = Vec::with_capacity(n);
    let mut buf = Vec::with_capacity(2 * half + 1);
    for i in 0..n {
        let lo = i.saturating_sub(half);
        let hi = (i + half + 1).min(n);
        buf.clear();
        buf.extend(x[lo..hi].iter().copied().filter(|v| !v.is_nan()));
        let m = median(&mut buf);
        for v in buf.iter_mut() {
            *v = (*v - m).abs();
        }
        med.push(m);
        mad.push(MAD_TO_SIGMA * median(&mut buf));
    }
    (med, mad)
}

/// Local extrema that clear `threshold_sigma` running MADs from the running
/// median, thinned to `min_separation` by prominence.
pub fn detect_spikes(t: &[f64], x: &[f64], cfg: &SpikeConfig) -> Result<SpikeTrain> {
    if x.len() != t.len() {
        return Err(Error::Grid(format!("{} times for {} samples", t.len(), x.len())));
    }
    if x.len() < MIN_SPIKE_SAMPLES {
        return Err(Error::SeriesTooShort { len: x.len(), min: MIN_SPIKE_SAMPLES });
    }
    if !(cfg.threshold_sigma >= 0.0 && cfg.min_separation >= 0.0 && cfg.window_fraction > 0.0) {
        return Err(Error::InvalidParams(format!("bad spike config {cfg:?}")));
    }
    let dt = grid_step(t)?;
    let n = x.len();
    let window = ((cfg.window_fraction * n as f64).round() as usize).max(3);
    let (baseline, mad) = running_stats(x, window / 2);
    let scale = x.iter().filter(|v| v.is_finite()).fold(0.0f64, |a, v| a.max(v.abs()));
    // relative floor so a flat series never produces rounding-level spikes
    let floor = 64.0 * f64::EPSILON * scale;
    let threshold: Vec<f64> = mad.iter().map(|m| cfg.threshold_sigma * m).collect();

    let mut candidates: Vec<(usize, SpikeKind, f64)> = Vec::new();
    for i in 0..n {
        let v = x[i];
        if !v.is_finite() || !baseline[i].is_finite() {
            continue;
        }
        let left = if i > 0 { x[i - 1] } else { f64::NAN };
        let right = if i + 1 < n { x[i + 1] } else { f64::NAN };
        // edges and NaN neighbours never qualify as extrema
        if !left.is_finite() || !right.is_finite() {
            continue;
        }
        let excess = v - baseline[i];
        if v > left && v >= right && excess > threshold[i] && excess > floor {
            candidates.push((i, SpikeKind::Peak, excess));
        } else if v < left && v <= right && -excess > threshold[i] && -excess > floor {
            candidates.push((i, SpikeKind::Dip, -excess));
        }
    }
    candidates.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));
    let min_gap = cfg.min_separation / dt - 1e-9;
    let mut kept: Vec<(usize, SpikeKind)> = Vec::new();
    for (i, kind, _) in candidates {
        if kept.iter().all(|&(j, _)| (i.abs_diff(j) as f64) >= min_gap) {
            kept.push((i, kind));
        }
    }
    kept.sort_by_key(|&(i, _)| i);
    Ok(SpikeTrain {
        times: kept.iter().map(|&(i, _)| t[i]).collect(),
        indices: kept.iter().map(|&(i, _)| i).collect(),
        amplitudes: kept.iter().map(|&(i, _)| x[i]).collect(),
        kinds: kept.iter().map(|&(_, k)| k).collect(),
        baseline,
        threshold,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SyncConfig {
    pub phase_tolerance: f64,
    pub lock_threshold: f64,
    /// Envelope ratio (last/first) below which the reference counts as damped.
    pub damping_ratio: f64,
}

impl Default for SyncConfig {
    fn default() -> Self {
        Self { phase_tolerance: FRAC_PI_4, lock_threshold: 0.8, damping_ratio: 0.5 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SyncRegime {
    Locked,
    Drifting,
    Damped,
}

impl SyncRegime {
    pub fn label(self) -> &'static str {
        match self {
            SyncRegime::Locked => "locked",
            SyncRegime::Drifting => "drifting",
            SyncRegime::Damped => "damped",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyncReport {
    pub lock_ratio: f64,
    /// Circular mean spike phase in (−π, π]; maxima of the reference sit at 0.
    pub mean_phase_offset: f64,
    pub regime: SyncRegime,
    /// Spikes inside the span of the reference extrema.
    pub assigned: usize,
    /// Last/first half peak-to-trough amplitude of the reference.
    pub envelope_ratio: f64,
}

/// Strict local maxima (`true`) and minima (`false`) of a series.
fn extrema(x: &[f64]) -> Vec<(usize, bool)> {
    let mut out = Vec::new();
    let mut i = 1;
    while i + 1 < x.len() {
        // walk across flat tops so plateaus count once
        let mut j = i;
        while j + 1 < x.len() && x[j + 1] == x[i] {
            j += 1;
        }
        if j + 1 >= x.len() {
            break;
        }
        let (l, r) = (x[i - 1], x[j + 1]);
        if x[i] > l && x[i] > r {
            out.push(((i + j) / 2, true));
        } else if x[i] < l && x[i] < r {
            out.push(((i + j) / 2, false));
        }
        i = j + 1;
    }
    out
}

fn wrap(phase: f64) -> f64 {
    let p = phase.rem_euclid(TAU);
    if p > PI {
        p - TAU
    } else {
        p
    }
}

/// Phase of each spike relative to the reference oscillation, maxima at 0
/// and minima at π with linear interpolation in between.
pub fn phase_locking(spikes: &SpikeTrain, t_ref: &[f64], reference: &[f64], cfg: &SyncConfig) -> Result<SyncReport> {
    if t_ref.len() != reference.len() {
        return Err(Error::Grid(format!("{} times for {} samples", t_ref.len(), reference.len())));
    }
    let ext = extrema(reference);
    if ext.len() < 2 {
        return Err(Error::NotOscillatory(format!("{} extrema found, need at least 2", ext.len())));
    }
    // unwrapped phase at each extremum
    let mut phases = Vec::with_capacity(ext.len());
    let mut phase = if ext[0].1 { 0.0 } else { PI };
    phases.push(phase);
    for w in ext.windows(2) {
        phase += if w[0].1 == w[1].1 { TAU } else { PI };
        phases.push(phase);
    }
    let mut spike_phases = Vec::new();
    for &ts in &spikes.times {
        let k = ext.partition_point(|&(i, _)| t_ref[i] <= ts);
        if k == 0 || k == ext.len() && t_ref[ext[k - 1].0] < ts {
            continue;
        }
        let k = k.min(ext.len() - 1).max(1);
        let (ta, tb) = (t_ref[ext[k - 1].0], t_ref[ext[k].0]);
        let f = ((ts - ta) / (tb - ta)).clamp(0.0, 1.0);
        spike_phases.push(wrap(phases[k - 1] + f * (phases[k] - phases[k - 1])));
    }
    let assigned = spike_phases.len();
    let (sx, sy) = spike_phases.iter().fold((0.0, 0.0), |(a, b), p| (a + p.cos(), b + p.sin()));
    let mean = if assigned > 0 { sy.atan2(sx) } else { 0.0 };
    let locked = spike_phases.iter().filter(|&&p| wrap(p - mean).abs() < cfg.phase_tolerance).count();
    let lock_ratio = if assigned > 0 { locked as f64 / assigned as f64 } else { 0.0 };

    let amps: Vec<f64> = ext.windows(2).map(|w| 0.5 * (reference[w[1].0] - reference[w[0].0]).abs()).collect();
    let edge = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let m = amps.len().min(2);
    let envelope_ratio = edge(&amps[amps.len() - m..]) / edge(&amps[..m]);
    let regime = if envelope_ratio < cfg.damping_ratio {
        SyncRegime::Damped
    } else if lock_ratio > cfg.lock_threshold {
        SyncRegime::Locked
    } else {
        SyncRegime::Drifting
    };
    Ok(SyncReport { lock_ratio, mean_phase_offset: wrap(mean), regime, assigned, envelope_ratio })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegimeConfig {
    pub min_crossings: usize,
    pub oscillation_amplitude: f64,
    pub localized_mean: f64,
    pub localized_amplitude: f64,
}

impl Default for RegimeConfig {
    fn default() -> Self {
        Self { min_crossings: 2, oscillation_amplitude: 0.1, localized_mean: 0.5, localized_amplitude: 0.25 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    Localized,
    Delocalized,
    Mixed,
}

impl Regime {
    pub fn label(self) -> &'static str {
        match self {
            Regime::Localized => "localized",
            Regime::Delocalized => "delocalized",
            Regime::Mixed => "mixed",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegimeReport {
    pub regime: Regime,
    pub zero_crossings: usize,
    /// Half the peak-to-peak range.
    pub amplitude: f64,
    pub mean: f64,
}

pub fn classify_regime(z: &[f64], cfg: &RegimeConfig) -> Result<RegimeReport> {
    let valid: Vec<f64> = z.iter().copied().filter(|v| v.is_finite()).collect();
    if valid.len() < MIN_REGIME_SAMPLES {
        return Err(Error::SeriesTooShort { len: valid.len(), min: MIN_REGIME_SAMPLES });
    }
    let mut crossings = 0;
    let mut last_sign = 0.0;
    for &v in &valid {
        if v != 0.0 {
            let s = v.signum();
            if last_sign != 0.0 && s != last_sign {
                crossings += 1;
            }
            last_sign = s;
        }
    }
    let (lo, hi) = valid.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let amplitude = 0.5 * (hi - lo);
    let mean = valid.iter().sum::<f64>() / valid.len() as f64;
    let regime = if crossings >= cfg.min_crossings && amplitude > cfg.oscillation_amplitude {
        Regime::Delocalized
    } else if mean.abs() > cfg.localized_mean && amplitude < cfg.localized_amplitude {
        Regime::Localized
    } else {
        Regime::Mixed
    };
    Ok(RegimeReport { regime, zero_crossings: crossings, amplitude, mean })
}

#[derive(Clone, Debug, PartialEq)]
pub struct GainReport {
    /// `n₂/n₁`, NaN where `n₁` vanishes.
    pub ratio: Vec<f64>,
    /// Median ratio over samples with `n₂ > n₁`.
    pub summary: Option<f64>,
    /// Fraction of valid samples in the transmitted regime.
    pub transmitted_fraction: f64,
    /// Maximal runs `[start, end)` of transmitted samples.
    pub windows: Vec<(usize, usize)>,
}

pub const GAIN_FLOOR: f64 = 1e-12;

pub fn gain_ratio(n1: &[f64], n2: &[f64]) -> Result<GainReport> {
    if n1.len() != n2.len() {
        return Err(Error::Grid(format!("series lengths differ ({} vs {})", n1.len(), n2.len())));
    }
    let ratio: Vec<f64> = n1
        .iter()
        .zip(n2)
        .map(|(&a, &b)| if a > GAIN_FLOOR && b.is_finite() { b / a } else { f64::NAN })
        .collect();
    let transmitted: Vec<bool> = ratio.iter().zip(n1.iter().zip(n2)).map(|(r, (a, b))| r.is_finite() && b > a).collect();
    let mut windows = Vec::new();
    let mut start = None;
    for (i, &tr) in transmitted.iter().enumerate() {
        match (tr, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                windows.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        windows.push((s, transmitted.len()));
    }
    let mut selected: Vec<f64> = ratio.iter().zip(&transmitted).filter(|(_, &t)| t).map(|(r, _)| *r).collect();
    let valid = ratio.iter().filter(|r| r.is_finite()).count();
    let transmitted_fraction = if valid > 0 { selected.len() as f64 / valid as f64 } else { 0.0 };
    let summary = if selected.is_empty() { None } else { Some(median(&mut selected)) };
    Ok(GainReport { ratio, summary, transmitted_fraction, windows })
}

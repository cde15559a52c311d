//! Time evolution of vectorised states.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use super::Liouvillian;
use crate::error::{Error, Result};
use crate::fockspace::{DensityMatrix, Operator};
use crate::linalg;

/// Largest superoperator dimension accepted by the dense exponential path.
pub const EXACT_MAX_DIM: usize = 2500;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { rtol: 1e-8, atol: 1e-10 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Propagation {
    /// Embedded Dormand–Prince 5(4) with step control.
    Adaptive(Tolerances),
    /// Dense `exp(L·dt)` applied grid step by grid step.
    Exact,
}

impl Default for Propagation {
    fn default() -> Self {
        Propagation::Adaptive(Tolerances::default())
    }
}

#[derive(Clone, Debug)]
pub struct EvolveOptions {
    pub propagation: Propagation,
    pub store_states: bool,
    /// How many grid samples get a full eigenvalue positivity check.
    pub positivity_samples: usize,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self { propagation: Propagation::default(), store_states: false, positivity_samples: 64 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PropagationStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub t_grid: Vec<f64>,
    /// `observables[k][i] = Tr(O_k ρ(t_i))`.
    pub observables: Vec<Vec<C64>>,
    pub states: Option<Vec<DensityMatrix>>,
    /// max |Tr ρ(t) − 1| over the grid.
    pub trace_drift: f64,
    /// Smallest eigenvalue seen on the checked samples.
    pub min_eigenvalue: f64,
    pub stats: PropagationStats,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_grid.is_empty()
    }

    /// Real parts of one observable series.
    pub fn real_series(&self, k: usize) -> Vec<f64> {
        self.observables[k].iter().map(|z| z.re).collect()
    }
}

/// `n` samples `0, dt, 2dt, …`.
pub fn uniform_grid(dt: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64 * dt).collect()
}

/// Spacing of a uniform increasing grid.
pub fn grid_step(t: &[f64]) -> Result<f64> {
    if t.len() < 2 {
        return Err(Error::Grid(format!("need at least 2 samples, got {}", t.len())));
    }
    if t.iter().any(|x| !x.is_finite()) {
        return Err(Error::Grid("non-finite sample".into()));
    }
    let dt = (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64;
    if dt <= 0.0 {
        return Err(Error::Grid("grid must be increasing".into()));
    }
    for (i, w) in t.windows(2).enumerate() {
        if ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.max(1.0) {
            return Err(Error::Grid(format!("spacing at index {i} is {} but the mean step is {dt}", w[1] - w[0])));
        }
    }
    Ok(dt)
}

/// Vector `w` with `Tr(Oρ) = Σ w_k vec(ρ)_k`.
pub(crate) fn trace_weights(op: &DMatrix<C64>) -> Vec<C64> {
    op.transpose().as_slice().to_vec()
}

pub(crate) fn dot(w: &[C64], x: &[C64]) -> C64 {
    w.iter().zip(x).fold(C64::new(0.0, 0.0), |acc, (a, b)| acc + a * b)
}

/// Evolve `x0` over `t_grid` under `dx/dt = L x`. `sink(i, x)` receives the
/// state at every grid point, starting with `x0` at index 0.
pub fn propagate<F>(l: &Liouvillian, x0: &[C64], t_grid: &[f64], method: Propagation, mut sink: F) -> Result<PropagationStats>
where
    F: FnMut(usize, &[C64]) -> Result<()>,
{
    let n = l.matrix().nrows();
    if x0.len() != n {
        return Err(Error::DimensionMismatch { rows: x0.len(), cols: 1, expected: n });
    }
    if t_grid.is_empty() {
        return Err(Error::Grid("empty grid".into()));
    }
    sink(0, x0)?;
    if t_grid.len() == 1 {
        return Ok(PropagationStats::default());
    }
    let dt = grid_step(t_grid)?;
    match method {
        Propagation::Adaptive(tol) => dopri5(l, x0, t_grid, tol, &mut sink),
        Propagation::Exact => exact(l, x0, t_grid.len(), dt, &mut sink),
    }
}

fn exact<F>(l: &Liouvillian, x0: &[C64], steps: usize, dt: f64, sink: &mut F) -> Result<PropagationStats>
where
    F: FnMut(usize, &[C64]) -> Result<()>,
{
    let n = x0.len();
    if n > EXACT_MAX_DIM {
        return Err(Error::InvalidParams(format!(
            "exact propagation needs a dense {n}x{n} exponential; limit is {EXACT_MAX_DIM}"
        )));
    }
    let step = (l.to_dense() * C64::new(dt, 0.0)).exp();
    let mut x = DVector::from_column_slice(x0);
    for i in 1..steps {
        x = &step * x;
        sink(i, x.as_slice())?;
    }
    Ok(PropagationStats { accepted: steps - 1, rejected: 0, evaluations: 0 })
}

// Dormand–Prince 5(4) tableau
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// b − b* for the embedded error estimate
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn axpy_stage(out: &mut [C64], y: &[C64], h: f64, terms: &[(f64, &[C64])]) {
    for i in 0..out.len() {
        let mut acc = C64::new(0.0, 0.0);
        for (a, k) in terms {
            acc += k[i] * *a;
        }
        out[i] = y[i] + acc * h;
    }
}

fn dopri5<F>(l: &Liouvillian, x0: &[C64], t_grid: &[f64], tol: Tolerances, sink: &mut F) -> Result<PropagationStats>
where
    F: FnMut(usize, &[C64]) -> Result<()>,
{
    let n = x0.len();
    let m = l.matrix();
    let zero = C64::new(0.0, 0.0);
    let mut y = x0.to_vec();
    let mut k1 = vec![zero; n];
    let mut k2 = vec![zero; n];
    let mut k3 = vec![zero; n];
    let mut k4 = vec![zero; n];
    let mut k5 = vec![zero; n];
    let mut k6 = vec![zero; n];
    let mut k7 = vec![zero; n];
    let mut tmp = vec![zero; n];
    let mut ynew = vec![zero; n];
    let mut stats = PropagationStats::default();

    m.matvec_into(&y, &mut k1);
    stats.evaluations += 1;
    let mut t = t_grid[0];
    let t_end = t_grid[t_grid.len() - 1];
    let dt = grid_step(t_grid)?;
    let mut h = initial_step(&y, &k1, tol, dt);
    let mut next = 1;

    while next < t_grid.len() {
        let target = t_grid[next];
        let remaining = target - t;
        let mut hstep = h;
        let mut hits = false;
        if hstep >= remaining * (1.0 - 1e-12) {
            hstep = remaining;
            hits = true;
        }
        if hstep < 1e-14 * t.abs().max(1.0) {
            return Err(Error::Integrator { time: t, reason: format!("step size underflow (h = {hstep:e})") });
        }

        axpy_stage(&mut tmp, &y, hstep, &[(A21, &k1)]);
        m.matvec_into(&tmp, &mut k2);
        axpy_stage(&mut tmp, &y, hstep, &[(A31, &k1), (A32, &k2)]);
        m.matvec_into(&tmp, &mut k3);
        axpy_stage(&mut tmp, &y, hstep, &[(A41, &k1), (A42, &k2), (A43, &k3)]);
        m.matvec_into(&tmp, &mut k4);
        axpy_stage(&mut tmp, &y, hstep, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]);
        m.matvec_into(&tmp, &mut k5);
        axpy_stage(&mut tmp, &y, hstep, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]);
        m.matvec_into(&tmp, &mut k6);
        axpy_stage(&mut ynew, &y, hstep, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
        m.matvec_into(&ynew, &mut k7);
        stats.evaluations += 6;

        let mut err = 0.0;
        for i in 0..n {
            let e = (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7) * hstep;
            let scale = tol.atol + tol.rtol * y[i].norm().max(ynew[i].norm());
            // max norm: every component meets the tolerance on its own
            err = f64::max(err, e.norm() / scale);
        }
        if !err.is_finite() {
            return Err(Error::Integrator { time: t, reason: "non-finite state".into() });
        }

        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        if err <= 1.0 {
            stats.accepted += 1;
            t = if hits { target } else { t + hstep };
            std::mem::swap(&mut y, &mut ynew);
            std::mem::swap(&mut k1, &mut k7);
            if hits {
                sink(next, &y)?;
                next += 1;
                // a clamped step says nothing about the natural step size
                h = h.max(hstep * factor);
            } else {
                h = hstep * factor;
            }
            if t >= t_end {
                break;
            }
        } else {
            stats.rejected += 1;
            h = hstep * factor.min(1.0);
        }
    }
    Ok(stats)
}

fn initial_step(y: &[C64], f: &[C64], tol: Tolerances, dt: f64) -> f64 {
    let mut d0 = 0.0;
    let mut d1 = 0.0;
    for (yi, fi) in y.iter().zip(f) {
        let sc = tol.atol + tol.rtol * yi.norm();
        d0 += (yi.norm() / sc).powi(2);
        d1 += (fi.norm() / sc).powi(2);
    }
    let h = if d0 < 1e-10 || d1 < 1e-10 { 1e-6 } else { 0.01 * (d0 / d1).sqrt() };
    h.min(dt)
}

/// Evolve a density matrix and record `Tr(O ρ(t))` for each observable.
pub fn evolve(rho0: &DensityMatrix, l: &Liouvillian, t_grid: &[f64], observables: &[Operator]) -> Result<Trajectory> {
    evolve_with(rho0, l, t_grid, observables, &EvolveOptions::default())
}

pub fn evolve_with(
    rho0: &DensityMatrix,
    l: &Liouvillian,
    t_grid: &[f64],
    observables: &[Operator],
    opts: &EvolveOptions,
) -> Result<Trajectory> {
    let space = l.space();
    if rho0.space() != space {
        return Err(Error::SpaceMismatch { left: space.to_string(), right: rho0.space().to_string() });
    }
    for o in observables {
        if o.space() != space {
            return Err(Error::SpaceMismatch { left: space.to_string(), right: o.space().to_string() });
        }
    }
    if t_grid.len() > 1 {
        grid_step(t_grid)?;
    }
    let d = space.total_dim();
    let weights: Vec<Vec<C64>> = observables.iter().map(|o| trace_weights(o.matrix())).collect();
    let check_at = positivity_indices(t_grid.len(), opts.positivity_samples);

    let mut series = vec![Vec::with_capacity(t_grid.len()); observables.len()];
    let mut states = opts.store_states.then(Vec::new);
    let mut trace_drift: f64 = 0.0;
    let mut min_eig = f64::INFINITY;
    let mut next_check = 0;

    let stats = propagate(l, rho0.matrix().as_slice(), t_grid, opts.propagation, |i, x| {
        for (w, s) in weights.iter().zip(series.iter_mut()) {
            s.push(dot(w, x));
        }
        let tr: C64 = (0..d).map(|k| x[k + k * d]).sum();
        trace_drift = trace_drift.max((tr - C64::new(1.0, 0.0)).norm());
        let needs_matrix = states.is_some() || check_at.get(next_check) == Some(&i);
        if needs_matrix {
            let m = linalg::unvec(x, d);
            if check_at.get(next_check) == Some(&i) {
                next_check += 1;
                let e = linalg::eigh(&m);
                min_eig = min_eig.min(e.values[0]);
            }
            if let Some(st) = states.as_mut() {
                st.push(DensityMatrix::new_unchecked(space, m)?);
            }
        }
        Ok(())
    })?;

    Ok(Trajectory {
        t_grid: t_grid.to_vec(),
        observables: series,
        states,
        trace_drift,
        min_eigenvalue: min_eig,
        stats,
    })
}

/// Evenly spread sample indices, always including the first and last.
fn positivity_indices(len: usize, samples: usize) -> Vec<usize> {
    if len == 0 || samples == 0 {
        return Vec::new();
    }
    if samples >= len {
        return (0..len).collect();
    }
    let mut out: Vec<usize> = (0..samples)
        .map(|j| if samples == 1 { len - 1 } else { j * (len - 1) / (samples - 1) })
        .collect();
    out.dedup();
    out
}

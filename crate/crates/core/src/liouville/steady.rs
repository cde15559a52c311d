//! Steady states of a Liouvillian.
//!
//! The null vector is found from the bordered system `(L + v wᵀ) x = v`,
//! where `w` is the trace functional and `v` a multiple of the identity.
//! `wᵀL = 0` forces `Tr x = 1` and then `L x = 0`. Small systems use a dense
//! LU; large ones use restarted GMRES preconditioned by the block-secular
//! part of the generator in the eigenbasis of H.

use nalgebra::{DMatrix, Dyn, LU};
use num_complex::Complex64 as C64;

use super::Liouvillian;
use crate::error::{Error, Result};
use crate::fockspace::DensityMatrix;
use crate::linalg;

/// Superoperator dimension up to which the dense solver is chosen.
pub const DENSE_MAX_DIM: usize = 1024;
/// Required `max |L ρ_ss|`.
pub const RESIDUAL_TOL: f64 = 1e-10;
/// Eigenvalues below this magnitude count as zero modes.
pub const ZERO_EIGENVALUE_TOL: f64 = 1e-10;

const CLUSTER_MAX: usize = 96;
const DEGENERATE_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SteadyStateMethod {
    Auto,
    Dense,
    Iterative,
}

#[derive(Clone, Debug)]
pub struct SteadyStateReport {
    pub state: DensityMatrix,
    /// `max |L ρ|` of the returned state.
    pub residual: f64,
    pub method: SteadyStateMethod,
    pub iterations: usize,
    /// Second-smallest |eigenvalue| of L (dense path only).
    pub gap: Option<f64>,
}

pub fn steady_state(l: &Liouvillian) -> Result<DensityMatrix> {
    steady_state_with(l, SteadyStateMethod::Auto).map(|r| r.state)
}

pub fn steady_state_with(l: &Liouvillian, method: SteadyStateMethod) -> Result<SteadyStateReport> {
    let d = l.dim();
    if l.is_closed() && d > 1 {
        return Err(Error::DegenerateSteadyState { multiplicity: closed_multiplicity(l).to_string() });
    }
    let method = match method {
        SteadyStateMethod::Auto if d * d <= DENSE_MAX_DIM => SteadyStateMethod::Dense,
        SteadyStateMethod::Auto => SteadyStateMethod::Iterative,
        m => m,
    };
    let mu = l.total_rate().max(f64::MIN_POSITIVE);
    let (x, iterations, gap) = match method {
        SteadyStateMethod::Dense => {
            let (x, gap) = dense_solve(l, mu)?;
            (x, 0, Some(gap))
        }
        _ => {
            let pre = SecularPreconditioner::new(l, mu);
            let b = identity_rhs(d, mu);
            let (x, it) = gmres_solve(l, &pre, &b)?;
            // a second right-hand side lands on the same state only if the
            // null space is one-dimensional
            let alt = ramp_rhs(d, mu);
            let (y, it2) = gmres_solve(l, &pre, &alt)?;
            let rx = normalise(&x, d);
            let ry = normalise(&y, d);
            if linalg::max_abs(&(&rx - &ry)) > 1e-8 {
                return Err(Error::DegenerateSteadyState { multiplicity: ">= 2".into() });
            }
            (x, it + it2, None)
        }
    };
    let rho = normalise(&x, d);
    let residual = linalg::max_abs_slice(&l.matrix().matvec(rho.as_slice()));
    if residual > RESIDUAL_TOL {
        return Err(Error::Solver(format!("steady-state residual {residual:e} exceeds {RESIDUAL_TOL:e}")));
    }
    Ok(SteadyStateReport {
        state: DensityMatrix::new_unchecked(l.space(), rho)?,
        residual,
        method,
        iterations,
        gap,
    })
}

/// Σ g² over the degenerate eigenspaces of H: the null-space dimension of
/// `−i[H, ·]`.
fn closed_multiplicity(l: &Liouvillian) -> usize {
    let e = linalg::eigh(l.hamiltonian().matrix());
    let mut total = 0;
    let mut run = 1;
    for w in e.values.windows(2) {
        if (w[1] - w[0]).abs() <= DEGENERATE_TOL {
            run += 1;
        } else {
            total += run * run;
            run = 1;
        }
    }
    total + run * run
}

fn normalise(x: &[C64], d: usize) -> DMatrix<C64> {
    let m = linalg::unvec(x, d);
    let mut h = (&m + m.adjoint()) * C64::new(0.5, 0.0);
    let tr = h.trace();
    h /= tr;
    h
}

fn identity_rhs(d: usize, mu: f64) -> Vec<C64> {
    let mut v = vec![C64::new(0.0, 0.0); d * d];
    for i in 0..d {
        v[i + i * d] = C64::new(mu / d as f64, 0.0);
    }
    v
}

fn ramp_rhs(d: usize, mu: f64) -> Vec<C64> {
    let total = (d * (d + 1) / 2) as f64;
    let mut v = vec![C64::new(0.0, 0.0); d * d];
    for i in 0..d {
        v[i + i * d] = C64::new(mu * (i + 1) as f64 / total, 0.0);
    }
    v
}

fn trace_of_vec(x: &[C64], d: usize) -> C64 {
    (0..d).map(|i| x[i + i * d]).sum()
}

fn dense_solve(l: &Liouvillian, mu: f64) -> Result<(Vec<C64>, f64)> {
    let d = l.dim();
    let ld = l.to_dense();
    let (_, t) = nalgebra::linalg::Schur::new(ld.clone()).unpack();
    let mut mags: Vec<f64> = (0..t.nrows()).map(|i| t[(i, i)].norm()).collect();
    mags.sort_by(f64::total_cmp);
    let zeros = mags.iter().filter(|&&m| m <= ZERO_EIGENVALUE_TOL).count();
    let gap = mags.get(1).copied().unwrap_or(f64::INFINITY);
    if gap <= ZERO_EIGENVALUE_TOL {
        return Err(Error::DegenerateSteadyState { multiplicity: zeros.to_string() });
    }
    let v = identity_rhs(d, mu);
    let mut a = ld;
    for col in 0..d {
        let j = col + col * d;
        for row in 0..d {
            a[(row + row * d, j)] += v[row + row * d];
        }
    }
    let lu = LU::new(a);
    let x = lu
        .solve(&nalgebra::DVector::from_column_slice(&v))
        .ok_or_else(|| Error::Solver("bordered liouvillian is singular".into()))?;
    Ok((x.as_slice().to_vec(), gap))
}

struct Block {
    elems: Vec<usize>,
    lu: LU<C64, Dyn, Dyn>,
}

/// Inverse of the block-secular approximation of `L + v wᵀ`, applied in the
/// eigenbasis of H.
struct SecularPreconditioner {
    d: usize,
    u: DMatrix<C64>,
    blocks: Vec<Block>,
}

impl SecularPreconditioner {
    fn new(l: &Liouvillian, mu: f64) -> Self {
        let d = l.dim();
        let eig = linalg::eigh(l.hamiltonian().matrix());
        let u = eig.vectors;
        let ud = u.adjoint();
        let ops: Vec<(f64, DMatrix<C64>)> = l
            .channels()
            .iter()
            .filter(|c| c.rate > 0.0)
            .map(|c| (c.rate, &ud * c.operator.matrix() * &u))
            .collect();
        let mut gamma = DMatrix::<C64>::zeros(d, d);
        for (r, c) in &ops {
            gamma += c.adjoint() * c * C64::new(*r, 0.0);
        }
        let omega = |k: usize| eig.values[k % d] - eig.values[k / d];
        let clusters = cluster_elements(d, &omega);
        let half = C64::new(0.5, 0.0);
        let blocks = clusters
            .into_iter()
            .map(|elems| {
                let n = elems.len();
                let a = DMatrix::from_fn(n, n, |i, j| {
                    let (m, nn) = (elems[i] % d, elems[i] / d);
                    let (k, ll) = (elems[j] % d, elems[j] / d);
                    let mut z = C64::new(0.0, 0.0);
                    if i == j {
                        z += C64::new(0.0, -omega(elems[i]));
                    }
                    for (r, c) in &ops {
                        z += c[(m, k)] * c[(nn, ll)].conj() * *r;
                    }
                    if nn == ll {
                        z -= gamma[(m, k)] * half;
                    }
                    if m == k {
                        z -= gamma[(ll, nn)] * half;
                    }
                    if m == nn && k == ll {
                        z += C64::new(mu / d as f64, 0.0);
                    }
                    z
                });
                Block { elems, lu: LU::new(a) }
            })
            .collect();
        Self { d, u, blocks }
    }

    fn apply(&self, r: &[C64]) -> Vec<C64> {
        let d = self.d;
        let rt = self.u.adjoint() * linalg::unvec(r, d) * &self.u;
        let rs = rt.as_slice();
        let mut zt = vec![C64::new(0.0, 0.0); d * d];
        for b in &self.blocks {
            let rhs = nalgebra::DVector::from_iterator(b.elems.len(), b.elems.iter().map(|&k| rs[k]));
            // a singular block falls back to the identity on its elements
            let sol = b.lu.solve(&rhs).unwrap_or(rhs);
            for (i, &k) in b.elems.iter().enumerate() {
                zt[k] = sol[i];
            }
        }
        let z = &self.u * linalg::unvec(&zt, d) * self.u.adjoint();
        z.as_slice().to_vec()
    }
}

/// Group vectorised eigenbasis elements by Bohr frequency. Exactly resonant
/// elements (including all populations) stay together; the rest are split
/// at the largest frequency gap until clusters are small.
fn cluster_elements(d: usize, omega: &dyn Fn(usize) -> f64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..d * d).collect();
    order.sort_by(|&a, &b| omega(a).total_cmp(&omega(b)).then(a.cmp(&b)));
    let mut zero = Vec::new();
    let mut neg = Vec::new();
    let mut pos = Vec::new();
    for k in order {
        let w = omega(k);
        if w.abs() <= DEGENERATE_TOL {
            zero.push(k);
        } else if w < 0.0 {
            neg.push(k);
        } else {
            pos.push(k);
        }
    }
    let mut out = vec![zero];
    split_by_gap(&neg, omega, &mut out);
    split_by_gap(&pos, omega, &mut out);
    out.retain(|c| !c.is_empty());
    out
}

fn split_by_gap(sorted: &[usize], omega: &dyn Fn(usize) -> f64, out: &mut Vec<Vec<usize>>) {
    if sorted.is_empty() {
        return;
    }
    if sorted.len() <= CLUSTER_MAX {
        out.push(sorted.to_vec());
        return;
    }
    let mut best = 0;
    let mut best_gap = -1.0;
    for i in 1..sorted.len() {
        let g = omega(sorted[i]) - omega(sorted[i - 1]);
        if g > best_gap {
            best_gap = g;
            best = i;
        }
    }
    if best_gap <= DEGENERATE_TOL {
        out.push(sorted.to_vec());
        return;
    }
    split_by_gap(&sorted[..best], omega, out);
    split_by_gap(&sorted[best..], omega, out);
}

/// `(L + v wᵀ) x` with a diagonal border `v`.
fn bordered_apply(l: &Liouvillian, border: &[C64], x: &[C64], out: &mut [C64]) {
    let d = l.dim();
    l.apply_vec(x, out);
    let tr = trace_of_vec(x, d);
    for i in 0..d {
        out[i + i * d] += tr * border[i + i * d];
    }
}

fn norm2(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Right-preconditioned restarted GMRES on `(L + b wᵀ) x = b`.
fn gmres_solve(l: &Liouvillian, pre: &SecularPreconditioner, b: &[C64]) -> Result<(Vec<C64>, usize)> {
    const RESTART: usize = 60;
    const MAX_ITER: usize = 3000;
    const REL_TOL: f64 = 1e-13;

    let n = b.len();
    let zero = C64::new(0.0, 0.0);
    let bnorm = norm2(b);
    let mut x = pre.apply(b);
    let mut r = vec![zero; n];
    let mut total = 0;
    loop {
        bordered_apply(l, b, &x, &mut r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        let beta = norm2(&r);
        if beta <= REL_TOL * bnorm {
            return Ok((x, total));
        }
        if total >= MAX_ITER {
            return Err(Error::Solver(format!(
                "gmres stalled after {total} iterations (relative residual {:e})",
                beta / bnorm
            )));
        }
        let mut basis: Vec<Vec<C64>> = vec![r.iter().map(|z| z / beta).collect()];
        let mut hess: Vec<Vec<C64>> = Vec::new();
        let mut cs: Vec<f64> = Vec::new();
        let mut sn: Vec<C64> = Vec::new();
        let mut g = vec![C64::new(beta, 0.0)];
        let mut w = vec![zero; n];
        for j in 0..RESTART {
            total += 1;
            let z = pre.apply(&basis[j]);
            bordered_apply(l, b, &z, &mut w);
            let mut col = vec![zero; j + 2];
            // two passes of modified Gram–Schmidt
            for _ in 0..2 {
                for (i, v) in basis.iter().enumerate() {
                    let h: C64 = v.iter().zip(&w).map(|(a, b)| a.conj() * b).sum();
                    col[i] += h;
                    for (wk, vk) in w.iter_mut().zip(v) {
                        *wk -= h * vk;
                    }
                }
            }
            let hn = norm2(&w);
            col[j + 1] = C64::new(hn, 0.0);
            for i in 0..j {
                let (a, bb) = (col[i], col[i + 1]);
                col[i] = a * cs[i] + sn[i] * bb;
                col[i + 1] = -sn[i].conj() * a + bb * cs[i];
            }
            let (a, bb) = (col[j], col[j + 1]);
            let rr = (a.norm_sqr() + bb.norm_sqr()).sqrt();
            let (c, s) = if a.norm() == 0.0 {
                (0.0, C64::new(1.0, 0.0))
            } else {
                (a.norm() / rr, (a / a.norm()) * bb.conj() / rr)
            };
            col[j] = c * a + s * bb;
            col[j + 1] = zero;
            cs.push(c);
            sn.push(s);
            let gj = g[j];
            g[j] = gj * c;
            g.push(-s.conj() * gj);
            hess.push(col);
            let res = g[j + 1].norm();
            if hn == 0.0 || res <= 0.1 * REL_TOL * bnorm || total >= MAX_ITER {
                break;
            }
            basis.push(w.iter().map(|z| z / hn).collect());
        }
        let k = hess.len();
        let mut y = vec![zero; k];
        for i in (0..k).rev() {
            let mut acc = g[i];
            for jj in i + 1..k {
                acc -= hess[jj][i] * y[jj];
            }
            y[i] = acc / hess[i][i];
        }
        let mut comb = vec![zero; n];
        for (yi, v) in y.iter().zip(&basis) {
            for (c, vk) in comb.iter_mut().zip(v) {
                *c += yi * vk;
            }
        }
        let dx = pre.apply(&comb);
        for (xi, di) in x.iter_mut().zip(&dx) {
            *xi += di;
        }
    }
}

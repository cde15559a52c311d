//! Lindblad generators, time evolution and steady states.
//!
//! Density matrices are vectorised by column stacking, so `vec(AXB) =
//! (Bᵀ ⊗ A) vec(X)`. The superoperator is held in compressed-row form; the
//! dense matrix is available through [`Liouvillian::to_dense`] for small
//! systems.

mod evolve;
mod sparse;
mod steady;

pub use evolve::{
    evolve, evolve_with, grid_step, propagate, uniform_grid, EvolveOptions, Propagation, PropagationStats,
    Tolerances, Trajectory, EXACT_MAX_DIM,
};
pub(crate) use evolve::{dot, trace_weights};
pub use sparse::SparseMatrix;
pub use steady::{steady_state, steady_state_with, SteadyStateMethod, SteadyStateReport};

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::fockspace::{self, HilbertSpace, Operator};
use crate::jt_model::CavityOps;
use crate::linalg;

/// Rates of the cavity/qubit environment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DissipationParams {
    pub kappa1: f64,
    pub kappa2: f64,
    pub gamma: f64,
    pub gamma_phi: f64,
    pub n_th: f64,
}

impl DissipationParams {
    /// κ₁ = κ₂ = γ = 0.001, γ_φ = 0.01, n_th = 0.15.
    pub fn circuit_defaults() -> Self {
        Self { kappa1: 0.001, kappa2: 0.001, gamma: 0.001, gamma_phi: 0.01, n_th: 0.15 }
    }

    pub fn closed() -> Self {
        Self { kappa1: 0.0, kappa2: 0.0, gamma: 0.0, gamma_phi: 0.0, n_th: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let named = [
            ("kappa1", self.kappa1),
            ("kappa2", self.kappa2),
            ("gamma", self.gamma),
            ("gamma_phi", self.gamma_phi),
            ("n_th", self.n_th),
        ];
        for (name, v) in named {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParams(format!("{name} must be a finite non-negative number, got {v}")));
            }
        }
        Ok(())
    }
}

/// Which pair of modes the cavity loss channels act on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DissipationBasis {
    /// Normal modes `α₁, α₂`.
    Normal,
    /// Bare cavity modes `a₁, a₂`.
    Bare,
}

impl DissipationBasis {
    pub fn label(self) -> &'static str {
        match self {
            DissipationBasis::Normal => "normal",
            DissipationBasis::Bare => "bare",
        }
    }
}

/// One collapse channel `rate · D[operator]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Channel {
    pub label: String,
    pub operator: Operator,
    pub rate: f64,
}

#[derive(Clone, Debug)]
pub struct Liouvillian {
    space: HilbertSpace,
    hamiltonian: Operator,
    channels: Vec<Channel>,
    matrix: SparseMatrix,
}

/// `X ↦ C X C† − ½(C†C X + X C†C)` as a superoperator.
pub fn lindblad_dissipator(c: &Operator) -> SparseMatrix {
    let d = c.dim();
    let id = SparseMatrix::identity(d);
    let cs = SparseMatrix::from_dense(c.matrix());
    let cdc = SparseMatrix::from_dense(&(c.matrix().adjoint() * c.matrix()));
    let jump = SparseMatrix::kron(&cs.conj(), &cs);
    let left = SparseMatrix::kron(&id, &cdc);
    let right = SparseMatrix::kron(&cdc.transpose(), &id);
    let half = C64::new(-0.5, 0.0);
    SparseMatrix::linear_combination(d * d, &[(C64::new(1.0, 0.0), &jump), (half, &left), (half, &right)])
}

/// `X ↦ −i[H, X]`.
pub fn hamiltonian_generator(h: &Operator) -> SparseMatrix {
    let d = h.dim();
    let id = SparseMatrix::identity(d);
    let hs = SparseMatrix::from_dense(h.matrix());
    let left = SparseMatrix::kron(&id, &hs);
    let right = SparseMatrix::kron(&hs.transpose(), &id);
    SparseMatrix::linear_combination(d * d, &[(C64::new(0.0, -1.0), &left), (C64::new(0.0, 1.0), &right)])
}

impl Liouvillian {
    /// `−i[H, ·] + Σ rate·D[C]` over the given channels.
    pub fn new(hamiltonian: &Operator, channels: Vec<Channel>) -> Result<Self> {
        let herm = hamiltonian.hermiticity_error();
        if herm > fockspace::HERMITIAN_TOL {
            return Err(Error::NotHermitian(herm));
        }
        for ch in &channels {
            if !(ch.rate >= 0.0 && ch.rate.is_finite()) {
                return Err(Error::InvalidParams(format!("channel {} has rate {}", ch.label, ch.rate)));
            }
            if ch.operator.space() != hamiltonian.space() {
                return Err(Error::SpaceMismatch {
                    left: hamiltonian.space().to_string(),
                    right: ch.operator.space().to_string(),
                });
            }
        }
        let matrix = assemble(hamiltonian, &channels);
        Ok(Self { space: hamiltonian.space().clone(), hamiltonian: hamiltonian.clone(), channels, matrix })
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn hamiltonian(&self) -> &Operator {
        &self.hamiltonian
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    /// Hilbert-space dimension `d`; the superoperator is `d² × d²`.
    pub fn dim(&self) -> usize {
        self.space.total_dim()
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        self.matrix.to_dense()
    }

    /// Rebuild the generator from the stored Hamiltonian and channel list.
    pub fn rebuild(&self) -> SparseMatrix {
        assemble(&self.hamiltonian, &self.channels)
    }

    pub fn apply_vec(&self, x: &[C64], out: &mut [C64]) {
        self.matrix.matvec_into(x, out);
    }

    /// `L(X)` for a d×d matrix.
    pub fn apply(&self, x: &DMatrix<C64>) -> DMatrix<C64> {
        let y = self.matrix.matvec(x.as_slice());
        linalg::unvec(&y, self.dim())
    }

    /// Sum of all channel rates; a natural scale for the dissipative part.
    pub fn total_rate(&self) -> f64 {
        self.channels.iter().map(|c| c.rate).sum()
    }

    pub fn is_closed(&self) -> bool {
        self.channels.iter().all(|c| c.rate == 0.0)
    }
}

fn assemble(h: &Operator, channels: &[Channel]) -> SparseMatrix {
    let d = h.dim();
    let unitary = hamiltonian_generator(h);
    let dissipators: Vec<(f64, SparseMatrix)> = channels
        .iter()
        .filter(|c| c.rate > 0.0)
        .map(|c| (c.rate, lindblad_dissipator(&c.operator)))
        .collect();
    let mut terms: Vec<(C64, &SparseMatrix)> = vec![(C64::new(1.0, 0.0), &unitary)];
    terms.extend(dissipators.iter().map(|(r, m)| (C64::new(*r, 0.0), m)));
    SparseMatrix::linear_combination(d * d, &terms)
}

/// Collapse channels of the cavity pair and qubit:
/// `(1+n_th)κ_j D[α_j] + n_th κ_j D[α_j†] + γ D[σ] + (γ_φ/2) D[σ_z]`.
pub fn cavity_channels(ops: &CavityOps, d: &DissipationParams, basis: DissipationBasis) -> Result<Vec<Channel>> {
    d.validate()?;
    let (m1, m2) = match basis {
        DissipationBasis::Normal => (ops.alpha1.clone(), ops.alpha2.clone()),
        DissipationBasis::Bare => ops.cavity_modes(),
    };
    let tag = match basis {
        DissipationBasis::Normal => "alpha",
        DissipationBasis::Bare => "a",
    };
    let mut out = Vec::new();
    for (j, (m, kappa)) in [(m1, d.kappa1), (m2, d.kappa2)].into_iter().enumerate() {
        out.push(Channel { label: format!("{tag}{}_loss", j + 1), rate: (1.0 + d.n_th) * kappa, operator: m.clone() });
        out.push(Channel { label: format!("{tag}{}_gain", j + 1), rate: d.n_th * kappa, operator: m.dagger() });
    }
    out.push(Channel { label: "qubit_relax".into(), rate: d.gamma, operator: ops.sigma_minus.clone() });
    out.push(Channel { label: "qubit_dephase".into(), rate: 0.5 * d.gamma_phi, operator: ops.sigma_z.clone() });
    Ok(out)
}

/// Full generator of the cavity model.
pub fn build_liouvillian(h: &Operator, d: &DissipationParams, basis: DissipationBasis) -> Result<Liouvillian> {
    let ops = CavityOps::new(h.space())?;
    Liouvillian::new(h, cavity_channels(&ops, d, basis)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fockspace::{annihilator, pauli, DensityMatrix, Factor, PauliAxis};
    use crate::jt_model::{build_hamiltonian_effective, effective_params, RawParams};
    use approx::assert_abs_diff_eq;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn decay_generator_on_single_photon() {
        let s = HilbertSpace::new(vec![Factor::boson(3)]).unwrap();
        let a = annihilator(&s, 0).unwrap();
        let rho = DensityMatrix::basis_state(&s, &[1]).unwrap();
        let out = linalg::unvec(&lindblad_dissipator(&a).matvec(rho.matrix().as_slice()), 3);
        let mut expect = DMatrix::zeros(3, 3);
        expect[(0, 0)] = c(1.0);
        expect[(1, 1)] = c(-1.0);
        assert!(linalg::max_abs(&(out - expect)) < 1e-15);
    }

    #[test]
    fn dephasing_keeps_populations() {
        let s = HilbertSpace::new(vec![Factor::qubit(), Factor::boson(2)]).unwrap();
        let z = pauli(&s, PauliAxis::Z, 0).unwrap();
        let rho = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(0.1), c(0.2), c(0.3), c(0.4)]));
        let out = lindblad_dissipator(&z).matvec(rho.as_slice());
        assert!(linalg::max_abs_slice(&out) < 1e-15);
    }

    #[test]
    fn dissipator_is_traceless_on_random_states() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let s = HilbertSpace::cavity_pair(3).unwrap();
        let d = s.total_dim();
        let ops = CavityOps::new(&s).unwrap();
        let cs = [ops.alpha1.clone(), ops.sigma_minus.clone(), &ops.alpha2 + &ops.sigma_x];
        for _ in 0..20 {
            let g = DMatrix::from_fn(d, d, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
            let mut rho = &g + g.adjoint();
            let tr = rho.trace();
            rho /= tr;
            for cop in &cs {
                let out = linalg::unvec(&lindblad_dissipator(cop).matvec(rho.as_slice()), d);
                assert!(out.trace().norm() < 1e-12);
            }
        }
    }

    fn jt_liouvillian(n: usize, diss: DissipationParams, basis: DissipationBasis) -> Liouvillian {
        let s = HilbertSpace::cavity_pair(n).unwrap();
        let p = effective_params(&RawParams::symmetric(1.0, 0.9, 0.5, Some(0.5))).unwrap();
        let h = build_hamiltonian_effective(&s, &p).unwrap();
        build_liouvillian(&h, &diss, basis).unwrap()
    }

    #[test]
    fn trace_preserving_on_basis() {
        for basis in [DissipationBasis::Normal, DissipationBasis::Bare] {
            let l = jt_liouvillian(3, DissipationParams::circuit_defaults(), basis);
            let d = l.dim();
            let mut id = vec![c(0.0); d * d];
            for i in 0..d {
                id[i + i * d] = c(1.0);
            }
            // trace functional annihilates every column of L
            let row = l.matrix().vecmat(&id);
            assert!(linalg::max_abs_slice(&row) < 1e-12);
        }
    }

    #[test]
    fn channel_inventory_rebuilds_exactly() {
        let l = jt_liouvillian(4, DissipationParams::circuit_defaults(), DissipationBasis::Normal);
        assert_eq!(&l.rebuild(), l.matrix());
        assert_eq!(l.channels().len(), 6);
        let labels: Vec<&str> = l.channels().iter().map(|c| c.label.as_str()).collect();
        assert_eq!(labels, ["alpha1_loss", "alpha1_gain", "alpha2_loss", "alpha2_gain", "qubit_relax", "qubit_dephase"]);
        assert_abs_diff_eq!(l.channels()[0].rate, 1.15e-3, epsilon = 1e-15);
        assert_abs_diff_eq!(l.channels()[1].rate, 1.5e-4, epsilon = 1e-15);
        assert_abs_diff_eq!(l.channels()[5].rate, 5e-3, epsilon = 1e-15);
    }

    #[test]
    fn rejects_bad_inputs() {
        let s = HilbertSpace::cavity_pair(2).unwrap();
        let ops = CavityOps::new(&s).unwrap();
        let mut d = DissipationParams::circuit_defaults();
        d.gamma = -1.0;
        let h = s.zero();
        assert!(build_liouvillian(&h, &d, DissipationBasis::Normal).is_err());
        let nonherm = ops.alpha1.clone();
        assert!(matches!(
            build_liouvillian(&nonherm, &DissipationParams::closed(), DissipationBasis::Normal),
            Err(Error::NotHermitian(_))
        ));
    }

    #[test]
    fn dense_matches_direct_formula() {
        let l = jt_liouvillian(2, DissipationParams::circuit_defaults(), DissipationBasis::Bare);
        let d = l.dim();
        let rho = DMatrix::from_fn(d, d, |i, j| C64::new((i * j) as f64 * 0.01, (i as f64 - j as f64) * 0.02));
        let h = l.hamiltonian().matrix();
        let mut direct = (h * &rho - &rho * h) * C64::new(0.0, -1.0);
        for ch in l.channels() {
            let cm = ch.operator.matrix();
            let cdc = cm.adjoint() * cm;
            direct += (cm * &rho * cm.adjoint() - (&cdc * &rho + &rho * &cdc) * c(0.5)) * c(ch.rate);
        }
        assert!(linalg::max_abs(&(l.apply(&rho) - direct)) < 1e-14);
    }
}

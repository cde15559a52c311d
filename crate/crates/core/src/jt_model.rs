//! Two-frequency Jahn–Teller cavity model.
//!
//! The two boson factors of the (qubit, mode 1, mode 2) space are the normal
//! modes: mode 1 is the privileged mode `α₁` that carries the whole qubit
//! coupling `k_eff`, mode 2 is the disadvantaged mode `α₂`. Bare cavity modes
//! are recovered with [`normal_mode_map`].

use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::Matrix2;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::fockspace::{self, FactorKind, HilbertSpace, Operator, PauliAxis};
use crate::linalg;

pub const QUBIT: usize = 0;
pub const MODE1: usize = 1;
pub const MODE2: usize = 2;

/// Circuit-level parameters. Frequencies are dimensionless.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RawParams {
    pub omega1: f64,
    pub omega2: f64,
    pub k1: f64,
    pub k2: f64,
    /// Qubit frequency; `None` puts the qubit on resonance with `ω_eff`.
    pub omega_q: Option<f64>,
    /// Hopping strength; when set it replaces the detuning formula for `c₂`.
    pub hopping: Option<f64>,
}

impl RawParams {
    /// Equal couplings `k₁ = k₂ = k_eff/√2`, the layout used by the figure presets.
    pub fn symmetric(omega1: f64, omega2: f64, k_eff: f64, hopping: Option<f64>) -> Self {
        Self {
            omega1,
            omega2,
            k1: k_eff * FRAC_1_SQRT_2,
            k2: k_eff * FRAC_1_SQRT_2,
            omega_q: None,
            hopping,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega1 > 0.0 && self.omega2 > 0.0) {
            return Err(Error::InvalidParams(format!(
                "mode frequencies must be positive (omega1={}, omega2={})",
                self.omega1, self.omega2
            )));
        }
        if !(self.k1 >= 0.0 && self.k2 >= 0.0) {
            return Err(Error::InvalidParams("couplings k1, k2 must be non-negative".into()));
        }
        if self.k1 == 0.0 && self.k2 == 0.0 {
            return Err(Error::InvalidParams("k_eff = 0: effective mode is undefined".into()));
        }
        if let Some(q) = self.omega_q {
            if !(q.is_finite()) {
                return Err(Error::InvalidParams("omega_q must be finite".into()));
            }
        }
        if let Some(j) = self.hopping {
            if !j.is_finite() {
                return Err(Error::InvalidParams("hopping must be finite".into()));
            }
        }
        Ok(())
    }
}

/// Where the inter-mode coupling `c₂` came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CouplingSource {
    /// `c₂ = Δ k₁ k₂ / k_eff²`.
    Detuning,
    /// `c₂ = J`, set directly.
    Hopping,
}

impl CouplingSource {
    pub fn label(self) -> &'static str {
        match self {
            CouplingSource::Detuning => "detuning",
            CouplingSource::Hopping => "hopping",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EffectiveParams {
    pub omega_eff: f64,
    pub omega_prime: f64,
    pub k_eff: f64,
    pub c2: f64,
    pub delta: f64,
    /// Half mixing angle, in (−π/4, π/4] for `ω_eff ≥ ω′`.
    pub theta: f64,
    pub e1: f64,
    pub e2: f64,
    pub omega_q: f64,
    pub coupling_source: CouplingSource,
}

impl EffectiveParams {
    /// Assemble from already-reduced quantities. `k_eff = 0` is allowed here,
    /// which is how decoupled reference points are built.
    pub fn from_parts(
        omega_eff: f64,
        omega_prime: f64,
        k_eff: f64,
        c2: f64,
        omega_q: f64,
        coupling_source: CouplingSource,
    ) -> Self {
        let split = omega_eff - omega_prime;
        let root = (split * split + 4.0 * c2 * c2).sqrt();
        let sum = omega_eff + omega_prime;
        Self {
            omega_eff,
            omega_prime,
            k_eff,
            c2,
            delta: f64::NAN,
            theta: 0.5 * (2.0 * c2).atan2(split),
            e1: 0.5 * (sum + root),
            e2: 0.5 * (sum - root),
            omega_q,
            coupling_source,
        }
    }

    /// Same mode structure with the qubit coupling replaced, `k_eff = 0`
    /// included.
    pub fn with_coupling(mut self, k_eff: f64) -> Self {
        self.k_eff = k_eff;
        self
    }

    /// The 2×2 quadratic form of (η, α₂): `[[ω_eff, c₂], [c₂, ω′]]`.
    pub fn mode_matrix(&self) -> Matrix2<f64> {
        Matrix2::new(self.omega_eff, self.c2, self.c2, self.omega_prime)
    }
}

/// Reduce circuit parameters to the effective single-mode description.
pub fn effective_params(raw: &RawParams) -> Result<EffectiveParams> {
    raw.validate()?;
    let k_eff_sq = raw.k1 * raw.k1 + raw.k2 * raw.k2;
    let k_eff = k_eff_sq.sqrt();
    let omega_eff = (raw.omega1 * raw.k1 * raw.k1 + raw.omega2 * raw.k2 * raw.k2) / k_eff_sq;
    let omega_prime = (raw.omega1 * raw.k2 * raw.k2 + raw.omega2 * raw.k1 * raw.k1) / k_eff_sq;
    let delta = raw.omega1 - raw.omega2;
    let (c2, source) = match raw.hopping {
        Some(j) => (j, CouplingSource::Hopping),
        None => (delta * raw.k1 * raw.k2 / k_eff_sq, CouplingSource::Detuning),
    };
    let omega_q = raw.omega_q.unwrap_or(omega_eff);
    let mut p = EffectiveParams::from_parts(omega_eff, omega_prime, k_eff, c2, omega_q, source);
    p.delta = delta;
    Ok(p)
}

/// The 2×2 map from bare cavity modes to normal modes,
/// `α₁ = (a₁ + a₂)/√2`, `α₂ = (a₁ − a₂)/√2`. It is its own inverse.
pub fn normal_mode_map() -> Matrix2<f64> {
    Matrix2::new(1.0, 1.0, 1.0, -1.0) * FRAC_1_SQRT_2
}

/// Operators of the (qubit, α₁, α₂) space that every builder needs.
#[derive(Clone, Debug)]
pub struct CavityOps {
    pub space: HilbertSpace,
    pub sigma_x: Operator,
    pub sigma_z: Operator,
    pub sigma_minus: Operator,
    pub alpha1: Operator,
    pub alpha2: Operator,
}

impl CavityOps {
    pub fn new(space: &HilbertSpace) -> Result<Self> {
        check_layout(space)?;
        Ok(Self {
            space: space.clone(),
            sigma_x: fockspace::pauli(space, PauliAxis::X, QUBIT)?,
            sigma_z: fockspace::pauli(space, PauliAxis::Z, QUBIT)?,
            sigma_minus: fockspace::sigma_minus(space, QUBIT)?,
            alpha1: fockspace::annihilator(space, MODE1)?,
            alpha2: fockspace::annihilator(space, MODE2)?,
        })
    }

    /// Hybrid bright-polariton operator `η = α₁ + k_eff σ_x`.
    pub fn eta(&self, k_eff: f64) -> Operator {
        &self.alpha1 + &self.sigma_x.scale_re(k_eff)
    }

    /// Bare cavity lowering operators `(a₁, a₂)` from the normal modes.
    pub fn cavity_modes(&self) -> (Operator, Operator) {
        let m = normal_mode_map();
        let a1 = &self.alpha1.scale_re(m[(0, 0)]) + &self.alpha2.scale_re(m[(0, 1)]);
        let a2 = &self.alpha1.scale_re(m[(1, 0)]) + &self.alpha2.scale_re(m[(1, 1)]);
        (a1, a2)
    }

    pub fn number1(&self) -> Operator {
        &self.alpha1.dagger() * &self.alpha1
    }

    pub fn number2(&self) -> Operator {
        &self.alpha2.dagger() * &self.alpha2
    }

    /// Quadrature `α_i + α_i†` of normal mode `i ∈ {1, 2}`.
    pub fn quadrature(&self, mode: usize) -> Operator {
        let a = if mode == MODE1 { &self.alpha1 } else { &self.alpha2 };
        a + &a.dagger()
    }
}

fn check_layout(space: &HilbertSpace) -> Result<()> {
    let f = space.factors();
    let ok = f.len() == 3
        && f[QUBIT].kind == FactorKind::Qubit
        && f[MODE1].kind == FactorKind::Boson
        && f[MODE2].kind == FactorKind::Boson;
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!(
            "expected a (qubit, mode, mode) space, got {space}"
        )))
    }
}

/// Lab-frame Hamiltonian
/// `(ω/2)σ_z + ω_eff[α₁†α₁ + k(α₁+α₁†)σ_x] + ω′α₂†α₂ + c₂[(α₁†α₂+α₁α₂†) + k(α₂+α₂†)σ_x]`.
pub fn build_hamiltonian_effective(space: &HilbertSpace, p: &EffectiveParams) -> Result<Operator> {
    let ops = CavityOps::new(space)?;
    Ok(effective_from_ops(&ops, p))
}

pub(crate) fn effective_from_ops(ops: &CavityOps, p: &EffectiveParams) -> Operator {
    let k = p.k_eff;
    let x1 = ops.quadrature(MODE1);
    let x2 = ops.quadrature(MODE2);
    let qubit = ops.sigma_z.scale_re(0.5 * p.omega_q);
    let center = &ops.number1() + &(&x1 * &ops.sigma_x).scale_re(k);
    let hop = &ops.alpha1.dagger() * &ops.alpha2;
    let hop = &hop + &hop.dagger();
    let interaction = &hop + &(&x2 * &ops.sigma_x).scale_re(k);
    let h = &(&qubit + &center.scale_re(p.omega_eff))
        + &(&ops.number2().scale_re(p.omega_prime) + &interaction.scale_re(p.c2));
    h.hermitian_part()
}

/// Rotating-frame hybrid Hamiltonian
/// `ω_eff η†η − ω_eff k² σ_x + ω′α₂†α₂ + c₂(α₂†η + η†α₂)`.
pub fn build_hamiltonian_hybrid(space: &HilbertSpace, p: &EffectiveParams) -> Result<Operator> {
    let ops = CavityOps::new(space)?;
    Ok(hybrid_from_ops(&ops, p))
}

pub(crate) fn hybrid_from_ops(ops: &CavityOps, p: &EffectiveParams) -> Operator {
    let k = p.k_eff;
    let eta = ops.eta(k);
    let center = &(&eta.dagger() * &eta).scale_re(p.omega_eff)
        - &ops.sigma_x.scale_re(p.omega_eff * k * k);
    let coupling = &ops.alpha2.dagger() * &eta;
    let coupling = &coupling + &coupling.dagger();
    let h = &(&center + &ops.number2().scale_re(p.omega_prime)) + &coupling.scale_re(p.c2);
    h.hermitian_part()
}

/// Image of the lab-frame Hamiltonian in the rotating frame: drop the bare
/// qubit term and add the `σ_x` shift, `H − (ω/2)σ_z + ω_eff k²(1 − σ_x)`.
pub fn rotating_frame_image(h_effective: &Operator, p: &EffectiveParams) -> Result<Operator> {
    let ops = CavityOps::new(h_effective.space())?;
    let k2 = p.k_eff * p.k_eff;
    let shift = &ops.space.identity() - &ops.sigma_x;
    let out = h_effective.try_sub(&ops.sigma_z.scale_re(0.5 * p.omega_q))?;
    Ok(out.try_add(&shift.scale_re(p.omega_eff * k2))?.hermitian_part())
}

/// Upper and lower polariton operators
/// `p₁ = cos θ η + sin θ α₂`, `p₂ = −sin θ η + cos θ α₂`.
pub fn polariton_ops(space: &HilbertSpace, p: &EffectiveParams) -> Result<(Operator, Operator)> {
    let ops = CavityOps::new(space)?;
    Ok(polaritons_from_ops(&ops, p))
}

pub(crate) fn polaritons_from_ops(ops: &CavityOps, p: &EffectiveParams) -> (Operator, Operator) {
    let eta = ops.eta(p.k_eff);
    let (s, c) = p.theta.sin_cos();
    let p1 = &eta.scale_re(c) + &ops.alpha2.scale_re(s);
    let p2 = &eta.scale_re(-s) + &ops.alpha2.scale_re(c);
    (p1, p2)
}

/// Outcome of the quadrature/qubit decoupling check in the eigenbasis of H.
#[derive(Clone, Debug)]
pub struct ImpedanceReport {
    /// Max over all eigenpairs of
    /// `|⟨n|α₁†+α₁|n′⟩[1 − (E_n−E_n′)/ω_eff] + 2k⟨n|σ_x|n′⟩|`.
    pub max_residual: f64,
    /// Eigenpair attaining `max_residual`.
    pub worst_pair: (usize, usize),
    /// Max residual of the commutator identity including the second-order
    /// and `c₂` terms,
    /// `X₁(1 − Δ²/ω²) + (c₂/ω)X₂ + (c₂Δ/ω²)P₂ + 2kS = 0`,
    /// over pairs whose states carry less than `safe_weight` on the top
    /// Fock level of either mode.
    pub max_commutator_residual: f64,
    /// Number of eigenpairs entering `max_commutator_residual`.
    pub commutator_pairs: usize,
    pub safe_weight: f64,
    /// Pairs with `E_n − E_n′ = ω_eff`, with `|⟨n|σ_x|n′⟩|`.
    pub matched_pairs: Vec<(usize, usize, f64)>,
    /// Distinct degenerate pairs `E_n = E_n′`, with `|⟨n|η+η†|n′⟩|`.
    pub degenerate_pairs: Vec<(usize, usize, f64)>,
    /// Max `|⟨n|η+η†|n′⟩|` over degenerate pairs, including `n = n′`.
    pub max_degenerate_eta: f64,
    pub energies: Vec<f64>,
}

/// Check the quadrature/qubit relation for every eigenpair of a Hermitian `h`.
pub fn impedance_matching_check(h: &Operator, p: &EffectiveParams) -> Result<ImpedanceReport> {
    let err = h.hermiticity_error();
    if err > fockspace::HERMITIAN_TOL {
        return Err(Error::NotHermitian(err));
    }
    let ops = CavityOps::new(h.space())?;
    let eig = linalg::eigh(h.matrix());
    let u = &eig.vectors;
    let ud = u.adjoint();
    let to_eig = |o: &Operator| &ud * o.matrix() * u;
    let x1 = to_eig(&ops.quadrature(MODE1));
    let x2 = to_eig(&ops.quadrature(MODE2));
    let p2 = to_eig(&(&ops.alpha2.dagger() - &ops.alpha2));
    let sx = to_eig(&ops.sigma_x);
    let eta = ops.eta(p.k_eff);
    let eta_q = to_eig(&(&eta + &eta.dagger()));

    let space = h.space();
    let n1 = space.factors()[MODE1].dim;
    let n2 = space.factors()[MODE2].dim;
    let top_weight: Vec<f64> = (0..space.total_dim())
        .map(|col| {
            (0..space.total_dim())
                .filter(|&i| {
                    let l = space.levels(i);
                    l[MODE1] == n1 - 1 || l[MODE2] == n2 - 1
                })
                .map(|i| u[(i, col)].norm_sqr())
                .sum()
        })
        .collect();
    let safe_weight = 1e-10;

    let w = p.omega_eff;
    let tol = 1e-9 * w.abs().max(1.0);
    let d = space.total_dim();
    let mut report = ImpedanceReport {
        max_residual: 0.0,
        worst_pair: (0, 0),
        max_commutator_residual: 0.0,
        commutator_pairs: 0,
        safe_weight,
        matched_pairs: Vec::new(),
        degenerate_pairs: Vec::new(),
        max_degenerate_eta: 0.0,
        energies: eig.values.clone(),
    };
    for n in 0..d {
        for m in 0..d {
            let de = eig.values[n] - eig.values[m];
            let lhs = x1[(n, m)] * (1.0 - de / w);
            let rhs = sx[(n, m)] * (-2.0 * p.k_eff);
            let r = (lhs - rhs).norm();
            if r > report.max_residual {
                report.max_residual = r;
                report.worst_pair = (n, m);
            }
            if top_weight[n] < safe_weight && top_weight[m] < safe_weight {
                let full = x1[(n, m)] * (1.0 - de * de / (w * w))
                    + x2[(n, m)] * (p.c2 / w)
                    + p2[(n, m)] * (p.c2 * de / (w * w))
                    + sx[(n, m)] * (2.0 * p.k_eff);
                report.max_commutator_residual = report.max_commutator_residual.max(full.norm());
                report.commutator_pairs += 1;
            }
            if (de - w).abs() < tol {
                report.matched_pairs.push((n, m, sx[(n, m)].norm()));
            }
            if de.abs() < tol {
                let v = eta_q[(n, m)].norm();
                report.max_degenerate_eta = report.max_degenerate_eta.max(v);
                if n < m {
                    report.degenerate_pairs.push((n, m, v));
                }
            }
        }
    }
    Ok(report)
}

/// Ground state of `h` as a ket.
pub fn ground_state(h: &Operator) -> nalgebra::DVector<C64> {
    let eig = linalg::eigh(h.matrix());
    eig.vectors.column(0).into_owned()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_4;

    fn worked_example() -> RawParams {
        RawParams { omega1: 1.0, omega2: 0.8, k1: 0.6, k2: 0.3, omega_q: None, hopping: None }
    }

    #[test]
    fn worked_example_values() {
        // k_eff² = 0.45; ω_eff = 0.432/0.45; ω′ = 0.378/0.45; c₂ = 0.2·0.18/0.45.
        let p = effective_params(&worked_example()).unwrap();
        assert_abs_diff_eq!(p.omega_eff, 0.96, epsilon = 1e-12);
        assert_abs_diff_eq!(p.omega_prime, 0.84, epsilon = 1e-12);
        assert_abs_diff_eq!(p.c2, 0.08, epsilon = 1e-12);
        assert_abs_diff_eq!(p.e1, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.e2, 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(p.k_eff * p.k_eff, 0.45, epsilon = 1e-12);
        assert_abs_diff_eq!(p.delta, 0.2, epsilon = 1e-12);
        // diagonalising angle: tan 2θ = 2c₂/(ω_eff − ω′) = 4/3
        assert_abs_diff_eq!((2.0 * p.theta).tan(), 4.0 / 3.0, epsilon = 1e-12);
        assert_eq!(p.coupling_source, CouplingSource::Detuning);
        assert_abs_diff_eq!(p.omega_q, p.omega_eff);
    }

    #[test]
    fn symmetric_degeneracy() {
        let raw = RawParams { omega1: 0.9, omega2: 0.9, k1: 0.4, k2: 0.4, omega_q: None, hopping: None };
        let p = effective_params(&raw).unwrap();
        assert_abs_diff_eq!(p.omega_eff, 0.9, epsilon = 1e-15);
        assert_abs_diff_eq!(p.omega_prime, 0.9, epsilon = 1e-15);
        assert_eq!(p.delta, 0.0);
        assert_eq!(p.c2, 0.0);
        assert_eq!(p.theta, 0.0);
    }

    #[test]
    fn decoupled_modes_order_energies() {
        let p = EffectiveParams::from_parts(0.7, 1.1, 0.3, 0.0, 0.7, CouplingSource::Hopping);
        assert_abs_diff_eq!(p.e1, 1.1);
        assert_abs_diff_eq!(p.e2, 0.7);
        let p = EffectiveParams::from_parts(1.1, 0.7, 0.3, 0.0, 0.7, CouplingSource::Hopping);
        assert_eq!(p.theta, 0.0);
        assert_abs_diff_eq!(p.e1, 1.1);
    }

    #[test]
    fn hopping_overrides_detuning() {
        let raw = RawParams::symmetric(1.0, 0.9, 0.5, Some(0.7));
        let p = effective_params(&raw).unwrap();
        assert_eq!(p.c2, 0.7);
        assert_eq!(p.coupling_source, CouplingSource::Hopping);
        // k1 = k2 puts ω_eff = ω′, so the mixing is maximal
        assert_abs_diff_eq!(p.theta, FRAC_PI_4, epsilon = 1e-12);
    }

    #[test]
    fn invalid_raw_params() {
        let mut raw = worked_example();
        raw.k1 = 0.0;
        raw.k2 = 0.0;
        assert!(effective_params(&raw).is_err());
        let mut raw = worked_example();
        raw.omega2 = -1.0;
        assert!(effective_params(&raw).is_err());
        let mut raw = worked_example();
        raw.k1 = -0.1;
        assert!(effective_params(&raw).is_err());
    }

    #[test]
    fn normal_mode_map_is_involution() {
        let m = normal_mode_map();
        assert_abs_diff_eq!((m * m - Matrix2::identity()).abs().max(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn cavity_modes_recover_normal_modes() {
        let s = HilbertSpace::cavity_pair(4).unwrap();
        let ops = CavityOps::new(&s).unwrap();
        let (a1, a2) = ops.cavity_modes();
        let back = &(&a1 + &a2).scale_re(FRAC_1_SQRT_2) - &ops.alpha1;
        assert_abs_diff_eq!(back.max_abs(), 0.0, epsilon = 1e-15);
        // [α₁, α₁†] survives the map on the truncation-safe subspace
        let comm = a1.commutator(&a1.dagger()).unwrap();
        let mask = s.truncation_safe_mask();
        for i in (0..s.total_dim()).filter(|&i| mask[i]) {
            assert_abs_diff_eq!(comm.matrix()[(i, i)].re, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn layout_is_enforced() {
        let s = HilbertSpace::new(vec![fockspace::Factor::boson(3), fockspace::Factor::qubit()]).unwrap();
        let p = effective_params(&worked_example()).unwrap();
        assert!(build_hamiltonian_effective(&s, &p).is_err());
        assert!(build_hamiltonian_hybrid(&s, &p).is_err());
    }

    #[test]
    fn decoupled_spectrum() {
        let n = 5;
        let s = HilbertSpace::cavity_pair(n).unwrap();
        let p = EffectiveParams::from_parts(1.0, 0.7, 0.0, 0.0, 0.4, CouplingSource::Hopping);
        let h = build_hamiltonian_effective(&s, &p).unwrap();
        let mut expect = Vec::new();
        for q in [0.2, -0.2] {
            for i in 0..n {
                for j in 0..n {
                    expect.push(q + i as f64 * 1.0 + j as f64 * 0.7);
                }
            }
        }
        expect.sort_by(f64::total_cmp);
        let got = linalg::eigh(h.matrix()).values;
        for (a, b) in got.iter().zip(&expect) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn builders_are_hermitian() {
        let s = HilbertSpace::cavity_pair(5).unwrap();
        for (k, j) in [(0.1, 0.5), (0.5, 1.0), (1.0, 0.0)] {
            let p = effective_params(&RawParams::symmetric(1.0, 0.9, k, Some(j))).unwrap();
            let h = build_hamiltonian_effective(&s, &p).unwrap();
            assert!(h.hermiticity_error() < 1e-12);
            let hh = build_hamiltonian_hybrid(&s, &p).unwrap();
            assert!(hh.hermiticity_error() < 1e-12);
        }
    }

    #[test]
    fn frames_agree() {
        let s = HilbertSpace::cavity_pair(6).unwrap();
        let p = effective_params(&worked_example()).unwrap();
        let h = build_hamiltonian_effective(&s, &p).unwrap();
        let rotated = rotating_frame_image(&h, &p).unwrap();
        let hybrid = build_hamiltonian_hybrid(&s, &p).unwrap();
        let a = linalg::eigh(rotated.matrix()).values;
        let b = linalg::eigh(hybrid.matrix()).values;
        for (x, y) in a.iter().zip(&b) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-9);
        }
    }

    #[test]
    fn lowest_level_converges_in_truncation() {
        // k_eff = 1/√2 at resonance: N=6 against N=12.
        let p = effective_params(&RawParams::symmetric(1.0, 0.9, FRAC_1_SQRT_2, Some(0.5))).unwrap();
        let e = |n| {
            let s = HilbertSpace::cavity_pair(n).unwrap();
            linalg::eigh(build_hamiltonian_effective(&s, &p).unwrap().matrix()).values[0]
        };
        let coarse = e(6);
        let fine = e(12);
        assert!((coarse - fine).abs() < 1e-4, "{coarse} vs {fine}");
        assert!(coarse >= fine - 1e-12, "variational bound violated");
    }

    #[test]
    fn eta_is_bosonic_on_safe_subspace() {
        let s = HilbertSpace::cavity_pair(6).unwrap();
        let ops = CavityOps::new(&s).unwrap();
        let eta = ops.eta(0.35);
        let comm = eta.commutator(&eta.dagger()).unwrap();
        let mask = s.truncation_safe_mask();
        for i in (0..s.total_dim()).filter(|&i| mask[i]) {
            for j in (0..s.total_dim()).filter(|&j| mask[j]) {
                let e = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(comm.matrix()[(i, j)].re, e, epsilon = 1e-12);
                assert_abs_diff_eq!(comm.matrix()[(i, j)].im, 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn hybrid_center_is_displaced_oscillator() {
        // c₂ = 0: ω_eff η†η − ω_eff k² σ_x has levels ω_eff n − ω_eff k² s.
        // Brute-force diagonalisation at N=14 compared on the low-lying part.
        let k = 0.4;
        let w = 0.9;
        let n = 14;
        let s = HilbertSpace::cavity_pair(n).unwrap();
        let p = EffectiveParams::from_parts(w, 1.7, k, 0.0, w, CouplingSource::Hopping);
        let ops = CavityOps::new(&s).unwrap();
        let eta = ops.eta(k);
        let h = &(&eta.dagger() * &eta).scale_re(w) - &ops.sigma_x.scale_re(w * k * k);
        let got = linalg::eigh(h.matrix()).values;
        let mut expect = Vec::new();
        for level in 0..4 {
            for sign in [1.0, -1.0] {
                // every level is repeated n times by the idle α₂ factor
                for _ in 0..n {
                    expect.push(w * level as f64 - w * k * k * sign);
                }
            }
        }
        expect.sort_by(f64::total_cmp);
        let take = 6 * n;
        for (a, b) in got.iter().take(take).zip(&expect) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-8);
        }
        let _ = p;
    }

    #[test]
    fn polaritons_limits() {
        let s = HilbertSpace::cavity_pair(4).unwrap();
        let ops = CavityOps::new(&s).unwrap();
        let p = EffectiveParams::from_parts(1.0, 0.8, 0.3, 0.0, 1.0, CouplingSource::Hopping);
        let (p1, p2) = polariton_ops(&s, &p).unwrap();
        assert_abs_diff_eq!((&p1 - &ops.eta(0.3)).max_abs(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!((&p2 - &ops.alpha2).max_abs(), 0.0, epsilon = 1e-15);

        let p = effective_params(&RawParams::symmetric(1.0, 0.9, 0.3, Some(0.5))).unwrap();
        let (p1, p2) = polariton_ops(&s, &p).unwrap();
        let eta = ops.eta(p.k_eff);
        let expect1 = (&eta + &ops.alpha2).scale_re(FRAC_1_SQRT_2);
        let expect2 = (&ops.alpha2 - &eta).scale_re(FRAC_1_SQRT_2);
        assert_abs_diff_eq!((&p1 - &expect1).max_abs(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!((&p2 - &expect2).max_abs(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn polaritons_commute_on_safe_subspace() {
        let s = HilbertSpace::cavity_pair(6).unwrap();
        let p = effective_params(&worked_example()).unwrap();
        let (p1, p2) = polariton_ops(&s, &p).unwrap();
        let comm = p1.commutator(&p2.dagger()).unwrap();
        let mask = s.truncation_safe_mask();
        for i in (0..s.total_dim()).filter(|&i| mask[i]) {
            for j in (0..s.total_dim()).filter(|&j| mask[j]) {
                assert_abs_diff_eq!(comm.matrix()[(i, j)].norm(), 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn polaritons_diagonalise_quadratic_part() {
        let s = HilbertSpace::cavity_pair(5).unwrap();
        for p in [
            effective_params(&worked_example()).unwrap(),
            effective_params(&RawParams::symmetric(1.0, 0.9, 0.5, Some(1.0))).unwrap(),
        ] {
            let ops = CavityOps::new(&s).unwrap();
            let hybrid = build_hamiltonian_hybrid(&s, &p).unwrap();
            let (p1, p2) = polariton_ops(&s, &p).unwrap();
            let diag = &(&p1.dagger() * &p1).scale_re(p.e1) + &(&p2.dagger() * &p2).scale_re(p.e2);
            let shift = ops.sigma_x.scale_re(p.omega_eff * p.k_eff * p.k_eff);
            let rest = &(&hybrid + &shift) - &diag;
            assert!(rest.max_abs() < 1e-9, "{}", rest.max_abs());
        }
    }

    #[test]
    fn energy_sum_and_product() {
        let p = effective_params(&RawParams::symmetric(1.0, 0.9, 0.7, Some(0.35))).unwrap();
        let m = p.mode_matrix();
        assert_abs_diff_eq!(p.e1 + p.e2, m.trace(), epsilon = 1e-12);
        assert_abs_diff_eq!(p.e1 * p.e2, m.determinant(), epsilon = 1e-12);
    }

    #[test]
    fn impedance_check_rejects_non_hermitian() {
        let s = HilbertSpace::cavity_pair(3).unwrap();
        let ops = CavityOps::new(&s).unwrap();
        let p = effective_params(&worked_example()).unwrap();
        assert!(matches!(impedance_matching_check(&ops.alpha1, &p), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn impedance_check_uncoupled_ladder() {
        // k_eff = 0, c₂ = 0: X₁ only links states one quantum of ω_eff apart.
        let s = HilbertSpace::cavity_pair(5).unwrap();
        let p = EffectiveParams::from_parts(1.0, 0.9, 0.0, 0.0, 1.3, CouplingSource::Hopping);
        let h = build_hamiltonian_effective(&s, &p).unwrap();
        let r = impedance_matching_check(&h, &p).unwrap();
        // upward pairs (ΔE = +ω_eff) satisfy the first-order relation and are flagged
        assert!(!r.matched_pairs.is_empty());
        assert!(r.matched_pairs.iter().all(|&(_, _, sx)| sx < 1e-12));
        // downward pairs carry 1 − ΔE/ω_eff = 2, so the first-order form leaves 2|X₁|
        assert_abs_diff_eq!(r.max_residual, 2.0 * 2.0, epsilon = 1e-9);
        // the second-order identity holds exactly on the truncation-safe states
        assert!(r.commutator_pairs > 0);
        assert!(r.max_commutator_residual < 1e-12);
        assert!(r.max_degenerate_eta < 1e-9);
    }

    #[test]
    fn commutator_identity_holds_on_low_states() {
        let s = HilbertSpace::cavity_pair(10).unwrap();
        let p = effective_params(&RawParams::symmetric(1.0, 0.9, 0.5 * FRAC_1_SQRT_2, Some(0.5))).unwrap();
        let h = build_hamiltonian_effective(&s, &p).unwrap();
        let r = impedance_matching_check(&h, &p).unwrap();
        assert!(r.commutator_pairs > 0);
        assert!(r.max_commutator_residual < 1e-6, "{}", r.max_commutator_residual);
        assert!(r.max_degenerate_eta < 1e-8, "{}", r.max_degenerate_eta);
    }
}

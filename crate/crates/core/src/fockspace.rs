//! Truncated tensor-product Hilbert spaces and dense operator algebra.
//!
//! Factor order for the cavity model is always (qubit, mode 1, mode 2). Basis
//! states are enumerated with the last factor varying fastest, which matches
//! the Kronecker product `A ⊗ B ⊗ C`. The qubit basis is (|e⟩, |g⟩) so that
//! `σ_z = diag(1, -1)` and `σ = |g⟩⟨e|`.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Tolerance used when an operator is expected to be Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FactorKind {
    Qubit,
    Boson,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Factor {
    pub kind: FactorKind,
    pub dim: usize,
}

impl Factor {
    pub fn qubit() -> Self {
        Self { kind: FactorKind::Qubit, dim: 2 }
    }

    pub fn boson(dim: usize) -> Self {
        Self { kind: FactorKind::Boson, dim }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct HilbertSpace {
    factors: Vec<Factor>,
    total_dim: usize,
}

impl HilbertSpace {
    pub fn new(factors: Vec<Factor>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::EmptySpace);
        }
        for (index, f) in factors.iter().enumerate() {
            match f.kind {
                FactorKind::Qubit if f.dim != 2 => {
                    return Err(Error::BadFactor {
                        index,
                        reason: format!("qubit factors have dimension 2, got {}", f.dim),
                    })
                }
                FactorKind::Boson if f.dim < 2 => {
                    return Err(Error::BadFactor {
                        index,
                        reason: format!("boson truncation must be at least 2, got {}", f.dim),
                    })
                }
                _ => {}
            }
        }
        let total_dim = factors.iter().map(|f| f.dim).product();
        Ok(Self { factors, total_dim })
    }

    /// The (qubit, mode 1, mode 2) space with `n` Fock levels per mode.
    pub fn cavity_pair(n: usize) -> Result<Self> {
        Self::new(vec![Factor::qubit(), Factor::boson(n), Factor::boson(n)])
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn total_dim(&self) -> usize {
        self.total_dim
    }

    pub fn factor(&self, index: usize) -> Result<Factor> {
        self.factors.get(index).copied().ok_or(Error::FactorOutOfRange {
            index,
            len: self.factors.len(),
        })
    }

    /// Flat basis index of a product state given per-factor levels.
    pub fn basis_index(&self, levels: &[usize]) -> Result<usize> {
        if levels.len() != self.factors.len() {
            return Err(Error::InvalidState(format!(
                "expected {} levels, got {}",
                self.factors.len(),
                levels.len()
            )));
        }
        let mut idx = 0;
        for (i, (&l, f)) in levels.iter().zip(&self.factors).enumerate() {
            if l >= f.dim {
                return Err(Error::BadFactor {
                    index: i,
                    reason: format!("level {l} exceeds dimension {}", f.dim),
                });
            }
            idx = idx * f.dim + l;
        }
        Ok(idx)
    }

    /// Per-factor levels of a flat basis index.
    pub fn levels(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.factors.len()];
        for (slot, f) in out.iter_mut().zip(&self.factors).rev() {
            *slot = index % f.dim;
            index /= f.dim;
        }
        out
    }

    /// Embed a single-factor matrix by identities on every other factor.
    pub fn embed(&self, index: usize, local: &DMatrix<C64>) -> Result<Operator> {
        let f = self.factor(index)?;
        if local.nrows() != f.dim || local.ncols() != f.dim {
            return Err(Error::DimensionMismatch {
                rows: local.nrows(),
                cols: local.ncols(),
                expected: f.dim,
            });
        }
        let mut m = DMatrix::<C64>::identity(1, 1);
        for (i, fi) in self.factors.iter().enumerate() {
            m = if i == index {
                m.kronecker(local)
            } else {
                m.kronecker(&DMatrix::<C64>::identity(fi.dim, fi.dim))
            };
        }
        Ok(Operator { space: self.clone(), matrix: m })
    }

    pub fn identity(&self) -> Operator {
        Operator {
            space: self.clone(),
            matrix: DMatrix::identity(self.total_dim, self.total_dim),
        }
    }

    pub fn zero(&self) -> Operator {
        Operator {
            space: self.clone(),
            matrix: DMatrix::zeros(self.total_dim, self.total_dim),
        }
    }

    /// Boolean mask of basis states in which every boson factor sits below
    /// its top level, i.e. where `[a, a†] = 1` holds exactly.
    pub fn truncation_safe_mask(&self) -> Vec<bool> {
        (0..self.total_dim)
            .map(|i| {
                self.levels(i)
                    .iter()
                    .zip(&self.factors)
                    .all(|(&l, f)| f.kind == FactorKind::Qubit || l + 1 < f.dim)
            })
            .collect()
    }
}

impl fmt::Display for HilbertSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .factors
            .iter()
            .map(|fa| match fa.kind {
                FactorKind::Qubit => "qubit".to_string(),
                FactorKind::Boson => format!("boson({})", fa.dim),
            })
            .collect();
        write!(f, "[{}]", parts.join(" x "))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PauliAxis {
    X,
    Y,
    Z,
}

fn local_annihilator(n: usize) -> DMatrix<C64> {
    let mut a = DMatrix::zeros(n, n);
    for k in 1..n {
        a[(k - 1, k)] = C64::new((k as f64).sqrt(), 0.0);
    }
    a
}

fn local_pauli(axis: PauliAxis) -> DMatrix<C64> {
    let z = C64::new(0.0, 0.0);
    let one = C64::new(1.0, 0.0);
    let i = C64::new(0.0, 1.0);
    match axis {
        PauliAxis::X => DMatrix::from_row_slice(2, 2, &[z, one, one, z]),
        PauliAxis::Y => DMatrix::from_row_slice(2, 2, &[z, -i, i, z]),
        PauliAxis::Z => DMatrix::from_row_slice(2, 2, &[one, z, z, -one]),
    }
}

/// Truncated bosonic lowering operator on factor `index`.
pub fn annihilator(space: &HilbertSpace, index: usize) -> Result<Operator> {
    let f = space.factor(index)?;
    if f.kind != FactorKind::Boson {
        return Err(Error::BadFactor {
            index,
            reason: "annihilator requires a boson factor".into(),
        });
    }
    space.embed(index, &local_annihilator(f.dim))
}

pub fn pauli(space: &HilbertSpace, axis: PauliAxis, index: usize) -> Result<Operator> {
    let f = space.factor(index)?;
    if f.kind != FactorKind::Qubit {
        return Err(Error::BadFactor {
            index,
            reason: "pauli operators require a qubit factor".into(),
        });
    }
    space.embed(index, &local_pauli(axis))
}

/// Qubit lowering operator `σ = (σ_x − iσ_y)/2`, mapping |e⟩ to |g⟩.
pub fn sigma_minus(space: &HilbertSpace, index: usize) -> Result<Operator> {
    let x = pauli(space, PauliAxis::X, index)?;
    let y = pauli(space, PauliAxis::Y, index)?;
    Ok((&x - &y.scale(C64::new(0.0, 1.0))).scale_re(0.5))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    space: HilbertSpace,
    matrix: DMatrix<C64>,
}

impl Operator {
    pub fn from_matrix(space: &HilbertSpace, matrix: DMatrix<C64>) -> Result<Self> {
        let d = space.total_dim();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::DimensionMismatch {
                rows: matrix.nrows(),
                cols: matrix.ncols(),
                expected: d,
            });
        }
        Ok(Self { space: space.clone(), matrix })
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn check_space(&self, other: &Operator) -> Result<()> {
        if self.space != other.space {
            return Err(Error::SpaceMismatch {
                left: self.space.to_string(),
                right: other.space.to_string(),
            });
        }
        Ok(())
    }

    pub fn try_add(&self, other: &Operator) -> Result<Operator> {
        self.check_space(other)?;
        Ok(Operator { space: self.space.clone(), matrix: &self.matrix + &other.matrix })
    }

    pub fn try_sub(&self, other: &Operator) -> Result<Operator> {
        self.check_space(other)?;
        Ok(Operator { space: self.space.clone(), matrix: &self.matrix - &other.matrix })
    }

    pub fn try_mul(&self, other: &Operator) -> Result<Operator> {
        self.check_space(other)?;
        Ok(Operator { space: self.space.clone(), matrix: &self.matrix * &other.matrix })
    }

    pub fn commutator(&self, other: &Operator) -> Result<Operator> {
        self.check_space(other)?;
        let m = &self.matrix * &other.matrix - &other.matrix * &self.matrix;
        Ok(Operator { space: self.space.clone(), matrix: m })
    }

    pub fn anticommutator(&self, other: &Operator) -> Result<Operator> {
        self.check_space(other)?;
        let m = &self.matrix * &other.matrix + &other.matrix * &self.matrix;
        Ok(Operator { space: self.space.clone(), matrix: m })
    }

    pub fn scale(&self, c: C64) -> Operator {
        Operator { space: self.space.clone(), matrix: &self.matrix * c }
    }

    pub fn scale_re(&self, c: f64) -> Operator {
        self.scale(C64::new(c, 0.0))
    }

    pub fn dagger(&self) -> Operator {
        Operator { space: self.space.clone(), matrix: self.matrix.adjoint() }
    }

    /// Largest elementwise deviation `max |M − M†|`.
    pub fn hermiticity_error(&self) -> f64 {
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.matrix[(i, j)] - self.matrix[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermiticity_error() < HERMITIAN_TOL
    }

    /// Copy with `(M + M†)/2`; used to strip round-off from Hermitian builds.
    pub fn hermitian_part(&self) -> Operator {
        let m = (&self.matrix + self.matrix.adjoint()) * C64::new(0.5, 0.0);
        Operator { space: self.space.clone(), matrix: m }
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    pub fn max_abs(&self) -> f64 {
        self.matrix.iter().fold(0.0, |m, z| m.max(z.norm()))
    }
}

macro_rules! forward_binop {
    ($tr:ident, $method:ident, $checked:ident) => {
        impl<'a> $tr<&'a Operator> for &'a Operator {
            type Output = Operator;
            /// Panics when the operands live on different spaces; use the
            /// `try_*` methods for a fallible variant.
            fn $method(self, rhs: &'a Operator) -> Operator {
                self.$checked(rhs).expect("operator space mismatch")
            }
        }
    };
}

forward_binop!(Add, add, try_add);
forward_binop!(Sub, sub, try_sub);
forward_binop!(Mul, mul, try_mul);

impl Mul<&Operator> for f64 {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        rhs.scale_re(self)
    }
}

impl Mul<&Operator> for C64 {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        rhs.scale(self)
    }
}

impl Neg for &Operator {
    type Output = Operator;
    fn neg(self) -> Operator {
        self.scale_re(-1.0)
    }
}

/// Tolerances for [`DensityMatrix::validate`].
pub const TRACE_TOL: f64 = 1e-10;
pub const POSITIVITY_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    space: HilbertSpace,
    matrix: DMatrix<C64>,
}

impl DensityMatrix {
    /// Wrap a matrix after checking trace, hermiticity and positivity.
    pub fn new(space: &HilbertSpace, matrix: DMatrix<C64>) -> Result<Self> {
        let rho = Self::new_unchecked(space, matrix)?;
        rho.validate(POSITIVITY_TOL)?;
        Ok(rho)
    }

    /// Wrap a matrix, checking only its shape.
    pub fn new_unchecked(space: &HilbertSpace, matrix: DMatrix<C64>) -> Result<Self> {
        let d = space.total_dim();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::DimensionMismatch {
                rows: matrix.nrows(),
                cols: matrix.ncols(),
                expected: d,
            });
        }
        Ok(Self { space: space.clone(), matrix })
    }

    pub fn from_ket(space: &HilbertSpace, ket: &DVector<C64>) -> Result<Self> {
        let norm = ket.norm();
        if norm == 0.0 {
            return Err(Error::InvalidState("zero state vector".into()));
        }
        let psi = ket / C64::new(norm, 0.0);
        Self::new(space, &psi * psi.adjoint())
    }

    /// Pure product state with the given level in each factor.
    pub fn basis_state(space: &HilbertSpace, levels: &[usize]) -> Result<Self> {
        let idx = space.basis_index(levels)?;
        let mut m = DMatrix::zeros(space.total_dim(), space.total_dim());
        m[(idx, idx)] = C64::new(1.0, 0.0);
        Ok(Self { space: space.clone(), matrix: m })
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.matrix
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    pub fn purity(&self) -> f64 {
        (&self.matrix * &self.matrix).trace().re
    }

    /// Sorted eigenvalues of the Hermitian part.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let h = (&self.matrix + self.matrix.adjoint()) * C64::new(0.5, 0.0);
        let mut ev: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn validate(&self, positivity_tol: f64) -> Result<()> {
        let tr = self.trace();
        if (tr - C64::new(1.0, 0.0)).norm() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
        }
        let n = self.matrix.nrows();
        let mut herm: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                herm = herm.max((self.matrix[(i, j)] - self.matrix[(j, i)].conj()).norm());
            }
        }
        if herm > HERMITIAN_TOL {
            return Err(Error::InvalidState(format!("not hermitian ({herm:e})")));
        }
        let min_ev = self.eigenvalues().first().copied().unwrap_or(0.0);
        if min_ev < -positivity_tol {
            return Err(Error::InvalidState(format!("negative eigenvalue {min_ev:e}")));
        }
        Ok(())
    }
}

/// `Tr(op · rho)`.
pub fn expectation(op: &Operator, rho: &DensityMatrix) -> Result<C64> {
    if op.space != rho.space {
        return Err(Error::SpaceMismatch {
            left: op.space.to_string(),
            right: rho.space.to_string(),
        });
    }
    Ok(trace_of_product(&op.matrix, &rho.matrix))
}

/// `Tr(A·B)` without forming the product.
pub fn trace_of_product(a: &DMatrix<C64>, b: &DMatrix<C64>) -> C64 {
    let n = a.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for k in 0..n {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

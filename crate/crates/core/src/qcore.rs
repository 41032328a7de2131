//! Complex linear algebra and two-qubit state primitives.
//!
//! Basis convention for every two-qubit object in this crate: qubit 0 is the
//! first tensor factor, qubit 1 the second, and the computational basis is
//! ordered `{|00>, |01>, |10>, |11>}` (index = 2·q0 + q1). For the
//! atom/photon pair, qubit 0 is the low-lying spin wave (read out as the
//! signal-2 photon) and qubit 1 is the high-lying spin wave (read out as the
//! signal-1 photon); logical 0 stands for H / U / L and 1 for V / D / R.
//!
//! The single-excitation which-path state lives in the same 4x4 algebra in
//! the photon-number basis `|m_R n_L>` (see [`crate::memory::ideal_psi1`]).

use std::f64::consts::FRAC_1_SQRT_2;
use std::ops::{Add, Mul};

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{invalid, Error, Result};

pub type C64 = Complex64;

pub const HERMITIAN_TOL: f64 = 1e-12;
pub const TRACE_TOL: f64 = 1e-12;
pub const PSD_TOL: f64 = -1e-9;
pub const NORM_TOL: f64 = 1e-12;

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[inline]
pub fn cr(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Dense complex matrix, stored by nalgebra (column-major internally; the
/// public constructors take row-major entries).
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix(DMatrix<C64>);

impl ComplexMatrix {
    pub fn from_row_major(rows: usize, cols: usize, entries: Vec<C64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(invalid("matrix dimensions must be positive"));
        }
        if entries.len() != rows * cols {
            return Err(invalid(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                entries.len()
            )));
        }
        Ok(Self(DMatrix::from_row_slice(rows, cols, &entries)))
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(invalid("ragged rows"));
        }
        let entries = rows.iter().flat_map(|r| r.iter().map(|&x| cr(x))).collect();
        Self::from_row_major(rows.len(), cols, entries)
    }

    pub fn from_dmatrix(m: DMatrix<C64>) -> Self {
        Self(m)
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self(DMatrix::zeros(rows, cols))
    }

    pub fn diagonal(values: &[C64]) -> Self {
        let n = values.len();
        Self(DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                values[i]
            } else {
                C64::new(0.0, 0.0)
            }
        }))
    }

    /// `|v><v|` for a column vector.
    pub fn outer(v: &[C64]) -> Self {
        let n = v.len();
        Self(DMatrix::from_fn(n, n, |i, j| v[i] * v[j].conj()))
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.0[(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, value: C64) {
        self.0[(i, j)] = value;
    }

    pub fn as_dmatrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_dmatrix(self) -> DMatrix<C64> {
        self.0
    }

    /// Entries in row-major order.
    pub fn to_row_major(&self) -> Vec<C64> {
        let mut out = Vec::with_capacity(self.rows() * self.cols());
        for i in 0..self.rows() {
            for j in 0..self.cols() {
                out.push(self.0[(i, j)]);
            }
        }
        out
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn conjugate(&self) -> Self {
        Self(self.0.conjugate())
    }

    pub fn scale(&self, s: C64) -> Self {
        Self(&self.0 * s)
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    pub fn kron(&self, other: &Self) -> Self {
        Self(self.0.kronecker(&other.0))
    }

    /// Largest absolute entry-wise difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.0.shape(), other.0.shape(), "shape mismatch");
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn frobenius_distance(&self, other: &Self) -> f64 {
        assert_eq!(self.0.shape(), other.0.shape(), "shape mismatch");
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_square(&self) -> bool {
        self.rows() == self.cols()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.is_square() && self.max_abs_diff(&self.adjoint()) <= tol
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn hermitian_eigenvalues(&self) -> Vec<f64> {
        let h = (&self.0 + self.0.adjoint()) * cr(0.5);
        let mut ev: Vec<f64> = SymmetricEigen::new(h).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// Principal square root of a Hermitian PSD matrix; negative eigenvalues
    /// are clipped to zero.
    pub fn psd_sqrt(&self) -> Self {
        let h = (&self.0 + self.0.adjoint()) * cr(0.5);
        let eig = SymmetricEigen::new(h);
        let v = eig.eigenvectors;
        let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|x| cr(x.max(0.0).sqrt())));
        Self(&v * d * v.adjoint())
    }

    /// Checks the density-matrix invariants: Hermitian, unit trace and
    /// positive semidefinite at the crate tolerances.
    pub fn check_density(&self) -> Result<()> {
        if !self.is_square() {
            return Err(invalid("density matrix must be square"));
        }
        if !self.is_hermitian(HERMITIAN_TOL) {
            return Err(invalid("density matrix is not Hermitian"));
        }
        let tr = self.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(invalid(format!("density matrix trace {tr} != 1")));
        }
        let min = self.hermitian_eigenvalues()[0];
        if min < PSD_TOL {
            return Err(invalid(format!(
                "density matrix has negative eigenvalue {min:e}"
            )));
        }
        Ok(())
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix(&self.0 * &rhs.0)
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix(&self.0 + &rhs.0)
    }
}

/// Kronecker product `a ⊗ b`.
pub fn tensor_product(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kron(b)
}

pub fn pauli_x() -> ComplexMatrix {
    ComplexMatrix::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).unwrap()
}

pub fn pauli_y() -> ComplexMatrix {
    ComplexMatrix::from_row_major(2, 2, vec![cr(0.0), c(0.0, -1.0), c(0.0, 1.0), cr(0.0)])
        .unwrap()
}

pub fn pauli_z() -> ComplexMatrix {
    ComplexMatrix::diagonal(&[cr(1.0), cr(-1.0)])
}

/// Jones matrix of a half-wave plate with its fast axis at `angle` from H:
/// `[[cos 2θ, sin 2θ], [sin 2θ, -cos 2θ]]`.
pub fn hwp_operator(angle: f64) -> Result<ComplexMatrix> {
    if !angle.is_finite() {
        return Err(invalid("half-wave plate angle must be finite"));
    }
    let (s, co) = (2.0 * angle).sin_cos();
    ComplexMatrix::from_real_rows(&[&[co, s], &[s, -co]])
}

/// Normalized Jones vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarizationVector {
    amp_h: C64,
    amp_v: C64,
}

impl PolarizationVector {
    pub fn new(amp_h: C64, amp_v: C64) -> Result<Self> {
        let n = amp_h.norm_sqr() + amp_v.norm_sqr();
        if !n.is_finite() || (n - 1.0).abs() > NORM_TOL {
            return Err(invalid(format!("polarization vector norm² {n} != 1")));
        }
        Ok(Self { amp_h, amp_v })
    }

    /// Linear polarization at `angle` from H (analyzer convention).
    pub fn linear(angle: f64) -> Self {
        let (s, co) = angle.sin_cos();
        Self {
            amp_h: cr(co),
            amp_v: cr(s),
        }
    }

    /// The state an ideal analyzer at `angle` transmits, built through the
    /// half-wave plate at `angle / 2` followed by an H polarizer.
    pub fn analyzer(angle: f64) -> Result<Self> {
        let m = hwp_operator(angle / 2.0)?;
        // the plate is real symmetric and involutory, so M|H> is the state mapped onto H
        Ok(Self {
            amp_h: m.get(0, 0),
            amp_v: m.get(1, 0),
        })
    }

    pub fn h() -> Self {
        Self::linear(0.0)
    }

    pub fn v() -> Self {
        Self::linear(std::f64::consts::FRAC_PI_2)
    }

    /// (H + V)/√2
    pub fn d() -> Self {
        Self {
            amp_h: cr(FRAC_1_SQRT_2),
            amp_v: cr(FRAC_1_SQRT_2),
        }
    }

    /// (H - V)/√2
    pub fn a() -> Self {
        Self {
            amp_h: cr(FRAC_1_SQRT_2),
            amp_v: cr(-FRAC_1_SQRT_2),
        }
    }

    /// (H - iV)/√2
    pub fn r() -> Self {
        Self {
            amp_h: cr(FRAC_1_SQRT_2),
            amp_v: c(0.0, -FRAC_1_SQRT_2),
        }
    }

    /// (H + iV)/√2
    pub fn l() -> Self {
        Self {
            amp_h: cr(FRAC_1_SQRT_2),
            amp_v: c(0.0, FRAC_1_SQRT_2),
        }
    }

    pub fn amp_h(&self) -> C64 {
        self.amp_h
    }

    pub fn amp_v(&self) -> C64 {
        self.amp_v
    }

    pub fn orthogonal(&self) -> Self {
        Self {
            amp_h: -self.amp_v.conj(),
            amp_v: self.amp_h.conj(),
        }
    }

    pub fn projector(&self) -> ComplexMatrix {
        ComplexMatrix::outer(&[self.amp_h, self.amp_v])
    }
}

/// 4x4 density matrix of a qubit pair.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoQubitState {
    rho: ComplexMatrix,
}

impl TwoQubitState {
    pub fn from_density(rho: ComplexMatrix) -> Result<Self> {
        if rho.rows() != 4 || rho.cols() != 4 {
            return Err(invalid("two-qubit density matrix must be 4x4"));
        }
        rho.check_density()?;
        Ok(Self { rho })
    }

    pub fn from_pure(amplitudes: &[C64; 4]) -> Result<Self> {
        let n: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (n - 1.0).abs() > NORM_TOL {
            return Err(invalid(format!("state vector norm² {n} != 1")));
        }
        Ok(Self {
            rho: ComplexMatrix::outer(amplitudes),
        })
    }

    /// `weight·a + (1 - weight)·b`
    pub fn mixture(weight: f64, a: &Self, b: &Self) -> Result<Self> {
        if !(0.0..=1.0).contains(&weight) {
            return Err(invalid("mixture weight must lie in [0, 1]"));
        }
        let rho = &a.rho.scale(cr(weight)) + &b.rho.scale(cr(1.0 - weight));
        Ok(Self { rho })
    }

    pub fn maximally_mixed() -> Self {
        Self {
            rho: ComplexMatrix::identity(4).scale(cr(0.25)),
        }
    }

    pub fn rho(&self) -> &ComplexMatrix {
        &self.rho
    }

    pub fn element(&self, i: usize, j: usize) -> C64 {
        self.rho.get(i, j)
    }

    pub fn populations(&self) -> [f64; 4] {
        std::array::from_fn(|i| self.rho.get(i, i).re)
    }

    pub fn purity(&self) -> f64 {
        (&self.rho * &self.rho).trace().re
    }

    /// `U ρ U†`; `u` must be a 4x4 unitary.
    pub fn evolve(&self, u: &ComplexMatrix) -> Self {
        Self {
            rho: &(u * &self.rho) * &u.adjoint(),
        }
    }

    /// Phase `e^{iδ}` on the `|1>` branch of qubit 1.
    pub fn with_qubit1_phase(&self, delta: f64) -> Self {
        let p = C64::from_polar(1.0, delta);
        let one = cr(1.0);
        self.evolve(&ComplexMatrix::diagonal(&[one, p, one, p]))
    }

    /// `Tr[ρ (A ⊗ B)]` with `A` acting on qubit 0 and `B` on qubit 1.
    pub fn expectation(&self, op0: &ComplexMatrix, op1: &ComplexMatrix) -> C64 {
        (&self.rho * &op0.kron(op1)).trace()
    }

    /// Probability of projecting qubit 0 onto `a` and qubit 1 onto `b`.
    pub fn projection_probability(&self, a: &PolarizationVector, b: &PolarizationVector) -> f64 {
        let v: [C64; 4] = [
            a.amp_h * b.amp_h,
            a.amp_h * b.amp_v,
            a.amp_v * b.amp_h,
            a.amp_v * b.amp_v,
        ];
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..4 {
            for j in 0..4 {
                acc += v[i].conj() * self.rho.get(i, j) * v[j];
            }
        }
        acc.re.clamp(0.0, 1.0)
    }
}

/// `(|00> + |11>)/√2`
pub fn phi_plus_vector() -> [C64; 4] {
    [cr(FRAC_1_SQRT_2), cr(0.0), cr(0.0), cr(FRAC_1_SQRT_2)]
}

pub fn bell_phi_plus() -> TwoQubitState {
    TwoQubitState::from_pure(&phi_plus_vector()).expect("normalized")
}

/// `V·|Φ+><Φ+| + (1 - V)·I/4`
pub fn werner_state(visibility: f64) -> Result<TwoQubitState> {
    if !(0.0..=1.0).contains(&visibility) {
        return Err(invalid(format!("visibility {visibility} outside [0, 1]")));
    }
    TwoQubitState::mixture(visibility, &bell_phi_plus(), &TwoQubitState::maximally_mixed())
}

/// `<ψ|ρ|ψ>` for a normalized pure target.
pub fn state_fidelity(rho: &TwoQubitState, target: &[C64]) -> Result<f64> {
    if target.len() != 4 {
        return Err(invalid("target must have four amplitudes"));
    }
    let n: f64 = target.iter().map(|a| a.norm_sqr()).sum();
    if (n - 1.0).abs() > 1e-10 {
        return Err(invalid(format!("target norm² {n} != 1")));
    }
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..4 {
        for j in 0..4 {
            acc += target[i].conj() * rho.element(i, j) * target[j];
        }
    }
    debug_assert!(acc.im.abs() < 1e-10);
    Ok(acc.re.clamp(0.0, 1.0))
}

/// Wootters concurrence of a normalized two-qubit density matrix.
pub fn wootters_concurrence(rho: &ComplexMatrix) -> Result<f64> {
    if rho.rows() != 4 || rho.cols() != 4 {
        return Err(invalid("concurrence needs a 4x4 matrix"));
    }
    let yy = pauli_y().kron(&pauli_y());
    let flipped = &(&yy * &rho.conjugate()) * &yy;
    let s = rho.psd_sqrt();
    let inner = &(&s * &flipped) * &s;
    let mut lambdas: Vec<f64> = inner
        .hermitian_eigenvalues()
        .into_iter()
        .map(|x| x.max(0.0).sqrt())
        .collect();
    lambdas.sort_by(|a, b| b.total_cmp(a));
    Ok((lambdas[0] - lambdas[1] - lambdas[2] - lambdas[3]).max(0.0))
}

pub(crate) fn require_finite(name: &str, x: f64) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::InvalidArgument(format!("{name} must be finite")))
    }
}

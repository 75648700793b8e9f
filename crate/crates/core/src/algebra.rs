//! Pauli-string basis of su(2^n), the horizontal subspace Δ spanned by one- and
//! two-body strings, and the exponential map.
//!
//! Qubit 0 is the leftmost Kronecker factor (most significant bit of a
//! computational-basis index). Basis elements are normalised as
//! `τ = (i/√d)·P` so that they are orthonormal under `inner(a, b) = Re tr(a†b)`.

use std::fmt;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{GeoqcError, Result};
use crate::linalg::{ComplexMatrix, I, ONE, ZERO};

/// Tolerance for the skew-Hermitian / traceless checks, relative to max(1, ‖A‖_F).
pub const ALGEBRA_TOL: f64 = 1e-10;

/// An n-slot word over {I, σ₁, σ₂, σ₃}, encoded as 0..=3 per slot.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PauliString {
    slots: Vec<u8>,
}

impl PauliString {
    pub fn new(slots: Vec<u8>) -> Result<Self> {
        if slots.is_empty() {
            return Err(GeoqcError::InvalidInput("empty Pauli word".into()));
        }
        if let Some(bad) = slots.iter().find(|&&s| s > 3) {
            return Err(GeoqcError::InvalidInput(format!(
                "Pauli slot value {bad} out of range 0..=3"
            )));
        }
        Ok(Self { slots })
    }

    /// Single non-identity Pauli `pauli` on `qubit` of `n`.
    pub fn single(n: usize, qubit: usize, pauli: u8) -> Result<Self> {
        if qubit >= n {
            return Err(GeoqcError::InvalidInput(format!(
                "qubit {qubit} out of range for n={n}"
            )));
        }
        let mut slots = vec![0; n];
        slots[qubit] = pauli;
        Self::new(slots)
    }

    pub fn slots(&self) -> &[u8] {
        &self.slots
    }

    pub fn n_qubits(&self) -> usize {
        self.slots.len()
    }

    pub fn weight(&self) -> usize {
        self.slots.iter().filter(|&&s| s != 0).count()
    }

    pub fn is_identity(&self) -> bool {
        self.weight() == 0
    }

    /// Qubits carrying a non-identity factor, ascending.
    pub fn support(&self) -> Vec<usize> {
        (0..self.slots.len()).filter(|&q| self.slots[q] != 0).collect()
    }

    /// Sparse form of the Pauli matrix: row `r` has its single non-zero entry
    /// at column `r ^ flip` with value `phases[r]`.
    pub fn action(&self) -> PauliAction {
        let n = self.slots.len();
        let d = 1usize << n;
        let mut flip = 0usize;
        for (q, &s) in self.slots.iter().enumerate() {
            if s == 1 || s == 2 {
                flip |= 1 << (n - 1 - q);
            }
        }
        let phases = (0..d)
            .map(|r| {
                let mut ph = ONE;
                for (q, &s) in self.slots.iter().enumerate() {
                    let bit = (r >> (n - 1 - q)) & 1;
                    ph *= match (s, bit) {
                        (2, 0) => -I,
                        (2, _) => I,
                        (3, 1) => -ONE,
                        _ => ONE,
                    };
                }
                ph
            })
            .collect();
        PauliAction { flip, phases }
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &s in &self.slots {
            f.write_str(["I", "X", "Y", "Z"][s as usize])?;
        }
        Ok(())
    }
}

/// Signed-permutation representation of a Pauli string matrix.
#[derive(Clone, Debug)]
pub struct PauliAction {
    pub flip: usize,
    pub phases: Vec<Complex64>,
}

impl PauliAction {
    pub fn dim(&self) -> usize {
        self.phases.len()
    }

    /// `m ← m · (cos θ · I + i sin θ · P)`, i.e. right multiplication by exp(iθP).
    pub fn right_mul_exp(&self, m: &mut ComplexMatrix, theta: f64) {
        let d = self.dim();
        let (c, s) = (theta.cos(), theta.sin());
        let is = Complex64::new(0.0, s);
        let data = m.as_mut_slice();
        let mut row = vec![ZERO; d];
        for r in 0..d {
            let src = &data[r * d..(r + 1) * d];
            // (M P)[r, k^flip] = M[r, k]·phase(k)
            for k in 0..d {
                row[k ^ self.flip] = src[k] * self.phases[k];
            }
            let dst = &mut data[r * d..(r + 1) * d];
            for k in 0..d {
                dst[k] = dst[k] * c + is * row[k];
            }
        }
    }

    /// `P · m`, using `P[r, r^flip] = phase(r)`.
    pub fn left_mul(&self, m: &ComplexMatrix) -> ComplexMatrix {
        let d = self.dim();
        let src = m.as_slice();
        let mut out = ComplexMatrix::zeros(d);
        let dst = out.as_mut_slice();
        for r in 0..d {
            let from = r ^ self.flip;
            let ph = self.phases[r];
            for k in 0..d {
                dst[r * d + k] = ph * src[from * d + k];
            }
        }
        out
    }

    /// `m ← (cos θ · I + i sin θ · P) · m`.
    pub fn left_mul_exp(&self, m: &mut ComplexMatrix, theta: f64) {
        let pm = self.left_mul(m);
        let (c, s) = (theta.cos(), theta.sin());
        let is = Complex64::new(0.0, s);
        for (x, p) in m.as_mut_slice().iter_mut().zip(pm.as_slice()) {
            *x = *x * c + is * p;
        }
    }

    /// `Re tr(P† A)`-style overlap: returns `tr(P·A)` (P is Hermitian).
    pub fn trace_with(&self, a: &ComplexMatrix) -> Complex64 {
        // tr(P A) = Σ_r Σ_k P[r,k] A[k,r] = Σ_r phase(r)·A[r^flip, r]
        (0..self.dim()).map(|r| self.phases[r] * a[(r ^ self.flip, r)]).sum()
    }
}

const PAULI_2X2: [[Complex64; 4]; 4] = [
    [ONE, ZERO, ZERO, ONE],
    [ZERO, ONE, ONE, ZERO],
    [ZERO, Complex64 { re: 0.0, im: -1.0 }, I, ZERO],
    [ONE, ZERO, ZERO, Complex64 { re: -1.0, im: 0.0 }],
];

/// 2×2 matrix for slot value 0..=3 (identity, σ₁, σ₂, σ₃).
pub fn single_qubit_pauli(k: u8) -> ComplexMatrix {
    ComplexMatrix::from_row_major(PAULI_2X2[k as usize].to_vec()).expect("2x2")
}

/// n-fold Kronecker product of the slot matrices.
pub fn pauli_matrix(p: &PauliString) -> ComplexMatrix {
    p.slots
        .iter()
        .map(|&s| single_qubit_pauli(s))
        .reduce(|acc, m| acc.kron(&m))
        .expect("PauliString is non-empty")
}

/// A traceless skew-Hermitian matrix, an element of su(d).
#[derive(Clone, Debug, PartialEq)]
pub struct AlgebraElement {
    matrix: ComplexMatrix,
}

impl AlgebraElement {
    /// Validates skew-Hermiticity and tracelessness.
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        if !matrix.is_finite() {
            return Err(GeoqcError::Numeric("non-finite algebra element".into()));
        }
        let scale = matrix.frobenius_norm().max(1.0);
        let skew = (&matrix + &matrix.adjoint()).frobenius_norm();
        if skew > ALGEBRA_TOL * scale {
            return Err(GeoqcError::InvalidInput(format!(
                "matrix is not skew-Hermitian (|A + A^dag|_F = {skew:e})"
            )));
        }
        let tr = matrix.trace().norm();
        if tr > ALGEBRA_TOL * scale {
            return Err(GeoqcError::InvalidInput(format!(
                "matrix is not traceless (|tr A| = {tr:e})"
            )));
        }
        Ok(Self { matrix })
    }

    pub(crate) fn from_matrix_unchecked(matrix: ComplexMatrix) -> Self {
        Self { matrix }
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            matrix: ComplexMatrix::zeros(dim),
        }
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            matrix: self.matrix.scale_real(s),
        }
    }

    pub fn add(&self, other: &AlgebraElement) -> Self {
        Self {
            matrix: &self.matrix + &other.matrix,
        }
    }

    pub fn sub(&self, other: &AlgebraElement) -> Self {
        Self {
            matrix: &self.matrix - &other.matrix,
        }
    }

    /// √inner(A, A), which equals the Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.matrix.frobenius_norm()
    }

    /// `x · A · x†`; stays in su(d) for unitary `x`.
    pub fn conjugate_by(&self, x: &ComplexMatrix) -> Self {
        Self {
            matrix: x.matmul(&self.matrix).matmul_adjoint(x),
        }
    }

    pub fn adjoint(&self) -> ComplexMatrix {
        self.matrix.adjoint()
    }
}

/// `τ = (i/√d)·pauli_matrix(p)`.
pub fn basis_element(p: &PauliString) -> Result<AlgebraElement> {
    if p.is_identity() {
        return Err(GeoqcError::InvalidInput(
            "the all-identity string is not an su(2^n) basis element".into(),
        ));
    }
    let d = 1usize << p.n_qubits();
    let s = Complex64::new(0.0, 1.0 / (d as f64).sqrt());
    Ok(AlgebraElement::from_matrix_unchecked(pauli_matrix(p).scale(s)))
}

/// `Re tr(a†b)`.
pub fn inner(a: &AlgebraElement, b: &AlgebraElement) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(GeoqcError::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    Ok(a.matrix
        .as_slice()
        .iter()
        .zip(b.matrix.as_slice())
        .map(|(x, y)| x.re * y.re + x.im * y.im)
        .sum())
}

/// All non-identity strings on n qubits (4^n − 1 of them), ordered by their
/// base-4 index with slot 0 most significant.
pub fn full_basis(n: usize) -> Result<Vec<PauliString>> {
    if n == 0 {
        return Err(GeoqcError::InvalidInput("n must be at least 1".into()));
    }
    (1..(1usize << (2 * n)))
        .map(|idx| {
            let slots = (0..n).map(|q| ((idx >> (2 * (n - 1 - q))) & 3) as u8).collect();
            PauliString::new(slots)
        })
        .collect()
}

/// Ordered basis of the horizontal subspace Δ: every weight-1 and weight-2
/// Pauli string.
///
/// Order: weight-1 strings by (qubit, Pauli), then weight-2 strings by
/// (first qubit, second qubit, first Pauli, second Pauli). Training data and
/// inference share this order, so it must never change.
#[derive(Clone, Debug)]
pub struct HorizontalBasis {
    n: usize,
    elements: Vec<PauliString>,
    actions: Vec<PauliAction>,
}

impl HorizontalBasis {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(GeoqcError::InvalidInput(format!(
                "horizontal basis needs n >= 2 (got {n}); no two-body terms exist"
            )));
        }
        let mut elements = Vec::with_capacity(3 * n + 9 * n * (n - 1) / 2);
        for q in 0..n {
            for p in 1..=3 {
                elements.push(PauliString::single(n, q, p)?);
            }
        }
        for q1 in 0..n {
            for q2 in q1 + 1..n {
                for p1 in 1..=3 {
                    for p2 in 1..=3 {
                        let mut slots = vec![0; n];
                        slots[q1] = p1;
                        slots[q2] = p2;
                        elements.push(PauliString::new(slots)?);
                    }
                }
            }
        }
        let actions = elements.iter().map(PauliString::action).collect();
        Ok(Self { n, elements, actions })
    }

    pub fn n_qubits(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        1 << self.n
    }

    /// m = dim Δ.
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[PauliString] {
        &self.elements
    }

    pub fn actions(&self) -> &[PauliAction] {
        &self.actions
    }

    pub fn tau(&self, a: usize) -> AlgebraElement {
        basis_element(&self.elements[a]).expect("horizontal strings are non-identity")
    }

    /// 1/√d, the normalisation of τ relative to the bare Pauli matrix.
    pub fn norm_factor(&self) -> f64 {
        1.0 / (self.dim() as f64).sqrt()
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        if dim != self.dim() {
            return Err(GeoqcError::DimensionMismatch {
                expected: self.dim(),
                found: dim,
            });
        }
        Ok(())
    }

    /// Σ_a c_a τ_a.
    pub fn combine(&self, coeffs: &[f64]) -> Result<AlgebraElement> {
        if coeffs.len() != self.len() {
            return Err(GeoqcError::DimensionMismatch {
                expected: self.len(),
                found: coeffs.len(),
            });
        }
        let d = self.dim();
        let mut m = ComplexMatrix::zeros(d);
        let s = self.norm_factor();
        for (act, &c) in self.actions.iter().zip(coeffs) {
            if c == 0.0 {
                continue;
            }
            let w = Complex64::new(0.0, c * s);
            for r in 0..d {
                m[(r, r ^ act.flip)] += w * act.phases[r];
            }
        }
        Ok(AlgebraElement::from_matrix_unchecked(m))
    }
}

/// Coordinates of `lam` along Δ: entry a is `inner(τ_a, lam)`.
pub fn coeffs_of(lam: &AlgebraElement, basis: &HorizontalBasis) -> Result<Vec<f64>> {
    basis.check_dim(lam.dim())?;
    let s = basis.norm_factor();
    // inner(τ, A) = Re tr(τ† A) = Re(−i/√d · tr(P A)) = Im(tr(P A))/√d
    Ok(basis
        .actions
        .iter()
        .map(|act| act.trace_with(lam.matrix()).im * s)
        .collect())
}

/// Orthogonal projection onto Δ under `inner`.
pub fn proj_horizontal(lam: &AlgebraElement, basis: &HorizontalBasis) -> Result<AlgebraElement> {
    basis.combine(&coeffs_of(lam, basis)?)
}

/// Matrix exponential of an algebra element; the result is unitary.
pub fn mat_exp(a: &AlgebraElement) -> Result<ComplexMatrix> {
    expm(a.matrix())
}

/// Scaling-and-squaring with a degree-13 Padé approximant.
pub fn expm(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    const THETA_13: f64 = 5.371920351148152;

    if !a.is_finite() {
        return Err(GeoqcError::Numeric(
            "non-finite entry in matrix exponential input".into(),
        ));
    }
    let d = a.dim();
    let norm1 = a.adjoint().norm_inf();
    let s = if norm1 > THETA_13 {
        (norm1 / THETA_13).log2().ceil() as i32
    } else {
        0
    };
    let a = a.scale_real(0.5f64.powi(s));
    let id = ComplexMatrix::identity(d);
    let a2 = a.matmul(&a);
    let a4 = a2.matmul(&a2);
    let a6 = a4.matmul(&a2);
    let lin = |c6: f64, c4: f64, c2: f64, c0: f64| {
        let mut m = a6.scale_real(c6);
        m.add_scaled(Complex64::new(c4, 0.0), &a4);
        m.add_scaled(Complex64::new(c2, 0.0), &a2);
        m.add_scaled(Complex64::new(c0, 0.0), &id);
        m
    };
    let u_inner = {
        let mut m = a6.matmul(&lin(B[13], B[11], B[9], 0.0));
        m = &m + &lin(B[7], B[5], B[3], B[1]);
        m
    };
    let u = a.matmul(&u_inner);
    let v = &a6.matmul(&lin(B[12], B[10], B[8], 0.0)) + &lin(B[6], B[4], B[2], B[0]);
    let mut r = (&v - &u).solve(&(&v + &u))?;
    for _ in 0..s {
        r = r.matmul(&r);
    }
    if !r.is_finite() {
        return Err(GeoqcError::Numeric("matrix exponential overflowed".into()));
    }
    Ok(r)
}

/// `exp(c_1 τ_1) · exp(c_2 τ_2) ··· exp(c_m τ_m)` in canonical basis order.
pub fn embed_local(coeffs: &[f64], basis: &HorizontalBasis) -> Result<ComplexMatrix> {
    if coeffs.len() != basis.len() {
        return Err(GeoqcError::DimensionMismatch {
            expected: basis.len(),
            found: coeffs.len(),
        });
    }
    let mut m = ComplexMatrix::identity(basis.dim());
    right_mul_local(&mut m, coeffs, basis);
    Ok(m)
}

/// `m ← m · embed_local(coeffs)`. Each factor uses exp(cτ) = cos(c/√d)·I + i sin(c/√d)·P.
pub(crate) fn right_mul_local(m: &mut ComplexMatrix, coeffs: &[f64], basis: &HorizontalBasis) {
    let s = basis.norm_factor();
    for (act, &c) in basis.actions.iter().zip(coeffs) {
        if c != 0.0 {
            act.right_mul_exp(m, c * s);
        }
    }
}

/// `embed_local(c¹) · embed_local(c²) ··· embed_local(c^N)`, segment 1 leftmost.
pub fn embed_global(coeffs: &[Vec<f64>], basis: &HorizontalBasis) -> Result<ComplexMatrix> {
    if coeffs.is_empty() {
        return Err(GeoqcError::InvalidInput("coefficient matrix has no segments".into()));
    }
    let mut m = ComplexMatrix::identity(basis.dim());
    for (k, row) in coeffs.iter().enumerate() {
        if row.len() != basis.len() {
            return Err(GeoqcError::InvalidInput(format!(
                "segment {k} has {} coefficients, expected {}",
                row.len(),
                basis.len()
            )));
        }
        right_mul_local(&mut m, row, basis);
    }
    Ok(m)
}

/// Random element Σ g_a τ_a over the full basis with i.i.d. standard normal g.
pub fn random_algebra_element<R: Rng + ?Sized>(rng: &mut R, n: usize) -> AlgebraElement {
    let basis = full_basis(n).expect("n >= 1");
    let d = 1usize << n;
    let s = 1.0 / (d as f64).sqrt();
    let mut m = ComplexMatrix::zeros(d);
    for p in &basis {
        let g: f64 = rng.sample(StandardNormal);
        let act = p.action();
        let w = Complex64::new(0.0, g * s);
        for r in 0..d {
            m[(r, r ^ act.flip)] += w * act.phases[r];
        }
    }
    AlgebraElement::from_matrix_unchecked(m)
}

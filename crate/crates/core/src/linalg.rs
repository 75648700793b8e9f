//! Dense complex matrices for the small dimensions used here (d = 2^n, n ≤ 3).
//!
//! Storage is row-major `Complex64`. The JSON form is the repo-wide schema
//! `{"dim": d, "re": [[..]], "im": [[..]]}`.

use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{GeoqcError, Result};

pub const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
pub const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };
pub const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Tolerance used by [`ComplexMatrix::is_unitary`] when no other is given.
pub const UNITARY_TOL: f64 = 1e-10;
/// Tolerance on |det - 1| for special-unitary checks.
pub const DET_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![ZERO; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for k in 0..dim {
            m.data[k * dim + k] = ONE;
        }
        m
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(dim * dim);
        for r in 0..dim {
            for c in 0..dim {
                data.push(f(r, c));
            }
        }
        Self { dim, data }
    }

    /// Builds a matrix from row-major entries; `data.len()` must be a perfect square.
    pub fn from_row_major(data: Vec<Complex64>) -> Result<Self> {
        let dim = (data.len() as f64).sqrt().round() as usize;
        if dim == 0 || dim * dim != data.len() {
            return Err(GeoqcError::InvalidInput(format!(
                "{} entries do not form a square matrix",
                data.len()
            )));
        }
        Ok(Self { dim, data })
    }

    pub fn diagonal(entries: &[Complex64]) -> Self {
        let dim = entries.len();
        let mut m = Self::zeros(dim);
        for (k, &v) in entries.iter().enumerate() {
            m.data[k * dim + k] = v;
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[Complex64] {
        &self.data[r * self.dim..(r + 1) * self.dim]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn adjoint(&self) -> Self {
        let d = self.dim;
        Self::from_fn(d, |r, c| self.data[c * d + r].conj())
    }

    pub fn transpose(&self) -> Self {
        let d = self.dim;
        Self::from_fn(d, |r, c| self.data[c * d + r])
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|k| self.data[k * self.dim + k]).sum()
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|&z| z * s).collect(),
        }
    }

    pub fn scale_real(&self, s: f64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|&z| z * s).collect(),
        }
    }

    /// `self += s * other`
    pub fn add_scaled(&mut self, s: Complex64, other: &ComplexMatrix) {
        debug_assert_eq!(self.dim, other.dim);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// ‖self − other‖_F
    pub fn distance(&self, other: &ComplexMatrix) -> f64 {
        debug_assert_eq!(self.dim, other.dim);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Largest absolute row sum, an upper bound on the spectral norm.
    pub fn norm_inf(&self) -> f64 {
        (0..self.dim)
            .map(|r| self.row(r).iter().map(|z| z.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn matmul(&self, other: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, other.dim, "matmul dimension mismatch");
        let d = self.dim;
        let mut out = vec![ZERO; d * d];
        for r in 0..d {
            let orow = &mut out[r * d..(r + 1) * d];
            for k in 0..d {
                let a = self.data[r * d + k];
                if a == ZERO {
                    continue;
                }
                let brow = &other.data[k * d..(k + 1) * d];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        ComplexMatrix { dim: d, data: out }
    }

    /// `self · other†` without materialising the adjoint.
    pub fn matmul_adjoint(&self, other: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, other.dim, "matmul dimension mismatch");
        let d = self.dim;
        ComplexMatrix::from_fn(d, |r, c| {
            let a = &self.data[r * d..(r + 1) * d];
            let b = &other.data[c * d..(c + 1) * d];
            a.iter().zip(b).map(|(x, y)| x * y.conj()).sum()
        })
    }

    pub fn kron(&self, other: &ComplexMatrix) -> ComplexMatrix {
        let (da, db) = (self.dim, other.dim);
        let d = da * db;
        ComplexMatrix::from_fn(d, |r, c| {
            self.data[(r / db) * da + c / db] * other.data[(r % db) * db + c % db]
        })
    }

    /// ‖M†M − I‖_F
    pub fn unitarity_deviation(&self) -> f64 {
        let mut g = self.adjoint().matmul(self);
        for k in 0..self.dim {
            g.data[k * self.dim + k] -= ONE;
        }
        g.frobenius_norm()
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.unitarity_deviation() <= tol
    }

    pub fn is_special_unitary(&self, tol: f64, det_tol: f64) -> bool {
        self.is_unitary(tol) && self.determinant().is_ok_and(|d| (d - ONE).norm() <= det_tol)
    }

    /// Determinant by LU with partial pivoting.
    pub fn determinant(&self) -> Result<Complex64> {
        match Lu::factor(self) {
            Ok(lu) => Ok(lu.determinant()),
            Err(GeoqcError::Singular(_)) => Ok(ZERO),
            Err(e) => Err(e),
        }
    }

    pub fn inverse(&self) -> Result<ComplexMatrix> {
        Lu::factor(self)?.inverse()
    }

    /// Solves `self · X = rhs`.
    pub fn solve(&self, rhs: &ComplexMatrix) -> Result<ComplexMatrix> {
        Lu::factor(self)?.solve_matrix(rhs)
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        &self.data[r * self.dim + c]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex64 {
        &mut self.data[r * self.dim + c]
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim);
        ComplexMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim);
        ComplexMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Neg for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn neg(self) -> ComplexMatrix {
        self.scale_real(-1.0)
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.matmul(rhs)
    }
}

/// LU factorisation `P·A = L·U` with partial pivoting.
struct Lu {
    lu: ComplexMatrix,
    perm: Vec<usize>,
    swaps: usize,
}

impl Lu {
    fn factor(a: &ComplexMatrix) -> Result<Lu> {
        if !a.is_finite() {
            return Err(GeoqcError::Numeric("non-finite matrix entry".into()));
        }
        let d = a.dim;
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..d).collect();
        let mut swaps = 0;
        let scale = a.norm_inf().max(f64::MIN_POSITIVE);
        for k in 0..d {
            let (p, best) = (k..d)
                .map(|r| (r, lu[(r, k)].norm()))
                .fold((k, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if best <= scale * 1e-14 {
                return Err(GeoqcError::Singular(best));
            }
            if p != k {
                for c in 0..d {
                    lu.data.swap(k * d + c, p * d + c);
                }
                perm.swap(k, p);
                swaps += 1;
            }
            let pivot = lu[(k, k)];
            for r in k + 1..d {
                let f = lu[(r, k)] / pivot;
                lu[(r, k)] = f;
                for c in k + 1..d {
                    let v = lu[(k, c)];
                    lu[(r, c)] -= f * v;
                }
            }
        }
        Ok(Lu { lu, perm, swaps })
    }

    fn determinant(&self) -> Complex64 {
        let mut det: Complex64 = (0..self.lu.dim).map(|k| self.lu[(k, k)]).product();
        if self.swaps % 2 == 1 {
            det = -det;
        }
        det
    }

    fn solve_vec(&self, b: &[Complex64]) -> Vec<Complex64> {
        let d = self.lu.dim;
        let mut x: Vec<Complex64> = self.perm.iter().map(|&p| b[p]).collect();
        for r in 0..d {
            for c in 0..r {
                let l = self.lu[(r, c)];
                let xc = x[c];
                x[r] -= l * xc;
            }
        }
        for r in (0..d).rev() {
            for c in r + 1..d {
                let u = self.lu[(r, c)];
                let xc = x[c];
                x[r] -= u * xc;
            }
            x[r] /= self.lu[(r, r)];
        }
        x
    }

    fn solve_matrix(&self, rhs: &ComplexMatrix) -> Result<ComplexMatrix> {
        let d = self.lu.dim;
        if rhs.dim != d {
            return Err(GeoqcError::DimensionMismatch {
                expected: d,
                found: rhs.dim,
            });
        }
        let mut out = ComplexMatrix::zeros(d);
        let mut col = vec![ZERO; d];
        for c in 0..d {
            for r in 0..d {
                col[r] = rhs[(r, c)];
            }
            let x = self.solve_vec(&col);
            for r in 0..d {
                out[(r, c)] = x[r];
            }
        }
        Ok(out)
    }

    fn inverse(&self) -> Result<ComplexMatrix> {
        self.solve_matrix(&ComplexMatrix::identity(self.lu.dim))
    }
}

/// Wire form of a matrix: `{"dim": d, "re": [[..]], "im": [[..]]}`.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixJson {
    dim: usize,
    re: Vec<Vec<f64>>,
    im: Vec<Vec<f64>>,
}

impl Serialize for ComplexMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let d = self.dim;
        let rows = |f: fn(&Complex64) -> f64| -> Vec<Vec<f64>> {
            (0..d).map(|r| self.row(r).iter().map(f).collect()).collect()
        };
        MatrixJson {
            dim: d,
            re: rows(|z| z.re),
            im: rows(|z| z.im),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ComplexMatrix {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        let m = MatrixJson::deserialize(de)?;
        let d = m.dim;
        if d == 0 {
            return Err(D::Error::custom("matrix dim must be positive"));
        }
        if m.re.len() != d || m.im.len() != d {
            return Err(D::Error::custom(format!("expected {d} rows in re and im")));
        }
        let mut data = Vec::with_capacity(d * d);
        for (re, im) in m.re.iter().zip(&m.im) {
            if re.len() != d || im.len() != d {
                return Err(D::Error::custom(format!("expected rows of length {d}")));
            }
            data.extend(re.iter().zip(im).map(|(&a, &b)| Complex64::new(a, b)));
        }
        Ok(ComplexMatrix { dim: d, data })
    }
}

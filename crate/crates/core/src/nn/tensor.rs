use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{GeoqcError, Result};

/// Row-major real matrix. A batch of vectors is stored one vector per row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor2 {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor2 {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(GeoqcError::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Stacks equally long rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(GeoqcError::DimensionMismatch {
                    expected: cols,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(n, n);
        for k in 0..n {
            t.data[k * n + k] = 1.0;
        }
        t
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn sum_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn add_assign(&mut self, other: &Tensor2) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale_assign(&mut self, s: f64) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    /// Column sums, as a 1×cols tensor.
    pub fn column_sums(&self) -> Tensor2 {
        let mut out = Tensor2::zeros(1, self.cols);
        for r in 0..self.rows {
            for (o, v) in out.data.iter_mut().zip(self.row(r)) {
                *o += v;
            }
        }
        out
    }

    /// Copies columns `start..start+width` into a new tensor.
    pub fn columns(&self, start: usize, width: usize) -> Tensor2 {
        let mut out = Tensor2::zeros(self.rows, width);
        for r in 0..self.rows {
            out.row_mut(r).copy_from_slice(&self.row(r)[start..start + width]);
        }
        out
    }

    /// Writes `src` into columns `start..start+src.cols`.
    pub fn set_columns(&mut self, start: usize, src: &Tensor2) {
        debug_assert_eq!(self.rows, src.rows);
        for r in 0..self.rows {
            let w = src.cols;
            self.row_mut(r)[start..start + w].copy_from_slice(src.row(r));
        }
    }

    pub fn check_finite(&self, what: &str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(GeoqcError::Numeric(format!("non-finite values in {what}")))
        }
    }
}

/// `c ← alpha · op(a) · op(b) + beta · c`, where op transposes when the flag is set.
pub fn gemm(alpha: f64, a: &Tensor2, trans_a: bool, b: &Tensor2, trans_b: bool, beta: f64, c: &mut Tensor2) {
    let (m, k) = if trans_a { (a.cols, a.rows) } else { (a.rows, a.cols) };
    let (kb, n) = if trans_b { (b.cols, b.rows) } else { (b.rows, b.cols) };
    assert_eq!(k, kb, "gemm inner dimension mismatch");
    assert_eq!((c.rows, c.cols), (m, n), "gemm output shape mismatch");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.scale_assign(beta);
        return;
    }
    let (rsa, csa) = if trans_a {
        (1, a.cols as isize)
    } else {
        (a.cols as isize, 1)
    };
    let (rsb, csb) = if trans_b {
        (1, b.cols as isize)
    } else {
        (b.cols as isize, 1)
    };
    // SAFETY: strides and extents describe the owned buffers of a, b and c,
    // whose shapes were checked above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            c.data.as_mut_ptr(),
            c.cols as isize,
            1,
        );
    }
}

/// `op(a) · op(b)` into a fresh tensor.
pub fn matmul(a: &Tensor2, trans_a: bool, b: &Tensor2, trans_b: bool) -> Tensor2 {
    let m = if trans_a { a.cols } else { a.rows };
    let n = if trans_b { b.rows } else { b.cols };
    let mut c = Tensor2::zeros(m, n);
    gemm(1.0, a, trans_a, b, trans_b, 0.0, &mut c);
    c
}

/// Uniform in ±√(6/(fan_in+fan_out)).
pub fn glorot_uniform<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Tensor2 {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.gen_range(-limit..limit)).collect();
    Tensor2 { rows, cols, data }
}

/// Square orthogonal matrix from Gram–Schmidt on a Gaussian draw.
pub fn orthogonal<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Tensor2 {
    let mut q = Tensor2 {
        rows: n,
        cols: n,
        data: (0..n * n).map(|_| rng.sample(StandardNormal)).collect(),
    };
    for i in 0..n {
        for j in 0..i {
            let dot: f64 = q.row(i).iter().zip(q.row(j)).map(|(a, b)| a * b).sum();
            let rj = q.row(j).to_vec();
            for (a, b) in q.row_mut(i).iter_mut().zip(&rj) {
                *a -= dot * b;
            }
        }
        let norm = q.row(i).iter().map(|x| x * x).sum::<f64>().sqrt();
        q.row_mut(i).iter_mut().for_each(|x| *x /= norm);
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gemm_transposes() {
        let a = Tensor2::from_vec(2, 3, vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let b = Tensor2::from_vec(2, 3, vec![1., 0., 1., 0., 1., 0.]).unwrap();
        // a · bᵀ
        let c = matmul(&a, false, &b, true);
        assert_eq!(c.as_slice(), &[4., 2., 10., 5.]);
        // aᵀ · b
        let c = matmul(&a, true, &b, false);
        assert_eq!(c.shape(), (3, 3));
        assert_eq!(c.row(0), &[1., 4., 1.]);
    }

    #[test]
    fn orthogonal_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let q = orthogonal(&mut rng, 6);
        let g = matmul(&q, false, &q, true);
        for r in 0..6 {
            for c in 0..6 {
                let want = if r == c { 1.0 } else { 0.0 };
                assert!((g.get(r, c) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn glorot_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = glorot_uniform(&mut rng, 10, 20);
        let lim = (6.0f64 / 30.0).sqrt();
        assert!(w.as_slice().iter().all(|x| x.abs() <= lim));
    }

    #[test]
    fn column_helpers() {
        let t = Tensor2::from_vec(2, 4, (0..8).map(|x| x as f64).collect()).unwrap();
        let mid = t.columns(1, 2);
        assert_eq!(mid.as_slice(), &[1., 2., 5., 6.]);
        let mut z = Tensor2::zeros(2, 4);
        z.set_columns(1, &mid);
        assert_eq!(z.row(1), &[0., 5., 6., 0.]);
        assert_eq!(t.column_sums().as_slice(), &[4., 6., 8., 10.]);
    }
}

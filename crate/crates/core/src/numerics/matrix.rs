//! Dense row-major f64 matrices.
//!
//! The multiply kernels are delegated to `matrixmultiply`; everything
//! else is plain loops. Single-threaded and deterministic: the same
//! inputs produce bit-identical outputs on a given build.

use crate::error::{OfnError, Result};
use crate::numerics::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Matrix {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Build from row-major data. The length must match and every
    /// entry must be finite.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Matrix> {
        if data.len() != rows * cols {
            return Err(OfnError::shape(format!(
                "matrix {}x{} needs {} entries, got {}",
                rows,
                cols,
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(OfnError::validation("matrix entries must be finite"));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Uniformly random entries in [lo, hi), drawn row-major.
    pub fn uniform(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut Rng) -> Matrix {
        let data = (0..rows * cols).map(|_| rng.uniform(lo, hi)).collect();
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    /// self += alpha * other
    pub fn axpy(&mut self, alpha: f64, other: &Matrix) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(OfnError::shape(format!(
                "axpy shape mismatch: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn add_assign(&mut self, other: &Matrix) -> Result<()> {
        self.axpy(1.0, other)
    }

    pub fn frob_norm_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    /// Horizontal concatenation [a | b].
    pub fn concat_cols(a: &Matrix, b: &Matrix) -> Result<Matrix> {
        if a.rows != b.rows {
            return Err(OfnError::shape(format!(
                "concat_cols row mismatch: {} vs {}",
                a.rows, b.rows
            )));
        }
        let mut out = Matrix::zeros(a.rows, a.cols + b.cols);
        for i in 0..a.rows {
            out.row_mut(i)[..a.cols].copy_from_slice(a.row(i));
            out.row_mut(i)[a.cols..].copy_from_slice(b.row(i));
        }
        Ok(out)
    }

    /// Standard product a·b.
    pub fn matmul(&self, b: &Matrix) -> Result<Matrix> {
        let mut out = Matrix::zeros(self.rows, b.cols);
        gemm(false, false, self, b, 0.0, &mut out)?;
        Ok(out)
    }

    /// a·bᵀ.
    pub fn matmul_nt(&self, b: &Matrix) -> Result<Matrix> {
        let mut out = Matrix::zeros(self.rows, b.rows);
        gemm(false, true, self, b, 0.0, &mut out)?;
        Ok(out)
    }

    /// aᵀ·b.
    pub fn matmul_tn(&self, b: &Matrix) -> Result<Matrix> {
        let mut out = Matrix::zeros(self.cols, b.cols);
        gemm(true, false, self, b, 0.0, &mut out)?;
        Ok(out)
    }
}

/// out = a(ᵀ)·b(ᵀ) + beta·out. Shapes are validated against `out`.
pub fn gemm(
    trans_a: bool,
    trans_b: bool,
    a: &Matrix,
    b: &Matrix,
    beta: f64,
    out: &mut Matrix,
) -> Result<()> {
    let (m, k_a) = if trans_a {
        (a.cols, a.rows)
    } else {
        (a.rows, a.cols)
    };
    let (k_b, n) = if trans_b {
        (b.cols, b.rows)
    } else {
        (b.rows, b.cols)
    };
    if k_a != k_b {
        return Err(OfnError::shape(format!(
            "matmul inner dimension mismatch: {}x{} · {}x{}",
            m, k_a, k_b, n
        )));
    }
    if out.rows != m || out.cols != n {
        return Err(OfnError::shape(format!(
            "matmul output shape mismatch: want {}x{}, have {}x{}",
            m, n, out.rows, out.cols
        )));
    }
    if m == 0 || n == 0 {
        return Ok(());
    }
    if k_a == 0 {
        if beta == 0.0 {
            out.fill(0.0);
        } else if beta != 1.0 {
            out.scale(beta);
        }
        return Ok(());
    }
    let (rsa, csa) = if trans_a {
        (1isize, a.cols as isize)
    } else {
        (a.cols as isize, 1isize)
    };
    let (rsb, csb) = if trans_b {
        (1isize, b.cols as isize)
    } else {
        (b.cols as isize, 1isize)
    };
    let rsc = out.cols as isize;
    unsafe {
        matrixmultiply::dgemm(
            m,
            k_a,
            n,
            1.0,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            out.data.as_mut_ptr(),
            rsc,
            1,
        );
    }
    Ok(())
}

/// Numerically stable softmax: max-subtracted exponentiation,
/// normalized to sum 1. `NEG_INFINITY` entries come out as exact
/// zeros, which is how masked positions are excluded.
pub fn softmax(v: &[f64]) -> Vec<f64> {
    let mut out = v.to_vec();
    softmax_inplace(&mut out);
    out
}

pub fn softmax_inplace(v: &mut [f64]) {
    assert!(!v.is_empty(), "softmax of empty vector");
    let mut max = f64::NEG_INFINITY;
    let mut has_nan = false;
    for &x in v.iter() {
        if x.is_nan() {
            has_nan = true;
        } else if x > max {
            max = x;
        }
    }
    if has_nan {
        // NaN must poison the whole distribution (f64::max would
        // silently skip it), so divergence shows up in the loss
        // instead of masquerading as a uniform distribution.
        v.iter_mut().for_each(|x| *x = f64::NAN);
        return;
    }
    if max == f64::NEG_INFINITY {
        // Every position masked; fall back to uniform. Callers never
        // mask all positions, this keeps the function total.
        let u = 1.0 / v.len() as f64;
        v.iter_mut().for_each(|x| *x = u);
        return;
    }
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    v.iter_mut().for_each(|x| *x /= sum);
}

/// Probability floor used when taking logs of predicted probabilities.
pub const PROB_FLOOR: f64 = 1e-12;

/// −ln(dist[target]) with the probability floored at `PROB_FLOOR`.
/// Non-finite probabilities pass through so callers can detect them.
pub fn cross_entropy(dist: &[f64], target: usize) -> Result<f64> {
    if target >= dist.len() {
        return Err(OfnError::shape(format!(
            "cross_entropy target index {} out of range for distribution of length {}",
            target,
            dist.len()
        )));
    }
    let p = dist[target];
    let clamped = if p.is_finite() { p.max(PROB_FLOOR) } else { p };
    Ok(-clamped.ln())
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_matmul(a: &Matrix, b: &Matrix) -> Matrix {
        assert_eq!(a.cols(), b.rows());
        let mut out = Matrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut acc = 0.0;
                for k in 0..a.cols() {
                    acc += a.get(i, k) * b.get(k, j);
                }
                out.set(i, j, acc);
            }
        }
        out
    }

    #[test]
    fn identity_times_m_is_m() {
        let mut id = Matrix::zeros(2, 2);
        id.set(0, 0, 1.0);
        id.set(1, 1, 1.0);
        let m = Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let p = id.matmul(&m).unwrap();
        assert_eq!(p, m);
    }

    #[test]
    fn hand_product() {
        let a = Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Matrix::from_vec(2, 1, vec![1.0, 1.0]).unwrap();
        let p = a.matmul(&b).unwrap();
        assert_eq!(p.data(), &[3.0, 7.0]);
    }

    #[test]
    fn matches_naive_oracle_within_1e12() {
        let mut rng = Rng::seed_from(11);
        for &(m, k, n) in &[
            (5usize, 4usize, 3usize),
            (7, 9, 2),
            (1, 16, 16),
            (13, 8, 13),
        ] {
            let a = Matrix::uniform(m, k, -1.0, 1.0, &mut rng);
            let b = Matrix::uniform(k, n, -1.0, 1.0, &mut rng);
            let fast = a.matmul(&b).unwrap();
            let slow = naive_matmul(&a, &b);
            for (x, y) in fast.data().iter().zip(slow.data()) {
                assert!((x - y).abs() < 1e-12, "matmul deviates: {} vs {}", x, y);
            }
        }
    }

    #[test]
    fn transposed_variants_match_explicit_transpose() {
        let mut rng = Rng::seed_from(12);
        let a = Matrix::uniform(4, 6, -1.0, 1.0, &mut rng);
        let b = Matrix::uniform(5, 6, -1.0, 1.0, &mut rng);
        // a·bᵀ
        let nt = a.matmul_nt(&b).unwrap();
        for i in 0..4 {
            for j in 0..5 {
                let dot: f64 = (0..6).map(|k| a.get(i, k) * b.get(j, k)).sum();
                assert!((nt.get(i, j) - dot).abs() < 1e-12);
            }
        }
        // aᵀ·c
        let c = Matrix::uniform(4, 3, -1.0, 1.0, &mut rng);
        let tn = a.matmul_tn(&c).unwrap();
        for i in 0..6 {
            for j in 0..3 {
                let dot: f64 = (0..4).map(|k| a.get(k, i) * c.get(k, j)).sum();
                assert!((tn.get(i, j) - dot).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shape_mismatch_is_error() {
        let a = Matrix::zeros(2, 3);
        let b = Matrix::zeros(2, 3);
        assert!(a.matmul(&b).is_err());
    }

    #[test]
    fn softmax_symmetry_and_closed_form() {
        let s = softmax(&[0.0, 0.0]);
        assert!((s[0] - 0.5).abs() < 1e-15);
        assert!((s[1] - 0.5).abs() < 1e-15);

        let s = softmax(&[2.0f64.ln(), 0.0]);
        assert!((s[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((s[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn softmax_is_stable_for_large_inputs() {
        let s = softmax(&[1000.0, 0.0]);
        assert!(s[0] > 1.0 - 1e-12);
        assert!(s[1] < 1e-12);
        assert!(s.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn softmax_properties_on_random_vectors() {
        let mut rng = Rng::seed_from(99);
        for _ in 0..200 {
            let n = 1 + rng.below(12);
            let v: Vec<f64> = (0..n).map(|_| rng.uniform(-30.0, 30.0)).collect();
            let s = softmax(&v);
            let sum: f64 = s.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert!(s.iter().all(|&x| x > 0.0 && x <= 1.0));
        }
    }

    #[test]
    fn masked_positions_get_exact_zero() {
        let s = softmax(&[0.3, f64::NEG_INFINITY, 0.7]);
        assert_eq!(s[1], 0.0);
        assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nan_poisons_the_whole_distribution() {
        let s = softmax(&[0.3, f64::NAN, 0.7]);
        assert!(s.iter().all(|x| x.is_nan()));
    }

    #[test]
    fn cross_entropy_cases() {
        assert_eq!(cross_entropy(&[1.0, 0.0], 0).unwrap(), 0.0);
        let ce = cross_entropy(&[0.5, 0.5], 1).unwrap();
        assert!((ce - 2.0f64.ln()).abs() < 1e-15);
        let clamped = cross_entropy(&[0.0, 1.0], 0).unwrap();
        assert!((clamped - -(PROB_FLOOR.ln())).abs() < 1e-9);
        assert!(cross_entropy(&[1.0], 3).is_err());
    }
}

//! Dense row-major matrices, stable activations, and a finite-difference
//! gradient checker.
//!
//! Everything here is plain `f64`. The matrices in this crate are small
//! (at most a few hundred rows), so there is no BLAS backend and no
//! sparse storage; the triple loop is fast enough and easy to verify.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Build from a flat row-major buffer. `data.len()` must equal `rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape {
                op: "Matrix::from_vec",
                left: format!("{rows}x{cols}"),
                right: format!("buffer of {}", data.len()),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::Shape {
                    op: "Matrix::from_rows",
                    left: format!("row of {c}"),
                    right: format!("row of {}", row.len()),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Matrix { rows: r, cols: c, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn fill(&mut self, v: f64) {
        self.data.fill(v);
    }

    /// Matrix product `self * other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::Shape {
                op: "matmul",
                left: format!("{}x{}", self.rows, self.cols),
                right: format!("{}x{}", other.rows, other.cols),
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        // i-k-j order so the inner loop walks both operands contiguously.
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let brow = &other.data[k * other.cols..(k + 1) * other.cols];
                let orow = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        if !out.data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("matmul".into()));
        }
        Ok(out)
    }

    /// `out = self * x`. Panics on shape mismatch; this is the training hot
    /// path and callers own the shapes.
    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.cols, "matvec: input length");
        assert_eq!(out.len(), self.rows, "matvec: output length");
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols)) {
            *o = dot(row, x);
        }
    }

    /// `out += self^T * g`, used to push gradients back through a product.
    pub fn add_tmatvec(&self, g: &[f64], out: &mut [f64]) {
        assert_eq!(g.len(), self.rows, "add_tmatvec: gradient length");
        assert_eq!(out.len(), self.cols, "add_tmatvec: output length");
        for (gi, row) in g.iter().zip(self.data.chunks_exact(self.cols)) {
            if *gi == 0.0 {
                continue;
            }
            for (o, w) in out.iter_mut().zip(row) {
                *o += gi * w;
            }
        }
    }

    /// Rank-one update `self += scale * a * b^T`, used for weight gradients.
    pub fn add_outer(&mut self, a: &[f64], b: &[f64], scale: f64) {
        assert_eq!(a.len(), self.rows, "add_outer: row factor length");
        assert_eq!(b.len(), self.cols, "add_outer: col factor length");
        for (ai, row) in a.iter().zip(self.data.chunks_exact_mut(self.cols)) {
            let s = ai * scale;
            if s == 0.0 {
                continue;
            }
            for (r, bj) in row.iter_mut().zip(b) {
                *r += s * bj;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Numerically stable logistic function. Saturates instead of overflowing
/// for |z| up to and beyond 700.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn tanh_act(z: f64) -> f64 {
    z.tanh()
}

pub fn sigmoid_slice(zs: &mut [f64]) {
    for z in zs {
        *z = sigmoid(*z);
    }
}

pub fn tanh_slice(zs: &mut [f64]) {
    for z in zs {
        *z = z.tanh();
    }
}

/// Outcome of a finite-difference gradient check.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Parameter with the largest error: (block name, flat index over all blocks).
    pub worst_parameter: (String, usize),
    pub epsilon: f64,
}

/// Compare an analytic gradient against central finite differences.
///
/// `f` evaluates the scalar objective on a flat parameter vector. `blocks`
/// names the layout of that vector as `(name, start offset)` pairs in
/// ascending order, purely for error reporting. The relative error per
/// parameter is `|a - n| / max(1e-8, |a| + |n|)`.
pub fn grad_check<F>(
    mut f: F,
    theta: &[f64],
    analytic: &[f64],
    blocks: &[(String, usize)],
    epsilon: f64,
) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(theta.len(), analytic.len(), "grad_check: gradient length");
    if epsilon <= 0.0 {
        return Err(Error::Contract("grad_check: epsilon must be > 0".into()));
    }
    let mut scratch = theta.to_vec();
    let mut max_rel = 0.0;
    let mut worst = 0usize;
    for i in 0..theta.len() {
        scratch[i] = theta[i] + epsilon;
        let up = f(&scratch);
        scratch[i] = theta[i] - epsilon;
        let down = f(&scratch);
        scratch[i] = theta[i];
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite("grad_check objective".into()));
        }
        let numeric = (up - down) / (2.0 * epsilon);
        let a = analytic[i];
        let rel = (a - numeric).abs() / (1e-8f64).max(a.abs() + numeric.abs());
        if rel > max_rel {
            max_rel = rel;
            worst = i;
        }
    }
    let name = blocks
        .iter()
        .rev()
        .find(|(_, start)| *start <= worst)
        .map(|(n, _)| n.clone())
        .unwrap_or_default();
    Ok(GradCheckReport {
        max_relative_error: max_rel,
        worst_parameter: (name, worst),
        epsilon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn naive_matmul(a: &Matrix, b: &Matrix) -> Matrix {
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

    fn rng_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    #[test]
    fn matmul_identity() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let out = Matrix::identity(2).matmul(&a).unwrap();
        assert_eq!(out, a);
    }

    #[test]
    fn matmul_row_times_col() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![3.0], vec![4.0]]).unwrap();
        let out = a.matmul(&b).unwrap();
        assert_eq!(out.rows(), 1);
        assert_eq!(out.cols(), 1);
        assert_eq!(out.get(0, 0), 11.0);
    }

    #[test]
    fn matmul_matches_naive_reference() {
        let a = rng_matrix(5, 7, 11);
        let b = rng_matrix(7, 3, 12);
        let fast = a.matmul(&b).unwrap();
        let slow = naive_matmul(&a, &b);
        assert_eq!(fast, slow);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let a = Matrix::zeros(2, 3);
        let b = Matrix::zeros(4, 2);
        let err = a.matmul(&b).unwrap_err().to_string();
        assert!(err.contains("2x3") && err.contains("4x2"), "{err}");
    }

    #[test]
    fn matvec_against_matmul() {
        let a = rng_matrix(4, 6, 3);
        let x = rng_matrix(6, 1, 4);
        let mut out = vec![0.0; 4];
        a.matvec(x.as_slice(), &mut out);
        let full = a.matmul(&x).unwrap();
        assert_eq!(out, full.as_slice());
    }

    #[test]
    fn add_tmatvec_and_outer_match_explicit_loops() {
        let w = rng_matrix(3, 5, 7);
        let g = vec![0.5, -1.0, 2.0];
        let mut out = vec![0.0; 5];
        w.add_tmatvec(&g, &mut out);
        for j in 0..5 {
            let want: f64 = (0..3).map(|i| w.get(i, j) * g[i]).sum();
            assert!((out[j] - want).abs() < 1e-12);
        }
        let mut acc = Matrix::zeros(3, 5);
        let b = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        acc.add_outer(&g, &b, 2.0);
        for i in 0..3 {
            for j in 0..5 {
                assert!((acc.get(i, j) - 2.0 * g[i] * b[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sigmoid_basics() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(3.0f64.ln()) - 0.75).abs() < 1e-15);
        assert_eq!(tanh_act(0.0), 0.0);
    }

    #[test]
    fn sigmoid_saturates_without_nan() {
        for z in [700.0, -700.0, 1e4, -1e4] {
            let p = sigmoid(z);
            assert!(p.is_finite());
            assert!((0.0..=1.0).contains(&p));
        }
    }

    #[test]
    fn grad_check_quadratic() {
        let theta = [3.0];
        let analytic = [6.0];
        let report = grad_check(
            |t| t[0] * t[0],
            &theta,
            &analytic,
            &[("theta".to_string(), 0)],
            1e-5,
        )
        .unwrap();
        assert!(report.max_relative_error < 1e-9, "{report:?}");
        assert_eq!(report.worst_parameter.0, "theta");
    }

    #[test]
    fn grad_check_constant_function() {
        let theta = [1.0, -2.0];
        let analytic = [0.0, 0.0];
        let report = grad_check(
            |_| 4.2,
            &theta,
            &analytic,
            &[("theta".to_string(), 0)],
            1e-5,
        )
        .unwrap();
        assert_eq!(report.max_relative_error, 0.0);
    }

    #[test]
    fn grad_check_rejects_non_finite_objective() {
        let theta = [0.0];
        let err = grad_check(
            |t| 1.0 / t[0],
            &theta,
            &[0.0],
            &[("theta".to_string(), 0)],
            1e-5,
        );
        assert!(err.is_err());
    }

    proptest! {
        #[test]
        fn matmul_is_associative(seed in 0u64..500) {
            let a = rng_matrix(3, 4, seed);
            let b = rng_matrix(4, 5, seed.wrapping_add(1));
            let c = rng_matrix(5, 2, seed.wrapping_add(2));
            let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
            let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
            for (l, r) in left.as_slice().iter().zip(right.as_slice()) {
                let rel = (l - r).abs() / (1.0f64).max(l.abs());
                prop_assert!(rel < 1e-9);
            }
        }

        #[test]
        fn sigmoid_symmetry(z in -30.0f64..30.0) {
            let s = sigmoid(z) + sigmoid(-z);
            prop_assert!((s - 1.0).abs() <= 1e-12);
        }
    }
}

//! Dense row-major matrices and vectors.
//!
//! All reductions (matmul inner products, column sums) run in a fixed
//! ascending-index order so that repeated runs produce bit-identical floats.
//! Shape errors on the public building blocks are reported as `Error::Shape`;
//! the lower-level accumulate helpers `assert!` instead, since their callers
//! have already validated dimensions once per step.

use std::ops::{Deref, DerefMut, Index, IndexMut};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

// ── Vector ──────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq)]
pub struct Vector<T> {
    data: Vec<T>,
}

impl<T: Scalar> Vector<T> {
    pub fn zeros(len: usize) -> Self {
        Vector { data: vec![T::zero(); len] }
    }

    pub fn filled(len: usize, v: T) -> Self {
        Vector { data: vec![v; len] }
    }

    pub fn from_vec(data: Vec<T>) -> Self {
        Vector { data }
    }

    pub fn from_f64s(vals: &[f64]) -> Self {
        Vector { data: vals.iter().map(|&v| T::of(v)).collect() }
    }

    pub fn dot(&self, rhs: &Self) -> T {
        assert_eq!(self.len(), rhs.len(), "dot: length mismatch");
        let mut acc = T::zero();
        for (a, b) in self.iter().zip(rhs.iter()) {
            acc += *a * *b;
        }
        acc
    }

    pub fn norm(&self) -> T {
        self.norm_sq().sqrt()
    }

    pub fn norm_sq(&self) -> T {
        let mut acc = T::zero();
        for a in self.iter() {
            acc += *a * *a;
        }
        acc
    }

    /// self += alpha * rhs
    pub fn add_scaled(&mut self, alpha: T, rhs: &Self) {
        assert_eq!(self.len(), rhs.len(), "add_scaled: length mismatch");
        for (a, b) in self.data.iter_mut().zip(rhs.iter()) {
            *a += alpha * *b;
        }
    }

    pub fn scale(&mut self, alpha: T) {
        for a in self.data.iter_mut() {
            *a *= alpha;
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Vector { data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl<T> Deref for Vector<T> {
    type Target = [T];
    fn deref(&self) -> &[T] {
        &self.data
    }
}

impl<T> DerefMut for Vector<T> {
    fn deref_mut(&mut self) -> &mut [T] {
        &mut self.data
    }
}

/// Fixed-order dot product over plain slices (ascending index).
pub fn dot_slices<T: Scalar>(a: &[T], b: &[T]) -> T {
    assert_eq!(a.len(), b.len(), "dot_slices: length mismatch");
    let mut acc = T::zero();
    for (x, y) in a.iter().zip(b.iter()) {
        acc += *x * *y;
    }
    acc
}

// ── Matrix ──────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn filled(rows: usize, cols: usize, v: T) -> Self {
        Matrix { rows, cols, data: vec![v; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "Matrix::from_vec",
                format!("{rows}x{cols} needs {} values, got {}", rows * cols, data.len()),
            ));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::shape("Matrix::from_rows", "ragged rows".to_string()));
            }
            data.extend_from_slice(row);
        }
        Ok(Matrix { rows: r, cols: c, data })
    }

    pub fn from_f64s(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "from_f64s: ragged rows");
            data.extend(row.iter().map(|&v| T::of(v)));
        }
        Matrix { rows: r, cols: c, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    /// A 1×n matrix borrowing the vector's contents (copied).
    pub fn from_row_vector(v: &Vector<T>) -> Self {
        Matrix { rows: 1, cols: v.len(), data: v.as_slice().to_vec() }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_vector(&self, i: usize) -> Vector<T> {
        Vector::from_vec(self.row(i).to_vec())
    }

    pub fn set_row(&mut self, i: usize, values: &[T]) {
        assert_eq!(values.len(), self.cols, "set_row: width mismatch");
        self.row_mut(i).copy_from_slice(values);
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    // ── Products (fixed reduction order) ────────────────────────────

    /// self · rhs. The i-k-j loop keeps, for every output cell, the inner
    /// accumulation in ascending k, and lets the innermost loop run over
    /// independent output cells.
    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.rows, "matmul: inner dimension mismatch");
        let mut out = Self::zeros(self.rows, rhs.cols);
        out.add_matmul(self, rhs);
        out
    }

    /// self += a · b
    pub fn add_matmul(&mut self, a: &Self, b: &Self) {
        assert_eq!(a.cols, b.rows, "add_matmul: inner dimension mismatch");
        assert!(self.rows == a.rows && self.cols == b.cols, "add_matmul: output shape");
        for i in 0..a.rows {
            let arow = a.row(i);
            let orow = &mut self.data[i * b.cols..(i + 1) * b.cols];
            for (k, &aik) in arow.iter().enumerate() {
                let brow = b.row(k);
                for (o, &bkj) in orow.iter_mut().zip(brow.iter()) {
                    *o += aik * bkj;
                }
            }
        }
    }

    /// self += aᵀ · b, with a: (n×m), b: (n×p), self: (m×p).
    /// Used for weight gradients (inputᵀ · upstream); reduction over the
    /// batch axis runs in ascending row order.
    pub fn add_matmul_at_b(&mut self, a: &Self, b: &Self) {
        assert_eq!(a.rows, b.rows, "add_matmul_at_b: batch dimension mismatch");
        assert!(self.rows == a.cols && self.cols == b.cols, "add_matmul_at_b: output shape");
        for r in 0..a.rows {
            let arow = a.row(r);
            let brow = b.row(r);
            for (i, &ari) in arow.iter().enumerate() {
                let orow = &mut self.data[i * self.cols..(i + 1) * self.cols];
                for (o, &brj) in orow.iter_mut().zip(brow.iter()) {
                    *o += ari * brj;
                }
            }
        }
    }

    /// self += a · bᵀ, with a: (m×k), b: (p×k), self: (m×p).
    /// Used for input gradients (upstream · Wᵀ); the inner dot runs in
    /// ascending index order.
    pub fn add_matmul_a_bt(&mut self, a: &Self, b: &Self) {
        assert_eq!(a.cols, b.cols, "add_matmul_a_bt: inner dimension mismatch");
        assert!(self.rows == a.rows && self.cols == b.rows, "add_matmul_a_bt: output shape");
        for i in 0..a.rows {
            let arow = a.row(i);
            let orow = &mut self.data[i * b.rows..(i + 1) * b.rows];
            for (j, o) in orow.iter_mut().enumerate() {
                *o += dot_slices(arow, b.row(j));
            }
        }
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    // ── Elementwise ─────────────────────────────────────────────────

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        assert!(self.same_shape(other), "zip_map: shape mismatch");
        let data = self.data.iter().zip(other.data.iter()).map(|(&a, &b)| f(a, b)).collect();
        Matrix { rows: self.rows, cols: self.cols, data }
    }

    pub fn hadamard(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn add_assign_mat(&mut self, other: &Self) {
        assert!(self.same_shape(other), "add_assign_mat: shape mismatch");
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += *b;
        }
    }

    /// self += alpha * other
    pub fn add_scaled(&mut self, alpha: T, other: &Self) {
        assert!(self.same_shape(other), "add_scaled: shape mismatch");
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += alpha * *b;
        }
    }

    pub fn scale(&mut self, alpha: T) {
        for a in self.data.iter_mut() {
            *a *= alpha;
        }
    }

    /// self[r] += v for every row r (bias broadcast).
    pub fn add_row_broadcast(&mut self, v: &Vector<T>) {
        assert_eq!(self.cols, v.len(), "add_row_broadcast: width mismatch");
        for i in 0..self.rows {
            for (a, b) in self.row_mut(i).iter_mut().zip(v.iter()) {
                *a += *b;
            }
        }
    }

    /// self += m ∘ broadcast(v): each row of m scaled columnwise by v.
    /// Realizes diagonal (peephole) connections.
    pub fn add_hadamard_row_broadcast(&mut self, m: &Self, v: &Vector<T>) {
        assert!(self.same_shape(m), "add_hadamard_row_broadcast: shape mismatch");
        assert_eq!(self.cols, v.len(), "add_hadamard_row_broadcast: width mismatch");
        for i in 0..self.rows {
            let mrow = m.row(i);
            for ((a, &b), &w) in
                self.data[i * self.cols..(i + 1) * self.cols].iter_mut().zip(mrow).zip(v.iter())
            {
                *a += b * w;
            }
        }
    }

    /// Columnwise multiply by v (broadcast over rows), returning a new matrix.
    pub fn mul_row_broadcast(&self, v: &Vector<T>) -> Self {
        assert_eq!(self.cols, v.len(), "mul_row_broadcast: width mismatch");
        let mut out = self.clone();
        for i in 0..out.rows {
            for (a, &w) in out.row_mut(i).iter_mut().zip(v.iter()) {
                *a *= w;
            }
        }
        out
    }

    // ── Reductions (ascending row order) ────────────────────────────

    pub fn col_sum(&self) -> Vector<T> {
        let mut out = Vector::zeros(self.cols);
        for i in 0..self.rows {
            for (o, &v) in out.iter_mut().zip(self.row(i).iter()) {
                *o += v;
            }
        }
        out
    }

    pub fn col_mean(&self) -> Vector<T> {
        assert!(self.rows > 0, "col_mean: empty matrix");
        let mut out = self.col_sum();
        let inv = T::one() / T::of(self.rows as f64);
        out.scale(inv);
        out
    }

    /// Biased column variance (divide by the row count).
    pub fn col_var(&self, mean: &Vector<T>) -> Vector<T> {
        assert!(self.rows > 0, "col_var: empty matrix");
        assert_eq!(self.cols, mean.len(), "col_var: width mismatch");
        let mut out = Vector::zeros(self.cols);
        for i in 0..self.rows {
            for ((o, &v), &m) in out.iter_mut().zip(self.row(i).iter()).zip(mean.iter()) {
                let d = v - m;
                *o += d * d;
            }
        }
        let inv = T::one() / T::of(self.rows as f64);
        out.scale(inv);
        out
    }

    pub fn sum_sq(&self) -> T {
        let mut acc = T::zero();
        for v in self.data.iter() {
            acc += *v * *v;
        }
        acc
    }
}

impl<T: Scalar> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T: Scalar> IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

// ── Affine map (x·W + b) ────────────────────────────────────────────────

/// x·W + b with the bias broadcast over rows. The primitive behind every
/// gate pre-activation and projection head.
pub fn affine<T: Scalar>(x: &Matrix<T>, w: &Matrix<T>, b: &Vector<T>) -> Result<Matrix<T>> {
    if x.cols() != w.rows() {
        return Err(Error::shape(
            "affine",
            format!("x is {}x{}, W is {}x{}", x.rows(), x.cols(), w.rows(), w.cols()),
        ));
    }
    if b.len() != w.cols() {
        return Err(Error::shape(
            "affine",
            format!("bias has len {}, W has {} columns", b.len(), w.cols()),
        ));
    }
    let mut out = x.matmul(w);
    out.add_row_broadcast(b);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    type M = Matrix<f64>;
    type V = Vector<f64>;

    #[test]
    fn affine_identity_passthrough() {
        let x = M::from_f64s(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let w = M::identity(2);
        let b = V::zeros(2);
        let y = affine(&x, &w, &b).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn affine_zero_weight_yields_bias_rows() {
        let x = M::from_f64s(&[&[5.0, -1.0], &[0.5, 2.0], &[9.0, 9.0]]);
        let w = M::zeros(2, 3);
        let b = V::from_f64s(&[7.0, -2.0, 0.25]);
        let y = affine(&x, &w, &b).unwrap();
        for i in 0..3 {
            assert_eq!(y.row(i), b.as_slice());
        }
    }

    #[test]
    fn affine_worked_example() {
        // [1 1] · [[1,2],[3,4]] + [1,1] = [5, 7]
        let x = M::from_f64s(&[&[1.0, 1.0]]);
        let w = M::from_f64s(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let b = V::from_f64s(&[1.0, 1.0]);
        let y = affine(&x, &w, &b).unwrap();
        assert_eq!(y.row(0), &[5.0, 7.0]);
    }

    #[test]
    fn affine_shape_mismatch_errors() {
        let x = M::zeros(1, 3);
        let w = M::zeros(2, 2);
        let b = V::zeros(2);
        assert!(affine(&x, &w, &b).is_err());
        let w2 = M::zeros(3, 2);
        let b2 = V::zeros(5);
        assert!(affine(&x, &w2, &b2).is_err());
    }

    #[test]
    fn transpose_product_identities() {
        let a = M::from_f64s(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]); // 2x3
        let b = M::from_f64s(&[&[1.0, 0.5], &[-1.0, 2.0], &[3.0, -2.0]]); // 3x2

        // aᵀ·b via the fused accumulate equals transpose().matmul().
        let rhs = M::from_f64s(&[&[1.0, 1.0, 1.0], &[2.0, 0.0, -1.0]]); // 2x3
        let mut fused = M::zeros(3, 3);
        fused.add_matmul_at_b(&a, &rhs);
        let explicit = a.transpose().matmul(&rhs);
        assert_eq!(fused, explicit);

        // a·bᵀ via the fused accumulate equals matmul with transpose():
        // b.transpose() is 2x3, so a·(bᵀ)ᵀ = a·b, a 2x2 result.
        let mut fused2 = M::zeros(2, 2);
        fused2.add_matmul_a_bt(&a, &b.transpose());
        let explicit2 = a.matmul(&b);
        assert_eq!(fused2, explicit2);
    }

    #[test]
    fn column_stats() {
        let m = M::from_f64s(&[&[1.0, 2.0], &[3.0, 6.0]]);
        let mean = m.col_mean();
        assert_eq!(mean.as_slice(), &[2.0, 4.0]);
        let var = m.col_var(&mean);
        assert_eq!(var.as_slice(), &[1.0, 4.0]); // biased: ((1-2)^2+(3-2)^2)/2 = 1
    }

    #[test]
    fn peephole_broadcast() {
        let mut acc = M::zeros(2, 2);
        let c = M::from_f64s(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let peep = V::from_f64s(&[10.0, -1.0]);
        acc.add_hadamard_row_broadcast(&c, &peep);
        assert_eq!(acc.row(0), &[10.0, -2.0]);
        assert_eq!(acc.row(1), &[30.0, -4.0]);
    }
}

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

use crate::graph::SparseOp;

/// Floating-point element type of the engine (`f32` for training, `f64` for
/// gradient checks).
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
{
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 converts to every Real")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

pub type Shape = (usize, usize);

/// Dense row-major matrix. Scalars are `1x1`; vectors are `1xk` or `kx1`.
#[derive(Clone, PartialEq)]
pub struct Tensor<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Debug> Debug for Tensor<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Tensor{}x{}{:?}", self.rows, self.cols, self.data)
    }
}

impl<T: Real> Tensor<T> {
    pub fn zeros((rows, cols): Shape) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn filled((rows, cols): Shape, value: T) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn scalar(value: T) -> Self {
        Tensor {
            rows: 1,
            cols: 1,
            data: vec![value],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros((n, n));
        for i in 0..n {
            t.data[i * n + i] = T::one();
        }
        t
    }

    /// Panics if `data.len() != rows * cols`.
    pub fn from_vec((rows, cols): Shape, data: Vec<T>) -> Self {
        assert_eq!(
            data.len(),
            rows * cols,
            "tensor buffer does not match {rows}x{cols}"
        );
        Tensor { rows, cols, data }
    }

    pub fn from_f64((rows, cols): Shape, data: &[f64]) -> Self {
        Self::from_vec((rows, cols), data.iter().map(|&x| T::of(x)).collect())
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let flat: Vec<f64> = rows.iter().flat_map(|row| row.iter().copied()).collect();
        Self::from_f64((r, c), &flat)
    }

    pub fn shape(&self) -> Shape {
        (self.rows, self.cols)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn at(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|x| x.to_f64_lossy()).collect()
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| U::of(x.to_f64_lossy())).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn add_assign(&mut self, other: &Tensor<T>) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn max_abs_diff(&self, other: &Tensor<T>) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (*a - *b).abs().to_f64_lossy())
            .fold(0.0, f64::max)
    }

    /// Index of the largest entry in each row (first on ties).
    pub fn argmax_rows(&self) -> Vec<usize> {
        (0..self.rows)
            .map(|r| {
                let row = self.row(r);
                let mut best = 0;
                for (j, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }
}

/// `op(a) @ op(b)` where `op` optionally transposes.
pub(crate) fn matmul<T: Real>(a: &Tensor<T>, ta: bool, b: &Tensor<T>, tb: bool) -> Tensor<T> {
    let (m, k) = if ta {
        (a.cols, a.rows)
    } else {
        (a.rows, a.cols)
    };
    let (k2, n) = if tb {
        (b.cols, b.rows)
    } else {
        (b.rows, b.cols)
    };
    debug_assert_eq!(k, k2);
    let mut out = Tensor::zeros((m, n));
    let a_at = |i: usize, p: usize| {
        if ta {
            a.data[p * a.cols + i]
        } else {
            a.data[i * a.cols + p]
        }
    };
    if !tb {
        for i in 0..m {
            let orow = &mut out.data[i * n..(i + 1) * n];
            for p in 0..k {
                let av = a_at(i, p);
                if av == T::zero() {
                    continue;
                }
                let brow = &b.data[p * n..(p + 1) * n];
                for (o, &bv) in orow.iter_mut().zip(brow) {
                    *o += av * bv;
                }
            }
        }
    } else {
        for i in 0..m {
            for j in 0..n {
                let brow = &b.data[j * b.cols..(j + 1) * b.cols];
                let mut acc = T::zero();
                for (p, &bv) in brow.iter().enumerate() {
                    acc += a_at(i, p) * bv;
                }
                out.data[i * n + j] = acc;
            }
        }
    }
    out
}

/// Compressed-row sparse matrix in the engine's element type, with its
/// transpose precomputed for the backward pass.
#[derive(Debug, Clone)]
pub struct CsrMatrix<T> {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Real> CsrMatrix<T> {
    pub fn from_sparse(op: &SparseOp) -> Self {
        CsrMatrix {
            rows: op.rows(),
            cols: op.cols(),
            row_ptr: op.row_ptr().to_vec(),
            col_idx: op.col_idx().to_vec(),
            values: op.values().iter().map(|&w| T::of(w)).collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.cols + 1];
        for &c in &self.col_idx {
            counts[c + 1] += 1;
        }
        for c in 0..self.cols {
            counts[c + 1] += counts[c];
        }
        let mut next = counts.clone();
        let mut col_idx = vec![0; self.col_idx.len()];
        let mut values = vec![T::zero(); self.values.len()];
        for r in 0..self.rows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.col_idx[k];
                let dst = next[c];
                next[c] += 1;
                col_idx[dst] = r;
                values[dst] = self.values[k];
            }
        }
        CsrMatrix {
            rows: self.cols,
            cols: self.rows,
            row_ptr: counts,
            col_idx,
            values,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row_range(&self, r: usize) -> std::ops::Range<usize> {
        self.row_ptr[r]..self.row_ptr[r + 1]
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn spmm(&self, x: &Tensor<T>) -> Tensor<T> {
        debug_assert_eq!(self.cols, x.rows);
        let d = x.cols;
        let mut out = Tensor::zeros((self.rows, d));
        for r in 0..self.rows {
            let orow = &mut out.data[r * d..(r + 1) * d];
            for k in self.row_range(r) {
                let w = self.values[k];
                let xrow = &x.data[self.col_idx[k] * d..(self.col_idx[k] + 1) * d];
                for (o, &xv) in orow.iter_mut().zip(xrow) {
                    *o += w * xv;
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_with_transposes() {
        let a = Tensor::<f64>::from_f64((2, 3), &[1., 2., 3., 4., 5., 6.]);
        let b = Tensor::<f64>::from_f64((3, 2), &[7., 8., 9., 10., 11., 12.]);
        assert_eq!(matmul(&a, false, &b, false).data(), &[58., 64., 139., 154.]);
        let bt = Tensor::<f64>::from_f64((2, 3), &[7., 9., 11., 8., 10., 12.]);
        assert_eq!(matmul(&a, false, &bt, true).data(), &[58., 64., 139., 154.]);
        let at = Tensor::<f64>::from_f64((3, 2), &[1., 4., 2., 5., 3., 6.]);
        assert_eq!(matmul(&at, true, &b, false).data(), &[58., 64., 139., 154.]);
    }

    #[test]
    fn csr_transpose_round_trip() {
        let op =
            SparseOp::from_triplets(2, 3, vec![(0, 2, 1.5), (1, 0, -2.0), (1, 2, 3.0)]).unwrap();
        let m = CsrMatrix::<f64>::from_sparse(&op);
        let t = m.transpose();
        assert_eq!((t.rows(), t.cols()), (3, 2));
        let x = Tensor::<f64>::from_f64((2, 1), &[1.0, 1.0]);
        // column sums of the original
        assert_eq!(t.spmm(&x).data(), &[-2.0, 0.0, 4.5]);
    }
}

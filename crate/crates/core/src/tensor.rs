//! Dense column-major matrices, order-3 tensors and the multilinear kernels
//! shared by the NMF and CP solvers.
//!
//! Storage conventions (0-based in code):
//!
//! * [`Matrix`] is column-major: entry `(i, j)` lives at `i + j * rows`.
//! * [`Tensor3`] stores `(f, t, n)` at `f + t * F + n * F * T`, so every
//!   frontal slice `X[:, :, n]` is itself a contiguous column-major `F x T`
//!   matrix and the whole buffer is the `F x (T * N)` matricization.
//!
//! The column of `(t, n)` in the matricization is `n * T + t`. The same map
//! orders the rows of [`khatri_rao`], which is what makes
//! `matricize(cp_reconstruct(A, B, C)) == A * khatri_rao(C, B)^T` hold.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense column-major `f64` matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Wraps a column-major buffer.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::DimensionMismatch(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        m.data.fill(value);
        m
    }

    /// Builds a matrix from row vectors; handy for literals in tests and docs.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        let mut data = vec![0.0; nrows * ncols];
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                data[i + j * nrows] = v;
            }
        }
        Self::new(nrows, ncols, data)
    }

    /// Single-column matrix.
    pub fn column_vector(values: &[f64]) -> Result<Self> {
        Self::new(values.len(), 1, values.to_vec())
    }

    /// Builds a matrix entry by entry.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for j in 0..cols {
            for i in 0..rows {
                m.data[i + j * rows] = f(i, j);
            }
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i + j * self.rows]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i + j * self.rows] = v;
    }

    /// Column-major backing buffer.
    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_values(self) -> Vec<f64> {
        self.data
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// `self * other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        self.product(other, false, false)
    }

    /// `self * other^T`.
    pub fn matmul_t(&self, other: &Matrix) -> Result<Matrix> {
        self.product(other, false, true)
    }

    /// `self^T * other`.
    pub fn t_matmul(&self, other: &Matrix) -> Result<Matrix> {
        self.product(other, true, false)
    }

    fn product(&self, other: &Matrix, ta: bool, tb: bool) -> Result<Matrix> {
        let a = if ta { self.view().t() } else { self.view() };
        let b = if tb { other.view().t() } else { other.view() };
        if a.cols != b.rows {
            return Err(Error::DimensionMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                a.rows, a.cols, b.rows, b.cols
            )));
        }
        let mut out = Matrix::zeros(a.rows, b.cols);
        gemm(1.0, a, b, 0.0, &mut out.data);
        Ok(out)
    }

    /// Elementwise (Hadamard) product.
    pub fn hadamard(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch(format!(
                "hadamard of {}x{} and {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a * b).collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn min_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub(crate) fn view(&self) -> View<'_> {
        View::col_major(self.rows, self.cols, &self.data)
    }
}

/// Dense `F x T x N` tensor with `f` fastest, then `t`, then `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor3 {
    dim_f: usize,
    dim_t: usize,
    dim_n: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn new(dim_f: usize, dim_t: usize, dim_n: usize, data: Vec<f64>) -> Result<Self> {
        if dim_f == 0 || dim_t == 0 || dim_n == 0 {
            return Err(Error::DimensionMismatch(format!(
                "tensor dimensions must be positive, got {dim_f}x{dim_t}x{dim_n}"
            )));
        }
        if data.len() != dim_f * dim_t * dim_n {
            return Err(Error::DimensionMismatch(format!(
                "{dim_f}x{dim_t}x{dim_n} tensor needs {} values, got {}",
                dim_f * dim_t * dim_n,
                data.len()
            )));
        }
        Ok(Self {
            dim_f,
            dim_t,
            dim_n,
            data,
        })
    }

    pub fn zeros(dim_f: usize, dim_t: usize, dim_n: usize) -> Self {
        assert!(dim_f > 0 && dim_t > 0 && dim_n > 0);
        Self {
            dim_f,
            dim_t,
            dim_n,
            data: vec![0.0; dim_f * dim_t * dim_n],
        }
    }

    pub fn from_fn(
        dim_f: usize,
        dim_t: usize,
        dim_n: usize,
        mut g: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut x = Self::zeros(dim_f, dim_t, dim_n);
        for n in 0..dim_n {
            for t in 0..dim_t {
                for f in 0..dim_f {
                    x.data[f + dim_f * (t + dim_t * n)] = g(f, t, n);
                }
            }
        }
        x
    }

    /// Stacks `F x T` frontal slices along the third mode, preserving order.
    pub fn from_slices(slices: &[Matrix]) -> Result<Self> {
        let first = slices
            .first()
            .ok_or_else(|| Error::Empty("no slices to stack".into()))?;
        let (f, t) = (first.rows(), first.cols());
        let mut data = Vec::with_capacity(f * t * slices.len());
        for (n, s) in slices.iter().enumerate() {
            if s.rows() != f || s.cols() != t {
                return Err(Error::DimensionMismatch(format!(
                    "slice {n} is {}x{}, expected {f}x{t}",
                    s.rows(),
                    s.cols()
                )));
            }
            data.extend_from_slice(s.values());
        }
        Self::new(f, t, slices.len(), data)
    }

    #[inline]
    pub fn dim_f(&self) -> usize {
        self.dim_f
    }

    #[inline]
    pub fn dim_t(&self) -> usize {
        self.dim_t
    }

    #[inline]
    pub fn dim_n(&self) -> usize {
        self.dim_n
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.dim_f, self.dim_t, self.dim_n)
    }

    #[inline]
    pub fn get(&self, f: usize, t: usize, n: usize) -> f64 {
        self.data[f + self.dim_f * (t + self.dim_t * n)]
    }

    #[inline]
    pub fn set(&mut self, f: usize, t: usize, n: usize, v: f64) {
        self.data[f + self.dim_f * (t + self.dim_t * n)] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_values(self) -> Vec<f64> {
        self.data
    }

    /// Frontal slice `n` as a borrowed column-major `F x T` buffer.
    pub fn slice(&self, n: usize) -> &[f64] {
        let len = self.dim_f * self.dim_t;
        &self.data[n * len..(n + 1) * len]
    }

    /// Frontal slice `n` as an owned matrix.
    pub fn slice_matrix(&self, n: usize) -> Matrix {
        Matrix {
            rows: self.dim_f,
            cols: self.dim_t,
            data: self.slice(n).to_vec(),
        }
    }

    /// Keeps only the listed frontal slices, in the given order.
    pub fn select_slices(&self, indices: &[usize]) -> Result<Tensor3> {
        let slices: Vec<Matrix> = indices.iter().map(|&n| self.slice_matrix(n)).collect();
        Tensor3::from_slices(&slices)
    }

    pub fn map(&self, g: impl Fn(f64) -> f64) -> Tensor3 {
        Tensor3 {
            dim_f: self.dim_f,
            dim_t: self.dim_t,
            dim_n: self.dim_n,
            data: self.data.iter().map(|&v| g(v)).collect(),
        }
    }

    pub fn min_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Borrowed view of frontal slice `n`.
    pub(crate) fn slice_view(&self, n: usize) -> View<'_> {
        View::col_major(self.dim_f, self.dim_t, self.slice(n))
    }
}

/// Sum of squared entries.
pub trait FrobeniusSq {
    fn frobenius_sq(&self) -> f64;
}

impl FrobeniusSq for Matrix {
    fn frobenius_sq(&self) -> f64 {
        sum_sq(&self.data)
    }
}

impl FrobeniusSq for Tensor3 {
    fn frobenius_sq(&self) -> f64 {
        sum_sq(&self.data)
    }
}

pub fn frobenius_sq<T: FrobeniusSq + ?Sized>(x: &T) -> f64 {
    x.frobenius_sq()
}

pub(crate) fn sum_sq(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum()
}

/// Squared Frobenius distance between two equally sized buffers.
pub(crate) fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Concatenates the frontal slices side by side: `[X_1, X_2, ..., X_N]`.
pub fn matricize(x: &Tensor3) -> Matrix {
    Matrix {
        rows: x.dim_f,
        cols: x.dim_t * x.dim_n,
        data: x.data.clone(),
    }
}

/// Inverse of [`matricize`].
pub fn tensorize(m: &Matrix, dim_t: usize, dim_n: usize) -> Result<Tensor3> {
    if dim_t * dim_n != m.cols() {
        return Err(Error::DimensionMismatch(format!(
            "matrix has {} columns but T*N = {}*{} = {}",
            m.cols(),
            dim_t,
            dim_n,
            dim_t * dim_n
        )));
    }
    Tensor3::new(m.rows(), dim_t, dim_n, m.data.clone())
}

/// Mode-`mode` unfolding (0 = frequency, 1 = time, 2 = recording).
///
/// Columns are ordered so that the remaining indices run in storage order:
/// mode 0 gives `F x TN` with column `n*T + t`, mode 1 gives `T x FN` with
/// column `n*F + f`, mode 2 gives `N x FT` with column `t*F + f`. Each is
/// paired with `khatri_rao(C, B)`, `khatri_rao(C, A)` and `khatri_rao(B, A)`
/// respectively.
pub fn unfold(x: &Tensor3, mode: usize) -> Result<Matrix> {
    let (nf, nt, nn) = x.dims();
    match mode {
        0 => Ok(matricize(x)),
        1 => Ok(Matrix::from_fn(nt, nf * nn, |t, col| {
            x.get(col % nf, t, col / nf)
        })),
        2 => Ok(Matrix::from_fn(nn, nf * nt, |n, col| {
            x.get(col % nf, col / nf, n)
        })),
        _ => Err(Error::InvalidArgument(format!("mode {mode} out of range 0..3"))),
    }
}

/// Column-wise Kronecker product. Row `n * b.rows + t` of column `k` holds
/// `c[n, k] * b[t, k]`, i.e. the `b` index runs fastest.
pub fn khatri_rao(c: &Matrix, b: &Matrix) -> Result<Matrix> {
    if c.cols() != b.cols() {
        return Err(Error::DimensionMismatch(format!(
            "khatri-rao needs equal column counts, got {} and {}",
            c.cols(),
            b.cols()
        )));
    }
    let (rc, rb) = (c.rows(), b.rows());
    let mut out = Matrix::zeros(rc * rb, c.cols());
    for k in 0..c.cols() {
        let (ck, bk) = (c.col(k), b.col(k));
        let dst = out.col_mut(k);
        for (n, &cv) in ck.iter().enumerate() {
            for (t, &bv) in bk.iter().enumerate() {
                dst[n * rb + t] = cv * bv;
            }
        }
    }
    Ok(out)
}

fn check_rank(a: &Matrix, b: &Matrix, c: &Matrix) -> Result<usize> {
    let k = a.cols();
    if b.cols() != k || c.cols() != k {
        return Err(Error::DimensionMismatch(format!(
            "factor ranks disagree: {}, {}, {}",
            a.cols(),
            b.cols(),
            c.cols()
        )));
    }
    Ok(k)
}

/// `X[f, t, n] = sum_k A[f, k] * B[t, k] * C[n, k]`.
pub fn cp_reconstruct(a: &Matrix, b: &Matrix, c: &Matrix) -> Result<Tensor3> {
    let k = check_rank(a, b, c)?;
    let (nf, nt, nn) = (a.rows(), b.rows(), c.rows());
    let mut out = Tensor3::zeros(nf, nt, nn);
    let slice_len = nf * nt;
    let mut scaled = Matrix::zeros(nf, k);
    for n in 0..nn {
        scale_columns(a, c, n, &mut scaled);
        let dst = &mut out.data[n * slice_len..(n + 1) * slice_len];
        gemm(1.0, scaled.view(), b.view().t(), 0.0, dst);
    }
    Ok(out)
}

/// Matricized tensor times Khatri-Rao product for one mode:
/// `unfold(x, mode) * khatri_rao(..)` with the pairing documented on
/// [`unfold`], computed slice by slice without materializing either operand.
pub fn mttkrp(x: &Tensor3, a: &Matrix, b: &Matrix, c: &Matrix, mode: usize) -> Result<Matrix> {
    let k = check_rank(a, b, c)?;
    let (nf, nt, nn) = x.dims();
    if a.rows() != nf || b.rows() != nt || c.rows() != nn {
        return Err(Error::DimensionMismatch(format!(
            "factors {}x{k}, {}x{k}, {}x{k} do not match tensor {nf}x{nt}x{nn}",
            a.rows(),
            b.rows(),
            c.rows()
        )));
    }
    match mode {
        0 => {
            let mut out = Matrix::zeros(nf, k);
            let mut scaled = Matrix::zeros(nt, k);
            for n in 0..nn {
                scale_columns(b, c, n, &mut scaled);
                gemm(1.0, x.slice_view(n), scaled.view(), 1.0, &mut out.data);
            }
            Ok(out)
        }
        1 => {
            let mut out = Matrix::zeros(nt, k);
            let mut scaled = Matrix::zeros(nf, k);
            for n in 0..nn {
                scale_columns(a, c, n, &mut scaled);
                gemm(1.0, x.slice_view(n).t(), scaled.view(), 1.0, &mut out.data);
            }
            Ok(out)
        }
        2 => {
            let mut out = Matrix::zeros(nn, k);
            let mut proj = Matrix::zeros(nt, k);
            for n in 0..nn {
                gemm(1.0, x.slice_view(n).t(), a.view(), 0.0, &mut proj.data);
                for kk in 0..k {
                    let v: f64 = proj.col(kk).iter().zip(b.col(kk)).map(|(p, q)| p * q).sum();
                    out.set(n, kk, v);
                }
            }
            Ok(out)
        }
        _ => Err(Error::InvalidArgument(format!("mode {mode} out of range 0..3"))),
    }
}

/// `dst[:, k] = src[:, k] * weights[row, k]`.
fn scale_columns(src: &Matrix, weights: &Matrix, row: usize, dst: &mut Matrix) {
    for kk in 0..src.cols() {
        let w = weights.get(row, kk);
        for (d, s) in dst.col_mut(kk).iter_mut().zip(src.col(kk)) {
            *d = s * w;
        }
    }
}

/// Strided read-only matrix view used to feed the GEMM kernel.
#[derive(Clone, Copy)]
pub(crate) struct View<'a> {
    rows: usize,
    cols: usize,
    data: &'a [f64],
    rs: isize,
    cs: isize,
}

impl<'a> View<'a> {
    pub(crate) fn col_major(rows: usize, cols: usize, data: &'a [f64]) -> Self {
        assert!(data.len() >= rows * cols);
        View {
            rows,
            cols,
            data,
            rs: 1,
            cs: rows as isize,
        }
    }

    pub(crate) fn t(self) -> Self {
        View {
            rows: self.cols,
            cols: self.rows,
            data: self.data,
            rs: self.cs,
            cs: self.rs,
        }
    }
}

/// `c = alpha * a * b + beta * c`, with `c` column-major `a.rows x b.cols`.
pub(crate) fn gemm(alpha: f64, a: View<'_>, b: View<'_>, beta: f64, c: &mut [f64]) {
    assert_eq!(a.cols, b.rows, "inner dimensions differ");
    assert_eq!(c.len(), a.rows * b.cols, "output buffer has the wrong size");
    let (m, k, n) = (a.rows, a.cols, b.cols);
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: the views were built from slices at least rows*cols long with
    // unit/leading-dimension strides, so every addressed element is in bounds;
    // `c` was checked above and does not alias the read-only inputs.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            a.rs,
            a.cs,
            b.data.as_ptr(),
            b.rs,
            b.cs,
            beta,
            c.as_mut_ptr(),
            1,
            m as isize,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
        Matrix::from_fn(r, c, |_, _| rng.random::<f64>())
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        dist_sq(a, b).sqrt() / sum_sq(b).sqrt().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn matricize_concatenates_frontal_slices() {
        let s1 = Matrix::from_rows(&[vec![1., 2.], vec![3., 4.]]).unwrap();
        let s2 = Matrix::from_rows(&[vec![5., 6.], vec![7., 8.]]).unwrap();
        let x = Tensor3::from_slices(&[s1, s2]).unwrap();
        let expected =
            Matrix::from_rows(&[vec![1., 2., 5., 6.], vec![3., 4., 7., 8.]]).unwrap();
        assert_eq!(matricize(&x), expected);
    }

    #[test]
    fn matricize_zero_tensor() {
        let m = matricize(&Tensor3::zeros(3, 4, 2));
        assert_eq!((m.rows(), m.cols()), (3, 8));
        assert!(m.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn tensorize_splits_columns_into_slices() {
        let m = Matrix::from_rows(&[vec![1., 2., 5., 6.], vec![3., 4., 7., 8.]]).unwrap();
        let x = tensorize(&m, 2, 2).unwrap();
        assert_eq!(
            x.slice_matrix(0),
            Matrix::from_rows(&[vec![1., 2.], vec![3., 4.]]).unwrap()
        );
        assert_eq!(
            x.slice_matrix(1),
            Matrix::from_rows(&[vec![5., 6.], vec![7., 8.]]).unwrap()
        );
    }

    #[test]
    fn tensorize_rejects_bad_column_count() {
        let m = Matrix::zeros(3, 8);
        assert!(matches!(
            tensorize(&m, 3, 2),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn matricize_round_trip_by_index_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Tensor3::from_fn(4, 5, 3, |_, _, _| rng.random::<f64>());
        let m = matricize(&x);
        for n in 0..3 {
            for t in 0..5 {
                for f in 0..4 {
                    assert_eq!(m.get(f, n * 5 + t), x.get(f, t, n));
                }
            }
        }
        assert_eq!(tensorize(&m, 5, 3).unwrap(), x);
    }

    #[test]
    fn khatri_rao_matches_matricized_rank_one_tensor() {
        let b = Matrix::column_vector(&[1., 2.]).unwrap();
        let c = Matrix::column_vector(&[3., 4.]).unwrap();
        let kr = khatri_rao(&c, &b).unwrap();
        assert_eq!(kr.values(), &[3., 6., 4., 8.]);

        // brute force: a = [1], rank-one tensor a x b x c matricized is a 1x4 row
        let a = Matrix::column_vector(&[1.]).unwrap();
        let x = Tensor3::from_fn(1, 2, 2, |f, t, n| a.get(f, 0) * b.get(t, 0) * c.get(n, 0));
        assert_eq!(matricize(&x).values(), kr.values());
    }

    #[test]
    fn khatri_rao_of_ones_is_ones() {
        let kr = khatri_rao(&Matrix::filled(3, 2, 1.0), &Matrix::filled(4, 2, 1.0)).unwrap();
        assert_eq!((kr.rows(), kr.cols()), (12, 2));
        assert!(kr.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn khatri_rao_rejects_rank_mismatch() {
        assert!(khatri_rao(&Matrix::zeros(2, 3), &Matrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn khatri_rao_single_row_of_ones_is_b() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let b = random_matrix(&mut rng, 5, 3);
        let kr = khatri_rao(&Matrix::filled(1, 3, 1.0), &b).unwrap();
        assert_eq!(kr, b);
    }

    #[test]
    fn frobenius_small_cases() {
        assert_eq!(Matrix::from_rows(&[vec![3., 4.]]).unwrap().frobenius_sq(), 25.0);
        assert_eq!(Tensor3::zeros(2, 3, 4).frobenius_sq(), 0.0);
    }

    #[test]
    fn frobenius_matches_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = Matrix::from_fn(5, 5, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let mut oracle = 0.0;
        for i in 0..5 {
            for j in 0..5 {
                oracle += m.get(i, j) * m.get(i, j);
            }
        }
        assert!((frobenius_sq(&m) - oracle).abs() <= 1e-12 * oracle);
    }

    #[test]
    fn cp_reconstruct_rank_one() {
        let a = Matrix::column_vector(&[1., 2.]).unwrap();
        let b = Matrix::column_vector(&[1., 1.]).unwrap();
        let c = Matrix::column_vector(&[1.]).unwrap();
        let x = cp_reconstruct(&a, &b, &c).unwrap();
        assert_eq!(
            x.slice_matrix(0),
            Matrix::from_rows(&[vec![1., 1.], vec![2., 2.]]).unwrap()
        );
    }

    #[test]
    fn cp_reconstruct_zero_factors() {
        let x = cp_reconstruct(&Matrix::zeros(3, 2), &Matrix::zeros(4, 2), &Matrix::zeros(5, 2))
            .unwrap();
        assert_eq!(x.dims(), (3, 4, 5));
        assert!(x.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cp_reconstruct_rejects_rank_mismatch() {
        let r = cp_reconstruct(&Matrix::zeros(3, 2), &Matrix::zeros(4, 3), &Matrix::zeros(5, 2));
        assert!(matches!(r, Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn cp_reconstruct_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (a, b, c) = (
            random_matrix(&mut rng, 6, 3),
            random_matrix(&mut rng, 7, 3),
            random_matrix(&mut rng, 4, 3),
        );
        let x = cp_reconstruct(&a, &b, &c).unwrap();
        let oracle = Tensor3::from_fn(6, 7, 4, |f, t, n| {
            (0..3).map(|k| a.get(f, k) * b.get(t, k) * c.get(n, k)).sum()
        });
        assert!(rel_err(x.values(), oracle.values()) <= 1e-10);
        assert!(x.min_value() >= 0.0);
    }

    #[test]
    fn mttkrp_matches_explicit_unfolding() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = Tensor3::from_fn(5, 6, 4, |_, _, _| rng.random::<f64>());
        let (a, b, c) = (
            random_matrix(&mut rng, 5, 3),
            random_matrix(&mut rng, 6, 3),
            random_matrix(&mut rng, 4, 3),
        );
        let pairs = [
            khatri_rao(&c, &b).unwrap(),
            khatri_rao(&c, &a).unwrap(),
            khatri_rao(&b, &a).unwrap(),
        ];
        for (mode, kr) in pairs.iter().enumerate() {
            let explicit = unfold(&x, mode).unwrap().matmul(kr).unwrap();
            let fast = mttkrp(&x, &a, &b, &c, mode).unwrap();
            assert!(rel_err(fast.values(), explicit.values()) < 1e-12, "mode {mode}");
        }
    }

    #[test]
    fn matrix_products_agree_with_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_matrix(&mut rng, 4, 3);
        let b = random_matrix(&mut rng, 3, 5);
        let p = a.matmul(&b).unwrap();
        for i in 0..4 {
            for j in 0..5 {
                let v: f64 = (0..3).map(|k| a.get(i, k) * b.get(k, j)).sum();
                assert!((p.get(i, j) - v).abs() < 1e-14);
            }
        }
        let pt = a.t_matmul(&a).unwrap();
        let oracle = a.transpose().matmul(&a).unwrap();
        assert!(rel_err(pt.values(), oracle.values()) < 1e-14);
        assert!(a.matmul(&a).is_err());
    }
}

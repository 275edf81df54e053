//! Dense row-major matrices and the non-differentiable kernels shared with
//! the tape.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{PanError, Result};
use crate::scalar::{sigmoid, Scalar};

#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T = f64> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Elementwise {
    Abs,
    Sigmoid,
    Relu,
    Subtract,
    Multiply,
    Add,
}

impl Elementwise {
    pub fn is_binary(self) -> bool {
        matches!(self, Elementwise::Subtract | Elementwise::Multiply | Elementwise::Add)
    }
}

impl<T: Scalar> Matrix<T> {
    /// Builds a matrix from row-major values, rejecting wrong lengths and
    /// non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(PanError::Length {
                op: "Matrix::new",
                expected: rows * cols,
                actual: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(PanError::Numeric(format!(
                "entry ({}, {}) is {}",
                pos / cols.max(1),
                pos % cols.max(1),
                data[pos]
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<T>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, T::zero())
    }

    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(PanError::Length {
                    op: "Matrix::from_rows",
                    expected: cols,
                    actual: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn row_vector(values: Vec<T>) -> Result<Self> {
        Self::new(1, values.len(), values)
    }

    pub fn column(values: Vec<T>) -> Result<Self> {
        Self::new(values.len(), 1, values)
    }

    pub fn scalar(value: T) -> Self {
        Self::from_raw(1, 1, vec![value])
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
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
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

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Only meaningful for 1x1 matrices; returns the first entry.
    pub fn item(&self) -> T {
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().fold(T::zero(), |a, b| a + b)
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn cast<U: Scalar>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| U::lit(v.to_f64_lossy())).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self::from_raw(self.rows, self.cols, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Self, op: &'static str, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.same_shape(other, op)?;
        Ok(Self::from_raw(
            self.rows,
            self.cols,
            self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        ))
    }

    pub(crate) fn same_shape(&self, other: &Self, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(PanError::dim(op, self.shape(), other.shape()));
        }
        Ok(())
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(PanError::dim("matmul", self.shape(), other.shape()));
        }
        let (n, k, m) = (self.rows, self.cols, other.cols);
        let mut out = vec![T::zero(); n * m];
        for i in 0..n {
            let out_row = &mut out[i * m..(i + 1) * m];
            for p in 0..k {
                let a = self.data[i * k + p];
                if a == T::zero() {
                    continue;
                }
                let b_row = &other.data[p * m..(p + 1) * m];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(Self::from_raw(n, m, out))
    }

    /// `selfᵀ · other` without materialising the transpose.
    pub fn t_matmul(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows {
            return Err(PanError::dim("t_matmul", self.shape(), other.shape()));
        }
        let (k, n, m) = (self.rows, self.cols, other.cols);
        let mut out = vec![T::zero(); n * m];
        for p in 0..k {
            let b_row = &other.data[p * m..(p + 1) * m];
            for i in 0..n {
                let a = self.data[p * n + i];
                if a == T::zero() {
                    continue;
                }
                let out_row = &mut out[i * m..(i + 1) * m];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(Self::from_raw(n, m, out))
    }

    /// `self · otherᵀ` without materialising the transpose.
    pub fn matmul_t(&self, other: &Self) -> Result<Self> {
        if self.cols != other.cols {
            return Err(PanError::dim("matmul_t", self.shape(), other.shape()));
        }
        let (n, k, m) = (self.rows, self.cols, other.rows);
        let mut out = vec![T::zero(); n * m];
        for i in 0..n {
            let a_row = &self.data[i * k..(i + 1) * k];
            for j in 0..m {
                let b_row = &other.data[j * k..(j + 1) * k];
                let mut acc = T::zero();
                for (&a, &b) in a_row.iter().zip(b_row) {
                    acc += a * b;
                }
                out[i * m + j] = acc;
            }
        }
        Ok(Self::from_raw(n, m, out))
    }

    pub fn elementwise(&self, kind: Elementwise, other: Option<&Self>) -> Result<Self> {
        match (kind, other) {
            (Elementwise::Abs, _) => Ok(self.map(|v| v.abs())),
            (Elementwise::Sigmoid, _) => Ok(self.map(sigmoid)),
            (Elementwise::Relu, _) => Ok(self.map(|v| if v > T::zero() { v } else { T::zero() })),
            (Elementwise::Subtract, Some(b)) => self.zip_map(b, "subtract", |x, y| x - y),
            (Elementwise::Multiply, Some(b)) => self.zip_map(b, "multiply", |x, y| x * y),
            (Elementwise::Add, Some(b)) => self.zip_map(b, "add", |x, y| x + y),
            (k, None) => Err(PanError::contract(format!("{k:?} needs a second operand"))),
        }
    }

    /// Adds a `1 x cols` bias to every row.
    pub fn add_row_broadcast(&self, bias: &Self) -> Result<Self> {
        if bias.rows != 1 || bias.cols != self.cols {
            return Err(PanError::dim("add_row_broadcast", self.shape(), bias.shape()));
        }
        let mut out = self.clone();
        for r in 0..self.rows {
            for (o, &b) in out.row_mut(r).iter_mut().zip(&bias.data) {
                *o += b;
            }
        }
        Ok(out)
    }

    /// Softmax of each row, stabilised by subtracting the row maximum.
    pub fn row_softmax(&self) -> Result<Self> {
        if self.cols == 0 {
            return Err(PanError::contract("row_softmax needs at least one column"));
        }
        let mut out = self.clone();
        for r in 0..self.rows {
            let row = out.row_mut(r);
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut total = T::zero();
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            for v in row.iter_mut() {
                *v /= total;
            }
        }
        Ok(out)
    }

    pub fn row_sums(&self) -> Self {
        let data = (0..self.rows)
            .map(|r| self.row(r).iter().copied().fold(T::zero(), |a, b| a + b))
            .collect();
        Self::from_raw(self.rows, 1, data)
    }

    pub fn gather_rows(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            if i >= self.rows {
                return Err(PanError::Index {
                    index: i,
                    len: self.rows,
                });
            }
            data.extend_from_slice(self.row(i));
        }
        Ok(Self::from_raw(indices.len(), self.cols, data))
    }

    pub fn scale(&self, c: T) -> Self {
        self.map(|v| v * c)
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<T> {
        self.same_shape(other, "max_abs_diff")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max))
    }

    pub(crate) fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// Binary cross-entropy of one probability against a 0/1 target, with the
/// probability clamped to `[eps, 1 - eps]`.
pub fn bce<T: Scalar>(p: T, y: T) -> T {
    let eps = T::BCE_EPS;
    let p = p.max(eps).min(T::one() - eps);
    -(y * p.ln() + (T::one() - y) * (T::one() - p).ln())
}

/// Mean BCE over positions whose mask is 1. An all-zero mask gives exactly 0.
pub fn masked_bce_mean<T: Scalar>(p: &[T], y: &[T], mask: &[T]) -> Result<T> {
    if p.len() != y.len() || p.len() != mask.len() {
        return Err(PanError::Length {
            op: "masked_bce_mean",
            expected: p.len(),
            actual: if y.len() != p.len() { y.len() } else { mask.len() },
        });
    }
    let mut total = T::zero();
    let mut count = 0usize;
    for ((&pi, &yi), &mi) in p.iter().zip(y).zip(mask) {
        if mi != T::zero() {
            total += bce(pi, yi);
            count += 1;
        }
    }
    if count == 0 {
        Ok(T::zero())
    } else {
        Ok(total / T::from_usize_lossy(count))
    }
}

#[derive(Serialize, Deserialize)]
struct MatrixRepr {
    rows: usize,
    cols: usize,
    /// IEEE-754 binary64 bit patterns as 16 hex digits.
    values: Vec<String>,
}

impl<T: Scalar> Serialize for Matrix<T> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixRepr {
            rows: self.rows,
            cols: self.cols,
            values: self
                .data
                .iter()
                .map(|v| format!("{:016x}", v.to_f64_lossy().to_bits()))
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de, T: Scalar> Deserialize<'de> for Matrix<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        let repr = MatrixRepr::deserialize(d)?;
        let data = repr
            .values
            .iter()
            .map(|s| {
                u64::from_str_radix(s, 16)
                    .map(|bits| T::lit(f64::from_bits(bits)))
                    .map_err(|e| D::Error::custom(format!("bad hex float {s:?}: {e}")))
            })
            .collect::<std::result::Result<Vec<T>, _>>()?;
        Matrix::new(repr.rows, repr.cols, data).map_err(D::Error::custom)
    }
}

//! Row-major dense matrix with a fixed-order multiply kernel.
//!
//! Every product accumulates over the shared dimension in ascending index
//! order, so results are bitwise-reproducible across runs and the
//! transpose variants agree bitwise with `transpose` + `matmul`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numerics::scalar::Scalar;

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<F> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Scalar> Matrix<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![F::zero(); rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<F>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DataLength { rows, cols, got: data.len() });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> F) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
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
    pub fn get(&self, i: usize, j: usize) -> F {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: F) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[F] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [F] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn as_slice(&self) -> &[F] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<F> {
        self.data
    }

    /// Copies row `src` of `other` into row `dst` of `self`.
    pub fn copy_row_from(&mut self, dst: usize, other: &Self, src: usize) {
        debug_assert_eq!(self.cols, other.cols);
        let row = other.row(src);
        self.row_mut(dst).copy_from_slice(row);
    }

    fn dim_err(op: &'static str, lhs: &Self, rhs: &Self) -> Error {
        Error::Dimension {
            op,
            lhs: (lhs.rows, lhs.cols),
            rhs: (rhs.rows, rhs.cols),
        }
    }

    /// `self * rhs`, accumulating over the inner dimension in ascending order.
    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(Self::dim_err("matmul", self, rhs));
        }
        let (m, k, n) = (self.rows, self.cols, rhs.cols);
        let mut out = Self::zeros(m, n);
        for i in 0..m {
            let a_row = &self.data[i * k..(i + 1) * k];
            let c_row = &mut out.data[i * n..(i + 1) * n];
            for (p, &a) in a_row.iter().enumerate() {
                let b_row = &rhs.data[p * n..(p + 1) * n];
                for (c, &b) in c_row.iter_mut().zip(b_row) {
                    *c = *c + a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self * rhs^T`; bitwise equal to `self.matmul(&rhs.transpose())`.
    pub fn matmul_nt(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.cols {
            return Err(Self::dim_err("matmul_nt", self, rhs));
        }
        let (m, k, n) = (self.rows, self.cols, rhs.rows);
        let mut out = Self::zeros(m, n);
        for i in 0..m {
            let a_row = &self.data[i * k..(i + 1) * k];
            for j in 0..n {
                let b_row = &rhs.data[j * k..(j + 1) * k];
                let mut acc = F::zero();
                for (&a, &b) in a_row.iter().zip(b_row) {
                    acc = acc + a * b;
                }
                out.data[i * n + j] = acc;
            }
        }
        Ok(out)
    }

    /// `self^T * rhs`; bitwise equal to `self.transpose().matmul(rhs)`.
    pub fn matmul_tn(&self, rhs: &Self) -> Result<Self> {
        if self.rows != rhs.rows {
            return Err(Self::dim_err("matmul_tn", self, rhs));
        }
        let (k, m, n) = (self.rows, self.cols, rhs.cols);
        let mut out = Self::zeros(m, n);
        for p in 0..k {
            let a_row = &self.data[p * m..(p + 1) * m];
            let b_row = &rhs.data[p * n..(p + 1) * n];
            for (i, &a) in a_row.iter().enumerate() {
                let c_row = &mut out.data[i * n..(i + 1) * n];
                for (c, &b) in c_row.iter_mut().zip(b_row) {
                    *c = *c + a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn add(&self, rhs: &Self) -> Result<Self> {
        if self.rows != rhs.rows || self.cols != rhs.cols {
            return Err(Self::dim_err("add", self, rhs));
        }
        let mut out = self.clone();
        for (c, &b) in out.data.iter_mut().zip(&rhs.data) {
            *c = *c + b;
        }
        Ok(out)
    }

    pub fn sub(&self, rhs: &Self) -> Result<Self> {
        if self.rows != rhs.rows || self.cols != rhs.cols {
            return Err(Self::dim_err("sub", self, rhs));
        }
        let mut out = self.clone();
        for (c, &b) in out.data.iter_mut().zip(&rhs.data) {
            *c = *c - b;
        }
        Ok(out)
    }

    /// `self += scale * rhs`, in place.
    pub fn add_scaled_assign(&mut self, rhs: &Self, scale: F) -> Result<()> {
        if self.rows != rhs.rows || self.cols != rhs.cols {
            return Err(Self::dim_err("add_scaled_assign", self, rhs));
        }
        for (c, &b) in self.data.iter_mut().zip(&rhs.data) {
            *c = *c + scale * b;
        }
        Ok(())
    }

    pub fn scale(&self, s: F) -> Self {
        let mut out = self.clone();
        for c in &mut out.data {
            *c = *c * s;
        }
        out
    }

    pub fn hadamard(&self, rhs: &Self) -> Result<Self> {
        if self.rows != rhs.rows || self.cols != rhs.cols {
            return Err(Self::dim_err("hadamard", self, rhs));
        }
        let mut out = self.clone();
        for (c, &b) in out.data.iter_mut().zip(&rhs.data) {
            *c = *c * b;
        }
        Ok(out)
    }

    pub fn map(&self, f: impl Fn(F) -> F) -> Self {
        let mut out = self.clone();
        for c in &mut out.data {
            *c = f(*c);
        }
        out
    }

    /// Adds `bias` (a 1-row matrix) to every row.
    pub fn add_row_broadcast(&self, bias: &Self) -> Result<Self> {
        if bias.rows != 1 || bias.cols != self.cols {
            return Err(Self::dim_err("add_row_broadcast", self, bias));
        }
        let mut out = self.clone();
        for i in 0..out.rows {
            let row = &mut out.data[i * out.cols..(i + 1) * out.cols];
            for (c, &b) in row.iter_mut().zip(&bias.data) {
                *c = *c + b;
            }
        }
        Ok(out)
    }

    /// Column sums as a 1-row matrix, accumulated row by row.
    pub fn col_sums(&self) -> Self {
        let mut out = Self::zeros(1, self.cols);
        for i in 0..self.rows {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            for (c, &v) in out.data.iter_mut().zip(row) {
                *c = *c + v;
            }
        }
        out
    }

    pub fn fill(&mut self, v: F) {
        for c in &mut self.data {
            *c = v;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Elementwise nonlinearity with a derivative expressed via its output.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply<F: Scalar>(self, x: F) -> F {
        match self {
            Activation::Sigmoid => {
                // Split on sign to avoid overflow in exp for large |x|.
                if x >= F::zero() {
                    F::one() / (F::one() + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (F::one() + e)
                }
            }
            Activation::Tanh => x.tanh(),
            Activation::Relu => {
                if x > F::zero() {
                    x
                } else {
                    F::zero()
                }
            }
        }
    }

    /// d activation / d input, written in terms of the activation output `y`.
    #[inline]
    pub fn grad_from_output<F: Scalar>(self, y: F) -> F {
        match self {
            Activation::Sigmoid => y * (F::one() - y),
            Activation::Tanh => F::one() - y * y,
            Activation::Relu => {
                if y > F::zero() {
                    F::one()
                } else {
                    F::zero()
                }
            }
        }
    }

    pub fn apply_matrix<F: Scalar>(self, m: &Matrix<F>) -> Matrix<F> {
        m.map(|v| self.apply(v))
    }
}

//! Dense complex containers and the small Hermitian solves used per RE.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::{Error, Result, C64};

/// Row-major complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![C64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(alloc::format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
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
    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: C64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[C64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.data
    }

    /// Squared Frobenius norm.
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }
}

/// Cholesky factor of a small Hermitian positive-definite matrix.
pub struct HermitianSolver {
    chol: Cholesky<C64, Dyn>,
}

impl HermitianSolver {
    /// Factor the row-major `n x n` Hermitian matrix `a`.
    pub fn new(n: usize, a: &[C64]) -> Result<Self> {
        let m = DMatrix::from_row_slice(n, n, a);
        Cholesky::new(m)
            .map(|chol| Self { chol })
            .ok_or_else(|| Error::LinAlg("regularized Gram matrix is not positive definite".into()))
    }

    /// Overwrite `rhs` with `A^{-1} rhs`.
    pub fn solve_in_place(&self, rhs: &mut [C64]) {
        let mut b = DVector::from_column_slice(rhs);
        self.chol.solve_mut(&mut b);
        rhs.copy_from_slice(b.as_slice());
    }
}

/// `G^H G + reg * I` for a row-major `rows x cols` matrix `g`.
pub fn regularized_gram(g: &[C64], rows: usize, cols: usize, reg: f64, out: &mut [C64]) {
    for a in 0..cols {
        for b in a..cols {
            let mut acc = C64::new(0.0, 0.0);
            for r in 0..rows {
                acc += g[r * cols + a].conj() * g[r * cols + b];
            }
            out[a * cols + b] = acc;
            out[b * cols + a] = acc.conj();
        }
        out[a * cols + a] += reg;
    }
}

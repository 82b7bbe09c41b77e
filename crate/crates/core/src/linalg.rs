//! Dense exact matrices over rationals and over truncated series.
//!
//! Sizes here are desk scale (rank <= a few), so everything is naive:
//! Gaussian elimination over the rationals is exact and pivoting is just
//! "first nonzero entry".

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use num_traits::{One, Zero};

use crate::padic::{NormExp, Prime, Rat};
use crate::series::{gauss_norm, RadiusTuple, SeriesError, TruncatedSeries, Window};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LinalgError {
    ShapeMismatch,
    RaggedRows,
    Series(SeriesError),
    NotInvertible,
}

impl fmt::Display for LinalgError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LinalgError::ShapeMismatch => write!(f, "matrix dimensions do not match"),
            LinalgError::RaggedRows => write!(f, "rows have unequal lengths"),
            LinalgError::Series(e) => write!(f, "{}", e),
            LinalgError::NotInvertible => write!(f, "matrix is not invertible"),
        }
    }
}

impl From<SeriesError> for LinalgError {
    fn from(e: SeriesError) -> Self {
        LinalgError::Series(e)
    }
}

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T> Matrix<T> {
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Matrix<T> {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Matrix<T>, LinalgError> {
        let r = rows.len();
        let c = rows.first().map(|row| row.len()).unwrap_or(0);
        if rows.iter().any(|row| row.len() != c) {
            return Err(LinalgError::RaggedRows);
        }
        let data = rows.into_iter().flatten().collect();
        Ok(Matrix { rows: r, cols: c, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entry(&self, i: usize, j: usize) -> &T {
        &self.data[i * self.cols + j]
    }

    pub fn entry_mut(&mut self, i: usize, j: usize) -> &mut T {
        &mut self.data[i * self.cols + j]
    }

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|t| f(t)).collect(),
        }
    }

    pub fn column(&self, j: usize) -> Vec<T>
    where
        T: Clone,
    {
        (0..self.rows).map(|i| self.entry(i, j).clone()).collect()
    }
}

impl Matrix<Rat> {
    pub fn zeros(rows: usize, cols: usize) -> Matrix<Rat> {
        Matrix::from_fn(rows, cols, |_, _| Rat::zero())
    }

    pub fn identity(n: usize) -> Matrix<Rat> {
        Matrix::from_fn(n, n, |i, j| if i == j { Rat::one() } else { Rat::zero() })
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(Rat::is_zero)
    }

    pub fn add(&self, other: &Matrix<Rat>) -> Result<Matrix<Rat>, LinalgError> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(LinalgError::ShapeMismatch);
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a.clone() + b.clone())
                .collect(),
        })
    }

    pub fn sub(&self, other: &Matrix<Rat>) -> Result<Matrix<Rat>, LinalgError> {
        self.add(&other.scale(&-Rat::one()))
    }

    pub fn scale(&self, c: &Rat) -> Matrix<Rat> {
        self.map(|x| x.clone() * c.clone())
    }

    pub fn mul(&self, other: &Matrix<Rat>) -> Result<Matrix<Rat>, LinalgError> {
        if self.cols != other.rows {
            return Err(LinalgError::ShapeMismatch);
        }
        Ok(Matrix::from_fn(self.rows, other.cols, |i, j| {
            let mut acc = Rat::zero();
            for k in 0..self.cols {
                acc += self.entry(i, k).clone() * other.entry(k, j).clone();
            }
            acc
        }))
    }

    pub fn mul_vec(&self, v: &[Rat]) -> Result<Vec<Rat>, LinalgError> {
        if v.len() != self.cols {
            return Err(LinalgError::ShapeMismatch);
        }
        Ok((0..self.rows)
            .map(|i| {
                let mut acc = Rat::zero();
                for k in 0..self.cols {
                    acc += self.entry(i, k).clone() * v[k].clone();
                }
                acc
            })
            .collect())
    }

    pub fn commutes_with(&self, other: &Matrix<Rat>) -> Result<bool, LinalgError> {
        Ok(self.mul(other)? == other.mul(self)?)
    }

    /// Minimal e <= cap with self^e = 0, if any.
    pub fn nilpotency_index(&self, cap: usize) -> Option<usize> {
        if self.rows != self.cols {
            return None;
        }
        let mut power = self.clone();
        for e in 1..=cap {
            if power.is_zero() {
                return Some(e);
            }
            power = power.mul(self).expect("square matrices");
        }
        None
    }

    /// Row echelon form; returns (reduced matrix, pivot columns).
    pub fn rref(&self) -> (Matrix<Rat>, Vec<usize>) {
        let mut m = self.clone();
        let mut pivots = Vec::new();
        let mut row = 0;
        for col in 0..m.cols {
            if row >= m.rows {
                break;
            }
            let pivot_row = (row..m.rows).find(|&r| !m.entry(r, col).is_zero());
            let pr = match pivot_row {
                Some(pr) => pr,
                None => continue,
            };
            for j in 0..m.cols {
                let a = m.entry(pr, j).clone();
                let b = m.entry(row, j).clone();
                *m.entry_mut(pr, j) = b;
                *m.entry_mut(row, j) = a;
            }
            let inv = Rat::one() / m.entry(row, col).clone();
            for j in 0..m.cols {
                let v = m.entry(row, j).clone() * inv.clone();
                *m.entry_mut(row, j) = v;
            }
            for r in 0..m.rows {
                if r != row && !m.entry(r, col).is_zero() {
                    let factor = m.entry(r, col).clone();
                    for j in 0..m.cols {
                        let v = m.entry(r, j).clone() - factor.clone() * m.entry(row, j).clone();
                        *m.entry_mut(r, j) = v;
                    }
                }
            }
            pivots.push(col);
            row += 1;
        }
        (m, pivots)
    }

    pub fn rank(&self) -> usize {
        self.rref().1.len()
    }

    /// Basis of the right kernel, one vector per free column.
    pub fn kernel_basis(&self) -> Vec<Vec<Rat>> {
        let (r, pivots) = self.rref();
        let mut basis = Vec::new();
        let mut pivot_of_col = vec![None; self.cols];
        for (row, &col) in pivots.iter().enumerate() {
            pivot_of_col[col] = Some(row);
        }
        for free in 0..self.cols {
            if pivot_of_col[free].is_some() {
                continue;
            }
            let mut v = vec![Rat::zero(); self.cols];
            v[free] = Rat::one();
            for (col, maybe_row) in pivot_of_col.iter().enumerate() {
                if let Some(row) = maybe_row {
                    v[col] = -r.entry(*row, free).clone();
                }
            }
            basis.push(v);
        }
        basis
    }

    pub fn inverse(&self) -> Option<Matrix<Rat>> {
        if self.rows != self.cols {
            return None;
        }
        let n = self.rows;
        let mut aug = Matrix::from_fn(n, 2 * n, |i, j| {
            if j < n {
                self.entry(i, j).clone()
            } else if j - n == i {
                Rat::one()
            } else {
                Rat::zero()
            }
        });
        let (reduced, pivots) = aug.rref();
        if pivots.len() < n || pivots.iter().enumerate().any(|(i, &c)| c != i) {
            return None;
        }
        aug = reduced;
        Some(Matrix::from_fn(n, n, |i, j| aug.entry(i, j + n).clone()))
    }

    /// max |entry| in exponent scale: the minimum of the entry valuations.
    pub fn norm_exp(&self, p: Prime) -> NormExp {
        self.data
            .iter()
            .map(|c| p.norm_exp(c))
            .fold(NormExp::Infinite, NormExp::sup_value)
    }
}

/// Extends `current` (columns, linearly independent) by those `candidates`
/// that enlarge the span; returns the indices of adopted candidates.
pub fn extend_basis(current: &mut Vec<Vec<Rat>>, candidates: &[Vec<Rat>]) -> Vec<usize> {
    let mut adopted = Vec::new();
    for (idx, cand) in candidates.iter().enumerate() {
        let dim = cand.len();
        let cols = current.len() + 1;
        let m = Matrix::from_fn(dim, cols, |i, j| {
            if j < current.len() {
                current[j][i].clone()
            } else {
                cand[i].clone()
            }
        });
        if m.rank() == cols {
            current.push(cand.clone());
            adopted.push(idx);
        }
    }
    adopted
}

impl Matrix<TruncatedSeries> {
    pub fn zero_series(rows: usize, cols: usize, window: &Window) -> Matrix<TruncatedSeries> {
        Matrix::from_fn(rows, cols, |_, _| TruncatedSeries::zero(window.clone()))
    }

    pub fn identity_series(n: usize, window: &Window) -> Matrix<TruncatedSeries> {
        Matrix::from_fn(n, n, |i, j| {
            if i == j {
                TruncatedSeries::one(window.clone())
            } else {
                TruncatedSeries::zero(window.clone())
            }
        })
    }

    /// Embeds a constant matrix as a series matrix over `window`.
    pub fn from_rat(m: &Matrix<Rat>, window: &Window) -> Matrix<TruncatedSeries> {
        m.map(|c| TruncatedSeries::constant(window.clone(), c.clone()))
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(TruncatedSeries::is_zero)
    }

    /// Constant terms of every entry.
    pub fn constant_part(&self) -> Matrix<Rat> {
        self.map(|s| s.constant_term())
    }

    pub fn is_constant(&self) -> bool {
        self.data.iter().all(TruncatedSeries::is_constant)
    }

    pub fn add(&self, other: &Matrix<TruncatedSeries>) -> Result<Matrix<TruncatedSeries>, LinalgError> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(LinalgError::ShapeMismatch);
        }
        let mut data = Vec::with_capacity(self.data.len());
        for (a, b) in self.data.iter().zip(&other.data) {
            data.push(a.add(b)?);
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn sub(&self, other: &Matrix<TruncatedSeries>) -> Result<Matrix<TruncatedSeries>, LinalgError> {
        self.add(&other.map(TruncatedSeries::neg))
    }

    pub fn scale_rat(&self, c: &Rat) -> Matrix<TruncatedSeries> {
        self.map(|s| s.scale(c))
    }

    pub fn mul(&self, other: &Matrix<TruncatedSeries>) -> Result<Matrix<TruncatedSeries>, LinalgError> {
        if self.cols != other.rows {
            return Err(LinalgError::ShapeMismatch);
        }
        let mut data = Vec::with_capacity(self.rows * other.cols);
        for i in 0..self.rows {
            for j in 0..other.cols {
                let mut acc: Option<TruncatedSeries> = None;
                for k in 0..self.cols {
                    let prod = self.entry(i, k).mul(other.entry(k, j))?;
                    acc = Some(match acc {
                        Some(a) => a.add(&prod)?,
                        None => prod,
                    });
                }
                data.push(acc.expect("cols >= 1"));
            }
        }
        Ok(Matrix {
            rows: self.rows,
            cols: other.cols,
            data,
        })
    }

    pub fn mul_section(
        &self,
        v: &[TruncatedSeries],
    ) -> Result<Vec<TruncatedSeries>, LinalgError> {
        if v.len() != self.cols {
            return Err(LinalgError::ShapeMismatch);
        }
        let mut out = Vec::with_capacity(self.rows);
        for i in 0..self.rows {
            let mut acc: Option<TruncatedSeries> = None;
            for k in 0..self.cols {
                let prod = self.entry(i, k).mul(&v[k])?;
                acc = Some(match acc {
                    Some(a) => a.add(&prod)?,
                    None => prod,
                });
            }
            out.push(acc.expect("cols >= 1"));
        }
        Ok(out)
    }

    /// Entrywise t_var d/dt_var.
    pub fn log_derivative(&self, var: usize) -> Matrix<TruncatedSeries> {
        self.map(|s| s.log_derivative(var))
    }

    /// Coefficient of t_var^k, entrywise.
    pub fn extract_var_coeff(&self, var: usize, k: i64) -> Matrix<TruncatedSeries> {
        self.map(|s| s.extract_var_coeff(var, k))
    }

    /// Multiplies every entry by t_var^k (window shifts accordingly).
    pub fn shift(&self, var: usize, k: i64) -> Matrix<TruncatedSeries> {
        self.map(|s| s.shift(var, k))
    }

    /// max |entry|_R in exponent scale: minimum over entries.
    pub fn norm_exp(&self, p: Prime, r: &RadiusTuple) -> NormExp {
        self.data
            .iter()
            .map(|s| gauss_norm(p, s, r))
            .fold(NormExp::Infinite, NormExp::sup_value)
    }

    /// Inverse of a series matrix with invertible constant part, computed
    /// by a Neumann sum and verified exactly against the window.
    pub fn inverse(&self) -> Result<Matrix<TruncatedSeries>, LinalgError> {
        if self.rows != self.cols {
            return Err(LinalgError::ShapeMismatch);
        }
        let window = self.entry(0, 0).window().clone();
        let c0 = self
            .constant_part()
            .inverse()
            .ok_or(LinalgError::NotInvertible)?;
        let c0s = Matrix::from_rat(&c0, &window);
        // A = C0^(-1) M = I + X with X supported in positive degrees
        let a = c0s.mul(self)?;
        let x = a.sub(&Matrix::identity_series(self.rows, &window))?;
        let cap: i64 = window
            .upper()
            .iter()
            .zip(window.lower())
            .map(|(&hi, &lo)| hi + lo.min(0).abs())
            .sum::<i64>()
            + 1;
        let mut sum = Matrix::identity_series(self.rows, &window);
        let mut power = Matrix::identity_series(self.rows, &window);
        for _ in 0..cap {
            power = power.mul(&x)?;
            if power.is_zero() {
                break;
            }
            sum = sum.add(&power.scale_rat(&-Rat::one()))?;
            power = power.scale_rat(&-Rat::one());
        }
        let inv = sum.mul(&c0s)?;
        let check = self.mul(&inv)?;
        if check != Matrix::identity_series(self.rows, &window) {
            return Err(LinalgError::NotInvertible);
        }
        Ok(inv)
    }
}

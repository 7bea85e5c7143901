//! Dense complex matrices sized for registers of up to a dozen qubits.
//!
//! Storage is row-major. Nothing here tries to compete with BLAS; the
//! matrices that flow through the pipeline are at most 4096 x 4096 and most
//! hot paths (gate and channel application) never materialise a full
//! operator anyway.

use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };
pub const I: C64 = C64 { re: 0.0, im: 1.0 };

/// A square complex matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseOperator {
    dim: usize,
    entries: Vec<C64>,
}

impl DenseOperator {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, entries: vec![ZERO; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut out = Self::zeros(dim);
        for i in 0..dim {
            out.entries[i * dim + i] = ONE;
        }
        out
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut entries = Vec::with_capacity(dim * dim);
        for r in 0..dim {
            for c in 0..dim {
                entries.push(f(r, c));
            }
        }
        Self { dim, entries }
    }

    pub fn from_diagonal(diag: &[C64]) -> Self {
        let mut out = Self::zeros(diag.len());
        for (i, &v) in diag.iter().enumerate() {
            out.entries[i * diag.len() + i] = v;
        }
        out
    }

    /// Builds from row-major entries; the length must be a perfect square.
    pub fn from_row_major(entries: Vec<C64>) -> Result<Self> {
        let dim = (entries.len() as f64).sqrt().round() as usize;
        if dim * dim != entries.len() {
            return Err(Error::InvalidArgument(format!(
                "{} entries do not form a square matrix",
                entries.len()
            )));
        }
        Ok(Self { dim, entries })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[C64] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [C64] {
        &mut self.entries
    }

    pub fn row(&self, r: usize) -> &[C64] {
        &self.entries[r * self.dim..(r + 1) * self.dim]
    }

    /// Number of qubits when `dim` is a power of two.
    pub fn n_qubits(&self) -> Option<usize> {
        self.dim.is_power_of_two().then(|| self.dim.trailing_zeros() as usize)
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.dim, |r, c| self[(c, r)].conj())
    }

    pub fn scale(&self, s: C64) -> Self {
        Self { dim: self.dim, entries: self.entries.iter().map(|&v| v * s).collect() }
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    pub fn diagonal(&self) -> Vec<C64> {
        (0..self.dim).map(|i| self[(i, i)]).collect()
    }

    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.dim, rhs.dim, "matmul dimension mismatch");
        let n = self.dim;
        let mut out = vec![ZERO; n * n];
        for r in 0..n {
            let out_row = &mut out[r * n..(r + 1) * n];
            for k in 0..n {
                let a = self.entries[r * n + k];
                if a == ZERO {
                    continue;
                }
                let rhs_row = &rhs.entries[k * n..(k + 1) * n];
                for (o, &b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        Self { dim: n, entries: out }
    }

    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(self.dim, v.len(), "matrix-vector dimension mismatch");
        (0..self.dim)
            .map(|r| self.row(r).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn kron(&self, rhs: &Self) -> Self {
        let (n, m) = (self.dim, rhs.dim);
        Self::from_fn(n * m, |r, c| self[(r / m, c / m)] * rhs[(r % m, c % m)])
    }

    /// `[self, rhs] = self·rhs − rhs·self`.
    pub fn commutator(&self, rhs: &Self) -> Self {
        &self.matmul(rhs) - &rhs.matmul(self)
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, rhs: &Self) -> f64 {
        assert_eq!(self.dim, rhs.dim);
        self.entries.iter().zip(&rhs.entries).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// Largest entry of `|A − A†|`.
    pub fn hermiticity_error(&self) -> f64 {
        let n = self.dim;
        let mut worst = 0.0f64;
        for r in 0..n {
            for c in r..n {
                worst = worst.max((self[(r, c)] - self[(c, r)].conj()).norm());
            }
        }
        worst
    }

    /// Largest entry of `|U†U − I|`.
    pub fn unitarity_error(&self) -> f64 {
        self.adjoint().matmul(self).max_abs_diff(&Self::identity(self.dim))
    }

    /// Frobenius norm.
    pub fn frobenius_norm(&self) -> f64 {
        self.entries.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }
}

impl Index<(usize, usize)> for DenseOperator {
    type Output = C64;
    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        &self.entries[r * self.dim + c]
    }
}

impl IndexMut<(usize, usize)> for DenseOperator {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        &mut self.entries[r * self.dim + c]
    }
}

impl Add for &DenseOperator {
    type Output = DenseOperator;
    fn add(self, rhs: &DenseOperator) -> DenseOperator {
        assert_eq!(self.dim, rhs.dim);
        DenseOperator {
            dim: self.dim,
            entries: self.entries.iter().zip(&rhs.entries).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &DenseOperator {
    type Output = DenseOperator;
    fn sub(self, rhs: &DenseOperator) -> DenseOperator {
        assert_eq!(self.dim, rhs.dim);
        DenseOperator {
            dim: self.dim,
            entries: self.entries.iter().zip(&rhs.entries).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Mul for &DenseOperator {
    type Output = DenseOperator;
    fn mul(self, rhs: &DenseOperator) -> DenseOperator {
        self.matmul(rhs)
    }
}

pub fn vector_norm(v: &[C64]) -> f64 {
    v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
}

/// `⟨a|b⟩` with the conjugate on the left argument.
pub fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Single-qubit 2x2 matrices, row-major.
pub mod gates {
    use super::*;

    pub type Mat2 = [[C64; 2]; 2];

    pub fn pauli_x() -> Mat2 {
        [[ZERO, ONE], [ONE, ZERO]]
    }

    pub fn pauli_y() -> Mat2 {
        [[ZERO, -I], [I, ZERO]]
    }

    pub fn pauli_z() -> Mat2 {
        [[ONE, ZERO], [ZERO, -ONE]]
    }

    pub fn identity2() -> Mat2 {
        [[ONE, ZERO], [ZERO, ONE]]
    }

    /// `exp(−i φ/2 σ^x)`.
    pub fn rx(phi: f64) -> Mat2 {
        let (s, c) = (phi / 2.0).sin_cos();
        [[C64::new(c, 0.0), C64::new(0.0, -s)], [C64::new(0.0, -s), C64::new(c, 0.0)]]
    }

    /// `exp(−i φ/2 σ^y)`.
    pub fn ry(phi: f64) -> Mat2 {
        let (s, c) = (phi / 2.0).sin_cos();
        [[C64::new(c, 0.0), C64::new(-s, 0.0)], [C64::new(s, 0.0), C64::new(c, 0.0)]]
    }

    pub fn to_dense(m: &Mat2) -> DenseOperator {
        DenseOperator::from_fn(2, |r, c| m[r][c])
    }

    pub fn adjoint2(m: &Mat2) -> Mat2 {
        [[m[0][0].conj(), m[1][0].conj()], [m[0][1].conj(), m[1][1].conj()]]
    }

    pub fn mul2(a: &Mat2, b: &Mat2) -> Mat2 {
        let mut out = [[ZERO; 2]; 2];
        for r in 0..2 {
            for c in 0..2 {
                out[r][c] = a[r][0] * b[0][c] + a[r][1] * b[1][c];
            }
        }
        out
    }
}

/// Bit position inside a basis index for `qubit` in an `n_qubits` register.
///
/// Qubit 0 is the leftmost tensor factor, i.e. the most significant bit.
#[inline]
pub fn qubit_bit(qubit: usize, n_qubits: usize) -> usize {
    n_qubits - 1 - qubit
}

/// Embeds a single-qubit operator acting on `qubit` into the full register.
pub fn embed_single(op: &gates::Mat2, qubit: usize, n_qubits: usize) -> DenseOperator {
    let mut out = DenseOperator::identity(1);
    for q in 0..n_qubits {
        let factor = if q == qubit { gates::to_dense(op) } else { DenseOperator::identity(2) };
        out = out.kron(&factor);
    }
    out
}

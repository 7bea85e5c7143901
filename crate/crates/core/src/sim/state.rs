//! Pure and mixed register states plus the in-place kernels that act on them.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{gates::Mat2, DenseOperator, ONE, ZERO};

/// Superoperator on the 2x2 block of one qubit, indexed by `(row bit, column bit)`
/// flattened as `2 r + c`.
pub type Superop1 = [[C64; 4]; 4];

pub fn superop_identity() -> Superop1 {
    let mut s = [[ZERO; 4]; 4];
    for (i, row) in s.iter_mut().enumerate() {
        row[i] = ONE;
    }
    s
}

/// `ρ ↦ U ρ U†` as a superoperator.
pub fn superop_from_unitary(u: &Mat2) -> Superop1 {
    superop_from_kraus(std::slice::from_ref(u))
}

/// `ρ ↦ Σ K ρ K†` as a superoperator.
pub fn superop_from_kraus(ops: &[Mat2]) -> Superop1 {
    let mut s = [[ZERO; 4]; 4];
    for k in ops {
        for a in 0..2 {
            for b in 0..2 {
                for a2 in 0..2 {
                    for b2 in 0..2 {
                        s[2 * a + b][2 * a2 + b2] += k[a][a2] * k[b][b2].conj();
                    }
                }
            }
        }
    }
    s
}

/// `ρ ↦ (1 − p) ρ + p Tr(ρ) I/2`.
pub fn superop_depolarizing(p: f64) -> Superop1 {
    let mut s = superop_identity();
    for row in s.iter_mut() {
        for v in row.iter_mut() {
            *v *= 1.0 - p;
        }
    }
    for a in [0, 3] {
        for a2 in [0, 3] {
            s[a][a2] += C64::new(p / 2.0, 0.0);
        }
    }
    s
}

/// `later ∘ earlier`.
pub fn superop_compose(later: &Superop1, earlier: &Superop1) -> Superop1 {
    let mut out = [[ZERO; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            let mut acc = ZERO;
            for k in 0..4 {
                acc += later[i][k] * earlier[k][j];
            }
            out[i][j] = acc;
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    n_qubits: usize,
    amplitudes: Vec<C64>,
}

impl StateVector {
    pub fn zero_state(n_qubits: usize) -> Self {
        let mut amplitudes = vec![ZERO; 1 << n_qubits];
        amplitudes[0] = ONE;
        Self { n_qubits, amplitudes }
    }

    pub fn from_amplitudes(amplitudes: Vec<C64>) -> Result<Self> {
        let d = amplitudes.len();
        if !d.is_power_of_two() || d < 2 {
            return Err(Error::InvalidArgument(format!("state length {d} is not a power of two")));
        }
        let norm = crate::linalg::vector_norm(&amplitudes);
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidArgument(format!("state norm {norm} differs from 1")));
        }
        Ok(Self { n_qubits: d.trailing_zeros() as usize, amplitudes })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        crate::linalg::vector_norm(&self.amplitudes)
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    /// Applies `u` to the qubit stored at bit position `bit`.
    pub fn apply_single(&mut self, bit: usize, u: &Mat2) {
        let stride = 1usize << bit;
        let d = self.amplitudes.len();
        let mut base = 0;
        while base < d {
            for i in base..base + stride {
                let a0 = self.amplitudes[i];
                let a1 = self.amplitudes[i + stride];
                self.amplitudes[i] = u[0][0] * a0 + u[0][1] * a1;
                self.amplitudes[i + stride] = u[1][0] * a0 + u[1][1] * a1;
            }
            base += 2 * stride;
        }
    }

    pub fn apply_diagonal(&mut self, phases: &[C64]) {
        for (a, p) in self.amplitudes.iter_mut().zip(phases) {
            *a *= p;
        }
    }

    pub fn apply_dense(&mut self, u: &DenseOperator) {
        self.amplitudes = u.apply(&self.amplitudes);
    }

    pub fn to_density(&self) -> DensityMatrix {
        DensityMatrix::from_pure(&self.amplitudes)
    }
}

/// Row-major `d x d` density matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityMatrix {
    n_qubits: usize,
    entries: Vec<C64>,
}

impl DensityMatrix {
    pub fn zero_state(n_qubits: usize) -> Self {
        let d = 1usize << n_qubits;
        let mut entries = vec![ZERO; d * d];
        entries[0] = ONE;
        Self { n_qubits, entries }
    }

    pub fn maximally_mixed(n_qubits: usize) -> Self {
        let d = 1usize << n_qubits;
        let mut entries = vec![ZERO; d * d];
        for i in 0..d {
            entries[i * d + i] = C64::new(1.0 / d as f64, 0.0);
        }
        Self { n_qubits, entries }
    }

    pub fn from_pure(psi: &[C64]) -> Self {
        let d = psi.len();
        let mut entries = Vec::with_capacity(d * d);
        for a in psi {
            for b in psi {
                entries.push(a * b.conj());
            }
        }
        Self { n_qubits: d.trailing_zeros() as usize, entries }
    }

    pub fn from_operator(op: &DenseOperator) -> Result<Self> {
        let n = op
            .n_qubits()
            .ok_or_else(|| Error::InvalidArgument(format!("dimension {} is not a power of two", op.dim())))?;
        Ok(Self { n_qubits: n, entries: op.entries().to_vec() })
    }

    pub fn to_operator(&self) -> DenseOperator {
        DenseOperator::from_row_major(self.entries.clone()).expect("square by construction")
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn entries(&self) -> &[C64] {
        &self.entries
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.entries[r * self.dim() + c]
    }

    pub fn trace(&self) -> C64 {
        let d = self.dim();
        (0..d).map(|i| self.entries[i * d + i]).sum()
    }

    /// Real diagonal, the computational-basis populations.
    pub fn populations(&self) -> Vec<f64> {
        let d = self.dim();
        (0..d).map(|i| self.entries[i * d + i].re).collect()
    }

    pub fn hermiticity_error(&self) -> f64 {
        let d = self.dim();
        let mut worst = 0.0f64;
        for r in 0..d {
            for c in r..d {
                worst = worst.max((self.entries[r * d + c] - self.entries[c * d + r].conj()).norm());
            }
        }
        worst
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        let eigs = crate::oracle::eigh(&self.to_operator())?;
        Ok(eigs.energies[0])
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.entries.iter().zip(&other.entries).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// `U ρ U†` for a full-register unitary.
    pub fn apply_unitary(&mut self, u: &DenseOperator) {
        let rho = self.to_operator();
        self.entries = u.matmul(&rho).matmul(&u.adjoint()).entries().to_vec();
    }

    /// Applies a one-qubit superoperator to the qubit at bit position `bit`.
    pub fn apply_local(&mut self, bit: usize, s: &Superop1) {
        let d = self.dim();
        let stride = 1usize << bit;
        let e = &mut self.entries;
        let mut r = 0;
        while r < d {
            for r0 in r..r + stride {
                let row0 = r0 * d;
                let row1 = (r0 + stride) * d;
                let mut c = 0;
                while c < d {
                    for c0 in c..c + stride {
                        let c1 = c0 + stride;
                        let v = [e[row0 + c0], e[row0 + c1], e[row1 + c0], e[row1 + c1]];
                        let mut out = [ZERO; 4];
                        for (o, srow) in out.iter_mut().zip(s) {
                            *o = srow[0] * v[0] + srow[1] * v[1] + srow[2] * v[2] + srow[3] * v[3];
                        }
                        e[row0 + c0] = out[0];
                        e[row0 + c1] = out[1];
                        e[row1 + c0] = out[2];
                        e[row1 + c1] = out[3];
                    }
                    c += 2 * stride;
                }
            }
            r += 2 * stride;
        }
    }

    /// `ρ_ab ↦ φ_a ρ_ab φ_b*` for a diagonal unitary.
    pub fn apply_diagonal(&mut self, phases: &[C64]) {
        let d = self.dim();
        let conj: Vec<C64> = phases.iter().map(|p| p.conj()).collect();
        for (r, row) in self.entries.chunks_mut(d).enumerate() {
            let pr = phases[r];
            for (v, pc) in row.iter_mut().zip(&conj) {
                *v *= pr * pc;
            }
        }
    }

    /// `ρ ↦ (1 − p) ρ + p Tr_Q(ρ) ⊗ I_Q / 2^k` on the qubits whose bits form `mask`.
    pub fn depolarize_mask(&mut self, mask: usize, p: f64) {
        if p == 0.0 {
            return;
        }
        let d = self.dim();
        let k = mask.count_ones();
        let share = p / (1u64 << k) as f64;
        let subsets: Vec<usize> = {
            let mut v = Vec::with_capacity(1 << k);
            let mut x = 0usize;
            loop {
                v.push(x);
                x = x.wrapping_sub(mask) & mask;
                if x == 0 {
                    break;
                }
            }
            v
        };
        let keep = 1.0 - p;
        for r in (0..d).filter(|r| r & mask == 0) {
            for c in (0..d).filter(|c| c & mask == 0) {
                let partial: C64 = subsets.iter().map(|&x| self.entries[(r | x) * d + (c | x)]).sum();
                let add = partial * share;
                for &x in &subsets {
                    let idx = (r | x) * d + (c | x);
                    self.entries[idx] = self.entries[idx] * keep + add;
                }
                // entries whose row and column subset differ only get scaled
                for &x in &subsets {
                    for &y in &subsets {
                        if x != y {
                            self.entries[(r | x) * d + (c | y)] *= keep;
                        }
                    }
                }
            }
        }
    }

    /// `Σ_k (K_k ⊗ I) ρ (K_k ⊗ I)†` where each `K_k` acts on the local index
    /// space described by `offsets` (local index → bit pattern).
    pub fn apply_kraus_local(&mut self, offsets: &[usize], ops: &[DenseOperator]) {
        let d = self.dim();
        let mask = offsets.iter().fold(0, |m, o| m | o);
        let k = offsets.len();
        let rests: Vec<usize> = (0..d).filter(|x| x & mask == 0).collect();
        let mut acc = vec![ZERO; d * d];
        let mut tmp = vec![ZERO; d * d];
        let mut buf = vec![ZERO; k];
        for op in ops {
            // left: tmp = (K ⊗ I) ρ
            for c in 0..d {
                for &r in &rests {
                    for (l, b) in buf.iter_mut().enumerate() {
                        *b = self.entries[(r | offsets[l]) * d + c];
                    }
                    for l in 0..k {
                        let mut s = ZERO;
                        for (m, b) in buf.iter().enumerate() {
                            s += op[(l, m)] * b;
                        }
                        tmp[(r | offsets[l]) * d + c] = s;
                    }
                }
            }
            // right: acc += tmp (K ⊗ I)†
            for row in 0..d {
                for &c in &rests {
                    for (l, b) in buf.iter_mut().enumerate() {
                        *b = tmp[row * d + (c | offsets[l])];
                    }
                    for l in 0..k {
                        let mut s = ZERO;
                        for (m, b) in buf.iter().enumerate() {
                            s += b * op[(l, m)].conj();
                        }
                        acc[row * d + (c | offsets[l])] += s;
                    }
                }
            }
        }
        self.entries = acc;
    }
}

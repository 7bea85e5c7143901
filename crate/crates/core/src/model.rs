//! Transverse-field Ising chain split into its two non-commuting halves,
//! plus the Pauli-string algebra both halves are written in.
//!
//! Energies are measured in units of the transverse field `h`; callers that
//! work with `J/h` simply build the model with `field = 1`.

use std::fmt;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{qubit_bit, DenseOperator, ONE};
use crate::oracle;
use crate::spectral::{FilterSpec, TimeGrid};

/// Largest register accepted by [`build_tfim`] unless the caller raises it.
pub const DEFAULT_MAX_QUBITS: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PauliAxis {
    I,
    X,
    Y,
    Z,
}

impl PauliAxis {
    pub fn symbol(self) -> char {
        match self {
            PauliAxis::I => 'I',
            PauliAxis::X => 'X',
            PauliAxis::Y => 'Y',
            PauliAxis::Z => 'Z',
        }
    }

    fn flips(self) -> bool {
        matches!(self, PauliAxis::X | PauliAxis::Y)
    }

    /// Phase picked up when acting on a basis bit `b`, alongside the flip.
    fn phase(self, b: bool) -> C64 {
        match (self, b) {
            (PauliAxis::I, _) | (PauliAxis::X, _) | (PauliAxis::Z, false) => ONE,
            (PauliAxis::Z, true) => -ONE,
            (PauliAxis::Y, false) => C64::new(0.0, 1.0),
            (PauliAxis::Y, true) => C64::new(0.0, -1.0),
        }
    }
}

/// A real multiple of a tensor product of Pauli matrices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PauliString {
    pub axes: Vec<PauliAxis>,
    pub coefficient: f64,
}

impl PauliString {
    pub fn new(axes: Vec<PauliAxis>, coefficient: f64) -> Self {
        Self { axes, coefficient }
    }

    /// Identity everywhere except the listed `(qubit, axis)` sites.
    pub fn sparse(n_qubits: usize, sites: &[(usize, PauliAxis)], coefficient: f64) -> Self {
        let mut axes = vec![PauliAxis::I; n_qubits];
        for &(q, a) in sites {
            axes[q] = a;
        }
        Self { axes, coefficient }
    }

    /// Parses strings such as `"XZI"`; qubit 0 is the first character.
    pub fn parse(label: &str, coefficient: f64) -> Result<Self> {
        let axes = label
            .chars()
            .map(|ch| match ch.to_ascii_uppercase() {
                'I' | '0' => Ok(PauliAxis::I),
                'X' => Ok(PauliAxis::X),
                'Y' => Ok(PauliAxis::Y),
                'Z' => Ok(PauliAxis::Z),
                other => Err(Error::InvalidArgument(format!("unknown Pauli symbol '{other}'"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { axes, coefficient })
    }

    pub fn n_qubits(&self) -> usize {
        self.axes.len()
    }

    pub fn label(&self) -> String {
        self.axes.iter().map(|a| a.symbol()).collect()
    }

    /// Qubits carrying a non-identity factor.
    pub fn support(&self) -> Vec<usize> {
        self.axes.iter().enumerate().filter(|(_, a)| **a != PauliAxis::I).map(|(q, _)| q).collect()
    }

    /// Dense `2^N x 2^N` realisation.
    ///
    /// Every Pauli string is a signed permutation, so each column has a single
    /// non-zero entry and the build is `O(d)` apart from the allocation.
    pub fn to_dense(&self) -> DenseOperator {
        let n = self.n_qubits();
        let dim = 1usize << n;
        let mut flip = 0usize;
        for (q, a) in self.axes.iter().enumerate() {
            if a.flips() {
                flip |= 1 << qubit_bit(q, n);
            }
        }
        let mut out = DenseOperator::zeros(dim);
        for col in 0..dim {
            let mut amp = C64::new(self.coefficient, 0.0);
            for (q, a) in self.axes.iter().enumerate() {
                let bit = (col >> qubit_bit(q, n)) & 1 == 1;
                amp *= a.phase(bit);
            }
            out[(col ^ flip, col)] = amp;
        }
        out
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:+}*{}", self.coefficient, self.label())
    }
}

fn dense_sum(n_qubits: usize, terms: &[PauliString]) -> DenseOperator {
    let mut acc = DenseOperator::zeros(1 << n_qubits);
    for t in terms {
        let d = t.to_dense();
        for (a, b) in acc.entries_mut().iter_mut().zip(d.entries()) {
            *a += *b;
        }
    }
    acc
}

/// Hamiltonian `H = H1 + H2` with `[H1, H2] != 0` in general.
///
/// For the Ising chain `H1` holds the `−J σ^z σ^z` bonds (open boundary) and
/// `H2` the `−h σ^x` fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianTerms {
    pub n_qubits: usize,
    pub terms_h1: Vec<PauliString>,
    pub terms_h2: Vec<PauliString>,
    pub j_coupling: f64,
    pub field: f64,
}

impl HamiltonianTerms {
    /// Generic two-part constructor. `j_coupling`/`field` are kept only as
    /// labels for the commutator bound and may be zero.
    pub fn from_terms(
        n_qubits: usize,
        terms_h1: Vec<PauliString>,
        terms_h2: Vec<PauliString>,
        j_coupling: f64,
        field: f64,
    ) -> Result<Self> {
        for t in terms_h1.iter().chain(&terms_h2) {
            if t.n_qubits() != n_qubits {
                return Err(Error::InvalidModel(format!(
                    "term {t} has {} sites, register has {n_qubits}",
                    t.n_qubits()
                )));
            }
        }
        Ok(Self { n_qubits, terms_h1, terms_h2, j_coupling, field })
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn dense_h1(&self) -> DenseOperator {
        dense_sum(self.n_qubits, &self.terms_h1)
    }

    pub fn dense_h2(&self) -> DenseOperator {
        dense_sum(self.n_qubits, &self.terms_h2)
    }

    pub fn dense(&self) -> DenseOperator {
        &self.dense_h1() + &self.dense_h2()
    }

    /// Dense `[H1, H2]`.
    pub fn dense_commutator(&self) -> DenseOperator {
        self.dense_h1().commutator(&self.dense_h2())
    }

    /// `J/h`, the only dimensionless parameter of the chain.
    pub fn j_over_h(&self) -> f64 {
        self.j_coupling / self.field
    }
}

/// Open-boundary transverse-field Ising chain.
pub fn build_tfim(n_qubits: usize, j_coupling: f64, field: f64) -> Result<HamiltonianTerms> {
    build_tfim_with_limit(n_qubits, j_coupling, field, DEFAULT_MAX_QUBITS)
}

pub fn build_tfim_with_limit(
    n_qubits: usize,
    j_coupling: f64,
    field: f64,
    max_qubits: usize,
) -> Result<HamiltonianTerms> {
    if n_qubits < 2 {
        return Err(Error::InvalidModel(format!("need at least 2 qubits, got {n_qubits}")));
    }
    if n_qubits > max_qubits {
        return Err(Error::InvalidModel(format!(
            "{n_qubits} qubits exceeds the configured maximum of {max_qubits}"
        )));
    }
    if !(field > 0.0) || !field.is_finite() {
        return Err(Error::InvalidModel(format!("field must be positive, got {field}")));
    }
    if !j_coupling.is_finite() {
        return Err(Error::InvalidModel("coupling must be finite".into()));
    }
    let terms_h1 = (0..n_qubits - 1)
        .map(|j| {
            PauliString::sparse(n_qubits, &[(j, PauliAxis::Z), (j + 1, PauliAxis::Z)], -j_coupling)
        })
        .collect();
    let terms_h2 =
        (0..n_qubits).map(|j| PauliString::sparse(n_qubits, &[(j, PauliAxis::X)], -field)).collect();
    Ok(HamiltonianTerms { n_qubits, terms_h1, terms_h2, j_coupling, field })
}

/// Upper bound `4|J h|(N − 1)` on the spectral norm of `[H1, H2]`.
pub fn commutator_bound(model: &HamiltonianTerms) -> f64 {
    4.0 * (model.j_coupling * model.field).abs() * (model.n_qubits as f64 - 1.0)
}

/// Spectral norm of the dense commutator.
///
/// `[H1, H2]` is anti-Hermitian, so its norm is the largest `|λ|` of the
/// Hermitian matrix `i[H1, H2]`.
pub fn exact_commutator_norm(model: &HamiltonianTerms) -> Result<f64> {
    if model.n_qubits > 10 {
        return Err(Error::InvalidArgument(format!(
            "exact commutator norm limited to 10 qubits, model has {}",
            model.n_qubits
        )));
    }
    let herm = model.dense_commutator().scale(C64::new(0.0, 1.0));
    let eigs = oracle::eigh(&herm)?;
    Ok(eigs.energies.iter().map(|e| e.abs()).fold(0.0, f64::max))
}

/// Trotter depth cutoff `ceil(max_t ||[H1,H2]|| t² F(t) / ε)` over the grid times.
///
/// Uses the analytic commutator bound. Returns 0 for a commuting split; a
/// circuit still needs at least one step, which callers clamp themselves.
pub fn trotter_cutoff(
    model: &HamiltonianTerms,
    tolerance: f64,
    filter: &FilterSpec,
    grid: &TimeGrid,
) -> Result<u64> {
    trotter_cutoff_at_times(commutator_bound(model), tolerance, filter, &grid.times())
}

pub fn trotter_cutoff_at_times(
    commutator_norm: f64,
    tolerance: f64,
    filter: &FilterSpec,
    times: &[f64],
) -> Result<u64> {
    if !(tolerance > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tolerance}")));
    }
    if times.is_empty() {
        return Err(Error::InvalidArgument("empty time grid".into()));
    }
    let worst = times
        .iter()
        .map(|&t| commutator_norm * t * t * filter.time_response(t.abs()) / tolerance)
        .fold(0.0, f64::max);
    Ok(worst.ceil() as u64)
}

/// Global spin flip `X⊗…⊗X`, the Z2 symmetry of the chain.
pub fn spin_flip(n_qubits: usize) -> DenseOperator {
    PauliString::new(vec![PauliAxis::X; n_qubits], 1.0).to_dense()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{embed_single, gates};
    use crate::spectral::FilterKind;

    fn sorted_eigs(h: &DenseOperator) -> Vec<f64> {
        oracle::eigh(h).unwrap().energies
    }

    #[test]
    fn two_site_chain_spectrum() {
        let m = build_tfim(2, 1.0, 1.0).unwrap();
        let e = sorted_eigs(&m.dense());
        let r = 5f64.sqrt();
        for (a, b) in e.iter().zip([-r, -1.0, 1.0, r]) {
            assert!((a - b).abs() < 1e-12, "{e:?}");
        }
    }

    #[test]
    fn decoupled_spins() {
        let m = build_tfim(2, 0.0, 1.0).unwrap();
        let e = sorted_eigs(&m.dense());
        for (a, b) in e.iter().zip([-2.0, 0.0, 0.0, 2.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn term_counts_and_hermiticity() {
        for n in 2..=6 {
            let m = build_tfim(n, 0.7, 1.3).unwrap();
            assert_eq!(m.terms_h1.len(), n - 1);
            assert_eq!(m.terms_h2.len(), n);
            assert!(m.dense().hermiticity_error() <= 1e-12);
            assert!(m.dense_commutator().max_abs() > 0.0);
        }
    }

    #[test]
    fn rejects_bad_models() {
        assert!(matches!(build_tfim(1, 1.0, 1.0), Err(Error::InvalidModel(_))));
        assert!(matches!(build_tfim(3, 1.0, 0.0), Err(Error::InvalidModel(_))));
        assert!(matches!(build_tfim(3, 1.0, -1.0), Err(Error::InvalidModel(_))));
        assert!(matches!(build_tfim(13, 1.0, 1.0), Err(Error::InvalidModel(_))));
        assert!(build_tfim_with_limit(13, 1.0, 1.0, 13).is_ok());
    }

    #[test]
    fn pauli_dense_matches_kronecker_products() {
        let p = PauliString::parse("XYZ", 0.5).unwrap();
        let kron = gates::to_dense(&gates::pauli_x())
            .kron(&gates::to_dense(&gates::pauli_y()))
            .kron(&gates::to_dense(&gates::pauli_z()))
            .scale(C64::new(0.5, 0.0));
        assert!(p.to_dense().max_abs_diff(&kron) < 1e-15);
        let x0 = PauliString::sparse(2, &[(0, PauliAxis::X)], 1.0).to_dense();
        assert!(x0.max_abs_diff(&embed_single(&gates::pauli_x(), 0, 2)) < 1e-15);
    }

    #[test]
    fn commutator_bound_values() {
        let m = build_tfim(5, 0.4, 1.0).unwrap();
        assert!((commutator_bound(&m) - 6.4).abs() < 1e-12);
        let free = build_tfim(2, 0.0, 1.0).unwrap();
        assert_eq!(commutator_bound(&free), 0.0);
        assert!(exact_commutator_norm(&free).unwrap() < 1e-12);
        let m3 = build_tfim(3, 1.0, 1.0).unwrap();
        let exact = exact_commutator_norm(&m3).unwrap();
        assert!(exact > 0.0 && exact <= 8.0 + 1e-12, "{exact}");
    }

    #[test]
    fn cutoff_zero_for_commuting_split() {
        let m = build_tfim(4, 0.0, 1.0).unwrap();
        let f = FilterSpec::new(FilterKind::Lorentzian, 0.3).unwrap();
        let g = TimeGrid::for_filter(&f).unwrap();
        assert_eq!(trotter_cutoff(&m, 0.5, &f, &g).unwrap(), 0);
    }

    #[test]
    fn cutoff_for_five_site_chain() {
        // Frozen from an independent evaluation over the 134-point grid:
        // max_n 6.4 (n dt)^2 exp(-0.3 n dt) / 0.1 = 384.578... at n = 11.
        let m = build_tfim(5, 0.4, 1.0).unwrap();
        let f = FilterSpec::new(FilterKind::Lorentzian, 0.3).unwrap();
        let g = TimeGrid::for_filter(&f).unwrap();
        assert_eq!(trotter_cutoff(&m, 0.1, &f, &g).unwrap(), 385);
    }

    #[test]
    fn wider_filter_lowers_cutoff() {
        let m = build_tfim(5, 0.4, 1.0).unwrap();
        let f = FilterSpec::new(FilterKind::Lorentzian, 0.3).unwrap();
        let g = TimeGrid::for_filter(&f).unwrap();
        let f2 = FilterSpec::new(FilterKind::Lorentzian, 0.6).unwrap();
        assert!(trotter_cutoff(&m, 0.1, &f2, &g).unwrap() < trotter_cutoff(&m, 0.1, &f, &g).unwrap());
        assert!(trotter_cutoff_at_times(1.0, 0.1, &f, &[]).is_err());
        assert!(trotter_cutoff(&m, 0.0, &f, &g).is_err());
    }

    #[test]
    fn spin_flip_symmetry_of_spectrum() {
        let m = build_tfim(4, 0.8, 1.0).unwrap();
        let h = m.dense();
        let p = spin_flip(4);
        let conj = p.matmul(&h).matmul(&p);
        assert!(conj.max_abs_diff(&h) < 1e-12);
        let a = sorted_eigs(&h);
        let b = sorted_eigs(&conj);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-10);
        }
    }
}

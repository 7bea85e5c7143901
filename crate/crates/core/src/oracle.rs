//! Exact diagonalisation and the ground-truth quantities derived from it.
//!
//! The eigensolver reduces a complex Hermitian matrix to real symmetric
//! tridiagonal form with Householder reflections, then runs implicit QL with
//! Wilkinson-style shifts. `O(d³)`, which is fine for `d ≤ 1024`.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{DenseOperator, ONE, ZERO};
use crate::sim::trial_rotation_state;

/// Inputs whose Hermiticity error exceeds this are rejected by [`eigh`].
pub const HERMITICITY_TOLERANCE: f64 = 1e-9;

/// Gaps below this are reported as exactly degenerate.
pub const DEGENERACY_TOLERANCE: f64 = 1e-9;

/// Ascending eigenvalues and matching eigenvectors.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EigenSystem {
    pub energies: Vec<f64>,
    /// Columns are eigenvectors.
    pub vectors: DenseOperator,
}

impl EigenSystem {
    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    pub fn vector(&self, u: usize) -> Vec<C64> {
        (0..self.dim()).map(|r| self.vectors[(r, u)]).collect()
    }

    /// `V diag(f(E_u)) V†`.
    pub fn function_of(&self, f: impl Fn(f64) -> C64) -> DenseOperator {
        let d = self.dim();
        let phases: Vec<C64> = self.energies.iter().map(|&e| f(e)).collect();
        let v = &self.vectors;
        let mut out = DenseOperator::zeros(d);
        for r in 0..d {
            for c in 0..d {
                let mut acc = ZERO;
                for u in 0..d {
                    acc += v[(r, u)] * phases[u] * v[(c, u)].conj();
                }
                out[(r, c)] = acc;
            }
        }
        out
    }

    /// Projects `psi` onto the eigenbasis: `c_u = ⟨u|ψ⟩`.
    pub fn expand(&self, psi: &[C64]) -> Vec<C64> {
        let d = self.dim();
        (0..d).map(|u| (0..d).map(|r| self.vectors[(r, u)].conj() * psi[r]).sum()).collect()
    }

    /// `Σ_u c_u |u⟩`.
    pub fn synthesize(&self, coeffs: &[C64]) -> Vec<C64> {
        let d = self.dim();
        (0..d).map(|r| (0..d).map(|u| self.vectors[(r, u)] * coeffs[u]).sum()).collect()
    }
}

/// Gap above the ground state together with a degeneracy flag.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    pub value: f64,
    pub degenerate: bool,
}

/// Full spectrum of a Hermitian matrix.
pub fn eigh(h: &DenseOperator) -> Result<EigenSystem> {
    let herm_err = h.hermiticity_error();
    let scale = h.max_abs().max(1.0);
    if herm_err > HERMITICITY_TOLERANCE * scale {
        return Err(Error::NonHermitian(herm_err));
    }
    let n = h.dim();
    if n == 0 {
        return Ok(EigenSystem { energies: vec![], vectors: DenseOperator::zeros(0) });
    }

    let (diag, offdiag, q) = tridiagonalize(h);
    // Rotate the complex off-diagonal onto the non-negative real axis with a
    // diagonal unitary, so QL can work in real arithmetic.
    let mut phase = vec![ONE; n];
    let mut e = vec![0.0; n];
    for k in 0..n.saturating_sub(1) {
        let z = offdiag[k];
        let r = z.norm();
        e[k] = r;
        phase[k + 1] = if r > 0.0 { phase[k] * (z / r) } else { phase[k] };
    }
    let mut d = diag;
    // Rows of `zt` are eigenvectors of the real tridiagonal matrix.
    let mut zt = vec![0.0; n * n];
    for i in 0..n {
        zt[i * n + i] = 1.0;
    }
    tql_implicit(&mut d, &mut e, &mut zt, n)?;

    // Eigenvectors of h: Q · diag(phase) · z.
    let mut qp = q;
    for r in 0..n {
        for c in 0..n {
            qp[(r, c)] *= phase[c];
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    let energies = order.iter().map(|&i| d[i]).collect();
    let mut vectors = DenseOperator::zeros(n);
    for (col, &src) in order.iter().enumerate() {
        let zrow = &zt[src * n..(src + 1) * n];
        for r in 0..n {
            let qrow = qp.row(r);
            let mut acc = ZERO;
            for k in 0..n {
                acc += qrow[k] * zrow[k];
            }
            vectors[(r, col)] = acc;
        }
    }
    Ok(EigenSystem { energies, vectors })
}

/// Householder reduction `Q† A Q = T` with `T` Hermitian tridiagonal.
/// Returns the real diagonal, the complex sub-diagonal `T[k+1, k]`, and `Q`.
fn tridiagonalize(h: &DenseOperator) -> (Vec<f64>, Vec<C64>, DenseOperator) {
    let n = h.dim();
    let mut a = h.clone();
    let mut q = DenseOperator::identity(n);
    let mut v = vec![ZERO; n];
    let mut p = vec![ZERO; n];

    for k in 0..n.saturating_sub(2) {
        let lo = k + 1;
        let norm_x = (lo..n).map(|r| a[(r, k)].norm_sqr()).sum::<f64>().sqrt();
        if norm_x == 0.0 {
            continue;
        }
        let x0 = a[(lo, k)];
        let unit = if x0.norm() > 0.0 { x0 / x0.norm() } else { ONE };
        let alpha = -unit * norm_x;
        for r in 0..n {
            v[r] = ZERO;
        }
        v[lo] = x0 - alpha;
        for r in lo + 1..n {
            v[r] = a[(r, k)];
        }
        let vnorm = (lo..n).map(|r| v[r].norm_sqr()).sum::<f64>().sqrt();
        if vnorm == 0.0 {
            continue;
        }
        for r in lo..n {
            v[r] /= vnorm;
        }

        // A' = A − 2(v w† + w v†), w = Av − (v†Av) v, restricted to the
        // trailing block; column/row k are set explicitly.
        for r in lo..n {
            let row = a.row(r);
            let mut acc = ZERO;
            for c in lo..n {
                acc += row[c] * v[c];
            }
            p[r] = acc;
        }
        let kappa: C64 = (lo..n).map(|r| v[r].conj() * p[r]).sum();
        for r in lo..n {
            p[r] -= kappa * v[r];
        }
        for r in lo..n {
            for c in lo..n {
                let delta = v[r] * p[c].conj() + p[r] * v[c].conj();
                a[(r, c)] -= delta * 2.0;
            }
        }
        a[(lo, k)] = alpha;
        a[(k, lo)] = alpha.conj();
        for r in lo + 1..n {
            a[(r, k)] = ZERO;
            a[(k, r)] = ZERO;
        }

        // Q ← Q (I − 2 v v†)
        for r in 0..n {
            let row = q.row(r);
            let mut qv = ZERO;
            for c in lo..n {
                qv += row[c] * v[c];
            }
            let qv2 = qv * 2.0;
            for c in lo..n {
                let vc = v[c].conj();
                q[(r, c)] -= qv2 * vc;
            }
        }
    }

    let diag = (0..n).map(|i| a[(i, i)].re).collect();
    let off = (0..n.saturating_sub(1)).map(|k| a[(k + 1, k)]).collect();
    (diag, off, q)
}

/// Implicit QL on a real symmetric tridiagonal matrix.
///
/// `e[i]` couples `i` and `i + 1`; `zt` rows are rotated alongside so they
/// end up holding the eigenvectors.
fn tql_implicit(d: &mut [f64], e: &mut [f64], zt: &mut [f64], n: usize) -> Result<()> {
    if n <= 1 {
        return Ok(());
    }
    e[n - 1] = 0.0;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m < n - 1 {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 64 {
                return Err(Error::NoConvergence(format!("QL stalled at index {l}")));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0f64, 1.0f64, 0.0f64);
            let mut i = m;
            let mut deflated = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                let (row_i, row_i1) = {
                    let (head, tail) = zt.split_at_mut((i + 1) * n);
                    (&mut head[i * n..(i + 1) * n], &mut tail[..n])
                };
                for (zi, zi1) in row_i.iter_mut().zip(row_i1.iter_mut()) {
                    let fz = *zi1;
                    *zi1 = s * *zi + c * fz;
                    *zi = c * *zi - s * fz;
                }
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

/// `E[index] − E[0]`; gaps under [`DEGENERACY_TOLERANCE`] collapse to 0.
pub fn exact_gap(eigs: &EigenSystem, index: usize) -> Result<Gap> {
    if eigs.dim() < 2 {
        return Err(Error::InvalidArgument("need at least two levels for a gap".into()));
    }
    if index == 0 || index >= eigs.dim() {
        return Err(Error::InvalidArgument(format!(
            "gap index {index} out of range 1..{}",
            eigs.dim()
        )));
    }
    let raw = eigs.energies[index] - eigs.energies[0];
    if raw.abs() < DEGENERACY_TOLERANCE {
        Ok(Gap { value: 0.0, degenerate: true })
    } else {
        Ok(Gap { value: raw, degenerate: false })
    }
}

/// `c_u = ⟨u| U_I(θ) |0…0⟩`.
pub fn trial_overlaps(eigs: &EigenSystem, theta: f64) -> Result<Vec<C64>> {
    let n = eigs.dim();
    if !n.is_power_of_two() {
        return Err(Error::InvalidArgument(format!("dimension {n} is not a power of two")));
    }
    let psi = trial_rotation_state(theta, n.trailing_zeros() as usize);
    Ok(eigs.expand(&psi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_tfim;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_hermitian(d: usize, rng: &mut impl Rng) -> DenseOperator {
        let mut h = DenseOperator::zeros(d);
        for r in 0..d {
            h[(r, r)] = C64::new(rng.gen_range(-1.0..1.0), 0.0);
            for c in r + 1..d {
                let z = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                h[(r, c)] = z;
                h[(c, r)] = z.conj();
            }
        }
        h
    }

    fn check_decomposition(h: &DenseOperator, eigs: &EigenSystem) {
        let d = h.dim();
        let norm = h.frobenius_norm().max(1.0);
        for u in 0..d {
            let v = eigs.vector(u);
            let hv = h.apply(&v);
            let resid = hv.iter().zip(&v).map(|(a, b)| (a - b * eigs.energies[u]).norm()).fold(0.0, f64::max);
            assert!(resid <= 1e-9 * norm, "residual {resid}");
        }
        let gram = eigs.vectors.adjoint().matmul(&eigs.vectors);
        assert!(gram.max_abs_diff(&DenseOperator::identity(d)) < 1e-10);
        assert!(eigs.energies.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn diagonal_input() {
        let diag = [3.0, -1.0, 2.0, 0.5];
        let h = DenseOperator::from_diagonal(&diag.map(|x| C64::new(x, 0.0)));
        let e = eigh(&h).unwrap();
        assert_eq!(e.energies, vec![-1.0, 0.5, 2.0, 3.0]);
        // vectors are a permutation of the standard basis
        for u in 0..4 {
            let v = e.vector(u);
            let ones = v.iter().filter(|z| (z.norm() - 1.0).abs() < 1e-12).count();
            assert_eq!(ones, 1);
        }
    }

    #[test]
    fn two_site_chain_energies_and_gap() {
        let m = build_tfim(2, 0.4, 1.0).unwrap();
        let e = eigh(&m.dense()).unwrap();
        let r = 4.16f64.sqrt();
        for (a, b) in e.energies.iter().zip([-r, -0.4, 0.4, r]) {
            assert!((a - b).abs() < 1e-12);
        }
        let gap = exact_gap(&e, 1).unwrap();
        assert!((gap.value - (r - 0.4)).abs() < 1e-12);
        assert!((gap.value - 1.639608).abs() < 1e-6);
    }

    #[test]
    fn decoupled_gap_is_twice_the_field() {
        for n in 2..=5 {
            let e = eigh(&build_tfim(n, 0.0, 1.0).unwrap().dense()).unwrap();
            assert!((exact_gap(&e, 1).unwrap().value - 2.0).abs() < 1e-10);
        }
    }

    #[test]
    fn classical_ising_is_degenerate() {
        // h = 0 is not a valid TFIM, so build the bonds directly.
        let m = build_tfim(3, 1.0, 1.0).unwrap();
        let e = eigh(&m.dense_h1()).unwrap();
        let g = exact_gap(&e, 1).unwrap();
        assert!(g.degenerate);
        assert_eq!(g.value, 0.0);
        assert!(exact_gap(&e, 8).is_err());
        assert!(exact_gap(&e, 0).is_err());
    }

    #[test]
    fn rejects_non_hermitian() {
        let mut h = DenseOperator::identity(2);
        h[(0, 1)] = C64::new(1.0, 0.0);
        assert!(matches!(eigh(&h), Err(Error::NonHermitian(_))));
    }

    #[test]
    fn random_hermitian_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for d in [1, 2, 3, 16, 33, 64] {
            let h = random_hermitian(d, &mut rng);
            let e = eigh(&h).unwrap();
            check_decomposition(&h, &e);
            let rebuilt = e.function_of(|x| C64::new(x, 0.0));
            assert!(rebuilt.max_abs_diff(&h) < 1e-9, "d = {d}");
        }
    }

    #[test]
    fn tfim_decomposition_invariants() {
        let m = build_tfim(6, 0.5, 1.0).unwrap();
        let h = m.dense();
        check_decomposition(&h, &eigh(&h).unwrap());
    }

    #[test]
    fn overlaps_are_normalised() {
        let e = eigh(&build_tfim(4, 0.4, 1.0).unwrap().dense()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let th = rng.gen_range(-3.0..3.0);
            let c = trial_overlaps(&e, th).unwrap();
            let s: f64 = c.iter().map(|z| z.norm_sqr()).sum();
            assert!((s - 1.0).abs() < 1e-10);
        }
        // theta = 0 expands |0000>
        let c0 = trial_overlaps(&e, 0.0).unwrap();
        let mut basis = vec![ZERO; 16];
        basis[0] = ONE;
        let back = e.synthesize(&c0);
        for (a, b) in back.iter().zip(&basis) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn first_excited_state_is_reachable() {
        let e = eigh(&build_tfim(5, 0.4, 1.0).unwrap().dense()).unwrap();
        for k in 1..16 {
            let th = k as f64 * std::f64::consts::FRAC_PI_2 / 16.0;
            let c = trial_overlaps(&e, th).unwrap();
            assert!(c[1].norm_sqr() > 0.0, "theta {th}");
        }
    }
}

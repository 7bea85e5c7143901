//! Asymmetric least squares baseline estimation.
//!
//! Minimises `Σ w_m (A_m − B_m)² + λ Σ (Δ² B)_m²` by iterating the linear
//! system `(W + λ DᵀD) B = W A` and the asymmetric weight update. `D` is the
//! `(L−2) x L` second-difference operator, so the system is pentadiagonal.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::TargetWindow;
use crate::spectral::Spectrum;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlsParams {
    pub lambda: f64,
    pub chi: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_initial_weight")]
    pub initial_weight: f64,
}

fn default_max_iters() -> usize {
    50
}

fn default_tol() -> f64 {
    1e-8
}

fn default_initial_weight() -> f64 {
    0.5
}

impl Default for AlsParams {
    fn default() -> Self {
        Self { lambda: 1.0, chi: 1e-2, max_iters: 50, tol: 1e-8, initial_weight: 0.5 }
    }
}

impl AlsParams {
    pub fn new(lambda: f64, chi: f64) -> Self {
        Self { lambda, chi, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidArgument(format!("ALS lambda must be positive, got {}", self.lambda)));
        }
        if !(self.chi > 0.0 && self.chi < 0.5) {
            return Err(Error::InvalidArgument(format!("ALS chi must lie in (0, 0.5), got {}", self.chi)));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("ALS needs at least one iteration".into()));
        }
        if !(self.initial_weight > 0.0) {
            return Err(Error::InvalidArgument("initial ALS weight must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub baseline: Vec<f64>,
    pub corrected: Vec<f64>,
    pub iterations_used: usize,
    pub converged: bool,
    /// Largest `‖(W + λDᵀD)B − WA‖_∞ / ‖WA‖_∞` seen over the iterations.
    pub max_relative_residual: f64,
}

/// Symmetric pentadiagonal matrix stored by its three distinct diagonals.
#[derive(Clone, Debug, PartialEq)]
pub struct Pentadiagonal {
    pub main: Vec<f64>,
    /// `a[i][i+1]`, length `n − 1`.
    pub upper1: Vec<f64>,
    /// `a[i][i+2]`, length `n − 2`.
    pub upper2: Vec<f64>,
}

impl Pentadiagonal {
    /// `DᵀD` for the second-difference operator on `n ≥ 3` points.
    pub fn second_difference_gram(n: usize) -> Self {
        let mut m = Self { main: vec![0.0; n], upper1: vec![0.0; n - 1], upper2: vec![0.0; n - 2] };
        let row = [1.0, -2.0, 1.0];
        for k in 0..n - 2 {
            for a in 0..3 {
                m.main[k + a] += row[a] * row[a];
                for b in a + 1..3 {
                    let v = row[a] * row[b];
                    if b - a == 1 {
                        m.upper1[k + a] += v;
                    } else {
                        m.upper2[k + a] += v;
                    }
                }
            }
        }
        m
    }

    pub fn len(&self) -> usize {
        self.main.len()
    }

    pub fn is_empty(&self) -> bool {
        self.main.is_empty()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut s = self.main[i] * x[i];
                if i + 1 < n {
                    s += self.upper1[i] * x[i + 1];
                }
                if i + 2 < n {
                    s += self.upper2[i] * x[i + 2];
                }
                if i >= 1 {
                    s += self.upper1[i - 1] * x[i - 1];
                }
                if i >= 2 {
                    s += self.upper2[i - 2] * x[i - 2];
                }
                s
            })
            .collect()
    }

    /// Banded Cholesky solve; fails if the matrix is not positive definite.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.len();
        if rhs.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: rhs.len() });
        }
        // l0: diagonal of L, l1: L[i][i-1], l2: L[i][i-2]
        let mut l0 = vec![0.0; n];
        let mut l1 = vec![0.0; n];
        let mut l2 = vec![0.0; n];
        for i in 0..n {
            if i >= 2 {
                l2[i] = self.upper2[i - 2] / l0[i - 2];
            }
            if i >= 1 {
                let mut s = self.upper1[i - 1];
                if i >= 2 {
                    s -= l2[i] * l1[i - 1];
                }
                l1[i] = s / l0[i - 1];
            }
            let d = self.main[i] - l1[i] * l1[i] - l2[i] * l2[i];
            if !(d > 0.0) {
                return Err(Error::Consistency(format!("pentadiagonal system not positive definite at row {i}")));
            }
            l0[i] = d.sqrt();
        }
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut s = rhs[i];
            if i >= 1 {
                s -= l1[i] * y[i - 1];
            }
            if i >= 2 {
                s -= l2[i] * y[i - 2];
            }
            y[i] = s / l0[i];
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = y[i];
            if i + 1 < n {
                s -= l1[i + 1] * x[i + 1];
            }
            if i + 2 < n {
                s -= l2[i + 2] * x[i + 2];
            }
            x[i] = s / l0[i];
        }
        Ok(x)
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Iterative asymmetric least squares baseline of `spectrum`.
pub fn als_baseline(spectrum: &[f64], params: &AlsParams) -> Result<BaselineResult> {
    params.validate()?;
    let n = spectrum.len();
    if n < 4 {
        return Err(Error::InvalidArgument(format!("ALS needs at least 4 points, got {n}")));
    }
    let gram = Pentadiagonal::second_difference_gram(n);
    let mut weights = vec![params.initial_weight; n];
    let mut previous: Option<Vec<f64>> = None;
    let mut worst_residual = 0.0f64;
    let mut baseline = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=params.max_iters {
        iterations = it;
        let mut system = gram.clone();
        for (i, m) in system.main.iter_mut().enumerate() {
            *m = weights[i] + params.lambda * *m;
        }
        for v in system.upper1.iter_mut().chain(system.upper2.iter_mut()) {
            *v *= params.lambda;
        }
        let rhs: Vec<f64> = weights.iter().zip(spectrum).map(|(w, a)| w * a).collect();
        baseline = system.solve(&rhs)?;
        let lhs = system.matvec(&baseline);
        let resid = max_abs(&lhs.iter().zip(&rhs).map(|(a, b)| a - b).collect::<Vec<_>>());
        let scale = max_abs(&rhs);
        worst_residual = worst_residual.max(if scale > 0.0 { resid / scale } else { resid });

        let next: Vec<f64> = spectrum
            .iter()
            .zip(&baseline)
            .map(|(a, b)| if a > b { params.chi } else { 1.0 - params.chi })
            .collect();
        let settled = previous
            .as_ref()
            .is_some_and(|p| p.iter().zip(&baseline).all(|(x, y)| (x - y).abs() < params.tol));
        if next == weights || settled {
            converged = true;
            break;
        }
        weights = next;
        previous = Some(baseline.clone());
    }
    let corrected = spectrum.iter().zip(&baseline).map(|(a, b)| a - b).collect();
    Ok(BaselineResult {
        baseline,
        corrected,
        iterations_used: iterations,
        converged,
        max_relative_residual: worst_residual,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub chi: f64,
    pub threshold: f64,
    /// Frequencies of window local maxima above the threshold.
    pub peaks: Vec<f64>,
    pub converged: bool,
}

/// ALS over a `(λ, χ)` grid, reporting window peaks above `mean + k·std` of
/// the corrected window.
pub fn operating_range_sweep(
    spectrum: &Spectrum,
    lambdas: &[f64],
    chis: &[f64],
    window: &TargetWindow,
    threshold_k: f64,
) -> Result<Vec<SweepRow>> {
    if lambdas.is_empty() || chis.is_empty() {
        return Err(Error::InvalidArgument("sweep lists must be nonempty".into()));
    }
    let grid = spectrum.grid;
    let bins: Vec<usize> = (0..grid.len()).filter(|&m| window.contains(grid.signed_omega(m))).collect();
    let mut rows = Vec::with_capacity(lambdas.len() * chis.len());
    for &lambda in lambdas {
        for &chi in chis {
            let res = als_baseline(&spectrum.values, &AlsParams::new(lambda, chi))?;
            let vals: Vec<f64> = bins.iter().map(|&m| res.corrected[m]).collect();
            let (mean, std) = mean_std(&vals);
            let threshold = mean + threshold_k * std;
            let c = &res.corrected;
            let peaks = bins
                .iter()
                .copied()
                .filter(|&m| m >= 1 && m + 1 < c.len() && c[m - 1] < c[m] && c[m] >= c[m + 1] && c[m] > threshold)
                .map(|m| grid.signed_omega(m))
                .collect();
            rows.push(SweepRow { lambda, chi, threshold, peaks, converged: res.converged });
        }
    }
    Ok(rows)
}

pub fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

//! Circuit construction and simulation of the return probability.
//!
//! A circuit is `[U_I(θ), (X layer, ZZ layer) × M, U_I(θ)†]`. Without noise
//! channels it runs as a statevector; otherwise the density matrix is
//! evolved with per-qubit gate and noise maps fused where they commute.

mod program;
mod state;

use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{gates, DenseOperator};
use crate::model::HamiltonianTerms;
use crate::noise::NoiseSpec;
use crate::oracle::EigenSystem;
use crate::spectral::{Branch, PropagatorSample, Shots, TimeGrid, TimeSeries};

pub use program::{Backend, Program};
pub use state::{
    superop_compose, superop_depolarizing, superop_from_kraus, superop_from_unitary, superop_identity,
    DensityMatrix, StateVector, Superop1,
};

/// Tolerance for the `P(t) = P(−t)` check on noiseless exact series.
pub const TIME_SYMMETRY_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LayerKind {
    TrialRotation,
    TrialRotationInverse,
    TrotterZZ,
    TrotterX,
}

/// One unitary layer. Angles are the arguments of `exp(−i φ σ / 2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Layer {
    /// `⊗ R^y(θ)`
    TrialRotation(f64),
    /// `⊗ R^y(−θ)`
    TrialRotationInverse(f64),
    /// `Π_j R^zz_{j,j+1}(φ)`, open chain
    TrotterZZ(f64),
    /// `⊗ R^x(φ)`
    TrotterX(f64),
}

impl Layer {
    pub fn kind(&self) -> LayerKind {
        match self {
            Layer::TrialRotation(_) => LayerKind::TrialRotation,
            Layer::TrialRotationInverse(_) => LayerKind::TrialRotationInverse,
            Layer::TrotterZZ(_) => LayerKind::TrotterZZ,
            Layer::TrotterX(_) => LayerKind::TrotterX,
        }
    }

    /// The per-qubit 2x2 factor for product layers.
    pub fn single_qubit_gate(&self) -> Option<gates::Mat2> {
        match *self {
            Layer::TrialRotation(theta) => Some(gates::ry(theta)),
            Layer::TrialRotationInverse(theta) => Some(gates::ry(-theta)),
            Layer::TrotterX(phi) => Some(gates::rx(phi)),
            Layer::TrotterZZ(_) => None,
        }
    }

    pub fn dense(&self, n_qubits: usize) -> DenseOperator {
        match self.single_qubit_gate() {
            Some(g) => {
                let g = gates::to_dense(&g);
                let mut out = DenseOperator::identity(1);
                for _ in 0..n_qubits {
                    out = out.kron(&g);
                }
                out
            }
            None => {
                let Layer::TrotterZZ(phi) = *self else { unreachable!() };
                DenseOperator::from_diagonal(&zz_phases(n_qubits, phi))
            }
        }
    }
}

/// `Σ_j z_j z_{j+1}` for every basis index (`z = +1` for bit 0).
pub fn zz_sums(n_qubits: usize) -> Vec<i32> {
    let d = 1usize << n_qubits;
    (0..d)
        .map(|x| {
            (0..n_qubits.saturating_sub(1))
                .map(|b| if ((x >> b) ^ (x >> (b + 1))) & 1 == 0 { 1 } else { -1 })
                .sum()
        })
        .collect()
}

/// Diagonal of `Π_j exp(−i φ/2 Z_j Z_{j+1})`.
pub fn zz_phases(n_qubits: usize, phi: f64) -> Vec<C64> {
    zz_sums(n_qubits).into_iter().map(|s| C64::from_polar(1.0, -0.5 * phi * s as f64)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircuitLayers {
    pub n_qubits: usize,
    pub layers: Vec<Layer>,
    /// Branch sign and time index of the sample this circuit produces.
    pub sign: i8,
    pub time_index: usize,
}

impl CircuitLayers {
    pub fn new(n_qubits: usize, layers: Vec<Layer>) -> Self {
        Self { n_qubits, layers, sign: 1, time_index: 0 }
    }

    pub fn at_sample(mut self, sign: i8, time_index: usize) -> Self {
        self.sign = sign;
        self.time_index = time_index;
        self
    }

    /// Number of layers, i.e. noise insertion points under per-layer placement.
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Full product, last layer leftmost.
    pub fn unitary(&self) -> DenseOperator {
        let d = 1usize << self.n_qubits;
        let mut u = DenseOperator::identity(d);
        for layer in &self.layers {
            u = layer.dense(self.n_qubits).matmul(&u);
        }
        u
    }
}

/// `⊗_q R^y(θ)`.
pub fn trial_rotation(theta: f64, n_qubits: usize) -> DenseOperator {
    Layer::TrialRotation(theta).dense(n_qubits)
}

/// `U_I(θ)|0…0⟩`, built as a product state.
pub fn trial_rotation_state(theta: f64, n_qubits: usize) -> Vec<C64> {
    let (s, c) = (theta / 2.0).sin_cos();
    (0..1usize << n_qubits)
        .map(|x| {
            let ones = x.count_ones() as i32;
            C64::new(c.powi(n_qubits as i32 - ones) * s.powi(ones), 0.0)
        })
        .collect()
}

fn check_steps(m_steps: usize) -> Result<()> {
    if m_steps < 1 {
        return Err(Error::InvalidArgument("Trotter depth must be at least 1".into()));
    }
    Ok(())
}

fn trotter_layers(model: &HamiltonianTerms, t: f64, m_steps: usize) -> impl Iterator<Item = Layer> {
    let m = m_steps as f64;
    let x = Layer::TrotterX(-2.0 * model.field * t / m);
    let zz = Layer::TrotterZZ(-2.0 * model.j_coupling * t / m);
    (0..m_steps).flat_map(move |_| [x, zz])
}

/// `[Π R^zz(−2Jt/M) Π R^x(−2ht/M)]^M` as a dense matrix.
pub fn trotter_unitary(model: &HamiltonianTerms, t: f64, m_steps: usize) -> Result<DenseOperator> {
    check_steps(m_steps)?;
    Ok(CircuitLayers::new(model.n_qubits, trotter_layers(model, t, m_steps).collect()).unitary())
}

/// `e^{−iHt}` from the eigendecomposition.
pub fn exact_propagator(model: &HamiltonianTerms, t: f64) -> Result<DenseOperator> {
    let eigs = crate::oracle::eigh(&model.dense())?;
    Ok(exact_propagator_from(&eigs, t))
}

pub fn exact_propagator_from(eigs: &EigenSystem, t: f64) -> DenseOperator {
    eigs.function_of(|e| C64::from_polar(1.0, -e * t))
}

/// `[U_I(θ), (X, ZZ) × M, U_I(θ)†]`, `D = 2M + 2`.
pub fn build_qge_circuit(model: &HamiltonianTerms, theta: f64, t: f64, m_steps: usize) -> Result<CircuitLayers> {
    build_qge_circuit_with_spam(model, theta, theta, t, m_steps)
}

/// Preparation and un-preparation with different angles.
pub fn build_qge_circuit_with_spam(
    model: &HamiltonianTerms,
    theta_prep: f64,
    theta_meas: f64,
    t: f64,
    m_steps: usize,
) -> Result<CircuitLayers> {
    check_steps(m_steps)?;
    let mut layers = Vec::with_capacity(2 * m_steps + 2);
    layers.push(Layer::TrialRotation(theta_prep));
    layers.extend(trotter_layers(model, t, m_steps));
    layers.push(Layer::TrialRotationInverse(theta_meas));
    Ok(CircuitLayers::new(model.n_qubits, layers))
}

/// Stream id of sample `(s, n)` under a root seed.
pub fn sample_stream(sign: i8, time_index: usize) -> u64 {
    ((time_index as u64) << 1) | u64::from(sign < 0)
}

/// Exact probability to a sample; binomial draw when `shots` is finite.
pub fn sample_probability(p: f64, shots: Shots, seed: u64, sign: i8, time_index: usize) -> Result<f64> {
    match shots {
        None => Ok(p),
        Some(0) => Err(Error::InvalidArgument("shot count must be at least 1".into())),
        Some(k) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(sample_stream(sign, time_index));
            let dist = Binomial::new(k, p).map_err(|e| Error::InvalidArgument(e.to_string()))?;
            Ok(dist.sample(&mut rng) as f64 / k as f64)
        }
    }
}

fn clamp_probability(p: f64) -> Result<f64> {
    if !p.is_finite() || !(-1e-9..=1.0 + 1e-9).contains(&p) {
        return Err(Error::Consistency(format!("return probability {p} outside [0, 1]")));
    }
    Ok(p.clamp(0.0, 1.0))
}

/// Exact `⟨0…0|ρ_out|0…0⟩` (after readout confusion) for one circuit.
pub fn return_probability(circuit: &CircuitLayers, noise: Option<&NoiseSpec>, backend: Backend) -> Result<f64> {
    let program = Program::compile(circuit, noise, backend)?;
    let populations = program.run();
    let p = match noise.and_then(|n| n.readout.as_ref()) {
        Some(r) => r.all_zero_probability(&populations)?,
        None => populations[0],
    };
    clamp_probability(p)
}

/// One return-probability sample. Deterministic in `(circuit, noise, shots, seed)`.
pub fn propagator_value(
    circuit: &CircuitLayers,
    noise: Option<&NoiseSpec>,
    shots: Shots,
    rng_seed: u64,
) -> Result<PropagatorSample> {
    let p = return_probability(circuit, noise, Backend::Auto)?;
    let value = sample_probability(p, shots, rng_seed, circuit.sign, circuit.time_index)?;
    Ok(PropagatorSample { time_index: circuit.time_index, sign: circuit.sign, value, shots })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Evolution {
    Trotter { m_steps: usize },
    Exact,
}

/// Everything needed to fill a two-branch time series.
#[derive(Clone, Debug)]
pub struct SeriesRequest<'a> {
    pub model: &'a HamiltonianTerms,
    pub theta: f64,
    pub evolution: Evolution,
    pub grid: TimeGrid,
    pub noise: Option<&'a NoiseSpec>,
    pub shots: Shots,
    pub seed: u64,
    /// Reuse `P(t)` for `P(−t)` when every channel is real.
    pub mirror: bool,
    pub backend: Backend,
    /// Needed for exact evolution; computed on demand when absent.
    pub eigs: Option<&'a EigenSystem>,
}

impl<'a> SeriesRequest<'a> {
    pub fn new(model: &'a HamiltonianTerms, theta: f64, evolution: Evolution, grid: TimeGrid) -> Self {
        Self {
            model,
            theta,
            evolution,
            grid,
            noise: None,
            shots: None,
            seed: 0,
            mirror: false,
            backend: Backend::Auto,
            eigs: None,
        }
    }
}

struct ExactEvolver {
    eigs: EigenSystem,
    c_prep: Vec<C64>,
    c_meas: Vec<C64>,
}

impl ExactEvolver {
    fn new(eigs: EigenSystem, n_qubits: usize, theta_prep: f64, theta_meas: f64) -> Self {
        let c_prep = eigs.expand(&trial_rotation_state(theta_prep, n_qubits));
        let c_meas = eigs.expand(&trial_rotation_state(theta_meas, n_qubits));
        Self { eigs, c_prep, c_meas }
    }

    /// Populations of `U_I(θ'')† e^{−iHt} U_I(θ')|0…0⟩`.
    fn populations(&self, n_qubits: usize, theta_meas: f64, t: f64) -> Vec<f64> {
        let coeffs: Vec<C64> =
            self.c_prep.iter().zip(&self.eigs.energies).map(|(c, &e)| c * C64::from_polar(1.0, -e * t)).collect();
        let mut sv = StateVector::from_amplitudes(self.eigs.synthesize(&coeffs)).expect("unitary evolution");
        let inv = gates::ry(-theta_meas);
        for q in 0..n_qubits {
            sv.apply_single(crate::linalg::qubit_bit(q, n_qubits), &inv);
        }
        sv.probabilities()
    }

    fn amplitude(&self, t: f64) -> C64 {
        self.c_meas
            .iter()
            .zip(&self.c_prep)
            .zip(&self.eigs.energies)
            .map(|((m, p), &e)| m.conj() * p * C64::from_polar(1.0, -e * t))
            .sum()
    }
}

/// Fills both branches of the grid; the `(s, n)` loop runs in parallel.
pub fn sample_series(req: &SeriesRequest<'_>) -> Result<TimeSeries> {
    let n_qubits = req.model.n_qubits;
    let (theta_prep, theta_meas) = match req.noise.and_then(|n| n.spam) {
        Some(s) => crate::noise::inject_spam(req.theta, s.prep_offset, s.meas_offset),
        None => (req.theta, req.theta),
    };
    let has_channels = req.noise.is_some_and(|n| !n.entries.is_empty());
    let readout = req.noise.and_then(|n| n.readout.as_ref());
    let mirror = req.mirror && req.noise.map_or(true, |n| n.is_real());

    let exact = match req.evolution {
        Evolution::Exact => {
            if has_channels {
                return Err(Error::Config("noise channels need Trotter circuits, not exact evolution".into()));
            }
            let eigs = match req.eigs {
                Some(e) => e.clone(),
                None => crate::oracle::eigh(&req.model.dense())?,
            };
            Some(ExactEvolver::new(eigs, n_qubits, theta_prep, theta_meas))
        }
        Evolution::Trotter { m_steps } => {
            check_steps(m_steps)?;
            None
        }
    };
    // validate placement once up front
    if let (Evolution::Trotter { m_steps }, Some(noise)) = (req.evolution, req.noise) {
        let probe = build_qge_circuit_with_spam(req.model, theta_prep, theta_meas, 0.0, m_steps)?;
        noise.validate(&probe)?;
    }

    let exact_p = |sign: i8, n: usize| -> Result<f64> {
        let t = sign as f64 * req.grid.time(n);
        match (&exact, req.evolution) {
            (Some(ev), _) => clamp_probability(match readout {
                Some(r) => r.all_zero_probability(&ev.populations(n_qubits, theta_meas, t))?,
                None => ev.amplitude(t).norm_sqr(),
            }),
            (None, Evolution::Trotter { m_steps }) => {
                let circuit = build_qge_circuit_with_spam(req.model, theta_prep, theta_meas, t, m_steps)?
                    .at_sample(sign, n);
                return_probability(&circuit, req.noise, req.backend)
            }
            (None, Evolution::Exact) => unreachable!(),
        }
    };

    let l = req.grid.len();
    let jobs: Vec<(i8, usize)> = if mirror {
        (0..l).map(|n| (1, n)).collect()
    } else {
        Branch::BOTH.iter().flat_map(|b| (0..l).map(move |n| (b.sign(), n))).collect()
    };
    let probs: Vec<f64> = jobs.par_iter().map(|&(s, n)| exact_p(s, n)).collect::<Result<_>>()?;
    let mut exact_values = [vec![0.0; l], vec![0.0; l]];
    for (&(s, n), p) in jobs.iter().zip(&probs) {
        exact_values[if s > 0 { 0 } else { 1 }][n] = *p;
    }
    if mirror {
        exact_values[1] = exact_values[0].clone();
    } else if !has_channels {
        let worst = exact_values[0].iter().zip(&exact_values[1]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if worst > TIME_SYMMETRY_TOLERANCE {
            return Err(Error::Consistency(format!("noiseless series breaks time symmetry by {worst:.3e}")));
        }
    }

    let mut series = TimeSeries::empty(req.grid);
    for b in Branch::BOTH {
        for n in 0..l {
            let p = exact_values[b.index()][n];
            let value = sample_probability(p, req.shots, req.seed, b.sign(), n)?;
            series.insert(PropagatorSample { time_index: n, sign: b.sign(), value, shots: req.shots })?;
        }
    }
    Ok(series)
}

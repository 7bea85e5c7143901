//! Markovian noise: Kraus channels, depolarizing maps, SPAM offsets,
//! Pauli propagation through rotation gates, and channels synthesised from
//! device calibration tables.

use std::collections::BTreeMap;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{DenseOperator, ONE};
use crate::model::{PauliAxis, PauliString};
use crate::sim::{CircuitLayers, DensityMatrix, LayerKind};

/// Completeness tolerance for `Σ K†K = I`.
pub const COMPLETENESS_TOLERANCE: f64 = 1e-10;

/// Gate duration used when a calibration row does not provide one.
pub const DEFAULT_GATE_TIME_NS: f64 = 533.3;
pub const DEFAULT_READOUT_LENGTH_NS: f64 = 1216.0;

fn check_probability(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("{name} must lie in [0, 1], got {p}")));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KrausChannel {
    pub dim: usize,
    pub ops: Vec<DenseOperator>,
    pub label: String,
}

impl KrausChannel {
    pub fn new(ops: Vec<DenseOperator>, label: impl Into<String>) -> Result<Self> {
        let Some(first) = ops.first() else {
            return Err(Error::InvalidArgument("a channel needs at least one Kraus operator".into()));
        };
        let dim = first.dim();
        if let Some(bad) = ops.iter().find(|k| k.dim() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, found: bad.dim() });
        }
        let channel = Self { dim, ops, label: label.into() };
        let err = channel.completeness_error();
        if err > COMPLETENESS_TOLERANCE {
            return Err(Error::InvalidArgument(format!(
                "Kraus operators of '{}' are not complete (max |ΣK†K − I| = {err:.3e})",
                channel.label
            )));
        }
        Ok(channel)
    }

    pub fn identity(dim: usize) -> Self {
        Self { dim, ops: vec![DenseOperator::identity(dim)], label: "identity".into() }
    }

    pub fn completeness_error(&self) -> f64 {
        let mut acc = DenseOperator::zeros(self.dim);
        for k in &self.ops {
            acc = &acc + &k.adjoint().matmul(k);
        }
        acc.max_abs_diff(&DenseOperator::identity(self.dim))
    }

    pub fn n_qubits(&self) -> Option<usize> {
        self.dim.is_power_of_two().then(|| self.dim.trailing_zeros() as usize)
    }

    pub fn is_real(&self) -> bool {
        self.ops.iter().all(|k| k.entries().iter().all(|v| v.im == 0.0))
    }
}

/// `ρ ↦ Σ K ρ K†` on the full register.
pub fn apply_channel(channel: &KrausChannel, rho: &DensityMatrix) -> Result<DensityMatrix> {
    if channel.dim != rho.dim() {
        return Err(Error::DimensionMismatch { expected: rho.dim(), found: channel.dim });
    }
    let r = rho.to_operator();
    let mut acc = DenseOperator::zeros(channel.dim);
    for k in &channel.ops {
        acc = &acc + &k.matmul(&r).matmul(&k.adjoint());
    }
    DensityMatrix::from_operator(&acc)
}

fn real2(m: [[f64; 2]; 2]) -> DenseOperator {
    DenseOperator::from_fn(2, |r, c| C64::new(m[r][c], 0.0))
}

/// `{√(1−p) I, √p X}`.
pub fn bit_flip(p: f64) -> Result<KrausChannel> {
    check_probability("bit-flip probability", p)?;
    let (a, b) = ((1.0 - p).sqrt(), p.sqrt());
    KrausChannel::new(vec![real2([[a, 0.0], [0.0, a]]), real2([[0.0, b], [b, 0.0]])], "bit_flip")
}

/// `{√(1−p) I, √p Z}`.
pub fn phase_flip(p: f64) -> Result<KrausChannel> {
    check_probability("phase-flip probability", p)?;
    let (a, b) = ((1.0 - p).sqrt(), p.sqrt());
    KrausChannel::new(vec![real2([[a, 0.0], [0.0, a]]), real2([[b, 0.0], [0.0, -b]])], "phase_flip")
}

/// Relaxation `|1⟩ → |0⟩` with probability `gamma`.
pub fn amplitude_damping(gamma: f64) -> Result<KrausChannel> {
    check_probability("damping probability", gamma)?;
    KrausChannel::new(
        vec![real2([[1.0, 0.0], [0.0, (1.0 - gamma).sqrt()]]), real2([[0.0, gamma.sqrt()], [0.0, 0.0]])],
        "amplitude_damping",
    )
}

/// Pure dephasing that scales coherences by `1 − p`.
pub fn dephasing(p: f64) -> Result<KrausChannel> {
    let mut k = phase_flip(p / 2.0)?;
    k.label = "dephasing".into();
    Ok(k)
}

/// `ρ ↦ (1 − p) ρ + p Tr(ρ) I/d`, kept in affine form.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepolarizingChannel {
    pub p: f64,
    pub dim: usize,
}

impl DepolarizingChannel {
    pub fn new(p: f64, dim: usize) -> Result<Self> {
        check_probability("depolarizing probability", p)?;
        if dim < 2 {
            return Err(Error::InvalidArgument(format!("depolarizing dimension must be ≥ 2, got {dim}")));
        }
        Ok(Self { p, dim })
    }

    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        if self.dim != rho.dim() {
            return Err(Error::DimensionMismatch { expected: rho.dim(), found: self.dim });
        }
        let mut out = rho.clone();
        out.depolarize_mask(self.dim - 1, self.p);
        Ok(out)
    }

    /// Kraus form over the clock-and-shift basis `X^a Z^b`, valid for any `d`.
    pub fn to_kraus(&self) -> KrausChannel {
        let d = self.dim;
        let w = C64::from_polar(1.0, 2.0 * std::f64::consts::PI / d as f64);
        let mut ops = Vec::with_capacity(d * d);
        for a in 0..d {
            for b in 0..d {
                let weight = if a == 0 && b == 0 { 1.0 - self.p + self.p / (d * d) as f64 } else { self.p / (d * d) as f64 };
                let s = weight.sqrt();
                // (X^a Z^b)|j⟩ = ω^{bj} |j + a⟩
                let mut k = DenseOperator::zeros(d);
                for j in 0..d {
                    k[((j + a) % d, j)] = w.powu((b * j) as u32) * s;
                }
                ops.push(k);
            }
        }
        KrausChannel { dim: d, ops, label: format!("depolarizing({})", self.p) }
    }
}

pub fn depolarizing_channel(p: f64, dim: usize) -> Result<DepolarizingChannel> {
    DepolarizingChannel::new(p, dim)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Depolarizing(DepolarizingChannel),
    Kraus(KrausChannel),
}

impl Channel {
    pub fn dim(&self) -> usize {
        match self {
            Channel::Depolarizing(d) => d.dim,
            Channel::Kraus(k) => k.dim,
        }
    }

    pub fn is_real(&self) -> bool {
        match self {
            Channel::Depolarizing(_) => true,
            Channel::Kraus(k) => k.is_real(),
        }
    }

    pub fn to_kraus(&self) -> KrausChannel {
        match self {
            Channel::Depolarizing(d) => d.to_kraus(),
            Channel::Kraus(k) => k.clone(),
        }
    }
}

/// `p_gd = 1 − Π (1 − p_ν)`.
pub fn global_depolarizing_probability(per_layer_p: &[f64]) -> f64 {
    1.0 - per_layer_p.iter().map(|p| 1.0 - p).product::<f64>()
}

/// Where noise is inserted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    /// After every layer, `D = 2M + 2` insertions.
    #[default]
    PerLayer,
    /// After the trial layers and after each full Trotter step, `M + 2` insertions.
    PerTrotterStep,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerSelector {
    All,
    /// Insertion ordinal under the spec's placement.
    Index(usize),
    Kinds(Vec<LayerKind>),
}

impl LayerSelector {
    fn matches(&self, ordinal: usize, kind: LayerKind) -> bool {
        match self {
            LayerSelector::All => true,
            LayerSelector::Index(i) => *i == ordinal,
            LayerSelector::Kinds(kinds) => kinds.contains(&kind),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QubitSelector {
    /// The channel acts on the whole register.
    Register,
    /// A one-qubit channel on every qubit.
    Each,
    /// The channel acts on these qubits, first listed is the leftmost factor.
    Qubits(Vec<usize>),
    /// A two-qubit channel on every coupled pair `(j, j+1)`.
    NeighborPairs,
}

impl QubitSelector {
    fn groups(&self, n_qubits: usize) -> Vec<Vec<usize>> {
        match self {
            QubitSelector::Register => vec![(0..n_qubits).collect()],
            QubitSelector::Each => (0..n_qubits).map(|q| vec![q]).collect(),
            QubitSelector::Qubits(q) => vec![q.clone()],
            QubitSelector::NeighborPairs => (0..n_qubits.saturating_sub(1)).map(|j| vec![j, j + 1]).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseEntry {
    pub layers: LayerSelector,
    pub qubits: QubitSelector,
    pub channel: Channel,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SpamOffsets {
    pub prep_offset: f64,
    pub meas_offset: f64,
}

/// `(θ + prep_offset, θ + meas_offset)` for `U′_I` and `U″_I`.
pub fn inject_spam(theta: f64, prep_offset: f64, meas_offset: f64) -> (f64, f64) {
    (theta + prep_offset, theta + meas_offset)
}

/// Classical assignment errors per qubit.
///
/// `p01` is the probability of reading 0 after preparing 1, `p10` of reading
/// 1 after preparing 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReadoutError {
    pub p01: Vec<f64>,
    pub p10: Vec<f64>,
}

impl ReadoutError {
    pub fn new(p01: Vec<f64>, p10: Vec<f64>) -> Result<Self> {
        if p01.len() != p10.len() {
            return Err(Error::DimensionMismatch { expected: p01.len(), found: p10.len() });
        }
        for &p in p01.iter().chain(&p10) {
            check_probability("readout error", p)?;
        }
        Ok(Self { p01, p10 })
    }

    pub fn n_qubits(&self) -> usize {
        self.p01.len()
    }

    /// Probability of reading all zeros given true basis populations.
    pub fn all_zero_probability(&self, populations: &[f64]) -> Result<f64> {
        let n = self.n_qubits();
        if populations.len() != 1 << n {
            return Err(Error::DimensionMismatch { expected: 1 << n, found: populations.len() });
        }
        let mut weights = vec![1.0];
        for q in 0..n {
            weights = weights.iter().flat_map(|w| [w * (1.0 - self.p10[q]), w * self.p01[q]]).collect();
        }
        Ok(weights.iter().zip(populations).map(|(w, p)| w * p).sum())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    #[serde(default)]
    pub placement: Placement,
    /// Applied in order at each matching insertion point.
    #[serde(default)]
    pub entries: Vec<NoiseEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spam: Option<SpamOffsets>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub readout: Option<ReadoutError>,
    #[serde(default)]
    pub label: String,
}

impl NoiseSpec {
    pub fn from_entries(entries: Vec<NoiseEntry>) -> Self {
        Self { entries, ..Self::default() }
    }

    /// Register-wide depolarizing with probability `p` after every layer.
    pub fn depolarizing_per_layer(p: f64, n_qubits: usize) -> Result<Self> {
        Ok(Self {
            entries: vec![NoiseEntry {
                layers: LayerSelector::All,
                qubits: QubitSelector::Register,
                channel: Channel::Depolarizing(DepolarizingChannel::new(p, 1 << n_qubits)?),
            }],
            label: format!("depolarizing p={p}"),
            ..Self::default()
        })
    }

    pub fn is_real(&self) -> bool {
        self.entries.iter().all(|e| e.channel.is_real())
    }

    fn is_insertion_layer(&self, kind: LayerKind) -> bool {
        match self.placement {
            Placement::PerLayer => true,
            Placement::PerTrotterStep => kind != LayerKind::TrotterX,
        }
    }

    pub fn insertion_count(&self, circuit: &CircuitLayers) -> usize {
        circuit.layers.iter().filter(|l| self.is_insertion_layer(l.kind())).count()
    }

    /// Checks every selector and channel size against the circuit.
    pub fn validate(&self, circuit: &CircuitLayers) -> Result<()> {
        let n = circuit.n_qubits;
        let count = self.insertion_count(circuit);
        for (i, e) in self.entries.iter().enumerate() {
            if let LayerSelector::Index(k) = e.layers {
                if k >= count {
                    return Err(Error::Config(format!(
                        "noise entry {i} targets insertion point {k}, circuit has {count}"
                    )));
                }
            }
            let groups = e.qubits.groups(n);
            if groups.is_empty() {
                return Err(Error::Config(format!("noise entry {i} selects no qubits")));
            }
            for g in groups {
                if g.is_empty() || g.iter().any(|&q| q >= n) {
                    return Err(Error::Config(format!("noise entry {i} names qubits {g:?} outside 0..{n}")));
                }
                let mut sorted = g.clone();
                sorted.sort_unstable();
                sorted.dedup();
                if sorted.len() != g.len() {
                    return Err(Error::Config(format!("noise entry {i} repeats a qubit in {g:?}")));
                }
                if e.channel.dim() != 1 << g.len() {
                    return Err(Error::Config(format!(
                        "noise entry {i}: channel dimension {} does not fit {} qubit(s)",
                        e.channel.dim(),
                        g.len()
                    )));
                }
            }
        }
        if let Some(r) = &self.readout {
            if r.n_qubits() != n {
                return Err(Error::Config(format!("readout model covers {} qubits, circuit has {n}", r.n_qubits())));
            }
        }
        if let Some(s) = self.spam {
            if !s.prep_offset.is_finite() || !s.meas_offset.is_finite() {
                return Err(Error::Config("SPAM offsets must be finite".into()));
            }
        }
        Ok(())
    }

    /// Qubit groups and channels applied after layer `index`.
    pub fn channels_after(&self, circuit: &CircuitLayers, index: usize) -> Vec<(Vec<usize>, &Channel)> {
        let kind = circuit.layers[index].kind();
        if !self.is_insertion_layer(kind) {
            return Vec::new();
        }
        let ordinal = circuit.layers[..index].iter().filter(|l| self.is_insertion_layer(l.kind())).count();
        let mut out = Vec::new();
        for e in &self.entries {
            if e.layers.matches(ordinal, kind) {
                for g in e.qubits.groups(circuit.n_qubits) {
                    out.push((g, &e.channel));
                }
            }
        }
        out
    }
}

/// Reduced form of interleaved register-wide depolarizing noise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReducedDepolarizing {
    pub p_gd: f64,
    pub dim: usize,
    /// Whether the brute-force comparison ran (small circuits only).
    pub verified: bool,
}

impl ReducedDepolarizing {
    /// `(1 − p_gd) ρ + p_gd I/d`.
    pub fn apply(&self, noiseless: &DensityMatrix) -> DensityMatrix {
        let mut out = noiseless.clone();
        out.depolarize_mask(self.dim - 1, self.p_gd);
        out
    }
}

/// Largest register and depth for which the reduction is checked directly.
pub const REDUCTION_CHECK_MAX_QUBITS: usize = 3;
pub const REDUCTION_CHECK_MAX_DEPTH: usize = 8;
pub const REDUCTION_TOLERANCE: f64 = 1e-12;

/// Dense, unfused evolution with `ρ ↦ (1 − p_ν) ρ + p_ν I/d` after layer `ν`.
pub fn interleaved_depolarizing(circuit: &CircuitLayers, per_layer_p: &[f64]) -> Result<DensityMatrix> {
    if per_layer_p.len() != circuit.depth() {
        return Err(Error::DimensionMismatch { expected: circuit.depth(), found: per_layer_p.len() });
    }
    let d = 1usize << circuit.n_qubits;
    let mut rho = DensityMatrix::zero_state(circuit.n_qubits);
    for (layer, &p) in circuit.layers.iter().zip(per_layer_p) {
        rho.apply_unitary(&layer.dense(circuit.n_qubits));
        rho = DepolarizingChannel::new(p, d)?.apply(&rho)?;
    }
    Ok(rho)
}

/// Collapses per-layer depolarizing noise into one global channel.
///
/// Small circuits are evolved both ways and compared entrywise.
pub fn reduce_depolarizing(circuit: &CircuitLayers, per_layer_p: &[f64]) -> Result<ReducedDepolarizing> {
    if per_layer_p.len() != circuit.depth() {
        return Err(Error::DimensionMismatch { expected: circuit.depth(), found: per_layer_p.len() });
    }
    for &p in per_layer_p {
        check_probability("depolarizing probability", p)?;
    }
    let d = 1usize << circuit.n_qubits;
    let reduced = ReducedDepolarizing { p_gd: global_depolarizing_probability(per_layer_p), dim: d, verified: false };
    if circuit.n_qubits > REDUCTION_CHECK_MAX_QUBITS || circuit.depth() > REDUCTION_CHECK_MAX_DEPTH {
        return Ok(reduced);
    }
    let interleaved = interleaved_depolarizing(circuit, per_layer_p)?;
    let mut noiseless = DensityMatrix::zero_state(circuit.n_qubits);
    noiseless.apply_unitary(&circuit.unitary());
    let diff = interleaved.max_abs_diff(&reduced.apply(&noiseless));
    if diff > REDUCTION_TOLERANCE {
        return Err(Error::Consistency(format!("depolarizing reduction off by {diff:.3e}")));
    }
    Ok(ReducedDepolarizing { verified: true, ..reduced })
}

/// Rotation gates that Pauli strings can be pushed through.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum PropagationGate {
    /// `exp(−i φ/2 X_q)`
    Rx { qubit: usize, phi: f64 },
    /// `exp(−i φ/2 Z_a Z_b)`
    Rzz { first: usize, second: usize, phi: f64 },
}

/// Single-site product `a·b = phase · c`.
fn pauli_product(a: PauliAxis, b: PauliAxis) -> (C64, PauliAxis) {
    use PauliAxis::*;
    let i = C64::new(0.0, 1.0);
    match (a, b) {
        (I, p) | (p, I) => (ONE, p),
        (X, X) | (Y, Y) | (Z, Z) => (ONE, I),
        (X, Y) => (i, Z),
        (Y, X) => (-i, Z),
        (Y, Z) => (i, X),
        (Z, Y) => (-i, X),
        (Z, X) => (i, Y),
        (X, Z) => (-i, Y),
    }
}

/// `U P U†` for a Pauli rotation `U`.
///
/// Commuting pairs return `P`; anticommuting pairs return
/// `P cos φ + (i P G) sin φ`, where `G` is the rotation generator.
pub fn pauli_propagate(gate: PropagationGate, pauli: &PauliString) -> Result<Vec<PauliString>> {
    let n = pauli.n_qubits();
    let (generator, phi) = match gate {
        PropagationGate::Rx { qubit, phi } if qubit < n => (PauliString::sparse(n, &[(qubit, PauliAxis::X)], 1.0), phi),
        PropagationGate::Rzz { first, second, phi } if first < n && second < n && first != second => (
            PauliString::sparse(n, &[(first, PauliAxis::Z), (second, PauliAxis::Z)], 1.0),
            phi,
        ),
        other => {
            return Err(Error::NotImplemented(format!(
                "{other:?} on a {n}-qubit string; supported pairs are R^x on a site of the string and R^zz on two distinct sites"
            )))
        }
    };
    let mut phase = ONE;
    let mut axes = Vec::with_capacity(n);
    let mut anticommuting = 0;
    for (&a, &g) in pauli.axes.iter().zip(&generator.axes) {
        let (ph, c) = pauli_product(a, g);
        if a != PauliAxis::I && g != PauliAxis::I && a != g {
            anticommuting += 1;
        }
        phase *= ph;
        axes.push(c);
    }
    if anticommuting % 2 == 0 {
        return Ok(vec![pauli.clone()]);
    }
    // i · phase is real (±1) for anticommuting strings
    let sign = (C64::new(0.0, 1.0) * phase).re;
    Ok(vec![
        PauliString::new(pauli.axes.clone(), pauli.coefficient * phi.cos()),
        PauliString::new(axes, pauli.coefficient * sign * phi.sin()),
    ])
}

/// Propagates a sum of strings, merging equal labels.
pub fn pauli_propagate_sum(gate: PropagationGate, terms: &[PauliString]) -> Result<Vec<PauliString>> {
    let mut merged: BTreeMap<String, PauliString> = BTreeMap::new();
    for t in terms {
        for out in pauli_propagate(gate, t)? {
            merged
                .entry(out.label())
                .and_modify(|e| e.coefficient += out.coefficient)
                .or_insert(out);
        }
    }
    Ok(merged.into_values().filter(|p| p.coefficient != 0.0).collect())
}

/// One qubit's row of a device calibration table. Times in µs and ns,
/// errors as probabilities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub qubit_id: u32,
    pub t1_us: f64,
    pub t2_us: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequency_ghz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anharmonicity_ghz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub readout_error: Option<f64>,
    #[serde(default)]
    pub readout_p01: f64,
    #[serde(default)]
    pub readout_p10: f64,
    #[serde(default)]
    pub single_gate_error: f64,
    /// Keyed by `"a-b"`.
    #[serde(default)]
    pub two_gate_error: BTreeMap<String, f64>,
    #[serde(default = "default_gate_time")]
    pub gate_time_ns: f64,
    #[serde(default = "default_readout_length")]
    pub readout_length_ns: f64,
}

fn default_gate_time() -> f64 {
    DEFAULT_GATE_TIME_NS
}

fn default_readout_length() -> f64 {
    DEFAULT_READOUT_LENGTH_NS
}

pub fn pair_key(a: u32, b: u32) -> String {
    format!("{}-{}", a.min(b), a.max(b))
}

impl CalibrationRecord {
    /// Hard errors reject the record; the returned strings are warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        let q = self.qubit_id;
        for (name, v) in [("T1", self.t1_us), ("T2", self.t2_us)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Calibration(format!("qubit {q}: {name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("gate time", self.gate_time_ns), ("readout length", self.readout_length_ns)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Calibration(format!("qubit {q}: {name} must be positive, got {v}")));
            }
        }
        let mut probs = vec![
            ("p01", self.readout_p01),
            ("p10", self.readout_p10),
            ("single-qubit gate error", self.single_gate_error),
        ];
        if let Some(r) = self.readout_error {
            probs.push(("readout error", r));
        }
        for (k, v) in &self.two_gate_error {
            if !(0.0..=1.0).contains(v) {
                return Err(Error::Calibration(format!("qubit {q}: two-qubit error for {k} outside [0, 1]: {v}")));
            }
        }
        for (name, v) in probs {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Calibration(format!("qubit {q}: {name} outside [0, 1]: {v}")));
            }
        }
        let mut warnings = Vec::new();
        if self.t2_us > 2.0 * self.t1_us {
            warnings.push(format!("qubit {q}: T2 = {} µs exceeds 2·T1 = {} µs", self.t2_us, 2.0 * self.t1_us));
        }
        Ok(warnings)
    }

    /// `1 − exp(−Δt/T1)`.
    pub fn damping_probability(&self, duration_ns: f64) -> f64 {
        1.0 - (-duration_ns * 1e-3 / self.t1_us).exp()
    }

    /// `1 − exp(−Δt/T_φ)` with `1/T_φ = 1/T2 − 1/(2 T1)` clamped at zero.
    pub fn dephasing_probability(&self, duration_ns: f64) -> f64 {
        let rate = (1.0 / self.t2_us - 0.5 / self.t1_us).max(0.0);
        1.0 - (-duration_ns * 1e-3 * rate).exp()
    }
}

/// A validated calibration table plus what was dropped on the way in.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSet {
    #[serde(rename = "qubit")]
    pub records: Vec<CalibrationRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rejected: Vec<RejectedRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RejectedRow {
    pub line: usize,
    pub reason: String,
}

const REQUIRED_COLUMNS: [&str; 3] = ["qubit", "t1_us", "t2_us"];

/// Parses a delimiter-separated calibration table.
///
/// Required columns: `qubit`, `T1_us`, `T2_us`. Optional: `freq_GHz`,
/// `anharmonicity_GHz`, `readout_err`, `p01`, `p10`, `gate_err`,
/// `ecr_pair`, `ecr_err`, `gate_time_ns`, `readout_length_ns`. The
/// delimiter is a comma unless the header contains tabs or semicolons.
pub fn parse_calibration_table(text: &str) -> Result<CalibrationSet> {
    let header_line = text.lines().find(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
    let Some(header_line) = header_line else {
        return Err(Error::Calibration("calibration file is empty".into()));
    };
    let delimiter = if header_line.contains('\t') {
        b'\t'
    } else if header_line.contains(';') {
        b';'
    } else {
        b','
    };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Calibration(format!("unreadable header: {e}")))?
        .iter()
        .map(|h| h.to_ascii_lowercase())
        .collect();
    for col in REQUIRED_COLUMNS {
        if !headers.iter().any(|h| h == col) {
            return Err(Error::Calibration(format!("missing required column '{col}'")));
        }
    }
    let column = |name: &str| headers.iter().position(|h| h == name);

    let mut set = CalibrationSet::default();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                set.rejected.push(RejectedRow { line, reason: e.to_string() });
                continue;
            }
        };
        match parse_row(&row, &column) {
            Ok(rec) => match rec.validate() {
                Ok(w) => {
                    set.warnings.extend(w);
                    set.records.push(rec);
                }
                Err(e) => set.rejected.push(RejectedRow { line, reason: e.to_string() }),
            },
            Err(e) => set.rejected.push(RejectedRow { line, reason: e.to_string() }),
        }
    }
    if set.records.is_empty() && set.rejected.is_empty() {
        return Err(Error::Calibration("calibration file has no data rows".into()));
    }
    Ok(set)
}

fn parse_row(row: &csv::StringRecord, column: &dyn Fn(&str) -> Option<usize>) -> Result<CalibrationRecord> {
    let field = |name: &str| column(name).and_then(|i| row.get(i)).filter(|s| !s.is_empty());
    let number = |name: &str| -> Result<Option<f64>> {
        field(name)
            .map(|s| s.parse::<f64>().map_err(|_| Error::Calibration(format!("column '{name}': cannot parse '{s}'"))))
            .transpose()
    };
    let qubit_id: u32 = field("qubit")
        .ok_or_else(|| Error::Calibration("empty qubit id".into()))?
        .parse()
        .map_err(|_| Error::Calibration("qubit id is not an integer".into()))?;
    let mut two_gate_error = BTreeMap::new();
    if let Some(err) = number("ecr_err")? {
        let partner: u32 = field("ecr_pair")
            .ok_or_else(|| Error::Calibration(format!("qubit {qubit_id}: ecr_err given without ecr_pair")))?
            .parse()
            .map_err(|_| Error::Calibration(format!("qubit {qubit_id}: ecr_pair is not an integer")))?;
        two_gate_error.insert(pair_key(qubit_id, partner), err);
    }
    Ok(CalibrationRecord {
        qubit_id,
        t1_us: number("t1_us")?.ok_or_else(|| Error::Calibration(format!("qubit {qubit_id}: empty T1")))?,
        t2_us: number("t2_us")?.ok_or_else(|| Error::Calibration(format!("qubit {qubit_id}: empty T2")))?,
        frequency_ghz: number("freq_ghz")?,
        anharmonicity_ghz: number("anharmonicity_ghz")?,
        readout_error: number("readout_err")?,
        readout_p01: number("p01")?.unwrap_or(0.0),
        readout_p10: number("p10")?.unwrap_or(0.0),
        single_gate_error: number("gate_err")?.unwrap_or(0.0),
        two_gate_error,
        gate_time_ns: number("gate_time_ns")?.unwrap_or(DEFAULT_GATE_TIME_NS),
        readout_length_ns: number("readout_length_ns")?.unwrap_or(DEFAULT_READOUT_LENGTH_NS),
    })
}

/// Per-qubit noise for a chain whose site `i` is `records[i]`.
///
/// After each layer: gate depolarizing (one-qubit on product layers,
/// two-qubit on coupled pairs after ZZ layers), then amplitude damping and
/// dephasing for `layer_duration_ns`. Readout confusion comes from `p01`/`p10`.
pub fn calibration_to_noise(records: &[CalibrationRecord], layer_duration_ns: f64) -> Result<NoiseSpec> {
    if records.is_empty() {
        return Err(Error::Calibration("no calibration records".into()));
    }
    if !(layer_duration_ns > 0.0) || !layer_duration_ns.is_finite() {
        return Err(Error::Calibration(format!("layer duration must be positive, got {layer_duration_ns}")));
    }
    for r in records {
        r.validate()?;
    }
    let product_layers = LayerSelector::Kinds(vec![
        LayerKind::TrialRotation,
        LayerKind::TrotterX,
        LayerKind::TrialRotationInverse,
    ]);
    let mut entries = Vec::new();
    for (q, r) in records.iter().enumerate() {
        if r.single_gate_error > 0.0 {
            entries.push(NoiseEntry {
                layers: product_layers.clone(),
                qubits: QubitSelector::Qubits(vec![q]),
                channel: Channel::Depolarizing(DepolarizingChannel::new(r.single_gate_error, 2)?),
            });
        }
    }
    for (q, pair) in records.windows(2).enumerate() {
        let key = pair_key(pair[0].qubit_id, pair[1].qubit_id);
        let err = pair[0].two_gate_error.get(&key).or_else(|| pair[1].two_gate_error.get(&key)).copied();
        if let Some(p) = err.filter(|&p| p > 0.0) {
            entries.push(NoiseEntry {
                layers: LayerSelector::Kinds(vec![LayerKind::TrotterZZ]),
                qubits: QubitSelector::Qubits(vec![q, q + 1]),
                channel: Channel::Depolarizing(DepolarizingChannel::new(p, 4)?),
            });
        }
    }
    for (q, r) in records.iter().enumerate() {
        let gamma = r.damping_probability(layer_duration_ns);
        if gamma > 0.0 {
            entries.push(NoiseEntry {
                layers: LayerSelector::All,
                qubits: QubitSelector::Qubits(vec![q]),
                channel: Channel::Kraus(amplitude_damping(gamma)?),
            });
        }
        let p_phi = r.dephasing_probability(layer_duration_ns);
        if p_phi > 0.0 {
            entries.push(NoiseEntry {
                layers: LayerSelector::All,
                qubits: QubitSelector::Qubits(vec![q]),
                channel: Channel::Kraus(dephasing(p_phi)?),
            });
        }
    }
    let readout = ReadoutError::new(
        records.iter().map(|r| r.readout_p01).collect(),
        records.iter().map(|r| r.readout_p10).collect(),
    )?;
    let ids: Vec<String> = records.iter().map(|r| r.qubit_id.to_string()).collect();
    Ok(NoiseSpec {
        placement: Placement::PerLayer,
        entries,
        spam: None,
        readout: Some(readout),
        label: format!("calibration[{}] dt={layer_duration_ns}ns", ids.join(",")),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::embed_single;
    use crate::model::build_tfim;
    use crate::sim::{build_qge_circuit, Backend, Layer, Program};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_density(n: usize, rng: &mut ChaCha8Rng) -> DensityMatrix {
        let d = 1 << n;
        let a = DenseOperator::from_fn(d, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let m = a.matmul(&a.adjoint());
        let tr = m.trace();
        DensityMatrix::from_operator(&m.scale(tr.inv())).unwrap()
    }

    fn diag(rho: &DensityMatrix) -> Vec<f64> {
        rho.populations()
    }

    #[test]
    fn depolarizing_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rho = random_density(2, &mut rng);
        assert_eq!(DepolarizingChannel::new(0.0, 4).unwrap().apply(&rho).unwrap(), rho);
        let full = DepolarizingChannel::new(1.0, 4).unwrap().apply(&rho).unwrap();
        assert!(full.max_abs_diff(&DensityMatrix::maximally_mixed(2)) < 1e-15);
        let half = DepolarizingChannel::new(0.5, 2).unwrap().apply(&DensityMatrix::zero_state(1)).unwrap();
        assert!((diag(&half)[0] - 0.75).abs() < 1e-15 && (diag(&half)[1] - 0.25).abs() < 1e-15);
        assert!(DepolarizingChannel::new(1.2, 2).is_err());
        assert!(DepolarizingChannel::new(-0.1, 2).is_err());
    }

    #[test]
    fn depolarizing_kraus_form_matches_affine() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for (n, p) in [(1, 0.3), (2, 0.8), (3, 0.05)] {
            let dep = DepolarizingChannel::new(p, 1 << n).unwrap();
            let k = dep.to_kraus();
            assert!(k.completeness_error() < 1e-10);
            let rho = random_density(n, &mut rng);
            let a = dep.apply(&rho).unwrap();
            let b = apply_channel(&k, &rho).unwrap();
            assert!(a.max_abs_diff(&b) < 1e-12);
        }
        // d = 3 is not a qubit register but the construction still holds
        assert!(DepolarizingChannel::new(0.4, 3).unwrap().to_kraus().completeness_error() < 1e-12);
    }

    #[test]
    fn kraus_examples() {
        let rho = DensityMatrix::zero_state(1);
        assert_eq!(apply_channel(&KrausChannel::identity(2), &rho).unwrap(), rho);
        let out = apply_channel(&bit_flip(0.3).unwrap(), &rho).unwrap();
        assert!((diag(&out)[0] - 0.7).abs() < 1e-15 && (diag(&out)[1] - 0.3).abs() < 1e-15);
        assert!(apply_channel(&bit_flip(0.3).unwrap(), &DensityMatrix::zero_state(2)).is_err());
        let bad = vec![DenseOperator::identity(2).scale(C64::new(0.5, 0.0))];
        assert!(KrausChannel::new(bad, "short").is_err());
        assert!(KrausChannel::new(vec![], "none").is_err());
    }

    #[test]
    fn depolarizing_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (p1, p2) = (0.13, 0.42);
        for _ in 0..5 {
            let rho = random_density(2, &mut rng);
            let two = DepolarizingChannel::new(p2, 4)
                .unwrap()
                .apply(&DepolarizingChannel::new(p1, 4).unwrap().apply(&rho).unwrap())
                .unwrap();
            let one = DepolarizingChannel::new(global_depolarizing_probability(&[p1, p2]), 4)
                .unwrap()
                .apply(&rho)
                .unwrap();
            assert!(two.max_abs_diff(&one) < 1e-15);
        }
    }

    #[test]
    fn global_probability_examples() {
        assert!((global_depolarizing_probability(&[0.01; 3]) - 0.029701).abs() < 1e-12);
        assert_eq!(global_depolarizing_probability(&[0.2, 1.0, 0.3]), 1.0);
        assert_eq!(global_depolarizing_probability(&[]), 0.0);
    }

    #[test]
    fn builders_preserve_trace_and_hermiticity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for p in [0.0, 0.1, 0.5, 1.0] {
            for k in [bit_flip(p), phase_flip(p), amplitude_damping(p), dephasing(p)] {
                let k = k.unwrap();
                assert!(k.completeness_error() < 1e-10);
                let rho = random_density(1, &mut rng);
                let out = apply_channel(&k, &rho).unwrap();
                assert!((out.trace() - ONE).norm() < 1e-12);
                assert!(out.hermiticity_error() < 1e-12);
            }
        }
        let out = apply_channel(&dephasing(0.4).unwrap(), &DensityMatrix::from_pure(&[C64::new(0.6, 0.0), C64::new(0.8, 0.0)])).unwrap();
        assert!((out.get(0, 1).re - 0.6 * 0.48).abs() < 1e-15);
    }

    #[test]
    fn reduction_examples() {
        let model = build_tfim(2, 0.4, 1.0).unwrap();
        let c = build_qge_circuit(&model, 0.6, 0.9, 2).unwrap();
        let r = reduce_depolarizing(&c, &[0.0; 6]).unwrap();
        assert_eq!(r.p_gd, 0.0);
        assert!(r.verified);
        let single = CircuitLayers::new(2, vec![Layer::TrotterX(0.4)]);
        let r = reduce_depolarizing(&single, &[0.2]).unwrap();
        assert!((r.p_gd - 0.2).abs() < 1e-15);
        assert!(reduce_depolarizing(&single, &[0.2, 0.1]).is_err());
        // beyond the check limits the formula is returned unverified
        let big = build_qge_circuit(&model, 0.6, 0.9, 5).unwrap();
        assert!(!reduce_depolarizing(&big, &[0.01; 12]).unwrap().verified);
    }

    #[test]
    fn depolarizing_commutes_with_circuit() {
        let model = build_tfim(3, 0.4, 1.0).unwrap();
        let c = build_qge_circuit(&model, 0.7, 1.1, 3).unwrap();
        let d = c.depth();
        let ps: Vec<f64> = (0..d).map(|i| 0.004 * (i + 1) as f64).collect();
        let front: Vec<NoiseEntry> = ps
            .iter()
            .map(|&p| NoiseEntry {
                layers: LayerSelector::Index(0),
                qubits: QubitSelector::Register,
                channel: Channel::Depolarizing(DepolarizingChannel::new(p, 8).unwrap()),
            })
            .collect();
        let back: Vec<NoiseEntry> = front
            .iter()
            .cloned()
            .map(|mut e| {
                e.layers = LayerSelector::Index(d - 1);
                e
            })
            .collect();
        let a = Program::compile(&c, Some(&NoiseSpec::from_entries(front)), Backend::Auto).unwrap().run_density();
        let b = Program::compile(&c, Some(&NoiseSpec::from_entries(back)), Backend::Auto).unwrap().run_density();
        assert!(a.max_abs_diff(&b) < 1e-12);
    }

    #[test]
    fn validation_catches_bad_selectors() {
        let model = build_tfim(3, 0.4, 1.0).unwrap();
        let c = build_qge_circuit(&model, 0.7, 1.1, 1).unwrap();
        let entry = |layers, qubits, channel| NoiseSpec::from_entries(vec![NoiseEntry { layers, qubits, channel }]);
        let dep2 = Channel::Depolarizing(DepolarizingChannel::new(0.1, 2).unwrap());
        let dep4 = Channel::Depolarizing(DepolarizingChannel::new(0.1, 4).unwrap());
        assert!(entry(LayerSelector::Index(4), QubitSelector::Each, dep2.clone()).validate(&c).is_err());
        assert!(entry(LayerSelector::Index(3), QubitSelector::Each, dep2.clone()).validate(&c).is_ok());
        assert!(entry(LayerSelector::All, QubitSelector::Qubits(vec![3]), dep2.clone()).validate(&c).is_err());
        assert!(entry(LayerSelector::All, QubitSelector::Qubits(vec![1, 1]), dep4.clone()).validate(&c).is_err());
        assert!(entry(LayerSelector::All, QubitSelector::Register, dep4.clone()).validate(&c).is_err());
        assert!(entry(LayerSelector::All, QubitSelector::NeighborPairs, dep4).validate(&c).is_ok());
        let mut per_step = entry(LayerSelector::Index(2), QubitSelector::Each, dep2);
        per_step.placement = Placement::PerTrotterStep;
        assert_eq!(per_step.insertion_count(&c), 3);
        assert!(per_step.validate(&c).is_ok());
    }

    #[test]
    fn per_step_placement_skips_x_layers() {
        let model = build_tfim(2, 0.4, 1.0).unwrap();
        let c = build_qge_circuit(&model, 0.7, 1.1, 2).unwrap();
        let mut spec = NoiseSpec::depolarizing_per_layer(0.1, 2).unwrap();
        spec.placement = Placement::PerTrotterStep;
        let hits: Vec<usize> = (0..c.depth()).filter(|&i| !spec.channels_after(&c, i).is_empty()).collect();
        assert_eq!(hits, vec![0, 2, 4, 5]);
    }

    #[test]
    fn spam_offsets() {
        assert_eq!(inject_spam(0.4, 0.0, 0.0), (0.4, 0.4));
        assert_eq!(inject_spam(0.4, 0.1, -0.05), (0.5, 0.35000000000000003));
        // π offset at θ = 0 prepares |1⟩ on one qubit
        let (tp, _) = inject_spam(0.0, std::f64::consts::PI, 0.0);
        let psi = crate::sim::trial_rotation_state(tp, 1);
        assert!((psi[1].norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn pauli_propagation_examples() {
        let y = PauliString::parse("Y", 1.0).unwrap();
        let out = pauli_propagate(PropagationGate::Rx { qubit: 0, phi: std::f64::consts::FRAC_PI_2 }, &y).unwrap();
        assert_eq!(out[1].label(), "Z");
        assert!(out[0].coefficient.abs() < 1e-15 && (out[1].coefficient - 1.0).abs() < 1e-15);
        let xz = PauliString::parse("XZ", 1.0).unwrap();
        let out = pauli_propagate(PropagationGate::Rzz { first: 0, second: 1, phi: 0.3 }, &xz).unwrap();
        assert_eq!(out[0].label(), "XZ");
        assert_eq!(out[1].label(), "YI");
        assert!((out[1].coefficient - 0.3f64.sin()).abs() < 1e-15);
        let x = PauliString::parse("X", 1.0).unwrap();
        assert_eq!(pauli_propagate(PropagationGate::Rx { qubit: 0, phi: 0.7 }, &x).unwrap(), vec![x.clone()]);
        assert!(matches!(
            pauli_propagate(PropagationGate::Rx { qubit: 2, phi: 0.7 }, &x),
            Err(Error::NotImplemented(_))
        ));
    }

    #[test]
    fn pauli_propagation_matches_dense_conjugation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let labels = ["IX", "IY", "IZ", "XI", "YI", "ZI", "XX", "XY", "XZ", "YX", "YY", "YZ", "ZX", "ZY", "ZZ"];
        for _ in 0..50 {
            let phi = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
            for gate in [
                PropagationGate::Rx { qubit: 0, phi },
                PropagationGate::Rx { qubit: 1, phi },
                PropagationGate::Rzz { first: 0, second: 1, phi },
            ] {
                let u = match gate {
                    PropagationGate::Rx { qubit, phi } => embed_single(&crate::linalg::gates::rx(phi), qubit, 2),
                    PropagationGate::Rzz { phi, .. } => DenseOperator::from_diagonal(&crate::sim::zz_phases(2, phi)),
                };
                for l in labels {
                    let p = PauliString::parse(l, 1.0).unwrap();
                    let expect = u.matmul(&p.to_dense()).matmul(&u.adjoint());
                    let mut got = DenseOperator::zeros(4);
                    for term in pauli_propagate(gate, &p).unwrap() {
                        got = &got + &term.to_dense();
                    }
                    assert!(got.max_abs_diff(&expect) < 1e-12, "{l} {gate:?}");
                }
            }
        }
        let sum = pauli_propagate_sum(
            PropagationGate::Rx { qubit: 0, phi: 0.4 },
            &[PauliString::parse("Y", 1.0).unwrap(), PauliString::parse("Z", 1.0).unwrap()],
        )
        .unwrap();
        assert_eq!(sum.len(), 2);
    }

    const TABLE: &str = "qubit,T1_us,T2_us,freq_GHz,anharmonicity_GHz,readout_err,p01,p10,gate_err,ecr_pair,ecr_err
113,315.7,69.70,4.963,-0.30844,0.0056,0.0062,0.0050,0.0002080,114,0.005618
114,273.6,383.3,4.885,-0.30934,0.0136,0.0130,0.0142,0.0001598,115,0.008790
";

    #[test]
    fn calibration_parsing_and_channels() {
        let set = parse_calibration_table(TABLE).unwrap();
        assert_eq!(set.records.len(), 2);
        let r = &set.records[0];
        assert_eq!(r.t1_us, 315.7);
        assert!((r.damping_probability(533.3) - 1.68784e-3).abs() < 1e-8);
        assert_eq!(r.two_gate_error.get("113-114"), Some(&0.005618));
        let noise = calibration_to_noise(&set.records, 533.3).unwrap();
        assert_eq!(noise.readout.as_ref().unwrap().p01, vec![0.0062, 0.0130]);
        // one pair channel, two gate channels, damping and dephasing per qubit
        assert_eq!(noise.entries.len(), 2 + 1 + 4);
        let model = build_tfim(2, 0.4, 1.0).unwrap();
        noise.validate(&build_qge_circuit(&model, 0.5, 1.0, 2).unwrap()).unwrap();
        // T1 → ∞ removes damping
        let mut long = r.clone();
        long.t1_us = 1e15;
        assert!(long.damping_probability(533.3) < 1e-12);
    }

    #[test]
    fn calibration_rejections_and_warnings() {
        assert!(parse_calibration_table("").is_err());
        match parse_calibration_table("qubit,T1_us\n1,2\n") {
            Err(Error::Calibration(msg)) => assert!(msg.contains("t2_us")),
            other => panic!("{other:?}"),
        }
        let set = parse_calibration_table("qubit,T1_us,T2_us\n1,10,30\n2,-1,5\n3,10,x\n").unwrap();
        assert_eq!(set.records.len(), 1);
        assert_eq!(set.rejected.len(), 2);
        assert_eq!(set.warnings.len(), 1);
        assert!(calibration_to_noise(&[], 10.0).is_err());
        assert!(calibration_to_noise(&set.records, 0.0).is_err());
    }

    #[test]
    fn readout_identity_and_confusion() {
        let r = ReadoutError::new(vec![0.0; 2], vec![0.0; 2]).unwrap();
        let pops = [0.4, 0.3, 0.2, 0.1];
        assert_eq!(r.all_zero_probability(&pops).unwrap(), 0.4);
        let r = ReadoutError::new(vec![0.1, 0.2], vec![0.05, 0.01]).unwrap();
        let expect = 0.4 * 0.95 * 0.99 + 0.3 * 0.95 * 0.2 + 0.2 * 0.1 * 0.99 + 0.1 * 0.1 * 0.2;
        assert!((r.all_zero_probability(&pops).unwrap() - expect).abs() < 1e-15);
    }
}

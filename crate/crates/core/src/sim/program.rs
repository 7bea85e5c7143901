//! A circuit plus its noise lowered to a flat list of register operations.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::state::{
    superop_compose, superop_depolarizing, superop_from_kraus, superop_from_unitary, DensityMatrix, StateVector,
    Superop1,
};
use super::{zz_sums, CircuitLayers};
use crate::error::{Error, Result};
use crate::linalg::{gates, qubit_bit, DenseOperator};
use crate::noise::{Channel, NoiseSpec};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    /// Statevector unless noise channels are present.
    #[default]
    Auto,
    StateVector,
    DensityMatrix,
}

#[derive(Clone, Debug)]
enum Op {
    /// One-qubit map; `unitary` is kept while the map stays unitary.
    Local { bit: usize, superop: Superop1, unitary: Option<gates::Mat2> },
    Diagonal(Vec<C64>),
    Depolarize { mask: usize, p: f64 },
    Kraus { offsets: Vec<usize>, ops: Vec<DenseOperator> },
}

impl Op {
    fn touches(&self, bit: usize) -> bool {
        match self {
            Op::Local { bit: b, .. } => *b == bit,
            Op::Diagonal(_) => true,
            Op::Depolarize { mask, .. } => mask & (1 << bit) != 0,
            Op::Kraus { offsets, .. } => offsets.iter().any(|o| o & (1 << bit) != 0),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Program {
    n_qubits: usize,
    ops: Vec<Op>,
    density: bool,
}

impl Program {
    pub fn compile(circuit: &CircuitLayers, noise: Option<&NoiseSpec>, backend: Backend) -> Result<Self> {
        let has_channels = noise.is_some_and(|n| !n.entries.is_empty());
        let density = match backend {
            Backend::Auto => has_channels,
            Backend::DensityMatrix => true,
            Backend::StateVector if has_channels => {
                return Err(Error::Config("statevector backend cannot apply noise channels".into()))
            }
            Backend::StateVector => false,
        };
        if let Some(noise) = noise {
            noise.validate(circuit)?;
        }
        let n = circuit.n_qubits;
        let mut program = Self { n_qubits: n, ops: Vec::new(), density };
        let sums = zz_sums(n);
        for (index, layer) in circuit.layers.iter().enumerate() {
            match layer.single_qubit_gate() {
                Some(g) => {
                    let s = superop_from_unitary(&g);
                    for q in 0..n {
                        program.push_local(qubit_bit(q, n), s, Some(g));
                    }
                }
                None => {
                    let super::Layer::TrotterZZ(phi) = *layer else { unreachable!() };
                    let phases = sums.iter().map(|&s| C64::from_polar(1.0, -0.5 * phi * s as f64)).collect();
                    program.ops.push(Op::Diagonal(phases));
                }
            }
            if let Some(noise) = noise {
                for (group, channel) in noise.channels_after(circuit, index) {
                    program.push_channel(&group, channel);
                }
            }
        }
        Ok(program)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn uses_density_matrix(&self) -> bool {
        self.density
    }

    /// Number of register passes after fusion.
    pub fn op_count(&self) -> usize {
        self.ops.len()
    }

    fn push_local(&mut self, bit: usize, superop: Superop1, unitary: Option<gates::Mat2>) {
        for op in self.ops.iter_mut().rev() {
            if let Op::Local { bit: b, superop: s, unitary: u } = op {
                if *b == bit {
                    *s = superop_compose(&superop, s);
                    *u = match (unitary, *u) {
                        (Some(later), Some(earlier)) => Some(gates::mul2(&later, &earlier)),
                        _ => None,
                    };
                    return;
                }
                continue;
            }
            if op.touches(bit) {
                break;
            }
        }
        self.ops.push(Op::Local { bit, superop, unitary });
    }

    fn push_channel(&mut self, group: &[usize], channel: &Channel) {
        let n = self.n_qubits;
        match channel {
            Channel::Depolarizing(dep) => {
                if group.len() == 1 {
                    self.push_local(qubit_bit(group[0], n), superop_depolarizing(dep.p), None);
                } else {
                    let mask = group.iter().fold(0, |m, &q| m | (1 << qubit_bit(q, n)));
                    self.ops.push(Op::Depolarize { mask, p: dep.p });
                }
            }
            Channel::Kraus(k) => {
                if group.len() == 1 {
                    let mats: Vec<gates::Mat2> = k
                        .ops
                        .iter()
                        .map(|m| [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]])
                        .collect();
                    self.push_local(qubit_bit(group[0], n), superop_from_kraus(&mats), None);
                } else {
                    let k_len = group.len();
                    let offsets = (0..1usize << k_len)
                        .map(|l| {
                            group
                                .iter()
                                .enumerate()
                                .map(|(i, &q)| ((l >> (k_len - 1 - i)) & 1) << qubit_bit(q, n))
                                .sum()
                        })
                        .collect();
                    self.ops.push(Op::Kraus { offsets, ops: k.ops.clone() });
                }
            }
        }
    }

    /// Output density matrix; a statevector program is lifted at the end.
    pub fn run_density(&self) -> DensityMatrix {
        if !self.density {
            return self.run_state().expect("unitary program").to_density();
        }
        let mut rho = DensityMatrix::zero_state(self.n_qubits);
        for op in &self.ops {
            match op {
                Op::Local { bit, superop, .. } => rho.apply_local(*bit, superop),
                Op::Diagonal(phases) => rho.apply_diagonal(phases),
                Op::Depolarize { mask, p } => rho.depolarize_mask(*mask, *p),
                Op::Kraus { offsets, ops } => rho.apply_kraus_local(offsets, ops),
            }
        }
        rho
    }

    /// Output statevector; `None` when the program contains non-unitary maps.
    pub fn run_state(&self) -> Option<StateVector> {
        let mut sv = StateVector::zero_state(self.n_qubits);
        for op in &self.ops {
            match op {
                Op::Local { bit, unitary: Some(u), .. } => sv.apply_single(*bit, u),
                Op::Diagonal(phases) => sv.apply_diagonal(phases),
                _ => return None,
            }
        }
        Some(sv)
    }

    /// Computational-basis populations of the output state.
    pub fn run(&self) -> Vec<f64> {
        if self.density {
            self.run_density().populations()
        } else {
            self.run_state().expect("unitary program").probabilities()
        }
    }
}

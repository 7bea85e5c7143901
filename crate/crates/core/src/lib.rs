//! Simulation and analysis engine for estimating the first excitation gap of
//! open transverse-field Ising chains from filtered real-time return
//! amplitudes of Trotterized, optionally noisy, circuits.

pub mod baseline;
pub mod config;
pub mod error;
pub mod estimate;
pub mod linalg;
pub mod model;
pub mod noise;
pub mod oracle;
pub mod sim;
pub mod spectral;

pub use baseline::{als_baseline, AlsParams, BaselineResult};
pub use config::RunConfig;
pub use error::{Error, Result};
pub use estimate::{initial_gap, run_qge, GapEstimate, RunRecord, TargetWindow};
pub use model::{build_tfim, HamiltonianTerms};
pub use noise::NoiseSpec;
pub use oracle::{eigh, exact_gap, EigenSystem};
pub use spectral::{spectral_function, FilterKind, FilterSpec, Spectrum, TimeGrid, TimeSeries};

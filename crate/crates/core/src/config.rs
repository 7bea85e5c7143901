//! TOML run configuration.

use std::f64::consts::FRAC_PI_2;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baseline::AlsParams;
use crate::error::{Error, Result};
use crate::noise::{calibration_to_noise, parse_calibration_table, CalibrationSet, NoiseSpec, Placement, SpamOffsets};
use crate::sim::{Backend, Evolution};
use crate::spectral::{FilterKind, FilterSpec, Shots, TimeGrid};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub n_qubits: usize,
    pub j_over_h: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { n_qubits: 5, j_over_h: 0.4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub kind: FilterKind,
    pub eta_over_h: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self { kind: FilterKind::Lorentzian, eta_over_h: 0.3 }
    }
}

/// Both fields default from the filter: `δω = η/4`, `L` covering `|t| ≤ 5/h`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub dw: Option<f64>,
    pub len: Option<usize>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvolutionKind {
    #[default]
    Trotter,
    Exact,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrotterConfig {
    pub m_steps: usize,
    pub evolution: EvolutionKind,
}

impl Default for TrotterConfig {
    fn default() -> Self {
        Self { m_steps: 15, evolution: EvolutionKind::Trotter }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExactTag {
    Exact,
}

/// `shots = 1024` or `shots = "exact"`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ShotsSetting {
    Count(u64),
    Exact(ExactTag),
}

impl ShotsSetting {
    pub fn count(self) -> Shots {
        match self {
            ShotsSetting::Count(n) => Some(n),
            ShotsSetting::Exact(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub shots: ShotsSetting,
    pub seed: u64,
    pub mirror_negative_times: bool,
    pub backend: Backend,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self { shots: ShotsSetting::Count(1024), seed: 1, mirror_negative_times: false, backend: Backend::Auto }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    #[default]
    None,
    /// Register-wide depolarizing with probability `p`.
    Depolarizing,
    /// A serialized noise spec (TOML or JSON) in `file`.
    Kraus,
    /// A calibration table (CSV/TSV, or TOML) in `file`.
    Calibration,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub kind: NoiseKind,
    pub p: f64,
    pub placement: Placement,
    pub file: Option<PathBuf>,
    /// Calibration: layer duration, defaults to the first record's gate time.
    pub layer_duration_ns: Option<f64>,
    /// Calibration: multiplies the layer duration.
    pub duration_scale: f64,
    /// Calibration: include the readout confusion.
    pub readout: bool,
    pub spam_prep_offset: f64,
    pub spam_meas_offset: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            kind: NoiseKind::None,
            p: 0.0,
            placement: Placement::PerLayer,
            file: None,
            layer_duration_ns: None,
            duration_scale: 1.0,
            readout: true,
            spam_prep_offset: 0.0,
            spam_meas_offset: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeConfig {
    pub enabled: bool,
    /// Fixed angle when disabled.
    pub theta: f64,
    pub bounds: [f64; 2],
    pub xtol: f64,
    pub ftol: Option<f64>,
    pub max_iters: usize,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        Self { enabled: true, theta: 0.3 * std::f64::consts::PI, bounds: [0.0, FRAC_PI_2], xtol: 1e-6, ftol: None, max_iters: 30 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub filter: FilterConfig,
    pub grid: GridConfig,
    pub trotter: TrotterConfig,
    pub sampling: SamplingConfig,
    pub noise: NoiseConfig,
    pub als: AlsParams,
    pub optimize: OptimizeConfig,
    /// Relative `file` paths resolve against this.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| config_err(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable in TOML")
    }

    /// SHA-256 of the canonical TOML form, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        if !(2..=12).contains(&m.n_qubits) {
            return Err(config_err(format!("model.n_qubits must be in 2..=12, got {}", m.n_qubits)));
        }
        if !m.j_over_h.is_finite() || m.j_over_h < 0.0 {
            return Err(config_err(format!("model.j_over_h must be non-negative, got {}", m.j_over_h)));
        }
        if !(self.filter.eta_over_h > 0.0) || !self.filter.eta_over_h.is_finite() {
            return Err(config_err(format!("filter.eta_over_h must be positive, got {}", self.filter.eta_over_h)));
        }
        if self.trotter.evolution == EvolutionKind::Trotter && self.trotter.m_steps == 0 {
            return Err(config_err("trotter.m_steps must be at least 1"));
        }
        // TOML integers are signed 64-bit
        if i64::try_from(self.sampling.seed).is_err() {
            return Err(config_err(format!("sampling.seed must be at most {}", i64::MAX)));
        }
        if self.sampling.shots == ShotsSetting::Count(0) {
            return Err(config_err("sampling.shots must be positive or \"exact\""));
        }
        let n = &self.noise;
        if !(0.0..=1.0).contains(&n.p) {
            return Err(config_err(format!("noise.p must be in [0, 1], got {}", n.p)));
        }
        if matches!(n.kind, NoiseKind::Kraus | NoiseKind::Calibration) && n.file.is_none() {
            return Err(config_err("noise.file is required for kraus and calibration noise"));
        }
        if !(n.duration_scale > 0.0) {
            return Err(config_err("noise.duration_scale must be positive"));
        }
        if !n.spam_prep_offset.is_finite() || !n.spam_meas_offset.is_finite() {
            return Err(config_err("SPAM offsets must be finite"));
        }
        self.als.validate().map_err(|e| config_err(format!("als: {e}")))?;
        let o = &self.optimize;
        let [lo, hi] = o.bounds;
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(config_err(format!("optimize.bounds must satisfy lo < hi, got [{lo}, {hi}]")));
        }
        if !(o.xtol > 0.0) || o.max_iters == 0 {
            return Err(config_err("optimize.xtol must be positive and max_iters at least 1"));
        }
        if !o.theta.is_finite() {
            return Err(config_err("optimize.theta must be finite"));
        }
        self.time_grid()?;
        Ok(())
    }

    pub fn filter_spec(&self) -> Result<FilterSpec> {
        FilterSpec::new(self.filter.kind, self.filter.eta_over_h).map_err(|e| config_err(e.to_string()))
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        let filter = self.filter_spec()?;
        let default = TimeGrid::for_filter(&filter).map_err(|e| config_err(e.to_string()))?;
        let grid = match (self.grid.dw, self.grid.len) {
            (None, None) => Ok(default),
            (Some(dw), None) => TimeGrid::with_spacing(dw, 5.0),
            (dw, Some(len)) => TimeGrid::new(len, dw.unwrap_or(default.dw())),
        };
        grid.map_err(|e| config_err(format!("grid: {e}")))
    }

    pub fn evolution(&self) -> Evolution {
        match self.trotter.evolution {
            EvolutionKind::Trotter => Evolution::Trotter { m_steps: self.trotter.m_steps },
            EvolutionKind::Exact => Evolution::Exact,
        }
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        match &self.base_dir {
            Some(base) if path.is_relative() => base.join(path),
            _ => path.to_path_buf(),
        }
    }

    fn read_file(&self, path: &Path) -> Result<String> {
        let full = self.resolve(path);
        fs::read_to_string(&full).map_err(|e| config_err(format!("{}: {e}", full.display())))
    }

    /// The noise model described by `[noise]`, or `None` for a clean run.
    pub fn build_noise(&self) -> Result<Option<NoiseSpec>> {
        let cfg = &self.noise;
        let n_qubits = self.model.n_qubits;
        let mut spec = match cfg.kind {
            NoiseKind::None => None,
            NoiseKind::Depolarizing => {
                let mut s = NoiseSpec::depolarizing_per_layer(cfg.p, n_qubits)?;
                s.placement = cfg.placement;
                Some(s)
            }
            NoiseKind::Kraus => {
                let path = cfg.file.as_deref().expect("checked in validate");
                let text = self.read_file(path)?;
                let spec: NoiseSpec = if path.extension().is_some_and(|e| e == "json") {
                    serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?
                } else {
                    toml::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?
                };
                Some(spec)
            }
            NoiseKind::Calibration => {
                let path = cfg.file.as_deref().expect("checked in validate");
                let set = load_calibration(&self.read_file(path)?, path)?;
                if set.records.len() < n_qubits {
                    return Err(Error::Calibration(format!(
                        "{} has {} usable qubits, the model needs {n_qubits}",
                        path.display(),
                        set.records.len()
                    )));
                }
                for w in &set.warnings {
                    log::warn!("{w}");
                }
                let records = &set.records[..n_qubits];
                let dt = cfg.layer_duration_ns.unwrap_or(records[0].gate_time_ns) * cfg.duration_scale;
                let mut s = calibration_to_noise(records, dt)?;
                s.placement = cfg.placement;
                if !cfg.readout {
                    s.readout = None;
                }
                Some(s)
            }
        };
        if cfg.spam_prep_offset != 0.0 || cfg.spam_meas_offset != 0.0 {
            let s = spec.get_or_insert_with(|| NoiseSpec { label: "spam".into(), ..NoiseSpec::default() });
            s.spam = Some(SpamOffsets { prep_offset: cfg.spam_prep_offset, meas_offset: cfg.spam_meas_offset });
        }
        Ok(spec)
    }
}

/// Calibration from a delimited table, or a TOML `CalibrationSet` when the
/// extension is `.toml`.
pub fn load_calibration(text: &str, path: &Path) -> Result<CalibrationSet> {
    if path.extension().is_some_and(|e| e == "toml") {
        let set: CalibrationSet = toml::from_str(text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        for r in &set.records {
            r.validate()?;
        }
        Ok(set)
    } else {
        parse_calibration_table(text)
    }
}

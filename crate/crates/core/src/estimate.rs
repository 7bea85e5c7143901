//! Peak search, gap estimates, the trial-angle optimizer and the full
//! sample → transform → correct → cost pipeline.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::baseline::{als_baseline, AlsParams, BaselineResult};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::model::{build_tfim, HamiltonianTerms};
use crate::noise::NoiseSpec;
use crate::oracle::{eigh, exact_gap, EigenSystem};
use crate::sim::{sample_series, SeriesRequest};
use crate::spectral::{spectral_function, FilterSpec, Spectrum, TimeGrid, TimeSeries};

/// Cost reported when no corrected peak is found in the window.
pub const PENALTY_COST: f64 = 1e6;

/// Second-order estimate `2[1 − (1 − 1/N) J/h]` of the first gap, in units of `h`.
pub fn initial_gap(n_qubits: usize, j_over_h: f64) -> f64 {
    if j_over_h >= 1.0 {
        log::warn!("J/h = {j_over_h} is outside the paramagnetic regime; the initial gap estimate is unreliable");
    }
    2.0 * (1.0 - (1.0 - 1.0 / n_qubits as f64) * j_over_h)
}

/// `[center − half_width, center + half_width]`, inclusive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetWindow {
    pub center: f64,
    pub half_width: f64,
}

impl TargetWindow {
    pub fn new(center: f64, half_width: f64) -> Self {
        Self { center, half_width }
    }

    pub fn lo(&self) -> f64 {
        self.center - self.half_width
    }

    pub fn hi(&self) -> f64 {
        self.center + self.half_width
    }

    pub fn contains(&self, w: f64) -> bool {
        // a hair of slack so bins sitting on the edge are not lost to rounding
        let eps = 1e-12 * self.half_width.abs().max(1.0);
        w >= self.lo() - eps && w <= self.hi() + eps
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub index: usize,
    pub omega: f64,
    pub height: f64,
}

/// Interior local maximum in the window closest to its center; ties go to
/// the lower frequency.
pub fn find_peak_in(values: &[f64], grid: &TimeGrid, window: &TargetWindow) -> Option<Peak> {
    let mut best: Option<Peak> = None;
    for m in 1..values.len().saturating_sub(1) {
        let w = grid.signed_omega(m);
        if !window.contains(w) || !(values[m - 1] < values[m] && values[m] >= values[m + 1]) {
            continue;
        }
        let candidate = Peak { index: m, omega: w, height: values[m] };
        best = match best {
            None => Some(candidate),
            Some(b) => {
                let (db, dc) = ((b.omega - window.center).abs(), (w - window.center).abs());
                let tie = (dc - db).abs() <= 1e-12 * window.half_width.abs().max(1.0);
                if (!tie && dc < db) || (tie && w < b.omega) {
                    Some(candidate)
                } else {
                    Some(b)
                }
            }
        };
    }
    best
}

pub fn find_peak_near(spectrum: &Spectrum, window: &TargetWindow) -> Option<Peak> {
    find_peak_in(&spectrum.values, &spectrum.grid, window)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateStatus {
    Found,
    BareNotFound,
    CorrectedNotFound,
    NotFound,
}

/// Bare and corrected gap estimates. Missing peaks leave `NaN` in the
/// affected fields and are flagged in `status`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapEstimate {
    pub delta_bare: f64,
    pub delta_corr: f64,
    pub delta_exact: f64,
    pub rel_error_bare: f64,
    pub rel_error_corr: f64,
    pub peak_height_bare: f64,
    pub peak_height_corr: f64,
    pub status: EstimateStatus,
}

impl GapEstimate {
    pub fn corrected_found(&self) -> bool {
        matches!(self.status, EstimateStatus::Found | EstimateStatus::BareNotFound)
    }

    pub fn bare_found(&self) -> bool {
        matches!(self.status, EstimateStatus::Found | EstimateStatus::CorrectedNotFound)
    }
}

fn rel_error(x: f64, exact: f64) -> f64 {
    (x - exact).abs() / exact.abs()
}

/// `Δ_bare` from the raw spectrum and `Δ_corr` after ALS correction.
pub fn estimate_gaps(
    spectrum: &Spectrum,
    window: &TargetWindow,
    als: &AlsParams,
    oracle_gap: f64,
) -> Result<(GapEstimate, BaselineResult)> {
    let bare = find_peak_near(spectrum, window);
    let base = als_baseline(&spectrum.values, als)?;
    let corr = find_peak_in(&base.corrected, &spectrum.grid, window);
    let status = match (bare.is_some(), corr.is_some()) {
        (true, true) => EstimateStatus::Found,
        (false, true) => EstimateStatus::BareNotFound,
        (true, false) => EstimateStatus::CorrectedNotFound,
        (false, false) => EstimateStatus::NotFound,
    };
    let nan = f64::NAN;
    let est = GapEstimate {
        delta_bare: bare.map_or(nan, |p| p.omega),
        delta_corr: corr.map_or(nan, |p| p.omega),
        delta_exact: oracle_gap,
        rel_error_bare: bare.map_or(nan, |p| rel_error(p.omega, oracle_gap)),
        rel_error_corr: corr.map_or(nan, |p| rel_error(p.omega, oracle_gap)),
        peak_height_bare: bare.map_or(nan, |p| p.height),
        peak_height_corr: corr.map_or(nan, |p| p.height),
        status,
    };
    Ok((est, base))
}

/// `1 / (h A_corr(Δ_corr))`, or [`PENALTY_COST`] when there is no usable peak.
pub fn cost_from_estimate(est: &GapEstimate) -> f64 {
    if est.corrected_found() && est.peak_height_corr > 0.0 {
        1.0 / est.peak_height_corr
    } else {
        PENALTY_COST
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinimizeOptions {
    pub xtol: f64,
    /// Stop when successive accepted costs differ by less than this.
    pub ftol: Option<f64>,
    /// Cap on function evaluations.
    pub max_iters: usize,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self { xtol: 1e-6, ftol: Some(1e-6), max_iters: 30 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    CostTolerance,
    IterationCap,
    EarlyStop,
    /// A single fixed-angle evaluation, no optimization.
    FixedAngle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry<T> {
    pub iteration: usize,
    pub theta: f64,
    pub cost: f64,
    /// Whether this evaluation became the new incumbent.
    pub accepted: bool,
    pub data: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerTrace<T> {
    pub entries: Vec<TraceEntry<T>>,
    pub termination: Termination,
    pub theta_opt: f64,
    pub cost_opt: f64,
}

/// Bounded Brent minimisation (golden section with parabolic steps) in the
/// style of `fminbound`. Every evaluation is recorded; `stop` may end the
/// search after any evaluation.
pub fn minimize_bounded<T>(
    mut f: impl FnMut(f64) -> Result<(f64, T)>,
    lo: f64,
    hi: f64,
    opts: &MinimizeOptions,
    mut stop: Option<&mut dyn FnMut(&TraceEntry<T>) -> bool>,
) -> Result<OptimizerTrace<T>> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidArgument(format!("bounds must satisfy lo < hi, got [{lo}, {hi}]")));
    }
    if opts.max_iters == 0 {
        return Err(Error::InvalidArgument("optimizer needs at least one evaluation".into()));
    }
    let sqrt_eps = f64::EPSILON.sqrt();
    let golden_mean = 0.5 * (3.0 - 5f64.sqrt());
    let (mut a, mut b) = (lo, hi);
    let mut fulc = a + golden_mean * (b - a);
    let (mut nfc, mut xf) = (fulc, fulc);
    let (mut rat, mut e) = (0.0f64, 0.0f64);

    let mut entries: Vec<TraceEntry<T>> = Vec::new();
    let mut eval = |x: f64, entries: &mut Vec<TraceEntry<T>>, incumbent: f64| -> Result<(f64, bool)> {
        let (fx, data) = f(x)?;
        if !fx.is_finite() {
            return Err(Error::InvalidArgument(format!("objective returned {fx} at {x}")));
        }
        let accepted = entries.is_empty() || fx <= incumbent;
        entries.push(TraceEntry { iteration: entries.len(), theta: x, cost: fx, accepted, data });
        let halt = match stop.as_mut() {
            Some(cb) => cb(entries.last().expect("just pushed")),
            None => false,
        };
        Ok((fx, halt))
    };

    let (mut fx, halt) = eval(xf, &mut entries, f64::INFINITY)?;
    let finish = |entries: Vec<TraceEntry<T>>, termination, xf, fx| OptimizerTrace {
        entries,
        termination,
        theta_opt: xf,
        cost_opt: fx,
    };
    if halt {
        return Ok(finish(entries, Termination::EarlyStop, xf, fx));
    }
    let (mut ffulc, mut fnfc) = (fx, fx);
    let mut xm = 0.5 * (a + b);
    let mut tol1 = sqrt_eps * xf.abs() + opts.xtol / 3.0;
    let mut tol2 = 2.0 * tol1;

    while (xf - xm).abs() > tol2 - 0.5 * (b - a) {
        if entries.len() >= opts.max_iters {
            return Ok(finish(entries, Termination::IterationCap, xf, fx));
        }
        let mut golden = true;
        if e.abs() > tol1 {
            golden = false;
            let mut r = (xf - nfc) * (fx - ffulc);
            let mut q = (xf - fulc) * (fx - fnfc);
            let mut p = (xf - fulc) * q - (xf - nfc) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            r = e;
            e = rat;
            if p.abs() < (0.5 * q * r).abs() && p > q * (a - xf) && p < q * (b - xf) {
                rat = p / q;
                let x = xf + rat;
                if (x - a) < tol2 || (b - x) < tol2 {
                    let si = if xm - xf >= 0.0 { 1.0 } else { -1.0 };
                    rat = tol1 * si;
                }
            } else {
                golden = true;
            }
        }
        if golden {
            e = if xf >= xm { a - xf } else { b - xf };
            rat = golden_mean * e;
        }
        let si = if rat >= 0.0 { 1.0 } else { -1.0 };
        let x = xf + si * rat.abs().max(tol1);
        let (fu, halt) = eval(x, &mut entries, fx)?;
        let previous_best = fx;
        if fu <= fx {
            if x >= xf {
                a = xf;
            } else {
                b = xf;
            }
            fulc = nfc;
            ffulc = fnfc;
            nfc = xf;
            fnfc = fx;
            xf = x;
            fx = fu;
        } else {
            if x < xf {
                a = x;
            } else {
                b = x;
            }
            if fu <= fnfc || nfc == xf {
                fulc = nfc;
                ffulc = fnfc;
                nfc = x;
                fnfc = fu;
            } else if fu <= ffulc || fulc == xf || fulc == nfc {
                fulc = x;
                ffulc = fu;
            }
        }
        if halt {
            return Ok(finish(entries, Termination::EarlyStop, xf, fx));
        }
        if let Some(ftol) = opts.ftol {
            if fu <= previous_best && (previous_best - fu).abs() < ftol {
                return Ok(finish(entries, Termination::CostTolerance, xf, fx));
            }
        }
        xm = 0.5 * (a + b);
        tol1 = sqrt_eps * xf.abs() + opts.xtol / 3.0;
        tol2 = 2.0 * tol1;
    }
    Ok(finish(entries, Termination::Converged, xf, fx))
}

/// One cost evaluation with everything needed to replot it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub theta: f64,
    pub cost: f64,
    pub penalized: bool,
    pub estimate: GapEstimate,
    pub series: TimeSeries,
    pub raw: Spectrum,
    pub baseline: BaselineResult,
}

/// Model, oracle and settings shared by every cost evaluation of a run.
pub struct Pipeline {
    pub model: HamiltonianTerms,
    pub eigs: EigenSystem,
    pub delta_exact: f64,
    pub delta0: f64,
    pub window: TargetWindow,
    pub filter: FilterSpec,
    pub grid: TimeGrid,
    pub noise: Option<NoiseSpec>,
    pub config: RunConfig,
}

impl Pipeline {
    pub fn new(config: &RunConfig) -> Result<Self> {
        config.validate()?;
        let model = build_tfim(config.model.n_qubits, config.model.j_over_h, 1.0).map_err(|e| e.at("model"))?;
        let eigs = eigh(&model.dense()).map_err(|e| e.at("oracle"))?;
        let delta_exact = exact_gap(&eigs, 1).map_err(|e| e.at("oracle"))?.value;
        let filter = config.filter_spec()?;
        let grid = config.time_grid()?;
        let noise = config.build_noise().map_err(|e| e.at("noise"))?;
        let delta0 = initial_gap(config.model.n_qubits, config.model.j_over_h);
        Ok(Self {
            window: TargetWindow::new(delta0, filter.eta),
            model,
            eigs,
            delta_exact,
            delta0,
            filter,
            grid,
            noise,
            config: config.clone(),
        })
    }

    pub fn series(&self, theta: f64) -> Result<TimeSeries> {
        let s = &self.config.sampling;
        let mut req = SeriesRequest::new(&self.model, theta, self.config.evolution(), self.grid);
        req.noise = self.noise.as_ref();
        req.shots = s.shots.count();
        req.seed = s.seed;
        req.mirror = s.mirror_negative_times;
        req.backend = s.backend;
        req.eigs = Some(&self.eigs);
        sample_series(&req).map_err(|e| e.at("sampling"))
    }

    pub fn evaluate(&self, theta: f64) -> Result<Evaluation> {
        let series = self.series(theta)?;
        let mut raw = spectral_function(&series, &self.filter).map_err(|e| e.at("transform"))?;
        raw.meta.noise_label = self.noise.as_ref().map(|n| n.label.clone()).unwrap_or_else(|| "none".into());
        let (estimate, baseline) =
            estimate_gaps(&raw, &self.window, &self.config.als, self.delta_exact).map_err(|e| e.at("baseline"))?;
        let cost = cost_from_estimate(&estimate);
        Ok(Evaluation { theta, cost, penalized: cost == PENALTY_COST, estimate, series, raw, baseline })
    }

    pub fn cost(&self, theta: f64) -> Result<f64> {
        Ok(self.evaluate(theta)?.cost)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub label: String,
    pub iteration: usize,
    pub theta: f64,
    pub raw: Vec<f64>,
    pub corrected: Vec<f64>,
    pub baseline: Vec<f64>,
}

/// Wall-clock time per stage. Not serialised with the record.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Timings {
    pub setup: Duration,
    pub optimize: Duration,
    pub total: Duration,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub version: String,
    pub config: RunConfig,
    pub config_hash: String,
    pub seed: u64,
    pub delta_exact: f64,
    pub delta0: f64,
    pub window: TargetWindow,
    pub theta_opt: f64,
    pub result: Evaluation,
    pub snapshots: Vec<Snapshot>,
    pub trace: OptimizerTrace<GapEstimate>,
    pub penalized_evaluations: usize,
    #[serde(skip)]
    pub timings: Timings,
}

fn snapshot(label: &str, iteration: usize, ev: &Evaluation) -> Snapshot {
    Snapshot {
        label: label.into(),
        iteration,
        theta: ev.theta,
        raw: ev.raw.values.clone(),
        corrected: ev.baseline.corrected.clone(),
        baseline: ev.baseline.baseline.clone(),
    }
}

/// Runs sampling, transform, correction and (optionally) the angle search.
pub fn run_qge(config: &RunConfig) -> Result<RunRecord> {
    let start = Instant::now();
    let pipeline = Pipeline::new(config)?;
    let setup = start.elapsed();
    let opt = &config.optimize;
    let mut cache: Vec<Evaluation> = Vec::new();
    let trace = if opt.enabled {
        let opts = MinimizeOptions { xtol: opt.xtol, ftol: opt.ftol, max_iters: opt.max_iters };
        minimize_bounded(
            |theta| {
                let ev = pipeline.evaluate(theta)?;
                let out = (ev.cost, ev.estimate);
                cache.push(ev);
                Ok(out)
            },
            opt.bounds[0],
            opt.bounds[1],
            &opts,
            None,
        )
        .map_err(|e| e.at("optimize"))?
    } else {
        let ev = pipeline.evaluate(opt.theta)?;
        let entry = TraceEntry { iteration: 0, theta: ev.theta, cost: ev.cost, accepted: true, data: ev.estimate };
        let trace = OptimizerTrace {
            entries: vec![entry],
            termination: Termination::FixedAngle,
            theta_opt: ev.theta,
            cost_opt: ev.cost,
        };
        cache.push(ev);
        trace
    };
    let best = cache
        .iter()
        .position(|e| e.theta == trace.theta_opt)
        .ok_or_else(|| Error::Consistency("optimizer returned an angle that was never evaluated".into()))?;
    let accepted: Vec<usize> = trace.entries.iter().filter(|e| e.accepted).map(|e| e.iteration).collect();
    let mid = accepted[accepted.len() / 2];
    let snapshots = vec![
        snapshot("first", 0, &cache[0]),
        snapshot("intermediate", mid, &cache[mid]),
        snapshot("final", best, &cache[best]),
    ];
    let penalized = cache.iter().filter(|e| e.penalized).count();
    let optimize = start.elapsed() - setup;
    Ok(RunRecord {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        config_hash: config.hash(),
        seed: config.sampling.seed,
        delta_exact: pipeline.delta_exact,
        delta0: pipeline.delta0,
        window: pipeline.window,
        theta_opt: trace.theta_opt,
        result: cache.swap_remove(best),
        snapshots,
        trace,
        penalized_evaluations: penalized,
        timings: Timings { setup, optimize, total: start.elapsed() },
    })
}

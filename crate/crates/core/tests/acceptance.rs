//! Acceptance criteria 1 to 11. One PASS/FAIL line per criterion; the process
//! exits non-zero when any criterion fails.

use std::f64::consts::PI;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qge_core::baseline::{als_baseline, AlsParams};
use qge_core::config::RunConfig;
use qge_core::estimate::{find_peak_near, run_qge, Pipeline, RunRecord};
use qge_core::model::build_tfim;
use qge_core::noise::{global_depolarizing_probability, interleaved_depolarizing, reduce_depolarizing};
use qge_core::oracle::eigh;
use qge_core::sim::{sample_series, trial_rotation_state, CircuitLayers, DensityMatrix, Evolution, Layer, SeriesRequest};
use qge_core::spectral::{
    lehmann_lines, lehmann_reference, lehmann_spectrum, origin_double_count, spectral_function, FilterSpec, TimeGrid,
};

type Check = anyhow::Result<Outcome>;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Check {
    Ok(Outcome { pass, detail: detail.into() })
}

fn config(name: &str) -> anyhow::Result<RunConfig> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    Ok(RunConfig::load(&path)?)
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

fn c1_headline() -> Check {
    let (record, took) = timed(|| anyhow::Ok(run_qge(&config("headline.toml")?)?));
    let record: RunRecord = record?;
    let e = &record.result.estimate;
    outcome(
        e.rel_error_corr < 0.01 && took.as_secs_f64() < 60.0,
        format!(
            "theta={:.4} delta_corr={:.4} delta_exact={:.6} rel_error={:.3}% in {:.1}s",
            record.theta_opt,
            e.delta_corr,
            record.delta_exact,
            100.0 * e.rel_error_corr,
            took.as_secs_f64()
        ),
    )
}

fn c2_shots() -> Check {
    let cfg = config("headline_shots.toml")?;
    let (record, took) = timed(|| run_qge(&cfg));
    let record = record?;
    let e = &record.result.estimate;
    outcome(
        e.rel_error_corr < 0.03 && took.as_secs_f64() < 120.0,
        format!(
            "shots={:?} seed={} delta_corr={:.4} rel_error={:.3}% in {:.1}s",
            cfg.sampling.shots.count(),
            cfg.sampling.seed,
            e.delta_corr,
            100.0 * e.rel_error_corr,
            took.as_secs_f64()
        ),
    )
}

fn random_layer(rng: &mut ChaCha8Rng) -> Layer {
    let a = rng.gen_range(-PI..PI);
    match rng.gen_range(0..4) {
        0 => Layer::TrialRotation(a),
        1 => Layer::TrialRotationInverse(a),
        2 => Layer::TrotterZZ(a),
        _ => Layer::TrotterX(a),
    }
}

fn c3_depolarizing_reduction() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.gen_range(1..=3);
        let depth = rng.gen_range(1..=8);
        let circuit = CircuitLayers::new(n, (0..depth).map(|_| random_layer(&mut rng)).collect());
        let ps: Vec<f64> = (0..depth).map(|_| rng.gen_range(0.0..=0.05)).collect();
        let interleaved = interleaved_depolarizing(&circuit, &ps)?;
        let mut psi = vec![num_complex::Complex64::new(0.0, 0.0); 1 << n];
        psi[0] = num_complex::Complex64::new(1.0, 0.0);
        let noiseless = DensityMatrix::from_pure(&circuit.unitary().apply(&psi));
        let reduced = reduce_depolarizing(&circuit, &ps)?;
        worst = worst.max(interleaved.max_abs_diff(&reduced.apply(&noiseless)));
    }
    outcome(worst <= 1e-12, format!("100 circuits, max entry deviation {worst:.2e}"))
}

fn interior_maxima(values: &[f64], grid: &TimeGrid) -> Vec<f64> {
    (1..values.len() - 1)
        .filter(|&m| values[m - 1] < values[m] && values[m] >= values[m + 1])
        .map(|m| grid.signed_omega(m))
        .collect()
}

fn c4_spam_invariance() -> Check {
    let model = build_tfim(5, 0.4, 1.0)?;
    let eigs = eigh(&model.dense())?;
    let filter = FilterSpec::lorentzian(0.3)?;
    let grid = TimeGrid::for_filter(&filter)?;
    let theta = 0.3 * PI;
    let spectrum_for = |prep: f64, meas: f64| {
        let lines = lehmann_lines(
            &eigs.energies,
            &eigs.expand(&trial_rotation_state(prep, 5)),
            &eigs.expand(&trial_rotation_state(meas, 5)),
        );
        let values = lehmann_spectrum(&lines, &filter, &grid);
        (lines, values)
    };
    let (lines0, values0) = spectrum_for(theta, theta);
    let peaks0 = interior_maxima(&values0, &grid);
    let mut sorted = peaks0.clone();
    sorted.sort_by(f64::total_cmp);
    let min_sep = sorted.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    if min_sep <= 2.0 * filter.eta {
        return outcome(false, format!("precondition: noiseless peaks {peaks0:?} closer than 2 eta"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut mismatches = 0;
    let mut max_weight_change = 0.0f64;
    for _ in 0..20 {
        let (a, b) = (rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1));
        let (lines, values) = spectrum_for(theta + a, theta + b);
        let peaks = interior_maxima(&values, &grid);
        let same = peaks.len() == peaks0.len()
            && peaks.iter().zip(&peaks0).all(|(p, q)| (p - q).abs() <= grid.dw() + 1e-12);
        if !same {
            mismatches += 1;
        }
        let change = lines.iter().zip(&lines0).map(|(l, l0)| (l.weight - l0.weight).abs()).fold(0.0, f64::max);
        max_weight_change = max_weight_change.max(change);
    }
    outcome(
        mismatches == 0 && max_weight_change > 1e-3,
        format!(
            "peaks {:?}, {mismatches}/20 trials moved a peak, max weight change {max_weight_change:.3e}",
            peaks0.iter().map(|w| (w * 1000.0).round() / 1000.0).collect::<Vec<_>>()
        ),
    )
}

fn c5_lehmann() -> Check {
    let filter = FilterSpec::lorentzian(0.3)?;
    let grid = TimeGrid::for_filter(&filter)?;
    let theta = 0.3 * PI;
    let mut pass = true;
    let mut parts = Vec::new();
    for n in [2usize, 5] {
        let model = build_tfim(n, 0.4, 1.0)?;
        let eigs = eigh(&model.dense())?;
        let mut req = SeriesRequest::new(&model, theta, Evolution::Exact, grid);
        req.eigs = Some(&eigs);
        let series = sample_series(&req)?;
        let sim = spectral_function(&series, &filter)?;
        let reference = lehmann_reference(&eigs, theta, &filter, &grid)?;
        let height = reference.max_value();
        let offset = origin_double_count(&series, &filter)?;
        let dev = |shift: f64| {
            sim.values.iter().zip(&reference.values).map(|(a, b)| (a - shift - b).abs()).fold(0.0, f64::max) / height
        };
        let (literal, adjusted) = (dev(0.0), dev(offset));
        // the origin sample enters both branches; that constant is compared explicitly
        pass &= adjusted <= 0.02;
        parts.push(format!(
            "N={n}: {:.2}% after removing the origin term {offset:.4} ({:.1}% literal)",
            100.0 * adjusted,
            100.0 * literal
        ));
    }
    outcome(pass, parts.join("; "))
}

fn c6_depolarizing() -> Check {
    let cfg = config("depolarizing.toml")?;
    let record = run_qge(&cfg)?;
    let e = &record.result.estimate;
    let depth = 2 * cfg.trotter.m_steps + 2;
    let p_gd = global_depolarizing_probability(&vec![cfg.noise.p; depth]);
    let noisy = Pipeline::new(&cfg)?;
    let mut clean_cfg = cfg.clone();
    clean_cfg.noise = Default::default();
    let clean = Pipeline::new(&clean_cfg)?;
    let theta = record.theta_opt;
    let clean_eval = clean.evaluate(theta)?;
    let peak = find_peak_near(&clean_eval.raw, &clean.window)
        .ok_or_else(|| anyhow::anyhow!("no noiseless peak in the window"))?;
    let noisy_eval = noisy.evaluate(theta)?;
    let ratio = noisy_eval.raw.values[peak.index] / peak.height;
    let scaling_error = (ratio - (1.0 - p_gd)).abs() / (1.0 - p_gd);
    outcome(
        e.rel_error_corr < 0.01 && scaling_error < 0.02,
        format!(
            "p={} p_gd={p_gd:.5}: rel_error_corr={:.3}%, peak ratio {ratio:.5} vs {:.5} ({:.2}% off)",
            cfg.noise.p,
            100.0 * e.rel_error_corr,
            1.0 - p_gd,
            100.0 * scaling_error
        ),
    )
}

fn m_sweep(base: &RunConfig) -> anyhow::Result<Vec<f64>> {
    [5, 10, 15, 25, 40]
        .iter()
        .map(|&m| {
            let mut cfg = base.clone();
            cfg.trotter.m_steps = m;
            Ok(run_qge(&cfg)?.result.estimate.rel_error_bare)
        })
        .collect()
}

fn trend_ok(errors: &[f64]) -> bool {
    errors[errors.len() - 1] <= errors[0] && errors.windows(2).all(|w| w[1] <= 1.2 * w[0])
}

fn c7_trotter_trend() -> Check {
    let base = config("headline.toml")?;
    let optimized = m_sweep(&base)?;
    let mut fixed_cfg = base.clone();
    fixed_cfg.optimize.enabled = false;
    fixed_cfg.optimize.theta = 0.3 * PI;
    let fixed = m_sweep(&fixed_cfg)?;
    let fmt = |v: &[f64]| v.iter().map(|e| format!("{:.2}%", 100.0 * e)).collect::<Vec<_>>().join(", ");
    outcome(
        trend_ok(&optimized),
        format!(
            "optimized theta per M: [{}]; recorded at fixed theta=0.3pi: [{}] (trend {})",
            fmt(&optimized),
            fmt(&fixed),
            if trend_ok(&fixed) { "holds" } else { "broken" }
        ),
    )
}

fn c8_als() -> Check {
    let grid = TimeGrid::new(134, 0.075)?;
    let filter = FilterSpec::lorentzian(0.3)?;
    let a: Vec<f64> = (0..grid.len()).map(|m| filter.line_shape(grid.omega(m) - 1.5) + 0.2 + 0.05 * grid.omega(m)).collect();
    let expect = (1.5 / grid.dw()).round() as i64;
    let mut pass = true;
    let mut parts = Vec::new();
    for lambda in [1.0, 10.0, 100.0, 1e4] {
        let res = als_baseline(&a, &AlsParams::new(lambda, 1e-2))?;
        let arg = (0..grid.len() / 2).max_by(|&x, &y| res.corrected[x].total_cmp(&res.corrected[y])).unwrap() as i64;
        pass &= res.converged
            && res.iterations_used <= 50
            && res.max_relative_residual <= 1e-9
            && (arg - expect).abs() <= 1;
        parts.push(format!(
            "lambda={lambda:e}: bin {arg}/{expect}, {} iters, residual {:.1e}",
            res.iterations_used, res.max_relative_residual
        ));
    }
    outcome(pass, parts.join("; "))
}

fn c9_scale() -> Check {
    let cfg = config("calibration_n9.toml")?;
    let (record, took) = timed(|| run_qge(&cfg));
    let record = record?;
    let e = &record.result.estimate;
    let err = e.rel_error_corr;
    let note = if err < 0.05 {
        "below 5%"
    } else if err < 0.1 {
        "recorded: between 5% and 10%"
    } else {
        "above 10%"
    };
    outcome(
        err < 0.1 && took.as_secs_f64() < 1800.0,
        format!(
            "N=9 J/h=0.6 M={} theta={:.4}: delta_corr={:.4} delta_exact={:.6} rel_error={:.2}% ({note}) in {:.1}s",
            cfg.trotter.m_steps,
            record.theta_opt,
            e.delta_corr,
            record.delta_exact,
            100.0 * err,
            took.as_secs_f64()
        ),
    )
}

fn c10_gaussian() -> Check {
    let (record, took) = timed(|| anyhow::Ok(run_qge(&config("gaussian.toml")?)?));
    let record = record?;
    let e = &record.result.estimate;
    outcome(
        e.rel_error_corr < 0.01 && took.as_secs_f64() < 60.0,
        format!(
            "theta={:.4} delta_corr={:.4} rel_error={:.3}% in {:.1}s",
            record.theta_opt,
            e.delta_corr,
            100.0 * e.rel_error_corr,
            took.as_secs_f64()
        ),
    )
}

fn c11_determinism() -> Check {
    let mut identical = true;
    let mut checked = Vec::new();
    for name in ["headline.toml", "headline_shots.toml", "depolarizing.toml"] {
        let cfg = config(name)?;
        let a = serde_json::to_vec(&run_qge(&cfg)?)?;
        let b = serde_json::to_vec(&run_qge(&cfg)?)?;
        // also independent of the worker count
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build()?;
        let c = serde_json::to_vec(&pool.install(|| run_qge(&cfg))?)?;
        identical &= a == b && a == c;
        checked.push(format!("{name} ({} bytes)", a.len()));
    }
    outcome(identical, format!("records byte-identical across reruns and pool sizes: {}", checked.join(", ")))
}

fn main() {
    let criteria: [(u32, &str, fn() -> Check); 11] = [
        (1, "noiseless headline", c1_headline),
        (2, "shot noise", c2_shots),
        (3, "depolarizing reduction", c3_depolarizing_reduction),
        (4, "SPAM invariance", c4_spam_invariance),
        (5, "Lehmann equivalence", c5_lehmann),
        (6, "depolarizing robustness", c6_depolarizing),
        (7, "Trotter convergence trend", c7_trotter_trend),
        (8, "ALS solver", c8_als),
        (9, "scale ceiling", c9_scale),
        (10, "Gaussian filter", c10_gaussian),
        (11, "determinism", c11_determinism),
    ];
    let only: Option<Vec<u32>> =
        std::env::var("QGE_CRITERIA").ok().map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let mut failed = Vec::new();
    for (n, name, check) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&n)) {
            continue;
        }
        let (result, took) = timed(check);
        let (pass, detail) = match result {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e:#}")),
        };
        println!(
            "criterion {n:>2} {} {name}: {detail} [{:.1}s]",
            if pass { "PASS" } else { "FAIL" },
            took.as_secs_f64()
        );
        if !pass {
            failed.push(n);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}

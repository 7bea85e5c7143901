use qge_core::config::{EvolutionKind, NoiseKind, ShotsSetting};
use qge_core::estimate::{Pipeline, Termination};
use qge_core::noise::global_depolarizing_probability;
use qge_core::spectral::{spectral_function, TimeSeries};
use qge_core::{run_qge, Error, RunConfig};

fn small(n: usize, m: usize) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.model.n_qubits = n;
    cfg.model.j_over_h = 0.4;
    cfg.trotter.m_steps = m;
    cfg.sampling.shots = ShotsSetting::Exact(qge_core::config::ExactTag::Exact);
    cfg.optimize.enabled = false;
    cfg
}

#[test]
fn register_depolarizing_mixes_with_the_constant_response() {
    let (n, m, p) = (3, 4, 0.01);
    let clean = Pipeline::new(&small(n, m)).unwrap();
    let mut noisy_cfg = small(n, m);
    noisy_cfg.noise.kind = NoiseKind::Depolarizing;
    noisy_cfg.noise.p = p;
    let noisy = Pipeline::new(&noisy_cfg).unwrap();

    let theta = 0.8;
    let a_clean = clean.evaluate(theta).unwrap().raw;
    let a_noisy = noisy.evaluate(theta).unwrap().raw;
    let a_const = spectral_function(&TimeSeries::from_fn(clean.grid, |_, _| 1.0), &clean.filter).unwrap();

    let p_gd = global_depolarizing_probability(&vec![p; 2 * m + 2]);
    let d = (1usize << n) as f64;
    for k in 0..clean.grid.len() {
        let expected = (1.0 - p_gd) * a_clean.values[k] + p_gd / d * a_const.values[k];
        assert!((a_noisy.values[k] - expected).abs() <= 1e-8, "bin {k}: {} vs {expected}", a_noisy.values[k]);
    }
}

#[test]
fn optimized_angle_is_no_worse_than_bounds_or_midpoint() {
    let mut cfg = small(3, 8);
    cfg.optimize.enabled = true;
    let record = run_qge(&cfg).unwrap();
    assert_ne!(record.trace.termination, Termination::FixedAngle);
    let pipeline = Pipeline::new(&cfg).unwrap();
    let (lo, hi) = (cfg.optimize.bounds[0], cfg.optimize.bounds[1]);
    let best = record.trace.cost_opt;
    for theta in [lo, hi, 0.5 * (lo + hi)] {
        let c = pipeline.cost(theta).unwrap();
        assert!(best <= c + 1e-12, "theta {theta}: {c} < optimum {best}");
    }
    assert!((lo..=hi).contains(&record.theta_opt));
}

#[test]
fn reported_gaps_stay_inside_the_window() {
    for n in [2, 3, 4] {
        let record = run_qge(&small(n, 10)).unwrap();
        let est = &record.result.estimate;
        for delta in [est.delta_bare, est.delta_corr] {
            assert!(delta.is_nan() || record.window.contains(delta), "N={n}: {delta}");
        }
    }
}

#[test]
fn exact_evolution_rejects_noise_channels_with_a_stage() {
    let mut cfg = small(3, 4);
    cfg.trotter.evolution = EvolutionKind::Exact;
    cfg.noise.kind = NoiseKind::Depolarizing;
    cfg.noise.p = 0.01;
    let err = run_qge(&cfg).unwrap_err();
    match &err {
        Error::Stage { stage, source } => {
            assert_eq!(*stage, "sampling");
            assert!(matches!(**source, Error::Config(_)));
        }
        other => panic!("unexpected error {other:?}"),
    }
    assert!(err.to_string().starts_with("sampling:"));
}

#[test]
fn small_spam_offsets_leave_the_gap_in_place() {
    let base = run_qge(&small(4, 12)).unwrap();
    let mut cfg = small(4, 12);
    cfg.noise.spam_prep_offset = 0.03;
    cfg.noise.spam_meas_offset = -0.02;
    let spam = run_qge(&cfg).unwrap();
    assert_eq!(base.result.estimate.delta_corr, spam.result.estimate.delta_corr);
    assert_ne!(base.result.raw.values, spam.result.raw.values);
}

//! `qge`: run, sweep and calibration import.

mod output;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use qge_core::config::{load_calibration, NoiseKind};
use qge_core::estimate::RunRecord;
use qge_core::{run_qge, Error, RunConfig};

#[derive(Parser)]
#[command(name = "qge", version, about = "Spectral gap estimation from simulated Trotter circuits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration and write its artifacts.
    Run { config: PathBuf },
    /// Repeat a run over values of one parameter.
    Sweep {
        config: PathBuf,
        #[arg(long, value_enum)]
        axis: Axis,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// With `--axis N`: J/h per value, paired in order.
        #[arg(long, value_delimiter = ',')]
        j_values: Option<Vec<f64>>,
        /// Worker threads for sweep points.
        #[arg(long, env = "QGE_JOBS")]
        jobs: Option<usize>,
    },
    /// Validate a calibration table and write it as TOML.
    CalibImport { csv: PathBuf, out: PathBuf },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Axis {
    #[value(name = "M")]
    M,
    #[value(name = "N")]
    N,
    #[value(name = "p")]
    P,
}

/// Exit 1: the inputs are wrong. Exit 2: something failed while running.
enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    fn from_core(e: Error) -> Self {
        let mut inner = &e;
        while let Error::Stage { source, .. } = inner {
            inner = source;
        }
        if matches!(inner, Error::Config(_) | Error::Calibration(_)) {
            Failure::Config(e.into())
        } else {
            Failure::Runtime(e.into())
        }
    }
}

fn load_config(path: &Path) -> Result<RunConfig, Failure> {
    let cfg = RunConfig::load(path).map_err(Failure::from_core)?;
    cfg.validate().map_err(Failure::from_core)?;
    Ok(cfg)
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| "run".into(), |s| s.to_string_lossy().into_owned())
}

fn print_timings(label: &str, record: &RunRecord) {
    let t = &record.timings;
    eprintln!(
        "[{label}] setup {:.2}s, optimize {:.2}s, total {:.2}s",
        t.setup.as_secs_f64(),
        t.optimize.as_secs_f64(),
        t.total.as_secs_f64()
    );
}

fn cmd_run(path: &Path) -> Result<(), Failure> {
    let cfg = load_config(path)?;
    let record = run_qge(&cfg).map_err(Failure::from_core)?;
    let dir = output::output_root().join(output::run_dir_name(&stem(path), &cfg));
    output::write_run(&dir, &record).map_err(Failure::Runtime)?;
    let est = &record.result.estimate;
    println!("theta_opt      {:.6}", record.theta_opt);
    println!("delta_exact    {:.6}", record.delta_exact);
    println!("delta_bare     {:.6}  rel_error {:.4e}", est.delta_bare, est.rel_error_bare);
    println!("delta_corr     {:.6}  rel_error {:.4e}", est.delta_corr, est.rel_error_corr);
    println!("status         {:?}, optimizer {:?}", est.status, record.trace.termination);
    if !record.result.baseline.converged {
        println!("warning        baseline did not converge");
    }
    println!("output         {}", dir.display());
    print_timings("run", &record);
    Ok(())
}

fn sweep_point(base: &RunConfig, axis: Axis, value: f64, j: Option<f64>) -> Result<RunConfig, Failure> {
    let mut cfg = base.clone();
    let as_count = |v: f64| -> Result<usize, Failure> {
        if v >= 1.0 && v.fract() == 0.0 {
            Ok(v as usize)
        } else {
            Err(Failure::Config(anyhow::anyhow!("sweep value {v} is not a positive integer")))
        }
    };
    match axis {
        Axis::M => cfg.trotter.m_steps = as_count(value)?,
        Axis::N => {
            cfg.model.n_qubits = as_count(value)?;
            if let Some(j) = j {
                cfg.model.j_over_h = j;
            }
        }
        Axis::P => {
            if cfg.noise.kind != NoiseKind::None && cfg.noise.kind != NoiseKind::Depolarizing {
                return Err(Failure::Config(anyhow::anyhow!("p sweeps need depolarizing or no noise in the config")));
            }
            cfg.noise.kind = NoiseKind::Depolarizing;
            cfg.noise.p = value;
        }
    }
    cfg.validate().map_err(Failure::from_core)?;
    Ok(cfg)
}

fn cmd_sweep(
    path: &Path,
    axis: Axis,
    values: &[f64],
    j_values: Option<&[f64]>,
    jobs: Option<usize>,
) -> Result<(), Failure> {
    let base = load_config(path)?;
    if let Some(js) = j_values {
        if !matches!(axis, Axis::N) || js.len() != values.len() {
            return Err(Failure::Config(anyhow::anyhow!("--j-values needs --axis N and one entry per value")));
        }
    }
    let points: Vec<Result<RunConfig, String>> = values
        .iter()
        .enumerate()
        .map(|(i, &v)| match sweep_point(&base, axis, v, j_values.map(|js| js[i])) {
            Ok(cfg) => Ok(cfg),
            Err(Failure::Config(e) | Failure::Runtime(e)) => Err(format!("{e:#}")),
        })
        .collect();
    let axis_name = format!("{axis:?}");
    let dir = output::output_root().join(format!(
        "{}-sweep{}-{}-seed{}",
        stem(path),
        axis_name,
        &base.hash()[..12],
        base.sampling.seed
    ));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .context("building worker pool")
        .map_err(Failure::Runtime)?;
    // partial failures are recorded per point and the sweep carries on
    let results: Vec<Result<RunRecord, String>> = pool.install(|| {
        points
            .par_iter()
            .map(|cfg| cfg.clone().and_then(|cfg| run_qge(&cfg).map_err(|e| e.to_string())))
            .collect()
    });

    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display())).map_err(Failure::Runtime)?;
    let mut table = format!("# qge config_hash={} seed={}\n", base.hash(), base.sampling.seed);
    table.push_str("# value\tj_over_h\trel_error_bare\trel_error_corr\tdelta_bare\tdelta_corr\tdelta_exact\tstatus\n");
    let mut failures = 0;
    for (i, (value, result)) in values.iter().zip(&results).enumerate() {
        let j = match (&points[i], j_values) {
            (Ok(cfg), _) => cfg.model.j_over_h,
            (Err(_), Some(js)) => js[i],
            (Err(_), None) => base.model.j_over_h,
        };
        match result {
            Ok(record) => {
                let e = &record.result.estimate;
                output::write_run(&dir.join(format!("{axis_name}={value}")), record).map_err(Failure::Runtime)?;
                writeln!(
                    table,
                    "{value}\t{j}\t{:.12e}\t{:.12e}\t{:.12e}\t{:.12e}\t{:.12e}\t{:?}",
                    e.rel_error_bare, e.rel_error_corr, e.delta_bare, e.delta_corr, record.delta_exact, e.status
                )
                .unwrap();
                println!(
                    "{axis_name}={value:<8} J/h={j:<5} rel_error_bare {:.4e}  rel_error_corr {:.4e}",
                    e.rel_error_bare, e.rel_error_corr
                );
                print_timings(&format!("{axis_name}={value}"), record);
            }
            Err(msg) => {
                failures += 1;
                writeln!(table, "{value}\t{j}\tnan\tnan\tnan\tnan\tnan\tfailed: {msg}").unwrap();
                println!("{axis_name}={value:<8} failed: {msg}");
            }
        }
    }
    fs::write(dir.join("sweep.tsv"), table).context("writing sweep table").map_err(Failure::Runtime)?;
    println!("output         {}", dir.display());
    if failures == results.len() {
        return Err(Failure::Runtime(anyhow::anyhow!("every sweep point failed")));
    }
    Ok(())
}

fn cmd_calib_import(csv: &Path, out: &Path) -> Result<(), Failure> {
    let text = fs::read_to_string(csv)
        .with_context(|| format!("reading {}", csv.display()))
        .map_err(Failure::Config)?;
    let set = load_calibration(&text, csv).map_err(Failure::from_core)?;
    for r in &set.rejected {
        eprintln!("rejected line {}: {}", r.line, r.reason);
    }
    for w in &set.warnings {
        eprintln!("warning: {w}");
    }
    if set.records.is_empty() {
        return Err(Failure::Config(anyhow::anyhow!("{} contains no usable calibration rows", csv.display())));
    }
    let body = toml::to_string(&set).context("serializing calibration").map_err(Failure::Runtime)?;
    fs::write(out, body).with_context(|| format!("writing {}", out.display())).map_err(Failure::Runtime)?;
    println!("{} records, {} rejected -> {}", set.records.len(), set.rejected.len(), out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config } => cmd_run(config),
        Command::Sweep { config, axis, values, j_values, jobs } => {
            cmd_sweep(config, *axis, values, j_values.as_deref(), *jobs)
        }
        Command::CalibImport { csv, out } => cmd_calib_import(csv, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

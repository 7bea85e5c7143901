//! Plot-ready artifacts for a run. Every file carries the config hash and seed.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use qge_core::estimate::{EstimateStatus, RunRecord, Snapshot};
use qge_core::spectral::{Branch, TimeGrid};
use qge_core::RunConfig;

pub const OUTPUT_ENV: &str = "QGE_OUTPUT_DIR";

pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("qge-output"))
}

/// `<stem>-<hash12>-seed<seed>`
pub fn run_dir_name(stem: &str, config: &RunConfig) -> String {
    format!("{stem}-{}-seed{}", &config.hash()[..12], config.sampling.seed)
}

fn header(record: &RunRecord, columns: &[&str]) -> String {
    format!(
        "# qge {} config_hash={} seed={}\n# {}\n",
        record.version,
        record.config_hash,
        record.seed,
        columns.join("\t")
    )
}

/// Bin order sorted by signed frequency, so columns plot as a line.
fn plot_order(grid: &TimeGrid) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..grid.len()).collect();
    idx.sort_by(|&a, &b| grid.signed_omega(a).total_cmp(&grid.signed_omega(b)));
    idx
}

fn two_column(record: &RunRecord, name: &str, values: &[f64]) -> String {
    let grid = &record.result.raw.grid;
    let mut out = header(record, &["omega", name]);
    for m in plot_order(grid) {
        writeln!(out, "{:.12e}\t{:.12e}", grid.signed_omega(m), values[m]).unwrap();
    }
    out
}

fn snapshot_table(record: &RunRecord, snap: &Snapshot) -> String {
    let grid = &record.result.raw.grid;
    let mut out = header(record, &["omega", "raw", "corrected", "baseline"]);
    writeln!(out, "# label={} iteration={} theta={:.12e}", snap.label, snap.iteration, snap.theta).unwrap();
    for m in plot_order(grid) {
        writeln!(
            out,
            "{:.12e}\t{:.12e}\t{:.12e}\t{:.12e}",
            grid.signed_omega(m),
            snap.raw[m],
            snap.corrected[m],
            snap.baseline[m]
        )
        .unwrap();
    }
    out
}

fn series_table(record: &RunRecord) -> String {
    let series = &record.result.series;
    let mut out = header(record, &["n", "t", "causal", "anti_causal"]);
    for n in 0..series.grid.len() {
        let v = |b| series.get(b, n).map_or(f64::NAN, |s| s.value);
        writeln!(
            out,
            "{n}\t{:.12e}\t{:.12e}\t{:.12e}",
            series.grid.time(n),
            v(Branch::Causal),
            v(Branch::AntiCausal)
        )
        .unwrap();
    }
    out
}

fn trace_table(record: &RunRecord) -> String {
    let mut out = header(record, &["iteration", "theta", "cost", "accepted", "delta_bare", "delta_corr", "rel_error_corr"]);
    for e in &record.trace.entries {
        writeln!(
            out,
            "{}\t{:.12e}\t{:.12e}\t{}\t{:.12e}\t{:.12e}\t{:.12e}",
            e.iteration,
            e.theta,
            e.cost,
            u8::from(e.accepted),
            e.data.delta_bare,
            e.data.delta_corr,
            e.data.rel_error_corr
        )
        .unwrap();
    }
    out
}

#[derive(Serialize)]
pub struct Summary<'a> {
    pub version: &'a str,
    pub config_hash: &'a str,
    pub seed: u64,
    pub n_qubits: usize,
    pub j_over_h: f64,
    pub theta_opt: f64,
    pub delta0: f64,
    pub delta_exact: f64,
    pub delta_bare: f64,
    pub delta_corr: f64,
    pub rel_error_bare: f64,
    pub rel_error_corr: f64,
    pub peak_height_corr: f64,
    pub status: EstimateStatus,
    pub termination: qge_core::estimate::Termination,
    pub evaluations: usize,
    pub penalized_evaluations: usize,
    pub baseline_converged: bool,
}

pub fn summary(record: &RunRecord) -> Summary<'_> {
    let est = &record.result.estimate;
    Summary {
        version: &record.version,
        config_hash: &record.config_hash,
        seed: record.seed,
        n_qubits: record.config.model.n_qubits,
        j_over_h: record.config.model.j_over_h,
        theta_opt: record.theta_opt,
        delta0: record.delta0,
        delta_exact: record.delta_exact,
        delta_bare: est.delta_bare,
        delta_corr: est.delta_corr,
        rel_error_bare: est.rel_error_bare,
        rel_error_corr: est.rel_error_corr,
        peak_height_corr: est.peak_height_corr,
        status: est.status,
        termination: record.trace.termination,
        evaluations: record.trace.entries.len(),
        penalized_evaluations: record.penalized_evaluations,
        baseline_converged: record.result.baseline.converged,
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

/// Writes every artifact of `record` into `dir`.
pub fn write_run(dir: &Path, record: &RunRecord) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let r = &record.result;
    write(dir, "spectrum_raw.tsv", &two_column(record, "raw", &r.raw.values))?;
    write(dir, "spectrum_corrected.tsv", &two_column(record, "corrected", &r.baseline.corrected))?;
    write(dir, "baseline.tsv", &two_column(record, "baseline", &r.baseline.baseline))?;
    for snap in &record.snapshots {
        write(dir, &format!("snapshot_{}.tsv", snap.label), &snapshot_table(record, snap))?;
    }
    write(dir, "series.tsv", &series_table(record))?;
    write(dir, "trace.tsv", &trace_table(record))?;
    write(dir, "summary.json", &(serde_json::to_string_pretty(&summary(record))? + "\n"))?;
    write(dir, "record.json", &(serde_json::to_string(record)? + "\n"))?;
    // the snapshot must re-run from any directory, so file paths become absolute
    let mut snap = record.config.clone();
    if let Some(file) = &snap.noise.file {
        let resolved = snap.resolve(file);
        snap.noise.file = Some(fs::canonicalize(&resolved).unwrap_or(resolved));
    }
    let config = format!(
        "# qge {} config_hash={} seed={}\n{}",
        record.version,
        record.config_hash,
        record.seed,
        snap.to_toml_string()
    );
    write(dir, "config.toml", &config)?;
    Ok(())
}

//! Fit and sweep execution, CSV/JSON emission.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use smf_core::metrics;
use smf_core::rng::derive_seed;
use smf_core::solver::{fit, FitError};
use smf_core::{Error, Result};

use crate::config::{FitConfig, SweepConfig};

/// Sweep CSV header (golden schema).
pub const SWEEP_HEADER: &[&str] = &[
    "rho",
    "phi",
    "trial",
    "seed",
    "sinr_map_db",
    "sinr_lmmse_db",
    "objective_final",
    "outer_iters",
    "wall_time_s",
    "status",
];

/// Aggregate CSV header (golden schema).
pub const AGGREGATE_HEADER: &[&str] = &[
    "rho",
    "phi",
    "trials_ok",
    "mean_sinr_map_db",
    "std_sinr_map_db",
    "mean_sinr_lmmse_db",
    "std_sinr_lmmse_db",
];

/// Plot-data CSV header (golden schema).
pub const PLOT_HEADER: &[&str] =
    &["log10_rho", "phi", "mean_sinr_db", "std_sinr_db", "mean_lmmse_db"];

/// Floats are written with 9 significant digits.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.8e}")
}

/// One (ρ, φ, trial) cell result.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub rho: f64,
    pub phi: f64,
    pub trial: usize,
    pub seed: u64,
    pub sinr_map_db: Option<f64>,
    pub sinr_lmmse_db: Option<f64>,
    pub objective_final: Option<f64>,
    pub outer_iters: Option<usize>,
    pub wall_time_s: f64,
    pub status: String,
}

impl SweepRecord {
    fn to_row(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(fmt_float).unwrap_or_default();
        vec![
            fmt_float(self.rho),
            fmt_float(self.phi),
            self.trial.to_string(),
            self.seed.to_string(),
            opt(self.sinr_map_db),
            opt(self.sinr_lmmse_db),
            opt(self.objective_final),
            self.outer_iters.map(|v| v.to_string()).unwrap_or_default(),
            fmt_float(self.wall_time_s),
            self.status.clone(),
        ]
    }
}

/// JSON summary of a single fit run. Contains no timing so that identical
/// config+seed runs produce byte-identical output.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FitSummary {
    pub rho: f64,
    pub phi: f64,
    pub lambda: f64,
    pub beta: f64,
    pub seed: u64,
    pub objective_final: f64,
    pub outer_iters: usize,
    pub converged: bool,
    pub sinr_map_db: Option<f64>,
    pub sinr_lmmse_db: Option<f64>,
}

/// Runs a single fit from config: generate (or load) data, fit, align,
/// score. The summary goes to `output` when set.
pub fn run_fit(cfg: &FitConfig) -> Result<FitSummary> {
    let objective = cfg.lambda_rule.objective_params(&cfg.model, cfg.rho, cfg.phi)?;
    let mut solver_cfg = cfg.solver.clone();
    solver_cfg.seed = derive_seed(cfg.seed, &[0x501_7e5]);

    let (y, truth) = match &cfg.y_csv {
        Some(path) => (smf_core::io::read_matrix_csv(path)?, None),
        None => {
            let params = cfg.model.to_params(cfg.rho, cfg.phi)?;
            let mut rng = smf_core::rng::stream(derive_seed(cfg.seed, &[0xda7a]));
            let g = smf_core::generate(&params, &mut rng)?;
            (g.y.clone(), Some(g))
        }
    };
    if y.nrows() != cfg.model.m {
        return Err(Error::invalid(format!(
            "Y has {} rows, model.m = {}",
            y.nrows(),
            cfg.model.m
        )));
    }

    let fr = fit(y.view(), &cfg.model.domain, &objective, &solver_cfg).map_err(flatten_fit_err)?;

    let (sinr_map_db, sinr_lmmse_db) = match &truth {
        Some(g) => {
            let a = metrics::align(g.s_g.view(), fr.s_hat.view(), &cfg.model.domain)?;
            let aligned = a.apply(fr.s_hat.view())?;
            let map = metrics::sinr_db(g.s_g.view(), aligned.view())?;
            let lm =
                metrics::lmmse_estimate(y.view(), g.h_g.view(), cfg.model.sigma_v2, &cfg.model.domain)?;
            let al = metrics::align(g.s_g.view(), lm.view(), &cfg.model.domain)?;
            let lm_aligned = al.apply(lm.view())?;
            let lmmse = metrics::sinr_db(g.s_g.view(), lm_aligned.view())?;
            (Some(map), Some(lmmse))
        }
        None => (None, None),
    };

    let summary = FitSummary {
        rho: cfg.rho,
        phi: cfg.phi,
        lambda: objective.lambda,
        beta: objective.beta,
        seed: cfg.seed,
        objective_final: *fr.objective_trace.last().expect("nonempty trace"),
        outer_iters: fr.outer_iters_used,
        converged: fr.converged,
        sinr_map_db,
        sinr_lmmse_db,
    };
    if let Some(path) = &cfg.output {
        let json = serde_json::to_string_pretty(&summary)
            .map_err(|e| Error::Io(format!("summary serialization: {e}")))?;
        std::fs::write(path, json + "\n")
            .map_err(|e| Error::Io(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(summary)
}

fn flatten_fit_err(e: FitError) -> Error {
    match e {
        FitError::Core(err) => err,
        FitError::Numerical { message, .. } => Error::Numerical(message),
    }
}

/// Runs one sweep cell. Failures are captured in the record status.
fn run_cell(cfg: &SweepConfig, rho_idx: usize, phi_idx: usize, trial: usize) -> SweepRecord {
    let rho = cfg.rho_grid[rho_idx];
    let phi = cfg.phi_values[phi_idx];
    let seed = derive_seed(cfg.base_seed, &[rho_idx as u64, phi_idx as u64, trial as u64]);
    let started = Instant::now();

    let outcome = (|| -> Result<(f64, f64, f64, usize)> {
        let params = cfg.model.to_params(rho, phi)?;
        let objective = cfg.lambda_rule.objective_params(&cfg.model, rho, phi)?;
        let mut rng = smf_core::rng::stream(seed);
        let g = smf_core::generate(&params, &mut rng)?;
        let mut solver_cfg = cfg.solver.clone();
        solver_cfg.seed = derive_seed(seed, &[0x5eed]);
        let fr = fit(g.y.view(), &cfg.model.domain, &objective, &solver_cfg)
            .map_err(flatten_fit_err)?;
        let a = metrics::align(g.s_g.view(), fr.s_hat.view(), &cfg.model.domain)?;
        let aligned = a.apply(fr.s_hat.view())?;
        let sinr_map = metrics::sinr_db(g.s_g.view(), aligned.view())?;
        let lm = metrics::lmmse_estimate(
            g.y.view(),
            g.h_g.view(),
            cfg.model.sigma_v2,
            &cfg.model.domain,
        )?;
        let al = metrics::align(g.s_g.view(), lm.view(), &cfg.model.domain)?;
        let lm_aligned = al.apply(lm.view())?;
        let sinr_lmmse = metrics::sinr_db(g.s_g.view(), lm_aligned.view())?;
        let j = *fr.objective_trace.last().expect("nonempty trace");
        Ok((sinr_map, sinr_lmmse, j, fr.outer_iters_used))
    })();

    let wall_time_s = started.elapsed().as_secs_f64();
    match outcome {
        Ok((sinr_map, sinr_lmmse, j, outers)) => SweepRecord {
            rho,
            phi,
            trial,
            seed,
            sinr_map_db: Some(sinr_map),
            sinr_lmmse_db: Some(sinr_lmmse),
            objective_final: Some(j),
            outer_iters: Some(outers),
            wall_time_s,
            status: "ok".into(),
        },
        Err(e) => SweepRecord {
            rho,
            phi,
            trial,
            seed,
            sinr_map_db: None,
            sinr_lmmse_db: None,
            objective_final: None,
            outer_iters: None,
            wall_time_s,
            status: sanitize_status(&e.to_string()),
        },
    }
}

fn sanitize_status(msg: &str) -> String {
    let cleaned: String = msg
        .chars()
        .map(|c| if c == ',' || c == '\n' || c == '\r' { ';' } else { c })
        .collect();
    format!("error: {cleaned}")
}

/// Runs the full grid. Cells execute in parallel on `threads` workers (all
/// cores when None); records come back sorted by (ρ index, φ index, trial),
/// so output never depends on scheduling.
pub fn run_sweep(cfg: &SweepConfig, threads: Option<usize>) -> Result<Vec<SweepRecord>> {
    cfg.validate()?;
    let mut cells = Vec::new();
    for i in 0..cfg.rho_grid.len() {
        for j in 0..cfg.phi_values.len() {
            for t in 0..cfg.trials_per_cell {
                cells.push((i, j, t));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    let mut records: Vec<((usize, usize, usize), SweepRecord)> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(i, j, t)| ((i, j, t), run_cell(cfg, i, j, t)))
            .collect()
    });
    records.sort_by_key(|(key, _)| *key);
    let records: Vec<SweepRecord> = records.into_iter().map(|(_, r)| r).collect();
    if records.iter().all(|r| r.status != "ok") {
        return Err(Error::numerical("every sweep cell failed"));
    }
    Ok(records)
}

pub fn write_sweep_csv(path: &Path, records: &[SweepRecord]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(SWEEP_HEADER).map_err(csv_err)?;
    for r in records {
        w.write_record(r.to_row()).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-(ρ, φ) mean/stddev over successful trials, in grid order.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub rho: f64,
    pub phi: f64,
    pub trials_ok: usize,
    pub mean_sinr_map_db: f64,
    pub std_sinr_map_db: f64,
    pub mean_sinr_lmmse_db: f64,
    pub std_sinr_lmmse_db: f64,
}

pub fn aggregate(records: &[SweepRecord]) -> Vec<AggregateRow> {
    let mut keys: Vec<(f64, f64)> = Vec::new();
    for r in records {
        if !keys.iter().any(|&(a, b)| a == r.rho && b == r.phi) {
            keys.push((r.rho, r.phi));
        }
    }
    let mut out = Vec::new();
    for (rho, phi) in keys {
        let cells: Vec<&SweepRecord> = records
            .iter()
            .filter(|r| r.rho == rho && r.phi == phi && r.status == "ok")
            .collect();
        if cells.is_empty() {
            continue;
        }
        let maps: Vec<f64> = cells.iter().filter_map(|r| r.sinr_map_db).collect();
        let lms: Vec<f64> = cells.iter().filter_map(|r| r.sinr_lmmse_db).collect();
        let (m_map, s_map) = mean_std(&maps);
        let (m_lm, s_lm) = mean_std(&lms);
        out.push(AggregateRow {
            rho,
            phi,
            trials_ok: cells.len(),
            mean_sinr_map_db: m_map,
            std_sinr_map_db: s_map,
            mean_sinr_lmmse_db: m_lm,
            std_sinr_lmmse_db: s_lm,
        });
    }
    out
}

/// Sample mean and (n−1)-normalized standard deviation; std is 0 for a
/// single value.
fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn write_aggregate_csv(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(AGGREGATE_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record(vec![
            fmt_float(r.rho),
            fmt_float(r.phi),
            r.trials_ok.to_string(),
            fmt_float(r.mean_sinr_map_db),
            fmt_float(r.std_sinr_map_db),
            fmt_float(r.mean_sinr_lmmse_db),
            fmt_float(r.std_sinr_lmmse_db),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Derives the aggregate path from the sweep output path: `x.csv` →
/// `x.agg.csv`.
pub fn aggregate_path(out: &Path) -> PathBuf {
    match out.extension().and_then(|e| e.to_str()) {
        Some(ext) => out.with_extension(format!("agg.{ext}")),
        None => out.with_extension("agg.csv"),
    }
}

/// Rewrites an aggregate CSV as plot-ready data: x = log₁₀ρ, one row per
/// (ρ, φ), plus the LMMSE reference level. Returns the number of series
/// rows. An empty aggregate produces a header-only file.
pub fn emit_plot_data(input: &Path, output: &Path) -> Result<usize> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(input)
        .map_err(|e| Error::Io(format!("cannot read {}: {e}", input.display())))?;
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::invalid(format!("aggregate CSV is missing column {name:?}")))
    };
    let c_rho = col("rho")?;
    let c_phi = col("phi")?;
    let c_mean = col("mean_sinr_map_db")?;
    let c_std = col("std_sinr_map_db")?;
    let c_lm = col("mean_sinr_lmmse_db")?;

    let mut w = csv_writer(output)?;
    w.write_record(PLOT_HEADER).map_err(csv_err)?;
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let get = |idx: usize| -> Result<f64> {
            rec.get(idx)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::invalid(format!("bad numeric field in {rec:?}")))
        };
        let rho = get(c_rho)?;
        if !(rho > 0.0) {
            return Err(Error::invalid(format!("rho must be positive, got {rho}")));
        }
        w.write_record(vec![
            fmt_float(rho.log10()),
            fmt_float(get(c_phi)?),
            fmt_float(get(c_mean)?),
            fmt_float(get(c_std)?),
            fmt_float(get(c_lm)?),
        ])
        .map_err(csv_err)?;
        rows += 1;
    }
    w.flush()?;
    if rows == 0 {
        eprintln!("warning: empty aggregate input, wrote header-only plot data");
    }
    Ok(rows)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::io::BufWriter<std::fs::File>>> {
    let file = std::fs::File::create(path)
        .map_err(|e| Error::Io(format!("cannot create {}: {e}", path.display())))?;
    Ok(csv::WriterBuilder::new().from_writer(std::io::BufWriter::new(file)))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(format!("csv: {e}"))
}

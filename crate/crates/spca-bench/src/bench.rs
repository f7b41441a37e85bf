//! Single runs, paired grid runs and report aggregation.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use irpg_core::driver::{irpg_run, AccuracyPolicy, RunTrace, SolverConfig, StopRule, Variant};
use irpg_core::manifold::StiefelPoint;
use irpg_core::objective::CompositeProblem;
use irpg_core::Mat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Cell, ExperimentGrid, LTilde0, RunConfig};
use crate::data::{default_l0, gen_data, init_point};
use crate::error::{BenchError, Result};

/// Worker count for grid runs; unset or `0` uses rayon's default.
pub const THREADS_ENV: &str = "SPCA_BENCH_THREADS";
/// Entries with magnitude at or below this count as zero.
pub const SPARSITY_TOL: f64 = 1e-5;
/// Paired runs whose final iterates differ by this much are excluded.
pub const AGREEMENT_TOL: f64 = 1e-2;

pub struct Instance {
    pub problem: CompositeProblem,
    pub x0: StiefelPoint,
    pub l_tilde_0: f64,
    pub sigma_max_sq: f64,
}

pub fn build_instance(n: usize, p: usize, m: usize, lambda: f64, seed: u64, l0: LTilde0) -> Result<Instance> {
    let a = gen_data(m, n, seed)?;
    let x0 = init_point(&a, p)?;
    let from_data = default_l0(&a);
    let l_tilde_0 = match l0 {
        LTilde0::FromData => from_data,
        LTilde0::Value(v) => v,
    };
    let problem = CompositeProblem::spca(a, p, lambda)?;
    Ok(Instance { problem, x0, l_tilde_0, sigma_max_sq: from_data / 2.0 })
}

fn solver_config(l_tilde_0: f64, max_outer: usize, stop: StopRule) -> SolverConfig {
    let mut config = SolverConfig::new(l_tilde_0);
    config.max_outer = max_outer;
    config.stop = stop;
    config
}

/// Runs one configuration. The residual variants stop on `target` when given.
pub fn solve(cfg: &RunConfig) -> Result<RunTrace> {
    let inst = build_instance(cfg.n, cfg.p, cfg.m, cfg.lambda, cfg.seed, cfg.l_tilde_0)?;
    let stop = match (cfg.variant, cfg.target) {
        (Variant::U | Variant::L, Some(value)) => StopRule::Target { value },
        _ => StopRule::Stationarity { factor: cfg.stop_factor },
    };
    let config = solver_config(inst.l_tilde_0, cfg.max_outer, stop);
    Ok(irpg_run(&inst.problem, inst.x0, &config, &AccuracyPolicy::new(cfg.variant))?)
}

/// Fraction of entries of `x` with magnitude at most [`SPARSITY_TOL`].
pub fn sparsity(x: &Mat) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().filter(|v| v.abs() <= SPARSITY_TOL).count() as f64 / x.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub n: usize,
    pub p: usize,
    pub m: usize,
    pub lambda: f64,
    pub seed: u64,
    pub variant: String,
    pub iterations: usize,
    pub seconds: f64,
    pub final_f: f64,
    pub sparsity: f64,
    pub status: String,
    /// Paired solutions disagree; excluded from averages.
    pub flagged: bool,
}

#[derive(Clone, Debug)]
pub struct CellResult {
    pub cell: Cell,
    pub traces: Vec<RunTrace>,
    pub max_difference: f64,
    pub rows: Vec<ReportRow>,
}

/// Runs G first, then the residual variants with its final objective value as
/// their target. Only the requested variants are reported.
pub fn run_cell(cell: Cell, variants: &[Variant], max_outer: usize, stop_factor: f64) -> Result<CellResult> {
    let inst = build_instance(cell.n, cell.p, cell.m, cell.lambda, cell.seed, LTilde0::FromData)?;
    let g_config = solver_config(inst.l_tilde_0, max_outer, StopRule::Stationarity { factor: stop_factor });
    let g = irpg_run(&inst.problem, inst.x0.clone(), &g_config, &AccuracyPolicy::new(Variant::G))?;
    let target_config = solver_config(inst.l_tilde_0, max_outer, StopRule::Target { value: g.final_value });
    let mut traces = Vec::new();
    for &variant in variants {
        if variant == Variant::G {
            traces.push(g.clone());
        } else {
            traces.push(irpg_run(&inst.problem, inst.x0.clone(), &target_config, &AccuracyPolicy::new(variant))?);
        }
    }
    let mut max_difference: f64 = 0.0;
    for (i, a) in traces.iter().enumerate() {
        for b in &traces[i + 1..] {
            max_difference = max_difference.max((a.final_point.matrix() - b.final_point.matrix()).norm());
        }
    }
    let flagged = max_difference >= AGREEMENT_TOL;
    let rows = traces
        .iter()
        .map(|t| ReportRow {
            n: cell.n,
            p: cell.p,
            m: cell.m,
            lambda: cell.lambda,
            seed: cell.seed,
            variant: t.variant.to_string(),
            iterations: t.iterations(),
            seconds: t.elapsed,
            final_f: t.final_value,
            sparsity: sparsity(t.final_point.matrix()),
            status: t.status.to_string(),
            flagged,
        })
        .collect();
    Ok(CellResult { cell, traces, max_difference, rows })
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| BenchError::Config(format!("{THREADS_ENV}: cannot parse {v:?}")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| BenchError::Config(format!("thread pool: {e}")))
}

/// Runs every cell of the grid in a worker pool. Rows come back in cell order.
pub fn run_grid(grid: &ExperimentGrid) -> Result<Vec<ReportRow>> {
    grid.validate()?;
    let cells = grid.cells();
    let pool = thread_pool()?;
    let results: Vec<Result<CellResult>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&cell| run_cell(cell, &grid.variants, grid.max_outer, grid.stop_factor))
            .collect()
    });
    let mut rows = Vec::new();
    for r in results {
        rows.extend(r?.rows);
    }
    Ok(rows)
}

pub const REPORT_FILE: &str = "report.csv";
pub const SUMMARY_FILE: &str = "summary.json";

pub fn write_report(path: &Path, rows: &[ReportRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_report(path: &Path) -> Result<Vec<ReportRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize().collect::<std::result::Result<Vec<ReportRow>, _>>()?;
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryEntry {
    pub n: usize,
    pub p: usize,
    pub m: usize,
    pub lambda: f64,
    pub variant: String,
    pub raw_runs: usize,
    pub filtered_runs: usize,
    /// Runs that met their stopping rule, among the filtered ones.
    pub successful_runs: usize,
    pub mean_iterations: f64,
    pub mean_seconds: f64,
    pub mean_final_f: f64,
    pub mean_sparsity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub entries: Vec<SummaryEntry>,
}

impl Summary {
    pub fn get(&self, n: usize, variant: Variant) -> Option<&SummaryEntry> {
        self.entries.iter().find(|e| e.n == n && e.variant == variant.as_str())
    }
}

/// Per-configuration means over unflagged rows, with raw and filtered counts.
pub fn summarize(rows: &[ReportRow]) -> Summary {
    type Key = (usize, usize, usize, u64, String);
    let mut groups: BTreeMap<Key, Vec<&ReportRow>> = BTreeMap::new();
    for row in rows {
        let key = (row.n, row.p, row.m, row.lambda.to_bits(), row.variant.clone());
        groups.entry(key).or_default().push(row);
    }
    let entries = groups
        .into_iter()
        .map(|((n, p, m, lambda, variant), group)| {
            let kept: Vec<&ReportRow> = group.iter().copied().filter(|r| !r.flagged).collect();
            let mean = |f: fn(&ReportRow) -> f64| {
                if kept.is_empty() {
                    f64::NAN
                } else {
                    kept.iter().map(|r| f(r)).sum::<f64>() / kept.len() as f64
                }
            };
            SummaryEntry {
                n,
                p,
                m,
                lambda: f64::from_bits(lambda),
                variant,
                raw_runs: group.len(),
                filtered_runs: kept.len(),
                successful_runs: kept
                    .iter()
                    .filter(|r| r.status == "converged" || r.status == "target-reached")
                    .count(),
                mean_iterations: mean(|r| r.iterations as f64),
                mean_seconds: mean(|r| r.seconds),
                mean_final_f: mean(|r| r.final_f),
                mean_sparsity: mean(|r| r.sparsity),
            }
        })
        .collect();
    Summary { entries }
}

pub fn write_summary(path: &Path, summary: &Summary) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(file, summary)?;
    Ok(())
}

/// Writes `report.csv` and `summary.json` into `dir`.
pub fn write_outputs(dir: &Path, rows: &[ReportRow]) -> Result<Summary> {
    std::fs::create_dir_all(dir)?;
    write_report(&dir.join(REPORT_FILE), rows)?;
    let summary = summarize(rows);
    write_summary(&dir.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}

/// Re-aggregates `report.csv` in `dir` and rewrites `summary.json`.
pub fn report_dir(dir: &Path) -> Result<Summary> {
    let rows = read_report(&dir.join(REPORT_FILE))?;
    let summary = summarize(&rows);
    write_summary(&dir.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}

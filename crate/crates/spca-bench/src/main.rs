use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use irpg_core::driver::{irpg_run, irpg_run_observed, AccuracyPolicy, RunStatus, SolverConfig, StopRule, Variant};
use irpg_core::matrix_io::save_matrix;
use irpg_verify::{audit_certificates, audit_complexity, audit_descent, AuditReport};
use spca_bench::bench::{build_instance, report_dir, run_grid, solve, write_outputs, Summary, THREADS_ENV};
use spca_bench::config::{ExperimentGrid, LTilde0, RunConfig};
use spca_bench::data::gen_data;

#[derive(Parser)]
#[command(name = "spca-bench", version, about = "Sparse PCA benchmark for the IRPG variants")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a grid of paired experiments and write report.csv and summary.json.
    #[command(after_help = format!("Set {THREADS_ENV} to choose the number of worker threads."))]
    Run {
        #[arg(long)]
        grid: PathBuf,
        /// Output directory; defaults to the grid's `out` key.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a standardized data matrix.
    Gen {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Aggregate report.csv in a directory into summary.json.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Solve a single configuration. Exit status: 0 converged, 3 target
    /// reached, 4 iteration cap, 5 escalation exhausted.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Write the per-iteration trace as CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Write the final iterate in matrix CSV format.
        #[arg(long)]
        solution: Option<PathBuf>,
    },
    /// Audit a configuration: a run with the proximal parameter fixed at
    /// 4 sigma_max(A)^2 checked for sufficient decrease and complexity, plus
    /// certificate checks along a default run. Nonzero exit on any failure.
    Audit {
        #[arg(long)]
        config: PathBuf,
        /// Write every audit record as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Length of the default run whose certificates are re-checked.
        #[arg(long, default_value_t = 20)]
        certificates: usize,
    },
}

fn print_summary(summary: &Summary) {
    println!("{:>6} {:>3} {:>4} {:>7} {:>3} {:>5} {:>9} {:>10} {:>14} {:>8}", "n", "p", "m", "lambda", "var", "runs", "iter", "seconds", "F", "sparsity");
    for e in &summary.entries {
        println!(
            "{:>6} {:>3} {:>4} {:>7} {:>3} {:>2}/{:<2} {:>9.1} {:>10.3} {:>14.6} {:>8.3}",
            e.n, e.p, e.m, e.lambda, e.variant, e.filtered_runs, e.raw_runs, e.mean_iterations, e.mean_seconds, e.mean_final_f, e.mean_sparsity
        );
    }
}

fn audit(cfg: &RunConfig, certificates: usize) -> Result<AuditReport> {
    let inst = build_instance(cfg.n, cfg.p, cfg.m, cfg.lambda, cfg.seed, LTilde0::FromData)?;
    let l_hat = 2.0 * inst.sigma_max_sq;
    let policy = AccuracyPolicy::new(cfg.variant);
    let mut fixed = SolverConfig::fixed(4.0 * inst.sigma_max_sq);
    fixed.max_outer = cfg.max_outer;
    fixed.stop = StopRule::Stationarity { factor: cfg.stop_factor };
    let trace = irpg_run(&inst.problem, inst.x0.clone(), &fixed, &policy)?;
    let mut report = audit_descent(&trace, l_hat);
    if let Some(first) = trace.rows.first() {
        report.extend(audit_complexity(&trace, l_hat, 1e-2 * first.eta_norm));
    }

    let mut config = SolverConfig::new(inst.l_tilde_0);
    config.max_outer = certificates;
    irpg_run_observed(&inst.problem, inst.x0, &config, &policy, |obs| {
        let bound = |t: f64| match cfg.variant {
            Variant::G => t.sqrt(),
            _ => policy.psi_bound(obs.k, t),
        };
        report.extend(audit_certificates(obs.solution, &inst.problem, obs.point, obs.l_tilde, &bound));
    })?;
    Ok(report)
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { grid, out } => {
            let grid = ExperimentGrid::load(&grid).with_context(|| format!("reading grid {}", grid.display()))?;
            let out = out.or_else(|| grid.out.clone()).context("no output directory: pass --out or set `out` in the grid")?;
            let rows = run_grid(&grid)?;
            let summary = write_outputs(&out, &rows)?;
            print_summary(&summary);
        }
        Command::Gen { m, n, seed, out } => {
            let a = gen_data(m, n, seed)?;
            save_matrix(&out, &a).with_context(|| format!("writing {}", out.display()))?;
        }
        Command::Report { input } => {
            let summary = report_dir(&input).with_context(|| format!("aggregating {}", input.display()))?;
            print_summary(&summary);
        }
        Command::Solve { config, trace, solution } => {
            let cfg = RunConfig::load(&config).with_context(|| format!("reading config {}", config.display()))?;
            let result = solve(&cfg)?;
            if let Some(path) = trace {
                result.write_csv(BufWriter::new(File::create(&path)?))?;
            }
            if let Some(path) = solution {
                save_matrix(&path, result.final_point.matrix())?;
            }
            println!(
                "variant {} status {} iterations {} F {:.10} seconds {:.3}",
                result.variant,
                result.status,
                result.iterations(),
                result.final_value,
                result.elapsed
            );
            return Ok(ExitCode::from(match result.status {
                RunStatus::Converged => 0,
                RunStatus::TargetReached => 3,
                RunStatus::CapReached => 4,
                RunStatus::EscalationExhausted => 5,
            }));
        }
        Command::Audit { config, out, certificates } => {
            let cfg = RunConfig::load(&config).with_context(|| format!("reading config {}", config.display()))?;
            let report = audit(&cfg, certificates)?;
            if let Some(path) = out {
                report.write_csv(BufWriter::new(File::create(&path)?))?;
            }
            println!("{report}");
            for f in report.failures() {
                eprintln!("FAILED {} [{}]: measured {:e}, bound {:e}", f.check, f.instance, f.measured, f.bound);
            }
            if !report.passed() {
                return Ok(ExitCode::from(2));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

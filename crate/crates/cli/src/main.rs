//! `msvi`: generate instances, run solvers, benchmark grids and check the
//! proximal point correspondence from the command line.

mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use msvi_core::bench::{run_bench, BenchPlan, BenchTable};
use msvi_core::examples::{gen_example1, gen_example2, Example1Config, Example2Config};
use msvi_core::ppa::equivalence_check;
use msvi_core::{
    builtin_schedule, run_solver, InnerConfig, MsviInstance, RunConfig, RunStatus, SolverVariant,
};
use serde_json::json;

use crate::output::write_atomic;

#[derive(Parser, Debug)]
#[command(name = "msvi", version, about = "Progressive hedging solvers for multi-stage stochastic variational inequalities")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate an instance file.
    Gen {
        #[command(subcommand)]
        example: GenExample,
    },
    /// Solve an instance and write the iteration trace and/or summary.
    Solve(SolveArgs),
    /// Run a benchmark plan and write the result table.
    Bench(BenchArgs),
    /// Compare the solver with the matching proximal point iteration.
    Equiv(EquivArgs),
}

#[derive(Args, Debug, Clone)]
struct SeedArg {
    /// RNG seed; falls back to MSVI_SEED, then 0.
    #[arg(long, env = "MSVI_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug, Clone)]
struct OutDir {
    /// Directory for output files (created if missing).
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Subcommand, Debug)]
enum GenExample {
    /// Two-stage random affine instance.
    Ex1 {
        #[arg(long, default_value_t = 10)]
        m: usize,
        #[arg(long, default_value_t = 10)]
        n0: usize,
        #[arg(long, default_value_t = 10)]
        n1: usize,
        #[command(flatten)]
        seed: SeedArg,
        #[command(flatten)]
        out: OutDir,
        /// Output file name inside the output directory.
        #[arg(long, default_value = "instance.json")]
        name: String,
    },
    /// Random-walk control instance.
    Ex2 {
        /// Number of stages N.
        #[arg(long = "stages", short = 'N', default_value_t = 3)]
        stages: usize,
        /// Walk steps per stage.
        #[arg(long, default_value_t = 3)]
        ell: usize,
        /// Sampled paths; 0 enumerates all of them.
        #[arg(long, default_value_t = 0)]
        kappa: usize,
        #[command(flatten)]
        seed: SeedArg,
        #[command(flatten)]
        out: OutDir,
        #[arg(long, default_value = "instance.json")]
        name: String,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug)]
struct SolveArgs {
    /// Instance file.
    instance: PathBuf,
    #[arg(long, default_value = "alg1", value_parser = parse_variant)]
    variant: SolverVariant,
    /// Stop once the max-over-scenarios natural residual drops below this.
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long, default_value_t = 10_000)]
    max_outer: usize,
    /// Iteration cap of each inner solve.
    #[arg(long, default_value_t = 200_000)]
    inner_max_iters: usize,
    #[command(flatten)]
    out: OutDir,
    /// Write only this report (trace.csv or summary.json); both by default.
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Plan file (JSON).
    plan: PathBuf,
    /// Replace the base seed of every cell.
    #[arg(long, env = "MSVI_SEED")]
    seed: Option<u64>,
    #[command(flatten)]
    out: OutDir,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Args, Debug)]
struct EquivArgs {
    /// Instance file.
    instance: PathBuf,
    /// Number of iterations to compare.
    #[arg(long, short = 'K', default_value_t = 50)]
    steps: usize,
    #[arg(long, default_value = "alg1", value_parser = parse_variant)]
    variant: SolverVariant,
    /// Tolerance of each resolvent evaluation.
    #[arg(long, default_value_t = 1e-12)]
    delta: f64,
    /// Also write the proximal point trajectory (ppa_trajectory.csv) here.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

fn parse_variant(s: &str) -> std::result::Result<SolverVariant, String> {
    s.parse().map_err(|e: msvi_core::MsviError| e.to_string())
}

fn read_instance(path: &Path) -> Result<MsviInstance> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read instance file {}", path.display()))?;
    MsviInstance::from_json(&text).with_context(|| format!("malformed instance file {}", path.display()))
}

fn gen(example: GenExample) -> Result<()> {
    let (inst, out, name) = match example {
        GenExample::Ex1 { m, n0, n1, seed, out, name } => {
            let cfg = Example1Config { m, n0, n1, seed: seed.seed };
            (gen_example1(&cfg)?, out, name)
        }
        GenExample::Ex2 { stages, ell, kappa, seed, out, name } => {
            let cfg = Example2Config { stages, ell, kappa, seed: seed.seed };
            (gen_example2(&cfg)?, out, name)
        }
    };
    let path = out.out_dir.join(name);
    write_atomic(&path, inst.to_json().as_bytes())?;
    println!("{}", path.display());
    Ok(())
}

fn solve(args: SolveArgs) -> Result<ExitCode> {
    let inst = read_instance(&args.instance)?;
    let sched = builtin_schedule(args.variant, inst.dim());
    let inner = InnerConfig {
        max_iters: args.inner_max_iters,
        ..InnerConfig::default()
    };
    let report = run_solver(&inst, args.variant, &sched, &inner, &RunConfig::new(args.tol, args.max_outer))?;
    let dir = &args.out.out_dir;
    if args.format != Some(Format::Json) {
        write_atomic(&dir.join("trace.csv"), report.trace_csv().as_bytes())?;
    }
    if args.format != Some(Format::Csv) {
        write_atomic(&dir.join("summary.json"), report.summary_json().as_bytes())?;
    }
    let status = serde_json::to_value(report.status)?;
    println!(
        "status={} outer_iters={} final_err={:e}",
        status.as_str().unwrap_or_default(),
        report.outer_iters(),
        report.final_err
    );
    if report.status == RunStatus::Failed {
        eprintln!("error: {}", report.failure.as_deref().unwrap_or("inner solver failed"));
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn table_json(table: &BenchTable) -> String {
    let rows: Vec<_> = table
        .rows
        .iter()
        .map(|r| {
            json!({
                "variant": r.variant,
                "instance": r.instance,
                "eps": r.eps,
                "avg_iter": if r.avg_iter.is_finite() { json!(r.avg_iter) } else { json!(null) },
                "avg_time_ms": if r.avg_time_ms.is_finite() { json!(r.avg_time_ms) } else { json!(null) },
                "reps": r.reps,
                "failures": r.failures,
                "iterations": r.iterations(),
            })
        })
        .collect();
    let mut s = serde_json::to_string_pretty(&rows).expect("plain data");
    s.push('\n');
    s
}

fn bench(args: BenchArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.plan)
        .with_context(|| format!("cannot read plan file {}", args.plan.display()))?;
    let mut plan = BenchPlan::from_json(&text)
        .with_context(|| format!("malformed plan file {}", args.plan.display()))?;
    if let Some(seed) = args.seed {
        for cell in &mut plan.cells {
            cell.instance = cell.instance.with_seed(seed);
        }
    }
    let table = run_bench(&plan, &InnerConfig::default())?;
    let (name, body) = match args.format {
        Format::Csv => ("table.csv", table.to_csv()),
        Format::Json => ("table.json", table_json(&table)),
    };
    write_atomic(&args.out.out_dir.join(name), body.as_bytes())?;
    print!("{}", table.to_csv());
    Ok(())
}

fn equiv(args: EquivArgs) -> Result<()> {
    if !(args.delta >= 0.0) {
        bail!("--delta must be >= 0");
    }
    let inst = read_instance(&args.instance)?;
    let sched = args.variant.constrain(builtin_schedule(args.variant, inst.dim()));
    let report = equivalence_check(&inst, &sched, &InnerConfig::default(), args.steps, args.delta)?;
    if let Some(dir) = &args.out_dir {
        let traj = &report.trajectory;
        let csv = traj.to_csv(traj.last(), |u| inst.tree().norm(u));
        write_atomic(&dir.join("ppa_trajectory.csv"), csv.as_bytes())?;
    }
    match args.format {
        Some(Format::Json) => println!(
            "{}",
            json!({ "steps": args.steps, "variant": args.variant, "max_deviation": report.max_deviation })
        ),
        _ => println!("max_deviation={:e}", report.max_deviation),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Gen { example } => gen(example).map(|_| ExitCode::SUCCESS),
        Command::Solve(args) => solve(args),
        Command::Bench(args) => bench(args).map(|_| ExitCode::SUCCESS),
        Command::Equiv(args) => equiv(args).map(|_| ExitCode::SUCCESS),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

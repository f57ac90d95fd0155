//! Benchmark grids over instance families, solver variants and tolerances.
//!
//! Repetition `j` of a cell solves the instance generated with
//! `seed + j`, so every variant in a plan sees the same instances.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{MsviError, Result};
use crate::examples::{gen_example1, gen_example2, Example1Config, Example2Config};
use crate::inner::InnerConfig;
use crate::pha::{builtin_schedule, run_solver, RunConfig, RunReport, RunStatus, SolverVariant};
use crate::problem::MsviInstance;

pub const BENCH_CSV_HEADER: &str = "variant,instance,eps,avg_iter,avg_time_ms,reps,failures";

fn default_max_outer() -> usize {
    10_000
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InstanceSpec {
    Example1(Example1Config),
    Example2(Example2Config),
}

impl InstanceSpec {
    pub fn with_seed(self, seed: u64) -> Self {
        match self {
            Self::Example1(c) => Self::Example1(Example1Config { seed, ..c }),
            Self::Example2(c) => Self::Example2(Example2Config { seed, ..c }),
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            Self::Example1(c) => c.seed,
            Self::Example2(c) => c.seed,
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::Example1(c) => c.label(),
            Self::Example2(c) => c.label(),
        }
    }

    pub fn generate(&self) -> Result<MsviInstance> {
        match self {
            Self::Example1(c) => gen_example1(c),
            Self::Example2(c) => gen_example2(c),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchCell {
    pub instance: InstanceSpec,
    pub variant: SolverVariant,
    /// Outer tolerance on the max-over-scenarios natural residual.
    pub eps: f64,
    pub reps: usize,
    #[serde(default = "default_max_outer")]
    pub max_outer: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchPlan {
    pub cells: Vec<BenchCell>,
}

impl BenchPlan {
    /// Every combination of `instances x variants x eps`.
    pub fn grid(
        instances: &[InstanceSpec],
        variants: &[SolverVariant],
        eps: &[f64],
        reps: usize,
        max_outer: usize,
    ) -> Self {
        let mut cells = Vec::new();
        for &instance in instances {
            for &e in eps {
                for &variant in variants {
                    cells.push(BenchCell {
                        instance,
                        variant,
                        eps: e,
                        reps,
                        max_outer,
                    });
                }
            }
        }
        Self { cells }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, c) in self.cells.iter().enumerate() {
            if c.reps == 0 {
                return Err(MsviError::InvalidConfig(format!("cell {i}: reps must be >= 1")));
            }
            if !(c.eps > 0.0) {
                return Err(MsviError::InvalidConfig(format!("cell {i}: eps must be > 0")));
            }
            if c.max_outer == 0 {
                return Err(MsviError::InvalidConfig(format!("cell {i}: max_outer must be >= 1")));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let plan: Self = serde_json::from_str(text)?;
        plan.validate()?;
        Ok(plan)
    }
}

/// Outcome of one repetition.
#[derive(Clone, Debug)]
pub enum BenchRun {
    Finished(RunReport),
    /// Instance generation or setup failed.
    Error(String),
}

impl BenchRun {
    pub fn report(&self) -> Option<&RunReport> {
        match self {
            Self::Finished(r) => Some(r),
            Self::Error(_) => None,
        }
    }

    fn failed(&self) -> bool {
        match self {
            Self::Finished(r) => r.status != RunStatus::Converged,
            Self::Error(_) => true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BenchRow {
    pub variant: SolverVariant,
    pub instance: String,
    pub eps: f64,
    /// Mean outer iterations over converged runs; NaN when none converged.
    pub avg_iter: f64,
    pub avg_time_ms: f64,
    pub reps: usize,
    /// Runs that errored, failed in the inner solver or hit `max_outer`.
    pub failures: usize,
    pub runs: Vec<BenchRun>,
}

impl BenchRow {
    /// Outer iteration counts of the converged runs.
    pub fn iterations(&self) -> Vec<usize> {
        self.runs
            .iter()
            .filter(|r| !r.failed())
            .filter_map(|r| r.report().map(RunReport::outer_iters))
            .collect()
    }

    /// Median of [`BenchRow::iterations`] (mean of the middle pair for
    /// even counts).
    pub fn median_iter(&self) -> Option<f64> {
        let mut it = self.iterations();
        if it.is_empty() {
            return None;
        }
        it.sort_unstable();
        let n = it.len();
        Some(if n % 2 == 1 {
            it[n / 2] as f64
        } else {
            (it[n / 2 - 1] + it[n / 2]) as f64 / 2.0
        })
    }
}

#[derive(Clone, Debug, Default)]
pub struct BenchTable {
    pub rows: Vec<BenchRow>,
}

impl BenchTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(BENCH_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{:e},{},{:.3},{},{}",
                r.variant, r.instance, r.eps, r.avg_iter, r.avg_time_ms, r.reps, r.failures
            );
        }
        out
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

pub fn run_cell(cell: &BenchCell, inner: &InnerConfig) -> BenchRow {
    let runs: Vec<BenchRun> = (0..cell.reps)
        .map(|j| {
            let spec = cell.instance.with_seed(cell.instance.seed().wrapping_add(j as u64));
            let outcome = spec.generate().and_then(|inst| {
                let sched = builtin_schedule(cell.variant, inst.dim());
                run_solver(&inst, cell.variant, &sched, inner, &RunConfig::new(cell.eps, cell.max_outer))
            });
            match outcome {
                Ok(report) => BenchRun::Finished(report),
                Err(e) => BenchRun::Error(e.to_string()),
            }
        })
        .collect();
    let ok = || runs.iter().filter(|r| !r.failed()).filter_map(BenchRun::report);
    BenchRow {
        variant: cell.variant,
        instance: cell.instance.label(),
        eps: cell.eps,
        avg_iter: mean(ok().map(|r| r.outer_iters() as f64)),
        avg_time_ms: mean(ok().map(|r| r.wall_ms)),
        reps: cell.reps,
        failures: runs.iter().filter(|r| r.failed()).count(),
        runs,
    }
}

/// Runs every cell in order. Individual run failures are counted per cell.
pub fn run_bench(plan: &BenchPlan, inner: &InnerConfig) -> Result<BenchTable> {
    plan.validate()?;
    inner.validate()?;
    Ok(BenchTable {
        rows: plan.cells.iter().map(|c| run_cell(c, inner)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_plan_gives_header_only() {
        let table = run_bench(&BenchPlan::default(), &InnerConfig::default()).unwrap();
        assert!(table.rows.is_empty());
        assert_eq!(table.to_csv(), format!("{BENCH_CSV_HEADER}\n"));
    }

    #[test]
    fn reps_are_averaged() {
        let spec = InstanceSpec::Example1(Example1Config {
            m: 2,
            n0: 1,
            n1: 1,
            seed: 5,
        });
        let plan = BenchPlan::grid(&[spec], &[SolverVariant::Algorithm1], &[1e-3], 5, 2000);
        let table = run_bench(&plan, &InnerConfig::default()).unwrap();
        let row = &table.rows[0];
        assert_eq!(row.runs.len(), 5);
        assert_eq!(row.failures, 0);
        let iters = row.iterations();
        let expected = iters.iter().sum::<usize>() as f64 / 5.0;
        assert_eq!(row.avg_iter, expected);
        let csv = table.to_csv();
        assert_eq!(csv.lines().count(), 2);
        assert!(csv.lines().nth(1).unwrap().starts_with("alg1,ex1-m2-n1x1,1e-3,"));
    }

    #[test]
    fn zero_reps_rejected() {
        let spec = InstanceSpec::Example2(Example2Config {
            stages: 2,
            ell: 1,
            kappa: 0,
            seed: 0,
        });
        let plan = BenchPlan::grid(&[spec], &[SolverVariant::Pha], &[1e-3], 0, 10);
        assert!(run_bench(&plan, &InnerConfig::default()).is_err());
        let json = serde_json::to_string(&plan).unwrap();
        assert!(BenchPlan::from_json(&json).is_err());
    }
}

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{IterationState, ParamSchedule, RunConfig, SolverVariant};
use crate::field::RandomField;
use crate::inner::InnerConfig;

pub const TRACE_CSV_HEADER: &str = "k,err,e_norm,theta,alpha,beta,eps,inner_iters,elapsed_ms";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Converged,
    Exhausted,
    Failed,
}

/// Step `k` (parameters `θ_k, α_k, β_k, ε_k`) and the residual of the
/// iterate it produced, `Err(x^{k+1})`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    pub err: f64,
    pub e_norm: f64,
    pub theta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub eps: f64,
    pub inner_iters: usize,
    pub elapsed_ms: f64,
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub variant: SolverVariant,
    pub schedule: ParamSchedule,
    pub inner: InnerConfig,
    pub outer_tol: f64,
    pub max_outer: usize,
    pub initial_err: f64,
    pub records: Vec<IterationRecord>,
    pub status: RunStatus,
    pub failure: Option<String>,
    pub final_err: f64,
    pub wall_ms: f64,
    pub x: RandomField,
    pub y: RandomField,
    /// `(x^k, y^k)` for `k = 0, 1, ...` when requested.
    pub iterates: Option<Vec<(RandomField, RandomField)>>,
}

#[derive(Serialize, Deserialize)]
struct Summary {
    variant: SolverVariant,
    params: SummaryParams,
    outer_iters: usize,
    wall_ms: f64,
    final_err: f64,
    status: RunStatus,
}

#[derive(Serialize, Deserialize)]
struct SummaryParams {
    #[serde(flatten)]
    schedule: ParamSchedule,
    outer_tol: f64,
    max_outer: usize,
    inner_max_iters: usize,
    inner_step: Option<f64>,
}

impl RunReport {
    pub(crate) fn new(
        variant: SolverVariant,
        schedule: ParamSchedule,
        inner: InnerConfig,
        run: &RunConfig,
        initial_err: f64,
    ) -> Self {
        Self {
            variant,
            schedule,
            inner,
            outer_tol: run.outer_tol,
            max_outer: run.max_outer,
            initial_err,
            records: Vec::new(),
            status: RunStatus::Exhausted,
            failure: None,
            final_err: initial_err,
            wall_ms: 0.0,
            x: RandomField::zeros(0, 0),
            y: RandomField::zeros(0, 0),
            iterates: run.record_iterates.then(Vec::new),
        }
    }

    pub(crate) fn push_iterate(&mut self, state: &IterationState) {
        if let Some(it) = self.iterates.as_mut() {
            it.push((state.x.clone(), state.y.clone()));
        }
    }

    /// Number of outer steps taken.
    pub fn outer_iters(&self) -> usize {
        self.records.len()
    }

    pub fn converged(&self) -> bool {
        self.status == RunStatus::Converged
    }

    /// Per-iteration trace, one row per outer step.
    pub fn trace_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.records.len() + 1));
        out.push_str(TRACE_CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{:e},{:e},{},{},{},{:e},{},{:.3}",
                r.k, r.err, r.e_norm, r.theta, r.alpha, r.beta, r.eps, r.inner_iters, r.elapsed_ms
            );
        }
        out
    }

    /// JSON summary: variant, parameters, outer iterations, wall time,
    /// final residual and status.
    pub fn summary_json(&self) -> String {
        let summary = Summary {
            variant: self.variant,
            params: SummaryParams {
                schedule: self.schedule,
                outer_tol: self.outer_tol,
                max_outer: self.max_outer,
                inner_max_iters: self.inner.max_iters,
                inner_step: self.inner.step,
            },
            outer_iters: self.outer_iters(),
            wall_ms: self.wall_ms,
            final_err: self.final_err,
            status: self.status,
        };
        let mut s = serde_json::to_string_pretty(&summary).expect("summary is plain data");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pha::{builtin_schedule, run_solver};
    use crate::test_support::random_instance;

    #[test]
    fn csv_and_json_layout() {
        let inst = random_instance(2, 3, &[1, 2]);
        let sched = builtin_schedule(SolverVariant::Hripha, 3);
        let report = run_solver(
            &inst,
            SolverVariant::Hripha,
            &sched,
            &InnerConfig::default(),
            &RunConfig::new(1e-5, 500),
        )
        .unwrap();
        let csv = report.trace_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(TRACE_CSV_HEADER));
        assert_eq!(lines.clone().count(), report.outer_iters());
        for line in lines {
            assert_eq!(line.split(',').count(), 9);
        }
        let json: serde_json::Value = serde_json::from_str(&report.summary_json()).unwrap();
        for key in ["variant", "params", "outer_iters", "wall_ms", "final_err", "status"] {
            assert!(json.get(key).is_some(), "missing {key}");
        }
        assert_eq!(json["variant"], "hripha");
        assert_eq!(json["status"], "converged");
        assert_eq!(json["params"]["theta"]["kind"], "zero");
    }
}

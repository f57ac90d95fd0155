//! Halpern-type relaxed inertial inexact progressive hedging.
//!
//! One outer step from `(x^{k-1}, y^{k-1}), (x^k, y^k)`:
//!
//! ```text
//! x̂ = x^k + θ_k (x^k - x^{k-1}),   ŷ = y^k + θ_k (y^k - y^{k-1})
//! x̃ ≈ argVI of F(·) + ŷ + r(· - x̂) over C, with ‖x̃ - z‖ <= ε_k
//! z = Π_C(x̂ - r⁻¹[F(x̃) + ŷ]),   e = F(x̃) - F(z)
//! x^{k+1} = α_k x⁰ + (1-α_k)[(1-β_k) x̂ + β_k P_N z]
//! y^{k+1} = α_k y⁰ + (1-α_k){(1-β_k) ŷ + β_k [ŷ + r P_M z + P_M e]}
//! ```
//!
//! The iterates stay in `N x M` by construction.

mod report;
mod schedule;

use std::time::Instant;

pub use report::{IterationRecord, RunReport, RunStatus};
pub use schedule::{
    builtin_schedule, theta_hat, AlphaRule, BetaRule, ParamSchedule, SolverVariant, ThetaRule,
    ToleranceRule,
};

use crate::error::{MsviError, Result};
use crate::field::RandomField;
use crate::inner::{solve_subproblem, InnerConfig};
use crate::problem::MsviInstance;

/// Relative tolerance for `x ∈ N`, `y ∈ M` membership checks.
pub const SUBSPACE_TOL: f64 = 1e-10;

/// Two consecutive iterate pairs plus the anchor `(x⁰, y⁰)`.
#[derive(Clone, Debug)]
pub struct IterationState {
    pub k: usize,
    pub x_prev: RandomField,
    pub x: RandomField,
    pub y_prev: RandomField,
    pub y: RandomField,
    pub x_anchor: RandomField,
    pub y_anchor: RandomField,
    /// Last subproblem projection, used as the next warm start.
    pub z_cache: Option<RandomField>,
}

impl IterationState {
    /// Starts at `x^{-1} = x⁰`, `y^{-1} = y⁰`. Fails unless `x0 ∈ N` and
    /// `y0 ∈ M` to [`SUBSPACE_TOL`].
    pub fn new(inst: &MsviInstance, x0: RandomField, y0: RandomField) -> Result<Self> {
        Self::with_previous(inst, x0.clone(), x0, y0.clone(), y0)
    }

    pub fn with_previous(
        inst: &MsviInstance,
        x_prev: RandomField,
        x0: RandomField,
        y_prev: RandomField,
        y0: RandomField,
    ) -> Result<Self> {
        let tree = inst.tree();
        for (name, f) in [("x", &x_prev), ("x", &x0), ("y", &y_prev), ("y", &y0)] {
            tree.check(f)?;
            let off = if name == "x" {
                tree.anticipativity_gap(f)
            } else {
                tree.norm(&tree.project_n(f)?)
            };
            if off > SUBSPACE_TOL * (1.0 + tree.norm(f)) {
                let space = if name == "x" { "N" } else { "M" };
                return Err(MsviError::InvalidConfig(format!(
                    "initial {name} is not in {space} (distance {off:e})"
                )));
            }
        }
        Ok(Self {
            k: 0,
            x_anchor: x0.clone(),
            y_anchor: y0.clone(),
            x_prev,
            x: x0,
            y_prev,
            y: y0,
            z_cache: None,
        })
    }

    /// `x⁰ = P_N(midpoint of C)`, `y⁰ = 0`.
    pub fn default_start(inst: &MsviInstance) -> Self {
        let x0 = inst.tree().project_n_unchecked(&inst.bounds().midpoint());
        let (m, n) = inst.shape();
        Self::new(inst, x0, RandomField::zeros(m, n)).expect("P_N of the box midpoint lies in N")
    }

    /// `u^k = x^k - r⁻¹ y^k`, the matching proximal point iterate.
    pub fn decoded(&self, r: f64) -> RandomField {
        self.x.lin_comb(1.0, &self.y, -1.0 / r)
    }
}

/// Everything computed during one outer step.
#[derive(Clone, Debug)]
pub struct StepInfo {
    pub theta: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Inner tolerance actually enforced.
    pub eps: f64,
    pub x_hat: RandomField,
    pub y_hat: RandomField,
    pub x_tilde: RandomField,
    pub z: RandomField,
    pub e: RandomField,
    pub e_norm: f64,
    pub inner_iters: usize,
}

/// One outer step. The returned state has `k` advanced by one.
pub fn step_algorithm1(
    state: &IterationState,
    inst: &MsviInstance,
    sched: &ParamSchedule,
    cfg: &InnerConfig,
) -> Result<(IterationState, StepInfo)> {
    let tree = inst.tree();
    let k = state.k;
    let r = sched.r;
    let alpha = sched.alpha(k);
    let beta = sched.beta(k);
    let dx = &state.x - &state.x_prev;
    let dy = &state.y - &state.y_prev;
    let theta = sched.theta(inst.space(), k, &dx, &dy);

    let x_hat = state.x.lin_comb(1.0, &dx, theta);
    let y_hat = state.y.lin_comb(1.0, &dy, theta);

    let inner_cfg = cfg.with_tol(sched.eps(k));
    let sol = solve_subproblem(inst, &x_hat, &y_hat, r, &inner_cfg, state.z_cache.as_ref())
        .map_err(|source| MsviError::AtIteration {
            iteration: k,
            source: Box::new(source),
        })?;

    let f_tilde = inst.evaluate_f(&sol.x_tilde)?;
    let f_z = inst.evaluate_f(&sol.z)?;
    let e = &f_tilde - &f_z;
    let e_norm = tree.norm(&e);

    let pn_z = tree.project_n_unchecked(&sol.z);
    let pm_z = &sol.z - &pn_z;
    let pm_e = tree.project_m_unchecked(&e);

    // (1-β) x̂ + β P_N z
    let relaxed_x = x_hat.lin_comb(1.0 - beta, &pn_z, beta);
    let x_next = state.x_anchor.lin_comb(alpha, &relaxed_x, 1.0 - alpha);

    // (1-β) ŷ + β [ŷ + r P_M z + P_M e]
    let mut corrected_y = y_hat.lin_comb(1.0, &pm_z, r);
    corrected_y.axpy(1.0, &pm_e);
    let relaxed_y = y_hat.lin_comb(1.0 - beta, &corrected_y, beta);
    let y_next = state.y_anchor.lin_comb(alpha, &relaxed_y, 1.0 - alpha);

    let next = IterationState {
        k: k + 1,
        x_prev: state.x.clone(),
        x: x_next,
        y_prev: state.y.clone(),
        y: y_next,
        x_anchor: state.x_anchor.clone(),
        y_anchor: state.y_anchor.clone(),
        z_cache: Some(sol.z.clone()),
    };
    let info = StepInfo {
        theta,
        alpha,
        beta,
        eps: inner_cfg.effective_tol(),
        x_hat,
        y_hat,
        x_tilde: sol.x_tilde,
        z: sol.z,
        e,
        e_norm,
        inner_iters: sol.iterations,
    };
    Ok((next, info))
}

/// Outer-loop controls for [`run_solver`].
#[derive(Clone, Debug)]
pub struct RunConfig {
    /// Stop once `Err(x^k) < outer_tol`.
    pub outer_tol: f64,
    pub max_outer: usize,
    /// Keep every `(x^k, y^k)` in the report.
    pub record_iterates: bool,
    /// Overrides the default start `(P_N(mid C), 0)`.
    pub start: Option<IterationState>,
}

impl RunConfig {
    pub fn new(outer_tol: f64, max_outer: usize) -> Self {
        Self {
            outer_tol,
            max_outer,
            record_iterates: false,
            start: None,
        }
    }
}

/// Runs `variant` (with its degenerations forced onto `sched`) until the
/// max-over-scenarios natural residual drops below `run.outer_tol` or
/// `run.max_outer` steps have been taken.
///
/// Invalid inputs are errors. An inner-solver failure mid-run ends the run
/// with [`RunStatus::Failed`] and keeps the trace.
pub fn run_solver(
    inst: &MsviInstance,
    variant: SolverVariant,
    sched: &ParamSchedule,
    cfg: &InnerConfig,
    run: &RunConfig,
) -> Result<RunReport> {
    let sched = variant.constrain(*sched);
    sched.validate()?;
    if !(run.outer_tol > 0.0) {
        return Err(MsviError::NonPositive {
            name: "outer tolerance",
            value: run.outer_tol,
        });
    }
    let r = sched.r;
    let started = Instant::now();
    let mut state = match &run.start {
        Some(s) => s.clone(),
        None => IterationState::default_start(inst),
    };
    let initial_err = inst.residual_err(&state.x, &state.y, r)?;
    let mut report = RunReport::new(variant, sched, cfg.clone(), run, initial_err);
    if run.record_iterates {
        report.push_iterate(&state);
    }

    let mut err = initial_err;
    let mut status = if err < run.outer_tol {
        RunStatus::Converged
    } else {
        RunStatus::Exhausted
    };
    while status != RunStatus::Converged && report.records.len() < run.max_outer {
        let k = state.k;
        let (next, info) = match step_algorithm1(&state, inst, &sched, cfg) {
            Ok(step) => step,
            Err(e) => {
                status = RunStatus::Failed;
                report.failure = Some(e.to_string());
                break;
            }
        };
        state = next;
        err = inst.residual_err(&state.x, &state.y, r)?;
        report.records.push(IterationRecord {
            k,
            err,
            e_norm: info.e_norm,
            theta: info.theta,
            alpha: info.alpha,
            beta: info.beta,
            eps: info.eps,
            inner_iters: info.inner_iters,
            elapsed_ms: started.elapsed().as_secs_f64() * 1e3,
        });
        if run.record_iterates {
            report.push_iterate(&state);
        }
        if err < run.outer_tol {
            status = RunStatus::Converged;
        }
    }

    report.status = status;
    report.final_err = err;
    report.wall_ms = started.elapsed().as_secs_f64() * 1e3;
    report.x = state.x;
    report.y = state.y;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_support::{random_field, random_instance, scalar_instance};

    fn scalar(v: f64) -> RandomField {
        RandomField::filled(1, 1, v)
    }

    fn tight() -> InnerConfig {
        InnerConfig {
            tol: 1e-14,
            ..Default::default()
        }
    }

    #[test]
    fn solution_pair_is_a_fixed_point() {
        // F(x) = x - 0.5 on [0, 1]: x* = 0.5, y* = 0
        let inst = scalar_instance(1.0, -0.5);
        let sched = ParamSchedule {
            r: 1.0,
            alpha: AlphaRule::Zero,
            beta: BetaRule::Constant { value: 1.3 },
            theta: ThetaRule::Zero,
            eps: ToleranceRule::Constant { value: 0.0 },
        };
        let state = IterationState::new(&inst, scalar(0.5), scalar(0.0)).unwrap();
        let (next, info) = step_algorithm1(&state, &inst, &sched, &tight()).unwrap();
        assert!((next.x.get(0, 0) - 0.5).abs() < 1e-14);
        assert!(next.y.get(0, 0).abs() < 1e-14);
        assert!(info.e_norm < 1e-14);
        assert_eq!(next.k, 1);
    }

    #[test]
    fn equal_history_means_no_extrapolation() {
        let inst = random_instance(3, 4, &[2, 2]);
        let tree = inst.tree();
        let x = tree.project_n(&random_field(1, 4, 4)).unwrap();
        let y = tree.project_m(&random_field(2, 4, 4)).unwrap();
        let state = IterationState::new(&inst, x.clone(), y.clone()).unwrap();
        let mut sched = builtin_schedule(SolverVariant::Algorithm1, 4);
        sched.theta = ThetaRule::Constant { value: 0.9 };
        let (_, info) = step_algorithm1(&state, &inst, &sched, &InnerConfig::default()).unwrap();
        assert_eq!(info.x_hat, x);
        assert_eq!(info.y_hat, y);
    }

    #[test]
    fn rejects_starts_outside_the_subspaces() {
        let inst = random_instance(3, 4, &[2, 2]);
        let x = random_field(1, 4, 4);
        assert!(IterationState::new(&inst, x, RandomField::zeros(4, 4)).is_err());
        let y = RandomField::filled(4, 4, 1.0);
        let x0 = IterationState::default_start(&inst).x;
        assert!(IterationState::new(&inst, x0, y).is_err());
    }

    #[test]
    fn already_solved_start_stops_immediately() {
        let inst = scalar_instance(1.0, -0.5);
        let sched = builtin_schedule(SolverVariant::Algorithm1, 1);
        let mut run = RunConfig::new(1e-8, 10);
        run.start = Some(IterationState::new(&inst, scalar(0.5), scalar(0.0)).unwrap());
        let report = run_solver(&inst, SolverVariant::Algorithm1, &sched, &InnerConfig::default(), &run)
            .unwrap();
        assert_eq!(report.status, RunStatus::Converged);
        assert!(report.outer_iters() <= 1);
    }

    #[test]
    fn exhausted_run_keeps_trace() {
        let inst = random_instance(5, 3, &[2, 2]);
        let sched = builtin_schedule(SolverVariant::Pha, 4);
        let run = RunConfig::new(1e-300, 3);
        let report = run_solver(&inst, SolverVariant::Pha, &sched, &InnerConfig::default(), &run)
            .unwrap();
        assert_eq!(report.status, RunStatus::Exhausted);
        assert_eq!(report.records.len(), 3);
    }

    #[test]
    fn inner_failure_is_recorded() {
        let inst = random_instance(5, 3, &[2, 2]);
        let sched = builtin_schedule(SolverVariant::Pha, 4);
        let cfg = InnerConfig {
            max_iters: 1,
            ..Default::default()
        };
        let report = run_solver(&inst, SolverVariant::Pha, &sched, &cfg, &RunConfig::new(1e-6, 10))
            .unwrap();
        assert_eq!(report.status, RunStatus::Failed);
        assert!(report.failure.as_deref().unwrap().contains("outer iteration 0"));
    }

    #[test]
    fn converges_on_small_instance() {
        let inst = random_instance(11, 4, &[2, 2]);
        let sched = builtin_schedule(SolverVariant::Algorithm1, 4);
        let mut run = RunConfig::new(1e-6, 2000);
        run.record_iterates = true;
        let report =
            run_solver(&inst, SolverVariant::Algorithm1, &sched, &InnerConfig::default(), &run)
                .unwrap();
        assert_eq!(report.status, RunStatus::Converged);
        assert!(report.final_err < 1e-6);
        let iterates = report.iterates.as_ref().unwrap();
        assert_eq!(iterates.len(), report.records.len() + 1);
        for (rec, (x, y)) in report.records.iter().zip(&iterates[1..]) {
            assert_eq!(rec.err, inst.residual_err(x, y, sched.r).unwrap());
        }
    }
}

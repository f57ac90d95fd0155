//! Halpern-type relaxed inertial inexact proximal point iteration
//!
//! ```text
//! û^k     = u^k + θ_k (u^k - u^{k-1})
//! u^{k+1} = α_k u⁰ + (1 - α_k)[(1 - β_k) û^k + β_k J_s(û^k - s e^k)]
//! ```
//!
//! for a maximal monotone operator given through its resolvent
//! `J_s = (I + sT)⁻¹`. Two resolvents are provided: affine operators
//! `T(u) = Mu + q` on `R^d`, and the rescaled partial inverse `ATA` of
//! `F + N_C` built from the progressive hedging subproblem.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, SymmetricEigen, LU};

use crate::error::{MsviError, Result};
use crate::field::RandomField;
use crate::inner::{solve_subproblem, InnerConfig};
use crate::pha::{step_algorithm1, AlphaRule, BetaRule, IterationState, ParamSchedule, ThetaRule};
use crate::problem::{MsviInstance, PSD_TOL};
use crate::scenario::positive;

/// Anything the iteration can take linear combinations of.
pub trait PpaPoint: Clone {
    /// `a * self + b * other`
    fn lin_comb(&self, a: f64, other: &Self, b: f64) -> Self;
}

impl PpaPoint for DVector<f64> {
    fn lin_comb(&self, a: f64, other: &Self, b: f64) -> Self {
        self * a + other * b
    }
}

impl PpaPoint for RandomField {
    fn lin_comb(&self, a: f64, other: &Self, b: f64) -> Self {
        RandomField::lin_comb(self, a, other, b)
    }
}

/// Evaluates `J_s(w)` for a fixed `s > 0`, possibly only to within a
/// declared tolerance.
pub trait ResolventOracle {
    type Point: PpaPoint;

    /// The resolvent parameter `s`.
    fn step(&self) -> f64;

    /// Declared evaluation error bound; zero for exact evaluators.
    fn tolerance(&self) -> f64 {
        0.0
    }

    fn resolve(&self, w: &Self::Point) -> Result<Self::Point>;

    /// Norm of the underlying Hilbert space.
    fn norm(&self, u: &Self::Point) -> f64;
}

/// `T(u) = Mu + q` with `M + Mᵀ` positive semidefinite.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineMonotoneOperator {
    matrix: DMatrix<f64>,
    offset: DVector<f64>,
}

impl AffineMonotoneOperator {
    pub fn new(matrix: DMatrix<f64>, offset: DVector<f64>) -> Result<Self> {
        let d = offset.len();
        if matrix.shape() != (d, d) {
            return Err(MsviError::ShapeMismatch {
                expected: (d, d),
                found: matrix.shape(),
            });
        }
        if d > 0 {
            let sym = &matrix + matrix.transpose();
            let min_eigenvalue = SymmetricEigen::new(sym).eigenvalues.min();
            if min_eigenvalue < PSD_TOL {
                return Err(MsviError::NotMonotone {
                    scenario: 0,
                    min_eigenvalue,
                });
            }
        }
        Ok(Self { matrix, offset })
    }

    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn offset(&self) -> &DVector<f64> {
        &self.offset
    }

    pub fn apply(&self, u: &DVector<f64>) -> DVector<f64> {
        &self.matrix * u + &self.offset
    }
}

/// Solves `(I + sM) v = u - s q`.
pub fn resolvent_affine(
    op: &AffineMonotoneOperator,
    s: f64,
    u: &DVector<f64>,
) -> Result<DVector<f64>> {
    AffineResolvent::new(op.clone(), s)?.resolve(u)
}

/// Exact resolvent of an affine monotone operator, with the system matrix
/// factorized once.
#[derive(Clone, Debug)]
pub struct AffineResolvent {
    op: AffineMonotoneOperator,
    s: f64,
    system: DMatrix<f64>,
    lu: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl AffineResolvent {
    pub fn new(op: AffineMonotoneOperator, s: f64) -> Result<Self> {
        let s = positive("s", s)?;
        let d = op.dim();
        let system = DMatrix::identity(d, d) + op.matrix() * s;
        let lu = system.clone().lu();
        Ok(Self { op, s, system, lu })
    }

    pub fn operator(&self) -> &AffineMonotoneOperator {
        &self.op
    }
}

impl ResolventOracle for AffineResolvent {
    type Point = DVector<f64>;

    fn step(&self) -> f64 {
        self.s
    }

    fn resolve(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        if u.len() != self.op.dim() {
            return Err(MsviError::ShapeMismatch {
                expected: (self.op.dim(), 1),
                found: (u.len(), 1),
            });
        }
        let rhs = u - self.op.offset() * self.s;
        let v = self.lu.solve(&rhs).ok_or(MsviError::Singular)?;
        let residual = (&self.system * &v - &rhs).norm();
        if !(residual <= 1e-10 * (1.0 + u.norm())) {
            return Err(MsviError::Singular);
        }
        Ok(v)
    }

    fn norm(&self, u: &DVector<f64>) -> f64 {
        u.norm()
    }
}

/// Resolvent `J_{1/r}` of `ATA`, where `T` is the partial inverse of
/// `F + N_C` with respect to `N` and `A = P_N + r P_M`.
///
/// With `x̂ = P_N(Aw)` and `ŷ = -P_M(Aw)`, the subproblem at `(x̂, ŷ)` is
/// solved to `δ` giving `z`, and the result is `P_N z - P_M z - r⁻¹ ŷ`.
pub struct AtaResolvent<'a> {
    inst: &'a MsviInstance,
    r: f64,
    inner: InnerConfig,
}

impl<'a> AtaResolvent<'a> {
    pub fn new(inst: &'a MsviInstance, r: f64, delta: f64, inner: &InnerConfig) -> Result<Self> {
        let r = positive("r", r)?;
        if !(delta >= 0.0) {
            return Err(MsviError::InvalidConfig(format!("resolvent tolerance {delta} < 0")));
        }
        Ok(Self {
            inst,
            r,
            inner: InnerConfig {
                warm_start: false,
                ..inner.with_tol(delta)
            },
        })
    }
}

impl ResolventOracle for AtaResolvent<'_> {
    type Point = RandomField;

    fn step(&self) -> f64 {
        1.0 / self.r
    }

    fn tolerance(&self) -> f64 {
        self.inner.effective_tol()
    }

    fn resolve(&self, w: &RandomField) -> Result<RandomField> {
        let tree = self.inst.tree();
        let aw = tree.rescale(w, self.r)?;
        let x_hat = tree.project_n_unchecked(&aw);
        let y_hat = &x_hat - &aw;
        let sol = solve_subproblem(self.inst, &x_hat, &y_hat, self.r, &self.inner, None)?;
        let mut out = tree.combine_parts(&sol.z, 1.0, -1.0)?;
        out.axpy(-1.0 / self.r, &y_hat);
        Ok(out)
    }

    fn norm(&self, u: &RandomField) -> f64 {
        self.inst.tree().norm(u)
    }
}

/// [`AtaResolvent`] evaluated once.
pub fn resolvent_ata(w: &RandomField, inst: &MsviInstance, r: f64, delta: f64) -> Result<RandomField> {
    AtaResolvent::new(inst, r, delta, &InnerConfig::default())?.resolve(w)
}

/// Weights of a single step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepWeights {
    pub alpha: f64,
    pub beta: f64,
    pub theta: f64,
}

/// Parameter rules for the proximal point iteration; `θ` uses
/// `‖u^k - u^{k-1}‖` in place of the primal-dual difference.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PpaParams {
    pub alpha: AlphaRule,
    pub beta: BetaRule,
    pub theta: ThetaRule,
}

impl PpaParams {
    /// `α_k = 1/(2000(k+1))`, `β_k = 1.5 - 1/(k+1)²`, adaptive `θ_k`
    /// with `θ̄ = 1/3`, `τ = 10⁶`.
    pub fn builtin() -> Self {
        Self {
            alpha: AlphaRule::Harmonic { scale: 2000.0 },
            beta: BetaRule::Ramp { limit: 1.5 },
            theta: ThetaRule::Adaptive {
                cap: 1.0 / 3.0,
                scale: 1e6,
            },
        }
    }

    /// Plain proximal point: `α = θ = 0`, `β = 1`.
    pub fn classic() -> Self {
        Self {
            alpha: AlphaRule::Zero,
            beta: BetaRule::Constant { value: 1.0 },
            theta: ThetaRule::Zero,
        }
    }

    fn schedule(&self) -> ParamSchedule {
        ParamSchedule {
            r: 1.0,
            alpha: self.alpha,
            beta: self.beta,
            theta: self.theta,
            eps: crate::pha::ToleranceRule::Constant { value: 0.0 },
        }
    }

    /// Weights at step `k`, given `‖u^k - u^{k-1}‖`.
    pub fn weights(&self, k: usize, step_norm: f64) -> StepWeights {
        let sched = self.schedule();
        let alpha = sched.alpha(k);
        let theta = match self.theta {
            ThetaRule::Zero => 0.0,
            ThetaRule::Constant { value } => value,
            ThetaRule::Adaptive { cap, scale } => {
                if step_norm == 0.0 || k == 0 {
                    cap
                } else {
                    (scale * alpha / ((k as f64).powi(2) * step_norm)).min(cap)
                }
            }
        };
        StepWeights {
            alpha,
            beta: sched.beta(k),
            theta,
        }
    }
}

/// One step with explicit weights. `e` is the error term entering the
/// resolvent argument as `û - s e`.
pub fn halpern_ppa_update<J: ResolventOracle>(
    oracle: &J,
    u_prev: &J::Point,
    u_cur: &J::Point,
    u0: &J::Point,
    e: Option<&J::Point>,
    w: StepWeights,
) -> Result<J::Point> {
    let u_hat = u_cur.lin_comb(1.0 + w.theta, u_prev, -w.theta);
    let arg = match e {
        Some(e) => u_hat.lin_comb(1.0, e, -oracle.step()),
        None => u_hat.clone(),
    };
    let resolved = oracle.resolve(&arg)?;
    let relaxed = u_hat.lin_comb(1.0 - w.beta, &resolved, w.beta);
    Ok(u0.lin_comb(w.alpha, &relaxed, 1.0 - w.alpha))
}

/// One step with weights taken from `params` at iteration `k`.
pub fn step_halpern_ppa<J: ResolventOracle>(
    oracle: &J,
    params: &PpaParams,
    k: usize,
    u_prev: &J::Point,
    u_cur: &J::Point,
    u0: &J::Point,
    e: Option<&J::Point>,
) -> Result<J::Point> {
    let step_norm = oracle.norm(&u_cur.lin_comb(1.0, u_prev, -1.0));
    halpern_ppa_update(oracle, u_prev, u_cur, u0, e, params.weights(k, step_norm))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PpaStop {
    pub max_iters: usize,
    /// Stop early once `‖u^{k+1} - u^k‖ <= step_tol`. Zero disables.
    pub step_tol: f64,
}

impl PpaStop {
    pub fn iterations(max_iters: usize) -> Self {
        Self {
            max_iters,
            step_tol: 0.0,
        }
    }
}

pub const TRAJECTORY_CSV_HEADER: &str = "k,dist_to_limit,step_norm";

#[derive(Clone, Debug)]
pub struct PpaTrajectory<P> {
    /// `u^0, u^1, ..., u^K`.
    pub iterates: Vec<P>,
    /// `‖u^{k+1} - u^k‖` for each step taken.
    pub step_norms: Vec<f64>,
}

impl<P: PpaPoint> PpaTrajectory<P> {
    pub fn last(&self) -> &P {
        self.iterates.last().expect("trajectory holds u0")
    }

    pub fn len(&self) -> usize {
        self.step_norms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.step_norms.is_empty()
    }

    /// One row per iterate; `step_norm` is the step that produced it (0 for `u^0`).
    pub fn to_csv(&self, limit: &P, norm: impl Fn(&P) -> f64) -> String {
        let mut out = String::from(TRAJECTORY_CSV_HEADER);
        out.push('\n');
        for (k, u) in self.iterates.iter().enumerate() {
            let dist = norm(&u.lin_comb(1.0, limit, -1.0));
            let step = if k == 0 { 0.0 } else { self.step_norms[k - 1] };
            let _ = writeln!(out, "{k},{dist:e},{step:e}");
        }
        out
    }
}

/// Runs the iteration from `u^{-1} = u^0`. `errors(k)` supplies `e^k`.
pub fn run_ppa<J: ResolventOracle>(
    oracle: &J,
    u0: &J::Point,
    params: &PpaParams,
    stop: PpaStop,
    mut errors: impl FnMut(usize) -> Option<J::Point>,
) -> Result<PpaTrajectory<J::Point>> {
    let mut iterates = vec![u0.clone()];
    let mut step_norms = Vec::new();
    let mut prev = u0.clone();
    let mut cur = u0.clone();
    let mut last_step = 0.0;
    for k in 0..stop.max_iters {
        let e = errors(k);
        let w = params.weights(k, last_step);
        let next = halpern_ppa_update(oracle, &prev, &cur, u0, e.as_ref(), w)?;
        last_step = oracle.norm(&next.lin_comb(1.0, &cur, -1.0));
        step_norms.push(last_step);
        iterates.push(next.clone());
        prev = std::mem::replace(&mut cur, next);
        if stop.step_tol > 0.0 && last_step <= stop.step_tol {
            break;
        }
    }
    Ok(PpaTrajectory {
        iterates,
        step_norms,
    })
}

/// Maps a graph pair `(u, ξ)` of `T` to `(P1 u + P2 ξ, P1 ξ + P2 u)`, a
/// graph pair of the partial inverse of `T` with respect to the range of
/// `P1`. Applying it twice returns the input.
pub fn partial_inverse_map(
    u: &DVector<f64>,
    xi: &DVector<f64>,
    p1: &DMatrix<f64>,
    p2: &DMatrix<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let d = u.len();
    if xi.len() != d || p1.shape() != (d, d) || p2.shape() != (d, d) {
        return Err(MsviError::ShapeMismatch {
            expected: (d, d),
            found: p1.shape(),
        });
    }
    let defect = (p1 + p2 - DMatrix::identity(d, d)).amax();
    if defect > 1e-12 {
        return Err(MsviError::InvalidConfig(format!(
            "projections are not complementary: |P1 + P2 - I| = {defect:e}"
        )));
    }
    Ok((p1 * u + p2 * xi, p1 * xi + p2 * u))
}

#[derive(Clone, Debug)]
pub struct EquivalenceReport {
    /// `‖u^k_ppa - (x^k - r⁻¹ y^k)‖` for `k = 0..=K`.
    pub deviations: Vec<f64>,
    pub max_deviation: f64,
    /// The proximal point side of the comparison.
    pub trajectory: PpaTrajectory<RandomField>,
}

/// Runs the progressive hedging method for `steps` iterations from the
/// default start, and alongside it the proximal point recursion on `ATA`
/// fed with the same `α_k, β_k, θ_k` and error terms `e^k`. Returns how far
/// the decoded iterates `x^k - r⁻¹ y^k` drift from the proximal point ones.
pub fn equivalence_check(
    inst: &MsviInstance,
    sched: &ParamSchedule,
    cfg: &InnerConfig,
    steps: usize,
    delta: f64,
) -> Result<EquivalenceReport> {
    sched.validate()?;
    let r = sched.r;
    let oracle = AtaResolvent::new(inst, r, delta, cfg)?;
    let mut state = IterationState::default_start(inst);
    let u0 = state.decoded(r);
    let mut u_prev = state.x_prev.lin_comb(1.0, &state.y_prev, -1.0 / r);
    let mut u_cur = u0.clone();
    let mut deviations = vec![inst.space().distance(&u_cur, &state.decoded(r))];
    let mut trajectory = PpaTrajectory {
        iterates: vec![u0.clone()],
        step_norms: Vec::with_capacity(steps),
    };
    for _ in 0..steps {
        let (next, info) = step_algorithm1(&state, inst, sched, cfg)?;
        let w = StepWeights {
            alpha: info.alpha,
            beta: info.beta,
            theta: info.theta,
        };
        let u_next = halpern_ppa_update(&oracle, &u_prev, &u_cur, &u0, Some(&info.e), w)?;
        deviations.push(inst.space().distance(&u_next, &next.decoded(r)));
        trajectory.step_norms.push(inst.space().distance(&u_next, &u_cur));
        trajectory.iterates.push(u_next.clone());
        u_prev = std::mem::replace(&mut u_cur, u_next);
        state = next;
    }
    let max_deviation = deviations.iter().copied().fold(0.0, f64::max);
    Ok(EquivalenceReport {
        deviations,
        max_deviation,
        trajectory,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn op1(m: f64, q: f64) -> AffineMonotoneOperator {
        AffineMonotoneOperator::new(DMatrix::from_element(1, 1, m), DVector::from_element(1, q))
            .unwrap()
    }

    fn v(x: f64) -> DVector<f64> {
        DVector::from_element(1, x)
    }

    #[test]
    fn resolvent_affine_examples() {
        let id = op1(1.0, 0.0);
        assert_abs_diff_eq!(resolvent_affine(&id, 1.0, &v(3.0)).unwrap()[0], 1.5);

        let u = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let id3 = AffineMonotoneOperator::new(DMatrix::identity(3, 3), DVector::zeros(3)).unwrap();
        let j = resolvent_affine(&id3, 1e-12, &u).unwrap();
        assert!((j - &u).amax() <= 1e-9);

        // M = 2, q = -2, s = 0.5: (1 + 1) v = u + 1
        let op = op1(2.0, -2.0);
        for u in [-3.0, 0.0, 4.5] {
            assert_abs_diff_eq!(resolvent_affine(&op, 0.5, &v(u)).unwrap()[0], (u + 1.0) / 2.0, epsilon = 1e-15);
        }
        assert!(resolvent_affine(&op, 0.0, &v(1.0)).is_err());
        assert!(AffineMonotoneOperator::new(DMatrix::from_element(1, 1, -1.0), v(0.0)).is_err());
    }

    #[test]
    fn step_examples() {
        let j = AffineResolvent::new(op1(1.0, 0.0), 1.0).unwrap();
        let eight = v(8.0);
        let w = StepWeights {
            alpha: 0.5,
            beta: 1.0,
            theta: 0.0,
        };
        let next = halpern_ppa_update(&j, &eight, &eight, &eight, None, w).unwrap();
        assert_abs_diff_eq!(next[0], 6.0);

        let classic = StepWeights {
            alpha: 0.0,
            beta: 1.0,
            theta: 0.0,
        };
        let next = halpern_ppa_update(&j, &v(1.0), &v(3.0), &v(0.0), None, classic).unwrap();
        assert_abs_diff_eq!(next[0], j.resolve(&v(3.0)).unwrap()[0]);

        // u* = 0 is a fixed point whatever the weights
        let zero = v(0.0);
        let w = StepWeights {
            alpha: 0.3,
            beta: 1.7,
            theta: 0.6,
        };
        assert_eq!(halpern_ppa_update(&j, &zero, &zero, &zero, None, w).unwrap()[0], 0.0);
    }

    #[test]
    fn run_ppa_identity_goes_to_zero() {
        let j = AffineResolvent::new(op1(1.0, 0.0), 1.0).unwrap();
        let traj = run_ppa(&j, &v(5.0), &PpaParams::builtin(), PpaStop::iterations(200), |_| None)
            .unwrap();
        assert_eq!(traj.iterates.len(), 201);
        // the anchor keeps a pull of order α_k |u0| on the iterate
        assert!(traj.last()[0].abs() < 1e-4);
        let plain = run_ppa(&j, &v(5.0), &PpaParams::classic(), PpaStop::iterations(60), |_| None)
            .unwrap();
        assert!(plain.last()[0].abs() < 1e-15);
        let csv = traj.to_csv(&v(0.0), |u| u.norm());
        assert!(csv.starts_with(TRAJECTORY_CSV_HEADER));
        assert_eq!(csv.lines().count(), 202);
    }

    #[test]
    fn partial_inverse_degenerate_cases() {
        let u = DVector::from_vec(vec![1.0, 2.0]);
        let xi = DVector::from_vec(vec![-3.0, 0.25]);
        let i = DMatrix::identity(2, 2);
        let o = DMatrix::zeros(2, 2);
        assert_eq!(partial_inverse_map(&u, &xi, &i, &o).unwrap(), (u.clone(), xi.clone()));
        assert_eq!(partial_inverse_map(&u, &xi, &o, &i).unwrap(), (xi.clone(), u.clone()));
        assert!(partial_inverse_map(&u, &xi, &i, &i).is_err());
    }
}

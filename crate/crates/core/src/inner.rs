//! Inexact solution of the proximal subproblem
//!
//! ```text
//! find x ∈ C:  <F(x) + ŷ + r (x - x̂), z - x> >= 0  for all z ∈ C
//! ```
//!
//! by the projected reflected gradient method
//! `z⁺ = Π_C(z - λ G(2z - z⁻))` with `G(z) = F(z) + ŷ + r (z - x̂)`.
//! `G` is `r`-strongly monotone and `(L_F + r)`-Lipschitz, so the solution is
//! unique. The subproblem has no coupling across scenarios.

use crate::error::{MsviError, Result};
use crate::field::RandomField;
use crate::problem::MsviInstance;
use crate::scenario::positive;

/// Tolerances below this are clamped up to it.
pub const MIN_TOL: f64 = 1e-14;

#[derive(Clone, Debug, PartialEq)]
pub struct InnerConfig {
    /// Fixed step length. `None` uses `0.99 (√2 - 1) / (L_F + r)`.
    pub step: Option<f64>,
    pub max_iters: usize,
    /// Target for `‖x̃ - z‖` in the weighted norm.
    pub tol: f64,
    /// Start from the caller's previous `z` when one is supplied.
    pub warm_start: bool,
}

impl Default for InnerConfig {
    fn default() -> Self {
        Self {
            step: None,
            max_iters: 200_000,
            tol: 1e-8,
            warm_start: true,
        }
    }
}

impl InnerConfig {
    pub fn with_tol(&self, tol: f64) -> Self {
        Self {
            tol,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(step) = self.step {
            positive("inner step", step)?;
        }
        if self.max_iters == 0 {
            return Err(MsviError::InvalidConfig("max inner iterations must be >= 1".into()));
        }
        if !(self.tol >= 0.0) {
            return Err(MsviError::InvalidConfig(format!("inner tolerance {} < 0", self.tol)));
        }
        Ok(())
    }

    /// Effective stopping tolerance; zero requests become [`MIN_TOL`].
    pub fn effective_tol(&self) -> f64 {
        self.tol.max(MIN_TOL)
    }
}

/// Default step bound for the reflected gradient iteration.
pub fn default_step(lipschitz: f64, r: f64) -> f64 {
    0.99 * (std::f64::consts::SQRT_2 - 1.0) / (lipschitz + r)
}

#[derive(Clone, Debug)]
pub struct SubproblemSolution {
    /// Accepted inexact solution.
    pub x_tilde: RandomField,
    /// `Π_C(x̂ - r^{-1}[F(x̃) + ŷ])`, always feasible.
    pub z: RandomField,
    pub iterations: usize,
    /// `‖x̃ - z‖` in the weighted norm.
    pub residual: f64,
    /// `max_i |x̃_i - z_i|`.
    pub residual_max: f64,
}

/// Projected reflected gradient iteration on one subproblem.
pub struct ReflectedGradient<'a> {
    inst: &'a MsviInstance,
    x_hat: &'a RandomField,
    y_hat: &'a RandomField,
    r: f64,
    step: f64,
    z: RandomField,
    // G at the previous and current iterate; F is affine, so
    // G(2z - z⁻) = 2 G(z) - G(z⁻).
    g_prev: RandomField,
    g_cur: RandomField,
    f_cur: RandomField,
    iterations: usize,
}

impl<'a> ReflectedGradient<'a> {
    pub fn new(
        inst: &'a MsviInstance,
        x_hat: &'a RandomField,
        y_hat: &'a RandomField,
        r: f64,
        step: f64,
        start: &RandomField,
    ) -> Result<Self> {
        let shape = inst.shape();
        x_hat.check_shape(shape)?;
        y_hat.check_shape(shape)?;
        start.check_shape(shape)?;
        let r = positive("r", r)?;
        let step = positive("inner step", step)?;
        let mut z = start.clone();
        inst.bounds().project_in_place(&mut z);
        let mut solver = Self {
            inst,
            x_hat,
            y_hat,
            r,
            step,
            z,
            g_prev: RandomField::zeros(shape.0, shape.1),
            g_cur: RandomField::zeros(shape.0, shape.1),
            f_cur: RandomField::zeros(shape.0, shape.1),
            iterations: 0,
        };
        solver.refresh_operator();
        solver.g_prev = solver.g_cur.clone();
        Ok(solver)
    }

    fn refresh_operator(&mut self) {
        self.inst.mapping().evaluate_into(&self.z, &mut self.f_cur);
        let r = self.r;
        for (k, g) in self.g_cur.as_mut_slice().iter_mut().enumerate() {
            *g = self.f_cur.as_slice()[k]
                + self.y_hat.as_slice()[k]
                + r * (self.z.as_slice()[k] - self.x_hat.as_slice()[k]);
        }
    }

    pub fn iterate(&self) -> &RandomField {
        &self.z
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// `Π_C(x̂ - r^{-1}[F(z) + ŷ])` at the current iterate.
    pub fn projected_point(&self) -> RandomField {
        let inv_r = 1.0 / self.r;
        let mut p = RandomField::from_fn(self.z.scenarios(), self.z.dim(), |i, j| {
            self.x_hat.get(i, j) - inv_r * (self.f_cur.get(i, j) + self.y_hat.get(i, j))
        });
        self.inst.bounds().project_in_place(&mut p);
        p
    }

    pub fn advance(&mut self) {
        let lambda = self.step;
        for (k, z) in self.z.as_mut_slice().iter_mut().enumerate() {
            let reflected = 2.0 * self.g_cur.as_slice()[k] - self.g_prev.as_slice()[k];
            *z -= lambda * reflected;
        }
        self.inst.bounds().project_in_place(&mut self.z);
        std::mem::swap(&mut self.g_prev, &mut self.g_cur);
        self.refresh_operator();
        self.iterations += 1;
    }
}

/// Runs the reflected gradient method until `‖x̃ - z‖ <= cfg.tol`.
///
/// `warm` is used as the starting point when `cfg.warm_start` is set;
/// otherwise the iteration starts from `Π_C(x̂)`.
pub fn solve_subproblem(
    inst: &MsviInstance,
    x_hat: &RandomField,
    y_hat: &RandomField,
    r: f64,
    cfg: &InnerConfig,
    warm: Option<&RandomField>,
) -> Result<SubproblemSolution> {
    cfg.validate()?;
    let r = positive("r", r)?;
    let tol = cfg.effective_tol();
    let step = cfg
        .step
        .unwrap_or_else(|| default_step(inst.mapping().lipschitz(), r));
    let start = match warm {
        Some(w) if cfg.warm_start => w,
        _ => x_hat,
    };
    let mut solver = ReflectedGradient::new(inst, x_hat, y_hat, r, step, start)?;
    let probs = inst.space().probs();
    loop {
        let z = solver.projected_point();
        let (residual, residual_max) = weighted_gap(solver.iterate(), &z, probs);
        if residual <= tol {
            return Ok(SubproblemSolution {
                x_tilde: solver.iterate().clone(),
                z,
                iterations: solver.iterations(),
                residual,
                residual_max,
            });
        }
        if solver.iterations() >= cfg.max_iters {
            return Err(MsviError::InnerNotConverged {
                iterations: solver.iterations(),
                residual,
                tolerance: tol,
            });
        }
        solver.advance();
    }
}

/// Weighted L2 and max-over-scenario Euclidean distance between two fields,
/// summed in scenario order.
fn weighted_gap(a: &RandomField, b: &RandomField, probs: &[f64]) -> (f64, f64) {
    let mut total = 0.0;
    let mut max = 0.0_f64;
    for (i, &p) in probs.iter().enumerate() {
        let sq: f64 = a.row(i).iter().zip(b.row(i)).map(|(x, y)| (x - y) * (x - y)).sum();
        total += p * sq;
        max = max.max(sq.sqrt());
    }
    (total.sqrt(), max)
}

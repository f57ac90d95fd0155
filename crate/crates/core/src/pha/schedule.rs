use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{MsviError, Result};
use crate::field::RandomField;
use crate::scenario::ScenarioSpace;

/// Anchoring weight `α_k`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AlphaRule {
    Zero,
    Constant { value: f64 },
    /// `1 / (scale (k + 1))`
    Harmonic { scale: f64 },
}

/// Relaxation weight `β_k`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BetaRule {
    Constant { value: f64 },
    /// `limit - 1 / (k + 1)^2`
    Ramp { limit: f64 },
}

/// Inertial weight `θ_k`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThetaRule {
    Zero,
    Constant { value: f64 },
    /// [`theta_hat`] with cap `θ̄` and scale `τ`.
    Adaptive { cap: f64, scale: f64 },
}

/// Inner accuracy `ε_k`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ToleranceRule {
    Constant { value: f64 },
    /// `scale / (k + 1)^2`
    InverseSquare { scale: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSchedule {
    pub r: f64,
    pub alpha: AlphaRule,
    pub beta: BetaRule,
    pub theta: ThetaRule,
    pub eps: ToleranceRule,
}

impl ParamSchedule {
    pub fn alpha(&self, k: usize) -> f64 {
        match self.alpha {
            AlphaRule::Zero => 0.0,
            AlphaRule::Constant { value } => value,
            AlphaRule::Harmonic { scale } => 1.0 / (scale * (k as f64 + 1.0)),
        }
    }

    pub fn beta(&self, k: usize) -> f64 {
        match self.beta {
            BetaRule::Constant { value } => value,
            BetaRule::Ramp { limit } => limit - 1.0 / (k as f64 + 1.0).powi(2),
        }
    }

    pub fn eps(&self, k: usize) -> f64 {
        match self.eps {
            ToleranceRule::Constant { value } => value,
            ToleranceRule::InverseSquare { scale } => scale / (k as f64 + 1.0).powi(2),
        }
    }

    /// `θ_k` given the last two iterate differences.
    pub fn theta(
        &self,
        space: &ScenarioSpace,
        k: usize,
        dx: &RandomField,
        dy: &RandomField,
    ) -> f64 {
        match self.theta {
            ThetaRule::Zero => 0.0,
            ThetaRule::Constant { value } => value,
            ThetaRule::Adaptive { cap, scale } => {
                theta_hat(space, k, self.alpha(k), dx, dy, self.r, cap, scale)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(MsviError::InvalidConfig(msg));
        if !(self.r > 0.0 && self.r.is_finite()) {
            return Err(MsviError::NonPositive {
                name: "r",
                value: self.r,
            });
        }
        match self.alpha {
            AlphaRule::Constant { value } if !(0.0..1.0).contains(&value) => {
                return bad(format!("constant alpha {value} outside [0, 1)"))
            }
            AlphaRule::Harmonic { scale } if !(scale > 1.0) => {
                return bad(format!("harmonic alpha scale {scale} must exceed 1"))
            }
            _ => {}
        }
        match self.beta {
            BetaRule::Constant { value } if !(value > 0.0 && value < 2.0) => {
                return bad(format!("constant beta {value} outside (0, 2)"))
            }
            BetaRule::Ramp { limit } if !(limit > 1.0 && limit < 2.0) => {
                return bad(format!("beta ramp limit {limit} outside (1, 2)"))
            }
            _ => {}
        }
        match self.theta {
            ThetaRule::Constant { value } if !(0.0..1.0).contains(&value) => {
                return bad(format!("constant theta {value} outside [0, 1)"))
            }
            ThetaRule::Adaptive { cap, scale } if !((0.0..1.0).contains(&cap) && scale > 0.0) => {
                return bad(format!("adaptive theta cap {cap} / scale {scale} invalid"))
            }
            _ => {}
        }
        match self.eps {
            ToleranceRule::Constant { value } | ToleranceRule::InverseSquare { scale: value }
                if !(value >= 0.0 && value.is_finite()) =>
            {
                return bad(format!("inner tolerance parameter {value} must be >= 0"))
            }
            _ => {}
        }
        Ok(())
    }

    /// Whether the rules guarantee the strong-convergence conditions:
    /// `α_k → 0` with `Σ α_k = ∞`, `β_k` bounded away from 0 and 2,
    /// `Σ (θ_k/α_k)‖Δu_k‖ < ∞` and `Σ ε_k < ∞`. Decided from the rule
    /// shapes, not numerically.
    pub fn guarantees_strong_convergence(&self) -> bool {
        let alpha = matches!(self.alpha, AlphaRule::Harmonic { .. });
        let beta = match self.beta {
            BetaRule::Constant { value } => value > 0.0 && value < 2.0,
            BetaRule::Ramp { limit } => limit > 1.0 && limit < 2.0,
        };
        let theta = match self.theta {
            ThetaRule::Zero => true,
            ThetaRule::Constant { value } => value == 0.0,
            ThetaRule::Adaptive { .. } => true,
        };
        let eps = match self.eps {
            ToleranceRule::Constant { value } => value == 0.0,
            ToleranceRule::InverseSquare { .. } => true,
        };
        alpha && beta && theta && eps
    }
}

/// Adaptive inertial weight
///
/// ```text
/// θ̂_k = θ̄                                        if Δx = 0 and Δy = 0
///      = min{ τ α_k / (k² ‖Δx - r⁻¹ Δy‖), θ̄ }     otherwise
/// ```
///
/// Each term `(θ̂_k / α_k) ‖Δu_k‖` is at most `τ / k²`, so the inertial
/// series is summable. At `k = 0` (or a vanishing combined difference) the
/// ratio is unbounded and the cap applies.
#[allow(clippy::too_many_arguments)]
pub fn theta_hat(
    space: &ScenarioSpace,
    k: usize,
    alpha: f64,
    dx: &RandomField,
    dy: &RandomField,
    r: f64,
    cap: f64,
    scale: f64,
) -> f64 {
    if dx.is_zero() && dy.is_zero() {
        return cap;
    }
    let diff = space.norm(&dx.lin_comb(1.0, dy, -1.0 / r));
    if k == 0 || diff == 0.0 {
        return cap;
    }
    let kk = (k as f64).powi(2);
    (scale * alpha / (kk * diff)).min(cap)
}

/// The solver family. Each variant pins some parameters to degenerate values.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SolverVariant {
    /// Original progressive hedging: `α = θ = 0`, `β = 1`.
    #[serde(rename = "pha")]
    Pha,
    /// `α = θ = 0`.
    #[serde(rename = "rpha", alias = "relaxed_inexact_pha")]
    RelaxedInexactPha,
    /// `θ = 0`.
    #[serde(rename = "hripha")]
    Hripha,
    /// Full Halpern-type relaxed inertial inexact method.
    #[serde(rename = "alg1", alias = "algorithm1")]
    Algorithm1,
}

impl SolverVariant {
    pub const ALL: [SolverVariant; 4] = [
        SolverVariant::Pha,
        SolverVariant::RelaxedInexactPha,
        SolverVariant::Hripha,
        SolverVariant::Algorithm1,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SolverVariant::Pha => "pha",
            SolverVariant::RelaxedInexactPha => "rpha",
            SolverVariant::Hripha => "hripha",
            SolverVariant::Algorithm1 => "alg1",
        }
    }

    /// Forces the parameters this variant fixes.
    pub fn constrain(self, mut sched: ParamSchedule) -> ParamSchedule {
        match self {
            SolverVariant::Pha => {
                sched.alpha = AlphaRule::Zero;
                sched.theta = ThetaRule::Zero;
                sched.beta = BetaRule::Constant { value: 1.0 };
            }
            SolverVariant::RelaxedInexactPha => {
                sched.alpha = AlphaRule::Zero;
                sched.theta = ThetaRule::Zero;
            }
            SolverVariant::Hripha => sched.theta = ThetaRule::Zero,
            SolverVariant::Algorithm1 => {}
        }
        sched
    }
}

impl fmt::Display for SolverVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SolverVariant {
    type Err = MsviError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pha" => Ok(SolverVariant::Pha),
            "rpha" | "relaxed" | "relaxed_inexact_pha" => Ok(SolverVariant::RelaxedInexactPha),
            "hripha" => Ok(SolverVariant::Hripha),
            "alg1" | "algorithm1" => Ok(SolverVariant::Algorithm1),
            other => Err(MsviError::InvalidConfig(format!("unknown variant `{other}`"))),
        }
    }
}

/// Default parameters for problem dimension `n`: `r = √n`,
/// `α_k = 1/(2000(k+1))`, `β_k = 1.5 - 1/(k+1)²`, adaptive `θ_k` with
/// `θ̄ = 1/3`, `τ = 10⁶`, and `ε_k = 10⁻⁴/(k+1)²` (a fixed `10⁻¹²` for
/// plain PHA), with the variant's degenerations applied.
pub fn builtin_schedule(variant: SolverVariant, n: usize) -> ParamSchedule {
    let base = ParamSchedule {
        r: (n.max(1) as f64).sqrt(),
        alpha: AlphaRule::Harmonic { scale: 2000.0 },
        beta: BetaRule::Ramp { limit: 1.5 },
        theta: ThetaRule::Adaptive {
            cap: 1.0 / 3.0,
            scale: 1e6,
        },
        eps: match variant {
            SolverVariant::Pha => ToleranceRule::Constant { value: 1e-12 },
            _ => ToleranceRule::InverseSquare { scale: 1e-4 },
        },
    };
    variant.constrain(base)
}

//! Seeded instance generators.
//!
//! Randomness comes from ChaCha8 seeded with the config's `seed`. Streams
//! are split per consumer: stream 0 draws the scenario probabilities and
//! stream `i + 1` draws everything belonging to scenario (or sampled path)
//! `i`. An instance is therefore a pure function of its config, and adding
//! scenarios never perturbs the ones already drawn.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{MsviError, Result};
use crate::field::RandomField;
use crate::problem::{AffineMapping, BoxConstraint, MsviInstance};
use crate::scenario::{Filtration, Partition, ScenarioSpace, ScenarioTree, StageLayout};

/// Largest scenario count produced by full path enumeration.
pub const ENUMERATION_CAP: usize = 4096;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Two-stage instance: `n0` first-stage coordinates shared by all `m`
/// scenarios, `n1` second-stage coordinates chosen per scenario.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example1Config {
    pub m: usize,
    pub n0: usize,
    pub n1: usize,
    pub seed: u64,
}

impl Example1Config {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n0 == 0 || self.n1 == 0 {
            return Err(MsviError::InvalidConfig(format!(
                "example 1 needs m, n0, n1 >= 1 (got m={}, n0={}, n1={})",
                self.m, self.n0, self.n1
            )));
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        format!("ex1-m{}-n{}x{}", self.m, self.n0, self.n1)
    }
}

/// Builds `F_i(x) = (B_i B_iᵀ + D) x + b_i` on `[0, 1]^n` with
/// `D = diag(1, ..., n)`, `B_i` standard normal, `b_i ~ U[-1, 1]` and
/// probabilities proportional to `U(0, 1]` draws.
pub fn gen_example1(cfg: &Example1Config) -> Result<MsviInstance> {
    cfg.validate()?;
    let Example1Config { m, n0, n1, seed } = *cfg;
    let n = n0 + n1;

    let mut rng = stream(seed, 0);
    let raw: Vec<f64> = (0..m).map(|_| 1.0 - rng.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    let space = ScenarioSpace::new(raw.iter().map(|p| p / total).collect())?;

    let mut matrices = Vec::with_capacity(m);
    let mut offsets = RandomField::zeros(m, n);
    for i in 0..m {
        let mut rng = stream(seed, i as u64 + 1);
        let b = loop {
            let b: Vec<f64> = (0..n * n).map(|_| rng.sample(StandardNormal)).collect();
            if b.iter().any(|&v| v != 0.0) {
                break b;
            }
        };
        let mut mat = vec![0.0; n * n];
        for r in 0..n {
            for c in 0..=r {
                let v: f64 = (0..n).map(|l| b[r * n + l] * b[c * n + l]).sum();
                mat[r * n + c] = v;
                mat[c * n + r] = v;
            }
            mat[r * n + r] += (r + 1) as f64;
        }
        matrices.push(mat);
        for v in offsets.row_mut(i) {
            *v = rng.random_range(-1.0..=1.0);
        }
    }

    let tree = ScenarioTree::new(
        space,
        StageLayout::new(vec![n0, n1])?,
        Filtration::new(vec![Partition::trivial(m), Partition::discrete(m)])?,
    )?;
    let mapping = AffineMapping::new(matrices, offsets)?;
    MsviInstance::new(tree, mapping, BoxConstraint::unit(m, n), None)
}

/// Discretised control problem driven by a `±1` random walk of length
/// `N·ℓ`, observed every `ℓ` steps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example2Config {
    #[serde(rename = "N")]
    pub stages: usize,
    pub ell: usize,
    /// Number of sampled paths; 0 enumerates all `2^{Nℓ}` of them.
    pub kappa: usize,
    pub seed: u64,
}

impl Example2Config {
    pub fn validate(&self) -> Result<()> {
        if self.stages == 0 || self.ell == 0 {
            return Err(MsviError::InvalidConfig(format!(
                "example 2 needs N, ell >= 1 (got N={}, ell={})",
                self.stages, self.ell
            )));
        }
        if self.kappa == 0 {
            let steps = self.stages.saturating_mul(self.ell);
            let paths = u32::try_from(steps)
                .ok()
                .and_then(|s| 1u128.checked_shl(s))
                .unwrap_or(u128::MAX);
            if paths > ENUMERATION_CAP as u128 {
                return Err(MsviError::EnumerationTooLarge {
                    paths,
                    cap: ENUMERATION_CAP,
                });
            }
        }
        Ok(())
    }

    pub fn walk_len(&self) -> usize {
        self.stages * self.ell
    }

    pub fn label(&self) -> String {
        format!("ex2-N{}-l{}-k{}", self.stages, self.ell, self.kappa)
    }
}

/// The scenario data behind an Example 2 instance.
#[derive(Clone, Debug)]
pub struct Example2Model {
    pub stages: usize,
    pub ell: usize,
    pub probs: Vec<f64>,
    /// Integer walk increments `S_{(i+1)ℓ} - S_{iℓ}` per scenario and stage.
    pub increments: Vec<Vec<i64>>,
    /// `Z_i = (1 + Δ)^{N-1-i} (-Δ + ΔY_i)` per scenario.
    pub z: RandomField,
    /// `ζ = Σ_i Z_i` per scenario.
    pub zeta: Vec<f64>,
}

impl Example2Model {
    pub fn build(cfg: &Example2Config) -> Result<Self> {
        cfg.validate()?;
        let len = cfg.walk_len();
        let paths: Vec<Vec<i8>> = if cfg.kappa == 0 {
            (0..1usize << len)
                .map(|j| (0..len).map(|t| if j >> t & 1 == 1 { 1 } else { -1 }).collect())
                .collect()
        } else {
            (0..cfg.kappa)
                .map(|i| {
                    let mut rng = stream(cfg.seed, i as u64 + 1);
                    (0..len).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect()
                })
                .collect()
        };
        let m = paths.len();
        let probs = vec![1.0 / m as f64; m];

        let big_n = cfg.stages;
        let delta = 1.0 / big_n as f64;
        let scale = (len as f64).sqrt();
        let increments: Vec<Vec<i64>> = paths
            .iter()
            .map(|p| {
                p.chunks(cfg.ell)
                    .map(|c| c.iter().map(|&s| i64::from(s)).sum())
                    .collect()
            })
            .collect();
        let z = RandomField::from_fn(m, big_n, |s, i| {
            let lambda = -delta + increments[s][i] as f64 / scale;
            (1.0 + delta).powi((big_n - 1 - i) as i32) * lambda
        });
        let zeta = z.rows().map(|row| row.iter().sum()).collect();
        Ok(Self {
            stages: big_n,
            ell: cfg.ell,
            probs,
            increments,
            z,
            zeta,
        })
    }

    pub fn scenarios(&self) -> usize {
        self.probs.len()
    }

    /// `ΔY_i` for scenario `s`.
    pub fn delta_y(&self, s: usize, i: usize) -> f64 {
        self.increments[s][i] as f64 / ((self.stages * self.ell) as f64).sqrt()
    }

    /// `½ Σ_s p_s (Σ_i Z_i u_i - ζ)²`.
    pub fn cost(&self, u: &RandomField) -> Result<f64> {
        u.check_shape((self.scenarios(), self.stages))?;
        Ok(0.5
            * (0..self.scenarios())
                .map(|s| {
                    let dot: f64 = self.z.row(s).iter().zip(u.row(s)).map(|(a, b)| a * b).sum();
                    self.probs[s] * (dot - self.zeta[s]).powi(2)
                })
                .sum::<f64>())
    }

    /// Stage `i` groups scenarios sharing their first `i` increments.
    pub fn filtration(&self) -> Result<Filtration> {
        let m = self.scenarios();
        let stages = (0..self.stages)
            .map(|i| {
                let mut groups: BTreeMap<&[i64], Vec<usize>> = BTreeMap::new();
                for (s, inc) in self.increments.iter().enumerate() {
                    groups.entry(&inc[..i]).or_default().push(s);
                }
                Partition::new(groups.into_values().collect(), m)
            })
            .collect::<Result<Vec<_>>>()?;
        Filtration::new(stages)
    }

    /// Scenario-wise gradient `u ↦ Z Zᵀ u - ζ Z` on `[0, 1]^N`, with the
    /// all-ones control as known solution.
    pub fn instance(&self) -> Result<MsviInstance> {
        let (m, n) = (self.scenarios(), self.stages);
        let tree = ScenarioTree::new(
            ScenarioSpace::new(self.probs.clone())?,
            StageLayout::new(vec![1; n])?,
            self.filtration()?,
        )?;
        let matrices = self
            .z
            .rows()
            .map(|z| {
                let mut mat = vec![0.0; n * n];
                for r in 0..n {
                    for c in 0..n {
                        mat[r * n + c] = z[r] * z[c];
                    }
                }
                mat
            })
            .collect();
        let offsets = RandomField::from_fn(m, n, |s, i| -self.zeta[s] * self.z.get(s, i));
        let mapping = AffineMapping::new(matrices, offsets)?;
        MsviInstance::new(
            tree,
            mapping,
            BoxConstraint::unit(m, n),
            Some(RandomField::filled(m, n, 1.0)),
        )
    }
}

pub fn gen_example2(cfg: &Example2Config) -> Result<MsviInstance> {
    Example2Model::build(cfg)?.instance()
}

//! Finite probability spaces, filtrations and the nonanticipativity geometry.
//!
//! On a finite scenario set the space of square-integrable decisions is just
//! `R^{m x n}` with the probability-weighted inner product
//! `<x, y> = sum_i p_i <x_i, y_i>`. A filtration is a chain of partitions of
//! the scenario indices, each refining the previous one, and the
//! nonanticipative subspace `N` consists of fields whose stage-`t`
//! coordinates are constant on every stage-`t` block. Its orthogonal
//! complement is `M`.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{MsviError, Result};
use crate::field::RandomField;

/// Absolute tolerance on `sum p_i = 1`.
pub const PROBABILITY_SUM_TOL: f64 = 1e-12;

/// Scenario probabilities: all strictly positive, summing to one.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScenarioSpace {
    probs: Vec<f64>,
}

impl ScenarioSpace {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(MsviError::InvalidProbabilities("no scenarios".into()));
        }
        if let Some((i, p)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !(p.is_finite() && **p > 0.0))
        {
            return Err(MsviError::InvalidProbabilities(format!(
                "p[{i}] = {p} is not strictly positive"
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > PROBABILITY_SUM_TOL {
            return Err(MsviError::InvalidProbabilities(format!(
                "probabilities sum to {total}"
            )));
        }
        Ok(Self { probs })
    }

    pub fn uniform(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(MsviError::InvalidProbabilities("no scenarios".into()));
        }
        Self::new(vec![1.0 / m as f64; m])
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    #[inline]
    pub fn prob(&self, i: usize) -> f64 {
        self.probs[i]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    fn check(&self, x: &RandomField) -> Result<()> {
        if x.scenarios() != self.len() {
            return Err(MsviError::ShapeMismatch {
                expected: (self.len(), x.dim()),
                found: x.shape(),
            });
        }
        Ok(())
    }

    /// `sum_i p_i <x_i, y_i>`.
    pub fn inner_product(&self, x: &RandomField, y: &RandomField) -> Result<f64> {
        self.check(x)?;
        y.check_shape(x.shape())?;
        Ok(self.inner_unchecked(x, y))
    }

    pub(crate) fn inner_unchecked(&self, x: &RandomField, y: &RandomField) -> f64 {
        let mut acc = 0.0;
        for (i, &p) in self.probs.iter().enumerate() {
            let dot: f64 = x.row(i).iter().zip(y.row(i)).map(|(a, b)| a * b).sum();
            acc += p * dot;
        }
        acc
    }

    /// Weighted L2 norm. Panics on a scenario-count mismatch.
    pub fn norm(&self, x: &RandomField) -> f64 {
        assert_eq!(x.scenarios(), self.len(), "scenario count mismatch");
        self.inner_unchecked(x, x).max(0.0).sqrt()
    }

    pub fn distance(&self, x: &RandomField, y: &RandomField) -> f64 {
        self.norm(&(x - y))
    }

    /// Coordinate-wise expectation `sum_i p_i x_i`.
    pub fn expectation(&self, x: &RandomField) -> Result<Vec<f64>> {
        self.check(x)?;
        let mut mean = vec![0.0; x.dim()];
        for (i, &p) in self.probs.iter().enumerate() {
            for (m, v) in mean.iter_mut().zip(x.row(i)) {
                *m += p * v;
            }
        }
        Ok(mean)
    }
}

impl<'de> Deserialize<'de> for ScenarioSpace {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            probs: Vec<f64>,
        }
        let raw = Raw::deserialize(d)?;
        ScenarioSpace::new(raw.probs).map_err(serde::de::Error::custom)
    }
}

/// Per-stage coordinate counts `(n_0, ..., n_{N-1})`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StageLayout {
    dims: Vec<usize>,
    offsets: Vec<usize>,
}

impl StageLayout {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() {
            return Err(MsviError::InvalidLayout("no stages".into()));
        }
        if let Some(t) = dims.iter().position(|&d| d == 0) {
            return Err(MsviError::InvalidLayout(format!("stage {t} has no coordinates")));
        }
        let mut offsets = Vec::with_capacity(dims.len() + 1);
        offsets.push(0);
        for d in &dims {
            offsets.push(offsets.last().unwrap() + d);
        }
        Ok(Self { dims, offsets })
    }

    pub fn stages(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Total coordinate count `n`.
    pub fn total_dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn stage_range(&self, t: usize) -> Range<usize> {
        self.offsets[t]..self.offsets[t + 1]
    }
}

/// A partition of `{0, .., m-1}` into nonempty blocks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    blocks: Vec<Vec<usize>>,
    scenarios: usize,
}

impl Partition {
    pub fn new(blocks: Vec<Vec<usize>>, scenarios: usize) -> Result<Self> {
        let mut seen = vec![false; scenarios];
        for (b, block) in blocks.iter().enumerate() {
            if block.is_empty() {
                return Err(MsviError::InvalidPartition(format!("block {b} is empty")));
            }
            for &i in block {
                if i >= scenarios {
                    return Err(MsviError::InvalidPartition(format!(
                        "index {i} out of range for {scenarios} scenarios"
                    )));
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(MsviError::InvalidPartition(format!(
                        "index {i} appears twice"
                    )));
                }
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(MsviError::InvalidPartition(format!("index {i} is not covered")));
        }
        Ok(Self { blocks, scenarios })
    }

    /// The single block `{0, .., m-1}`.
    pub fn trivial(scenarios: usize) -> Self {
        Self {
            blocks: vec![(0..scenarios).collect()],
            scenarios,
        }
    }

    /// One block per scenario.
    pub fn discrete(scenarios: usize) -> Self {
        Self {
            blocks: (0..scenarios).map(|i| vec![i]).collect(),
            scenarios,
        }
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn scenarios(&self) -> usize {
        self.scenarios
    }

    /// Block index of every scenario.
    pub fn labels(&self) -> Vec<usize> {
        let mut labels = vec![0; self.scenarios];
        for (b, block) in self.blocks.iter().enumerate() {
            for &i in block {
                labels[i] = b;
            }
        }
        labels
    }

    /// True when every block of `self` lies inside a block of `coarser`.
    pub fn refines(&self, coarser: &Partition) -> bool {
        if self.scenarios != coarser.scenarios {
            return false;
        }
        let labels = coarser.labels();
        self.blocks
            .iter()
            .all(|block| block.iter().all(|&i| labels[i] == labels[block[0]]))
    }
}

/// Replaces every column of `x` by its conditional expectation given the
/// partition: the probability-weighted block average, broadcast over the block.
pub fn conditional_expectation(
    x: &RandomField,
    partition: &Partition,
    space: &ScenarioSpace,
) -> Result<RandomField> {
    if partition.scenarios() != space.len() {
        return Err(MsviError::InvalidPartition(format!(
            "partition covers {} scenarios, space has {}",
            partition.scenarios(),
            space.len()
        )));
    }
    space.check(x)?;
    let mut out = x.clone();
    condition_columns(&mut out, 0..x.dim(), partition.blocks(), space.probs(), None);
    Ok(out)
}

/// In-place block averaging of the columns in `cols`. `block_mass` may carry
/// precomputed block probabilities.
fn condition_columns(
    x: &mut RandomField,
    cols: Range<usize>,
    blocks: &[Vec<usize>],
    probs: &[f64],
    block_mass: Option<&[f64]>,
) {
    let width = cols.len();
    let mut avg = vec![0.0; width];
    for (b, block) in blocks.iter().enumerate() {
        if block.len() == 1 {
            continue;
        }
        avg.iter_mut().for_each(|a| *a = 0.0);
        let mass = match block_mass {
            Some(m) => m[b],
            None => block.iter().map(|&i| probs[i]).sum(),
        };
        for &i in block {
            let p = probs[i];
            for (a, v) in avg.iter_mut().zip(&x.row(i)[cols.clone()]) {
                *a += p * v;
            }
        }
        avg.iter_mut().for_each(|a| *a /= mass);
        for &i in block {
            x.row_mut(i)[cols.clone()].copy_from_slice(&avg);
        }
    }
}

/// Per-stage partitions `F_0 ⊂ F_1 ⊂ ... ⊂ F_{N-1}`, each refining the last.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Filtration {
    stages: Vec<Partition>,
}

impl Filtration {
    pub fn new(stages: Vec<Partition>) -> Result<Self> {
        let Some(first) = stages.first() else {
            return Err(MsviError::InvalidFiltration("no stages".into()));
        };
        let m = first.scenarios();
        for (t, pair) in stages.windows(2).enumerate() {
            if pair[1].scenarios() != m {
                return Err(MsviError::InvalidFiltration(format!(
                    "stage {} partitions a different scenario count",
                    t + 1
                )));
            }
            if !pair[1].refines(&pair[0]) {
                return Err(MsviError::InvalidFiltration(format!(
                    "stage {} does not refine stage {t}",
                    t + 1
                )));
            }
        }
        Ok(Self { stages })
    }

    /// Builds and validates from raw block lists.
    pub fn from_blocks(blocks: Vec<Vec<Vec<usize>>>, scenarios: usize) -> Result<Self> {
        let stages = blocks
            .into_iter()
            .map(|b| Partition::new(b, scenarios))
            .collect::<Result<Vec<_>>>()?;
        Self::new(stages)
    }

    pub fn stages(&self) -> usize {
        self.stages.len()
    }

    pub fn scenarios(&self) -> usize {
        self.stages[0].scenarios()
    }

    pub fn partition(&self, t: usize) -> &Partition {
        &self.stages[t]
    }

    pub fn partitions(&self) -> &[Partition] {
        &self.stages
    }

    pub fn to_blocks(&self) -> Vec<Vec<Vec<usize>>> {
        self.stages.iter().map(|p| p.blocks().to_vec()).collect()
    }
}

/// Scenario space, stage layout and filtration bundled together, with the
/// projections onto `N` and `M` and the rescaling `A = P_N + r P_M`.
#[derive(Clone, Debug)]
pub struct ScenarioTree {
    space: ScenarioSpace,
    layout: StageLayout,
    filtration: Filtration,
    block_mass: Vec<Vec<f64>>,
}

impl ScenarioTree {
    pub fn new(space: ScenarioSpace, layout: StageLayout, filtration: Filtration) -> Result<Self> {
        if filtration.stages() != layout.stages() {
            return Err(MsviError::InvalidFiltration(format!(
                "{} partitions for {} stages",
                filtration.stages(),
                layout.stages()
            )));
        }
        if filtration.scenarios() != space.len() {
            return Err(MsviError::InvalidFiltration(format!(
                "filtration covers {} scenarios, space has {}",
                filtration.scenarios(),
                space.len()
            )));
        }
        let block_mass = filtration
            .partitions()
            .iter()
            .map(|p| {
                p.blocks()
                    .iter()
                    .map(|b| b.iter().map(|&i| space.prob(i)).sum())
                    .collect()
            })
            .collect();
        Ok(Self {
            space,
            layout,
            filtration,
            block_mass,
        })
    }

    pub fn space(&self) -> &ScenarioSpace {
        &self.space
    }

    pub fn layout(&self) -> &StageLayout {
        &self.layout
    }

    pub fn filtration(&self) -> &Filtration {
        &self.filtration
    }

    pub fn scenarios(&self) -> usize {
        self.space.len()
    }

    pub fn dim(&self) -> usize {
        self.layout.total_dim()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.scenarios(), self.dim())
    }

    pub fn check(&self, x: &RandomField) -> Result<()> {
        x.check_shape(self.shape())
    }

    pub fn inner_product(&self, x: &RandomField, y: &RandomField) -> Result<f64> {
        self.check(x)?;
        self.space.inner_product(x, y)
    }

    pub fn norm(&self, x: &RandomField) -> f64 {
        self.space.norm(x)
    }

    /// Orthogonal projection onto `N`: stage-`t` coordinates are replaced by
    /// their conditional expectation given the stage-`t` partition.
    pub fn project_n(&self, x: &RandomField) -> Result<RandomField> {
        self.check(x)?;
        Ok(self.project_n_unchecked(x))
    }

    pub(crate) fn project_n_unchecked(&self, x: &RandomField) -> RandomField {
        let mut out = x.clone();
        for t in 0..self.layout.stages() {
            condition_columns(
                &mut out,
                self.layout.stage_range(t),
                self.filtration.partition(t).blocks(),
                self.space.probs(),
                Some(&self.block_mass[t]),
            );
        }
        out
    }

    /// `x - P_N x`.
    pub fn project_m(&self, x: &RandomField) -> Result<RandomField> {
        self.check(x)?;
        Ok(self.project_m_unchecked(x))
    }

    pub(crate) fn project_m_unchecked(&self, x: &RandomField) -> RandomField {
        x - &self.project_n_unchecked(x)
    }

    /// `A z = P_N z + r P_M z`.
    pub fn rescale(&self, z: &RandomField, r: f64) -> Result<RandomField> {
        self.combine_parts(z, 1.0, positive("r", r)?)
    }

    /// `A^{-1} z = P_N z + r^{-1} P_M z`.
    pub fn rescale_inv(&self, z: &RandomField, r: f64) -> Result<RandomField> {
        self.combine_parts(z, 1.0, 1.0 / positive("r", r)?)
    }

    /// `a P_N z + b P_M z`.
    pub fn combine_parts(&self, z: &RandomField, a: f64, b: f64) -> Result<RandomField> {
        self.check(z)?;
        let pn = self.project_n_unchecked(z);
        let pm = z - &pn;
        Ok(pn.lin_comb(a, &pm, b))
    }

    /// Distance from `x` to `N`, in the weighted norm.
    pub fn anticipativity_gap(&self, x: &RandomField) -> f64 {
        self.norm(&self.project_m_unchecked(x))
    }
}

pub(crate) fn positive(name: &'static str, value: f64) -> Result<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(MsviError::NonPositive { name, value })
    }
}

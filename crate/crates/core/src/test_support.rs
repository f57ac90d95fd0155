//! Fixtures shared by unit tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::field::RandomField;
use crate::problem::{AffineMapping, BoxConstraint, MsviInstance};
use crate::scenario::{Filtration, Partition, ScenarioSpace, ScenarioTree, StageLayout};

/// One scenario, one coordinate, `F(x) = slope * x + offset` on `[0, 1]`.
pub fn scalar_instance(slope: f64, offset: f64) -> MsviInstance {
    let tree = ScenarioTree::new(
        ScenarioSpace::new(vec![1.0]).unwrap(),
        StageLayout::new(vec![1]).unwrap(),
        Filtration::new(vec![Partition::trivial(1)]).unwrap(),
    )
    .unwrap();
    let mapping = AffineMapping::new(vec![vec![slope]], RandomField::filled(1, 1, offset)).unwrap();
    MsviInstance::new(tree, mapping, BoxConstraint::unit(1, 1), None).unwrap()
}

/// Small two-stage instance with a trivial first-stage partition, a
/// discrete second stage and random monotone (PSD plus skew) matrices.
pub fn random_instance(seed: u64, m: usize, dims: &[usize]) -> MsviInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = (0..m).map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let space = ScenarioSpace::new(raw.iter().map(|p| p / total).collect()).unwrap();
    let layout = StageLayout::new(dims.to_vec()).unwrap();
    let n = layout.total_dim();
    let mut stages = vec![Partition::trivial(m)];
    while stages.len() < dims.len() {
        stages.push(Partition::discrete(m));
    }
    let tree = ScenarioTree::new(space, layout, Filtration::new(stages).unwrap()).unwrap();
    let matrices = (0..m)
        .map(|_| {
            let b: Vec<f64> = (0..n * n).map(|_| rng.sample(StandardNormal)).collect();
            let k: Vec<f64> = (0..n * n).map(|_| rng.sample(StandardNormal)).collect();
            let mut mat = vec![0.0; n * n];
            for r in 0..n {
                for c in 0..n {
                    let psd: f64 = (0..n).map(|l| b[r * n + l] * b[c * n + l]).sum();
                    mat[r * n + c] = psd / n as f64 + 0.5 * (k[r * n + c] - k[c * n + r]);
                }
            }
            mat
        })
        .collect();
    let offsets = RandomField::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
    let mapping = AffineMapping::new(matrices, offsets).unwrap();
    MsviInstance::new(tree, mapping, BoxConstraint::unit(m, n), None).unwrap()
}

pub fn random_field(seed: u64, m: usize, n: usize) -> RandomField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    RandomField::from_fn(m, n, |_, _| rng.random_range(-2.0..2.0))
}

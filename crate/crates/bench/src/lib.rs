//! Fixed inputs shared by the criterion benchmarks.

use msvi_core::examples::{gen_example1, gen_example2, Example1Config, Example2Config};
use msvi_core::{MsviInstance, RandomField};

/// Two-stage random affine instance with `m` scenarios and `n0 + n1 = 2n`.
pub fn example1(m: usize, n: usize) -> MsviInstance {
    gen_example1(&Example1Config { m, n0: n, n1: n, seed: 0 }).expect("valid configuration")
}

/// Fully enumerated random-walk instance.
pub fn example2(stages: usize, ell: usize) -> MsviInstance {
    gen_example2(&Example2Config { stages, ell, kappa: 0, seed: 0 }).expect("valid configuration")
}

/// A deterministic, non-adapted field of the instance's shape.
pub fn wiggle(inst: &MsviInstance, scale: f64) -> RandomField {
    let (m, n) = inst.shape();
    RandomField::from_fn(m, n, |i, j| scale * ((7 * i + 3 * j) as f64).sin())
}

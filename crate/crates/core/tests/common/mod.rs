//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use msvi_core::ppa::AffineMonotoneOperator;
use msvi_core::{
    AffineMapping, BoxConstraint, Filtration, MsviInstance, Partition, RandomField, ScenarioSpace,
    ScenarioTree, StageLayout,
};
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_probs(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..m).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|p| p / total).collect()
}

/// Random chain of refining partitions, the first one trivial.
pub fn random_filtration(rng: &mut ChaCha8Rng, m: usize, stages: usize) -> Filtration {
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(rng);
    let mut current = vec![order];
    let mut parts = vec![Partition::new(current.clone(), m).unwrap()];
    while parts.len() < stages {
        let mut next = Vec::new();
        for block in &current {
            if block.len() > 1 && rng.random_bool(0.7) {
                let cut = rng.random_range(1..block.len());
                next.push(block[..cut].to_vec());
                next.push(block[cut..].to_vec());
            } else {
                next.push(block.clone());
            }
        }
        parts.push(Partition::new(next.clone(), m).unwrap());
        current = next;
    }
    Filtration::new(parts).unwrap()
}

pub fn random_tree(rng: &mut ChaCha8Rng, m: usize, dims: &[usize]) -> ScenarioTree {
    let space = ScenarioSpace::new(random_probs(rng, m)).unwrap();
    let filtration = random_filtration(rng, m, dims.len());
    ScenarioTree::new(space, StageLayout::new(dims.to_vec()).unwrap(), filtration).unwrap()
}

pub fn random_field(rng: &mut ChaCha8Rng, m: usize, n: usize, scale: f64) -> RandomField {
    RandomField::from_fn(m, n, |_, _| rng.random_range(-scale..scale))
}

/// `B Bᵀ / n + (K - Kᵀ) / 2`, row-major.
pub fn random_monotone_matrix(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
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
}

/// Random instance on a random filtration with box `[0, 1]`.
pub fn random_instance(rng: &mut ChaCha8Rng, m: usize, dims: &[usize]) -> MsviInstance {
    let tree = random_tree(rng, m, dims);
    let n = tree.dim();
    let matrices = (0..m).map(|_| random_monotone_matrix(rng, n)).collect();
    let offsets = random_field(rng, m, n, 1.0);
    let mapping = AffineMapping::new(matrices, offsets).unwrap();
    MsviInstance::new(tree, mapping, BoxConstraint::unit(m, n), None).unwrap()
}

/// Weighted least-squares projection onto `N`, computed from an explicit
/// basis of indicator fields and the normal equations.
pub fn lsq_project_n(tree: &ScenarioTree, x: &RandomField) -> RandomField {
    let (m, n) = tree.shape();
    let probs = tree.space().probs();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for t in 0..tree.layout().stages() {
        for block in tree.filtration().partition(t).blocks() {
            for j in tree.layout().stage_range(t) {
                let mut v = DVector::zeros(m * n);
                for &s in block {
                    v[s * n + j] = 1.0;
                }
                basis.push(v);
            }
        }
    }
    let b = DMatrix::from_columns(&basis);
    let w = DMatrix::from_diagonal(&DVector::from_iterator(
        m * n,
        (0..m * n).map(|idx| probs[idx / n]),
    ));
    let xv = DVector::from_column_slice(x.as_slice());
    let gram = b.transpose() * &w * &b;
    let coef = gram.cholesky().unwrap().solve(&(b.transpose() * &w * xv));
    let proj = b * coef;
    RandomField::from_vec(m, n, proj.as_slice().to_vec()).unwrap()
}

/// Solves the proximal subproblem scenario by scenario with the plain
/// projection method `x ← Π(x - γ G(x))`, `γ = r / (L + r)²`.
pub fn projection_method_subproblem(
    inst: &MsviInstance,
    x_hat: &RandomField,
    y_hat: &RandomField,
    r: f64,
    tol: f64,
) -> RandomField {
    let (m, n) = inst.shape();
    let mut out = RandomField::zeros(m, n);
    for s in 0..m {
        let mat = DMatrix::from_row_slice(n, n, inst.mapping().matrix(s));
        let b = DVector::from_row_slice(inst.mapping().offsets().row(s));
        let lo = DVector::from_row_slice(inst.bounds().lower().row(s));
        let hi = DVector::from_row_slice(inst.bounds().upper().row(s));
        let xh = DVector::from_row_slice(x_hat.row(s));
        let yh = DVector::from_row_slice(y_hat.row(s));
        let lip = mat.norm() + r;
        let gamma = r / (lip * lip);
        let mut x = xh.zip_zip_map(&lo, &hi, |v, l, h| v.clamp(l, h));
        for _ in 0..1_000_000 {
            let g = &mat * &x + &b + &yh + (&x - &xh) * r;
            let next = (&x - g * gamma).zip_zip_map(&lo, &hi, |v, l, h| v.clamp(l, h));
            let step = (&next - &x).norm();
            x = next;
            if step <= tol {
                break;
            }
        }
        out.row_mut(s).copy_from_slice(x.as_slice());
    }
    out
}

/// One progressive hedging step: solve the subproblem at `(x, y)`, then
/// `x⁺ = P_N x̃`, `y⁺ = y + r P_M x̃`.
pub fn pha_step_oracle(
    inst: &MsviInstance,
    x: &RandomField,
    y: &RandomField,
    r: f64,
) -> (RandomField, RandomField) {
    let x_tilde = projection_method_subproblem(inst, x, y, r, 1e-15);
    let pn = lsq_project_n(inst.tree(), &x_tilde);
    let pm = &x_tilde - &pn;
    let y_next = y.lin_comb(1.0, &pm, r);
    (pn, y_next)
}

/// Monotone operator on `R^d` whose zero set is the line
/// `{p + t k : t ∈ R}`. Returns the operator, `p` and the unit vector `k`.
pub fn line_solution_operator(
    rng: &mut ChaCha8Rng,
    d: usize,
) -> (AffineMonotoneOperator, DVector<f64>, DVector<f64>) {
    let k = DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal))).normalize();
    let proj = DMatrix::identity(d, d) - &k * k.transpose();
    let b = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let skew = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let sym = &proj * (&b * b.transpose() / d as f64 + DMatrix::identity(d, d)) * &proj;
    let sk = &proj * (&skew - skew.transpose()) * 0.5 * &proj;
    let m = sym + sk;
    let p = DVector::from_iterator(d, (0..d).map(|_| rng.random_range(-1.0..1.0)));
    let q = -(&m * &p);
    (AffineMonotoneOperator::new(m, q).unwrap(), p, k)
}

/// `argmin ‖u - u0‖` over `{u : M u = -q}`: a particular solution from the
/// SVD pseudo-inverse plus the projection of `u0 - p` onto an orthonormal
/// basis of `ker M`.
pub fn project_onto_solution_set(op: &AffineMonotoneOperator, u0: &DVector<f64>) -> DVector<f64> {
    let d = op.dim();
    let svd = op.matrix().clone().svd(true, true);
    let smax = svd.singular_values.max();
    let tol = 1e-10 * smax.max(1.0);
    let p = svd.solve(&(-op.offset()), tol).unwrap();
    let v_t = svd.v_t.as_ref().unwrap();
    let mut u = p.clone();
    for (i, &sv) in svd.singular_values.iter().enumerate() {
        if sv <= tol {
            let basis = v_t.row(i).transpose();
            u += &basis * basis.dot(&(u0 - &p));
        }
    }
    assert_eq!(u.len(), d);
    u
}

/// Random monotone affine operator on `R^d`.
pub fn random_affine_operator(rng: &mut ChaCha8Rng, d: usize) -> AffineMonotoneOperator {
    let mat = DMatrix::from_row_slice(d, d, &random_monotone_matrix(rng, d));
    let q = DVector::from_iterator(d, (0..d).map(|_| rng.random_range(-1.0..1.0)));
    AffineMonotoneOperator::new(mat, q).unwrap()
}

pub fn random_vector(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> DVector<f64> {
    DVector::from_iterator(d, (0..d).map(|_| rng.random_range(-scale..scale)))
}

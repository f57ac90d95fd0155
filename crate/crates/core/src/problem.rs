//! Problem data for `MSVI(F, C ∩ N)`: affine monotone mappings, box
//! constraints and the natural-residual stopping measures.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{MsviError, Result};
use crate::field::RandomField;
use crate::scenario::{positive, Filtration, ScenarioSpace, ScenarioTree, StageLayout};

/// Smallest eigenvalue of `M_i + M_i^T` still accepted as monotone.
pub const PSD_TOL: f64 = -1e-8;

/// Scenario-wise affine mapping `F(x)_i = M_i x_i + b_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineMapping {
    dim: usize,
    // m blocks of n*n, row-major
    matrices: Vec<f64>,
    offsets: RandomField,
    lipschitz: f64,
}

impl AffineMapping {
    /// `matrices[i]` is the row-major `n x n` matrix of scenario `i`.
    pub fn new(matrices: Vec<Vec<f64>>, offsets: RandomField) -> Result<Self> {
        let (m, n) = offsets.shape();
        if matrices.len() != m {
            return Err(MsviError::ShapeMismatch {
                expected: (m, n * n),
                found: (matrices.len(), n * n),
            });
        }
        let mut flat = Vec::with_capacity(m * n * n);
        let mut lipschitz = 0.0_f64;
        for (i, mat) in matrices.iter().enumerate() {
            if mat.len() != n * n {
                return Err(MsviError::ShapeMismatch {
                    expected: (n, n),
                    found: (i, mat.len()),
                });
            }
            if mat.iter().any(|v| !v.is_finite()) {
                return Err(MsviError::NonFinite("mapping matrix"));
            }
            let min_eigenvalue = min_symmetric_eigenvalue(mat, n);
            if min_eigenvalue < PSD_TOL {
                return Err(MsviError::NotMonotone {
                    scenario: i,
                    min_eigenvalue,
                });
            }
            // Frobenius norm bounds the operator norm.
            lipschitz = lipschitz.max(mat.iter().map(|v| v * v).sum::<f64>().sqrt());
            flat.extend_from_slice(mat);
        }
        Ok(Self {
            dim: n,
            matrices: flat,
            offsets,
            lipschitz,
        })
    }

    pub fn scenarios(&self) -> usize {
        self.offsets.scenarios()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self, i: usize) -> &[f64] {
        let nn = self.dim * self.dim;
        &self.matrices[i * nn..(i + 1) * nn]
    }

    pub fn offsets(&self) -> &RandomField {
        &self.offsets
    }

    /// Upper bound on the Lipschitz constant of `F` in the weighted norm.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn evaluate(&self, x: &RandomField) -> Result<RandomField> {
        x.check_shape(self.offsets.shape())?;
        let mut out = RandomField::zeros(x.scenarios(), x.dim());
        self.evaluate_into(x, &mut out);
        Ok(out)
    }

    /// `out = F(x)`; shapes must already agree.
    pub(crate) fn evaluate_into(&self, x: &RandomField, out: &mut RandomField) {
        let n = self.dim;
        for i in 0..x.scenarios() {
            let mat = self.matrix(i);
            let xi = x.row(i);
            let bi = self.offsets.row(i);
            for (r, o) in out.row_mut(i).iter_mut().enumerate() {
                let row = &mat[r * n..(r + 1) * n];
                *o = row.iter().zip(xi).map(|(a, b)| a * b).sum::<f64>() + bi[r];
            }
        }
    }
}

fn min_symmetric_eigenvalue(mat: &[f64], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let m = DMatrix::from_row_slice(n, n, mat);
    let sym = &m + m.transpose();
    SymmetricEigen::new(sym).eigenvalues.min()
}

/// Scenario-wise coordinate bounds `lower <= x <= upper`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxConstraint {
    lower: RandomField,
    upper: RandomField,
}

impl BoxConstraint {
    pub fn new(lower: RandomField, upper: RandomField) -> Result<Self> {
        upper.check_shape(lower.shape())?;
        if let Some(k) = lower
            .as_slice()
            .iter()
            .zip(upper.as_slice())
            .position(|(l, u)| l > u)
        {
            let (i, j) = (k / lower.dim().max(1), k % lower.dim().max(1));
            return Err(MsviError::InvalidBounds(format!(
                "lower > upper at scenario {i}, coordinate {j}"
            )));
        }
        Ok(Self { lower, upper })
    }

    /// `[0, 1]^n` in every scenario.
    pub fn unit(scenarios: usize, dim: usize) -> Self {
        Self {
            lower: RandomField::zeros(scenarios, dim),
            upper: RandomField::filled(scenarios, dim, 1.0),
        }
    }

    pub fn uniform(scenarios: usize, dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(
            RandomField::filled(scenarios, dim, lo),
            RandomField::filled(scenarios, dim, hi),
        )
    }

    pub fn lower(&self) -> &RandomField {
        &self.lower
    }

    pub fn upper(&self) -> &RandomField {
        &self.upper
    }

    pub fn shape(&self) -> (usize, usize) {
        self.lower.shape()
    }

    /// Componentwise clamp onto the box.
    pub fn project(&self, x: &RandomField) -> Result<RandomField> {
        x.check_shape(self.shape())?;
        let mut out = x.clone();
        self.project_in_place(&mut out);
        Ok(out)
    }

    pub(crate) fn project_in_place(&self, x: &mut RandomField) {
        for ((v, lo), hi) in x
            .as_mut_slice()
            .iter_mut()
            .zip(self.lower.as_slice())
            .zip(self.upper.as_slice())
        {
            *v = v.clamp(*lo, *hi);
        }
    }

    /// Midpoint of the box in every scenario.
    pub fn midpoint(&self) -> RandomField {
        self.lower.lin_comb(0.5, &self.upper, 0.5)
    }

    pub fn contains(&self, x: &RandomField) -> bool {
        x.shape() == self.shape()
            && x
                .as_slice()
                .iter()
                .zip(self.lower.as_slice().iter().zip(self.upper.as_slice()))
                .all(|(v, (lo, hi))| lo <= v && v <= hi)
    }
}

/// A complete `MSVI(F, C ∩ N)` instance.
#[derive(Clone, Debug)]
pub struct MsviInstance {
    tree: ScenarioTree,
    mapping: AffineMapping,
    bounds: BoxConstraint,
    known_solution: Option<RandomField>,
}

impl MsviInstance {
    pub fn new(
        tree: ScenarioTree,
        mapping: AffineMapping,
        bounds: BoxConstraint,
        known_solution: Option<RandomField>,
    ) -> Result<Self> {
        let shape = tree.shape();
        mapping.offsets().check_shape(shape)?;
        if bounds.shape() != shape {
            return Err(MsviError::ShapeMismatch {
                expected: shape,
                found: bounds.shape(),
            });
        }
        if let Some(sol) = &known_solution {
            sol.check_shape(shape)?;
        }
        Ok(Self {
            tree,
            mapping,
            bounds,
            known_solution,
        })
    }

    pub fn tree(&self) -> &ScenarioTree {
        &self.tree
    }

    pub fn space(&self) -> &ScenarioSpace {
        self.tree.space()
    }

    pub fn mapping(&self) -> &AffineMapping {
        &self.mapping
    }

    pub fn bounds(&self) -> &BoxConstraint {
        &self.bounds
    }

    pub fn known_solution(&self) -> Option<&RandomField> {
        self.known_solution.as_ref()
    }

    pub fn scenarios(&self) -> usize {
        self.tree.scenarios()
    }

    pub fn dim(&self) -> usize {
        self.tree.dim()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.tree.shape()
    }

    pub fn evaluate_f(&self, x: &RandomField) -> Result<RandomField> {
        self.mapping.evaluate(x)
    }

    pub fn project_box(&self, x: &RandomField) -> Result<RandomField> {
        self.bounds.project(x)
    }

    /// Max over scenarios of `|x_i - Π_{C_i}(x_i - r^{-1}[F(x)_i + y_i])|`.
    ///
    /// Zero exactly when `(x, y)` solves the extensive form scenario-wise,
    /// assuming `x ∈ N` and `y ∈ M` (not checked).
    pub fn residual_err(&self, x: &RandomField, y: &RandomField, r: f64) -> Result<f64> {
        let r = positive("r", r)?;
        let gaps = self.projected_gaps(x, x, y, r)?;
        Ok(gaps.into_iter().fold(0.0, f64::max))
    }

    /// Per-scenario `|x̃_i - Π_{C_i}(x̂_i - r^{-1}[F(x̃)_i + ŷ_i])|` and
    /// their weighted L2 aggregate.
    pub fn natural_residual(
        &self,
        x_tilde: &RandomField,
        x_hat: &RandomField,
        y_hat: &RandomField,
        r: f64,
    ) -> Result<NaturalResidual> {
        let r = positive("r", r)?;
        let per_scenario = self.projected_gaps(x_tilde, x_hat, y_hat, r)?;
        let l2 = per_scenario
            .iter()
            .zip(self.space().probs())
            .map(|(g, p)| p * g * g)
            .sum::<f64>()
            .sqrt();
        Ok(NaturalResidual { per_scenario, l2 })
    }

    fn projected_gaps(
        &self,
        outer: &RandomField,
        anchor: &RandomField,
        y: &RandomField,
        r: f64,
    ) -> Result<Vec<f64>> {
        let shape = self.shape();
        outer.check_shape(shape)?;
        anchor.check_shape(shape)?;
        y.check_shape(shape)?;
        let f = self.mapping.evaluate(outer)?;
        let lower = self.bounds.lower();
        let upper = self.bounds.upper();
        Ok((0..shape.0)
            .map(|i| {
                let mut sq = 0.0;
                for j in 0..shape.1 {
                    let step = anchor.get(i, j) - (f.get(i, j) + y.get(i, j)) / r;
                    let proj = step.clamp(lower.get(i, j), upper.get(i, j));
                    let d = outer.get(i, j) - proj;
                    sq += d * d;
                }
                sq.sqrt()
            })
            .collect())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string(&InstanceFile::from(self))
            .expect("instance serialization cannot fail for finite data");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: InstanceFile = serde_json::from_str(text)?;
        file.into_instance()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NaturalResidual {
    pub per_scenario: Vec<f64>,
    pub l2: f64,
}

impl NaturalResidual {
    pub fn max(&self) -> f64 {
        self.per_scenario.iter().copied().fold(0.0, f64::max)
    }
}

/// On-disk layout of an instance.
#[derive(Serialize, Deserialize)]
struct InstanceFile {
    m: usize,
    p: Vec<f64>,
    #[serde(rename = "N")]
    stages: usize,
    dims: Vec<usize>,
    partitions: Vec<Vec<Vec<usize>>>,
    #[serde(rename = "M")]
    matrices: Vec<Vec<Vec<f64>>>,
    b: Vec<Vec<f64>>,
    lower: Vec<Vec<f64>>,
    upper: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    known_solution: Option<Vec<Vec<f64>>>,
}

impl From<&MsviInstance> for InstanceFile {
    fn from(inst: &MsviInstance) -> Self {
        let n = inst.dim();
        let mapping = inst.mapping();
        Self {
            m: inst.scenarios(),
            p: inst.space().probs().to_vec(),
            stages: inst.tree().layout().stages(),
            dims: inst.tree().layout().dims().to_vec(),
            partitions: inst.tree().filtration().to_blocks(),
            matrices: (0..inst.scenarios())
                .map(|i| mapping.matrix(i).chunks(n.max(1)).map(<[f64]>::to_vec).collect())
                .collect(),
            b: mapping.offsets().to_rows(),
            lower: inst.bounds().lower().to_rows(),
            upper: inst.bounds().upper().to_rows(),
            known_solution: inst.known_solution().map(RandomField::to_rows),
        }
    }
}

impl InstanceFile {
    fn into_instance(self) -> Result<MsviInstance> {
        if self.p.len() != self.m {
            return Err(MsviError::InvalidProbabilities(format!(
                "m = {} but {} probabilities given",
                self.m,
                self.p.len()
            )));
        }
        if self.dims.len() != self.stages {
            return Err(MsviError::InvalidLayout(format!(
                "N = {} but {} stage dimensions given",
                self.stages,
                self.dims.len()
            )));
        }
        let layout = StageLayout::new(self.dims)?;
        let n = layout.total_dim();
        let space = ScenarioSpace::new(self.p)?;
        let filtration = Filtration::from_blocks(self.partitions, self.m)?;
        let tree = ScenarioTree::new(space, layout, filtration)?;
        let field = |rows: &[Vec<f64>]| -> Result<RandomField> {
            let f = RandomField::from_rows(rows)?;
            if rows.is_empty() {
                return Err(MsviError::ShapeMismatch {
                    expected: (self.m, n),
                    found: (0, 0),
                });
            }
            f.check_shape((self.m, n))?;
            Ok(f)
        };
        let offsets = field(&self.b)?;
        let matrices = self
            .matrices
            .into_iter()
            .map(|rows| {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(MsviError::ShapeMismatch {
                        expected: (n, n),
                        found: (rows.len(), rows.first().map_or(0, Vec::len)),
                    });
                }
                Ok(rows.concat())
            })
            .collect::<Result<Vec<_>>>()?;
        let mapping = AffineMapping::new(matrices, offsets)?;
        let bounds = BoxConstraint::new(field(&self.lower)?, field(&self.upper)?)?;
        let known = self.known_solution.as_deref().map(field).transpose()?;
        MsviInstance::new(tree, mapping, bounds, known)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Partition;
    use crate::test_support::scalar_instance;
    use approx::assert_abs_diff_eq;

    fn scalar(v: f64) -> RandomField {
        RandomField::filled(1, 1, v)
    }

    #[test]
    fn evaluate_examples() {
        let id = AffineMapping::new(
            vec![vec![1.0, 0.0, 0.0, 1.0]; 2],
            RandomField::zeros(2, 2),
        )
        .unwrap();
        let x = RandomField::from_rows(&[vec![1.0, -2.0], vec![0.5, 3.0]]).unwrap();
        assert_eq!(id.evaluate(&x).unwrap(), x);

        let b = RandomField::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let shifted = AffineMapping::new(vec![vec![2.0, 1.0, -1.0, 2.0]; 2], b.clone()).unwrap();
        assert_eq!(shifted.evaluate(&RandomField::zeros(2, 2)).unwrap(), b);

        let f = AffineMapping::new(vec![vec![2.0]], scalar(1.0)).unwrap();
        assert_eq!(f.evaluate(&scalar(3.0)).unwrap().get(0, 0), 7.0);
        assert!(f.evaluate(&RandomField::zeros(2, 1)).is_err());
    }

    #[test]
    fn rejects_non_monotone_matrix() {
        let err = AffineMapping::new(vec![vec![-1.0]], scalar(0.0)).unwrap_err();
        assert!(matches!(err, MsviError::NotMonotone { scenario: 0, .. }));
        // skew-symmetric is monotone
        assert!(AffineMapping::new(vec![vec![0.0, 1.0, -1.0, 0.0]], RandomField::zeros(1, 2)).is_ok());
    }

    #[test]
    fn lipschitz_is_max_frobenius_norm() {
        let f = AffineMapping::new(
            vec![vec![3.0, 0.0, 0.0, 4.0], vec![1.0, 0.0, 0.0, 1.0]],
            RandomField::zeros(2, 2),
        )
        .unwrap();
        assert_abs_diff_eq!(f.lipschitz(), 5.0);
    }

    #[test]
    fn project_box_examples() {
        let c = BoxConstraint::unit(1, 3);
        let inside = RandomField::from_rows(&[vec![0.1, 0.5, 1.0]]).unwrap();
        assert_eq!(c.project(&inside).unwrap(), inside);
        let x = RandomField::from_rows(&[vec![0.3, -2.0, 5.0]]).unwrap();
        assert_eq!(c.project(&x).unwrap().row(0), &[0.3, 0.0, 1.0]);
        let y = RandomField::from_rows(&[vec![-0.5, 1.5, 0.0]]).unwrap();
        assert_eq!(c.project(&y).unwrap().row(0), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn box_rejects_inverted_bounds() {
        assert!(BoxConstraint::uniform(1, 1, 1.0, 0.0).is_err());
    }

    #[test]
    fn residual_err_examples() {
        let inst = scalar_instance(1.0, -0.5);
        let zero = scalar(0.0);
        assert_abs_diff_eq!(inst.residual_err(&scalar(0.3), &zero, 1.0).unwrap(), 0.2, epsilon = 1e-15);
        assert_eq!(inst.residual_err(&scalar(0.5), &zero, 1.0).unwrap(), 0.0);
        assert!(inst.residual_err(&scalar(0.5), &zero, 0.0).is_err());
    }

    #[test]
    fn natural_residual_examples() {
        let inst = scalar_instance(1.0, 0.0);
        let zero = scalar(0.0);
        let res = inst
            .natural_residual(&scalar(0.3), &scalar(0.5), &zero, 1.0)
            .unwrap();
        assert_abs_diff_eq!(res.l2, 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(res.max(), 0.1, epsilon = 1e-15);
        // z* = 0.25 solves z = Π(0.5 - z)
        let exact = inst
            .natural_residual(&scalar(0.25), &scalar(0.5), &zero, 1.0)
            .unwrap();
        assert_eq!(exact.l2, 0.0);

        let flat = scalar_instance(0.0, 0.0);
        let res = flat.natural_residual(&scalar(1.0), &scalar(1.7), &zero, 2.0).unwrap();
        assert_eq!(res.l2, 0.0);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let tree = ScenarioTree::new(
            ScenarioSpace::new(vec![0.1, 0.2, 0.7]).unwrap(),
            StageLayout::new(vec![1, 1]).unwrap(),
            Filtration::new(vec![Partition::trivial(3), Partition::discrete(3)]).unwrap(),
        )
        .unwrap();
        let b = RandomField::from_rows(&[vec![0.1, 1.0 / 3.0], vec![-2.5e-7, 4.0], vec![0.0, 1e300]])
            .unwrap();
        let mapping = AffineMapping::new(vec![vec![1.0, 0.1, 0.1, 2.0 / 3.0]; 3], b).unwrap();
        let known = RandomField::filled(3, 2, 0.5);
        let inst = MsviInstance::new(tree, mapping, BoxConstraint::unit(3, 2), Some(known)).unwrap();
        let text = inst.to_json();
        let back = MsviInstance::from_json(&text).unwrap();
        assert_eq!(back.to_json(), text);
        assert_eq!(back.mapping(), inst.mapping());
        assert_eq!(back.known_solution(), inst.known_solution());
    }

    #[test]
    fn from_json_rejects_malformed_input() {
        assert!(MsviInstance::from_json("{").is_err());
        let bad_p = r#"{"m":2,"p":[0.5,0.6],"N":1,"dims":[1],"partitions":[[[0,1]]],
            "M":[[[1]],[[1]]],"b":[[0],[0]],"lower":[[0],[0]],"upper":[[1],[1]]}"#;
        assert!(matches!(
            MsviInstance::from_json(bad_p),
            Err(MsviError::InvalidProbabilities(_))
        ));
    }
}

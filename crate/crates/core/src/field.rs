//! Scenario-indexed decision arrays.

use std::ops::{Add, Mul, Sub};

use crate::error::{MsviError, Result};

/// One decision vector per scenario, stored row-major as an `m x n` array.
///
/// Row `i` is the decision taken in scenario `i`. Arithmetic operators panic
/// on shape mismatch; the fallible entry points in the rest of the crate
/// check shapes up front and report [`MsviError::ShapeMismatch`].
#[derive(Clone, Debug, PartialEq)]
pub struct RandomField {
    scenarios: usize,
    dim: usize,
    data: Vec<f64>,
}

impl RandomField {
    pub fn zeros(scenarios: usize, dim: usize) -> Self {
        Self::filled(scenarios, dim, 0.0)
    }

    pub fn filled(scenarios: usize, dim: usize, value: f64) -> Self {
        Self {
            scenarios,
            dim,
            data: vec![value; scenarios * dim],
        }
    }

    pub fn from_fn(scenarios: usize, dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(scenarios * dim);
        for i in 0..scenarios {
            for j in 0..dim {
                data.push(f(i, j));
            }
        }
        Self {
            scenarios,
            dim,
            data,
        }
    }

    /// Builds a field from a flat row-major buffer.
    pub fn from_vec(scenarios: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != scenarios * dim {
            return Err(MsviError::ShapeMismatch {
                expected: (scenarios, dim),
                found: (data.len(), 1),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(MsviError::NonFinite("random field"));
        }
        Ok(Self {
            scenarios,
            dim,
            data,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let scenarios = rows.len();
        let dim = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(scenarios * dim);
        for row in rows {
            if row.len() != dim {
                return Err(MsviError::ShapeMismatch {
                    expected: (scenarios, dim),
                    found: (scenarios, row.len()),
                });
            }
            data.extend_from_slice(row);
        }
        Self::from_vec(scenarios, dim, data)
    }

    /// Every scenario gets the same row.
    pub fn broadcast(scenarios: usize, row: &[f64]) -> Self {
        Self::from_fn(scenarios, row.len(), |_, j| row[j])
    }

    #[inline]
    pub fn scenarios(&self) -> usize {
        self.scenarios
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.scenarios, self.dim)
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.dim + j] = value;
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact(0) panics, so a zero-width field yields `scenarios` empty rows.
        (0..self.scenarios).map(move |i| self.row(i))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }

    pub fn check_shape(&self, expected: (usize, usize)) -> Result<()> {
        if self.shape() == expected {
            Ok(())
        } else {
            Err(MsviError::ShapeMismatch {
                expected,
                found: self.shape(),
            })
        }
    }

    /// `a * self + b * other`.
    pub fn lin_comb(&self, a: f64, other: &Self, b: f64) -> Self {
        assert_eq!(self.shape(), other.shape(), "random field shape mismatch");
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Self {
            scenarios: self.scenarios,
            dim: self.dim,
            data,
        }
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &Self) {
        assert_eq!(self.shape(), other.shape(), "random field shape mismatch");
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x += a * y;
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            scenarios: self.scenarios,
            dim: self.dim,
            data: self.data.iter().map(|x| a * x).collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.shape(), other.shape(), "random field shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |acc, (x, y)| acc.max((x - y).abs()))
    }
}

impl Add for &RandomField {
    type Output = RandomField;

    fn add(self, rhs: Self) -> RandomField {
        self.lin_comb(1.0, rhs, 1.0)
    }
}

impl Sub for &RandomField {
    type Output = RandomField;

    fn sub(self, rhs: Self) -> RandomField {
        self.lin_comb(1.0, rhs, -1.0)
    }
}

impl Mul<&RandomField> for f64 {
    type Output = RandomField;

    fn mul(self, rhs: &RandomField) -> RandomField {
        rhs.scaled(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_rows_rejects_ragged_input() {
        let err = RandomField::from_rows(&[vec![1.0, 2.0], vec![3.0]]).unwrap_err();
        assert!(matches!(err, MsviError::ShapeMismatch { .. }));
    }

    #[test]
    fn rejects_non_finite_entries() {
        assert!(RandomField::from_vec(1, 2, vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn lin_comb_and_operators_agree() {
        let x = RandomField::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let y = RandomField::filled(2, 2, 1.0);
        assert_eq!(x.lin_comb(2.0, &y, -1.0), &(2.0 * &x) - &y);
        assert_eq!((&x + &y).row(1), &[4.0, 5.0]);
    }
}

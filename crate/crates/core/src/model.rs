use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Layout of a flattened one-vs-rest linear model: `n_classes` blocks, each
/// holding `n_features` weights followed by one bias.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelShape {
    pub n_features: usize,
    pub n_classes: usize,
}

impl ModelShape {
    pub fn new(n_features: usize, n_classes: usize) -> Self {
        Self { n_features, n_classes }
    }

    pub fn block_len(&self) -> usize {
        self.n_features + 1
    }

    pub fn dim(&self) -> usize {
        self.n_classes * self.block_len()
    }
}

/// Flattened parameter vector of one local or global model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelVector(Vec<f64>);

impl ModelVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("model entry {i} is not finite")));
        }
        Ok(Self(values))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn dot(&self, other: &ModelVector) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    /// Euclidean distance.
    pub fn distance(&self, other: &ModelVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn sub(&self, other: &ModelVector) -> ModelVector {
        ModelVector(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &ModelVector) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += alpha * b;
        }
    }

    pub fn scaled(&self, alpha: f64) -> ModelVector {
        ModelVector(self.0.iter().map(|v| v * alpha).collect())
    }

    pub fn block(&self, shape: &ModelShape, class: usize) -> &[f64] {
        let b = shape.block_len();
        &self.0[class * b..(class + 1) * b]
    }

    pub(crate) fn check_dim(&self, expected: usize, what: &str) -> Result<()> {
        if self.len() != expected {
            return Err(Error::Contract(format!(
                "{what}: model has dimension {}, expected {expected}",
                self.len()
            )));
        }
        Ok(())
    }
}

impl Index<usize> for ModelVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for ModelVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

impl From<ModelVector> for Vec<f64> {
    fn from(m: ModelVector) -> Self {
        m.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite() {
        assert!(ModelVector::new(vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn shape_dim() {
        assert_eq!(ModelShape::new(784, 10).dim(), 7850);
    }

    #[test]
    fn distance_345() {
        let a = ModelVector::new(vec![0.0, 0.0]).unwrap();
        let b = ModelVector::new(vec![3.0, 4.0]).unwrap();
        assert_eq!(a.distance(&b), 5.0);
        assert_eq!(b.norm(), 5.0);
    }
}

#![allow(dead_code)]

use fedgae_core::seed;
use fedgae_core::{Dataset, ModelVector};
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rng(tag: u64) -> ChaCha8Rng {
    seed::rng(0xF1C5, &[tag])
}

pub fn random_model<R: Rng>(rng: &mut R, dim: usize, offset: f64) -> ModelVector {
    ModelVector::new((0..dim).map(|_| offset + rng.random_range(-1.0..1.0)).collect()).unwrap()
}

pub fn random_models<R: Rng>(rng: &mut R, n: usize, dim: usize, offset: f64) -> Vec<ModelVector> {
    (0..n).map(|_| random_model(rng, dim, offset)).collect()
}

pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| scale * rng.random_range(-1.0..1.0))
}

/// Small separable-ish dataset: class `c` lights up feature `c`.
pub fn toy_dataset<R: Rng>(rng: &mut R, n: usize, n_features: usize, n_classes: usize) -> Dataset {
    let mut features = Vec::with_capacity(n * n_features);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % n_classes;
        for f in 0..n_features {
            let base = if f % n_classes == label { 0.8 } else { 0.1 };
            features.push((base + rng.random_range(0.0..0.2)) as f32);
        }
        labels.push(label);
    }
    Dataset::new(features, n_features, labels, n_classes).unwrap()
}

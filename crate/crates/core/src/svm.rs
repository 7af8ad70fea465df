//! One-vs-rest linear SVM: hinge loss, local sub-gradient training and
//! argmax evaluation.

use rand::seq::SliceRandom;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{ModelShape, ModelVector};
use crate::seed;

/// Hyperparameters of one client's local training between two
/// communication rounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalTrainConfig {
    /// Local iterations per round.
    pub iterations: usize,
    pub eta: f64,
    /// Coefficient of the `½‖ω_c‖²` regularizer.
    pub mu: f64,
    /// Mini-batch size; 0 means one full-batch step per iteration.
    pub batch_size: usize,
}

impl Default for LocalTrainConfig {
    fn default() -> Self {
        Self {
            iterations: 10,
            eta: 0.01,
            mu: 0.01,
            batch_size: 10,
        }
    }
}

pub fn shape_of(dataset: &Dataset) -> ModelShape {
    ModelShape::new(dataset.n_features(), dataset.n_classes())
}

#[inline]
fn score(block: &[f64], x: &[f32]) -> f64 {
    let (w, bias) = block.split_at(block.len() - 1);
    w.iter().zip(x).map(|(a, &b)| a * f64::from(b)).sum::<f64>() + bias[0]
}

#[inline]
fn ovr_target(label: usize, class: usize) -> f64 {
    if label == class {
        1.0
    } else {
        -1.0
    }
}

/// Binary soft-margin objective `μ·½‖w‖² + mean_i max(0, 1 − y_i(β + wᵀx_i))`
/// with labels `y_i ∈ {−1, +1}`.
pub fn binary_hinge_loss(w: &[f64], bias: f64, xs: &[&[f32]], ys: &[f64], mu: f64) -> f64 {
    let reg = 0.5 * mu * w.iter().map(|v| v * v).sum::<f64>();
    let hinge: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let s: f64 = w.iter().zip(x.iter()).map(|(a, &b)| a * f64::from(b)).sum();
            (1.0 - y * (bias + s)).max(0.0)
        })
        .sum();
    reg + hinge / xs.len() as f64
}

/// Mean over the C one-vs-rest problems of the binary hinge objective,
/// evaluated on the given rows of `dataset`.
pub fn svm_loss(model: &ModelVector, dataset: &Dataset, rows: &[usize], mu: f64) -> Result<f64> {
    let shape = shape_of(dataset);
    model.check_dim(shape.dim(), "svm_loss")?;
    if rows.is_empty() {
        return Err(Error::Contract("svm_loss on an empty shard".into()));
    }
    let mut hinge = vec![0.0; shape.n_classes];
    for &i in rows {
        let x = dataset.sample(i);
        let label = dataset.label(i);
        for (c, h) in hinge.iter_mut().enumerate() {
            let s = score(model.block(&shape, c), x);
            *h += (1.0 - ovr_target(label, c) * s).max(0.0);
        }
    }
    let n = rows.len() as f64;
    let total: f64 = (0..shape.n_classes)
        .map(|c| {
            let block = model.block(&shape, c);
            let w = &block[..shape.n_features];
            0.5 * mu * w.iter().map(|v| v * v).sum::<f64>() + hinge[c] / n
        })
        .sum();
    Ok(total / shape.n_classes as f64)
}

/// Loss over every sample of `dataset`.
pub fn dataset_loss(model: &ModelVector, dataset: &Dataset, mu: f64) -> Result<f64> {
    let rows: Vec<usize> = (0..dataset.n_samples()).collect();
    svm_loss(model, dataset, &rows, mu)
}

/// One sub-gradient step of every one-vs-rest block on `batch`.
fn step(
    model: &mut [f64],
    shape: &ModelShape,
    dataset: &Dataset,
    batch: &[usize],
    cfg: &LocalTrainConfig,
    grad: &mut [f64],
) {
    let d = shape.n_features;
    let bl = shape.block_len();
    grad.fill(0.0);
    for &i in batch {
        let x = dataset.sample(i);
        let label = dataset.label(i);
        for c in 0..shape.n_classes {
            let block = &model[c * bl..(c + 1) * bl];
            let y = ovr_target(label, c);
            if y * score(block, x) < 1.0 {
                let g = &mut grad[c * bl..(c + 1) * bl];
                for (gk, &xk) in g[..d].iter_mut().zip(x) {
                    *gk -= y * f64::from(xk);
                }
                g[d] -= y;
            }
        }
    }
    let inv = 1.0 / batch.len() as f64;
    for c in 0..shape.n_classes {
        let off = c * bl;
        for k in 0..bl {
            let reg = if k < d { cfg.mu * model[off + k] } else { 0.0 };
            model[off + k] -= cfg.eta * (reg + grad[off + k] * inv);
        }
    }
}

/// Runs `cfg.iterations` local iterations starting from `start`. Each
/// iteration is one full-batch step, or one seeded pass of mini-batch steps
/// when `cfg.batch_size > 0`.
pub fn local_train(
    start: &ModelVector,
    dataset: &Dataset,
    rows: &[usize],
    cfg: &LocalTrainConfig,
    stream_seed: u64,
) -> Result<ModelVector> {
    let shape = shape_of(dataset);
    start.check_dim(shape.dim(), "local_train")?;
    if rows.is_empty() {
        return Err(Error::Contract("local_train on an empty shard".into()));
    }
    if !(cfg.eta >= 0.0 && cfg.eta.is_finite()) {
        return Err(Error::Config(format!("learning rate {} is invalid", cfg.eta)));
    }
    let mut model = start.clone().into_inner();
    let mut grad = vec![0.0; model.len()];
    let mut order = rows.to_vec();
    let mut rng = seed::rng(stream_seed, &[seed::LOCAL_TRAIN]);
    for it in 0..cfg.iterations {
        if cfg.batch_size == 0 || cfg.batch_size >= rows.len() {
            step(&mut model, &shape, dataset, rows, cfg, &mut grad);
        } else {
            order.shuffle(&mut rng);
            for batch in order.chunks(cfg.batch_size) {
                step(&mut model, &shape, dataset, batch, cfg, &mut grad);
            }
        }
        if model.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "local training diverged at iteration {}",
                it + 1
            )));
        }
    }
    Ok(ModelVector::from_vec_unchecked(model))
}

/// Predicted class: argmax of the per-class scores, ties to the lowest index.
pub fn predict(model: &ModelVector, shape: &ModelShape, x: &[f32]) -> usize {
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for c in 0..shape.n_classes {
        let s = score(model.block(shape, c), x);
        if s > best_score {
            best = c;
            best_score = s;
        }
    }
    best
}

pub fn evaluate_accuracy(model: &ModelVector, dataset: &Dataset) -> Result<f64> {
    let shape = shape_of(dataset);
    model.check_dim(shape.dim(), "evaluate_accuracy")?;
    if dataset.n_samples() == 0 {
        return Err(Error::Contract("accuracy on an empty dataset".into()));
    }
    let correct = (0..dataset.n_samples())
        .filter(|&i| predict(model, &shape, dataset.sample(i)) == dataset.label(i))
        .count();
    Ok(correct as f64 / dataset.n_samples() as f64)
}

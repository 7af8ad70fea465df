//! FedAvg: data-size weighted model averaging.

use std::borrow::Borrow;

use crate::error::{Error, Result};
use crate::model::ModelVector;

/// Weights `D_k / Σ D`.
pub fn aggregation_weights(sizes: &[usize]) -> Result<Vec<f64>> {
    if sizes.is_empty() {
        return Err(Error::Contract("no reported sizes".into()));
    }
    if sizes.contains(&0) {
        return Err(Error::Contract("reported sizes must be positive".into()));
    }
    let total: usize = sizes.iter().sum();
    Ok(sizes.iter().map(|&s| s as f64 / total as f64).collect())
}

/// Weighted mean of `models`, reduced in index order.
pub fn aggregate<M: Borrow<ModelVector>>(models: &[M], sizes: &[usize]) -> Result<ModelVector> {
    if models.is_empty() {
        return Err(Error::Contract("aggregate of an empty model list".into()));
    }
    if models.len() != sizes.len() {
        return Err(Error::Contract(format!(
            "{} models but {} reported sizes",
            models.len(),
            sizes.len()
        )));
    }
    let dim = models[0].borrow().len();
    for (i, m) in models.iter().enumerate() {
        m.borrow().check_dim(dim, &format!("aggregate input {i}"))?;
    }
    let weights = aggregation_weights(sizes)?;
    let mut out = ModelVector::zeros(dim);
    for (m, w) in models.iter().zip(weights) {
        out.axpy(w, m.borrow());
    }
    Ok(out)
}

/// Unweighted mean.
pub fn mean<M: Borrow<ModelVector>>(models: &[M]) -> Result<ModelVector> {
    aggregate(models, &vec![1; models.len()])
}

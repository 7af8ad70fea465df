use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::ModelVector;
use crate::seed;

/// Fake-device baseline: `prev_global + scale · u` with `u` a seeded uniformly
/// random unit direction.
pub fn mp_baseline(prev_global: &ModelVector, scale: f64, stream_seed: u64) -> Result<ModelVector> {
    if !(scale >= 0.0 && scale.is_finite()) {
        return Err(Error::Config(format!(
            "MP scale {scale} must be a finite non-negative number"
        )));
    }
    let mut rng = seed::rng(stream_seed, &[seed::MP]);
    let mut dir: Vec<f64> = (0..prev_global.len())
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        dir.iter_mut().for_each(|v| *v /= norm);
    }
    let mut out = prev_global.clone();
    out.axpy(scale, &ModelVector::from_vec_unchecked(dir));
    Ok(out)
}

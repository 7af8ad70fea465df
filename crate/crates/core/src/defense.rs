//! Euclidean-distance attacker detection and multi-Krum robust aggregation.

use std::borrow::Borrow;

use crate::aggregate::{aggregate, mean};
use crate::error::{Error, Result};
use crate::federation::{Defense, DefenseOutcome};
use crate::model::ModelVector;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdPolicy {
    Fixed(f64),
    /// Mean plus `k` population standard deviations of the distances.
    MeanPlusKStd(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorEntry {
    pub id: usize,
    pub distance: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorReport {
    pub entries: Vec<DetectorEntry>,
    pub threshold: f64,
}

impl DetectorReport {
    pub fn flagged_ids(&self) -> Vec<usize> {
        self.entries.iter().filter(|e| e.flagged).map(|e| e.id).collect()
    }
}

pub fn distance_report<M: Borrow<ModelVector>>(
    models: &[M],
    global: &ModelVector,
    policy: ThresholdPolicy,
) -> Result<DetectorReport> {
    if models.is_empty() {
        return Err(Error::Contract("distance report over no models".into()));
    }
    let mut distances = Vec::with_capacity(models.len());
    for (i, m) in models.iter().enumerate() {
        let m = m.borrow();
        m.check_dim(global.len(), &format!("detector input {i}"))?;
        distances.push(m.distance(global));
    }
    let threshold = match policy {
        ThresholdPolicy::Fixed(tau) => tau,
        ThresholdPolicy::MeanPlusKStd(k) => {
            let n = distances.len() as f64;
            let mean = distances.iter().sum::<f64>() / n;
            let var = distances.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n;
            mean + k * var.sqrt()
        }
    };
    let entries = distances
        .into_iter()
        .enumerate()
        .map(|(id, distance)| DetectorEntry {
            id,
            distance,
            flagged: distance > threshold,
        })
        .collect();
    Ok(DetectorReport { entries, threshold })
}

fn sq_dist(a: &ModelVector, b: &ModelVector) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}

/// Krum score of every model: the sum of its `n − f − 2` smallest squared
/// distances to the other models.
pub fn krum_scores<M: Borrow<ModelVector>>(models: &[M], f: usize) -> Result<Vec<f64>> {
    let n = models.len();
    if n < f + 3 {
        return Err(Error::Config(format!(
            "Krum with f = {f} needs at least {} models, got {n}",
            f + 3
        )));
    }
    let dim = models[0].borrow().len();
    for (i, m) in models.iter().enumerate() {
        m.borrow().check_dim(dim, &format!("Krum input {i}"))?;
    }
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v = sq_dist(models[i].borrow(), models[j].borrow());
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    let keep = n - f - 2;
    Ok((0..n)
        .map(|i| {
            let mut others: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| d[i][j]).collect();
            others.sort_by(f64::total_cmp);
            others[..keep].iter().sum()
        })
        .collect())
}

/// Indices of the `m` lowest Krum scores, ties to the lowest index.
pub fn multi_krum_select<M: Borrow<ModelVector>>(models: &[M], f: usize, m: usize) -> Result<Vec<usize>> {
    let scores = krum_scores(models, f)?;
    let n = models.len();
    if m == 0 || m > n - f {
        return Err(Error::Config(format!("multi-Krum m = {m} must lie in 1..={}", n - f)));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    order.truncate(m);
    order.sort_unstable();
    Ok(order)
}

/// Unweighted mean of the `m` models selected by Krum scoring.
pub fn multi_krum<M: Borrow<ModelVector>>(models: &[M], f: usize, m: usize) -> Result<ModelVector> {
    let selected = multi_krum_select(models, f, m)?;
    let chosen: Vec<&ModelVector> = selected.iter().map(|&i| models[i].borrow()).collect();
    mean(&chosen)
}

/// Distance thresholding against the FedAvg aggregate of all uploads.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceDefense {
    pub policy: ThresholdPolicy,
    /// Drop flagged uploads (and their sizes) and re-aggregate; otherwise
    /// report only.
    pub exclude: bool,
}

impl Defense for DistanceDefense {
    fn name(&self) -> String {
        "distance".into()
    }

    fn aggregate(&self, models: &[ModelVector], sizes: &[usize]) -> Result<DefenseOutcome> {
        let all = aggregate(models, sizes)?;
        if !self.exclude {
            return Ok(DefenseOutcome {
                global: all,
                excluded: vec![false; models.len()],
            });
        }
        let report = distance_report(models, &all, self.policy)?;
        let keep: Vec<usize> = (0..models.len()).filter(|&i| !report.entries[i].flagged).collect();
        if keep.is_empty() {
            return Err(Error::Degenerate("distance defense flagged every upload".into()));
        }
        let kept: Vec<&ModelVector> = keep.iter().map(|&i| &models[i]).collect();
        let kept_sizes: Vec<usize> = keep.iter().map(|&i| sizes[i]).collect();
        Ok(DefenseOutcome {
            global: aggregate(&kept, &kept_sizes)?,
            excluded: report.entries.iter().map(|e| e.flagged).collect(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MultiKrumDefense {
    pub f: usize,
    pub m: usize,
}

impl Defense for MultiKrumDefense {
    fn name(&self) -> String {
        "multi_krum".into()
    }

    fn aggregate(&self, models: &[ModelVector], _sizes: &[usize]) -> Result<DefenseOutcome> {
        let selected = multi_krum_select(models, self.f, self.m)?;
        let mut excluded = vec![true; models.len()];
        for &i in &selected {
            excluded[i] = false;
        }
        let chosen: Vec<&ModelVector> = selected.iter().map(|&i| &models[i]).collect();
        Ok(DefenseOutcome {
            global: mean(&chosen)?,
            excluded,
        })
    }
}

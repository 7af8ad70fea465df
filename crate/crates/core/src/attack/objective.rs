//! The attacker's Lagrangian `L(ω^a, λ) = F(ω_g^a) + λ(d_T − d(ω^a, ω_g^a))`.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::ModelVector;
use crate::svm;

use super::dual::DualState;

/// How `F(ω_g^a)` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ObjectiveMode {
    /// Data-free: displacement of the would-be global model against the
    /// benign consensus update.
    #[default]
    Surrogate,
    /// Hinge loss of the would-be global model on a probe set.
    Oracle,
}

/// What the attacker knows in one round.
#[derive(Debug, Clone)]
pub struct AttackContext<'a> {
    pub observed: &'a [ModelVector],
    pub observed_sizes: &'a [usize],
    pub prev_global: &'a ModelVector,
    /// Data size `D_a` the attacker reports.
    pub claimed_size: usize,
    pub mode: ObjectiveMode,
    pub probe: Option<&'a Dataset>,
    /// Regulariser coefficient used when evaluating the oracle loss.
    pub mu: f64,
}

/// Per-round quantities shared by every candidate evaluation.
#[derive(Debug, Clone)]
pub struct PreparedContext<'a> {
    ctx: AttackContext<'a>,
    /// `Σ D_j ω_j` over the observed models.
    weighted_sum: ModelVector,
    observed_total: usize,
    /// Unit consensus update `u/‖u‖`, absent when the benign models did not move.
    consensus_dir: Option<ModelVector>,
}

impl<'a> PreparedContext<'a> {
    pub fn new(ctx: AttackContext<'a>) -> Result<Self> {
        if ctx.observed.is_empty() {
            return Err(Error::Contract("attacker observed no benign models".into()));
        }
        if ctx.observed.len() != ctx.observed_sizes.len() {
            return Err(Error::Contract("observed models and sizes differ in length".into()));
        }
        if ctx.claimed_size == 0 || ctx.observed_sizes.contains(&0) {
            return Err(Error::Contract("data sizes must be positive".into()));
        }
        if ctx.mode == ObjectiveMode::Oracle && ctx.probe.is_none() {
            return Err(Error::Config("oracle objective requires a probe set".into()));
        }
        let dim = ctx.prev_global.len();
        let mut weighted_sum = ModelVector::zeros(dim);
        for (i, (m, &s)) in ctx.observed.iter().zip(ctx.observed_sizes).enumerate() {
            m.check_dim(dim, &format!("observed model {i}"))?;
            weighted_sum.axpy(s as f64, m);
        }
        let observed_total: usize = ctx.observed_sizes.iter().sum();
        let mut u = weighted_sum.scaled(1.0 / observed_total as f64);
        u.axpy(-1.0, ctx.prev_global);
        let norm = u.norm();
        let consensus_dir = (norm > 0.0).then(|| u.scaled(1.0 / norm));
        Ok(Self {
            ctx,
            weighted_sum,
            observed_total,
            consensus_dir,
        })
    }

    pub fn context(&self) -> &AttackContext<'a> {
        &self.ctx
    }

    /// `ω_g^a` that the server would form from the observed models and `candidate`.
    pub fn contaminated_global(&self, candidate: &ModelVector) -> ModelVector {
        let total = (self.observed_total + self.ctx.claimed_size) as f64;
        let mut g = self.weighted_sum.scaled(1.0 / total);
        g.axpy(self.ctx.claimed_size as f64 / total, candidate);
        g
    }

    fn loss_term(&self, global: &ModelVector) -> Result<f64> {
        match self.ctx.mode {
            ObjectiveMode::Surrogate => Ok(match &self.consensus_dir {
                Some(dir) => -global.sub(self.ctx.prev_global).dot(dir),
                None => 0.0,
            }),
            ObjectiveMode::Oracle => {
                let probe = self.ctx.probe.expect("checked in new");
                svm::dataset_loss(global, probe, self.ctx.mu)
            }
        }
    }

    /// `(L, d)` for a candidate malicious model.
    pub fn evaluate(&self, candidate: &ModelVector, dual: &DualState) -> Result<(f64, f64)> {
        candidate.check_dim(self.ctx.prev_global.len(), "attack candidate")?;
        let global = self.contaminated_global(candidate);
        let d = candidate.distance(&global);
        let value = self.loss_term(&global)? + dual.lambda * (dual.d_t - d);
        if !value.is_finite() {
            return Err(Error::Numeric("attack objective is not finite".into()));
        }
        Ok((value, d))
    }
}

pub fn attack_objective(candidate: &ModelVector, dual: &DualState, ctx: &PreparedContext<'_>) -> Result<f64> {
    ctx.evaluate(candidate, dual).map(|(v, _)| v)
}

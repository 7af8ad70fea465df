//! Data-agnostic model poisoning: the graph-autoencoder attacker and the
//! random fake-device baseline, both as [`Attacker`] plugins.

pub mod dual;
pub mod gcn;
pub mod mp;
pub mod objective;
pub mod train;

pub use dual::{dual_update, DualSign, DualState};
pub use gcn::{
    decode, gcn_backprop, gcn_forward, normalize_adjacency, recon_loglik, recon_loglik_grad, row_normalize,
    ForwardCache, GaeGradients, GaeModel, ReconstructedGraph, TargetMap,
};
pub use mp::mp_baseline;
pub use objective::{attack_objective, AttackContext, ObjectiveMode, PreparedContext};
pub use train::{synthesize_malicious, train_gae_round, Adam, GaeTrainConfig, GraphInputs, RoundOutcome, Synthesis};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::federation::{Attacker, CraftedModel, Observation};
use crate::graph::{self, FeatureMatrix};
use crate::model::ModelVector;
use crate::seed;

/// Stealth radius used by the GAE attacker each round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StealthRadius {
    /// Largest distance of an observed benign model to the previous global.
    Adaptive,
    Fixed(f64),
}

/// Data size the attacker reports to the server.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClaimedSize {
    /// Rounded mean of the observed benign sizes.
    MeanObserved,
    Fixed(usize),
}

impl ClaimedSize {
    pub fn resolve(self, observed_sizes: &[usize]) -> usize {
        match self {
            ClaimedSize::Fixed(n) => n,
            ClaimedSize::MeanObserved => {
                let total: usize = observed_sizes.iter().sum();
                ((total as f64 / observed_sizes.len().max(1) as f64).round() as usize).max(1)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct GaeAttackConfig {
    pub train: GaeTrainConfig,
    pub hidden: usize,
    pub embed: usize,
    pub dropout: f64,
    pub d_t: StealthRadius,
    pub claimed_size: ClaimedSize,
    pub lambda_init: f64,
    pub dual_step: f64,
    pub dual_sign: DualSign,
    pub mode: ObjectiveMode,
    pub mu: f64,
    pub probe: Option<Dataset>,
    pub seed: u64,
}

impl Default for GaeAttackConfig {
    fn default() -> Self {
        Self {
            train: GaeTrainConfig::default(),
            hidden: 32,
            embed: 16,
            dropout: 0.1,
            d_t: StealthRadius::Adaptive,
            claimed_size: ClaimedSize::MeanObserved,
            lambda_init: 1.0,
            dual_step: 0.5,
            dual_sign: DualSign::Standard,
            mode: ObjectiveMode::Surrogate,
            mu: 0.01,
            probe: None,
            seed: 0,
        }
    }
}

const D_T_FLOOR: f64 = 1e-12;

/// GAE-based attacker. The encoder is created on the first observation
/// (its input width is the number of observed models) and keeps training
/// across rounds together with its Adam moments and dual variable.
#[derive(Debug, Clone)]
pub struct GaeAttacker {
    config: GaeAttackConfig,
    gae: Option<(GaeModel, Adam)>,
    lambda: f64,
    last: Option<RoundOutcome>,
}

impl GaeAttacker {
    pub fn new(config: GaeAttackConfig) -> Result<Self> {
        if config.hidden == 0 || config.embed == 0 {
            return Err(Error::Config("GAE layer widths must be positive".into()));
        }
        if config.mode == ObjectiveMode::Oracle && config.probe.is_none() {
            return Err(Error::Config("oracle objective requires a probe set".into()));
        }
        // validates lambda_init and dual_step
        DualState::new(config.lambda_init, 1.0, config.dual_step, config.dual_sign)?;
        let lambda = config.lambda_init;
        Ok(Self {
            config,
            gae: None,
            lambda,
            last: None,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Outcome of the most recent round, if any.
    pub fn last_outcome(&self) -> Option<&RoundOutcome> {
        self.last.as_ref()
    }

    fn stealth_radius(&self, obs: &Observation<'_>) -> f64 {
        match self.config.d_t {
            StealthRadius::Fixed(d) => d,
            StealthRadius::Adaptive => obs
                .observed
                .iter()
                .map(|m| m.distance(obs.prev_global))
                .fold(0.0, f64::max)
                .max(D_T_FLOOR),
        }
    }
}

impl Attacker for GaeAttacker {
    fn name(&self) -> String {
        "gae".into()
    }

    fn craft(&mut self, obs: &Observation<'_>) -> Result<CraftedModel> {
        if obs.observed.len() < 2 {
            return Err(Error::Contract(
                "GAE attacker needs at least two observed models".into(),
            ));
        }
        let cfg = &self.config;
        let claimed_size = cfg.claimed_size.resolve(obs.observed_sizes);
        let dual = DualState::new(self.lambda, self.stealth_radius(obs), cfg.dual_step, cfg.dual_sign)?;

        let adjacency = graph::cosine_adjacency(obs.observed)?;
        let lap = graph::laplacian(&adjacency.a, cfg.train.laplacian)?;
        let basis = graph::spectral_basis(&lap)?;
        let features = FeatureMatrix::from_models(obs.observed)?;
        let s = graph::forward_gft(&basis, &features)?;
        let dim = features.0.ncols();
        let inputs = GraphInputs {
            z0: row_normalize(&features.0),
            a: adjacency.a,
            s,
        };

        let (gae, adam) = match &mut self.gae {
            Some((g, a)) if g.input_dim() == dim => (g, a),
            slot => {
                let mut rng = seed::rng(cfg.seed, &[seed::GAE_INIT]);
                let g = GaeModel::init(dim, cfg.hidden, cfg.embed, cfg.dropout, &mut rng)?;
                let a = Adam::new(&g);
                let (g, a) = slot.insert((g, a));
                (g, a)
            }
        };

        let ctx = PreparedContext::new(AttackContext {
            observed: obs.observed,
            observed_sizes: obs.observed_sizes,
            prev_global: obs.prev_global,
            claimed_size,
            mode: cfg.mode,
            probe: cfg.probe.as_ref(),
            mu: cfg.mu,
        })?;
        let stream = seed::derive(cfg.seed, &[obs.round as u64]);
        let outcome = train_gae_round(gae, adam, &inputs, &dual, &ctx, &cfg.train, stream)?;

        let used = self.lambda;
        self.lambda = dual_update(&dual, outcome.synthesis.distance).lambda;
        let model = outcome.synthesis.model.clone();
        self.last = Some(outcome);
        Ok(CraftedModel {
            model,
            claimed_size,
            lambda: Some(used),
        })
    }
}

/// Offset size of the fake-device baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MpScale {
    Fixed(f64),
    /// Multiple of the largest observed benign distance to the previous global.
    SpreadMultiple(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpAttacker {
    pub scale: MpScale,
    pub claimed_size: ClaimedSize,
    pub seed: u64,
}

impl MpAttacker {
    pub fn resolve_scale(&self, obs: &Observation<'_>) -> f64 {
        match self.scale {
            MpScale::Fixed(s) => s,
            MpScale::SpreadMultiple(k) => {
                k * obs
                    .observed
                    .iter()
                    .map(|m| m.distance(obs.prev_global))
                    .fold(0.0, f64::max)
            }
        }
    }
}

impl Attacker for MpAttacker {
    fn name(&self) -> String {
        "mp".into()
    }

    fn craft(&mut self, obs: &Observation<'_>) -> Result<CraftedModel> {
        let scale = self.resolve_scale(obs);
        let model = mp_baseline(obs.prev_global, scale, seed::derive(self.seed, &[obs.round as u64]))?;
        Ok(CraftedModel {
            model,
            claimed_size: self.claimed_size.resolve(obs.observed_sizes),
            lambda: None,
        })
    }
}

/// Uploads a copy of an observed benign model. Useful as a control.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ReplayAttacker {
    pub index: usize,
}

impl Attacker for ReplayAttacker {
    fn name(&self) -> String {
        "replay".into()
    }

    fn craft(&mut self, obs: &Observation<'_>) -> Result<CraftedModel> {
        let model: &ModelVector = obs
            .observed
            .get(self.index)
            .ok_or_else(|| Error::Contract(format!("replay index {} not observed", self.index)))?;
        Ok(CraftedModel {
            model: model.clone(),
            claimed_size: obs.observed_sizes[self.index],
            lambda: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn models() -> Vec<ModelVector> {
        vec![
            ModelVector::new(vec![1.0, 0.2, 0.0, 0.3]).unwrap(),
            ModelVector::new(vec![0.9, 0.1, 0.2, 0.2]).unwrap(),
            ModelVector::new(vec![1.1, 0.3, -0.1, 0.4]).unwrap(),
        ]
    }

    #[test]
    fn claimed_size_policies() {
        assert_eq!(ClaimedSize::MeanObserved.resolve(&[400, 401]), 401);
        assert_eq!(ClaimedSize::Fixed(7).resolve(&[400]), 7);
    }

    #[test]
    fn gae_attacker_is_deterministic_and_tracks_lambda() {
        let ms = models();
        let prev = ModelVector::zeros(4);
        let obs = Observation {
            round: 1,
            observed: &ms,
            observed_sizes: &[10, 10, 10],
            prev_global: &prev,
        };
        let cfg = GaeAttackConfig {
            train: GaeTrainConfig {
                epochs: 3,
                ..Default::default()
            },
            seed: 9,
            ..Default::default()
        };
        let mut a = GaeAttacker::new(cfg.clone()).unwrap();
        let mut b = GaeAttacker::new(cfg).unwrap();
        let ca = a.craft(&obs).unwrap();
        assert_eq!(ca, b.craft(&obs).unwrap());
        assert_eq!(ca.model.len(), 4);
        assert_eq!(ca.lambda, Some(1.0));
        assert_eq!(ca.claimed_size, 10);
        assert!(a.lambda() >= 0.0);
        assert_eq!(a.last_outcome().unwrap().objective_trace.len(), 4);
    }

    #[test]
    fn oracle_without_probe_rejected() {
        let cfg = GaeAttackConfig {
            mode: ObjectiveMode::Oracle,
            ..Default::default()
        };
        assert!(matches!(GaeAttacker::new(cfg), Err(Error::Config(_))));
    }

    #[test]
    fn mp_spread_multiple() {
        let ms = models();
        let prev = ModelVector::zeros(4);
        let obs = Observation {
            round: 2,
            observed: &ms,
            observed_sizes: &[5, 5, 5],
            prev_global: &prev,
        };
        let mut mp = MpAttacker {
            scale: MpScale::SpreadMultiple(3.0),
            claimed_size: ClaimedSize::MeanObserved,
            seed: 1,
        };
        let spread = ms.iter().map(|m| m.norm()).fold(0.0, f64::max);
        let out = mp.craft(&obs).unwrap();
        assert!((out.model.distance(&prev) - 3.0 * spread).abs() < 1e-9);
        assert_eq!(out.lambda, None);
    }
}

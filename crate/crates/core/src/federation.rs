//! Communication-round orchestration: local training, eavesdropping
//! attackers, optional defense, aggregation, broadcast and bookkeeping.

use rayon::prelude::*;

use crate::aggregate::aggregate;
use crate::data::{self, DataShard, Dataset, PartitionScheme};
use crate::defense::{distance_report, ThresholdPolicy};
use crate::error::{Error, Result};
use crate::model::ModelVector;
use crate::seed;
use crate::svm::{self, LocalTrainConfig};

/// What an attacker sees in round `round`.
#[derive(Debug, Clone, Copy)]
pub struct Observation<'a> {
    pub round: usize,
    /// Uploaded benign models the attacker overheard.
    pub observed: &'a [ModelVector],
    pub observed_sizes: &'a [usize],
    /// Global model broadcast at the end of the previous round.
    pub prev_global: &'a ModelVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CraftedModel {
    pub model: ModelVector,
    /// Data size reported to the server.
    pub claimed_size: usize,
    /// Dual variable used for this round, if the attacker has one.
    pub lambda: Option<f64>,
}

pub trait Attacker: Send {
    fn name(&self) -> String;
    fn craft(&mut self, obs: &Observation<'_>) -> Result<CraftedModel>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct DefenseOutcome {
    pub global: ModelVector,
    /// Per participant, whether it was left out of the aggregate.
    pub excluded: Vec<bool>,
}

/// Server-side aggregation rule replacing plain FedAvg.
pub trait Defense: Sync {
    fn name(&self) -> String;
    fn aggregate(&self, models: &[ModelVector], sizes: &[usize]) -> Result<DefenseOutcome>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct FederationConfig {
    pub n_clients: usize,
    pub rounds: usize,
    pub local: LocalTrainConfig,
    pub seed: u64,
    /// Number of benign clients (lowest ids first) whose uploads the
    /// attackers overhear; `None` means all.
    pub eavesdrop_count: Option<usize>,
    /// Report-only detector evaluated every round.
    pub detector: ThresholdPolicy,
    pub partition: PartitionScheme,
}

impl Default for FederationConfig {
    fn default() -> Self {
        Self {
            n_clients: 5,
            rounds: 50,
            local: LocalTrainConfig::default(),
            seed: 0,
            eavesdrop_count: None,
            detector: ThresholdPolicy::MeanPlusKStd(2.0),
            partition: PartitionScheme::Iid,
        }
    }
}

impl FederationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_clients == 0 {
            return Err(Error::Config("J must be at least 1".into()));
        }
        if self.rounds == 0 {
            return Err(Error::Config("T_FL must be at least 1".into()));
        }
        if self.local.iterations == 0 {
            return Err(Error::Config("T_L must be at least 1".into()));
        }
        if let Some(k) = self.eavesdrop_count {
            if k == 0 || k > self.n_clients {
                return Err(Error::Config(format!(
                    "eavesdrop count {k} must lie in 1..={}",
                    self.n_clients
                )));
            }
        }
        Ok(())
    }
}

/// Snapshot of one communication round. Participants are ordered benign
/// clients first (ids `0..J`), then attackers (ids `J..`).
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub round: usize,
    pub benign_models: Vec<ModelVector>,
    pub malicious_models: Vec<ModelVector>,
    pub global_model: ModelVector,
    /// Dual variable each attacker used this round (0 for attackers without one).
    pub lambdas: Vec<f64>,
    /// Euclidean distance of every participant to the new global model.
    pub distances: Vec<f64>,
    pub flagged: Vec<bool>,
    pub detector_threshold: f64,
    pub excluded: Vec<bool>,
    /// Test accuracy of every participant's uploaded model.
    pub local_accuracies: Vec<f64>,
    pub global_accuracy: f64,
    /// Training loss of the global model over the union of benign shards.
    pub global_loss: f64,
}

impl RoundRecord {
    pub fn n_benign(&self) -> usize {
        self.benign_models.len()
    }

    pub fn malicious_model(&self) -> Option<&ModelVector> {
        self.malicious_models.first()
    }

    /// λ of the first attacker, or 0 without attackers.
    pub fn lambda(&self) -> f64 {
        self.lambdas.first().copied().unwrap_or(0.0)
    }

    pub fn max_benign_distance(&self) -> f64 {
        self.distances[..self.n_benign()].iter().copied().fold(0.0, f64::max)
    }
}

/// Runs `config.rounds` communication rounds.
pub fn run_federation(
    config: &FederationConfig,
    train: &Dataset,
    test: &Dataset,
    attackers: &mut [Box<dyn Attacker>],
    defense: Option<&dyn Defense>,
) -> Result<Vec<RoundRecord>> {
    config.validate()?;
    if train.n_features() != test.n_features() || train.n_classes() != test.n_classes() {
        return Err(Error::Contract("train and test sets have different shapes".into()));
    }
    let shards = data::partition(train, config.n_clients, config.seed, config.partition)?;
    let sizes: Vec<usize> = shards.iter().map(|s| s.reported_size).collect();
    let train_rows: Vec<usize> = (0..train.n_samples()).collect();
    let dim = svm::shape_of(train).dim();
    let observed_count = config.eavesdrop_count.unwrap_or(config.n_clients);

    let mut global = ModelVector::zeros(dim);
    let mut records = Vec::with_capacity(config.rounds);
    for round in 1..=config.rounds {
        let benign = train_clients(config, train, &shards, &global, round)?;

        let obs = Observation {
            round,
            observed: &benign[..observed_count],
            observed_sizes: &sizes[..observed_count],
            prev_global: &global,
        };
        let mut crafted = Vec::with_capacity(attackers.len());
        for attacker in attackers.iter_mut() {
            let out = attacker.craft(&obs)?;
            if out.model.len() != dim {
                return Err(Error::Contract(format!(
                    "attacker plugin '{}' emitted a model of dimension {}, expected {dim}",
                    attacker.name(),
                    out.model.len()
                )));
            }
            if !out.model.is_finite() || out.claimed_size == 0 {
                return Err(Error::Contract(format!(
                    "attacker plugin '{}' emitted a non-finite model or zero claimed size",
                    attacker.name()
                )));
            }
            crafted.push(out);
        }

        let mut models = benign.clone();
        models.extend(crafted.iter().map(|c| c.model.clone()));
        let mut all_sizes = sizes.clone();
        all_sizes.extend(crafted.iter().map(|c| c.claimed_size));

        let (new_global, excluded) = match defense {
            None => (aggregate(&models, &all_sizes)?, vec![false; models.len()]),
            Some(d) => {
                let out = d.aggregate(&models, &all_sizes)?;
                if out.global.len() != dim || out.excluded.len() != models.len() {
                    return Err(Error::Contract(format!(
                        "defense plugin '{}' returned inconsistent output",
                        d.name()
                    )));
                }
                (out.global, out.excluded)
            }
        };

        let report = distance_report(&models, &new_global, config.detector)?;
        let local_accuracies = models
            .par_iter()
            .map(|m| svm::evaluate_accuracy(m, test))
            .collect::<Result<Vec<_>>>()?;
        let global_accuracy = svm::evaluate_accuracy(&new_global, test)?;
        let global_loss = svm::svm_loss(&new_global, train, &train_rows, config.local.mu)?;

        records.push(RoundRecord {
            round,
            benign_models: benign,
            malicious_models: crafted.iter().map(|c| c.model.clone()).collect(),
            global_model: new_global.clone(),
            lambdas: crafted.iter().map(|c| c.lambda.unwrap_or(0.0)).collect(),
            distances: report.entries.iter().map(|e| e.distance).collect(),
            flagged: report.entries.iter().map(|e| e.flagged).collect(),
            detector_threshold: report.threshold,
            excluded,
            local_accuracies,
            global_accuracy,
            global_loss,
        });
        // broadcast: every client restarts from the new global next round
        global = new_global;
    }
    Ok(records)
}

fn train_clients(
    config: &FederationConfig,
    train: &Dataset,
    shards: &[DataShard],
    global: &ModelVector,
    round: usize,
) -> Result<Vec<ModelVector>> {
    shards
        .par_iter()
        .map(|shard| {
            let stream = seed::derive(config.seed, &[round as u64, shard.owner_id as u64]);
            svm::local_train(global, train, &shard.indices, &config.local, stream)
        })
        .collect()
}

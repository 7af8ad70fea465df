//! Scenario execution: dataset loading, attacker/defense assembly, the
//! federation run and its artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use fedgae_core::attack::{GaeAttackConfig, GaeTrainConfig, MpAttacker, MpScale};
use fedgae_core::federation::{Attacker, Defense};
use fedgae_core::{
    analysis, load_cifar10, load_idx_dataset, run_federation, Dataset, DistanceDefense, FederationConfig, GaeAttacker,
    LocalTrainConfig, MultiKrumDefense, RoundRecord,
};

use crate::config::{snapshot, AttackerKind, DatasetKind, DefenseKind, MpScaleSetting, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("dataset file not found: {}", .0.display())]
    MissingData(PathBuf),
    #[error(transparent)]
    Core(#[from] fedgae_core::Error),
    #[error("cannot write {}: {source}", path.display())]
    Output { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub final_global_accuracy: f64,
    /// Rank of the attacker's distance among all participants (1 = closest),
    /// averaged over attackers and rounds. Zero without attackers.
    pub mean_attacker_distance_rank: f64,
    /// Rounds in which at least one attacker was flagged by the detector.
    pub rounds_flagged: usize,
    /// Rounds in which every attacker was no farther than the farthest benign client.
    pub rounds_stealthy: usize,
    pub rounds: usize,
}

impl Summary {
    pub fn from_records(records: &[RoundRecord]) -> Self {
        let mut rank_sum = 0.0;
        let mut rank_count = 0usize;
        let mut rounds_flagged = 0;
        let mut rounds_stealthy = 0;
        for r in records {
            let nb = r.n_benign();
            let n_att = r.distances.len() - nb;
            if n_att == 0 {
                continue;
            }
            for a in nb..r.distances.len() {
                let d = r.distances[a];
                rank_sum += 1.0 + r.distances.iter().filter(|&&x| x < d).count() as f64;
                rank_count += 1;
            }
            if r.flagged[nb..].iter().any(|&f| f) {
                rounds_flagged += 1;
            }
            let max_benign = r.max_benign_distance();
            if r.distances[nb..].iter().all(|&d| d <= max_benign) {
                rounds_stealthy += 1;
            }
        }
        Self {
            final_global_accuracy: records.last().map_or(0.0, |r| r.global_accuracy),
            mean_attacker_distance_rank: if rank_count == 0 {
                0.0
            } else {
                rank_sum / rank_count as f64
            },
            rounds_flagged,
            rounds_stealthy,
            rounds: records.len(),
        }
    }

    pub fn to_text(&self) -> String {
        format!(
            "final_global_accuracy={:.16e}\nmean_attacker_distance_rank={:.16e}\nrounds_flagged={}\nrounds_stealthy={}\nrounds={}\n",
            self.final_global_accuracy,
            self.mean_attacker_distance_rank,
            self.rounds_flagged,
            self.rounds_stealthy,
            self.rounds
        )
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioResult {
    pub records: Vec<RoundRecord>,
    pub summary: Summary,
}

fn require(path: PathBuf) -> Result<PathBuf, ScenarioError> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(ScenarioError::MissingData(path))
    }
}

/// IDX file, accepting either the plain or the `.gz` name.
fn idx_file(root: &Path, stem: &str) -> Result<PathBuf, ScenarioError> {
    let gz = root.join(format!("{stem}.gz"));
    if gz.is_file() {
        return Ok(gz);
    }
    require(root.join(stem))
}

/// Loads `(train, test)` and applies the caps. With the oracle objective
/// the probe set is carved from the training samples after the cap.
pub fn load_data(c: &RunConfig) -> Result<(Dataset, Dataset, Option<Dataset>), ScenarioError> {
    let root = &c.data_root;
    let (train, test) = match c.dataset {
        DatasetKind::Mnist | DatasetKind::FashionMnist => {
            let train = load_idx_dataset(
                &idx_file(root, "train-images-idx3-ubyte")?,
                &idx_file(root, "train-labels-idx1-ubyte")?,
            )?;
            let test = load_idx_dataset(
                &idx_file(root, "t10k-images-idx3-ubyte")?,
                &idx_file(root, "t10k-labels-idx1-ubyte")?,
            )?;
            (train, test)
        }
        DatasetKind::Cifar10 => {
            let batches = (1..=5)
                .map(|i| require(root.join(format!("data_batch_{i}.bin"))))
                .collect::<Result<Vec<_>, _>>()?;
            let test = require(root.join("test_batch.bin"))?;
            (load_cifar10(&batches)?, load_cifar10(&[test])?)
        }
    };
    let n_train = if c.train_cap == 0 {
        train.n_samples()
    } else {
        c.train_cap.min(train.n_samples())
    };
    let probe = if c.attacker == AttackerKind::Gae && c.objective == fedgae_core::attack::ObjectiveMode::Oracle {
        let end = (n_train + c.probe_size).min(train.n_samples());
        if end > n_train {
            Some(train.slice(n_train, end)?)
        } else {
            None
        }
    } else {
        None
    };
    let test_cap = if c.test_cap == 0 { test.n_samples() } else { c.test_cap };
    Ok((train.truncated(n_train), test.truncated(test_cap), probe))
}

pub fn federation_config(c: &RunConfig) -> FederationConfig {
    FederationConfig {
        n_clients: c.j,
        rounds: c.t_fl,
        local: LocalTrainConfig {
            iterations: c.t_l,
            eta: c.eta,
            mu: c.mu,
            batch_size: c.batch_size,
        },
        seed: c.seed,
        eavesdrop_count: c.eavesdrop_count,
        detector: c.detector,
        partition: c.partition,
    }
}

pub fn build_attackers(c: &RunConfig, probe: Option<&Dataset>) -> Result<Vec<Box<dyn Attacker>>, ScenarioError> {
    let mut out: Vec<Box<dyn Attacker>> = Vec::new();
    for i in 0..c.attackers {
        let seed = fedgae_core::seed::derive(c.seed, &[0xA77A, i as u64]);
        match c.attacker {
            AttackerKind::None => {}
            AttackerKind::Gae => {
                let cfg = GaeAttackConfig {
                    train: GaeTrainConfig {
                        epochs: c.gae_epochs,
                        lr: c.gae_lr,
                        probes: c.gae_probes,
                        perturbation: c.gae_perturbation,
                        laplacian: c.laplacian,
                        targets: c.target_map,
                    },
                    hidden: c.gae_hidden,
                    embed: c.gae_embed,
                    dropout: c.gae_dropout,
                    d_t: c.d_t,
                    claimed_size: c.claimed_size,
                    lambda_init: c.lambda_init,
                    dual_step: c.dual_step,
                    dual_sign: c.dual_sign,
                    mode: c.objective,
                    mu: c.mu,
                    probe: probe.cloned(),
                    seed,
                };
                out.push(Box::new(GaeAttacker::new(cfg)?));
            }
            AttackerKind::Mp => out.push(Box::new(MpAttacker {
                scale: match c.mp_scale {
                    MpScaleSetting::Spread(k) => MpScale::SpreadMultiple(k),
                    MpScaleSetting::Fixed(v) => MpScale::Fixed(v),
                },
                claimed_size: c.claimed_size,
                seed,
            })),
        }
    }
    Ok(out)
}

pub fn build_defense(c: &RunConfig, n_attackers: usize) -> Option<Box<dyn Defense>> {
    match c.defense {
        DefenseKind::None => None,
        DefenseKind::Distance => Some(Box::new(DistanceDefense {
            policy: c.detector,
            exclude: true,
        })),
        DefenseKind::MultiKrum => {
            let n = c.j + n_attackers;
            Some(Box::new(MultiKrumDefense {
                f: c.krum_f,
                m: c.krum_m.unwrap_or(n - c.krum_f),
            }))
        }
    }
}

/// Runs the scenario in memory without writing anything.
pub fn simulate(c: &RunConfig) -> Result<ScenarioResult, ScenarioError> {
    let (train, test, probe) = load_data(c)?;
    let mut attackers = build_attackers(c, probe.as_ref())?;
    let defense = build_defense(c, attackers.len());
    let records = run_federation(&federation_config(c), &train, &test, &mut attackers, defense.as_deref())?;
    let summary = Summary::from_records(&records);
    Ok(ScenarioResult { records, summary })
}

fn write(path: PathBuf, text: &str) -> Result<(), ScenarioError> {
    fs::write(&path, text).map_err(|source| ScenarioError::Output { path, source })
}

/// Runs the scenario and writes `metrics.csv`, `config.txt` and
/// `summary.txt` into `c.output_dir`.
pub fn run_scenario(c: &RunConfig) -> Result<ScenarioResult, ScenarioError> {
    let result = simulate(c)?;
    fs::create_dir_all(&c.output_dir).map_err(|source| ScenarioError::Output {
        path: c.output_dir.clone(),
        source,
    })?;
    analysis::emit_metrics(&result.records, &c.output_dir.join("metrics.csv"))?;
    write(c.output_dir.join("config.txt"), &snapshot(c))?;
    write(c.output_dir.join("summary.txt"), &result.summary.to_text())?;
    Ok(result)
}

/// Which parameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Clients,
    Eavesdrop,
}

/// One run per value, each into `output_dir/<axis>_<value>/`.
pub fn run_sweep(
    base: &RunConfig,
    axis: SweepAxis,
    values: &[usize],
) -> Result<Vec<(usize, ScenarioResult)>, ScenarioError> {
    let mut out = Vec::with_capacity(values.len());
    for &v in values {
        let mut c = base.clone();
        let dir = match axis {
            SweepAxis::Clients => {
                c.j = v;
                format!("J_{v}")
            }
            SweepAxis::Eavesdrop => {
                c.eavesdrop_count = Some(v);
                format!("eavesdrop_{v}")
            }
        };
        c.output_dir = base.output_dir.join(dir);
        out.push((v, run_scenario(&c)?));
    }
    Ok(out)
}

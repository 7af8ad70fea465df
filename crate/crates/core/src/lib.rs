//! Federated learning simulator with a graph-autoencoder model poisoning
//! attacker, distance-based detection, robust aggregation and convergence
//! analysis.
//!
//! Clients train one-vs-rest linear SVMs; models are flat [`ModelVector`]s
//! laid out as one `(weights, bias)` block per class.

pub mod aggregate;
pub mod analysis;
pub mod attack;
pub mod data;
pub mod defense;
pub mod error;
pub mod federation;
pub mod graph;
pub mod model;
pub mod seed;
pub mod svm;

pub use aggregate::{aggregate, aggregation_weights};
pub use analysis::{asymptotic_gap, convergence_bound, emit_metrics, read_metrics, BoundParams, MetricsRow, Role};
pub use attack::{GaeAttackConfig, GaeAttacker, MpAttacker, MpScale};
pub use data::{load_cifar10, load_idx_dataset, partition, DataShard, Dataset, PartitionScheme};
pub use defense::{distance_report, multi_krum, DetectorReport, DistanceDefense, MultiKrumDefense, ThresholdPolicy};
pub use error::{Error, Result};
pub use federation::{run_federation, Attacker, Defense, FederationConfig, Observation, RoundRecord};
pub use graph::{cosine_adjacency, forward_gft, inverse_gft, laplacian, spectral_basis, LaplacianKind};
pub use model::{ModelShape, ModelVector};
pub use svm::{evaluate_accuracy, local_train, svm_loss, LocalTrainConfig};

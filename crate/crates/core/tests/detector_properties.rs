mod common;

use fedgae_core::{distance_report, run_federation, FederationConfig, LocalTrainConfig, ModelVector, ThresholdPolicy};
use proptest::prelude::*;

#[test]
fn mean_plus_k_std_matches_hand_statistics() {
    let mut rng = common::rng(120);
    for _ in 0..20 {
        let models = common::random_models(&mut rng, 6, 10, 0.0);
        let global = common::random_model(&mut rng, 10, 0.0);
        let d: Vec<f64> = models
            .iter()
            .map(|m| {
                m.as_slice()
                    .iter()
                    .zip(global.as_slice())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();
        let mean = d.iter().sum::<f64>() / 6.0;
        let std = (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 6.0).sqrt();
        let tau = mean + 2.0 * std;
        let report = distance_report(&models, &global, ThresholdPolicy::MeanPlusKStd(2.0)).unwrap();
        assert!((report.threshold - tau).abs() < 1e-12);
        for (e, &di) in report.entries.iter().zip(&d) {
            assert!((e.distance - di).abs() < 1e-12);
            assert_eq!(e.flagged, di > tau);
        }
    }
}

#[test]
fn single_client_global_is_its_local_model() {
    let mut rng = common::rng(121);
    let train = common::toy_dataset(&mut rng, 30, 5, 2);
    let cfg = FederationConfig {
        n_clients: 1,
        rounds: 3,
        local: LocalTrainConfig {
            iterations: 2,
            eta: 0.1,
            mu: 0.0,
            batch_size: 0,
        },
        ..Default::default()
    };
    for r in run_federation(&cfg, &train, &train, &mut [], None).unwrap() {
        assert_eq!(r.global_model, r.benign_models[0]);
    }
}

proptest! {
    #[test]
    fn report_is_permutation_equivariant(seed in 0u64..300, shift in 1usize..6) {
        let mut rng = common::rng(5000 + seed);
        let models: Vec<ModelVector> = common::random_models(&mut rng, 6, 4, 0.0);
        let global = common::random_model(&mut rng, 4, 0.0);
        let perm: Vec<usize> = (0..6).map(|i| (i + shift) % 6).collect();
        let permuted: Vec<ModelVector> = perm.iter().map(|&i| models[i].clone()).collect();
        for policy in [ThresholdPolicy::Fixed(1.0), ThresholdPolicy::MeanPlusKStd(1.0)] {
            let a = distance_report(&models, &global, policy).unwrap();
            let b = distance_report(&permuted, &global, policy).unwrap();
            prop_assert!((a.threshold - b.threshold).abs() < 1e-12);
            for (k, &i) in perm.iter().enumerate() {
                prop_assert_eq!(a.entries[i].distance, b.entries[k].distance);
                prop_assert_eq!(a.entries[i].flagged, b.entries[k].flagged);
            }
        }
    }
}

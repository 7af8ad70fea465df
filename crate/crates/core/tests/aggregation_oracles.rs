mod common;

use fedgae_core::defense::{krum_scores, multi_krum, multi_krum_select};
use fedgae_core::{aggregate, aggregation_weights, Error, ModelVector};
use proptest::prelude::*;
use rand::Rng;

fn brute_force_weighted_sum(models: &[ModelVector], sizes: &[usize]) -> Vec<f64> {
    let total: usize = sizes.iter().sum();
    let mut out = vec![0.0; models[0].len()];
    for (m, &s) in models.iter().zip(sizes) {
        for (o, v) in out.iter_mut().zip(m.as_slice()) {
            *o += v * s as f64;
        }
    }
    out.iter().map(|v| v / total as f64).collect()
}

#[test]
fn aggregate_matches_brute_force_on_random_cases() {
    let mut rng = common::rng(1);
    for _ in 0..100 {
        let n = rng.random_range(1..=8);
        let dim = rng.random_range(1..=40);
        let models = common::random_models(&mut rng, n, dim, 0.0);
        let sizes: Vec<usize> = (0..n).map(|_| rng.random_range(1..=500)).collect();
        let got = aggregate(&models, &sizes).unwrap();
        let want = brute_force_weighted_sum(&models, &sizes);
        for (g, w) in got.as_slice().iter().zip(&want) {
            assert!((g - w).abs() <= 1e-12, "{g} vs {w}");
        }
    }
}

#[test]
fn aggregate_contract_errors() {
    let m = ModelVector::new(vec![1.0, 2.0]).unwrap();
    let empty: [ModelVector; 0] = [];
    assert!(aggregate(&empty, &[]).is_err());
    assert!(aggregate(std::slice::from_ref(&m), &[1, 2]).is_err());
    assert!(aggregate(std::slice::from_ref(&m), &[0]).is_err());
    let short = ModelVector::new(vec![1.0]).unwrap();
    assert!(aggregate(&[m, short], &[1, 1]).is_err());
}

/// Smallest sum over every `(n − f − 2)`-subset of the other models.
fn exhaustive_score(models: &[ModelVector], i: usize, f: usize) -> f64 {
    let others: Vec<usize> = (0..models.len()).filter(|&j| j != i).collect();
    let k = models.len() - f - 2;
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << others.len()) {
        if mask.count_ones() as usize != k {
            continue;
        }
        let s: f64 = others
            .iter()
            .enumerate()
            .filter(|(b, _)| mask & (1 << b) != 0)
            .map(|(_, &j)| models[i].distance(&models[j]).powi(2))
            .sum();
        best = best.min(s);
    }
    best
}

#[test]
fn multi_krum_matches_exhaustive_enumeration() {
    let mut rng = common::rng(2);
    let mut fixtures = 0;
    for n in 3..=7 {
        for f in 0..=(n - 3) {
            for m in 1..=(n - f) {
                for rep in 0..3 {
                    let dim = 1 + rep * 3;
                    let mut models = common::random_models(&mut rng, n, dim, 0.0);
                    if rep == 2 {
                        // one far outlier
                        models[n - 1] = common::random_model(&mut rng, dim, 25.0);
                    }
                    let scores = krum_scores(&models, f).unwrap();
                    let expected: Vec<f64> = (0..n).map(|i| exhaustive_score(&models, i, f)).collect();
                    for (s, e) in scores.iter().zip(&expected) {
                        assert!((s - e).abs() <= 1e-9 * e.abs().max(1.0));
                    }
                    let mut order: Vec<usize> = (0..n).collect();
                    order.sort_by(|&a, &b| expected[a].total_cmp(&expected[b]).then(a.cmp(&b)));
                    let mut chosen = order[..m].to_vec();
                    chosen.sort_unstable();
                    assert_eq!(multi_krum_select(&models, f, m).unwrap(), chosen);

                    let mean: Vec<f64> = (0..dim)
                        .map(|d| chosen.iter().map(|&i| models[i][d]).sum::<f64>() / m as f64)
                        .collect();
                    let got = multi_krum(&models, f, m).unwrap();
                    for (g, w) in got.as_slice().iter().zip(&mean) {
                        assert!((g - w).abs() <= 1e-12);
                    }
                    fixtures += 1;
                }
            }
        }
    }
    assert!(fixtures > 100);
}

#[test]
fn multi_krum_rejects_small_inputs() {
    let ms = vec![ModelVector::zeros(2); 3];
    assert!(matches!(multi_krum(&ms, 1, 1), Err(Error::Config(_))));
    assert!(multi_krum(&ms, 0, 1).is_ok());
}

proptest! {
    #[test]
    fn aggregation_weights_are_a_distribution(sizes in prop::collection::vec(1usize..10_000, 1..20)) {
        let w = aggregation_weights(&sizes).unwrap();
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(w.iter().all(|&v| v > 0.0 && v <= 1.0));
    }

    #[test]
    fn aggregate_of_identical_models_is_that_model(
        values in prop::collection::vec(-100.0f64..100.0, 1..30),
        sizes in prop::collection::vec(1usize..1000, 1..6),
    ) {
        let m = ModelVector::new(values).unwrap();
        let models = vec![m.clone(); sizes.len()];
        let g = aggregate(&models, &sizes).unwrap();
        for (a, b) in g.as_slice().iter().zip(m.as_slice()) {
            prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn multi_krum_ignores_input_order(seed in 0u64..1000, n in 4usize..8) {
        let mut rng = common::rng(1000 + seed);
        let models = common::random_models(&mut rng, n, 5, 0.0);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.rotate_left((seed as usize) % n);
        let permuted: Vec<ModelVector> = perm.iter().map(|&i| models[i].clone()).collect();
        let a = multi_krum(&models, 1, 2).unwrap();
        let b = multi_krum(&permuted, 1, 2).unwrap();
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }
}

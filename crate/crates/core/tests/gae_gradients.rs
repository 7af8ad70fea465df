mod common;

use fedgae_core::attack::{decode, gcn_backprop, gcn_forward, recon_loglik, recon_loglik_grad, GaeModel, TargetMap};
use fedgae_core::cosine_adjacency;
use nalgebra::DMatrix;
use rand::Rng;

const STEP: f64 = 1e-6;
const MAX_REL_ERR: f64 = 1e-4;

/// `max |analytic − numeric| / max(‖numeric‖∞, 1e-8)`.
fn rel_err(analytic: &DMatrix<f64>, numeric: &DMatrix<f64>) -> f64 {
    (analytic - numeric).amax() / numeric.amax().max(1e-8)
}

#[test]
fn reconstruction_gradient_matches_central_differences() {
    let mut rng = common::rng(50);
    let mut worst: f64 = 0.0;
    for case in 0..20 {
        let j = 2 + case % 5;
        let d = rng.random_range(3..=9);
        let (h, e) = (rng.random_range(2..=5), rng.random_range(1..=3));
        let models = common::random_models(&mut rng, j, d, 0.8);
        let a = cosine_adjacency(&models).unwrap().a;
        let z0 = common::random_matrix(&mut rng, j, d, 1.0);
        let targets = if case % 2 == 0 {
            TargetMap::Clamp
        } else {
            TargetMap::Shift
        }
        .apply(&a);
        let gae = GaeModel {
            w1: common::random_matrix(&mut rng, d, h, 0.8),
            w2: common::random_matrix(&mut rng, h, e, 0.8),
            dropout: 0.0,
        };
        let mask =
            (case % 3 == 0).then(|| DMatrix::from_fn(j, h, |_, _| if rng.random::<f64>() < 0.2 { 0.0 } else { 1.25 }));

        let phi = |g: &GaeModel| {
            let c = gcn_forward(g, &a, &z0, mask.as_ref()).unwrap();
            recon_loglik(&decode(&c.z2).a_hat, &targets)
        };
        let cache = gcn_forward(&gae, &a, &z0, mask.as_ref()).unwrap();
        let up = recon_loglik_grad(&decode(&cache.z2).a_hat, &targets);
        let grads = gcn_backprop(&gae, &cache, &up).unwrap();

        let mut num_w1 = DMatrix::zeros(d, h);
        for k in 0..gae.w1.len() {
            let (mut p, mut m) = (gae.clone(), gae.clone());
            p.w1[k] += STEP;
            m.w1[k] -= STEP;
            num_w1[k] = (phi(&p) - phi(&m)) / (2.0 * STEP);
        }
        let mut num_w2 = DMatrix::zeros(h, e);
        for k in 0..gae.w2.len() {
            let (mut p, mut m) = (gae.clone(), gae.clone());
            p.w2[k] += STEP;
            m.w2[k] -= STEP;
            num_w2[k] = (phi(&p) - phi(&m)) / (2.0 * STEP);
        }
        worst = worst.max(rel_err(&grads.w1, &num_w1)).max(rel_err(&grads.w2, &num_w2));
    }
    assert!(worst <= MAX_REL_ERR, "max relative error {worst:e}");
}

#[test]
fn decoder_output_is_symmetric_probabilities() {
    let mut rng = common::rng(51);
    for _ in 0..50 {
        let j = rng.random_range(1..8);
        let z = common::random_matrix(&mut rng, j, 4, 1.0);
        let a_hat = decode(&z).a_hat;
        assert_eq!(a_hat, a_hat.transpose());
        assert!(a_hat.iter().all(|&p| p > 0.0 && p < 1.0));
        let t = TargetMap::Clamp.apply(&common::random_matrix(&mut rng, j, j, 1.0));
        assert!(recon_loglik(&a_hat, &t).is_finite());
    }
}

//! Malicious model synthesis from a reconstructed graph, and per-round
//! adversarial training of the GAE.
//!
//! The objective `L(ω^a(W), λ) − φ(W)` is ascended. The `−φ` part gets exact
//! gradients through the encoder. The `L` part passes through an
//! eigendecomposition and an argmax over rows, so its gradient is estimated
//! with two-point simultaneous perturbations of all encoder weights.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{self, LaplacianKind, SpectralFeatures};
use crate::model::ModelVector;
use crate::seed;

use super::dual::DualState;
use super::gcn::{self, GaeGradients, GaeModel, TargetMap};
use super::objective::PreparedContext;

#[derive(Debug, Clone, PartialEq)]
pub struct Synthesis {
    /// Row of `𝓕̂` that was selected.
    pub row: usize,
    pub model: ModelVector,
    /// Lagrangian value of the selected row.
    pub objective: f64,
    /// Distance to the contaminated global model.
    pub distance: f64,
}

/// `L̂ = diag(Â) − Â`, `B̂` from `L̂`, `𝓕̂ = B̂S`; returns the row of `𝓕̂`
/// with the largest Lagrangian (ties to the lowest row).
pub fn synthesize_malicious(
    a_hat: &DMatrix<f64>,
    s: &SpectralFeatures,
    dual: &DualState,
    ctx: &PreparedContext<'_>,
    kind: LaplacianKind,
) -> Result<Synthesis> {
    let l_hat = graph::laplacian(a_hat, kind)?;
    let basis_hat = graph::spectral_basis(&l_hat)?;
    let f_hat = graph::inverse_gft(&basis_hat, s)?;
    let mut best: Option<Synthesis> = None;
    for row in 0..f_hat.rows() {
        let model = f_hat.row_model(row);
        let (objective, distance) = ctx.evaluate(&model, dual)?;
        if best.as_ref().is_none_or(|b| objective > b.objective) {
            best = Some(Synthesis {
                row,
                model,
                objective,
                distance,
            });
        }
    }
    best.ok_or_else(|| Error::Contract("no rows to synthesize from".into()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaeTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Two-point perturbation probes per epoch.
    pub probes: usize,
    /// Perturbation radius of each probe.
    pub perturbation: f64,
    pub laplacian: LaplacianKind,
    pub targets: TargetMap,
}

impl Default for GaeTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            lr: 0.01,
            probes: 4,
            perturbation: 1e-3,
            laplacian: LaplacianKind::Degree,
            targets: TargetMap::Clamp,
        }
    }
}

/// Adam moments for the encoder weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    m: GaeGradients,
    v: GaeGradients,
    t: i32,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(gae: &GaeModel) -> Self {
        Self {
            m: GaeGradients::zeros_like(gae),
            v: GaeGradients::zeros_like(gae),
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// Gradient-ascent step.
    pub fn ascend(&mut self, gae: &mut GaeModel, grad: &GaeGradients, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let update = |w: &mut DMatrix<f64>, m: &mut DMatrix<f64>, v: &mut DMatrix<f64>, g: &DMatrix<f64>| {
            for k in 0..w.len() {
                m[k] = b1 * m[k] + (1.0 - b1) * g[k];
                v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
                w[k] += lr * (m[k] / c1) / ((v[k] / c2).sqrt() + eps);
            }
        };
        update(&mut gae.w1, &mut self.m.w1, &mut self.v.w1, &grad.w1);
        update(&mut gae.w2, &mut self.m.w2, &mut self.v.w2, &grad.w2);
    }
}

/// Graph inputs of one round.
#[derive(Debug, Clone)]
pub struct GraphInputs {
    /// Cosine adjacency of the observed models.
    pub a: DMatrix<f64>,
    /// Row-normalized feature matrix, the encoder input.
    pub z0: DMatrix<f64>,
    /// Spectral features `S = Bᵀ𝓕` of the observed models.
    pub s: SpectralFeatures,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome {
    pub synthesis: Synthesis,
    /// Composite objective `L − φ` before the first update and after each epoch.
    pub objective_trace: Vec<f64>,
    pub a_hat: DMatrix<f64>,
}

struct Evaluated {
    synthesis: Synthesis,
    phi: f64,
    a_hat: DMatrix<f64>,
}

fn evaluate(
    gae: &GaeModel,
    inputs: &GraphInputs,
    targets: &DMatrix<f64>,
    dual: &DualState,
    ctx: &PreparedContext<'_>,
    kind: LaplacianKind,
) -> Result<Evaluated> {
    let cache = gcn::gcn_forward(gae, &inputs.a, &inputs.z0, None)?;
    let a_hat = gcn::decode(&cache.z2).a_hat;
    let phi = gcn::recon_loglik(&a_hat, targets);
    let synthesis = synthesize_malicious(&a_hat, &inputs.s, dual, ctx, kind)?;
    Ok(Evaluated { synthesis, phi, a_hat })
}

fn lagrangian_at(
    gae: &GaeModel,
    inputs: &GraphInputs,
    dual: &DualState,
    ctx: &PreparedContext<'_>,
    kind: LaplacianKind,
) -> Result<f64> {
    let cache = gcn::gcn_forward(gae, &inputs.a, &inputs.z0, None)?;
    let a_hat = gcn::decode(&cache.z2).a_hat;
    Ok(synthesize_malicious(&a_hat, &inputs.s, dual, ctx, kind)?.objective)
}

fn rademacher<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 })
}

/// Simultaneous-perturbation estimate of `∂L/∂W`, averaged over probes
/// evaluated and reduced in probe order.
fn spsa_gradient<R: Rng>(
    gae: &GaeModel,
    inputs: &GraphInputs,
    dual: &DualState,
    ctx: &PreparedContext<'_>,
    cfg: &GaeTrainConfig,
    rng: &mut R,
) -> Result<GaeGradients> {
    let mut grad = GaeGradients::zeros_like(gae);
    let c = cfg.perturbation;
    for _ in 0..cfg.probes {
        let d1 = rademacher(gae.w1.nrows(), gae.w1.ncols(), rng);
        let d2 = rademacher(gae.w2.nrows(), gae.w2.ncols(), rng);
        let mut plus = gae.clone();
        plus.w1 += &d1 * c;
        plus.w2 += &d2 * c;
        let mut minus = gae.clone();
        minus.w1 -= &d1 * c;
        minus.w2 -= &d2 * c;
        let lp = lagrangian_at(&plus, inputs, dual, ctx, cfg.laplacian)?;
        let lm = lagrangian_at(&minus, inputs, dual, ctx, cfg.laplacian)?;
        let scale = (lp - lm) / (2.0 * c * cfg.probes as f64);
        grad.w1 += d1 * scale;
        grad.w2 += d2 * scale;
    }
    Ok(grad)
}

/// Trains the encoder for `cfg.epochs` epochs on `L − φ` and returns the
/// malicious model synthesised from the final weights.
#[allow(clippy::too_many_arguments)]
pub fn train_gae_round(
    gae: &mut GaeModel,
    adam: &mut Adam,
    inputs: &GraphInputs,
    dual: &DualState,
    ctx: &PreparedContext<'_>,
    cfg: &GaeTrainConfig,
    stream_seed: u64,
) -> Result<RoundOutcome> {
    if cfg.epochs == 0 || cfg.probes == 0 {
        return Err(Error::Config(
            "GAE training needs at least one epoch and one probe".into(),
        ));
    }
    if !cfg.lr.is_finite() || cfg.lr < 0.0 || cfg.perturbation.is_nan() || cfg.perturbation <= 0.0 {
        return Err(Error::Config(
            "GAE learning rate and perturbation must be positive".into(),
        ));
    }
    let targets = cfg.targets.apply(&inputs.a);
    let mut rng = seed::rng(stream_seed, &[seed::GAE_EPOCH]);

    let first = evaluate(gae, inputs, &targets, dual, ctx, cfg.laplacian)?;
    let mut trace = vec![first.synthesis.objective - first.phi];
    let mut last = first;
    for epoch in 0..cfg.epochs {
        let mask = gae.dropout_mask(inputs.a.nrows(), &mut rng);
        let cache = gcn::gcn_forward(gae, &inputs.a, &inputs.z0, mask.as_ref())?;
        let a_hat = gcn::decode(&cache.z2).a_hat;
        // ascend −φ
        let upstream = -gcn::recon_loglik_grad(&a_hat, &targets);
        let mut grad = gcn::gcn_backprop(gae, &cache, &upstream)?;
        let zo = spsa_gradient(gae, inputs, dual, ctx, cfg, &mut rng)?;
        grad.w1 += zo.w1;
        grad.w2 += zo.w2;
        adam.ascend(gae, &grad, cfg.lr);
        if !gae.is_finite() {
            return Err(Error::Numeric(format!("GAE weights diverged at epoch {}", epoch + 1)));
        }
        last = evaluate(gae, inputs, &targets, dual, ctx, cfg.laplacian)?;
        let value = last.synthesis.objective - last.phi;
        if !value.is_finite() {
            return Err(Error::Numeric(format!("objective not finite at epoch {}", epoch + 1)));
        }
        trace.push(value);
    }
    Ok(RoundOutcome {
        synthesis: last.synthesis,
        objective_trace: trace,
        a_hat: last.a_hat,
    })
}

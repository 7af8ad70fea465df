//! Two-layer GCN encoder with an inner-product decoder, the Bernoulli
//! reconstruction log-likelihood, and exact gradients of that path.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};

/// Encoder weights. The decoder has no parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GaeModel {
    /// `D_model × h`
    pub w1: DMatrix<f64>,
    /// `h × e`
    pub w2: DMatrix<f64>,
    /// Dropout probability on the hidden layer while training.
    pub dropout: f64,
}

impl GaeModel {
    /// Glorot-uniform initialisation.
    pub fn init<R: Rng>(input: usize, hidden: usize, embed: usize, dropout: f64, rng: &mut R) -> Result<Self> {
        if input == 0 || hidden == 0 || embed == 0 {
            return Err(Error::Config(format!(
                "GAE dimensions must be positive (input {input}, hidden {hidden}, embed {embed})"
            )));
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::Config(format!("dropout {dropout} outside [0, 1)")));
        }
        let glorot = |rows: usize, cols: usize, rng: &mut R| {
            let limit = (6.0 / (rows + cols) as f64).sqrt();
            DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-limit..limit))
        };
        let w1 = glorot(input, hidden, rng);
        let w2 = glorot(hidden, embed, rng);
        Ok(Self { w1, w2, dropout })
    }

    pub fn input_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn embed_dim(&self) -> usize {
        self.w2.ncols()
    }

    pub fn is_finite(&self) -> bool {
        self.w1.iter().chain(self.w2.iter()).all(|v| v.is_finite())
    }

    /// Inverted-dropout mask for the hidden layer: entries are 0 or `1/(1-p)`.
    pub fn dropout_mask<R: Rng>(&self, nodes: usize, rng: &mut R) -> Option<DMatrix<f64>> {
        if self.dropout == 0.0 {
            return None;
        }
        let keep = 1.0 - self.dropout;
        Some(DMatrix::from_fn(nodes, self.hidden_dim(), |_, _| {
            if rng.random::<f64>() < keep {
                1.0 / keep
            } else {
                0.0
            }
        }))
    }
}

/// `D̄^{-1/2} (A + I) D̄^{-1/2}` with `D̄` the row sums of `A + I`.
pub fn normalize_adjacency(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if n == 0 || a.ncols() != n {
        return Err(Error::Contract(format!(
            "adjacency must be square and non-empty, got {}x{}",
            n,
            a.ncols()
        )));
    }
    let tilde = a + DMatrix::<f64>::identity(n, n);
    let mut inv_sqrt = Vec::with_capacity(n);
    for r in 0..n {
        let deg = tilde.row(r).sum();
        if deg <= 0.0 || !deg.is_finite() {
            return Err(Error::Degenerate(format!(
                "node {r} has non-positive degree {deg} after adding self-loops"
            )));
        }
        inv_sqrt.push(1.0 / deg.sqrt());
    }
    let mut out = DMatrix::from_fn(n, n, |r, c| inv_sqrt[r] * tilde[(r, c)] * inv_sqrt[c]);
    // Enforce exact symmetry.
    for r in 0..n {
        for c in r + 1..n {
            let v = 0.5 * (out[(r, c)] + out[(c, r)]);
            out[(r, c)] = v;
            out[(c, r)] = v;
        }
    }
    Ok(out)
}

/// Intermediates of one encoder pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub norm_adj: DMatrix<f64>,
    /// `N Z⁰`
    pub nz0: DMatrix<f64>,
    pub p1: DMatrix<f64>,
    pub mask: Option<DMatrix<f64>>,
    /// `ReLU(P¹)` after the dropout mask.
    pub z1: DMatrix<f64>,
    /// `N Z¹`
    pub nz1: DMatrix<f64>,
    pub z2: DMatrix<f64>,
}

impl ForwardCache {
    pub fn embedding(&self) -> &DMatrix<f64> {
        &self.z2
    }
}

/// `Z¹ = ReLU(N Z⁰ W¹)` (masked), `Z² = tanh(N Z¹ W²)`.
pub fn gcn_forward(
    gae: &GaeModel,
    a: &DMatrix<f64>,
    z0: &DMatrix<f64>,
    mask: Option<&DMatrix<f64>>,
) -> Result<ForwardCache> {
    let j = a.nrows();
    if z0.nrows() != j || z0.ncols() != gae.input_dim() {
        return Err(Error::Contract(format!(
            "encoder input is {}x{}, expected {j}x{}",
            z0.nrows(),
            z0.ncols(),
            gae.input_dim()
        )));
    }
    if let Some(m) = mask {
        if m.shape() != (j, gae.hidden_dim()) {
            return Err(Error::Contract("dropout mask has the wrong shape".into()));
        }
    }
    let norm_adj = normalize_adjacency(a)?;
    let nz0 = &norm_adj * z0;
    let p1 = &nz0 * &gae.w1;
    let mut z1 = p1.map(|v| v.max(0.0));
    if let Some(m) = mask {
        z1.component_mul_assign(m);
    }
    let nz1 = &norm_adj * &z1;
    let z2 = (&nz1 * &gae.w2).map(f64::tanh);
    Ok(ForwardCache {
        norm_adj,
        nz0,
        p1,
        mask: mask.cloned(),
        z1,
        nz1,
        z2,
    })
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Decoder output: edge probabilities in `(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructedGraph {
    pub a_hat: DMatrix<f64>,
}

/// `Â = sigmoid(Z Zᵀ)`.
pub fn decode(z: &DMatrix<f64>) -> ReconstructedGraph {
    let gram = z * z.transpose();
    let n = gram.nrows();
    let mut a_hat = gram.map(sigmoid);
    for r in 0..n {
        for c in r + 1..n {
            a_hat[(c, r)] = a_hat[(r, c)];
        }
    }
    ReconstructedGraph { a_hat }
}

/// Maps cosine similarities in `[-1, 1]` to Bernoulli edge targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TargetMap {
    /// `clamp(a, 0, 1)`
    #[default]
    Clamp,
    /// `(a + 1) / 2`
    Shift,
}

impl TargetMap {
    pub fn apply(self, a: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            TargetMap::Clamp => a.map(|v| v.clamp(0.0, 1.0)),
            TargetMap::Shift => a.map(|v| ((v + 1.0) / 2.0).clamp(0.0, 1.0)),
        }
    }
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// `φ = Σ_{j,j'} [ā log Â + (1 − ā) log(1 − Â)]` (always ≤ 0).
pub fn recon_loglik(a_hat: &DMatrix<f64>, targets: &DMatrix<f64>) -> f64 {
    a_hat
        .iter()
        .zip(targets.iter())
        .map(|(&p, &t)| {
            let p = clamp_prob(p);
            let mut v = 0.0;
            if t > 0.0 {
                v += t * p.ln();
            }
            if t < 1.0 {
                v += (1.0 - t) * (1.0 - p).ln();
            }
            v
        })
        .sum()
}

/// `∂φ/∂Â`, entrywise.
pub fn recon_loglik_grad(a_hat: &DMatrix<f64>, targets: &DMatrix<f64>) -> DMatrix<f64> {
    a_hat.zip_map(targets, |p, t| {
        let p = clamp_prob(p);
        t / p - (1.0 - t) / (1.0 - p)
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaeGradients {
    pub w1: DMatrix<f64>,
    pub w2: DMatrix<f64>,
}

impl GaeGradients {
    pub fn zeros_like(gae: &GaeModel) -> Self {
        Self {
            w1: DMatrix::zeros(gae.w1.nrows(), gae.w1.ncols()),
            w2: DMatrix::zeros(gae.w2.nrows(), gae.w2.ncols()),
        }
    }
}

/// Chain rule from an upstream gradient `∂obj/∂Â` back to `W¹`, `W²`.
pub fn gcn_backprop(gae: &GaeModel, cache: &ForwardCache, d_ahat: &DMatrix<f64>) -> Result<GaeGradients> {
    let j = cache.z2.nrows();
    if d_ahat.shape() != (j, j) {
        return Err(Error::Contract(
            "upstream gradient shape does not match the graph".into(),
        ));
    }
    if cache.nz0.ncols() != gae.input_dim()
        || cache.z1.ncols() != gae.hidden_dim()
        || cache.z2.ncols() != gae.embed_dim()
    {
        return Err(Error::Contract("forward cache does not belong to these weights".into()));
    }
    let a_hat = decode(&cache.z2).a_hat;
    // Â = σ(Q), Q = Z² Z²ᵀ
    let d_q = d_ahat.zip_map(&a_hat, |g, p| g * p * (1.0 - p));
    let d_z2 = (&d_q + d_q.transpose()) * &cache.z2;
    let d_p2 = d_z2.zip_map(&cache.z2, |g, z| g * (1.0 - z * z));
    let dw2 = cache.nz1.tr_mul(&d_p2);
    let mut d_z1 = cache.norm_adj.tr_mul(&d_p2) * gae.w2.transpose();
    if let Some(m) = &cache.mask {
        d_z1.component_mul_assign(m);
    }
    let d_p1 = d_z1.zip_map(&cache.p1, |g, p| if p > 0.0 { g } else { 0.0 });
    let dw1 = cache.nz0.tr_mul(&d_p1);
    Ok(GaeGradients { w1: dw1, w2: dw2 })
}

/// Rows scaled to unit Euclidean norm (zero rows stay zero).
pub fn row_normalize(f: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = f.clone();
    for mut row in out.row_iter_mut() {
        let n = row.norm();
        if n > 0.0 {
            row /= n;
        }
    }
    out
}

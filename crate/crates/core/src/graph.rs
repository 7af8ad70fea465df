//! Similarity graph over local models and its graph Fourier transform.
//!
//! The Laplacian of the cosine graph is symmetric but may be indefinite when
//! some cosines are negative, so the GFT basis comes from a symmetric
//! eigendecomposition `L = B Λ Bᵀ`. `sigma = |Λ|` (the singular values) orders
//! the columns; the signed eigenvalues are kept so that `B Λ Bᵀ` reproduces
//! `L` exactly.

use std::borrow::Borrow;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::model::ModelVector;

const SYMMETRY_TOL: f64 = 1e-9;
const ZERO_OPERATOR_TOL: f64 = 1e-14;
const SIGN_TIE_TOL: f64 = 1e-12;

/// Pairwise cosine similarities of the benign local models.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityGraph {
    pub a: DMatrix<f64>,
}

impl SimilarityGraph {
    pub fn size(&self) -> usize {
        self.a.nrows()
    }
}

/// Models stacked as rows (J × D).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix(pub DMatrix<f64>);

impl FeatureMatrix {
    pub fn from_models<M: Borrow<ModelVector>>(models: &[M]) -> Result<Self> {
        if models.is_empty() {
            return Err(Error::Contract("feature matrix needs at least one model".into()));
        }
        let dim = models[0].borrow().len();
        for (i, m) in models.iter().enumerate() {
            m.borrow().check_dim(dim, &format!("feature row {i}"))?;
        }
        Ok(Self(DMatrix::from_fn(models.len(), dim, |r, c| models[r].borrow()[c])))
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn row_model(&self, r: usize) -> ModelVector {
        ModelVector::from_vec_unchecked(self.0.row(r).iter().copied().collect())
    }
}

/// Spectral-domain features `S = Bᵀ𝓕`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralFeatures(pub DMatrix<f64>);

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralBasis {
    /// Orthonormal GFT basis, one eigenvector per column.
    pub b: DMatrix<f64>,
    /// Non-increasing magnitudes of the eigenvalues.
    pub sigma: DVector<f64>,
    /// Signed eigenvalues in the same column order as `b`.
    pub eigenvalues: DVector<f64>,
}

impl SpectralBasis {
    pub fn identity(n: usize) -> Self {
        Self {
            b: DMatrix::identity(n, n),
            sigma: DVector::zeros(n),
            eigenvalues: DVector::zeros(n),
        }
    }

    pub fn size(&self) -> usize {
        self.b.nrows()
    }

    /// `B Λ Bᵀ`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.b * DMatrix::from_diagonal(&self.eigenvalues) * self.b.transpose()
    }
}

/// How the "degree" term of `L = diag(A) − A` is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LaplacianKind {
    /// Row-sum degree matrix (combinatorial Laplacian).
    #[default]
    Degree,
    /// Literal diagonal of `A`.
    Elementwise,
}

pub fn cosine_adjacency<M: Borrow<ModelVector>>(models: &[M]) -> Result<SimilarityGraph> {
    let j = models.len();
    if j < 2 {
        return Err(Error::Contract(format!(
            "cosine adjacency needs at least 2 models, got {j}"
        )));
    }
    let dim = models[0].borrow().len();
    let mut norms = Vec::with_capacity(j);
    for (i, m) in models.iter().enumerate() {
        let m = m.borrow();
        m.check_dim(dim, &format!("cosine adjacency input {i}"))?;
        let n = m.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::Degenerate(format!(
                "model of client {i} has norm {n}; cosine similarity undefined"
            )));
        }
        norms.push(n);
    }
    let mut a = DMatrix::identity(j, j);
    for r in 0..j {
        for c in r + 1..j {
            let cos = models[r].borrow().dot(models[c].borrow()) / (norms[r] * norms[c]);
            let cos = cos.clamp(-1.0, 1.0);
            a[(r, c)] = cos;
            a[(c, r)] = cos;
        }
    }
    Ok(SimilarityGraph { a })
}

fn check_square_symmetric(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::Contract(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let scale = m.amax().max(1.0);
    for r in 0..m.nrows() {
        for c in r + 1..m.ncols() {
            if (m[(r, c)] - m[(c, r)]).abs() > SYMMETRY_TOL * scale {
                return Err(Error::Contract(format!("{what} is not symmetric at ({r}, {c})")));
            }
        }
    }
    Ok(())
}

pub fn laplacian(a: &DMatrix<f64>, kind: LaplacianKind) -> Result<DMatrix<f64>> {
    check_square_symmetric(a, "adjacency")?;
    let n = a.nrows();
    let mut l = -a.clone();
    for r in 0..n {
        l[(r, r)] += match kind {
            LaplacianKind::Degree => a.row(r).sum(),
            LaplacianKind::Elementwise => a[(r, r)],
        };
    }
    Ok(l)
}

/// Flips each column so its largest-magnitude entry is positive; among
/// entries tied in magnitude the lowest row index decides.
fn apply_sign_convention(b: &mut DMatrix<f64>) {
    for c in 0..b.ncols() {
        let max = b.column(c).amax();
        let pivot = b
            .column(c)
            .iter()
            .position(|v| v.abs() >= max - SIGN_TIE_TOL)
            .unwrap_or(0);
        if b[(pivot, c)] < 0.0 {
            b.column_mut(c).neg_mut();
        }
    }
}

pub fn spectral_basis(l: &DMatrix<f64>) -> Result<SpectralBasis> {
    check_square_symmetric(l, "Laplacian")?;
    let n = l.nrows();
    if n == 0 {
        return Err(Error::Contract("empty Laplacian".into()));
    }
    if l.amax() <= ZERO_OPERATOR_TOL {
        return Ok(SpectralBasis::identity(n));
    }
    if l.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("Laplacian has non-finite entries".into()));
    }
    let eig = SymmetricEigen::try_new(l.clone(), 1e-15, 10_000)
        .ok_or_else(|| Error::Numeric("symmetric eigendecomposition did not converge".into()))?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| {
        eig.eigenvalues[y]
            .abs()
            .total_cmp(&eig.eigenvalues[x].abs())
            .then(x.cmp(&y))
    });
    let mut b = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    apply_sign_convention(&mut b);
    let eigenvalues = DVector::from_fn(n, |c, _| eig.eigenvalues[order[c]]);
    let sigma = eigenvalues.map(f64::abs);
    Ok(SpectralBasis { b, sigma, eigenvalues })
}

/// `S = B⁻¹𝓕 = Bᵀ𝓕`.
pub fn forward_gft(basis: &SpectralBasis, f: &FeatureMatrix) -> Result<SpectralFeatures> {
    if basis.size() != f.rows() {
        return Err(Error::Contract(format!(
            "basis of size {} cannot transform {} model rows",
            basis.size(),
            f.rows()
        )));
    }
    Ok(SpectralFeatures(basis.b.tr_mul(&f.0)))
}

/// `𝓕̂ = B̂ S`.
pub fn inverse_gft(basis: &SpectralBasis, s: &SpectralFeatures) -> Result<FeatureMatrix> {
    if basis.size() != s.0.nrows() {
        return Err(Error::Contract(format!(
            "basis of size {} cannot synthesize from {} spectral rows",
            basis.size(),
            s.0.nrows()
        )));
    }
    let f = &basis.b * &s.0;
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("inverse GFT produced non-finite entries".into()));
    }
    Ok(FeatureMatrix(f))
}

#[cfg(test)]
mod tests {
    use nalgebra::dmatrix;

    use super::*;

    fn mv(v: &[f64]) -> ModelVector {
        ModelVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn cosine_cases() {
        let g = cosine_adjacency(&[mv(&[1.0, 2.0]), mv(&[1.0, 2.0])]).unwrap();
        assert!((g.a.clone() - dmatrix![1.0, 1.0; 1.0, 1.0]).amax() < 1e-15);
        let g = cosine_adjacency(&[mv(&[1.0, 0.0]), mv(&[0.0, 1.0])]).unwrap();
        assert_eq!(g.a[(0, 1)], 0.0);
        let g = cosine_adjacency(&[mv(&[1.0, 1.0]), mv(&[1.0, 0.0])]).unwrap();
        assert!((g.a[(0, 1)] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn cosine_errors() {
        let err = cosine_adjacency(&[mv(&[1.0]), mv(&[0.0])]).unwrap_err();
        assert!(matches!(err, Error::Degenerate(ref m) if m.contains("client 1")));
        assert!(cosine_adjacency(&[mv(&[1.0])]).is_err());
    }

    #[test]
    fn laplacian_cases() {
        let l = laplacian(&dmatrix![1.0, 1.0; 1.0, 1.0], LaplacianKind::Degree).unwrap();
        assert_eq!(l, dmatrix![1.0, -1.0; -1.0, 1.0]);
        let l = laplacian(&DMatrix::identity(2, 2), LaplacianKind::Degree).unwrap();
        assert_eq!(l, DMatrix::zeros(2, 2));
        let l = laplacian(&dmatrix![1.0, 0.5; 0.5, 1.0], LaplacianKind::Elementwise).unwrap();
        assert_eq!(l, dmatrix![0.0, -0.5; -0.5, 0.0]);
        assert!(laplacian(&dmatrix![1.0, 0.5; 0.4, 1.0], LaplacianKind::Degree).is_err());
    }

    #[test]
    fn zero_laplacian_gives_identity_basis() {
        let basis = spectral_basis(&DMatrix::zeros(3, 3)).unwrap();
        assert_eq!(basis.b, DMatrix::identity(3, 3));
        assert_eq!(basis.sigma, DVector::zeros(3));
    }

    #[test]
    fn two_node_path_by_hand() {
        // Eigenpairs of [[1,-1],[-1,1]]: 2 ↔ (1,-1)/√2, 0 ↔ (1,1)/√2.
        let basis = spectral_basis(&dmatrix![1.0, -1.0; -1.0, 1.0]).unwrap();
        assert!((basis.sigma[0] - 2.0).abs() < 1e-12);
        assert!(basis.sigma[1].abs() < 1e-12);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        // |entries| tie, so the lowest row index is made positive.
        assert!((basis.b[(0, 0)] - h).abs() < 1e-12);
        assert!((basis.b[(1, 0)] + h).abs() < 1e-12);
        assert!((basis.b[(0, 1)] - h).abs() < 1e-12);
        assert!((basis.b[(1, 1)] - h).abs() < 1e-12);
    }

    #[test]
    fn gft_identity_basis_and_zero_features() {
        let f = FeatureMatrix(dmatrix![1.0, 2.0, 3.0; 4.0, 5.0, 6.0]);
        let id = SpectralBasis::identity(2);
        assert_eq!(forward_gft(&id, &f).unwrap().0, f.0);
        let s = SpectralFeatures(DMatrix::zeros(2, 3));
        assert_eq!(inverse_gft(&id, &s).unwrap().0, DMatrix::zeros(2, 3));
    }

    #[test]
    fn gft_rotation_by_hand() {
        // B = [[a, b], [-b, a]] with a = 0.6, b = 0.8.
        let basis = SpectralBasis {
            b: dmatrix![0.6, 0.8; -0.8, 0.6],
            sigma: DVector::zeros(2),
            eigenvalues: DVector::zeros(2),
        };
        let f = FeatureMatrix(dmatrix![1.0, 0.0; 2.0, 1.0]);
        // Bᵀ = [[0.6, -0.8], [0.8, 0.6]]
        let s = forward_gft(&basis, &f).unwrap();
        let expected = dmatrix![0.6 - 1.6, -0.8; 0.8 + 1.2, 0.6];
        assert!((s.0 - expected).amax() < 1e-15);
    }

    #[test]
    fn inverse_three_by_three_by_hand() {
        let basis = SpectralBasis {
            b: dmatrix![1.0, 2.0, 0.0; 0.0, 1.0, 3.0; 1.0, 0.0, 1.0],
            sigma: DVector::zeros(3),
            eigenvalues: DVector::zeros(3),
        };
        let s = SpectralFeatures(dmatrix![1.0, -1.0; 2.0, 0.5; 0.0, 4.0]);
        let f = inverse_gft(&basis, &s).unwrap();
        // Row by row: [1+4+0, -1+1+0], [0+2+0, 0+0.5+12], [1+0+0, -1+0+4]
        assert_eq!(f.0, dmatrix![5.0, 0.0; 2.0, 12.5; 1.0, 3.0]);
    }

    #[test]
    fn shape_mismatch() {
        let f = FeatureMatrix(DMatrix::zeros(3, 2));
        assert!(forward_gft(&SpectralBasis::identity(2), &f).is_err());
        assert!(inverse_gft(&SpectralBasis::identity(2), &SpectralFeatures(f.0)).is_err());
    }
}

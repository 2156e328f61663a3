//! Sample-quality metrics: Fréchet distance between Gaussian summaries of
//! features, and kernel mean discrepancies, over frozen feature embeddings.
//!
//! Every reduction first sorts rows into a canonical order, so results depend
//! only on the multiset of rows, bit for bit.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, RowDVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const NEGATIVE_EIGEN_LIMIT: f64 = 1e-6;
pub const NEGATIVE_FID_LIMIT: f64 = 1e-6;
const SYMMETRY_TOLERANCE: f64 = 1e-8;
const EIGEN_MAX_ITER: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("feature dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("pca embedding used before fitting")]
    NotFitted,
    #[error("pca embedding is already fitted")]
    AlreadyFitted,
    #[error("pca needs 1 <= k <= {max}, got {k}")]
    BadComponentCount { k: usize, max: usize },
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("eigenvalue {0:e} is below the clamp limit")]
    NegativeEigenvalue(f64),
    #[error("eigendecomposition did not converge")]
    EigenFailure,
    #[error("FID total {0:e} is negative beyond round-off")]
    NegativeFid(f64),
    #[error("non-finite feature value")]
    NonFinite,
    #[error("unknown embedding {0:?}; expected raw_pixels, pca-<k> or random_projection-<k>-<seed>")]
    BadEmbedding(String),
}

/// Which feature map to use. Labels: `raw_pixels`, `pca-64`,
/// `random_projection-64-7`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum EmbeddingSpec {
    RawPixels,
    Pca { k: usize },
    RandomProjection { k: usize, seed: u64 },
}

impl fmt::Display for EmbeddingSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EmbeddingSpec::RawPixels => write!(f, "raw_pixels"),
            EmbeddingSpec::Pca { k } => write!(f, "pca-{k}"),
            EmbeddingSpec::RandomProjection { k, seed } => write!(f, "random_projection-{k}-{seed}"),
        }
    }
}

impl FromStr for EmbeddingSpec {
    type Err = MetricError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || MetricError::BadEmbedding(s.to_string());
        if s == "raw_pixels" {
            return Ok(EmbeddingSpec::RawPixels);
        }
        if let Some(k) = s.strip_prefix("pca-") {
            return Ok(EmbeddingSpec::Pca {
                k: k.parse().map_err(|_| bad())?,
            });
        }
        if let Some(rest) = s.strip_prefix("random_projection-") {
            let (k, seed) = rest.split_once('-').ok_or_else(bad)?;
            return Ok(EmbeddingSpec::RandomProjection {
                k: k.parse().map_err(|_| bad())?,
                seed: seed.parse().map_err(|_| bad())?,
            });
        }
        Err(bad())
    }
}

impl TryFrom<String> for EmbeddingSpec {
    type Error = MetricError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<EmbeddingSpec> for String {
    fn from(e: EmbeddingSpec) -> Self {
        e.to_string()
    }
}

#[derive(Debug, Clone, PartialEq)]
enum EmbeddingState {
    Identity,
    Unfitted,
    /// `features = (x − center) · basis`.
    Linear {
        center: Option<RowDVector<f64>>,
        basis: DMatrix<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureEmbedding {
    spec: EmbeddingSpec,
    input_dim: usize,
    state: EmbeddingState,
}

impl FeatureEmbedding {
    /// Raw and random-projection embeddings are ready immediately; pca
    /// needs [`fit`](Self::fit).
    pub fn new(spec: EmbeddingSpec, input_dim: usize) -> Self {
        let state = match spec {
            EmbeddingSpec::RawPixels => EmbeddingState::Identity,
            EmbeddingSpec::Pca { .. } => EmbeddingState::Unfitted,
            EmbeddingSpec::RandomProjection { k, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let scale = 1.0 / (k as f64).sqrt();
                let basis = DMatrix::from_row_iterator(
                    input_dim,
                    k,
                    (0..input_dim * k).map(|_| rng.sample::<f64, _>(StandardNormal) * scale),
                );
                EmbeddingState::Linear { center: None, basis }
            }
        };
        Self { spec, input_dim, state }
    }

    /// `new` followed by `fit` on `real`.
    pub fn fitted(spec: EmbeddingSpec, real: &DMatrix<f64>) -> Result<Self, MetricError> {
        let mut e = Self::new(spec, real.ncols());
        if matches!(spec, EmbeddingSpec::Pca { .. }) {
            e.fit(real)?;
        }
        Ok(e)
    }

    pub fn spec(&self) -> EmbeddingSpec {
        self.spec
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        match self.spec {
            EmbeddingSpec::RawPixels => self.input_dim,
            EmbeddingSpec::Pca { k } | EmbeddingSpec::RandomProjection { k, .. } => k,
        }
    }

    pub fn is_ready(&self) -> bool {
        self.state != EmbeddingState::Unfitted
    }

    /// Fits pca to the top-k eigenvectors of the covariance of `real`.
    /// Only pca embeddings can be fitted, and only once.
    pub fn fit(&mut self, real: &DMatrix<f64>) -> Result<(), MetricError> {
        let EmbeddingSpec::Pca { k } = self.spec else {
            return Err(MetricError::AlreadyFitted);
        };
        if self.state != EmbeddingState::Unfitted {
            return Err(MetricError::AlreadyFitted);
        }
        check_dim(real.ncols(), self.input_dim)?;
        if k == 0 || k > self.input_dim {
            return Err(MetricError::BadComponentCount { k, max: self.input_dim });
        }
        let summary = gaussian_summary(real)?;
        let eig = symmetric_eigen(&summary.covariance)?;
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
        let mut basis = DMatrix::zeros(self.input_dim, k);
        for (c, &i) in order.iter().take(k).enumerate() {
            let mut v = eig.eigenvectors.column(i).into_owned();
            let pivot = v
                .iter()
                .copied()
                .fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            if pivot < 0.0 {
                v.neg_mut();
            }
            basis.set_column(c, &v);
        }
        self.state = EmbeddingState::Linear {
            center: Some(summary.mean.transpose()),
            basis,
        };
        Ok(())
    }

    pub fn embed(&self, batch: &DMatrix<f64>) -> Result<DMatrix<f64>, MetricError> {
        check_dim(batch.ncols(), self.input_dim)?;
        match &self.state {
            EmbeddingState::Identity => Ok(batch.clone()),
            EmbeddingState::Unfitted => Err(MetricError::NotFitted),
            EmbeddingState::Linear { center, basis } => {
                let mut x = batch.clone();
                if let Some(c) = center {
                    for mut row in x.row_iter_mut() {
                        row -= c;
                    }
                }
                Ok(x * basis)
            }
        }
    }

    /// Maps pca features back to input space.
    pub fn reconstruct(&self, features: &DMatrix<f64>) -> Result<DMatrix<f64>, MetricError> {
        match &self.state {
            EmbeddingState::Linear { center: Some(c), basis } => {
                check_dim(features.ncols(), basis.ncols())?;
                let mut x = features * basis.transpose();
                for mut row in x.row_iter_mut() {
                    row += c;
                }
                Ok(x)
            }
            _ => Err(MetricError::NotFitted),
        }
    }
}

fn check_dim(left: usize, right: usize) -> Result<(), MetricError> {
    if left == right {
        Ok(())
    } else {
        Err(MetricError::DimensionMismatch { left, right })
    }
}

fn check_count(got: usize, needed: usize) -> Result<(), MetricError> {
    if got >= needed {
        Ok(())
    } else {
        Err(MetricError::TooFewSamples { needed, got })
    }
}

/// Rows sorted lexicographically.
pub fn canonical_rows(x: &DMatrix<f64>) -> Result<DMatrix<f64>, MetricError> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(MetricError::NonFinite);
    }
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    order.sort_by(|&a, &b| {
        x.row(a)
            .iter()
            .zip(x.row(b).iter())
            .map(|(p, q)| p.total_cmp(q))
            .find(|o| *o != Ordering::Equal)
            .unwrap_or(Ordering::Equal)
    });
    Ok(x.select_rows(order.iter()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSummary {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub sample_count: usize,
}

impl GaussianSummary {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Sample mean and unbiased covariance of the rows of `features`.
pub fn gaussian_summary(features: &DMatrix<f64>) -> Result<GaussianSummary, MetricError> {
    let m = features.nrows();
    check_count(m, 2)?;
    let x = canonical_rows(features)?;
    // Shift by the first row; covariance is shift-invariant and identical
    // rows then give an exactly zero matrix.
    let origin = x.row(0).into_owned();
    let mut d = x;
    for mut row in d.row_iter_mut() {
        row -= &origin;
    }
    let shift = d.row_mean();
    for mut row in d.row_iter_mut() {
        row -= &shift;
    }
    let raw = d.tr_mul(&d) / (m as f64 - 1.0);
    let covariance = (&raw + raw.transpose()) * 0.5;
    Ok(GaussianSummary {
        mean: (origin + shift).transpose(),
        covariance,
        sample_count: m,
    })
}

fn check_symmetric(a: &DMatrix<f64>) -> Result<(), MetricError> {
    let scale = a.amax().max(1.0);
    let asym = (a - a.transpose()).amax();
    if asym > SYMMETRY_TOLERANCE * scale {
        Err(MetricError::NotSymmetric(asym))
    } else {
        Ok(())
    }
}

fn symmetric_eigen(a: &DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>, MetricError> {
    SymmetricEigen::try_new(a.clone(), f64::EPSILON, EIGEN_MAX_ITER).ok_or(MetricError::EigenFailure)
}

/// Principal square root of a symmetric PSD matrix.
pub fn psd_sqrt(a: &DMatrix<f64>) -> Result<DMatrix<f64>, MetricError> {
    check_symmetric(a)?;
    let eig = symmetric_eigen(a)?;
    let roots = clamped_roots(&eig.eigenvalues)?;
    let v = &eig.eigenvectors;
    let scaled = DMatrix::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)] * roots[j]);
    let s = scaled * v.transpose();
    Ok((&s + s.transpose()) * 0.5)
}

fn clamped_roots(eigenvalues: &DVector<f64>) -> Result<DVector<f64>, MetricError> {
    if let Some(&worst) = eigenvalues.iter().find(|&&l| l < -NEGATIVE_EIGEN_LIMIT) {
        return Err(MetricError::NegativeEigenvalue(worst));
    }
    Ok(eigenvalues.map(|l| l.max(0.0).sqrt()))
}

/// `Tr((Σr Σg)^{1/2})`, computed as the trace of `(A Σg A)^{1/2}` with
/// `A = Σr^{1/2}`.
pub fn matrix_sqrt_product(sr: &DMatrix<f64>, sg: &DMatrix<f64>) -> Result<f64, MetricError> {
    check_dim(sr.nrows(), sg.nrows())?;
    check_symmetric(sg)?;
    let a = psd_sqrt(sr)?;
    let b = &a * sg * &a;
    let b = (&b + b.transpose()) * 0.5;
    let eig = symmetric_eigen(&b)?;
    Ok(clamped_roots(&eig.eigenvalues)?.sum())
}

/// Fréchet distance between two Gaussian summaries.
pub fn fid(real: &GaussianSummary, gen: &GaussianSummary) -> Result<f64, MetricError> {
    check_dim(real.dim(), gen.dim())?;
    let mean_term = (&real.mean - &gen.mean).norm_squared();
    let cross = matrix_sqrt_product(&real.covariance, &gen.covariance)?;
    let total = mean_term + real.covariance.trace() + gen.covariance.trace() - 2.0 * cross;
    if total >= 0.0 {
        Ok(total)
    } else if total >= -NEGATIVE_FID_LIMIT {
        Ok(0.0)
    } else {
        Err(MetricError::NegativeFid(total))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    Linear,
    /// `(gamma aᵀb + coef0)^degree`.
    Polynomial {
        degree: i32,
        gamma: f64,
        coef0: f64,
    },
}

impl Kernel {
    /// Degree 3, scale `1/k`, offset 1.
    pub fn kid_polynomial(k: usize) -> Self {
        Kernel::Polynomial {
            degree: 3,
            gamma: 1.0 / k as f64,
            coef0: 1.0,
        }
    }

    pub fn eval(self, dot: f64) -> f64 {
        match self {
            Kernel::Linear => dot,
            Kernel::Polynomial { degree, gamma, coef0 } => (gamma * dot + coef0).powi(degree),
        }
    }

    fn gram(self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
        (x * y.transpose()).map(|d| self.eval(d))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MmdEstimator {
    Biased,
    /// Within-set sums skip the diagonal.
    Unbiased,
}

/// Squared maximum mean discrepancy between the row sets `x` and `y`.
pub fn mmd2(x: &DMatrix<f64>, y: &DMatrix<f64>, kernel: Kernel, estimator: MmdEstimator) -> Result<f64, MetricError> {
    check_dim(x.ncols(), y.ncols())?;
    let needed = match estimator {
        MmdEstimator::Biased => 1,
        MmdEstimator::Unbiased => 2,
    };
    check_count(x.nrows(), needed)?;
    check_count(y.nrows(), needed)?;
    let x = canonical_rows(x)?;
    let y = canonical_rows(y)?;
    let (m, n) = (x.nrows() as f64, y.nrows() as f64);
    let kxx = kernel.gram(&x, &x);
    let kyy = kernel.gram(&y, &y);
    let kxy = kernel.gram(&x, &y);
    Ok(match estimator {
        MmdEstimator::Biased => kxx.sum() / (m * m) + kyy.sum() / (n * n) - 2.0 * kxy.sum() / (m * n),
        MmdEstimator::Unbiased => {
            (kxx.sum() - kxx.trace()) / (m * (m - 1.0)) + (kyy.sum() - kyy.trace()) / (n * (n - 1.0))
                - 2.0 * kxy.sum() / (m * n)
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KidVariant {
    /// Squared distance between feature means.
    PaperLinear,
    /// Unbiased MMD² with the cubic polynomial kernel.
    PolyMmd,
}

pub fn kid(real: &DMatrix<f64>, gen: &DMatrix<f64>, variant: KidVariant) -> Result<f64, MetricError> {
    check_dim(real.ncols(), gen.ncols())?;
    check_count(real.nrows(), 2)?;
    check_count(gen.nrows(), 2)?;
    match variant {
        KidVariant::PaperLinear => {
            let mr = canonical_rows(real)?.row_mean();
            let mg = canonical_rows(gen)?.row_mean();
            Ok((mr - mg).norm_squared())
        }
        KidVariant::PolyMmd => mmd2(real, gen, Kernel::kid_polynomial(real.ncols()), MmdEstimator::Unbiased),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub fid: f64,
    pub kid_linear: f64,
    pub kid_poly: f64,
}

/// A frozen embedding plus the real-side features and summary.
#[derive(Debug, Clone)]
pub struct ReferenceSet {
    embedding: FeatureEmbedding,
    features: DMatrix<f64>,
    summary: GaussianSummary,
}

impl ReferenceSet {
    /// Fits the embedding (if pca) on `real` and freezes it.
    pub fn new(spec: EmbeddingSpec, real: &DMatrix<f64>) -> Result<Self, MetricError> {
        let embedding = FeatureEmbedding::fitted(spec, real)?;
        let features = embedding.embed(real)?;
        let summary = gaussian_summary(&features)?;
        Ok(Self {
            embedding,
            features,
            summary,
        })
    }

    pub fn embedding(&self) -> &FeatureEmbedding {
        &self.embedding
    }

    pub fn sample_count(&self) -> usize {
        self.features.nrows()
    }

    pub fn score(&self, images: &DMatrix<f64>) -> Result<MetricSet, MetricError> {
        let features = self.embedding.embed(images)?;
        Ok(MetricSet {
            fid: fid(&self.summary, &gaussian_summary(&features)?)?,
            kid_linear: kid(&self.features, &features, KidVariant::PaperLinear)?,
            kid_poly: kid(&self.features, &features, KidVariant::PolyMmd)?,
        })
    }
}

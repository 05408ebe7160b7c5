//! Per-identity Gaussian templates over embeddings and Mahalanobis scoring.
//!
//! A template is the mean `μ` of an identity's (augmented) embeddings and the
//! lower Cholesky factor `L` of their regularized sample covariance
//!
//! ```text
//! Σ = 1/(n-1) · Σᵢ (xᵢ - μ)(xᵢ - μ)ᵀ + ε·I
//! ```
//!
//! Distances are `‖y‖₂` where `L·y = x - μ`, which equals `sqrt(δᵀ Σ⁻¹ δ)`
//! without ever forming `Σ⁻¹`.

use log::warn;

use crate::embedding::{Embedding, EmbeddingSet};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_spd, CholeskyFactor, SquareMatrix};

/// Regularization added to the covariance diagonal unless overridden.
pub const DEFAULT_EPSILON: f64 = 0.01;

/// Templates above this dimension are accepted but logged, since the full
/// `d × d` factor grows quadratically.
pub const LARGE_DIM_WARNING: usize = 1024;

/// Multivariate Gaussian model of one identity's embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianTemplate {
    identity_id: String,
    mean: Vec<f64>,
    chol: CholeskyFactor,
    epsilon: f64,
    sample_count: u64,
    model_id: String,
}

impl GaussianTemplate {
    /// Assembles a template from already computed parts.
    pub fn from_parts(
        identity_id: impl Into<String>,
        mean: Vec<f64>,
        chol: CholeskyFactor,
        epsilon: f64,
        sample_count: u64,
        model_id: impl Into<String>,
    ) -> Result<Self> {
        if mean.len() != chol.dim() {
            return Err(Error::DimensionMismatch {
                expected: chol.dim(),
                got: mean.len(),
            });
        }
        if mean.is_empty() || mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidEmbedding("template mean must be nonempty and finite".into()));
        }
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(Error::Config(format!("epsilon must be finite and >= 0, got {epsilon}")));
        }
        Ok(Self {
            identity_id: identity_id.into(),
            mean,
            chol,
            epsilon,
            sample_count,
            model_id: model_id.into(),
        })
    }

    /// Template with a known mean and covariance (no fitting, `ε = 0`).
    pub fn from_mean_covariance(
        identity_id: impl Into<String>,
        mean: Vec<f64>,
        covariance: &SquareMatrix,
        model_id: impl Into<String>,
    ) -> Result<Self> {
        let chol = cholesky_spd(covariance)?;
        Self::from_parts(identity_id, mean, chol, 0.0, 0, model_id)
    }

    pub fn identity_id(&self) -> &str {
        &self.identity_id
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn chol_lower(&self) -> &CholeskyFactor {
        &self.chol
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn sample_count(&self) -> u64 {
        self.sample_count
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// The regularized covariance `L·Lᵀ`.
    pub fn covariance(&self) -> SquareMatrix {
        self.chol.reconstruct()
    }

    fn check_probe(&self, dim: usize, model_id: &str) -> Result<()> {
        if dim != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: dim,
            });
        }
        if model_id != self.model_id {
            return Err(Error::ModelMismatch {
                expected: self.model_id.clone(),
                got: model_id.to_string(),
            });
        }
        Ok(())
    }

    fn distance_unchecked(&self, values: &[f64], scratch: &mut Vec<f64>) -> f64 {
        scratch.clear();
        scratch.extend(values.iter().zip(&self.mean).map(|(x, m)| x - m));
        self.chol.forward_solve_in_place(scratch);
        scratch.iter().map(|y| y * y).sum::<f64>().sqrt()
    }
}

/// Fits a template to `samples`: arithmetic mean, unbiased two-pass sample
/// covariance, plus `epsilon` on the diagonal.
///
/// The mean is summed per coordinate in sorted order, so reordering the rows
/// never changes it.
pub fn fit_template(
    samples: &EmbeddingSet,
    identity_id: &str,
    epsilon: f64,
) -> Result<GaussianTemplate> {
    let n = samples.count();
    let d = samples.dim();
    if n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: n });
    }
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::Config(format!("epsilon must be finite and >= 0, got {epsilon}")));
    }
    if samples.as_flat().iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidEmbedding("samples contain non-finite values".into()));
    }
    if d > LARGE_DIM_WARNING {
        warn!(
            "fitting a {d}-dimensional template for {identity_id:?}: the covariance factor needs {} MiB",
            d * d * 8 / (1 << 20)
        );
    }

    let mean = column_means(samples);

    let mut cov = SquareMatrix::zeros(d);
    let mut dev = vec![0.0; d];
    for row in samples.rows() {
        for ((o, x), m) in dev.iter_mut().zip(row).zip(&mean) {
            *o = x - m;
        }
        for (i, &di) in dev.iter().enumerate() {
            for (j, &dj) in dev[..=i].iter().enumerate() {
                cov.set(i, j, cov.get(i, j) + di * dj);
            }
        }
    }
    let denom = (n - 1) as f64;
    for i in 0..d {
        for j in 0..=i {
            let v = cov.get(i, j) / denom;
            cov.set(i, j, v);
            cov.set(j, i, v);
        }
    }
    cov.add_diagonal(epsilon);

    let chol = cholesky_spd(&cov)?;
    GaussianTemplate::from_parts(
        identity_id,
        mean,
        chol,
        epsilon,
        n as u64,
        samples.model_id(),
    )
}

fn column_means(samples: &EmbeddingSet) -> Vec<f64> {
    let n = samples.count();
    let mut column = Vec::with_capacity(n);
    (0..samples.dim())
        .map(|j| {
            column.clear();
            column.extend(samples.rows().map(|r| r[j]));
            column.sort_by(f64::total_cmp);
            column.iter().sum::<f64>() / n as f64
        })
        .collect()
}

/// Mahalanobis distance of `probe` from the template's distribution.
pub fn mahalanobis(template: &GaussianTemplate, probe: &Embedding) -> Result<f64> {
    template.check_probe(probe.dim(), probe.model_id())?;
    let mut scratch = Vec::with_capacity(template.dim());
    Ok(template.distance_unchecked(probe.values(), &mut scratch))
}

/// [`mahalanobis`] for every row of `probes`, in row order.
pub fn batch_mahalanobis(template: &GaussianTemplate, probes: &EmbeddingSet) -> Result<Vec<f64>> {
    template.check_probe(probes.dim(), probes.model_id())?;
    let mut scratch = Vec::with_capacity(template.dim());
    Ok(probes
        .rows()
        .map(|row| template.distance_unchecked(row, &mut scratch))
        .collect())
}

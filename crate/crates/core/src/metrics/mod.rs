//! IS and FID: Gaussian statistics estimation, the Fréchet distance between
//! Gaussians, and the split-based Inception Score. The statistics pipeline is
//! f64; f32 embeddings are upcast on entry.

mod sqrtm;

pub use sqrtm::{frobenius_norm, sqrtm_psd};

use crate::data::ImageBatch;
use crate::error::{Error, Result};
use crate::models::MiniEmbedder;
use crate::tensor::Tensor;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// (μ, Σ) summary of an embedding distribution.
#[derive(Debug, Clone)]
pub struct GaussianStats {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub n: usize,
}

impl GaussianStats {
    /// Symmetrizes sigma; requires n ≥ 2 and matching dimensions.
    pub fn new(mu: DVector<f64>, sigma: DMatrix<f64>, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::TooFewSamples { needed: 2, got: n });
        }
        let d = mu.len();
        if sigma.nrows() != d || sigma.ncols() != d {
            return Err(Error::DimensionMismatch { a: d, b: sigma.nrows() });
        }
        let sym = DMatrix::from_fn(d, d, |i, j| 0.5 * (sigma[(i, j)] + sigma[(j, i)]));
        Ok(GaussianStats { mu, sigma: sym, n })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// Column means and unbiased covariance (divisor N−1) of (N, d) embeddings.
pub fn estimate_stats(embeddings: &Tensor) -> Result<GaussianStats> {
    let shape = embeddings.shape();
    if shape.len() != 2 {
        return Err(Error::ShapeMismatch {
            op: "estimate_stats",
            details: format!("expected (N,d), got {shape:?}"),
        });
    }
    let (n, d) = (shape[0], shape[1]);
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    let data = embeddings.data();
    let mut mu = vec![0.0f64; d];
    for r in 0..n {
        for c in 0..d {
            mu[c] += data[r * d + c] as f64;
        }
    }
    for v in mu.iter_mut() {
        *v /= n as f64;
    }
    let mut sigma = DMatrix::zeros(d, d);
    let mut centered = vec![0.0f64; d];
    for r in 0..n {
        for c in 0..d {
            centered[c] = data[r * d + c] as f64 - mu[c];
        }
        for i in 0..d {
            let ci = centered[i];
            if ci == 0.0 {
                continue;
            }
            for j in i..d {
                sigma[(i, j)] += ci * centered[j];
            }
        }
    }
    let denom = (n - 1) as f64;
    for i in 0..d {
        for j in i..d {
            let v = sigma[(i, j)] / denom;
            sigma[(i, j)] = v;
            sigma[(j, i)] = v;
        }
    }
    GaussianStats::new(DVector::from_vec(mu), sigma, n)
}

/// Squared 2-Wasserstein distance between Gaussians:
/// ‖μ_a − μ_b‖² + Tr(Σ_a + Σ_b − 2(Σ_a Σ_b)^{1/2}).
///
/// The cross term is computed in the symmetric congruence form
/// Tr((Σ_a^{1/2} Σ_b Σ_a^{1/2})^{1/2}), which equals the textbook expression
/// but never eigendecomposes a non-symmetric product. Returns the value and
/// whether a tiny negative result was clamped to zero.
pub fn frechet_distance_detailed(a: &GaussianStats, b: &GaussianStats) -> Result<(f64, bool)> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { a: a.dim(), b: b.dim() });
    }
    let mean_term: f64 = (&a.mu - &b.mu).norm_squared();
    let sqrt_a = sqrtm_psd(&a.sigma)?;
    let inner = &sqrt_a * &b.sigma * &sqrt_a;
    let cross = sqrtm_psd(&inner)?;
    let value = mean_term + a.sigma.trace() + b.sigma.trace() - 2.0 * cross.trace();
    if value < -1e-6 {
        return Err(Error::InvalidArgument(format!(
            "frechet distance is significantly negative: {value:.3e}"
        )));
    }
    if value < 0.0 {
        Ok((0.0, true))
    } else {
        Ok((value, false))
    }
}

pub fn frechet_distance(a: &GaussianStats, b: &GaussianStats) -> Result<f64> {
    frechet_distance_detailed(a, b).map(|(v, _)| v)
}

/// Shannon entropy −Σ p ln p with 0·ln 0 := 0. Input must be a simplex point.
pub fn entropy(p: &[f64]) -> Result<f64> {
    let mut sum = 0.0f64;
    for &v in p {
        if v < -1e-9 {
            return Err(Error::InvalidSimplex(format!("negative component {v}")));
        }
        sum += v;
    }
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidSimplex(format!("components sum to {sum}")));
    }
    Ok(p.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.ln()).sum())
}

/// Mean and population std of the per-split scores exp(E_x KL(p(y|x) ‖ p̄)).
pub fn inception_score_from_posteriors(posteriors: &Tensor, n_splits: usize) -> Result<(f64, f64)> {
    let shape = posteriors.shape();
    if shape.len() != 2 {
        return Err(Error::ShapeMismatch {
            op: "inception_score",
            details: format!("expected (N,C), got {shape:?}"),
        });
    }
    let (n, c) = (shape[0], shape[1]);
    if n_splits == 0 || n_splits > n {
        return Err(Error::EmptySplit { got: n, splits: n_splits });
    }
    let data = posteriors.data();
    let mut scores = Vec::with_capacity(n_splits);
    for s in 0..n_splits {
        let start = s * n / n_splits;
        let end = (s + 1) * n / n_splits;
        let rows = end - start;
        if rows == 0 {
            return Err(Error::EmptySplit { got: n, splits: n_splits });
        }
        // marginal p̄ over the split
        let mut marginal = vec![0.0f64; c];
        for r in start..end {
            for k in 0..c {
                marginal[k] += data[r * c + k] as f64;
            }
        }
        for v in marginal.iter_mut() {
            *v /= rows as f64;
        }
        let log_marginal: Vec<f64> = marginal.iter().map(|&v| if v > 0.0 { v.ln() } else { 0.0 }).collect();
        // mean KL(p ‖ p̄) in log space
        let mut mean_kl = 0.0f64;
        for r in start..end {
            let mut kl = 0.0f64;
            for k in 0..c {
                let p = data[r * c + k] as f64;
                if p > 0.0 {
                    kl += p * (p.ln() - log_marginal[k]);
                }
            }
            mean_kl += kl;
        }
        mean_kl /= rows as f64;
        scores.push(mean_kl.exp());
    }
    let mean = scores.iter().sum::<f64>() / n_splits as f64;
    let var = scores.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n_splits as f64;
    Ok((mean, var.sqrt()))
}

/// Summary of the embedder that produced a metric, for report provenance.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EmbedderSummary {
    pub training: String,
    pub kappa: f64,
}

impl EmbedderSummary {
    pub fn of(model: &MiniEmbedder) -> Self {
        let training = match model.provenance.training {
            crate::models::TrainingKind::Nominal => "nominal",
            crate::models::TrainingKind::Adversarial => "adversarial",
            crate::models::TrainingKind::Gan => "gan",
        };
        EmbedderSummary { training: training.to_string(), kappa: model.provenance.kappa }
    }
}

/// One computed metric, serializable as a single JSON line with stable key
/// order. `config_digest` and `seed` are stamped by the harness before the
/// report is written.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MetricReport {
    pub metric: String,
    pub value: f64,
    pub std: Option<f64>,
    pub n_real: Option<usize>,
    pub n_gen: usize,
    pub splits: Option<usize>,
    pub clamped: bool,
    pub embedder: EmbedderSummary,
    pub config_digest: String,
    pub seed: u64,
}

impl MetricReport {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// FID between two image sets under `embedder`; reports R-FID when the
/// embedder is adversarially trained.
pub fn fid(embedder: &MiniEmbedder, real: &ImageBatch, generated: &ImageBatch) -> Result<MetricReport> {
    let stats_real = estimate_stats(&embedder.embed(real)?)?;
    let stats_gen = estimate_stats(&embedder.embed(generated)?)?;
    let (value, clamped) = frechet_distance_detailed(&stats_real, &stats_gen)?;
    if !value.is_finite() {
        return Err(Error::NonFinite { context: "frechet distance".into() });
    }
    let metric = if embedder.provenance.is_robust() { "R-FID" } else { "FID" };
    Ok(MetricReport {
        metric: metric.to_string(),
        value,
        std: None,
        n_real: Some(real.len()),
        n_gen: generated.len(),
        splits: None,
        clamped,
        embedder: EmbedderSummary::of(embedder),
        config_digest: String::new(),
        seed: 0,
    })
}

/// Inception Score of a batch under `embedder`'s classifier head; reports
/// R-IS when the embedder is adversarially trained.
pub fn inception_score(embedder: &MiniEmbedder, batch: &ImageBatch, n_splits: usize) -> Result<MetricReport> {
    let posteriors = embedder.posterior(batch)?;
    let (value, std) = inception_score_from_posteriors(&posteriors, n_splits)?;
    if !value.is_finite() {
        return Err(Error::NonFinite { context: "inception score".into() });
    }
    let metric = if embedder.provenance.is_robust() { "R-IS" } else { "IS" };
    Ok(MetricReport {
        metric: metric.to_string(),
        value,
        std: Some(std),
        n_real: None,
        n_gen: batch.len(),
        splits: Some(n_splits),
        clamped: false,
        embedder: EmbedderSummary::of(embedder),
        config_digest: String::new(),
        seed: 0,
    })
}

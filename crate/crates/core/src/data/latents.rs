//! Latent samplers, uniform-noise images and the exact 1-D Wasserstein
//! distance used to summarize latent perturbations.

use super::rng::{item_rng, normal, stream, uniform};
use super::ImageBatch;
use crate::error::{Error, Result};
use crate::parallel::par_map_indexed;
use crate::tensor::Tensor;

/// Families for drawing generator inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LatentDist {
    StandardNormal,
    /// N(μ·1, I)
    ShiftedNormal(f64),
    /// N(μ·1, I) + U[0, 1]
    NormalPlusUniform(f64),
    /// U[0, 1] per coordinate
    Uniform,
}

/// Draw `n` i.i.d. latents of dimension `dim` as an (n, dim) tensor.
pub fn sample_latents(n: usize, dim: usize, dist: LatentDist, seed: u64) -> Tensor {
    let rows = par_map_indexed(n, |i| {
        let mut r = item_rng(seed, stream::LATENTS, i as u64);
        let data: Vec<f32> = (0..dim)
            .map(|_| {
                let v = match dist {
                    LatentDist::StandardNormal => normal(&mut r),
                    LatentDist::ShiftedNormal(mu) => mu + normal(&mut r),
                    LatentDist::NormalPlusUniform(mu) => mu + normal(&mut r) + uniform(&mut r),
                    LatentDist::Uniform => uniform(&mut r),
                };
                v as f32
            })
            .collect();
        Tensor::new(vec![dim], data).unwrap()
    });
    Tensor::stack(&rows).unwrap()
}

/// `n` images of i.i.d. uniform [0, 1] pixels — the un-optimized noise
/// baseline.
pub fn random_noise_images(n: usize, seed: u64) -> ImageBatch {
    let sz = super::IMAGE_SIZE;
    let items = par_map_indexed(n, |i| {
        let mut r = item_rng(seed, stream::NOISE_IMAGES, i as u64);
        let data: Vec<f32> = (0..3 * sz * sz).map(|_| uniform(&mut r) as f32).collect();
        Tensor::new(vec![3, sz, sz], data).unwrap()
    });
    ImageBatch::from_items(&items, None).expect("uniform draws are in range")
}

/// Exact first Wasserstein distance between two equal-count 1-D samples:
/// mean absolute difference of the sorted values.
pub fn wasserstein_1d(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::CountMismatch { a: a.len(), b: b.len() });
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    let mut sa: Vec<f32> = a.to_vec();
    let mut sb: Vec<f32> = b.to_vec();
    sa.sort_by(f32::total_cmp);
    sb.sort_by(f32::total_cmp);
    let sum: f64 = sa.iter().zip(&sb).map(|(x, y)| ((x - y) as f64).abs()).sum();
    Ok(sum / a.len() as f64)
}

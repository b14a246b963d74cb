//! Quality-degradation transforms: additive Gaussian noise and Gaussian blur.

use super::rng::{item_rng, normal, stream};
use super::ImageBatch;
use crate::error::{Error, Result};
use crate::parallel::par_map_indexed;
use crate::tensor::Tensor;

/// Elementwise x + N(0, σ²), clamped to [0, 1]. Noise is applied before the
/// clamp, which biases the realized std at large σ; callers measuring noise
/// levels should use mid-gray inputs.
pub fn gaussian_noise(batch: &ImageBatch, sigma: f64, seed: u64) -> Result<ImageBatch> {
    if sigma < 0.0 {
        return Err(Error::InvalidArgument(format!("noise sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(batch.clone());
    }
    let items = par_map_indexed(batch.len(), |i| {
        let mut r = item_rng(seed, stream::ADDITIVE_NOISE, i as u64);
        let img = batch.image(i);
        let data: Vec<f32> = img
            .data()
            .iter()
            .map(|&v| (v as f64 + sigma * normal(&mut r)).clamp(0.0, 1.0) as f32)
            .collect();
        Tensor::new(img.shape().to_vec(), data).unwrap()
    });
    ImageBatch::from_items(&items, batch.labels().map(|l| l.to_vec()))
}

/// Normalized 1-D Gaussian taps for radius ⌈3σ⌉; the separable product of two
/// of these equals the 2-D kernel g(i,j) = exp(−(i²+j²)/2σ²) / Σg exactly.
pub fn gaussian_kernel_1d(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    k
}

fn reflect(i: i64, len: i64) -> usize {
    // edge-inclusive mirror: -1 -> 0, len -> len-1 (radius < len is guaranteed
    // for σ ≤ 4 on 32-px images)
    let j = if i < 0 { -i - 1 } else if i >= len { 2 * len - 1 - i } else { i };
    j as usize
}

/// Per-channel 2-D Gaussian blur (radius ⌈3σ⌉, reflect padding), applied as
/// two 1-D passes.
pub fn gaussian_blur(batch: &ImageBatch, sigma: f64) -> Result<ImageBatch> {
    if sigma <= 0.0 {
        return Err(Error::InvalidArgument(format!("blur sigma must be > 0, got {sigma}")));
    }
    let kernel = gaussian_kernel_1d(sigma);
    let radius = (kernel.len() / 2) as i64;
    let (_, h, w) = batch.image_shape();
    if radius >= h as i64 || radius >= w as i64 {
        return Err(Error::InvalidArgument(format!(
            "blur radius {radius} too large for {h}×{w} images"
        )));
    }

    let items = par_map_indexed(batch.len(), |i| {
        let img = batch.image(i);
        let (c, h, w) = (img.shape()[0], img.shape()[1], img.shape()[2]);
        let src = img.data();
        let mut tmp = vec![0.0f64; c * h * w];
        // horizontal pass
        for ch in 0..c {
            for y in 0..h {
                let row = ch * h * w + y * w;
                for x in 0..w {
                    let mut acc = 0.0f64;
                    for (t, &kv) in kernel.iter().enumerate() {
                        let sx = reflect(x as i64 + t as i64 - radius, w as i64);
                        acc += kv * src[row + sx] as f64;
                    }
                    tmp[row + x] = acc;
                }
            }
        }
        // vertical pass
        let mut out = vec![0.0f32; c * h * w];
        for ch in 0..c {
            for y in 0..h {
                for x in 0..w {
                    let mut acc = 0.0f64;
                    for (t, &kv) in kernel.iter().enumerate() {
                        let sy = reflect(y as i64 + t as i64 - radius, h as i64);
                        acc += kv * tmp[ch * h * w + sy * w + x];
                    }
                    out[ch * h * w + y * w + x] = acc.clamp(0.0, 1.0) as f32;
                }
            }
        }
        Tensor::new(img.shape().to_vec(), out).unwrap()
    });
    ImageBatch::from_items(&items, batch.labels().map(|l| l.to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray_batch(n: usize, value: f32) -> ImageBatch {
        ImageBatch::new(Tensor::full(vec![n, 3, 32, 32], value), None).unwrap()
    }

    #[test]
    fn zero_sigma_noise_is_identity() {
        let b = gray_batch(2, 0.3);
        let out = gaussian_noise(&b, 0.0, 1).unwrap();
        assert_eq!(out.images(), b.images());
    }

    #[test]
    fn noise_stays_in_unit_range() {
        let b = gray_batch(4, 0.9);
        let out = gaussian_noise(&b, 0.5, 7).unwrap();
        assert!(out.images().data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn noise_std_matches_sigma_before_clamping() {
        // mid-gray input at σ=0.1 never clamps, so output − input is the raw noise
        let b = gray_batch(32, 0.5);
        let out = gaussian_noise(&b, 0.1, 3).unwrap();
        let diffs: Vec<f64> = out
            .images()
            .data()
            .iter()
            .zip(b.images().data())
            .map(|(a, c)| (*a - *c) as f64)
            .collect();
        let n = diffs.len() as f64;
        let mean = diffs.iter().sum::<f64>() / n;
        let std = (diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n).sqrt();
        assert!((std - 0.1).abs() < 0.005, "std {std}");
    }

    #[test]
    fn kernel_is_normalized() {
        for &sigma in &[0.7, 1.0, 2.5, 4.0] {
            let k = gaussian_kernel_1d(sigma);
            let sum: f64 = k.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9, "sigma {sigma} sum {sum}");
        }
    }

    #[test]
    fn kernel_center_weight_matches_direct_formula() {
        // σ=1, radius 3: center of the 2-D product kernel equals g(0,0)/Σg
        let sigma = 1.0f64;
        let k1 = gaussian_kernel_1d(sigma);
        assert_eq!(k1.len(), 7);
        let center_2d = k1[3] * k1[3];

        let mut total = 0.0f64;
        let mut center = 0.0f64;
        for i in -3i64..=3 {
            for j in -3i64..=3 {
                let g = (-((i * i + j * j) as f64) / (2.0 * sigma * sigma)).exp();
                total += g;
                if i == 0 && j == 0 {
                    center = g;
                }
            }
        }
        assert!((center_2d - center / total).abs() < 1e-12);
    }

    #[test]
    fn constant_image_is_unchanged_by_blur() {
        let b = gray_batch(1, 0.42);
        let out = gaussian_blur(&b, 2.0).unwrap();
        for &v in out.images().data() {
            assert!((v - 0.42).abs() < 1e-6, "{v}");
        }
    }
}

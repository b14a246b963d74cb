//! MiniStyleGen: a 2-layer mapping network z→w, truncation toward the
//! w-space mean, and a dense + 3 transposed-conv synthesis network ending in
//! a sigmoid so outputs live in (0,1) and stay differentiable.

use super::checkpoint::Provenance;
use super::{he_init, INFER_CHUNK, LATENT_DIM, W_DIM};
use crate::data::rng::{item_rng, normal, stream};
use crate::data::ImageBatch;
use crate::error::{Error, Result};
use crate::parallel::par_map_indexed;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

const BASE_CH: usize = 32;
const BASE_HW: usize = 4;
const SYNTH_FLAT: usize = BASE_CH * BASE_HW * BASE_HW;
const LRELU: f32 = 0.2;

/// Style-based toy generator.
#[derive(Debug, Clone)]
pub struct MiniStyleGen {
    pub map1_w: Tensor,
    pub map1_b: Tensor,
    pub map2_w: Tensor,
    pub map2_b: Tensor,
    pub synth_fc_w: Tensor,
    pub synth_fc_b: Tensor,
    pub tconv1_w: Tensor,
    pub tconv1_b: Tensor,
    pub tconv2_w: Tensor,
    pub tconv2_b: Tensor,
    pub tconv3_w: Tensor,
    pub tconv3_b: Tensor,
    /// Mean of the mapped w distribution; zero until [`MiniStyleGen::compute_w_bar`].
    pub w_bar: Tensor,
    pub provenance: Provenance,
}

/// Tape handles for generator parameters.
pub struct GeneratorVars {
    vars: Vec<Var>,
}

impl GeneratorVars {
    pub fn all(&self) -> &[Var] {
        &self.vars
    }
}

impl MiniStyleGen {
    pub fn init(seed: u64) -> Self {
        let mut r = item_rng(seed, stream::TRAIN_INIT, 1);
        MiniStyleGen {
            map1_w: he_init(&mut r, vec![LATENT_DIM, W_DIM], LATENT_DIM, 1.0),
            map1_b: Tensor::zeros(vec![W_DIM]),
            map2_w: he_init(&mut r, vec![W_DIM, W_DIM], W_DIM, 1.0),
            map2_b: Tensor::zeros(vec![W_DIM]),
            synth_fc_w: he_init(&mut r, vec![W_DIM, SYNTH_FLAT], W_DIM, 1.0),
            synth_fc_b: Tensor::zeros(vec![SYNTH_FLAT]),
            tconv1_w: he_init(&mut r, vec![BASE_CH, 16, 4, 4], BASE_CH * 16 / 4, 1.0),
            tconv1_b: Tensor::zeros(vec![16]),
            tconv2_w: he_init(&mut r, vec![16, 8, 4, 4], 16 * 16 / 4, 1.0),
            tconv2_b: Tensor::zeros(vec![8]),
            tconv3_w: he_init(&mut r, vec![8, 3, 4, 4], 8 * 16 / 4, 1.0),
            tconv3_b: Tensor::zeros(vec![3]),
            w_bar: Tensor::zeros(vec![W_DIM]),
            provenance: Provenance::untrained(seed),
        }
    }

    pub fn named_params(&self) -> Vec<(&'static str, &Tensor)> {
        vec![
            ("map1.weight", &self.map1_w),
            ("map1.bias", &self.map1_b),
            ("map2.weight", &self.map2_w),
            ("map2.bias", &self.map2_b),
            ("synth_fc.weight", &self.synth_fc_w),
            ("synth_fc.bias", &self.synth_fc_b),
            ("tconv1.weight", &self.tconv1_w),
            ("tconv1.bias", &self.tconv1_b),
            ("tconv2.weight", &self.tconv2_w),
            ("tconv2.bias", &self.tconv2_b),
            ("tconv3.weight", &self.tconv3_w),
            ("tconv3.bias", &self.tconv3_b),
            ("w_bar", &self.w_bar),
        ]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.map1_w,
            &mut self.map1_b,
            &mut self.map2_w,
            &mut self.map2_b,
            &mut self.synth_fc_w,
            &mut self.synth_fc_b,
            &mut self.tconv1_w,
            &mut self.tconv1_b,
            &mut self.tconv2_w,
            &mut self.tconv2_b,
            &mut self.tconv3_w,
            &mut self.tconv3_b,
            &mut self.w_bar,
        ]
    }

    /// Trainable parameters only (w_bar is a derived statistic, not trained).
    pub fn trainable_count(&self) -> usize {
        self.named_params().len() - 1
    }

    pub fn register(&self, tape: &mut Tape, trainable: bool) -> GeneratorVars {
        let named = self.named_params();
        let vars = named
            .iter()
            .map(|(name, t)| tape.leaf((*t).clone(), trainable && *name != "w_bar"))
            .collect();
        GeneratorVars { vars }
    }

    /// Mapping network: (N, d_z) → (N, d_w).
    pub fn mapping_on(&self, tape: &mut Tape, v: &GeneratorVars, z: Var) -> Result<Var> {
        let p = &v.vars;
        let mut h = tape.matmul(z, p[0])?;
        h = tape.add_bias(h, p[1])?;
        h = tape.leaky_relu(h, LRELU);
        h = tape.matmul(h, p[2])?;
        tape.add_bias(h, p[3])
    }

    /// Truncation: w ← α·w + (1−α)·w̄, broadcast over rows.
    pub fn truncate_on(&self, tape: &mut Tape, v: &GeneratorVars, w: Var, alpha: f64) -> Result<Var> {
        let n = tape.value(w).shape()[0];
        let scaled = tape.scale(w, alpha as f32);
        let w_bar_rows = {
            let wb = tape.value(v.vars[12]).data().to_vec();
            let mut data = Vec::with_capacity(n * W_DIM);
            for _ in 0..n {
                data.extend_from_slice(&wb);
            }
            tape.constant(Tensor::new(vec![n, W_DIM], data)?)
        };
        let shifted = tape.scale(w_bar_rows, 1.0 - alpha as f32);
        tape.add(scaled, shifted)
    }

    /// Synthesis network Ĝ: (N, d_w) → (N, 3, 32, 32) in (0,1).
    pub fn synthesize_on(&self, tape: &mut Tape, v: &GeneratorVars, w: Var) -> Result<Var> {
        let p = &v.vars;
        let n = tape.value(w).shape()[0];
        let mut h = tape.matmul(w, p[4])?;
        h = tape.add_bias(h, p[5])?;
        h = tape.leaky_relu(h, LRELU);
        h = tape.reshape(h, vec![n, BASE_CH, BASE_HW, BASE_HW])?;
        h = tape.conv_transpose2d(h, p[6], 2, 1)?;
        h = tape.add_channel_bias(h, p[7])?;
        h = tape.leaky_relu(h, LRELU);
        h = tape.conv_transpose2d(h, p[8], 2, 1)?;
        h = tape.add_channel_bias(h, p[9])?;
        h = tape.leaky_relu(h, LRELU);
        h = tape.conv_transpose2d(h, p[10], 2, 1)?;
        h = tape.add_channel_bias(h, p[11])?;
        Ok(tape.sigmoid(h))
    }

    /// Full pass: mapping, truncation at `alpha`, synthesis.
    pub fn generate_on(&self, tape: &mut Tape, v: &GeneratorVars, z: Var, alpha: f64) -> Result<Var> {
        let w = self.mapping_on(tape, v, z)?;
        let wt = self.truncate_on(tape, v, w, alpha)?;
        self.synthesize_on(tape, v, wt)
    }

    fn check_latents(&self, z: &Tensor) -> Result<()> {
        if z.shape().len() != 2 || z.shape()[1] != LATENT_DIM {
            return Err(Error::ShapeMismatch {
                op: "MiniStyleGen",
                details: format!("expected (N,{LATENT_DIM}), got {:?}", z.shape()),
            });
        }
        z.check_finite("generator latents")
    }

    fn check_alpha(alpha: f64) -> Result<()> {
        if !(0.0..=2.0).contains(&alpha) {
            return Err(Error::InvalidArgument(format!("truncation alpha must be in [0,2], got {alpha}")));
        }
        Ok(())
    }

    /// G(z) at truncation `alpha`.
    pub fn generate(&self, z: &Tensor, alpha: f64) -> Result<ImageBatch> {
        self.check_latents(z)?;
        Self::check_alpha(alpha)?;
        let n = z.shape()[0];
        let chunks = n.div_ceil(INFER_CHUNK);
        let parts: Vec<Result<Vec<Tensor>>> = par_map_indexed(chunks, |c| {
            let start = c * INFER_CHUNK;
            let len = INFER_CHUNK.min(n - start);
            let zc = Tensor::new(
                vec![len, LATENT_DIM],
                z.data()[start * LATENT_DIM..(start + len) * LATENT_DIM].to_vec(),
            )?;
            let mut tape = Tape::new();
            let vars = self.register(&mut tape, false);
            let zv = tape.constant(zc);
            let out = self.generate_on(&mut tape, &vars, zv, alpha)?;
            Ok((0..len).map(|i| tape.value(out).index_axis0(i)).collect())
        });
        let mut items = Vec::with_capacity(n);
        for p in parts {
            items.extend(p?);
        }
        ImageBatch::from_items(&items, None)
    }

    /// The w-space vector actually fed to synthesis for each z (the
    /// truncation-linearity instrumentation hook).
    pub fn truncated_w(&self, z: &Tensor, alpha: f64) -> Result<Tensor> {
        self.check_latents(z)?;
        Self::check_alpha(alpha)?;
        let mut tape = Tape::new();
        let vars = self.register(&mut tape, false);
        let zv = tape.constant(z.clone());
        let w = self.mapping_on(&mut tape, &vars, zv)?;
        let wt = self.truncate_on(&mut tape, &vars, w, alpha)?;
        Ok(tape.value(wt).clone())
    }

    /// Mapping network alone: (N, d_z) → (N, d_w).
    pub fn mapping(&self, z: &Tensor) -> Result<Tensor> {
        self.check_latents(z)?;
        let mut tape = Tape::new();
        let vars = self.register(&mut tape, false);
        let zv = tape.constant(z.clone());
        let w = self.mapping_on(&mut tape, &vars, zv)?;
        Ok(tape.value(w).clone())
    }

    /// Synthesis-only generation from given w rows (Ĝ).
    pub fn generate_from_w(&self, w: &Tensor) -> Result<ImageBatch> {
        if w.shape().len() != 2 || w.shape()[1] != W_DIM {
            return Err(Error::ShapeMismatch {
                op: "MiniStyleGen::generate_from_w",
                details: format!("expected (N,{W_DIM}), got {:?}", w.shape()),
            });
        }
        w.check_finite("synthesis input")?;
        let n = w.shape()[0];
        let chunks = n.div_ceil(INFER_CHUNK);
        let parts: Vec<Result<Vec<Tensor>>> = par_map_indexed(chunks, |c| {
            let start = c * INFER_CHUNK;
            let len = INFER_CHUNK.min(n - start);
            let wc = Tensor::new(vec![len, W_DIM], w.data()[start * W_DIM..(start + len) * W_DIM].to_vec())?;
            let mut tape = Tape::new();
            let vars = self.register(&mut tape, false);
            let wv = tape.constant(wc);
            let out = self.synthesize_on(&mut tape, &vars, wv)?;
            Ok((0..len).map(|i| tape.value(out).index_axis0(i)).collect())
        });
        let mut items = Vec::with_capacity(n);
        for p in parts {
            items.extend(p?);
        }
        ImageBatch::from_items(&items, None)
    }

    /// Estimate w̄ as the mean mapping of `n_samples` standard-normal draws
    /// and store it. Returns the estimate.
    pub fn compute_w_bar(&mut self, n_samples: usize, seed: u64) -> Result<Tensor> {
        if n_samples == 0 {
            return Err(Error::InvalidArgument("compute_w_bar needs n_samples >= 1".into()));
        }
        let mut acc = vec![0.0f64; W_DIM];
        let chunk = 256;
        let mut done = 0usize;
        while done < n_samples {
            let len = chunk.min(n_samples - done);
            let mut data = Vec::with_capacity(len * LATENT_DIM);
            for i in 0..len {
                let mut r = item_rng(seed, stream::W_BAR, (done + i) as u64);
                for _ in 0..LATENT_DIM {
                    data.push(normal(&mut r) as f32);
                }
            }
            let z = Tensor::new(vec![len, LATENT_DIM], data)?;
            let w = self.mapping(&z)?;
            for row in 0..len {
                for (a, &v) in acc.iter_mut().zip(w.row(row)) {
                    *a += v as f64;
                }
            }
            done += len;
        }
        let mean: Vec<f32> = acc.iter().map(|&v| (v / n_samples as f64) as f32).collect();
        self.w_bar = Tensor::new(vec![W_DIM], mean)?;
        Ok(self.w_bar.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{sample_latents, LatentDist};

    fn latents(n: usize, seed: u64) -> Tensor {
        sample_latents(n, LATENT_DIM, LatentDist::StandardNormal, seed)
    }

    #[test]
    fn outputs_live_in_unit_interval() {
        let g = MiniStyleGen::init(5);
        let imgs = g.generate(&latents(3, 1), 1.0).unwrap();
        assert!(imgs.images().data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert_eq!(imgs.images().shape(), &[3, 3, 32, 32]);
    }

    #[test]
    fn alpha_one_equals_untruncated_mapping() {
        let mut g = MiniStyleGen::init(5);
        g.compute_w_bar(64, 2).unwrap();
        let z = latents(4, 3);
        let w = g.mapping(&z).unwrap();
        let wt = g.truncated_w(&z, 1.0).unwrap();
        // α·w + (1−α)·w̄ with α=1 reduces to w (exactly, given f32 1.0 and 0.0 scales)
        for (a, b) in w.data().iter().zip(wt.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        let full = g.generate(&z, 1.0).unwrap();
        let via_w = g.generate_from_w(&w).unwrap();
        assert_eq!(full.images(), via_w.images());
    }

    #[test]
    fn alpha_zero_collapses_to_w_bar() {
        let mut g = MiniStyleGen::init(7);
        g.compute_w_bar(64, 4).unwrap();
        let imgs = g.generate(&latents(3, 9), 0.0).unwrap();
        let base = g.generate_from_w(&Tensor::new(vec![1, W_DIM], g.w_bar.data().to_vec()).unwrap()).unwrap();
        for i in 0..3 {
            assert_eq!(imgs.image(i).data(), base.image(0).data(), "item {i} differs");
        }
    }

    #[test]
    fn alpha_half_is_midpoint_of_w_and_w_bar() {
        let mut g = MiniStyleGen::init(11);
        g.compute_w_bar(64, 5).unwrap();
        let z = latents(1, 21);
        let w = g.mapping(&z).unwrap();
        let midpoint: Vec<f32> = w
            .data()
            .iter()
            .zip(g.w_bar.data())
            .map(|(a, b)| 0.5 * a + 0.5 * b)
            .collect();
        let expected = g.generate_from_w(&Tensor::new(vec![1, W_DIM], midpoint).unwrap()).unwrap();
        let actual = g.generate(&z, 0.5).unwrap();
        // same arithmetic, different op order: allow tiny float slack
        let diff = expected.images().linf_distance(actual.images());
        assert!(diff < 1e-5, "midpoint mismatch {diff}");
    }

    #[test]
    fn truncation_linearity_hook() {
        let mut g = MiniStyleGen::init(13);
        g.compute_w_bar(32, 6).unwrap();
        let z = latents(5, 8);
        let alpha = 0.7f64;
        let w = g.mapping(&z).unwrap();
        let wt = g.truncated_w(&z, alpha).unwrap();
        for r in 0..5 {
            for (i, (&wv, &wtv)) in w.row(r).iter().zip(wt.row(r)).enumerate() {
                let expect = alpha as f32 * wv + (1.0 - alpha as f32) * g.w_bar.data()[i];
                assert!((expect - wtv).abs() < 1e-6, "row {r} coord {i}");
            }
        }
    }

    #[test]
    fn w_bar_of_single_sample_is_that_mapping() {
        let mut g = MiniStyleGen::init(17);
        let w_bar = g.compute_w_bar(1, 77).unwrap();
        // reconstruct the single draw the estimator used
        let mut r = item_rng(77, stream::W_BAR, 0);
        let z: Vec<f32> = (0..LATENT_DIM).map(|_| normal(&mut r) as f32).collect();
        let w = g.mapping(&Tensor::new(vec![1, LATENT_DIM], z).unwrap()).unwrap();
        for (a, b) in w_bar.data().iter().zip(w.data()) {
            assert!((a - b).abs() < 1e-7);
        }
    }

    #[test]
    fn identity_mapping_w_bar_shrinks_like_a_sample_mean() {
        // weights forming an effective identity mapping: w_bar ≈ mean of n
        // standard normal draws, so ‖w_bar‖ < 3·√(d/n)
        let mut g = MiniStyleGen::init(1);
        let eye = |d: usize| {
            Tensor::from_fn(vec![d, d], move |i| if i / d == i % d { 1.0 } else { 0.0 })
        };
        g.map1_w = eye(W_DIM);
        g.map1_b = Tensor::full(vec![W_DIM], 100.0);
        g.map2_w = eye(W_DIM);
        g.map2_b = Tensor::full(vec![W_DIM], -100.0);
        let n = 1024;
        let w_bar = g.compute_w_bar(n, 31).unwrap();
        let norm = w_bar.data().iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();
        let bound = 3.0 * (W_DIM as f64 / n as f64).sqrt();
        assert!(norm < bound, "‖w_bar‖ = {norm} vs bound {bound}");
    }

    #[test]
    fn w_bar_is_reproducible() {
        let mut g1 = MiniStyleGen::init(19);
        let mut g2 = MiniStyleGen::init(19);
        let a = g1.compute_w_bar(128, 9).unwrap();
        let b = g2.compute_w_bar(128, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn non_finite_latents_are_rejected() {
        let g = MiniStyleGen::init(23);
        let mut z = latents(2, 10);
        z.data_mut()[3] = f32::NAN;
        assert!(matches!(g.generate(&z, 1.0).unwrap_err(), Error::NonFinite { .. }));
    }

    #[test]
    fn alpha_outside_range_is_rejected() {
        let g = MiniStyleGen::init(23);
        let z = latents(1, 11);
        assert!(g.generate(&z, 2.5).is_err());
        assert!(g.generate(&z, -0.1).is_err());
        assert!(g.generate(&z, 1.3).is_ok());
    }
}

//! MiniEmbedder: three conv+pool blocks, a 64-d embedding head and a
//! 10-way classifier head sharing the trunk. The embedding is the
//! penultimate activation; FID consumes it, IS consumes the classifier
//! posterior.

use super::checkpoint::Provenance;
use super::{he_init, EMBED_DIM, INFER_CHUNK, NUM_CLASSES};
use crate::data::rng::{item_rng, stream};
use crate::data::ImageBatch;
use crate::error::{Error, Result};
use crate::ops;
use crate::parallel::par_map_indexed;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

const CHANNELS: [usize; 3] = [8, 16, 32];
const INPUT_HW: usize = 32;
const FLAT: usize = CHANNELS[2] * 4 * 4;

/// Convolutional embedder + classifier.
#[derive(Debug, Clone)]
pub struct MiniEmbedder {
    pub conv1_w: Tensor,
    pub conv1_b: Tensor,
    pub conv2_w: Tensor,
    pub conv2_b: Tensor,
    pub conv3_w: Tensor,
    pub conv3_b: Tensor,
    pub fc1_w: Tensor,
    pub fc1_b: Tensor,
    pub fc2_w: Tensor,
    pub fc2_b: Tensor,
    pub provenance: Provenance,
}

/// Tape handles for the embedder parameters, in canonical order.
pub struct EmbedderVars {
    vars: Vec<Var>,
}

impl EmbedderVars {
    pub fn all(&self) -> &[Var] {
        &self.vars
    }
}

impl MiniEmbedder {
    /// Seeded He-style initialization.
    pub fn init(seed: u64) -> Self {
        let mut r = item_rng(seed, stream::TRAIN_INIT, 0);
        MiniEmbedder {
            conv1_w: he_init(&mut r, vec![CHANNELS[0], 3, 3, 3], 3 * 9, 1.0),
            conv1_b: Tensor::zeros(vec![CHANNELS[0]]),
            conv2_w: he_init(&mut r, vec![CHANNELS[1], CHANNELS[0], 3, 3], CHANNELS[0] * 9, 1.0),
            conv2_b: Tensor::zeros(vec![CHANNELS[1]]),
            conv3_w: he_init(&mut r, vec![CHANNELS[2], CHANNELS[1], 3, 3], CHANNELS[1] * 9, 1.0),
            conv3_b: Tensor::zeros(vec![CHANNELS[2]]),
            fc1_w: he_init(&mut r, vec![FLAT, EMBED_DIM], FLAT, 1.0),
            fc1_b: Tensor::zeros(vec![EMBED_DIM]),
            fc2_w: he_init(&mut r, vec![EMBED_DIM, NUM_CLASSES], EMBED_DIM, 1.0),
            fc2_b: Tensor::zeros(vec![NUM_CLASSES]),
            provenance: Provenance::untrained(seed),
        }
    }

    /// All parameters zero: constant embedding, uniform posterior.
    pub fn zeros() -> Self {
        MiniEmbedder {
            conv1_w: Tensor::zeros(vec![CHANNELS[0], 3, 3, 3]),
            conv1_b: Tensor::zeros(vec![CHANNELS[0]]),
            conv2_w: Tensor::zeros(vec![CHANNELS[1], CHANNELS[0], 3, 3]),
            conv2_b: Tensor::zeros(vec![CHANNELS[1]]),
            conv3_w: Tensor::zeros(vec![CHANNELS[2], CHANNELS[1], 3, 3]),
            conv3_b: Tensor::zeros(vec![CHANNELS[2]]),
            fc1_w: Tensor::zeros(vec![FLAT, EMBED_DIM]),
            fc1_b: Tensor::zeros(vec![EMBED_DIM]),
            fc2_w: Tensor::zeros(vec![EMBED_DIM, NUM_CLASSES]),
            fc2_b: Tensor::zeros(vec![NUM_CLASSES]),
            provenance: Provenance::untrained(0),
        }
    }

    /// Canonical (name, tensor) parameter list; checkpoint payload order.
    pub fn named_params(&self) -> Vec<(&'static str, &Tensor)> {
        vec![
            ("conv1.weight", &self.conv1_w),
            ("conv1.bias", &self.conv1_b),
            ("conv2.weight", &self.conv2_w),
            ("conv2.bias", &self.conv2_b),
            ("conv3.weight", &self.conv3_w),
            ("conv3.bias", &self.conv3_b),
            ("fc1.weight", &self.fc1_w),
            ("fc1.bias", &self.fc1_b),
            ("fc2.weight", &self.fc2_w),
            ("fc2.bias", &self.fc2_b),
        ]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.conv1_w,
            &mut self.conv1_b,
            &mut self.conv2_w,
            &mut self.conv2_b,
            &mut self.conv3_w,
            &mut self.conv3_b,
            &mut self.fc1_w,
            &mut self.fc1_b,
            &mut self.fc2_w,
            &mut self.fc2_b,
        ]
    }

    /// Register parameters on a tape; `trainable` routes gradients to them.
    pub fn register(&self, tape: &mut Tape, trainable: bool) -> EmbedderVars {
        let vars = self
            .named_params()
            .into_iter()
            .map(|(_, t)| tape.leaf(t.clone(), trainable))
            .collect();
        EmbedderVars { vars }
    }

    /// Trunk + embedding head: (N,3,32,32) → (N, d_e).
    pub fn embed_on(&self, tape: &mut Tape, v: &EmbedderVars, x: Var) -> Result<Var> {
        let p = &v.vars;
        let mut h = tape.conv2d(x, p[0], 1)?;
        h = tape.add_channel_bias(h, p[1])?;
        h = tape.relu(h);
        h = tape.avg_pool2(h)?;
        h = tape.conv2d(h, p[2], 1)?;
        h = tape.add_channel_bias(h, p[3])?;
        h = tape.relu(h);
        h = tape.avg_pool2(h)?;
        h = tape.conv2d(h, p[4], 1)?;
        h = tape.add_channel_bias(h, p[5])?;
        h = tape.relu(h);
        h = tape.avg_pool2(h)?;
        let n = tape.value(h).shape()[0];
        h = tape.reshape(h, vec![n, FLAT])?;
        h = tape.matmul(h, p[6])?;
        h = tape.add_bias(h, p[7])?;
        Ok(tape.relu(h))
    }

    /// Classifier head on top of an embedding: (N, d_e) → (N, C).
    pub fn logits_from_embedding_on(&self, tape: &mut Tape, v: &EmbedderVars, emb: Var) -> Result<Var> {
        let p = &v.vars;
        let l = tape.matmul(emb, p[8])?;
        tape.add_bias(l, p[9])
    }

    /// Full forward: returns (embedding, logits).
    pub fn forward_on(&self, tape: &mut Tape, v: &EmbedderVars, x: Var) -> Result<(Var, Var)> {
        let emb = self.embed_on(tape, v, x)?;
        let logits = self.logits_from_embedding_on(tape, v, emb)?;
        Ok((emb, logits))
    }

    fn check_batch(&self, batch: &ImageBatch) -> Result<()> {
        let s = batch.images().shape();
        if s[1] != 3 || s[2] != INPUT_HW || s[3] != INPUT_HW {
            return Err(Error::ShapeMismatch {
                op: "MiniEmbedder",
                details: format!("expected (N,3,{INPUT_HW},{INPUT_HW}), got {s:?}"),
            });
        }
        // ImageBatch enforces [0,1] on construction; re-check NaN cheaply here
        batch.images().check_finite("embedder input")
    }

    fn run_heads(&self, batch: &ImageBatch, want_logits: bool) -> Result<(Tensor, Option<Tensor>)> {
        self.check_batch(batch)?;
        let n = batch.len();
        let chunks = n.div_ceil(INFER_CHUNK);
        let parts: Vec<Result<(Vec<f32>, Vec<f32>)>> = par_map_indexed(chunks, |c| {
            let start = c * INFER_CHUNK;
            let len = INFER_CHUNK.min(n - start);
            let sub = batch.slice(start, len);
            let mut tape = Tape::new();
            let vars = self.register(&mut tape, false);
            let x = tape.constant(sub.images().clone());
            let (emb, logits) = self.forward_on(&mut tape, &vars, x)?;
            let e = tape.value(emb).data().to_vec();
            let l = if want_logits { tape.value(logits).data().to_vec() } else { Vec::new() };
            Ok((e, l))
        });
        let mut emb = Vec::with_capacity(n * EMBED_DIM);
        let mut logits = Vec::with_capacity(if want_logits { n * NUM_CLASSES } else { 0 });
        for part in parts {
            let (e, l) = part?;
            emb.extend_from_slice(&e);
            logits.extend_from_slice(&l);
        }
        let emb = Tensor::new(vec![n, EMBED_DIM], emb)?;
        let logits = if want_logits { Some(Tensor::new(vec![n, NUM_CLASSES], logits)?) } else { None };
        Ok((emb, logits))
    }

    /// Embedding rows f(x_i) for a batch.
    pub fn embed(&self, batch: &ImageBatch) -> Result<Tensor> {
        Ok(self.run_heads(batch, false)?.0)
    }

    /// Raw classifier logits.
    pub fn logits(&self, batch: &ImageBatch) -> Result<Tensor> {
        Ok(self.run_heads(batch, true)?.1.unwrap())
    }

    /// Class posterior rows softmax(logits)_i.
    pub fn posterior(&self, batch: &ImageBatch) -> Result<Tensor> {
        let logits = self.logits(batch)?;
        let (n, c) = (logits.shape()[0], logits.shape()[1]);
        Tensor::new(vec![n, c], ops::softmax_rows(logits.data(), n, c))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::argmax_rows;

    fn small_batch(n: usize, seed: u64) -> ImageBatch {
        crate::data::random_noise_images(n, seed)
    }

    #[test]
    fn embed_is_deterministic_bitwise() {
        let m = MiniEmbedder::init(3);
        let b = small_batch(5, 1);
        let e1 = m.embed(&b).unwrap();
        let e2 = m.embed(&b).unwrap();
        assert_eq!(e1, e2);
    }

    #[test]
    fn embed_is_continuous_under_tiny_perturbation() {
        let m = MiniEmbedder::init(3);
        let b = small_batch(2, 2);
        let mut shifted = b.images().clone();
        for v in shifted.data_mut() {
            *v = (*v + 1e-6).min(1.0);
        }
        let b2 = ImageBatch::new(shifted, None).unwrap();
        let (e1, e2) = (m.embed(&b).unwrap(), m.embed(&b2).unwrap());
        let diff = e1.l2_distance(&e2);
        assert!(diff < 1e-3, "embedding moved {diff}");
    }

    #[test]
    fn zero_model_embeds_every_image_identically() {
        let m = MiniEmbedder::zeros();
        let b = small_batch(4, 9);
        let e = m.embed(&b).unwrap();
        let first = e.row(0).to_vec();
        for r in 1..4 {
            assert_eq!(e.row(r), &first[..]);
        }
    }

    #[test]
    fn posterior_rows_sum_to_one() {
        let m = MiniEmbedder::init(7);
        let b = small_batch(6, 4);
        let p = m.posterior(&b).unwrap();
        for r in 0..6 {
            let s: f32 = p.row(r).iter().sum();
            assert!((s - 1.0).abs() < 1e-6, "row {r} sums to {s}");
        }
    }

    #[test]
    fn zero_model_posterior_is_uniform() {
        let m = MiniEmbedder::zeros();
        let b = small_batch(3, 5);
        let p = m.posterior(&b).unwrap();
        for r in 0..3 {
            for &v in p.row(r) {
                assert!((v - 0.1).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn posterior_is_consistent_with_logits_argmax() {
        let m = MiniEmbedder::init(11);
        let b = small_batch(8, 6);
        let p = m.posterior(&b).unwrap();
        let l = m.logits(&b).unwrap();
        assert_eq!(argmax_rows(&p), argmax_rows(&l));
    }

    #[test]
    fn classifier_head_reproduces_posterior_from_embedding() {
        // shared-trunk invariant: softmax(emb · W2 + b2) == posterior within 1e-6
        let m = MiniEmbedder::init(13);
        let b = small_batch(4, 8);
        let emb = m.embed(&b).unwrap();
        let p = m.posterior(&b).unwrap();

        let logits = ops::matmul(emb.data(), m.fc2_w.data(), 4, EMBED_DIM, NUM_CLASSES);
        let logits: Vec<f32> = logits
            .chunks(NUM_CLASSES)
            .flat_map(|row| row.iter().zip(m.fc2_b.data()).map(|(a, b)| a + b).collect::<Vec<_>>())
            .collect();
        let q = ops::softmax_rows(&logits, 4, NUM_CLASSES);
        for (a, b) in p.data().iter().zip(&q) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn wrong_shape_is_rejected() {
        let m = MiniEmbedder::init(1);
        let b = ImageBatch::new(Tensor::zeros(vec![1, 3, 16, 16]), None).unwrap();
        assert!(m.embed(&b).is_err());
    }
}

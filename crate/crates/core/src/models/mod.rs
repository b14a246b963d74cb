//! The desk-scale embedder and style-based generator, plus checkpoint
//! serialization.

mod checkpoint;
mod embedder;
mod generator;

pub use checkpoint::{ModelCheckpoint, ModelKind, Provenance, TrainingKind, CHECKPOINT_MAGIC};
pub use embedder::{EmbedderVars, MiniEmbedder};
pub use generator::{GeneratorVars, MiniStyleGen};

use crate::data::rng as seeded;
use crate::tensor::Tensor;
use rand_chacha::ChaCha8Rng;

/// Embedding width d_e.
pub const EMBED_DIM: usize = 64;
/// Classifier classes C.
pub const NUM_CLASSES: usize = 10;
/// Generator input latent width d_z.
pub const LATENT_DIM: usize = 64;
/// Intermediate latent width d_w.
pub const W_DIM: usize = 64;

/// Batch rows processed per tape during inference.
pub(crate) const INFER_CHUNK: usize = 32;

pub(crate) fn he_init(rng: &mut ChaCha8Rng, shape: Vec<usize>, fan_in: usize, gain: f64) -> Tensor {
    let sigma = gain * (2.0 / fan_in as f64).sqrt();
    let numel: usize = shape.iter().product();
    let data: Vec<f32> = (0..numel).map(|_| (sigma * seeded::normal(rng)) as f32).collect();
    Tensor::new(shape, data).unwrap()
}

/// Row index of the maximum entry, first match wins.
pub fn argmax_rows(t: &Tensor) -> Vec<usize> {
    let cols = t.shape()[1];
    (0..t.shape()[0])
        .map(|r| {
            let row = t.row(r);
            let mut best = 0usize;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            let _ = cols;
            best
        })
        .collect()
}

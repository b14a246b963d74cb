//! Desk-scale laboratory for probing the robustness of GAN quality measures.
//!
//! The crate implements the Inception Score and Fréchet distance over a small
//! convolutional embedder, a style-based toy generator, pixel- and
//! latent-space attacks on both metrics, and adversarial training of the
//! embedder (the robustified "R-FID"/"R-IS" variants). Everything is seeded,
//! CPU-only and parallelism-invariant.

pub mod attacks;
pub mod data;
pub mod error;
pub mod metrics;
pub mod models;
pub mod ops;
pub mod oracle;
pub mod parallel;
pub mod presets;
pub mod studies;
pub mod tape;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use tensor::Tensor;

//! Image-source specifications shared by the metric/attack/study commands.
//!
//! Grammar: `images:<path>` (a .tnsr tensor file, optional sibling labels
//! file with the `.labels.tnsr` suffix), `dataset:train` / `dataset:eval`
//! (the procedural toy dataset), or `generator:<checkpoint>` (sampled with
//! `--alpha` and `--n`).

use crate::errors::{CliError, CliResult};
use rfidlab_core::data::{
    generate_split, read_labels, read_tensor, sample_latents, ImageBatch, LatentDist, Split,
    ToyDatasetSpec,
};
use rfidlab_core::models::{ModelCheckpoint, MiniStyleGen, LATENT_DIM};
use serde::Serialize;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, PartialEq)]
pub enum SourceSpec {
    Images(PathBuf),
    Dataset(String),
    Generator(PathBuf),
}

impl SourceSpec {
    pub fn parse(s: &str) -> CliResult<Self> {
        if let Some(path) = s.strip_prefix("images:") {
            Ok(SourceSpec::Images(PathBuf::from(path)))
        } else if let Some(split) = s.strip_prefix("dataset:") {
            if split != "train" && split != "eval" {
                return Err(CliError::Usage(format!(
                    "dataset split must be `train` or `eval`, got `{split}`"
                )));
            }
            Ok(SourceSpec::Dataset(split.to_string()))
        } else if let Some(path) = s.strip_prefix("generator:") {
            Ok(SourceSpec::Generator(PathBuf::from(path)))
        } else {
            Err(CliError::Usage(format!(
                "source `{s}` must start with images:, dataset: or generator:"
            )))
        }
    }
}

/// Everything needed to materialize a [`SourceSpec`].
pub struct SourceContext {
    pub data_seed: u64,
    pub n_train_per_class: usize,
    pub n_eval_per_class: usize,
    pub alpha: f64,
    pub n: usize,
    pub sample_seed: u64,
}

pub fn load_image_source(spec: &SourceSpec, ctx: &SourceContext) -> CliResult<ImageBatch> {
    match spec {
        SourceSpec::Images(path) => {
            let images = read_tensor(path)?;
            let labels_path = sibling_labels(path);
            let labels = if labels_path.exists() { Some(read_labels(&labels_path)?) } else { None };
            let batch = ImageBatch::new(images, labels)?;
            let take = ctx.n.min(batch.len());
            Ok(batch.slice(0, take))
        }
        SourceSpec::Dataset(split) => {
            let spec = ToyDatasetSpec::new(ctx.n_train_per_class, ctx.n_eval_per_class, ctx.data_seed);
            let which = if split == "train" { Split::Train } else { Split::Eval };
            let batch = generate_split(&spec, which);
            let take = ctx.n.min(batch.len());
            Ok(batch.slice(0, take))
        }
        SourceSpec::Generator(path) => {
            let gen = load_generator(path)?;
            let z = sample_latents(ctx.n, LATENT_DIM, LatentDist::StandardNormal, ctx.sample_seed);
            Ok(gen.generate(&z, ctx.alpha)?)
        }
    }
}

fn sibling_labels(images: &Path) -> PathBuf {
    let name = images
        .file_name()
        .map(|n| n.to_string_lossy().replace(".images.tnsr", ".labels.tnsr"))
        .unwrap_or_default();
    images.with_file_name(name)
}

pub fn load_embedder(path: &Path) -> CliResult<rfidlab_core::models::MiniEmbedder> {
    Ok(ModelCheckpoint::load(path)?.to_embedder()?)
}

pub fn load_generator(path: &Path) -> CliResult<MiniStyleGen> {
    Ok(ModelCheckpoint::load(path)?.to_generator()?)
}

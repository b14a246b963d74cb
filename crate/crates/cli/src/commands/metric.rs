//! `rfidlab metric`: compute FID or IS between/on image sources.

use crate::config::{config_digest, load_config_file};
use crate::errors::{CliError, CliResult};
use crate::sources::{load_embedder, load_image_source, SourceContext, SourceSpec};
use clap::Args;
use rfidlab_core::metrics::{fid, inception_score};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

#[derive(Debug, Args)]
pub struct MetricArgs {
    /// fid | is
    #[arg(long)]
    pub metric: String,
    #[arg(long)]
    pub embedder: PathBuf,
    /// Real-side source (fid only)
    #[arg(long)]
    pub real: Option<String>,
    /// Generated/scored source
    #[arg(long)]
    pub gen: Option<String>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// IS split count
    #[arg(long)]
    pub splits: Option<usize>,
    /// Samples to draw/keep per source
    #[arg(long)]
    pub n: Option<usize>,
    /// Truncation for generator sources
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub data_seed: Option<u64>,
    #[arg(long)]
    pub n_train_per_class: Option<usize>,
    #[arg(long)]
    pub n_eval_per_class: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricFileConfig {
    pub real: Option<String>,
    pub gen: Option<String>,
    pub splits: Option<usize>,
    pub n: Option<usize>,
    pub alpha: Option<f64>,
    pub seed: Option<u64>,
    pub data_seed: Option<u64>,
}

#[derive(Debug, Serialize)]
struct ResolvedMetric {
    metric: String,
    real: Option<SourceSpec>,
    gen: SourceSpec,
    splits: usize,
    n: usize,
    alpha: f64,
    seed: u64,
    data_seed: u64,
}

pub fn run(args: &MetricArgs) -> CliResult<()> {
    let file: MetricFileConfig = load_config_file(args.config.as_deref())?;
    let gen_str = args
        .gen
        .clone()
        .or(file.gen.clone())
        .ok_or_else(|| CliError::Usage("--gen source is required".into()))?;
    let real_str = args.real.clone().or(file.real.clone());

    let resolved = ResolvedMetric {
        metric: args.metric.clone(),
        real: real_str.as_deref().map(SourceSpec::parse).transpose()?,
        gen: SourceSpec::parse(&gen_str)?,
        splits: args.splits.or(file.splits).unwrap_or(10),
        n: args.n.or(file.n).unwrap_or(4096),
        alpha: args.alpha.or(file.alpha).unwrap_or(1.0),
        seed: args.seed.or(file.seed).unwrap_or(1),
        data_seed: args.data_seed.or(file.data_seed).unwrap_or(1),
    };
    let digest = config_digest(&resolved);

    let embedder = load_embedder(&args.embedder)?;
    let ctx = SourceContext {
        data_seed: resolved.data_seed,
        n_train_per_class: args.n_train_per_class.unwrap_or(300),
        n_eval_per_class: args.n_eval_per_class.unwrap_or(420),
        alpha: resolved.alpha,
        n: resolved.n,
        sample_seed: resolved.seed,
    };

    let mut report = match resolved.metric.as_str() {
        "fid" => {
            let real_spec = resolved
                .real
                .as_ref()
                .ok_or_else(|| CliError::Usage("fid needs --real".into()))?;
            let real = load_image_source(real_spec, &ctx)?;
            let generated = load_image_source(&resolved.gen, &ctx)?;
            fid(&embedder, &real, &generated)?
        }
        "is" => {
            let batch = load_image_source(&resolved.gen, &ctx)?;
            inception_score(&embedder, &batch, resolved.splits)?
        }
        other => return Err(CliError::Usage(format!("unknown metric `{other}` (expected fid or is)"))),
    };
    report.config_digest = digest;
    report.seed = resolved.seed;

    std::fs::create_dir_all(&args.out)?;
    let line = report.to_json_line();
    std::fs::write(args.out.join("metric.json"), format!("{line}\n"))?;
    println!("{line}");
    Ok(())
}

//! `rfidlab truncation-study` and `rfidlab degradation-study`.

use crate::config::{config_digest, load_config_file};
use crate::errors::CliResult;
use crate::sources::{load_embedder, load_generator, load_image_source, SourceContext, SourceSpec};
use clap::Args;
use rfidlab_core::studies::{degradation_study, truncation_study};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

#[derive(Debug, Args)]
pub struct TruncationArgs {
    #[arg(long)]
    pub embedder: PathBuf,
    #[arg(long)]
    pub generator: PathBuf,
    /// Real-image source; defaults to the toy eval split
    #[arg(long)]
    pub real: Option<String>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Truncation levels, e.g. 0.7,0.9,1.0
    #[arg(long, value_delimiter = ',')]
    pub alphas: Option<Vec<f64>>,
    /// Generated samples per truncation level
    #[arg(long)]
    pub n: Option<usize>,
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
pub struct TruncationFileConfig {
    pub real: Option<String>,
    pub alphas: Option<Vec<f64>>,
    pub n: Option<usize>,
    pub seed: Option<u64>,
    pub data_seed: Option<u64>,
}

#[derive(Debug, Serialize)]
struct ResolvedTruncation {
    real: SourceSpec,
    alphas: Vec<f64>,
    n: usize,
    seed: u64,
    data_seed: u64,
}

pub fn run_truncation(args: &TruncationArgs) -> CliResult<()> {
    let file: TruncationFileConfig = load_config_file(args.config.as_deref())?;
    let real_str = args
        .real
        .clone()
        .or(file.real.clone())
        .unwrap_or_else(|| "dataset:eval".to_string());
    let resolved = ResolvedTruncation {
        real: SourceSpec::parse(&real_str)?,
        alphas: args.alphas.clone().or(file.alphas).unwrap_or_else(|| vec![0.7, 0.9, 1.0]),
        n: args.n.or(file.n).unwrap_or(4096),
        seed: args.seed.or(file.seed).unwrap_or(1),
        data_seed: args.data_seed.or(file.data_seed).unwrap_or(1),
    };
    let digest = config_digest(&resolved);

    let embedder = load_embedder(&args.embedder)?;
    let generator = load_generator(&args.generator)?;
    let ctx = SourceContext {
        data_seed: resolved.data_seed,
        n_train_per_class: args.n_train_per_class.unwrap_or(300),
        n_eval_per_class: args.n_eval_per_class.unwrap_or(420),
        alpha: 1.0,
        n: usize::MAX,
        sample_seed: resolved.seed,
    };
    let real = load_image_source(&resolved.real, &ctx)?;

    let study = truncation_study(&embedder, &generator, &real, &resolved.alphas, resolved.n, resolved.seed)?;
    let mut report = study.report;
    report.config_digest = digest.clone();

    std::fs::create_dir_all(&args.out)?;
    std::fs::write(args.out.join("truncation.csv"), report.to_csv())?;
    std::fs::write(args.out.join("truncation.json"), report.to_json() + "\n")?;
    println!("wrote truncation.csv with {} rows (digest {digest})", report.rows.len());
    Ok(())
}

#[derive(Debug, Args)]
pub struct DegradationArgs {
    #[arg(long)]
    pub embedder: PathBuf,
    /// Clean source; defaults to the toy eval split
    #[arg(long)]
    pub real: Option<String>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Noise σ list, e.g. 0.1,0.2,0.3,0.4
    #[arg(long, value_delimiter = ',')]
    pub sigma_noise: Option<Vec<f64>>,
    /// Blur σ list, e.g. 1,2,3,4
    #[arg(long, value_delimiter = ',')]
    pub sigma_blur: Option<Vec<f64>>,
    /// Samples from the clean source
    #[arg(long)]
    pub n: Option<usize>,
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
pub struct DegradationFileConfig {
    pub real: Option<String>,
    pub sigma_noise: Option<Vec<f64>>,
    pub sigma_blur: Option<Vec<f64>>,
    pub n: Option<usize>,
    pub seed: Option<u64>,
    pub data_seed: Option<u64>,
}

#[derive(Debug, Serialize)]
struct ResolvedDegradation {
    real: SourceSpec,
    sigma_noise: Vec<f64>,
    sigma_blur: Vec<f64>,
    n: usize,
    seed: u64,
    data_seed: u64,
}

pub fn run_degradation(args: &DegradationArgs) -> CliResult<()> {
    let file: DegradationFileConfig = load_config_file(args.config.as_deref())?;
    let real_str = args
        .real
        .clone()
        .or(file.real.clone())
        .unwrap_or_else(|| "dataset:eval".to_string());
    let resolved = ResolvedDegradation {
        real: SourceSpec::parse(&real_str)?,
        sigma_noise: args
            .sigma_noise
            .clone()
            .or(file.sigma_noise)
            .unwrap_or_else(|| vec![0.1, 0.2, 0.3, 0.4]),
        sigma_blur: args
            .sigma_blur
            .clone()
            .or(file.sigma_blur)
            .unwrap_or_else(|| vec![1.0, 2.0, 3.0, 4.0]),
        n: args.n.or(file.n).unwrap_or(2048),
        seed: args.seed.or(file.seed).unwrap_or(1),
        data_seed: args.data_seed.or(file.data_seed).unwrap_or(1),
    };
    let digest = config_digest(&resolved);

    let embedder = load_embedder(&args.embedder)?;
    let ctx = SourceContext {
        data_seed: resolved.data_seed,
        n_train_per_class: args.n_train_per_class.unwrap_or(300),
        n_eval_per_class: args.n_eval_per_class.unwrap_or(420),
        alpha: 1.0,
        n: resolved.n,
        sample_seed: resolved.seed,
    };
    let clean = load_image_source(&resolved.real, &ctx)?;

    let study = degradation_study(&embedder, &clean, &resolved.sigma_noise, &resolved.sigma_blur, resolved.seed)?;
    let mut report = study.report;
    report.config_digest = digest.clone();

    std::fs::create_dir_all(&args.out)?;
    std::fs::write(args.out.join("degradation.csv"), report.to_csv())?;
    std::fs::write(args.out.join("degradation.json"), report.to_json() + "\n")?;
    println!("wrote degradation.csv with {} rows (digest {digest})", report.rows.len());
    Ok(())
}

//! `rfidlab attack`: run one attack kind over an ε (or α) sweep and emit the
//! before/after metric table plus per-row payloads.

use crate::config::{config_digest, load_config_file};
use crate::errors::{CliError, CliResult};
use crate::sources::{load_embedder, load_generator, load_image_source, SourceContext, SourceSpec};
use clap::Args;
use rfidlab_core::attacks::{AttackKind, AttackResult, AttackSpec, InitMode};
use rfidlab_core::data::{write_image_batch, write_tensor};
use rfidlab_core::studies::attack_sweep;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Args)]
pub struct AttackArgs {
    /// min-is | max-fid | max-is | min-fid | latent-z | latent-w
    #[arg(long)]
    pub kind: String,
    #[arg(long)]
    pub embedder: PathBuf,
    /// Generator checkpoint (latent kinds)
    #[arg(long)]
    pub generator: Option<PathBuf>,
    /// Real-image source; defaults to the eval split of the toy dataset
    #[arg(long)]
    pub real: Option<String>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// ε sweep for bounded kinds, e.g. 0.01,0.02,0.03
    #[arg(long, value_delimiter = ',')]
    pub eps_list: Option<Vec<f64>>,
    /// α sweep for latent kinds
    #[arg(long, value_delimiter = ',')]
    pub alpha_list: Option<Vec<f64>>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub step_size: Option<f64>,
    /// Items attacked / synthesized per row
    #[arg(long)]
    pub n: Option<usize>,
    /// zero | uniform-random | gaussian-random
    #[arg(long)]
    pub init: Option<String>,
    #[arg(long)]
    pub refresh_target: Option<bool>,
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
pub struct AttackFileConfig {
    pub real: Option<String>,
    pub eps_list: Option<Vec<f64>>,
    pub alpha_list: Option<Vec<f64>>,
    pub steps: Option<usize>,
    pub step_size: Option<f64>,
    pub n: Option<usize>,
    pub init: Option<String>,
    pub refresh_target: Option<bool>,
    pub seed: Option<u64>,
    pub data_seed: Option<u64>,
}

#[derive(Debug, Serialize)]
struct ResolvedAttack {
    kind: String,
    real: SourceSpec,
    params: Vec<f64>,
    steps: usize,
    step_size: Option<f64>,
    n: usize,
    init: Option<String>,
    refresh_target: bool,
    seed: u64,
    data_seed: u64,
}

fn parse_kind(s: &str) -> CliResult<AttackKind> {
    Ok(match s {
        "min-is" => AttackKind::MinIs,
        "max-fid" => AttackKind::MaxFid,
        "max-is" => AttackKind::MaxIs,
        "min-fid" => AttackKind::MinFid,
        "latent-z" => AttackKind::LatentZ,
        "latent-w" => AttackKind::LatentW,
        other => return Err(CliError::Usage(format!("unknown attack kind `{other}`"))),
    })
}

fn parse_init(s: &str) -> CliResult<InitMode> {
    Ok(match s {
        "zero" => InitMode::Zero,
        "uniform-random" => InitMode::UniformRandom,
        "gaussian-random" => InitMode::GaussianRandom,
        other => return Err(CliError::Usage(format!("unknown init mode `{other}`"))),
    })
}

/// Serializable attack summary (payload tensors live in sibling files).
#[derive(Debug, Serialize)]
struct AttackSummary<'a> {
    kind: &'a str,
    param: f64,
    before: &'a rfidlab_core::metrics::MetricReport,
    after: &'a rfidlab_core::metrics::MetricReport,
    magnitude: &'a rfidlab_core::attacks::PerturbationSummary,
    per_item_loss: &'a [f64],
    loss_trace: &'a [f64],
    monotone_fraction: f64,
    steps_taken: usize,
    config_digest: &'a str,
    seed: u64,
}

fn write_row(
    dir: &Path,
    kind: &str,
    param: f64,
    result: &AttackResult,
    digest: &str,
    seed: u64,
) -> CliResult<()> {
    std::fs::create_dir_all(dir)?;
    let summary = AttackSummary {
        kind,
        param,
        before: &result.before,
        after: &result.after,
        magnitude: &result.magnitude,
        per_item_loss: &result.per_item_loss,
        loss_trace: &result.loss_trace,
        monotone_fraction: result.monotone_fraction,
        steps_taken: result.steps_taken,
        config_digest: digest,
        seed,
    };
    std::fs::write(
        dir.join("attack.json"),
        serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n",
    )?;
    write_image_batch(dir, "adv", &result.adversarial)?;
    if let Some(latents) = &result.latents_clean {
        write_tensor(&dir.join("latents_clean.tnsr"), latents)?;
    }
    if let Some(latents) = &result.latents_adv {
        write_tensor(&dir.join("latents_adv.tnsr"), latents)?;
    }
    Ok(())
}

pub fn run(args: &AttackArgs) -> CliResult<()> {
    let file: AttackFileConfig = load_config_file(args.config.as_deref())?;
    let kind = parse_kind(&args.kind)?;

    let params = match (kind, &args.eps_list, &file.eps_list, &args.alpha_list, &file.alpha_list) {
        (AttackKind::MinIs | AttackKind::MaxFid, Some(e), ..) => e.clone(),
        (AttackKind::MinIs | AttackKind::MaxFid, None, Some(e), ..) => e.clone(),
        (AttackKind::MinIs | AttackKind::MaxFid, ..) => {
            return Err(CliError::Usage("bounded attacks need --eps-list".into()))
        }
        (AttackKind::LatentZ | AttackKind::LatentW, _, _, Some(a), _) => a.clone(),
        (AttackKind::LatentZ | AttackKind::LatentW, _, _, None, Some(a)) => a.clone(),
        (AttackKind::LatentZ | AttackKind::LatentW, ..) => vec![1.0],
        _ => vec![0.0], // synthesis kinds take no sweep parameter
    };

    let real_str = args
        .real
        .clone()
        .or(file.real.clone())
        .unwrap_or_else(|| "dataset:eval".to_string());

    let resolved = ResolvedAttack {
        kind: args.kind.clone(),
        real: SourceSpec::parse(&real_str)?,
        params: params.clone(),
        steps: args.steps.or(file.steps).unwrap_or_else(|| {
            AttackSpec::defaults(kind, *params.first().unwrap_or(&0.0), 0).steps
        }),
        step_size: args.step_size.or(file.step_size),
        n: args.n.or(file.n).unwrap_or(256),
        init: args.init.clone().or(file.init.clone()),
        refresh_target: args.refresh_target.or(file.refresh_target).unwrap_or(true),
        seed: args.seed.or(file.seed).unwrap_or(1),
        data_seed: args.data_seed.or(file.data_seed).unwrap_or(1),
    };
    let digest = config_digest(&resolved);

    let embedder = load_embedder(&args.embedder)?;
    let generator = match &args.generator {
        Some(p) => Some(load_generator(p)?),
        None => None,
    };
    if kind.is_latent() && generator.is_none() {
        return Err(CliError::Usage("latent attacks need --generator".into()));
    }

    let ctx = SourceContext {
        data_seed: resolved.data_seed,
        n_train_per_class: args.n_train_per_class.unwrap_or(300),
        n_eval_per_class: args.n_eval_per_class.unwrap_or(420),
        alpha: 1.0,
        n: resolved.n,
        sample_seed: resolved.seed,
    };
    let real = load_image_source(&resolved.real, &ctx)?;

    let mut base = AttackSpec::defaults(kind, *resolved.params.first().unwrap_or(&0.0), resolved.seed);
    base.steps = resolved.steps;
    base.refresh_target = resolved.refresh_target;
    if let Some(init) = &resolved.init {
        base.init = parse_init(init)?;
    }
    if let Some(s) = resolved.step_size {
        base.step_size = s;
    }

    let sweep = attack_sweep(
        &embedder,
        generator.as_ref(),
        &real,
        &base,
        &resolved.params,
        resolved.n,
        resolved.step_size,
    )?;

    std::fs::create_dir_all(&args.out)?;
    let mut report = sweep.report;
    report.config_digest = digest.clone();
    std::fs::write(args.out.join("sweep.csv"), report.to_csv())?;
    std::fs::write(args.out.join("sweep.json"), report.to_json() + "\n")?;
    for (param, result) in &sweep.results {
        let dir = args.out.join(format!("row_{param}"));
        write_row(&dir, &args.kind, *param, result, &digest, resolved.seed)?;
    }
    println!("wrote sweep.csv with {} rows (digest {digest})", report.rows.len());
    Ok(())
}

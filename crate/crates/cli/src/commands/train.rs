//! `rfidlab train`: produce nominal, robust or generator checkpoints.

use crate::config::{config_digest, load_config_file};
use crate::errors::{CliError, CliResult};
use crate::sources::load_embedder;
use clap::Args;
use rfidlab_core::data::{generate_dataset, ToyDatasetSpec};
use rfidlab_core::models::ModelCheckpoint;
use rfidlab_core::training::{
    kappa_preset, train_adversarial, train_generator, train_nominal, GanConfig, TrainConfig,
};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// What to train: nominal | robust | generator
    #[arg(long)]
    pub kind: String,
    /// Size preset: desk (full) or tiny (smoke tests)
    #[arg(long, default_value = "desk")]
    pub preset: String,
    /// JSON config file; flags override its fields
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    /// Explicit L2 adversarial budget (robust kind)
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Named budget: k64 | k128
    #[arg(long)]
    pub kappa_preset: Option<String>,
    #[arg(long)]
    pub n_train_per_class: Option<usize>,
    #[arg(long)]
    pub n_eval_per_class: Option<usize>,
    /// Embedder checkpoint used to record FID provenance (generator kind)
    #[arg(long)]
    pub embedder: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub data_seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainFileConfig {
    pub epochs: Option<usize>,
    pub batch: Option<usize>,
    pub lr: Option<f64>,
    pub momentum: Option<f64>,
    pub kappa: Option<f64>,
    pub kappa_preset: Option<String>,
    pub n_train_per_class: Option<usize>,
    pub n_eval_per_class: Option<usize>,
    pub seed: Option<u64>,
    pub data_seed: Option<u64>,
}

/// Fully resolved parameters; its canonical JSON feeds the config digest.
#[derive(Debug, Serialize)]
pub struct ResolvedTrain {
    pub kind: String,
    pub preset: String,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub momentum: f64,
    pub kappa: f64,
    pub n_train_per_class: usize,
    pub n_eval_per_class: usize,
    pub seed: u64,
    pub data_seed: u64,
}

/// Desk-scale defaults; `tiny` keeps smoke runs under a few seconds.
struct PresetDefaults {
    epochs_nominal: usize,
    epochs_robust: usize,
    epochs_gan: usize,
    n_train_per_class: usize,
    n_eval_per_class: usize,
}

fn preset_defaults(name: &str) -> CliResult<PresetDefaults> {
    use rfidlab_core::presets as desk;
    match name {
        "desk" => Ok(PresetDefaults {
            epochs_nominal: desk::DESK_EPOCHS_EMBEDDER,
            epochs_robust: desk::DESK_EPOCHS_EMBEDDER,
            epochs_gan: desk::DESK_EPOCHS_GAN,
            n_train_per_class: desk::DESK_N_TRAIN_PER_CLASS,
            n_eval_per_class: desk::DESK_N_EVAL_PER_CLASS,
        }),
        "tiny" => Ok(PresetDefaults {
            epochs_nominal: 1,
            epochs_robust: 1,
            epochs_gan: 1,
            n_train_per_class: 6,
            n_eval_per_class: 4,
        }),
        other => Err(CliError::Usage(format!("unknown preset `{other}` (expected desk or tiny)"))),
    }
}

#[derive(Debug, Serialize)]
struct TrainOutput<'a, L: Serialize> {
    config_digest: &'a str,
    seed: u64,
    checkpoint_digest: String,
    log: &'a L,
}

pub fn run(args: &TrainArgs) -> CliResult<()> {
    let file: TrainFileConfig = load_config_file(args.config.as_deref())?;
    let preset = preset_defaults(&args.preset)?;

    let kappa = match (&args.kappa, &args.kappa_preset, &file.kappa, &file.kappa_preset) {
        (Some(k), _, _, _) => *k,
        (None, Some(name), _, _) | (None, None, None, Some(name)) => kappa_preset(name)
            .ok_or_else(|| CliError::Usage(format!("unknown kappa preset `{name}`")))?,
        (None, None, Some(k), _) => *k,
        _ => 0.0,
    };

    let default_epochs = match args.kind.as_str() {
        "nominal" => preset.epochs_nominal,
        "robust" => preset.epochs_robust,
        "generator" => preset.epochs_gan,
        other => return Err(CliError::Usage(format!("unknown train kind `{other}`"))),
    };

    let resolved = ResolvedTrain {
        kind: args.kind.clone(),
        preset: args.preset.clone(),
        epochs: args.epochs.or(file.epochs).unwrap_or(default_epochs),
        batch: args.batch.or(file.batch).unwrap_or(64),
        lr: args.lr.or(file.lr).unwrap_or(if args.kind == "generator" {
            2e-4
        } else {
            rfidlab_core::presets::DESK_LR
        }),
        momentum: args.momentum.or(file.momentum).unwrap_or(rfidlab_core::presets::DESK_MOMENTUM),
        kappa,
        n_train_per_class: args.n_train_per_class.or(file.n_train_per_class).unwrap_or(preset.n_train_per_class),
        n_eval_per_class: args.n_eval_per_class.or(file.n_eval_per_class).unwrap_or(preset.n_eval_per_class),
        seed: args.seed.or(file.seed).unwrap_or(1),
        data_seed: args.data_seed.or(file.data_seed).unwrap_or(1),
    };
    let digest = config_digest(&resolved);

    std::fs::create_dir_all(&args.out)?;
    let dataset = generate_dataset(&ToyDatasetSpec::new(
        resolved.n_train_per_class,
        resolved.n_eval_per_class,
        resolved.data_seed,
    ));

    match resolved.kind.as_str() {
        "nominal" | "robust" => {
            let mut cfg = TrainConfig::nominal(resolved.epochs, resolved.seed);
            cfg.batch_size = resolved.batch;
            cfg.lr = resolved.lr;
            cfg.momentum = resolved.momentum;
            cfg.kappa = resolved.kappa;
            if resolved.kind == "robust" && cfg.kappa <= 0.0 {
                return Err(CliError::Usage(
                    "robust training needs --kappa or --kappa-preset".into(),
                ));
            }
            let outcome = if resolved.kind == "robust" {
                train_adversarial(&dataset.train, &dataset.eval, &cfg)?
            } else {
                train_nominal(&dataset.train, &dataset.eval, &cfg)?
            };
            let checkpoint = outcome.checkpoint();
            let name = match (&resolved.kind[..], &args.kappa_preset) {
                ("robust", Some(preset)) => format!("robust_{preset}"),
                ("robust", None) => format!("robust_kappa{}", resolved.kappa),
                _ => "nominal".to_string(),
            };
            checkpoint.save(&args.out.join(format!("{name}.ckpt")))?;
            let record = TrainOutput {
                config_digest: &digest,
                seed: resolved.seed,
                checkpoint_digest: checkpoint.digest()?,
                log: &outcome.log,
            };
            std::fs::write(
                args.out.join(format!("{name}.train.json")),
                serde_json::to_string_pretty(&record).expect("log serializes") + "\n",
            )?;
            println!(
                "wrote {name}.ckpt (clean accuracy {:.4}, digest {digest})",
                outcome.log.final_clean_accuracy
            );
        }
        "generator" => {
            let embedder = match &args.embedder {
                Some(p) => Some(load_embedder(p)?),
                None => None,
            };
            let mut cfg = GanConfig::new(resolved.epochs, resolved.seed);
            cfg.batch_size = resolved.batch;
            cfg.lr = resolved.lr;
            if args.preset == "tiny" {
                cfg.w_bar_samples = 64;
                cfg.fid_samples = 32;
            }
            let outcome = train_generator(&dataset.train, &cfg, embedder.as_ref())?;
            let checkpoint = ModelCheckpoint::from_generator(&outcome.generator);
            checkpoint.save(&args.out.join("generator.ckpt"))?;
            let record = TrainOutput {
                config_digest: &digest,
                seed: resolved.seed,
                checkpoint_digest: checkpoint.digest()?,
                log: &outcome.log,
            };
            std::fs::write(
                args.out.join("generator.train.json"),
                serde_json::to_string_pretty(&record).expect("log serializes") + "\n",
            )?;
            println!("wrote generator.ckpt (digest {digest})");
        }
        _ => unreachable!("kind validated above"),
    }
    Ok(())
}

//! Training: the nominal embedder, the robust embedder via 2-step L2 PGD
//! min-max training, the toy GAN, and accuracy evaluation. Per-item
//! gradients are computed on independent tapes and reduced in index order,
//! so checkpoints are identical for any worker count.

mod gan;
mod optim;

pub use gan::{mode_collapse_warning, train_generator, Discriminator, GanConfig, GanEpochRecord, GanLog, GanOutcome};

use crate::data::rng::{item_rng, normal, stream};
use crate::data::ImageBatch;
use crate::error::{Error, Result};
use crate::models::{argmax_rows, ModelCheckpoint, MiniEmbedder, Provenance, TrainingKind};
use crate::parallel::par_map_indexed;
use crate::tape::Tape;
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};

/// Desk-scale stand-in for the paper's κ=64 budget. The values are
/// calibrated on the toy task rather than unit-converted: naive RMS scaling
/// of κ=64 lands at 9.1, which covers a third of the [0,1]³⁰⁷² pixel box and
/// collapses training to chance accuracy, while published robust classifiers
/// at this κ remain accurate. The calibrated pair keeps the paper's 1:2
/// ratio and reproduces its qualitative regime: k64 trades almost no clean
/// accuracy, k128 trades a visible amount for markedly stronger robustness.
pub const KAPPA_K64: f64 = 1.25;
/// Desk-scale stand-in for the paper's κ=128 budget (see [`KAPPA_K64`]).
pub const KAPPA_K128: f64 = 2.5;

/// Resolve a named κ preset.
pub fn kappa_preset(name: &str) -> Option<f64> {
    match name {
        "k64" => Some(KAPPA_K64),
        "k128" => Some(KAPPA_K128),
        _ => None,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Initial learning rate.
    pub lr: f64,
    /// Multiplicative drop applied every `lr_decay_interval` epochs.
    pub lr_decay: f64,
    /// 0 selects ⌈epochs/3⌉, matching a 90-epoch schedule that drops every 30.
    pub lr_decay_interval: usize,
    /// SGD momentum.
    pub momentum: f64,
    /// L2 adversarial budget; 0 = nominal training.
    pub kappa: f64,
    /// Inner maximization steps for adversarial training.
    pub inner_steps: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn nominal(epochs: usize, seed: u64) -> Self {
        TrainConfig {
            epochs,
            batch_size: 64,
            lr: 0.1,
            lr_decay: 0.1,
            lr_decay_interval: 0,
            momentum: 0.9,
            kappa: 0.0,
            inner_steps: 2,
            seed,
        }
    }

    pub fn adversarial(epochs: usize, kappa: f64, seed: u64) -> Self {
        TrainConfig { kappa, ..TrainConfig::nominal(epochs, seed) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidTrainConfig("epochs must be >= 1".into()));
        }
        if self.kappa < 0.0 {
            return Err(Error::InvalidTrainConfig(format!("kappa must be >= 0, got {}", self.kappa)));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::InvalidTrainConfig(format!("lr decay must be in (0,1], got {}", self.lr_decay)));
        }
        if self.batch_size == 0 || self.lr <= 0.0 || self.inner_steps == 0 {
            return Err(Error::InvalidTrainConfig("batch size, lr and inner steps must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidTrainConfig(format!("momentum must be in [0,1), got {}", self.momentum)));
        }
        Ok(())
    }

    fn decay_interval(&self) -> usize {
        if self.lr_decay_interval > 0 {
            self.lr_decay_interval
        } else {
            self.epochs.div_ceil(3)
        }
    }

    /// Learning rate in force during `epoch` (0-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let drops = epoch / self.decay_interval();
        self.lr * self.lr_decay.powi(drops as i32)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub mean_loss: f64,
    pub train_accuracy: f64,
}

/// JSON-serializable training log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    pub final_clean_accuracy: f64,
    pub final_robust_accuracy: Option<f64>,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub model: MiniEmbedder,
    pub log: TrainLog,
}

impl TrainOutcome {
    pub fn checkpoint(&self) -> ModelCheckpoint {
        ModelCheckpoint::from_embedder(&self.model)
    }
}

/// Project v onto the L2 ball of radius κ: v · min(1, κ/‖v‖₂).
pub fn project_l2(v: &mut [f32], kappa: f64) {
    let norm = v.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
    if norm > kappa {
        let s = (kappa / norm) as f32;
        for x in v.iter_mut() {
            *x *= s;
        }
    }
}

/// Inner maximization of Eq.-8 style training: Gaussian init scaled to the
/// ball, `steps` normalized-gradient ascents of size `step`, projection onto
/// the κ-ball each step. Returns the perturbed image clamped to [0,1].
fn l2_pgd_adversary(
    model: &MiniEmbedder,
    image: &Tensor,
    label: usize,
    kappa: f64,
    steps: usize,
    step: f64,
    rng_seed: (u64, u64, u64),
) -> Result<Tensor> {
    let numel = image.numel();
    let mut rng = item_rng(rng_seed.0, rng_seed.1, rng_seed.2);
    let sigma = kappa / (numel as f64).sqrt();
    let mut delta: Vec<f32> = (0..numel).map(|_| (sigma * normal(&mut rng)) as f32).collect();
    project_l2(&mut delta, kappa);

    let batched = |data: Vec<f32>| -> Result<Tensor> {
        let mut shape = vec![1];
        shape.extend_from_slice(image.shape());
        Tensor::new(shape, data)
    };

    for _ in 0..steps {
        let x_data: Vec<f32> = image
            .data()
            .iter()
            .zip(&delta)
            .map(|(x, d)| (x + d).clamp(0.0, 1.0))
            .collect();
        let mut tape = Tape::new();
        let vars = model.register(&mut tape, false);
        let x = tape.leaf(batched(x_data)?, true);
        let (_, logits) = model.forward_on(&mut tape, &vars, x)?;
        let loss = tape.cross_entropy(logits, &[label])?;
        tape.backward(loss)?;
        let grad = tape.grad(x).expect("input gradient").into_data();
        let gnorm = grad.iter().map(|&g| (g as f64).powi(2)).sum::<f64>().sqrt();
        if gnorm > 0.0 {
            let s = (step / gnorm) as f32;
            for (d, g) in delta.iter_mut().zip(&grad) {
                *d += s * g;
            }
        }
        project_l2(&mut delta, kappa);
        debug_assert!(
            delta.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt() <= kappa + 1e-6
        );
    }

    let adv: Vec<f32> = image
        .data()
        .iter()
        .zip(&delta)
        .map(|(x, d)| (x + d).clamp(0.0, 1.0))
        .collect();
    Ok(Tensor::new(image.shape().to_vec(), adv)?)
}

fn labeled(data: &ImageBatch) -> Result<&[usize]> {
    data.labels()
        .ok_or_else(|| Error::InvalidArgument("labeled data required".into()))
}

struct ItemGrads {
    loss: f64,
    correct: bool,
    grads: Vec<Vec<f32>>,
}

fn classifier_grads(model: &MiniEmbedder, image: &Tensor, label: usize) -> Result<ItemGrads> {
    let mut tape = Tape::new();
    let vars = model.register(&mut tape, true);
    let mut shape = vec![1];
    shape.extend_from_slice(image.shape());
    let x = tape.constant(Tensor::new(shape, image.data().to_vec())?);
    let (_, logits) = model.forward_on(&mut tape, &vars, x)?;
    let predicted = argmax_rows(tape.value(logits))[0];
    let loss = tape.cross_entropy(logits, &[label])?;
    let loss_value = tape.value(loss).item() as f64;
    tape.backward(loss)?;
    let grads = vars
        .all()
        .iter()
        .map(|&v| {
            tape.grad(v)
                .map(Tensor::into_data)
                .unwrap_or_else(|| vec![0.0; tape.value(v).numel()])
        })
        .collect();
    Ok(ItemGrads { loss: loss_value, correct: predicted == label, grads })
}

fn train_classifier(train: &ImageBatch, eval: &ImageBatch, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let labels = labeled(train)?;
    let n = train.len();
    let mut model = MiniEmbedder::init(cfg.seed);
    let adversarial = cfg.kappa > 0.0;
    let mut records = Vec::with_capacity(cfg.epochs);
    let mut velocity: Vec<Vec<f32>> = model
        .named_params()
        .iter()
        .map(|(_, t)| vec![0.0; t.numel()])
        .collect();

    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        // seeded shuffle
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = item_rng(cfg.seed, stream::TRAIN_SHUFFLE, epoch as u64);
        for i in (1..n).rev() {
            let j = (crate::data::rng::uniform(&mut rng) * (i + 1) as f64) as usize;
            order.swap(i, j.min(i));
        }

        let mut epoch_loss = 0.0f64;
        let mut epoch_correct = 0usize;
        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let items: Vec<Result<ItemGrads>> = par_map_indexed(chunk.len(), |k| {
                let idx = chunk[k];
                let image = train.image(idx);
                let label = labels[idx];
                let image = if adversarial {
                    let tag = (epoch as u64) << 32 | (batch_idx as u64) << 16 | k as u64;
                    l2_pgd_adversary(
                        &model,
                        &image,
                        label,
                        cfg.kappa,
                        cfg.inner_steps,
                        cfg.kappa,
                        (cfg.seed, stream::TRAIN_ADV, tag),
                    )?
                } else {
                    image
                };
                classifier_grads(&model, &image, label)
            });

            // reduce in index order, then one SGD step on the mean gradient
            let mut sums: Option<Vec<Vec<f32>>> = None;
            let mut batch_loss = 0.0f64;
            for item in items {
                let item = item?;
                batch_loss += item.loss;
                if item.correct {
                    epoch_correct += 1;
                }
                match &mut sums {
                    None => sums = Some(item.grads),
                    Some(acc) => {
                        for (a, g) in acc.iter_mut().zip(&item.grads) {
                            for (x, y) in a.iter_mut().zip(g) {
                                *x += y;
                            }
                        }
                    }
                }
            }
            let batch_len = chunk.len() as f32;
            if !batch_loss.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            epoch_loss += batch_loss;
            let momentum = cfg.momentum as f32;
            let lr32 = lr as f32;
            for ((param, vel), grad) in model.params_mut().into_iter().zip(&mut velocity).zip(sums.unwrap()) {
                for ((w, v), g) in param.data_mut().iter_mut().zip(vel.iter_mut()).zip(grad) {
                    *v = momentum * *v + g / batch_len;
                    *w -= lr32 * *v;
                }
            }
        }

        records.push(EpochRecord {
            epoch,
            lr,
            mean_loss: epoch_loss / n as f64,
            train_accuracy: epoch_correct as f64 / n as f64,
        });
    }

    let clean_acc = evaluate_accuracy(&model, eval, None)?;
    let robust_acc = if adversarial {
        Some(evaluate_accuracy(&model, eval, Some(cfg.kappa))?)
    } else {
        None
    };
    model.provenance = Provenance {
        training: if adversarial { TrainingKind::Adversarial } else { TrainingKind::Nominal },
        kappa: cfg.kappa,
        epochs: cfg.epochs,
        seed: cfg.seed,
        clean_accuracy: Some(clean_acc),
        robust_accuracy: robust_acc,
        fid_vs_real: None,
        mode_collapse_warning: None,
    };
    Ok(TrainOutcome {
        model,
        log: TrainLog {
            epochs: records,
            final_clean_accuracy: clean_acc,
            final_robust_accuracy: robust_acc,
        },
    })
}

/// Cross-entropy SGD on clean images (κ must be 0).
pub fn train_nominal(train: &ImageBatch, eval: &ImageBatch, cfg: &TrainConfig) -> Result<TrainOutcome> {
    if cfg.kappa != 0.0 {
        return Err(Error::InvalidTrainConfig("nominal training requires kappa = 0".into()));
    }
    train_classifier(train, eval, cfg)
}

/// Min-max training: 2-step L2 PGD inner maximization inside the κ-ball,
/// SGD on the adversarial examples (κ must be > 0).
pub fn train_adversarial(train: &ImageBatch, eval: &ImageBatch, cfg: &TrainConfig) -> Result<TrainOutcome> {
    if cfg.kappa <= 0.0 {
        return Err(Error::InvalidTrainConfig("adversarial training requires kappa > 0".into()));
    }
    train_classifier(train, eval, cfg)
}

/// Fraction of correctly classified samples; with `adversarial = Some(κ)`,
/// each sample is first attacked with 10-step L2 PGD of radius κ.
pub fn evaluate_accuracy(model: &MiniEmbedder, data: &ImageBatch, adversarial: Option<f64>) -> Result<f64> {
    let labels = labeled(data)?;
    let n = data.len();
    if n == 0 {
        return Err(Error::InvalidArgument("empty evaluation set".into()));
    }
    match adversarial {
        None => {
            let logits = model.logits(data)?;
            let predictions = argmax_rows(&logits);
            let correct = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
            Ok(correct as f64 / n as f64)
        }
        Some(kappa) => {
            let eval_steps = 10;
            let step = 2.5 * kappa / eval_steps as f64;
            let verdicts: Vec<Result<bool>> = par_map_indexed(n, |i| {
                let adv = l2_pgd_adversary(
                    model,
                    &data.image(i),
                    labels[i],
                    kappa,
                    eval_steps,
                    step,
                    (model.provenance.seed, stream::TRAIN_ADV ^ 0xE7A1, i as u64),
                )?;
                let batch = ImageBatch::from_items(std::slice::from_ref(&adv), None)?;
                let logits = model.logits(&batch)?;
                Ok(argmax_rows(&logits)[0] == labels[i])
            });
            let mut correct = 0usize;
            for v in verdicts {
                if v? {
                    correct += 1;
                }
            }
            Ok(correct as f64 / n as f64)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_dataset, ToyDatasetSpec};

    #[test]
    fn l2_projection_examples() {
        // (3,4) at κ=1 → (0.6, 0.8); inside-ball vectors are untouched
        let mut v = [3.0f32, 4.0];
        project_l2(&mut v, 1.0);
        assert!((v[0] - 0.6).abs() < 1e-6 && (v[1] - 0.8).abs() < 1e-6);
        let mut u = [0.1f32, 0.0];
        project_l2(&mut u, 1.0);
        assert_eq!(u, [0.1, 0.0]);
    }

    #[test]
    fn zero_epochs_is_rejected() {
        let d = generate_dataset(&ToyDatasetSpec::new(1, 1, 1));
        let cfg = TrainConfig::nominal(0, 1);
        assert!(matches!(
            train_nominal(&d.train, &d.eval, &cfg).unwrap_err(),
            Error::InvalidTrainConfig(_)
        ));
    }

    #[test]
    fn one_epoch_decreases_loss_on_tiny_data() {
        let d = generate_dataset(&ToyDatasetSpec::new(1, 1, 7));
        let mut cfg = TrainConfig::nominal(2, 3);
        cfg.batch_size = 10;
        let out = train_nominal(&d.train, &d.eval, &cfg).unwrap();
        let first = out.log.epochs.first().unwrap().mean_loss;
        let last = out.log.epochs.last().unwrap().mean_loss;
        assert!(last < first, "loss {first} → {last}");
    }

    #[test]
    fn divergent_lr_reports_the_epoch() {
        let d = generate_dataset(&ToyDatasetSpec::new(1, 1, 7));
        let mut cfg = TrainConfig::nominal(2, 3);
        cfg.lr = 1e12;
        cfg.batch_size = 10;
        match train_nominal(&d.train, &d.eval, &cfg) {
            Err(Error::Divergence { .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn lr_schedule_matches_thirds() {
        // 90 epochs: drops after 30 and 60
        let cfg = TrainConfig::nominal(90, 1);
        assert!((cfg.lr_at(0) - 0.1).abs() < 1e-12);
        assert!((cfg.lr_at(29) - 0.1).abs() < 1e-12);
        assert!((cfg.lr_at(30) - 0.01).abs() < 1e-12);
        assert!((cfg.lr_at(60) - 0.001).abs() < 1e-12);
        // 5 epochs: interval ⌈5/3⌉ = 2
        let cfg = TrainConfig::nominal(5, 1);
        assert!((cfg.lr_at(1) - 0.1).abs() < 1e-12);
        assert!((cfg.lr_at(2) - 0.01).abs() < 1e-12);
        assert!((cfg.lr_at(4) - 0.001).abs() < 1e-12);
    }

    #[test]
    fn constant_model_on_constant_labels_scores_one() {
        let mut model = MiniEmbedder::zeros();
        model.fc2_b.data_mut()[3] = 5.0; // always predicts class 3
        let images = Tensor::full(vec![8, 3, 32, 32], 0.5);
        let data = ImageBatch::new(images, Some(vec![3; 8])).unwrap();
        let acc = evaluate_accuracy(&model, &data, None).unwrap();
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn accuracy_is_a_fraction() {
        let model = MiniEmbedder::init(3);
        let d = generate_dataset(&ToyDatasetSpec::new(2, 2, 5));
        let acc = evaluate_accuracy(&model, &d.eval, None).unwrap();
        assert!((0.0..=1.0).contains(&acc));
    }

    #[test]
    fn unlabeled_data_is_rejected() {
        let model = MiniEmbedder::zeros();
        let b = crate::data::random_noise_images(4, 1);
        assert!(evaluate_accuracy(&model, &b, None).is_err());
    }

    #[test]
    fn kappa_presets_keep_the_one_to_two_ratio() {
        let k64 = kappa_preset("k64").unwrap();
        let k128 = kappa_preset("k128").unwrap();
        assert!((k128 / k64 - 2.0).abs() < 1e-12);
        assert!(k64 > 0.0);
        assert!(kappa_preset("k7").is_none());
    }

    #[test]
    fn training_is_reproducible() {
        let d = generate_dataset(&ToyDatasetSpec::new(2, 1, 9));
        let mut cfg = TrainConfig::nominal(1, 11);
        cfg.batch_size = 8;
        let a = train_nominal(&d.train, &d.eval, &cfg).unwrap();
        let b = train_nominal(&d.train, &d.eval, &cfg).unwrap();
        let (ca, cb) = (a.checkpoint(), b.checkpoint());
        assert_eq!(ca.digest().unwrap(), cb.digest().unwrap());
    }

    #[test]
    fn inner_adversary_stays_in_the_ball_and_range() {
        let model = MiniEmbedder::init(5);
        let d = generate_dataset(&ToyDatasetSpec::new(1, 1, 3));
        let image = d.train.image(0);
        let kappa = 2.0;
        let adv = l2_pgd_adversary(&model, &image, 0, kappa, 2, kappa, (1, 2, 3)).unwrap();
        assert!(adv.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        let moved: f64 = adv
            .data()
            .iter()
            .zip(image.data())
            .map(|(a, b)| ((a - b) as f64).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(moved <= kappa + 1e-6, "moved {moved}");
        assert!(moved > 0.0);
    }
}

//! Toy GAN training for MiniStyleGen: non-saturating loss, alternating 1:1
//! updates, Adam. The discriminator lives here; it is training plumbing, not
//! part of the public model surface.

use super::optim::Adam;
use crate::data::rng::{item_rng, normal, stream, uniform};
use crate::data::ImageBatch;
use crate::error::{Error, Result};
use crate::metrics;
use crate::models::{he_init, MiniEmbedder, MiniStyleGen, Provenance, TrainingKind, LATENT_DIM};
use crate::parallel::par_map_indexed;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GanConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub seed: u64,
    /// Samples for the post-training w̄ estimate.
    pub w_bar_samples: usize,
    /// Samples for the recorded FID against real data (when an embedder is given).
    pub fid_samples: usize,
}

impl GanConfig {
    pub fn new(epochs: usize, seed: u64) -> Self {
        GanConfig {
            epochs,
            batch_size: 64,
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            seed,
            w_bar_samples: 4096,
            fid_samples: 4096,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidTrainConfig("gan epochs and batch size must be >= 1".into()));
        }
        if self.lr <= 0.0 {
            return Err(Error::InvalidTrainConfig("gan lr must be > 0".into()));
        }
        Ok(())
    }
}

const DCH: [usize; 3] = [8, 16, 32];
const LRELU: f32 = 0.2;

/// Conv classifier producing one realness logit per image.
#[derive(Debug, Clone)]
pub struct Discriminator {
    conv1_w: Tensor,
    conv1_b: Tensor,
    conv2_w: Tensor,
    conv2_b: Tensor,
    conv3_w: Tensor,
    conv3_b: Tensor,
    fc_w: Tensor,
    fc_b: Tensor,
}

impl Discriminator {
    pub fn init(seed: u64) -> Self {
        let mut r = item_rng(seed, stream::TRAIN_INIT, 2);
        Discriminator {
            conv1_w: he_init(&mut r, vec![DCH[0], 3, 3, 3], 3 * 9, 1.0),
            conv1_b: Tensor::zeros(vec![DCH[0]]),
            conv2_w: he_init(&mut r, vec![DCH[1], DCH[0], 3, 3], DCH[0] * 9, 1.0),
            conv2_b: Tensor::zeros(vec![DCH[1]]),
            conv3_w: he_init(&mut r, vec![DCH[2], DCH[1], 3, 3], DCH[1] * 9, 1.0),
            conv3_b: Tensor::zeros(vec![DCH[2]]),
            fc_w: he_init(&mut r, vec![DCH[2] * 16, 1], DCH[2] * 16, 1.0),
            fc_b: Tensor::zeros(vec![1]),
        }
    }

    fn params(&self) -> Vec<&Tensor> {
        vec![
            &self.conv1_w,
            &self.conv1_b,
            &self.conv2_w,
            &self.conv2_b,
            &self.conv3_w,
            &self.conv3_b,
            &self.fc_w,
            &self.fc_b,
        ]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.conv1_w,
            &mut self.conv1_b,
            &mut self.conv2_w,
            &mut self.conv2_b,
            &mut self.conv3_w,
            &mut self.conv3_b,
            &mut self.fc_w,
            &mut self.fc_b,
        ]
    }

    fn register(&self, tape: &mut Tape, trainable: bool) -> Vec<Var> {
        self.params().into_iter().map(|t| tape.leaf(t.clone(), trainable)).collect()
    }

    /// Realness logit, shape (N, 1).
    fn logit_on(&self, tape: &mut Tape, vars: &[Var], x: Var) -> Result<Var> {
        let mut h = tape.conv2d(x, vars[0], 1)?;
        h = tape.add_channel_bias(h, vars[1])?;
        h = tape.leaky_relu(h, LRELU);
        h = tape.avg_pool2(h)?;
        h = tape.conv2d(h, vars[2], 1)?;
        h = tape.add_channel_bias(h, vars[3])?;
        h = tape.leaky_relu(h, LRELU);
        h = tape.avg_pool2(h)?;
        h = tape.conv2d(h, vars[4], 1)?;
        h = tape.add_channel_bias(h, vars[5])?;
        h = tape.leaky_relu(h, LRELU);
        h = tape.avg_pool2(h)?;
        let n = tape.value(h).shape()[0];
        h = tape.reshape(h, vec![n, DCH[2] * 16])?;
        h = tape.matmul(h, vars[6])?;
        tape.add_bias(h, vars[7])
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GanEpochRecord {
    pub epoch: usize,
    pub d_loss: f64,
    pub g_loss: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GanLog {
    pub epochs: Vec<GanEpochRecord>,
    pub fid_vs_real: Option<f64>,
    pub mode_collapse_warning: bool,
}

pub struct GanOutcome {
    pub generator: MiniStyleGen,
    pub log: GanLog,
}

/// Per-pixel std across a batch collapsing below 1e-3 marks mode collapse.
pub fn mode_collapse_warning(batch: &ImageBatch) -> bool {
    let n = batch.len();
    if n < 2 {
        return false;
    }
    let per = batch.images().numel() / n;
    let data = batch.images().data();
    let mut total = 0.0f64;
    for p in 0..per {
        let mut mean = 0.0f64;
        for i in 0..n {
            mean += data[i * per + p] as f64;
        }
        mean /= n as f64;
        let mut var = 0.0f64;
        for i in 0..n {
            let d = data[i * per + p] as f64 - mean;
            var += d * d;
        }
        total += (var / n as f64).sqrt();
    }
    total / per as f64 <= 1e-3
}

fn latent_batch(n: usize, seed: u64, tag: u64) -> Tensor {
    let mut data = Vec::with_capacity(n * LATENT_DIM);
    for i in 0..n {
        let mut r = item_rng(seed, stream::LATENTS ^ tag, i as u64);
        for _ in 0..LATENT_DIM {
            data.push(normal(&mut r) as f32);
        }
    }
    Tensor::new(vec![n, LATENT_DIM], data).unwrap()
}

struct GradSet {
    loss: f64,
    grads: Vec<Vec<f32>>,
}

fn sum_grad_sets(items: Vec<Result<GradSet>>) -> Result<(f64, Vec<Vec<f32>>)> {
    let mut total = 0.0f64;
    let mut sums: Option<Vec<Vec<f32>>> = None;
    let count = items.len() as f64;
    for item in items {
        let item = item?;
        total += item.loss;
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
    let mut sums = sums.unwrap();
    for g in &mut sums {
        for v in g.iter_mut() {
            *v /= count as f32;
        }
    }
    Ok((total / count, sums))
}

fn grad_of(tape: &Tape, vars: &[Var]) -> Vec<Vec<f32>> {
    vars.iter()
        .map(|&v| {
            tape.grad(v)
                .map(Tensor::into_data)
                .unwrap_or_else(|| vec![0.0; tape.value(v).numel()])
        })
        .collect()
}

/// Non-saturating GAN training of the toy generator. When `embedder` is
/// given, the provenance records FID(generated, real) on `fid_samples`
/// samples. The trained generator carries a fresh w̄ estimate.
pub fn train_generator(
    train: &ImageBatch,
    cfg: &GanConfig,
    embedder: Option<&MiniEmbedder>,
) -> Result<GanOutcome> {
    cfg.validate()?;
    let n = train.len();
    let mut gen = MiniStyleGen::init(cfg.seed);
    let mut disc = Discriminator::init(cfg.seed.wrapping_add(1));
    let gen_sizes: Vec<usize> = gen.named_params().iter().map(|(_, t)| t.numel()).collect();
    let disc_sizes: Vec<usize> = disc.params().iter().map(|t| t.numel()).collect();
    // w_bar is the final entry of the generator param list and is not trained
    let mut g_opt = Adam::new(&gen_sizes, cfg.lr, cfg.beta1, cfg.beta2);
    let mut d_opt = Adam::new(&disc_sizes, cfg.lr, cfg.beta1, cfg.beta2);
    let mut records = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng: ChaCha8Rng = item_rng(cfg.seed, stream::TRAIN_SHUFFLE, 1000 + epoch as u64);
        for i in (1..n).rev() {
            let j = (uniform(&mut rng) * (i + 1) as f64) as usize;
            order.swap(i, j.min(i));
        }

        let mut d_epoch = 0.0f64;
        let mut g_epoch = 0.0f64;
        let mut batches = 0usize;
        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let tag = (epoch as u64) << 20 | batch_idx as u64;
            let b = chunk.len();

            // discriminator step: fakes are detached (generated without grad)
            let z = latent_batch(b, cfg.seed, tag.wrapping_mul(2).wrapping_add(1));
            let fakes = gen.generate(&z, 1.0)?;
            let d_items: Vec<Result<GradSet>> = par_map_indexed(b, |k| {
                let mut tape = Tape::new();
                let dvars = disc.register(&mut tape, true);
                let real_img = train.image(chunk[k]);
                let mut shape = vec![1];
                shape.extend_from_slice(real_img.shape());
                let xr = tape.constant(Tensor::new(shape.clone(), real_img.data().to_vec())?);
                let xf = tape.constant(Tensor::new(shape, fakes.image(k).data().to_vec())?);
                let lr_logit = disc.logit_on(&mut tape, &dvars, xr)?;
                let lf_logit = disc.logit_on(&mut tape, &dvars, xf)?;
                // softplus(−real) + softplus(fake)
                let neg_real = tape.scale(lr_logit, -1.0);
                let a = tape.softplus(neg_real);
                let bterm = tape.softplus(lf_logit);
                let s = tape.add(a, bterm)?;
                let loss = tape.sum(s);
                let value = tape.value(loss).item() as f64;
                tape.backward(loss)?;
                Ok(GradSet { loss: value, grads: grad_of(&tape, &dvars) })
            });
            let (d_loss, d_grads) = sum_grad_sets(d_items)?;
            if !d_loss.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            d_opt.step(disc.params_mut().into_iter().map(|t| t.data_mut()).collect(), &d_grads);

            // generator step: non-saturating softplus(−D(G(z)))
            let z = latent_batch(b, cfg.seed, tag.wrapping_mul(2));
            let g_items: Vec<Result<GradSet>> = par_map_indexed(b, |k| {
                let mut tape = Tape::new();
                let gvars = gen.register(&mut tape, true);
                let dvars = disc.register(&mut tape, false);
                let zv = tape.constant(Tensor::new(vec![1, LATENT_DIM], z.row(k).to_vec())?);
                let img = gen.generate_on(&mut tape, &gvars, zv, 1.0)?;
                let logit = disc.logit_on(&mut tape, &dvars, img)?;
                let neg = tape.scale(logit, -1.0);
                let sp = tape.softplus(neg);
                let loss = tape.sum(sp);
                let value = tape.value(loss).item() as f64;
                tape.backward(loss)?;
                Ok(GradSet { loss: value, grads: grad_of(&tape, gvars.all()) })
            });
            let (g_loss, g_grads) = sum_grad_sets(g_items)?;
            if !g_loss.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            g_opt.step(gen.params_mut().into_iter().map(|t| t.data_mut()).collect(), &g_grads);

            d_epoch += d_loss;
            g_epoch += g_loss;
            batches += 1;
        }
        records.push(GanEpochRecord {
            epoch,
            d_loss: d_epoch / batches as f64,
            g_loss: g_epoch / batches as f64,
        });
    }

    gen.compute_w_bar(cfg.w_bar_samples, cfg.seed.wrapping_add(7))?;

    // mode-collapse check on a fresh sample
    let probe_z = latent_batch(128.min(cfg.fid_samples.max(2)), cfg.seed, u64::MAX / 2);
    let probe = gen.generate(&probe_z, 1.0)?;
    let collapse = mode_collapse_warning(&probe);

    let fid_vs_real = match embedder {
        Some(model) => {
            let m = cfg.fid_samples.min(train.len());
            let z = latent_batch(cfg.fid_samples, cfg.seed, u64::MAX / 3);
            let generated = gen.generate(&z, 1.0)?;
            let report = metrics::fid(model, &train.slice(0, m), &generated)?;
            Some(report.value)
        }
        None => None,
    };

    gen.provenance = Provenance {
        training: TrainingKind::Gan,
        kappa: 0.0,
        epochs: cfg.epochs,
        seed: cfg.seed,
        clean_accuracy: None,
        robust_accuracy: None,
        fid_vs_real,
        mode_collapse_warning: Some(collapse),
    };
    Ok(GanOutcome {
        generator: gen,
        log: GanLog { epochs: records, fid_vs_real, mode_collapse_warning: collapse },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collapse_detector_fires_on_constant_batches() {
        let constant = ImageBatch::new(Tensor::full(vec![8, 3, 8, 8], 0.4), None).unwrap();
        assert!(mode_collapse_warning(&constant));
        let diverse = crate::data::random_noise_images(8, 3);
        assert!(!mode_collapse_warning(&diverse));
    }

    #[test]
    fn gan_smoke_run_updates_both_networks() {
        let d = crate::data::generate_dataset(&crate::data::ToyDatasetSpec::new(2, 1, 5));
        let mut cfg = GanConfig::new(1, 9);
        cfg.batch_size = 10;
        cfg.w_bar_samples = 8;
        cfg.fid_samples = 8;
        let before = MiniStyleGen::init(cfg.seed);
        let out = train_generator(&d.train, &cfg, None).unwrap();
        assert_eq!(out.log.epochs.len(), 1);
        // parameters moved
        let moved = out
            .generator
            .named_params()
            .iter()
            .zip(before.named_params().iter())
            .any(|((_, a), (_, b))| a.data() != b.data());
        assert!(moved);
        assert_eq!(out.generator.provenance.training, TrainingKind::Gan);
    }
}

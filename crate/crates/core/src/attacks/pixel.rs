//! Pixel-space attacks: bounded perturbations of real images and unbounded
//! synthesis from noise.

use super::{mean_trace, monotone_fraction, pgd_linf_step, AttackKind, AttackResult, AttackSpec, InitMode, PerturbationSummary};
use crate::data::rng::{item_rng, normal, stream, uniform_in};
use crate::data::ImageBatch;
use crate::error::Result;
use crate::metrics;
use crate::models::{argmax_rows, MiniEmbedder};
use crate::parallel::par_map_indexed;
use crate::tape::Tape;
use crate::tensor::Tensor;

fn is_splits(n: usize) -> usize {
    n.min(10).max(1)
}

pub(crate) struct ItemOutcome {
    pub(crate) image: Tensor,
    pub(crate) trace: Vec<f64>,
    pub(crate) final_loss: f64,
}

/// Minimize IS: ascend the cross-entropy toward the running argmax label so
/// the posterior flattens, under ‖δ‖∞ ≤ ε.
pub fn attack_min_is(embedder: &MiniEmbedder, real: &ImageBatch, spec: &AttackSpec) -> Result<AttackResult> {
    spec.expect_kind(AttackKind::MinIs)?;
    let before = metrics::inception_score(embedder, real, is_splits(real.len()))?;

    let outcomes: Vec<Result<ItemOutcome>> = par_map_indexed(real.len(), |i| {
        let clean = real.image(i);
        let numel = clean.numel();
        let mut delta = vec![0.0f32; numel]; // zero init per spec
        let mut trace = Vec::with_capacity(spec.steps);
        let mut fixed_target: Option<usize> = None;

        for _ in 0..spec.steps {
            let mut tape = Tape::new();
            let vars = embedder.register(&mut tape, false);
            let x = tape.leaf(adversarial_image(&clean, &delta), true);
            let (_, logits) = embedder.forward_on(&mut tape, &vars, x)?;
            let target = match (spec.refresh_target, fixed_target) {
                (false, Some(t)) => t,
                _ => {
                    let t = argmax_rows(tape.value(logits))[0];
                    if !spec.refresh_target {
                        fixed_target = Some(t);
                    }
                    t
                }
            };
            let loss = tape.cross_entropy(logits, &[target])?;
            trace.push(tape.value(loss).item() as f64);
            tape.backward(loss)?;
            let grad = tape.grad(x).expect("input gradient");
            let pixels = if spec.clamp_pixels { Some(clean.data()) } else { None };
            pgd_linf_step(&mut delta, grad.data(), spec.step_size, spec.epsilon, pixels);
        }

        // final objective at the returned perturbation
        let adv = adversarial_image(&clean, &delta);
        let mut tape = Tape::new();
        let vars = embedder.register(&mut tape, false);
        let x = tape.constant(adv.clone());
        let (_, logits) = embedder.forward_on(&mut tape, &vars, x)?;
        let target = argmax_rows(tape.value(logits))[0];
        let loss = tape.cross_entropy(logits, &[target])?;
        debug_assert!(delta.iter().all(|d| d.abs() as f64 <= spec.epsilon + 1e-6));
        Ok(ItemOutcome {
            image: adv.index_axis0(0),
            trace,
            final_loss: tape.value(loss).item() as f64,
        })
    });

    let (adversarial, traces, per_item_loss) = collect_outcomes(outcomes, real)?;
    let after = metrics::inception_score(embedder, &adversarial, is_splits(real.len()))?;
    let magnitude =
        PerturbationSummary::between(real.images(), adversarial.images(), real.images().numel() / real.len())?;
    Ok(AttackResult {
        adversarial,
        latents_clean: None,
        latents_adv: None,
        per_item_loss,
        before,
        after,
        magnitude,
        monotone_fraction: monotone_fraction(&traces, true),
        loss_trace: mean_trace(&traces),
        steps_taken: spec.steps,
    })
}

/// Maximize FID: ascend ‖f(x_r) − f(x_r + δ)‖₂ under ‖δ‖∞ ≤ ε.
pub fn attack_max_fid(embedder: &MiniEmbedder, real: &ImageBatch, spec: &AttackSpec) -> Result<AttackResult> {
    spec.expect_kind(AttackKind::MaxFid)?;
    let before = metrics::fid(embedder, real, real)?;
    let clean_embeddings = embedder.embed(real)?;

    let outcomes: Vec<Result<ItemOutcome>> = par_map_indexed(real.len(), |i| {
        let clean = real.image(i);
        let numel = clean.numel();
        let f_clean = Tensor::new(
            vec![1, clean_embeddings.shape()[1]],
            clean_embeddings.row(i).to_vec(),
        )?;

        let mut rng = item_rng(spec.seed, stream::ATTACK_INIT, i as u64);
        let mut delta: Vec<f32> = (0..numel)
            .map(|_| uniform_in(&mut rng, -spec.epsilon, spec.epsilon) as f32)
            .collect();
        if spec.clamp_pixels {
            // keep the random start inside the image box
            pgd_linf_step(&mut delta, &vec![0.0; numel], 0.0, spec.epsilon, Some(clean.data()));
        }

        let mut trace = Vec::with_capacity(spec.steps);
        for _ in 0..spec.steps {
            let mut tape = Tape::new();
            let vars = embedder.register(&mut tape, false);
            let x = tape.leaf(adversarial_image(&clean, &delta), true);
            let emb = embedder.embed_on(&mut tape, &vars, x)?;
            let anchor = tape.constant(f_clean.clone());
            let diff = tape.sub(emb, anchor)?;
            let loss = tape.l2_norm(diff);
            trace.push(tape.value(loss).item() as f64);
            tape.backward(loss)?;
            let grad = tape.grad(x).expect("input gradient");
            let pixels = if spec.clamp_pixels { Some(clean.data()) } else { None };
            pgd_linf_step(&mut delta, grad.data(), spec.step_size, spec.epsilon, pixels);
        }

        let adv = adversarial_image(&clean, &delta);
        let final_loss = {
            let mut tape = Tape::new();
            let vars = embedder.register(&mut tape, false);
            let x = tape.constant(adv.clone());
            let emb = embedder.embed_on(&mut tape, &vars, x)?;
            let anchor = tape.constant(f_clean);
            let diff = tape.sub(emb, anchor)?;
            let loss = tape.l2_norm(diff);
            tape.value(loss).item() as f64
        };
        debug_assert!(delta.iter().all(|d| d.abs() as f64 <= spec.epsilon + 1e-6));
        Ok(ItemOutcome { image: adv.index_axis0(0), trace, final_loss })
    });

    let (adversarial, traces, per_item_loss) = collect_outcomes(outcomes, real)?;
    let after = metrics::fid(embedder, real, &adversarial)?;
    let magnitude =
        PerturbationSummary::between(real.images(), adversarial.images(), real.images().numel() / real.len())?;
    Ok(AttackResult {
        adversarial,
        latents_clean: None,
        latents_adv: None,
        per_item_loss,
        before,
        after,
        magnitude,
        monotone_fraction: monotone_fraction(&traces, true),
        loss_trace: mean_trace(&traces),
        steps_taken: spec.steps,
    })
}

/// Maximize IS from noise: each synthesized image descends the cross-entropy
/// toward a uniformly drawn target label; pixels re-projected to [0,1].
pub fn attack_max_is(embedder: &MiniEmbedder, n: usize, spec: &AttackSpec) -> Result<AttackResult> {
    spec.expect_kind(AttackKind::MaxIs)?;
    let classes = crate::models::NUM_CLASSES;
    let init = synth_init_batch(n, spec)?;
    let before = metrics::inception_score(embedder, &init, is_splits(n))?;

    let outcomes: Vec<Result<ItemOutcome>> = par_map_indexed(n, |i| {
        let mut target_rng = item_rng(spec.seed, stream::ATTACK_TARGETS, i as u64);
        let target = (uniform_in(&mut target_rng, 0.0, classes as f64) as usize).min(classes - 1);
        let start = init.image(i);
        let img_shape = vec![1, start.shape()[0], start.shape()[1], start.shape()[2]];
        let mut x_data = start.data().to_vec();
        let mut trace = Vec::with_capacity(spec.steps);

        for _ in 0..spec.steps {
            let mut tape = Tape::new();
            let vars = embedder.register(&mut tape, false);
            let x = tape.leaf(Tensor::new(img_shape.clone(), x_data.clone())?, true);
            let (_, logits) = embedder.forward_on(&mut tape, &vars, x)?;
            let loss = tape.cross_entropy(logits, &[target])?;
            trace.push(tape.value(loss).item() as f64);
            tape.backward(loss)?;
            let grad = tape.grad(x).expect("input gradient");
            for (v, g) in x_data.iter_mut().zip(grad.data()) {
                *v = (*v - spec.step_size as f32 * g).clamp(0.0, 1.0);
            }
        }

        let final_img = Tensor::new(img_shape.clone(), x_data)?;
        let final_loss = {
            let mut tape = Tape::new();
            let vars = embedder.register(&mut tape, false);
            let x = tape.constant(final_img.clone());
            let (_, logits) = embedder.forward_on(&mut tape, &vars, x)?;
            let loss = tape.cross_entropy(logits, &[target])?;
            tape.value(loss).item() as f64
        };
        Ok(ItemOutcome { image: final_img.reshaped(img_shape[1..].to_vec())?, trace, final_loss })
    });

    let (adversarial, traces, per_item_loss) = collect_outcomes_unlabeled(outcomes)?;
    let after = metrics::inception_score(embedder, &adversarial, is_splits(n))?;
    let magnitude =
        PerturbationSummary::between(init.images(), adversarial.images(), init.images().numel() / n)?;
    Ok(AttackResult {
        adversarial,
        latents_clean: None,
        latents_adv: None,
        per_item_loss,
        before,
        after,
        magnitude,
        monotone_fraction: monotone_fraction(&traces, false),
        loss_trace: mean_trace(&traces),
        steps_taken: spec.steps,
    })
}

/// Minimize FID from noise: each synthesized image descends
/// ‖f(x) − f(x_r)‖₂ toward its own real target; pixels re-projected to [0,1].
pub fn attack_min_fid(embedder: &MiniEmbedder, real: &ImageBatch, spec: &AttackSpec) -> Result<AttackResult> {
    spec.expect_kind(AttackKind::MinFid)?;
    let n = real.len();
    let init = synth_init_batch(n, spec)?;
    let before = metrics::fid(embedder, real, &init)?;
    let targets = embedder.embed(real)?;

    let outcomes: Vec<Result<ItemOutcome>> =
        par_map_indexed(n, |i| optimize_toward_embedding(embedder, &init.image(i), &targets, i, spec));

    let (adversarial, traces, per_item_loss) = collect_outcomes_unlabeled(outcomes)?;
    let after = metrics::fid(embedder, real, &adversarial)?;
    let magnitude =
        PerturbationSummary::between(init.images(), adversarial.images(), init.images().numel() / n)?;
    Ok(AttackResult {
        adversarial,
        latents_clean: None,
        latents_adv: None,
        per_item_loss,
        before,
        after,
        magnitude,
        monotone_fraction: monotone_fraction(&traces, false),
        loss_trace: mean_trace(&traces),
        steps_taken: spec.steps,
    })
}

/// Gradient descent on pixels toward a fixed target embedding row; exposed
/// within the crate so the degenerate start-at-target case is testable.
pub(crate) fn optimize_toward_embedding(
    embedder: &MiniEmbedder,
    start: &Tensor,
    target_rows: &Tensor,
    index: usize,
    spec: &AttackSpec,
) -> Result<ItemOutcome> {
    let d = target_rows.shape()[1];
    let target = Tensor::new(vec![1, d], target_rows.row(index).to_vec())?;
    let img_shape = vec![1, start.shape()[0], start.shape()[1], start.shape()[2]];
    let mut x_data = start.data().to_vec();
    let mut trace = Vec::with_capacity(spec.steps);

    for _ in 0..spec.steps {
        let mut tape = Tape::new();
        let vars = embedder.register(&mut tape, false);
        let x = tape.leaf(Tensor::new(img_shape.clone(), x_data.clone())?, true);
        let emb = embedder.embed_on(&mut tape, &vars, x)?;
        let anchor = tape.constant(target.clone());
        let diff = tape.sub(emb, anchor)?;
        let loss = tape.l2_norm(diff);
        trace.push(tape.value(loss).item() as f64);
        tape.backward(loss)?;
        let grad = tape.grad(x).expect("input gradient");
        for (v, g) in x_data.iter_mut().zip(grad.data()) {
            *v = (*v - spec.step_size as f32 * g).clamp(0.0, 1.0);
        }
    }

    let final_img = Tensor::new(img_shape.clone(), x_data)?;
    let final_loss = {
        let mut tape = Tape::new();
        let vars = embedder.register(&mut tape, false);
        let x = tape.constant(final_img.clone());
        let emb = embedder.embed_on(&mut tape, &vars, x)?;
        let anchor = tape.constant(target);
        let diff = tape.sub(emb, anchor)?;
        let loss = tape.l2_norm(diff);
        tape.value(loss).item() as f64
    };
    Ok(ItemOutcome { image: final_img.reshaped(img_shape[1..].to_vec())?, trace, final_loss })
}

/// clean (C,H,W) plus delta, returned batched as (1,C,H,W).
fn adversarial_image(clean: &Tensor, delta: &[f32]) -> Tensor {
    let data: Vec<f32> = clean.data().iter().zip(delta).map(|(x, d)| x + d).collect();
    let mut shape = vec![1];
    shape.extend_from_slice(clean.shape());
    Tensor::new(shape, data).unwrap()
}

fn synth_init_batch(n: usize, spec: &AttackSpec) -> Result<ImageBatch> {
    let sz = crate::data::IMAGE_SIZE;
    let items = par_map_indexed(n, |i| {
        let mut rng = item_rng(spec.seed, stream::ATTACK_INIT, i as u64);
        let data: Vec<f32> = (0..3 * sz * sz)
            .map(|_| match spec.init {
                InitMode::Zero => 0.5,
                InitMode::UniformRandom => uniform_in(&mut rng, 0.0, 1.0) as f32,
                InitMode::GaussianRandom => (0.5 + 0.25 * normal(&mut rng)).clamp(0.0, 1.0) as f32,
            })
            .collect();
        Tensor::new(vec![3, sz, sz], data).unwrap()
    });
    ImageBatch::from_items(&items, None)
}

fn collect_outcomes(
    outcomes: Vec<Result<ItemOutcome>>,
    real: &ImageBatch,
) -> Result<(ImageBatch, Vec<Vec<f64>>, Vec<f64>)> {
    let mut images = Vec::with_capacity(outcomes.len());
    let mut traces = Vec::with_capacity(outcomes.len());
    let mut losses = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        let o = o?;
        images.push(o.image);
        traces.push(o.trace);
        losses.push(o.final_loss);
    }
    let batch = ImageBatch::from_items(&images, real.labels().map(|l| l.to_vec()))?;
    Ok((batch, traces, losses))
}

fn collect_outcomes_unlabeled(outcomes: Vec<Result<ItemOutcome>>) -> Result<(ImageBatch, Vec<Vec<f64>>, Vec<f64>)> {
    let mut images = Vec::with_capacity(outcomes.len());
    let mut traces = Vec::with_capacity(outcomes.len());
    let mut losses = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        let o = o?;
        images.push(o.image);
        traces.push(o.trace);
        losses.push(o.final_loss);
    }
    let batch = ImageBatch::from_items(&images, None)?;
    Ok((batch, traces, losses))
}

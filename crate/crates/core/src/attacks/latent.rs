//! Latent-space attacks through the frozen generator: perturb z before the
//! mapping network, or w after mapping + truncation (synthesis-only Ĝ).
//! Both are unconstrained gradient ascent on the embedding displacement from
//! a paired real image.

use super::{mean_trace, monotone_fraction, AttackKind, AttackResult, AttackSpec, PerturbationSummary};
use crate::data::rng::{item_rng, normal, stream, uniform_in};
use crate::data::ImageBatch;
use crate::error::Result;
use crate::metrics;
use crate::models::{MiniEmbedder, MiniStyleGen, LATENT_DIM, W_DIM};
use crate::parallel::par_map_indexed;
use crate::tape::Tape;
use crate::tensor::Tensor;

struct LatentOutcome {
    latent_adv: Vec<f32>,
    image: Tensor,
    trace: Vec<f64>,
    final_loss: f64,
}

enum LatentSite {
    Z { alpha: f64 },
    W,
}

#[allow(clippy::too_many_arguments)]
fn run_latent_item(
    embedder: &MiniEmbedder,
    gen: &MiniStyleGen,
    base_latent: &[f32],
    target_embedding: &[f32],
    site: &LatentSite,
    spec: &AttackSpec,
    init_delta: Vec<f32>,
) -> Result<LatentOutcome> {
    let dim = base_latent.len();
    let mut delta = init_delta;
    let mut trace = Vec::with_capacity(spec.steps);

    let eval = |delta: &[f32], want_grad: bool| -> Result<(f64, Option<Vec<f32>>, Tensor)> {
        let mut tape = Tape::new();
        let evars = embedder.register(&mut tape, false);
        let gvars = gen.register(&mut tape, false);
        let d = tape.leaf(Tensor::new(vec![1, dim], delta.to_vec())?, want_grad);
        let base = tape.constant(Tensor::new(vec![1, dim], base_latent.to_vec())?);
        let latent = tape.add(d, base)?;
        let image = match site {
            LatentSite::Z { alpha } => {
                let w = gen.mapping_on(&mut tape, &gvars, latent)?;
                let wt = gen.truncate_on(&mut tape, &gvars, w, *alpha)?;
                gen.synthesize_on(&mut tape, &gvars, wt)?
            }
            LatentSite::W => gen.synthesize_on(&mut tape, &gvars, latent)?,
        };
        let emb = embedder.embed_on(&mut tape, &evars, image)?;
        let anchor = tape.constant(Tensor::new(vec![1, target_embedding.len()], target_embedding.to_vec())?);
        let diff = tape.sub(emb, anchor)?;
        let loss = tape.l2_norm(diff);
        let loss_value = tape.value(loss).item() as f64;
        let image_out = tape.value(image).index_axis0(0);
        if want_grad {
            tape.backward(loss)?;
            let g = tape.grad(d).expect("latent gradient").into_data();
            Ok((loss_value, Some(g), image_out))
        } else {
            Ok((loss_value, None, image_out))
        }
    };

    for _ in 0..spec.steps {
        let (loss, grad, _) = eval(&delta, true)?;
        trace.push(loss);
        let grad = grad.unwrap();
        for (v, g) in delta.iter_mut().zip(&grad) {
            *v += spec.step_size as f32 * g;
        }
    }
    let (final_loss, _, image) = eval(&delta, false)?;
    let latent_adv: Vec<f32> = base_latent.iter().zip(&delta).map(|(b, d)| b + d).collect();
    Ok(LatentOutcome { latent_adv, image, trace, final_loss })
}

fn init_delta(spec: &AttackSpec, dim: usize, index: usize) -> Vec<f32> {
    match spec.init {
        super::InitMode::Zero => vec![0.0; dim],
        super::InitMode::UniformRandom => {
            let mut r = item_rng(spec.seed, stream::ATTACK_INIT, index as u64);
            (0..dim).map(|_| uniform_in(&mut r, -0.1, 0.1) as f32).collect()
        }
        super::InitMode::GaussianRandom => {
            let mut r = item_rng(spec.seed, stream::ATTACK_INIT, index as u64);
            (0..dim).map(|_| (0.1 * normal(&mut r)) as f32).collect()
        }
    }
}

fn assemble(
    embedder: &MiniEmbedder,
    real: &ImageBatch,
    clean_latents: Tensor,
    clean_images: &ImageBatch,
    outcomes: Vec<Result<LatentOutcome>>,
    spec: &AttackSpec,
    dim: usize,
) -> Result<AttackResult> {
    let n = real.len();
    let mut latents_adv = Vec::with_capacity(n * dim);
    let mut images = Vec::with_capacity(n);
    let mut traces = Vec::with_capacity(n);
    let mut losses = Vec::with_capacity(n);
    for o in outcomes {
        let o = o?;
        latents_adv.extend_from_slice(&o.latent_adv);
        images.push(o.image);
        traces.push(o.trace);
        losses.push(o.final_loss);
    }
    let latents_adv = Tensor::new(vec![n, dim], latents_adv)?;
    let adversarial = ImageBatch::from_items(&images, None)?;

    let before = metrics::fid(embedder, real, clean_images)?;
    let after = metrics::fid(embedder, real, &adversarial)?;
    let magnitude = PerturbationSummary::between(&clean_latents, &latents_adv, dim)?;
    Ok(AttackResult {
        adversarial,
        latents_clean: Some(clean_latents),
        latents_adv: Some(latents_adv),
        per_item_loss: losses,
        before,
        after,
        magnitude,
        monotone_fraction: monotone_fraction(&traces, true),
        loss_trace: mean_trace(&traces),
        steps_taken: spec.steps,
    })
}

/// Eq-7-style attack: ascend ‖f(G(z + δ)) − f(x_r)‖₂ over δ in z-space, one
/// distinct real target per latent.
pub fn attack_latent_z(
    embedder: &MiniEmbedder,
    gen: &MiniStyleGen,
    real: &ImageBatch,
    alpha: f64,
    spec: &AttackSpec,
) -> Result<AttackResult> {
    spec.expect_kind(AttackKind::LatentZ)?;
    let n = real.len();
    let z = crate::data::sample_latents(n, LATENT_DIM, crate::data::LatentDist::StandardNormal, spec.seed);
    let clean_images = gen.generate(&z, alpha)?;
    let target_rows = embedder.embed(real)?;

    let outcomes: Vec<Result<LatentOutcome>> = par_map_indexed(n, |i| {
        run_latent_item(
            embedder,
            gen,
            z.row(i),
            target_rows.row(i),
            &LatentSite::Z { alpha },
            spec,
            init_delta(spec, LATENT_DIM, i),
        )
    });
    assemble(embedder, real, z, &clean_images, outcomes, spec, LATENT_DIM)
}

/// Appendix-style w-space attack: ascend ‖f(Ĝ(w + δ)) − f(x_r)‖₂ where w is
/// the post-mapping, post-truncation latent and Ĝ is synthesis-only.
pub fn attack_latent_w(
    embedder: &MiniEmbedder,
    gen: &MiniStyleGen,
    real: &ImageBatch,
    alpha: f64,
    spec: &AttackSpec,
) -> Result<AttackResult> {
    spec.expect_kind(AttackKind::LatentW)?;
    let n = real.len();
    let z = crate::data::sample_latents(n, LATENT_DIM, crate::data::LatentDist::StandardNormal, spec.seed);
    let w = gen.truncated_w(&z, alpha)?;
    let clean_images = gen.generate_from_w(&w)?;
    let target_rows = embedder.embed(real)?;

    let outcomes: Vec<Result<LatentOutcome>> = par_map_indexed(n, |i| {
        run_latent_item(
            embedder,
            gen,
            w.row(i),
            target_rows.row(i),
            &LatentSite::W,
            spec,
            init_delta(spec, W_DIM, i),
        )
    });
    assemble(embedder, real, w, &clean_images, outcomes, spec, W_DIM)
}

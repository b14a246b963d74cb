//! The six attack formulations against IS and FID: bounded pixel attacks,
//! unbounded synthesis attacks, and latent-space attacks through the frozen
//! generator. Items are independent; each runs on its own tape with a
//! per-item derived seed, so batches can be partitioned across workers and
//! still aggregate identically.

mod latent;
mod pixel;

pub use latent::{attack_latent_w, attack_latent_z};
pub use pixel::{attack_max_fid, attack_max_is, attack_min_fid, attack_min_is};

use crate::data::ImageBatch;
use crate::error::{Error, Result};
use crate::metrics::MetricReport;
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};

/// Which optimization problem an [`AttackSpec`] configures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackKind {
    /// Drive the class posterior toward uniform under an L∞ budget.
    MinIs,
    /// Push embeddings away from their clean positions under an L∞ budget.
    MaxFid,
    /// Synthesize noise images the classifier labels confidently (unbounded).
    MaxIs,
    /// Synthesize noise images whose embeddings match real ones (unbounded).
    MinFid,
    /// Perturb generator inputs z (unconstrained).
    LatentZ,
    /// Perturb post-truncation latents w fed to the synthesis network Ĝ.
    LatentW,
}

impl AttackKind {
    pub fn is_bounded(self) -> bool {
        matches!(self, AttackKind::MinIs | AttackKind::MaxFid)
    }

    pub fn is_latent(self) -> bool {
        matches!(self, AttackKind::LatentZ | AttackKind::LatentW)
    }

    /// True when the objective is maximized.
    pub fn ascends(self) -> bool {
        !matches!(self, AttackKind::MaxIs | AttackKind::MinFid)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMode {
    Zero,
    UniformRandom,
    GaussianRandom,
}

/// Fully pinned attack configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackSpec {
    pub kind: AttackKind,
    /// L∞ budget; meaningful for bounded kinds only (0 degenerates to a no-op).
    pub epsilon: f64,
    pub steps: usize,
    pub step_size: f64,
    pub init: InitMode,
    pub seed: u64,
    /// Keep x+δ inside [0,1] during bounded attacks.
    pub clamp_pixels: bool,
    /// Recompute the ŷ target from the current posterior every step; when
    /// false the target is fixed from the clean posterior once.
    pub refresh_target: bool,
}

impl AttackSpec {
    /// Paper-default configuration for a kind at a given budget and seed.
    pub fn defaults(kind: AttackKind, epsilon: f64, seed: u64) -> Self {
        // 2.5·ε/steps is the standard PGD step heuristic; ε=0 is a degenerate
        // no-op where any positive step projects back to zero
        let pgd_step = if epsilon > 0.0 { 2.5 * epsilon / 100.0 } else { 1.0 };
        let (steps, step_size, init) = match kind {
            AttackKind::MinIs => (100, pgd_step, InitMode::Zero),
            AttackKind::MaxFid => (100, pgd_step, InitMode::UniformRandom),
            AttackKind::MaxIs => (100, 0.01, InitMode::UniformRandom),
            AttackKind::MinFid => (100, 0.01, InitMode::UniformRandom),
            AttackKind::LatentZ => (50, 0.01, InitMode::Zero),
            AttackKind::LatentW => (20, 0.3, InitMode::Zero),
        };
        AttackSpec {
            kind,
            epsilon,
            steps,
            step_size,
            init,
            seed,
            clamp_pixels: true,
            refresh_target: true,
        }
    }

    /// Check the spec invariants. ε = 0 is permitted for bounded kinds as an
    /// explicit degenerate no-op (sweeps use it as the baseline row).
    pub fn validate(&self) -> Result<()> {
        if self.kind.is_bounded() && self.epsilon < 0.0 {
            return Err(Error::InvalidAttackSpec(format!(
                "bounded attacks need epsilon >= 0, got {}",
                self.epsilon
            )));
        }
        if self.step_size <= 0.0 {
            return Err(Error::InvalidAttackSpec(format!(
                "step size must be > 0, got {}",
                self.step_size
            )));
        }
        match self.kind {
            AttackKind::MinIs => {
                if self.init != InitMode::Zero {
                    return Err(Error::InvalidAttackSpec("min-is uses zero initialization".into()));
                }
            }
            AttackKind::MaxFid => {
                if self.init != InitMode::UniformRandom {
                    return Err(Error::InvalidAttackSpec("max-fid uses uniform-random initialization".into()));
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub(crate) fn expect_kind(&self, kind: AttackKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::InvalidAttackSpec(format!(
                "spec kind {:?} handed to the {kind:?} attack",
                self.kind
            )));
        }
        self.validate()
    }
}

/// L∞, mean L2 and 1-D Wasserstein summary of a perturbation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerturbationSummary {
    pub linf: f64,
    pub l2_mean: f64,
    pub wasserstein_1d: f64,
}

impl PerturbationSummary {
    /// Summarize clean vs perturbed payloads of identical shape, where each
    /// item is `item_len` values long.
    pub fn between(clean: &Tensor, perturbed: &Tensor, item_len: usize) -> Result<Self> {
        let linf = clean.linf_distance(perturbed) as f64;
        let n_items = clean.numel() / item_len;
        let mut l2_sum = 0.0f64;
        for i in 0..n_items {
            let a = &clean.data()[i * item_len..(i + 1) * item_len];
            let b = &perturbed.data()[i * item_len..(i + 1) * item_len];
            l2_sum += a
                .iter()
                .zip(b)
                .map(|(x, y)| {
                    let d = (*x - *y) as f64;
                    d * d
                })
                .sum::<f64>()
                .sqrt();
        }
        let wasserstein = crate::data::wasserstein_1d(clean.data(), perturbed.data())?;
        Ok(PerturbationSummary {
            linf,
            l2_mean: l2_sum / n_items.max(1) as f64,
            wasserstein_1d: wasserstein,
        })
    }
}

/// Everything an attack run produces.
#[derive(Debug, Clone)]
pub struct AttackResult {
    /// Final images (perturbed reals, synthesized pixels, or generator output).
    pub adversarial: ImageBatch,
    /// Clean and perturbed latents for the latent-space kinds.
    pub latents_clean: Option<Tensor>,
    pub latents_adv: Option<Tensor>,
    pub per_item_loss: Vec<f64>,
    pub before: MetricReport,
    pub after: MetricReport,
    pub magnitude: PerturbationSummary,
    /// Mean objective value across items at each step (pre-update).
    pub loss_trace: Vec<f64>,
    /// Fraction of per-item steps that moved the objective in its intended
    /// direction.
    pub monotone_fraction: f64,
    pub steps_taken: usize,
}

/// One projected-gradient step on an L∞ ball:
/// δ' = Π(δ + step·sign(g)); with `clean` given, additionally projects so
/// that clean + δ' stays in [0, 1].
pub fn pgd_linf_step(delta: &mut [f32], grad: &[f32], step_size: f64, eps: f64, clean: Option<&[f32]>) {
    let step = step_size as f32;
    let e = eps as f32;
    for (i, d) in delta.iter_mut().enumerate() {
        let g = grad[i];
        let s = if g > 0.0 {
            1.0
        } else if g < 0.0 {
            -1.0
        } else {
            0.0
        };
        let mut v = (*d + step * s).clamp(-e, e);
        if let Some(x) = clean {
            v = v.clamp(-x[i], 1.0 - x[i]);
        }
        *d = v;
    }
}

/// Fraction of consecutive trace pairs moving in the intended direction
/// (small slack for float noise).
pub(crate) fn monotone_fraction(traces: &[Vec<f64>], ascend: bool) -> f64 {
    let mut good = 0usize;
    let mut total = 0usize;
    for trace in traces {
        for w in trace.windows(2) {
            let slack = 1e-7 * (1.0 + w[0].abs());
            let improving = if ascend { w[1] >= w[0] - slack } else { w[1] <= w[0] + slack };
            total += 1;
            if improving {
                good += 1;
            }
        }
    }
    if total == 0 {
        1.0
    } else {
        good as f64 / total as f64
    }
}

/// Mean trace across items, step by step.
pub(crate) fn mean_trace(traces: &[Vec<f64>]) -> Vec<f64> {
    let steps = traces.first().map(|t| t.len()).unwrap_or(0);
    (0..steps)
        .map(|s| traces.iter().map(|t| t[s]).sum::<f64>() / traces.len() as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_only_clips_to_ball() {
        // δ = (0.5, −0.3), zero gradient, ε = 0.2 → (0.2, −0.2)
        let mut delta = [0.5f32, -0.3];
        pgd_linf_step(&mut delta, &[0.0, 0.0], 0.0, 0.2, None);
        assert_eq!(delta, [0.2, -0.2]);
    }

    #[test]
    fn sign_ascent_from_zero() {
        // grad = (+, −), step 0.1, ε = 1 → (0.1, −0.1)
        let mut delta = [0.0f32, 0.0];
        pgd_linf_step(&mut delta, &[3.0, -0.5], 0.1, 1.0, None);
        assert!((delta[0] - 0.1).abs() < 1e-7);
        assert!((delta[1] + 0.1).abs() < 1e-7);
    }

    #[test]
    fn hundred_steps_never_exit_the_ball() {
        let eps = 0.03f64;
        let mut delta = vec![0.0f32; 16];
        let mut state = 1u64;
        for _ in 0..100 {
            let grad: Vec<f32> = (0..16)
                .map(|_| {
                    state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    ((state >> 33) as f32 / (1u32 << 30) as f32) - 1.5
                })
                .collect();
            pgd_linf_step(&mut delta, &grad, 2.5 * eps / 100.0, eps, None);
            assert!(delta.iter().all(|d| d.abs() <= eps as f32 + 1e-7));
        }
    }

    #[test]
    fn pixel_clamp_keeps_image_valid() {
        let clean = [0.95f32, 0.02];
        let mut delta = [0.0f32, 0.0];
        pgd_linf_step(&mut delta, &[10.0, -10.0], 0.2, 0.2, Some(&clean));
        assert!(clean[0] + delta[0] <= 1.0);
        assert!(clean[1] + delta[1] >= 0.0);
    }

    #[test]
    fn defaults_follow_paper_settings() {
        let w = AttackSpec::defaults(AttackKind::LatentW, 0.0, 1);
        assert_eq!(w.steps, 20);
        assert!((w.step_size - 0.3).abs() < 1e-12);
        let z = AttackSpec::defaults(AttackKind::LatentZ, 0.0, 1);
        assert_eq!(z.steps, 50);
        let mi = AttackSpec::defaults(AttackKind::MinIs, 0.01, 1);
        assert_eq!(mi.steps, 100);
        assert_eq!(mi.init, InitMode::Zero);
        let mf = AttackSpec::defaults(AttackKind::MaxFid, 0.01, 1);
        assert_eq!(mf.init, InitMode::UniformRandom);
        assert!((mf.step_size - 2.5 * 0.01 / 100.0).abs() < 1e-12);
    }

    #[test]
    fn validation_rejects_bad_specs() {
        let mut s = AttackSpec::defaults(AttackKind::MinIs, 0.01, 1);
        s.step_size = 0.0;
        assert!(s.validate().is_err());
        let mut s = AttackSpec::defaults(AttackKind::MinIs, 0.01, 1);
        s.init = InitMode::UniformRandom;
        assert!(s.validate().is_err());
        let mut s = AttackSpec::defaults(AttackKind::MaxFid, 0.01, 1);
        s.epsilon = -0.5;
        assert!(s.validate().is_err());
        assert!(AttackSpec::defaults(AttackKind::MaxFid, 0.0, 1).validate().is_ok());
    }

    #[test]
    fn monotone_fraction_counts_direction() {
        let up = vec![vec![0.0, 1.0, 2.0, 3.0]];
        assert_eq!(monotone_fraction(&up, true), 1.0);
        assert_eq!(monotone_fraction(&up, false), 0.0);
        let mixed = vec![vec![0.0, 1.0, 0.5, 2.0]];
        assert!((monotone_fraction(&mixed, true) - 2.0 / 3.0).abs() < 1e-12);
    }
}

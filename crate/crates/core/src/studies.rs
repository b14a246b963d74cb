//! Experiment orchestration shared by the CLI and the acceptance suite:
//! truncation ablations, degradation sweeps, attack sweeps, and the tabular
//! sweep-report rendering (CSV + JSON lines).

use crate::attacks::{self, AttackKind, AttackSpec};
use crate::data::{self, ImageBatch};
use crate::error::{Error, Result};
use crate::metrics::{self, MetricReport};
use crate::models::{MiniEmbedder, MiniStyleGen, LATENT_DIM};
use serde::{Deserialize, Serialize};

/// Rows of (parameters → metric values) with a schema name so reports can be
/// merged safely. Renders to CSV (bit-stable) and JSON lines.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SweepReport {
    pub schema: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub config_digest: String,
    pub seed: u64,
}

impl SweepReport {
    pub fn new(schema: &str, columns: &[&str], seed: u64) -> Self {
        SweepReport {
            schema: schema.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            config_digest: String::new(),
            seed,
        }
    }

    pub fn push_row(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// CSV with a `# schema`/`# config` comment header; every row carries the
    /// report digest and seed as trailing columns.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("# schema: {}\n", self.schema));
        out.push_str(&format!("# config_digest: {}\n", self.config_digest));
        out.push_str(&format!("# seed: {}\n", self.seed));
        out.push_str(&self.columns.join(","));
        out.push_str(",config_digest,seed\n");
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push_str(&format!(",{},{}\n", self.config_digest, self.seed));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("sweep report serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::InvalidArgument(format!("sweep report parse: {e}")))
    }

    /// Merge reports with identical schema and columns, preserving row order.
    /// Returns the merged report and whether config digests disagreed.
    pub fn merge(reports: &[SweepReport]) -> Result<(SweepReport, bool)> {
        let first = reports
            .first()
            .ok_or_else(|| Error::InvalidArgument("cannot merge zero reports".into()))?;
        let mut merged = first.clone();
        let mut digest_conflict = false;
        for r in &reports[1..] {
            if r.schema != first.schema || r.columns != first.columns {
                return Err(Error::InvalidArgument(format!(
                    "schema mismatch: {} vs {}",
                    first.schema, r.schema
                )));
            }
            if r.config_digest != first.config_digest {
                digest_conflict = true;
            }
            merged.rows.extend(r.rows.iter().cloned());
        }
        Ok((merged, digest_conflict))
    }

    /// Plain-text table for human reading.
    pub fn to_text(&self) -> String {
        let mut widths: Vec<usize> = self.columns.iter().map(|c| c.len()).collect();
        for row in &self.rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.len());
            }
        }
        let mut out = format!("schema: {}  (seed {})\n", self.schema, self.seed);
        let header: Vec<String> = self
            .columns
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:>w$}"))
            .collect();
        out.push_str(&header.join("  "));
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
            out.push_str(&cells.join("  "));
            out.push('\n');
        }
        out
    }
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

/// Truncation study output: per-α FID against real data, the full (α_i, α_j)
/// pair matrix (one shared latent pool per side), and the real-vs-real
/// disjoint-split baseline.
#[derive(Debug, Clone)]
pub struct TruncationStudy {
    pub gen_vs_real: Vec<(f64, MetricReport)>,
    /// Entries (α_i, α_j, fid) for i ≤ j; the diagonal compares a
    /// distribution with itself.
    pub pairs: Vec<(f64, f64, f64)>,
    pub real_vs_real: f64,
    pub report: SweepReport,
}

/// Run the truncation ablation. `n` latents are drawn once and reused across
/// every α (common random numbers); the diagonal pair entries therefore
/// compare identical sample sets and sit at the numerical floor, mirroring a
/// distribution-vs-itself comparison. The real pool is split disjointly in
/// half for the real-vs-real baseline.
pub fn truncation_study(
    embedder: &MiniEmbedder,
    gen: &MiniStyleGen,
    real: &ImageBatch,
    alphas: &[f64],
    n: usize,
    seed: u64,
) -> Result<TruncationStudy> {
    if alphas.is_empty() {
        return Err(Error::InvalidArgument("truncation study needs at least one alpha".into()));
    }
    let z = data::sample_latents(n, LATENT_DIM, data::LatentDist::StandardNormal, seed);
    let per_alpha: Vec<(f64, ImageBatch)> = alphas
        .iter()
        .map(|&a| Ok((a, gen.generate(&z, a)?)))
        .collect::<Result<_>>()?;

    let mut report = SweepReport::new(
        "truncation-study",
        &["row_kind", "alpha_i", "alpha_j", "metric", "value", "n"],
        seed,
    );

    let mut gen_vs_real = Vec::new();
    for (a, images) in &per_alpha {
        let r = metrics::fid(embedder, real, images)?;
        report.push_row(vec![
            "gen_vs_real".into(),
            fmt(*a),
            String::new(),
            r.metric.clone(),
            fmt(r.value),
            images.len().to_string(),
        ]);
        gen_vs_real.push((*a, r));
    }

    let mut pairs = Vec::new();
    for i in 0..per_alpha.len() {
        for j in i..per_alpha.len() {
            let r = metrics::fid(embedder, &per_alpha[i].1, &per_alpha[j].1)?;
            report.push_row(vec![
                "pair".into(),
                fmt(per_alpha[i].0),
                fmt(per_alpha[j].0),
                r.metric.clone(),
                fmt(r.value),
                n.to_string(),
            ]);
            pairs.push((per_alpha[i].0, per_alpha[j].0, r.value));
        }
    }

    let half = real.len() / 2;
    if half < 2 {
        return Err(Error::TooFewSamples { needed: 4, got: real.len() });
    }
    let split_a = real.slice(0, half);
    let split_b = real.slice(half, half);
    let rr = metrics::fid(embedder, &split_a, &split_b)?;
    report.push_row(vec![
        "real_vs_real".into(),
        String::new(),
        String::new(),
        rr.metric.clone(),
        fmt(rr.value),
        half.to_string(),
    ]);

    Ok(TruncationStudy { gen_vs_real, pairs, real_vs_real: rr.value, report })
}

/// Degradation sweep output: FID between the clean set and its degraded copy
/// for each severity, one row family per transform.
#[derive(Debug, Clone)]
pub struct DegradationStudy {
    pub noise: Vec<(f64, f64)>,
    pub blur: Vec<(f64, f64)>,
    pub report: SweepReport,
}

/// FID(clean, degraded(σ)) for Gaussian noise and blur severities. A σ = 0
/// row (identity transform) is prepended to each family.
pub fn degradation_study(
    embedder: &MiniEmbedder,
    clean: &ImageBatch,
    noise_sigmas: &[f64],
    blur_sigmas: &[f64],
    seed: u64,
) -> Result<DegradationStudy> {
    let mut report = SweepReport::new("degradation-study", &["family", "sigma", "metric", "value", "n"], seed);
    let mut noise = Vec::new();
    let mut blur = Vec::new();

    let zero = metrics::fid(embedder, clean, clean)?;
    for family in ["noise", "blur"] {
        report.push_row(vec![
            family.into(),
            fmt(0.0),
            zero.metric.clone(),
            fmt(zero.value),
            clean.len().to_string(),
        ]);
    }
    noise.push((0.0, zero.value));
    blur.push((0.0, zero.value));

    for &sigma in noise_sigmas {
        let degraded = data::gaussian_noise(clean, sigma, seed)?;
        let r = metrics::fid(embedder, clean, &degraded)?;
        report.push_row(vec![
            "noise".into(),
            fmt(sigma),
            r.metric.clone(),
            fmt(r.value),
            clean.len().to_string(),
        ]);
        noise.push((sigma, r.value));
    }
    for &sigma in blur_sigmas {
        let degraded = data::gaussian_blur(clean, sigma)?;
        let r = metrics::fid(embedder, clean, &degraded)?;
        report.push_row(vec![
            "blur".into(),
            fmt(sigma),
            r.metric.clone(),
            fmt(r.value),
            clean.len().to_string(),
        ]);
        blur.push((sigma, r.value));
    }

    Ok(DegradationStudy { noise, blur, report })
}

/// One attack per ε (bounded kinds) or per α (latent kinds), reported as a
/// sweep with before/after metric columns and perturbation magnitudes.
pub struct AttackSweep {
    pub results: Vec<(f64, attacks::AttackResult)>,
    pub report: SweepReport,
}

/// `params` is the ε list for bounded kinds, the α list for latent kinds,
/// and a single placeholder entry for the unbounded synthesis kinds. Bounded
/// kinds re-derive step = 2.5·ε/steps per row unless `step_override` pins it.
pub fn attack_sweep(
    embedder: &MiniEmbedder,
    generator: Option<&MiniStyleGen>,
    real: &ImageBatch,
    base: &AttackSpec,
    params: &[f64],
    n_synth: usize,
    step_override: Option<f64>,
) -> Result<AttackSweep> {
    let mut report = SweepReport::new(
        "attack-sweep",
        &[
            "kind",
            "param",
            "metric",
            "value_before",
            "value_after",
            "linf",
            "l2_mean",
            "wasserstein_1d",
            "monotone_fraction",
            "n",
        ],
        base.seed,
    );
    let mut results = Vec::new();
    for &p in params {
        let mut spec = base.clone();
        if base.kind.is_bounded() {
            spec.epsilon = p;
            spec.step_size = match step_override {
                Some(s) => s,
                None if p == 0.0 => 1.0, // ε=0 projects every update to zero
                None => 2.5 * p / spec.steps.max(1) as f64,
            };
        }
        let kind_name;
        let result = match base.kind {
            AttackKind::MinIs => {
                kind_name = "min-is";
                attacks::attack_min_is(embedder, real, &spec)?
            }
            AttackKind::MaxFid => {
                kind_name = "max-fid";
                attacks::attack_max_fid(embedder, real, &spec)?
            }
            AttackKind::MaxIs => {
                kind_name = "max-is";
                attacks::attack_max_is(embedder, n_synth, &spec)?
            }
            AttackKind::MinFid => {
                kind_name = "min-fid";
                attacks::attack_min_fid(embedder, real, &spec)?
            }
            AttackKind::LatentZ => {
                kind_name = "latent-z";
                let g = generator
                    .ok_or_else(|| Error::InvalidArgument("latent attacks need a generator".into()))?;
                attacks::attack_latent_z(embedder, g, real, p, &spec)?
            }
            AttackKind::LatentW => {
                kind_name = "latent-w";
                let g = generator
                    .ok_or_else(|| Error::InvalidArgument("latent attacks need a generator".into()))?;
                attacks::attack_latent_w(embedder, g, real, p, &spec)?
            }
        };
        report.push_row(vec![
            kind_name.into(),
            fmt(p),
            result.after.metric.clone(),
            fmt(result.before.value),
            fmt(result.after.value),
            fmt(result.magnitude.linf),
            fmt(result.magnitude.l2_mean),
            fmt(result.magnitude.wasserstein_1d),
            fmt(result.monotone_fraction),
            result.adversarial.len().to_string(),
        ]);
        results.push((p, result));
    }
    Ok(AttackSweep { results, report })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_preserves_rows_and_flags_digest_conflicts() {
        let mut a = SweepReport::new("s", &["x", "y"], 1);
        a.config_digest = "d1".into();
        a.push_row(vec!["1".into(), "2".into()]);
        let mut b = SweepReport::new("s", &["x", "y"], 1);
        b.config_digest = "d2".into();
        b.push_row(vec!["3".into(), "4".into()]);

        let (merged, conflict) = SweepReport::merge(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(merged.rows.len(), 2);
        assert!(conflict);

        b.config_digest = "d1".into();
        let (_, conflict) = SweepReport::merge(&[a.clone(), b]).unwrap();
        assert!(!conflict);

        let other = SweepReport::new("other", &["x", "y"], 1);
        assert!(SweepReport::merge(&[a, other]).is_err());
    }

    #[test]
    fn merge_of_nothing_is_an_error() {
        assert!(SweepReport::merge(&[]).is_err());
    }

    #[test]
    fn csv_rendering_is_stable() {
        let mut r = SweepReport::new("s", &["x"], 9);
        r.config_digest = "abc".into();
        r.push_row(vec!["1.5".into()]);
        let csv1 = r.to_csv();
        let csv2 = r.to_csv();
        assert_eq!(csv1, csv2);
        assert!(csv1.contains("x,config_digest,seed"));
        assert!(csv1.contains("1.5,abc,9"));
    }

    #[test]
    fn json_round_trip() {
        let mut r = SweepReport::new("s", &["x"], 9);
        r.push_row(vec!["1".into()]);
        let back = SweepReport::from_json(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }
}

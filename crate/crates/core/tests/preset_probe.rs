//! Ignored-by-default probes for choosing the desk-scale preset values.

use rfidlab_core::attacks::{attack_max_fid, attack_min_is, AttackKind, AttackSpec};
use rfidlab_core::data::{generate_dataset, ToyDatasetSpec};
use rfidlab_core::metrics::fid;
use rfidlab_core::models::MiniEmbedder;
use rfidlab_core::training::{
    evaluate_accuracy, train_adversarial, train_generator, train_nominal, GanConfig, TrainConfig,
};
use std::time::Instant;

fn recipe(epochs: usize, kappa: f64) -> TrainConfig {
    let mut cfg = TrainConfig::nominal(epochs, 11);
    cfg.momentum = 0.9;
    cfg.lr = 0.02;
    cfg.kappa = kappa;
    cfg
}

#[test]
#[ignore]
fn probe_kappa_margins() {
    let spec = ToyDatasetSpec::new(300, 420, 1);
    let d = generate_dataset(&spec);

    let nominal = train_nominal(&d.train, &d.eval, &recipe(6, 0.0)).unwrap();
    println!("nominal clean {:.3}", nominal.log.final_clean_accuracy);
    let subset = d.eval.slice(0, 128);
    let mut mf = AttackSpec::defaults(AttackKind::MaxFid, 0.06, 5);
    mf.steps = 100;
    let nom_fid_after = attack_max_fid(&nominal.model, &subset, &mf).unwrap().after.value;
    println!("nominal maxfid(0.06) after {nom_fid_after:.2}");

    for kappa in [1.25, 1.5, 2.5] {
        let t0 = Instant::now();
        let robust = train_adversarial(&d.train, &d.eval, &recipe(6, kappa)).unwrap();
        let nom_rob = evaluate_accuracy(&nominal.model, &d.eval, Some(kappa)).unwrap();
        let r = attack_max_fid(&robust.model, &subset, &mf).unwrap();
        let mut mi = AttackSpec::defaults(AttackKind::MinIs, 0.06, 5);
        mi.steps = 100;
        let is = attack_min_is(&robust.model, &subset, &mi).unwrap();
        println!(
            "kappa {kappa}: {:.0}s clean {:.3} robust {:.3} (nominal robust {:.3}) | maxfid after {:.2} ratio {:.1} | IS {:.2}→{:.2}",
            t0.elapsed().as_secs_f64(),
            robust.log.final_clean_accuracy,
            robust.log.final_robust_accuracy.unwrap(),
            nom_rob,
            r.after.value,
            nom_fid_after / r.after.value.max(1e-9),
            is.before.value,
            is.after.value,
        );
    }
}

#[test]
#[ignore]
fn probe_gan_and_truncation() {
    let spec = ToyDatasetSpec::new(300, 420, 1);
    let d = generate_dataset(&spec);
    let nominal = train_nominal(&d.train, &d.eval, &recipe(6, 0.0)).unwrap();
    let k64 = train_adversarial(&d.train, &d.eval, &recipe(6, 1.25)).unwrap();
    println!("embedders ready (nominal {:.3}, k64 {:.3})", nominal.log.final_clean_accuracy, k64.log.final_clean_accuracy);

    for epochs in [6, 10] {
        let t0 = Instant::now();
        let mut cfg = GanConfig::new(epochs, 5);
        cfg.w_bar_samples = 2048;
        cfg.fid_samples = 1024;
        let gan = train_generator(&d.train, &cfg, Some(&nominal.model)).unwrap();
        println!(
            "gan {epochs}ep: {:.0}s fid_vs_real {:?} collapse {:?} d_loss {:.3} g_loss {:.3}",
            t0.elapsed().as_secs_f64(),
            gan.log.fid_vs_real,
            gan.log.mode_collapse_warning,
            gan.log.epochs.last().unwrap().d_loss,
            gan.log.epochs.last().unwrap().g_loss,
        );

        // untrained baseline for comparison
        if epochs == 6 {
            let untrained = rfidlab_core::models::MiniStyleGen::init(5);
            let z = rfidlab_core::data::sample_latents(1024, 64, rfidlab_core::data::LatentDist::StandardNormal, 3);
            let imgs = untrained.generate(&z, 1.0).unwrap();
            let f = fid(&nominal.model, &d.train.slice(0, 1024), &imgs).unwrap();
            println!("untrained generator fid {:.2}", f.value);
        }

        // truncation pattern with the k64 embedder
        let study = rfidlab_core::studies::truncation_study(
            &k64.model,
            &gan.generator,
            &d.eval,
            &[0.7, 0.9, 1.0],
            2048,
            7,
        )
        .unwrap();
        println!("gen_vs_real: {:?}", study.gen_vs_real.iter().map(|(a, r)| (*a, r.value)).collect::<Vec<_>>());
        println!("pairs: {:?}", study.pairs);
        println!("real_vs_real: {:.5}", study.real_vs_real);
        let max_offdiag = study
            .pairs
            .iter()
            .filter(|(i, j, _)| i != j)
            .map(|(_, _, v)| *v)
            .fold(0.0f64, f64::max);
        let max_diag = study
            .pairs
            .iter()
            .filter(|(i, j, _)| i == j)
            .map(|(_, _, v)| *v)
            .fold(0.0f64, f64::max);
        let gvr_alpha1 = study.gen_vs_real.iter().find(|(a, _)| *a == 1.0).unwrap().1.value;
        println!(
            "diag/offdiag = {:.3e} (need ≤ 1e-3) | rvr/gvr = {:.3e} (need ≤ 1e-2)",
            max_diag / max_offdiag,
            study.real_vs_real / gvr_alpha1,
        );
    }
}

//! Finite-difference verification of every tape primitive and the full
//! embedder loss. The reference route is `rfidlab_core::oracle`: naive f64
//! kernels and central differences, fully independent of the production
//! f32 kernels.

use rfidlab_core::models::MiniEmbedder;
use rfidlab_core::oracle::{self, fd_grad, relative_error};
use rfidlab_core::tape::Tape;
use rfidlab_core::Tensor;

#[test]
fn every_primitive_matches_finite_differences() {
    // 100 random trials per primitive at relative tolerance 1e-3
    let outcome = oracle::primitive_gradcheck_suite(100, 1e-3);
    println!(
        "primitive gradchecks: {} probes, worst relative error {:.3e}",
        outcome.probes, outcome.worst_relative_error
    );
    assert!(outcome.failures.is_empty(), "failures: {:?}", outcome.failures);
    assert!(outcome.probes >= 100 * 20, "only {} probes ran", outcome.probes);
}

/// The spec's two-layer-network example: analytic gradient of a 2-layer MLP
/// cross-entropy against central differences at h = 1e-3, within 1e-4.
#[test]
fn two_layer_net_gradient_at_tight_tolerance() {
    let (d_in, d_hidden, classes) = (8usize, 16usize, 4usize);
    for t in 0..20 {
        let mut rng = oracle::probe_rng(0x400 + t as u64, 0);
        let x = oracle::sample_away_from_kinks(&mut rng, d_in, 1.0);
        let w1 = oracle::sample_away_from_kinks(&mut rng, d_in * d_hidden, 0.5);
        let w2 = oracle::sample_away_from_kinks(&mut rng, d_hidden * classes, 0.5);
        let label = t % classes;
        let f32v = |v: &[f64]| v.iter().map(|&x| x as f32).collect::<Vec<f32>>();

        let mut tape = Tape::new();
        let xv = tape.leaf(Tensor::new(vec![1, d_in], f32v(&x)).unwrap(), true);
        let w1v = tape.constant(Tensor::new(vec![d_in, d_hidden], f32v(&w1)).unwrap());
        let w2v = tape.constant(Tensor::new(vec![d_hidden, classes], f32v(&w2)).unwrap());
        let h1 = tape.matmul(xv, w1v).unwrap();
        let a1 = tape.relu(h1);
        let logits = tape.matmul(a1, w2v).unwrap();
        let loss = tape.cross_entropy(logits, &[label]).unwrap();
        tape.backward(loss).unwrap();
        let analytic: Vec<f64> = tape.grad(xv).unwrap().data().iter().map(|&v| v as f64).collect();

        let loss_f = |probe: &[f64]| -> f64 {
            let h1 = oracle::ref_matmul(probe, &w1, 1, d_in, d_hidden);
            let a1: Vec<f64> = h1.iter().map(|&v| v.max(0.0)).collect();
            let logits = oracle::ref_matmul(&a1, &w2, 1, d_hidden, classes);
            oracle::ref_cross_entropy(&logits, &[label], 1, classes)
        };
        let coords: Vec<usize> = (0..d_in).collect();
        let fd = fd_grad(&loss_f, &x, &coords, 1e-3);
        let err = relative_error(&analytic, &fd);
        assert!(err < 1e-4, "2-layer net trial {t}: relative error {err}");
    }
}

/// Full embedder classifier loss versus the f64 shadow forward; at least 100
/// kink-free coordinate probes at relative tolerance 1e-3.
#[test]
fn full_embedder_loss_matches_finite_differences() {
    let model = MiniEmbedder::init(99);
    let outcome = oracle::embedder_gradcheck(&model, 8, 24, 1e-3);
    println!(
        "embedder gradcheck: {} kink-free probes, worst relative error {:.3e}",
        outcome.probes, outcome.worst_relative_error
    );
    assert!(outcome.failures.is_empty(), "failures: {:?}", outcome.failures);
    assert!(outcome.probes >= 100, "only {} clean probes", outcome.probes);
}

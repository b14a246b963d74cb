//! Independent f64 reference implementations and finite-difference probes.
//!
//! Everything here is written directly from the operator definitions (naive
//! output-indexed loops, f64 end to end) and never calls into [`crate::ops`]
//! or [`crate::tape`]; it exists solely so tests can check the production
//! kernels and their gradients against a second route. Not part of the
//! library's functional surface.

use crate::data::rng::{item_rng, normal, uniform_in};
use crate::models::MiniEmbedder;
use rand_chacha::ChaCha8Rng;

/// Central finite differences of `f` at `x` over the requested coordinates.
pub fn fd_grad(f: &dyn Fn(&[f64]) -> f64, x: &[f64], coords: &[usize], h: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(coords.len());
    let mut probe = x.to_vec();
    for &c in coords {
        let keep = probe[c];
        probe[c] = keep + h;
        let plus = f(&probe);
        probe[c] = keep - h;
        let minus = f(&probe);
        probe[c] = keep;
        out.push((plus - minus) / (2.0 * h));
    }
    out
}

/// Central differences with kink detection. Central differences are only
/// valid where `f` is twice differentiable; a probe that straddles a ReLU
/// kink shows a second difference of order h·|slope jump| instead of h²·f''.
/// Such coordinates come back as `None`.
pub fn fd_grad_smooth(f: &dyn Fn(&[f64]) -> f64, x: &[f64], coords: &[usize], h: f64) -> Vec<Option<f64>> {
    let f0 = f(x);
    let mut out = Vec::with_capacity(coords.len());
    let mut probe = x.to_vec();
    for &c in coords {
        let keep = probe[c];
        probe[c] = keep + h;
        let plus = f(&probe);
        probe[c] = keep - h;
        let minus = f(&probe);
        probe[c] = keep;
        let second = (plus + minus - 2.0 * f0).abs();
        let central = (plus - minus) / (2.0 * h);
        // second/(2h) estimates how far a slope jump shifts the central
        // estimate; flag the coordinate when that shift is non-negligible
        let kink = second / (2.0 * h) > 5e-4 * (1.0 + central.abs());
        out.push(if kink { None } else { Some(central) });
    }
    out
}

/// Norm-based relative error between an analytic gradient (restricted to
/// `coords`) and its finite-difference estimate.
pub fn relative_error(analytic: &[f64], fd: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(fd).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let scale = analytic
        .iter()
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
        .max(fd.iter().map(|v| v * v).sum::<f64>().sqrt())
        .max(1e-6);
    diff / scale
}

// ── Naive f64 reference kernels (output-indexed, direct from definitions) ──

pub fn ref_matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0;
            for p in 0..k {
                acc += a[i * k + p] * b[p * n + j];
            }
            out[i * n + j] = acc;
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
pub fn ref_conv2d(
    x: &[f64],
    w: &[f64],
    n: usize,
    ci: usize,
    h: usize,
    wd: usize,
    co: usize,
    k: usize,
    pad: usize,
) -> Vec<f64> {
    let oh = h + 2 * pad + 1 - k;
    let ow = wd + 2 * pad + 1 - k;
    let mut out = vec![0.0; n * co * oh * ow];
    for b in 0..n {
        for oc in 0..co {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = 0.0;
                    for ic in 0..ci {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = oy as isize + ky as isize - pad as isize;
                                let ix = ox as isize + kx as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                acc += x[((b * ci + ic) * h + iy as usize) * wd + ix as usize]
                                    * w[((oc * ci + ic) * k + ky) * k + kx];
                            }
                        }
                    }
                    out[((b * co + oc) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
pub fn ref_conv_transpose2d(
    x: &[f64],
    w: &[f64],
    n: usize,
    ci: usize,
    h: usize,
    wd: usize,
    co: usize,
    k: usize,
    stride: usize,
    pad: usize,
) -> Vec<f64> {
    let oh = (h - 1) * stride + k - 2 * pad;
    let ow = (wd - 1) * stride + k - 2 * pad;
    let mut out = vec![0.0; n * co * oh * ow];
    for b in 0..n {
        for oc in 0..co {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = 0.0;
                    for ic in 0..ci {
                        for iy in 0..h {
                            for ix in 0..wd {
                                for ky in 0..k {
                                    for kx in 0..k {
                                        if stride * iy + ky == oy + pad && stride * ix + kx == ox + pad {
                                            acc += x[((b * ci + ic) * h + iy) * wd + ix]
                                                * w[((ic * co + oc) * k + ky) * k + kx];
                                        }
                                    }
                                }
                            }
                        }
                    }
                    out[((b * co + oc) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    out
}

pub fn ref_avg_pool2(x: &[f64], nc: usize, h: usize, w: usize) -> Vec<f64> {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = vec![0.0; nc * oh * ow];
    for c in 0..nc {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = 0.0;
                for dy in 0..2 {
                    for dx in 0..2 {
                        acc += x[(c * h + 2 * oy + dy) * w + 2 * ox + dx];
                    }
                }
                out[(c * oh + oy) * ow + ox] = acc / 4.0;
            }
        }
    }
    out
}

pub fn ref_softmax_rows(x: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        let row = &x[r * cols..(r + 1) * cols];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|&v| (v - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        for (c, e) in exps.into_iter().enumerate() {
            out[r * cols + c] = e / sum;
        }
    }
    out
}

pub fn ref_cross_entropy(logits: &[f64], labels: &[usize], rows: usize, cols: usize) -> f64 {
    let p = ref_softmax_rows(logits, rows, cols);
    let mut acc = 0.0;
    for (r, &l) in labels.iter().enumerate() {
        acc += -p[r * cols + l].ln();
    }
    acc / rows as f64
}

// ── f64 shadow of the embedder forward ─────────────────────────────────────

fn upcast(t: &crate::tensor::Tensor) -> Vec<f64> {
    t.data().iter().map(|&v| v as f64).collect()
}

fn add_channel_bias(x: &mut [f64], bias: &[f64], hw: usize) {
    for (ch, bv) in bias.iter().enumerate() {
        for v in &mut x[ch * hw..(ch + 1) * hw] {
            *v += bv;
        }
    }
}

fn relu(x: &mut [f64]) {
    for v in x.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// f64 forward of the full embedder classifier loss on one (3,32,32) image,
/// mirroring the architecture but none of the production code.
pub fn ref_embedder_loss(model: &MiniEmbedder, pixels: &[f64], label: usize) -> f64 {
    let (c1w, c1b) = (upcast(&model.conv1_w), upcast(&model.conv1_b));
    let (c2w, c2b) = (upcast(&model.conv2_w), upcast(&model.conv2_b));
    let (c3w, c3b) = (upcast(&model.conv3_w), upcast(&model.conv3_b));
    let (f1w, f1b) = (upcast(&model.fc1_w), upcast(&model.fc1_b));
    let (f2w, f2b) = (upcast(&model.fc2_w), upcast(&model.fc2_b));
    let ch = [model.conv1_w.shape()[0], model.conv2_w.shape()[0], model.conv3_w.shape()[0]];

    let mut h = ref_conv2d(pixels, &c1w, 1, 3, 32, 32, ch[0], 3, 1);
    add_channel_bias(&mut h, &c1b, 32 * 32);
    relu(&mut h);
    let mut h = ref_avg_pool2(&h, ch[0], 32, 32);

    h = ref_conv2d(&h, &c2w, 1, ch[0], 16, 16, ch[1], 3, 1);
    add_channel_bias(&mut h, &c2b, 16 * 16);
    relu(&mut h);
    let mut h = ref_avg_pool2(&h, ch[1], 16, 16);

    h = ref_conv2d(&h, &c3w, 1, ch[1], 8, 8, ch[2], 3, 1);
    add_channel_bias(&mut h, &c3b, 8 * 8);
    relu(&mut h);
    let h = ref_avg_pool2(&h, ch[2], 8, 8);

    let flat = ch[2] * 16;
    let d_e = model.fc1_w.shape()[1];
    let mut emb = ref_matmul(&h, &f1w, 1, flat, d_e);
    for (v, b) in emb.iter_mut().zip(&f1b) {
        *v += b;
    }
    relu(&mut emb);

    let classes = model.fc2_w.shape()[1];
    let mut logits = ref_matmul(&emb, &f2w, 1, d_e, classes);
    for (v, b) in logits.iter_mut().zip(&f2b) {
        *v += b;
    }
    ref_cross_entropy(&logits, &[label], 1, classes)
}

/// Seeded sampler with values kept away from activation kinks so central
/// differences stay two-sided.
pub fn sample_away_from_kinks(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let v = scale * normal(rng);
            if v.abs() < 0.05 * scale {
                if v >= 0.0 {
                    v + 0.1 * scale
                } else {
                    v - 0.1 * scale
                }
            } else {
                v
            }
        })
        .collect()
}

/// Uniform draw in [lo, hi) per coordinate.
pub fn sample_uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| uniform_in(rng, lo, hi)).collect()
}

pub fn probe_rng(seed: u64, index: u64) -> ChaCha8Rng {
    item_rng(seed, 0xFD, index)
}

// ── Gradcheck drivers ───────────────────────────────────────────────────────
//
// These orchestrate analytic-vs-finite-difference comparisons; the expected
// values always come from the naive f64 kernels above.

use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

pub struct GradcheckOutcome {
    pub probes: usize,
    pub worst_relative_error: f64,
    pub failures: Vec<String>,
}

impl GradcheckOutcome {
    fn merge(&mut self, other: GradcheckOutcome) {
        self.probes += other.probes;
        self.worst_relative_error = self.worst_relative_error.max(other.worst_relative_error);
        self.failures.extend(other.failures);
    }
}

fn to_f32(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

fn project_loss(tape: &mut Tape, y: Var, r: &[f64]) -> Var {
    let shape = tape.value(y).shape().to_vec();
    let rv = tape.constant(Tensor::new(shape, to_f32(r)).unwrap());
    let m = tape.mul(y, rv).unwrap();
    tape.sum(m)
}

type TapeBuild<'a> = &'a dyn Fn(&mut Tape, Var) -> Var;
type RefForward<'a> = &'a dyn Fn(&[f64]) -> Vec<f64>;
type Sampler<'a> = &'a dyn Fn(&mut ChaCha8Rng, usize) -> Vec<f64>;

/// Gradcheck one unary primitive over `trials` random inputs: the tape
/// gradient of Σ r⊙op(x) against central differences of the f64 reference.
pub fn check_unary(
    name: &str,
    trials: usize,
    x_len: usize,
    shape: Vec<usize>,
    sampler: Sampler,
    build: TapeBuild,
    reference: RefForward,
    tol: f64,
) -> GradcheckOutcome {
    let mut out = GradcheckOutcome { probes: 0, worst_relative_error: 0.0, failures: Vec::new() };
    for t in 0..trials {
        let mut rng = probe_rng(0x100 + t as u64, name.len() as u64);
        let x = sampler(&mut rng, x_len);
        let y_len = reference(&x).len();
        let r: Vec<f64> = sample_away_from_kinks(&mut rng, y_len, 1.0);

        let mut tape = Tape::new();
        let xv = tape.leaf(Tensor::new(shape.clone(), to_f32(&x)).unwrap(), true);
        let y = build(&mut tape, xv);
        let loss = project_loss(&mut tape, y, &r);
        tape.backward(loss).unwrap();
        let analytic: Vec<f64> = tape.grad(xv).unwrap().data().iter().map(|&v| v as f64).collect();

        let loss_f = |probe: &[f64]| -> f64 { reference(probe).iter().zip(&r).map(|(a, b)| a * b).sum() };
        let coords: Vec<usize> = (0..x_len).collect();
        let fd = fd_grad(&loss_f, &x, &coords, 1e-5);
        let err = relative_error(&analytic, &fd);
        out.probes += 1;
        out.worst_relative_error = out.worst_relative_error.max(err);
        if err >= tol {
            out.failures.push(format!("{name} trial {t}: relative error {err:.3e}"));
        }
    }
    out
}

/// Gradcheck one binary primitive, probing the gradient w.r.t. each operand.
#[allow(clippy::too_many_arguments)]
pub fn check_binary(
    name: &str,
    trials: usize,
    a_len: usize,
    b_len: usize,
    a_shape: Vec<usize>,
    b_shape: Vec<usize>,
    build: &dyn Fn(&mut Tape, Var, Var) -> Var,
    reference: &dyn Fn(&[f64], &[f64]) -> Vec<f64>,
    tol: f64,
) -> GradcheckOutcome {
    let mut out = GradcheckOutcome { probes: 0, worst_relative_error: 0.0, failures: Vec::new() };
    for t in 0..trials {
        let mut rng = probe_rng(0x200 + t as u64, name.len() as u64);
        let a = sample_away_from_kinks(&mut rng, a_len, 1.0);
        let b = sample_away_from_kinks(&mut rng, b_len, 1.0);
        let y_len = reference(&a, &b).len();
        let r: Vec<f64> = sample_away_from_kinks(&mut rng, y_len, 1.0);

        for side in 0..2 {
            let mut tape = Tape::new();
            let av = tape.leaf(Tensor::new(a_shape.clone(), to_f32(&a)).unwrap(), side == 0);
            let bv = tape.leaf(Tensor::new(b_shape.clone(), to_f32(&b)).unwrap(), side == 1);
            let y = build(&mut tape, av, bv);
            let loss = project_loss(&mut tape, y, &r);
            tape.backward(loss).unwrap();
            let target = if side == 0 { av } else { bv };
            let analytic: Vec<f64> = tape.grad(target).unwrap().data().iter().map(|&v| v as f64).collect();

            let loss_f = |probe: &[f64]| -> f64 {
                let y = if side == 0 { reference(probe, &b) } else { reference(&a, probe) };
                y.iter().zip(&r).map(|(p, q)| p * q).sum()
            };
            let base = if side == 0 { &a } else { &b };
            let coords: Vec<usize> = (0..base.len()).collect();
            let fd = fd_grad(&loss_f, base, &coords, 1e-5);
            let err = relative_error(&analytic, &fd);
            out.probes += 1;
            out.worst_relative_error = out.worst_relative_error.max(err);
            if err >= tol {
                out.failures.push(format!("{name} side {side} trial {t}: relative error {err:.3e}"));
            }
        }
    }
    out
}

/// Run every primitive through its gradcheck; `trials` per primitive.
pub fn primitive_gradcheck_suite(trials: usize, tol: f64) -> GradcheckOutcome {
    let mut total = GradcheckOutcome { probes: 0, worst_relative_error: 0.0, failures: Vec::new() };

    total.merge(check_unary(
        "relu", trials, 32, vec![32],
        &|rng, n| sample_away_from_kinks(rng, n, 1.0),
        &|t, x| t.relu(x),
        &|x| x.iter().map(|&v| v.max(0.0)).collect(),
        tol,
    ));
    total.merge(check_unary(
        "leaky_relu", trials, 32, vec![32],
        &|rng, n| sample_away_from_kinks(rng, n, 1.0),
        &|t, x| t.leaky_relu(x, 0.2),
        &|x| x.iter().map(|&v| if v >= 0.0 { v } else { 0.2 * v }).collect(),
        tol,
    ));
    total.merge(check_unary(
        "sigmoid", trials, 24, vec![24],
        &|rng, n| sample_away_from_kinks(rng, n, 2.0),
        &|t, x| t.sigmoid(x),
        &|x| x.iter().map(|&v| 1.0 / (1.0 + (-v).exp())).collect(),
        tol,
    ));
    total.merge(check_unary(
        "softplus", trials, 24, vec![24],
        &|rng, n| sample_away_from_kinks(rng, n, 2.0),
        &|t, x| t.softplus(x),
        &|x| x.iter().map(|&v| (1.0 + v.exp()).ln()).collect(),
        tol,
    ));
    total.merge(check_unary(
        "exp", trials, 16, vec![16],
        &|rng, n| sample_away_from_kinks(rng, n, 1.0),
        &|t, x| t.exp(x),
        &|x| x.iter().map(|&v| v.exp()).collect(),
        tol,
    ));
    total.merge(check_unary(
        "log", trials, 16, vec![16],
        &|rng, n| sample_uniform(rng, n, 0.3, 3.0),
        &|t, x| t.log(x),
        &|x| x.iter().map(|&v| v.ln()).collect(),
        tol,
    ));
    total.merge(check_unary(
        "clamp", trials, 32, vec![32],
        &|rng, n| {
            sample_uniform(rng, n, -0.5, 1.5)
                .into_iter()
                .map(|v| if (v - 0.2).abs() < 0.02 || (v - 0.8).abs() < 0.02 { v + 0.05 } else { v })
                .collect()
        },
        &|t, x| t.clamp(x, 0.2, 0.8),
        &|x| x.iter().map(|&v| v.clamp(0.2, 0.8)).collect(),
        tol,
    ));
    total.merge(check_unary(
        "scale", trials, 16, vec![16],
        &|rng, n| sample_away_from_kinks(rng, n, 1.0),
        &|t, x| t.scale(x, -1.7),
        &|x| x.iter().map(|&v| -1.7 * v).collect(),
        tol,
    ));
    total.merge(check_unary(
        "sum", trials, 16, vec![16],
        &|rng, n| sample_away_from_kinks(rng, n, 1.0),
        &|t, x| t.sum(x),
        &|x| vec![x.iter().sum()],
        tol,
    ));
    total.merge(check_unary(
        "mean", trials, 16, vec![16],
        &|rng, n| sample_away_from_kinks(rng, n, 1.0),
        &|t, x| t.mean(x),
        &|x| vec![x.iter().sum::<f64>() / x.len() as f64],
        tol,
    ));
    total.merge(check_unary(
        "l2_norm", trials, 16, vec![16],
        &|rng, n| sample_uniform(rng, n, 0.2, 1.2),
        &|t, x| t.l2_norm(x),
        &|x| vec![x.iter().map(|&v| v * v).sum::<f64>().sqrt()],
        tol,
    ));
    total.merge(check_unary(
        "softmax", trials, 24, vec![4, 6],
        &|rng, n| sample_away_from_kinks(rng, n, 1.5),
        &|t, x| t.softmax(x).unwrap(),
        &|x| ref_softmax_rows(x, 4, 6),
        tol,
    ));
    total.merge(check_unary(
        "reshape", trials.min(20), 24, vec![4, 6],
        &|rng, n| sample_away_from_kinks(rng, n, 1.0),
        &|t, x| t.reshape(x, vec![2, 12]).unwrap(),
        &|x| x.to_vec(),
        tol,
    ));
    total.merge(check_unary(
        "avg_pool2", trials, 2 * 36, vec![1, 2, 6, 6],
        &|rng, n| sample_away_from_kinks(rng, n, 1.0),
        &|t, x| t.avg_pool2(x).unwrap(),
        &|x| ref_avg_pool2(x, 2, 6, 6),
        tol,
    ));

    total.merge(check_binary(
        "add", trials, 12, 12, vec![12], vec![12],
        &|t, a, b| t.add(a, b).unwrap(),
        &|a, b| a.iter().zip(b).map(|(x, y)| x + y).collect(),
        tol,
    ));
    total.merge(check_binary(
        "sub", trials, 12, 12, vec![12], vec![12],
        &|t, a, b| t.sub(a, b).unwrap(),
        &|a, b| a.iter().zip(b).map(|(x, y)| x - y).collect(),
        tol,
    ));
    total.merge(check_binary(
        "mul", trials, 12, 12, vec![12], vec![12],
        &|t, a, b| t.mul(a, b).unwrap(),
        &|a, b| a.iter().zip(b).map(|(x, y)| x * y).collect(),
        tol,
    ));
    total.merge(check_binary(
        "add_bias", trials, 12, 4, vec![3, 4], vec![4],
        &|t, a, b| t.add_bias(a, b).unwrap(),
        &|a, b| {
            let mut out = a.to_vec();
            for r in 0..3 {
                for c in 0..4 {
                    out[r * 4 + c] += b[c];
                }
            }
            out
        },
        tol,
    ));
    total.merge(check_binary(
        "add_channel_bias", trials, 24, 3, vec![1, 3, 2, 4], vec![3],
        &|t, a, b| t.add_channel_bias(a, b).unwrap(),
        &|a, b| {
            let mut out = a.to_vec();
            for (ch, bv) in b.iter().enumerate() {
                for v in &mut out[ch * 8..(ch + 1) * 8] {
                    *v += bv;
                }
            }
            out
        },
        tol,
    ));
    total.merge(check_binary(
        "matmul", trials, 15, 20, vec![3, 5], vec![5, 4],
        &|t, a, b| t.matmul(a, b).unwrap(),
        &|a, b| ref_matmul(a, b, 3, 5, 4),
        tol,
    ));
    total.merge(check_binary(
        "conv2d", trials, 2 * 36, 3 * 2 * 9, vec![1, 2, 6, 6], vec![3, 2, 3, 3],
        &|t, a, b| t.conv2d(a, b, 1).unwrap(),
        &|a, b| ref_conv2d(a, b, 1, 2, 6, 6, 3, 3, 1),
        tol,
    ));
    total.merge(check_binary(
        "conv_transpose2d", trials, 2 * 16, 2 * 3 * 16, vec![1, 2, 4, 4], vec![2, 3, 4, 4],
        &|t, a, b| t.conv_transpose2d(a, b, 2, 1).unwrap(),
        &|a, b| ref_conv_transpose2d(a, b, 1, 2, 4, 4, 3, 4, 2, 1),
        tol,
    ));

    // cross-entropy probes its logits directly
    for t in 0..trials {
        let mut rng = probe_rng(0x300 + t as u64, 0);
        let (rows, cols) = (3, 7);
        let logits = sample_away_from_kinks(&mut rng, rows * cols, 2.0);
        let labels: Vec<usize> = (0..rows).map(|r| (r * 3 + t) % cols).collect();

        let mut tape = Tape::new();
        let lv = tape.leaf(Tensor::new(vec![rows, cols], to_f32(&logits)).unwrap(), true);
        let loss = tape.cross_entropy(lv, &labels).unwrap();
        tape.backward(loss).unwrap();
        let analytic: Vec<f64> = tape.grad(lv).unwrap().data().iter().map(|&v| v as f64).collect();

        let labels_ref = labels.clone();
        let loss_f = move |probe: &[f64]| ref_cross_entropy(probe, &labels_ref, rows, cols);
        let coords: Vec<usize> = (0..rows * cols).collect();
        let fd = fd_grad(&loss_f, &logits, &coords, 1e-5);
        let err = relative_error(&analytic, &fd);
        total.probes += 1;
        total.worst_relative_error = total.worst_relative_error.max(err);
        if err >= tol {
            total.failures.push(format!("cross_entropy trial {t}: relative error {err:.3e}"));
        }
    }

    total
}

/// Probe the gradient of the full embedder classifier loss against the f64
/// shadow forward on a seeded subset of pixel coordinates per trial.
/// Kink-contaminated coordinates (second-difference test) are skipped.
pub fn embedder_gradcheck(model: &MiniEmbedder, trials: usize, coords_per_trial: usize, tol: f64) -> GradcheckOutcome {
    let mut out = GradcheckOutcome { probes: 0, worst_relative_error: 0.0, failures: Vec::new() };
    for t in 0..trials {
        let mut rng = probe_rng(0x500 + t as u64, 0);
        let pixels = sample_uniform(&mut rng, 3 * 32 * 32, 0.05, 0.95);
        let label = t % 10;

        let mut tape = Tape::new();
        let vars = model.register(&mut tape, false);
        let xv = tape.leaf(Tensor::new(vec![1, 3, 32, 32], to_f32(&pixels)).unwrap(), true);
        let (_, logits) = model.forward_on(&mut tape, &vars, xv).unwrap();
        let loss = tape.cross_entropy(logits, &[label]).unwrap();
        tape.backward(loss).unwrap();
        let full_grad: Vec<f64> = tape.grad(xv).unwrap().data().iter().map(|&v| v as f64).collect();

        let coords: Vec<usize> = (0..coords_per_trial)
            .map(|_| (sample_uniform(&mut rng, 1, 0.0, (3 * 32 * 32) as f64)[0] as usize).min(3071))
            .collect();
        let loss_f = |probe: &[f64]| ref_embedder_loss(model, probe, label);
        let fd = fd_grad_smooth(&loss_f, &pixels, &coords, 1e-5);

        let mut analytic = Vec::new();
        let mut estimates = Vec::new();
        for (c, est) in coords.iter().zip(&fd) {
            if let Some(v) = est {
                analytic.push(full_grad[*c]);
                estimates.push(*v);
            }
        }
        if analytic.is_empty() {
            out.failures.push(format!("embedder trial {t}: every probe hit a kink"));
            continue;
        }
        let err = relative_error(&analytic, &estimates);
        out.probes += analytic.len();
        out.worst_relative_error = out.worst_relative_error.max(err);
        if err >= tol {
            out.failures.push(format!("embedder trial {t}: relative error {err:.3e}"));
        }
    }
    out
}

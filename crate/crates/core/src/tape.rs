//! Reverse-mode automatic differentiation over dense tensors.
//!
//! A [`Tape`] owns every intermediate value of one computation. Primitives
//! execute eagerly and are recorded only while some input requires a
//! gradient; [`Tape::backward`] replays the record in exact reverse order,
//! once, accumulating gradients into the leaves. Tapes are cheap, confined
//! to one thread, and discarded after use — batch work runs one tape per
//! item.

use crate::error::{Error, Result};
use crate::ops;
use crate::tensor::Tensor;

/// Handle to a value on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

struct Node {
    value: Tensor,
    grad: Option<Vec<f32>>,
    /// True for leaves created with `requires_grad` and anything computed from them.
    tracked: bool,
}

enum Step {
    Add { a: Var, b: Var, out: Var },
    Sub { a: Var, b: Var, out: Var },
    Mul { a: Var, b: Var, out: Var },
    Scale { x: Var, c: f32, out: Var },
    AddBias { x: Var, bias: Var, out: Var, rows: usize, cols: usize },
    AddChannelBias { x: Var, bias: Var, out: Var, n: usize, c: usize, hw: usize },
    Matmul { a: Var, b: Var, out: Var, m: usize, k: usize, n: usize },
    Conv2d { x: Var, w: Var, out: Var, dims: ConvDims },
    ConvTranspose2d { x: Var, w: Var, out: Var, dims: ConvTDims },
    AvgPool2 { x: Var, out: Var, n: usize, c: usize, h: usize, w: usize },
    Relu { x: Var, out: Var },
    LeakyRelu { x: Var, out: Var, slope: f32 },
    Sigmoid { x: Var, out: Var },
    Softplus { x: Var, out: Var },
    Exp { x: Var, out: Var },
    Log { x: Var, out: Var },
    Clamp { x: Var, out: Var, lo: f32, hi: f32 },
    Softmax { x: Var, out: Var, rows: usize, cols: usize },
    Sum { x: Var, out: Var },
    Mean { x: Var, out: Var },
    L2Norm { x: Var, out: Var },
    CrossEntropy { logits: Var, labels: Vec<usize>, out: Var, rows: usize, cols: usize },
    Reshape { x: Var, out: Var },
}

#[derive(Clone, Copy)]
struct ConvDims {
    n: usize,
    ci: usize,
    h: usize,
    w: usize,
    co: usize,
    k: usize,
    pad: usize,
}

#[derive(Clone, Copy)]
struct ConvTDims {
    n: usize,
    ci: usize,
    h: usize,
    w: usize,
    co: usize,
    k: usize,
    stride: usize,
    pad: usize,
}

/// Wengert list for one forward/backward computation.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    steps: Vec<Step>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    /// Register a leaf tensor. Gradients accumulate here when `requires_grad`.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        let id = self.nodes.len();
        self.nodes.push(Node { value, grad: None, tracked: requires_grad });
        Var(id)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Gradient accumulated by the last `backward`, if any flowed to `v`.
    pub fn grad(&self, v: Var) -> Option<Tensor> {
        let node = &self.nodes[v.0];
        node.grad
            .as_ref()
            .map(|g| Tensor::new(node.value.shape().to_vec(), g.clone()).expect("grad shape matches value"))
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Number of recorded (not yet consumed) steps.
    pub fn num_steps(&self) -> usize {
        self.steps.len()
    }

    fn push(&mut self, value: Tensor, tracked: bool, step: impl FnOnce(Var) -> Step) -> Var {
        let id = Var(self.nodes.len());
        self.nodes.push(Node { value, grad: None, tracked });
        if tracked {
            let s = step(id);
            self.steps.push(s);
        }
        id
    }

    fn tracked(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].tracked)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::ShapeMismatch { op, details: format!("{sa:?} vs {sb:?}") });
        }
        Ok(())
    }

    // ── Elementwise ─────────────────────────────────────────────────────

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let data = zip_map(self.value(a), self.value(b), |x, y| x + y);
        let shape = self.value(a).shape().to_vec();
        let tracked = self.tracked(&[a, b]);
        Ok(self.push(Tensor::new(shape, data)?, tracked, |out| Step::Add { a, b, out }))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let data = zip_map(self.value(a), self.value(b), |x, y| x - y);
        let shape = self.value(a).shape().to_vec();
        let tracked = self.tracked(&[a, b]);
        Ok(self.push(Tensor::new(shape, data)?, tracked, |out| Step::Sub { a, b, out }))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let data = zip_map(self.value(a), self.value(b), |x, y| x * y);
        let shape = self.value(a).shape().to_vec();
        let tracked = self.tracked(&[a, b]);
        Ok(self.push(Tensor::new(shape, data)?, tracked, |out| Step::Mul { a, b, out }))
    }

    pub fn scale(&mut self, x: Var, c: f32) -> Var {
        let data = self.value(x).data().iter().map(|v| c * v).collect();
        let shape = self.value(x).shape().to_vec();
        let tracked = self.tracked(&[x]);
        self.push(Tensor::new(shape, data).unwrap(), tracked, |out| Step::Scale { x, c, out })
    }

    /// (rows × cols) plus a length-`cols` bias broadcast over rows.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let xs = self.value(x).shape().to_vec();
        let bs = self.value(bias).shape().to_vec();
        if xs.len() != 2 || bs != [xs[1]] {
            return Err(Error::ShapeMismatch { op: "add_bias", details: format!("{xs:?} + {bs:?}") });
        }
        let (rows, cols) = (xs[0], xs[1]);
        let bd = self.value(bias).data();
        let mut data = self.value(x).data().to_vec();
        for r in 0..rows {
            for c in 0..cols {
                data[r * cols + c] += bd[c];
            }
        }
        let tracked = self.tracked(&[x, bias]);
        Ok(self.push(Tensor::new(xs, data)?, tracked, |out| Step::AddBias { x, bias, out, rows, cols }))
    }

    /// (n, c, h, w) plus a length-`c` bias broadcast over batch and space.
    pub fn add_channel_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let xs = self.value(x).shape().to_vec();
        let bs = self.value(bias).shape().to_vec();
        if xs.len() != 4 || bs != [xs[1]] {
            return Err(Error::ShapeMismatch { op: "add_channel_bias", details: format!("{xs:?} + {bs:?}") });
        }
        let (n, c, hw) = (xs[0], xs[1], xs[2] * xs[3]);
        let bd = self.value(bias).data();
        let mut data = self.value(x).data().to_vec();
        for b in 0..n {
            for ch in 0..c {
                let base = (b * c + ch) * hw;
                let bv = bd[ch];
                for v in &mut data[base..base + hw] {
                    *v += bv;
                }
            }
        }
        let tracked = self.tracked(&[x, bias]);
        Ok(self.push(Tensor::new(xs, data)?, tracked, |out| Step::AddChannelBias { x, bias, out, n, c, hw }))
    }

    // ── Linear algebra / structured ─────────────────────────────────────

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let sa = self.value(a).shape().to_vec();
        let sb = self.value(b).shape().to_vec();
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::ShapeMismatch { op: "matmul", details: format!("{sa:?} · {sb:?}") });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let data = ops::matmul(self.value(a).data(), self.value(b).data(), m, k, n);
        let tracked = self.tracked(&[a, b]);
        Ok(self.push(Tensor::new(vec![m, n], data)?, tracked, |out| Step::Matmul { a, b, out, m, k, n }))
    }

    /// Stride-1 cross-correlation; `x` (n,ci,h,w), `w` (co,ci,k,k).
    pub fn conv2d(&mut self, x: Var, w: Var, pad: usize) -> Result<Var> {
        let xs = self.value(x).shape().to_vec();
        let ws = self.value(w).shape().to_vec();
        if xs.len() != 4 || ws.len() != 4 || xs[1] != ws[1] || ws[2] != ws[3] {
            return Err(Error::ShapeMismatch { op: "conv2d", details: format!("x {xs:?}, w {ws:?}") });
        }
        let dims = ConvDims { n: xs[0], ci: xs[1], h: xs[2], w: xs[3], co: ws[0], k: ws[2], pad };
        if dims.h + 2 * pad < dims.k || dims.w + 2 * pad < dims.k {
            return Err(Error::ShapeMismatch {
                op: "conv2d",
                details: format!("kernel {} too large for {}×{} with pad {pad}", dims.k, dims.h, dims.w),
            });
        }
        let (oh, ow) = ops::conv2d_out_hw(dims.h, dims.w, dims.k, pad);
        let data = ops::conv2d(
            self.value(x).data(),
            self.value(w).data(),
            dims.n,
            dims.ci,
            dims.h,
            dims.w,
            dims.co,
            dims.k,
            pad,
        );
        let tracked = self.tracked(&[x, w]);
        Ok(self.push(
            Tensor::new(vec![dims.n, dims.co, oh, ow], data)?,
            tracked,
            |out| Step::Conv2d { x, w, out, dims },
        ))
    }

    /// Transposed convolution; `x` (n,ci,h,w), `w` (ci,co,k,k).
    pub fn conv_transpose2d(&mut self, x: Var, w: Var, stride: usize, pad: usize) -> Result<Var> {
        let xs = self.value(x).shape().to_vec();
        let ws = self.value(w).shape().to_vec();
        if xs.len() != 4 || ws.len() != 4 || xs[1] != ws[0] || ws[2] != ws[3] {
            return Err(Error::ShapeMismatch { op: "conv_transpose2d", details: format!("x {xs:?}, w {ws:?}") });
        }
        let dims = ConvTDims { n: xs[0], ci: xs[1], h: xs[2], w: xs[3], co: ws[1], k: ws[2], stride, pad };
        let (oh, ow) = ops::conv_transpose2d_out_hw(dims.h, dims.w, dims.k, stride, pad);
        let data = ops::conv_transpose2d(
            self.value(x).data(),
            self.value(w).data(),
            dims.n,
            dims.ci,
            dims.h,
            dims.w,
            dims.co,
            dims.k,
            stride,
            pad,
        );
        let tracked = self.tracked(&[x, w]);
        Ok(self.push(
            Tensor::new(vec![dims.n, dims.co, oh, ow], data)?,
            tracked,
            |out| Step::ConvTranspose2d { x, w, out, dims },
        ))
    }

    pub fn avg_pool2(&mut self, x: Var) -> Result<Var> {
        let xs = self.value(x).shape().to_vec();
        if xs.len() != 4 || xs[2] % 2 != 0 || xs[3] % 2 != 0 {
            return Err(Error::ShapeMismatch { op: "avg_pool2", details: format!("{xs:?}") });
        }
        let (n, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        let data = ops::avg_pool2(self.value(x).data(), n, c, h, w);
        let tracked = self.tracked(&[x]);
        Ok(self.push(
            Tensor::new(vec![n, c, h / 2, w / 2], data)?,
            tracked,
            |out| Step::AvgPool2 { x, out, n, c, h, w },
        ))
    }

    // ── Activations ─────────────────────────────────────────────────────

    pub fn relu(&mut self, x: Var) -> Var {
        let data = self.value(x).data().iter().map(|&v| v.max(0.0)).collect();
        let shape = self.value(x).shape().to_vec();
        let tracked = self.tracked(&[x]);
        self.push(Tensor::new(shape, data).unwrap(), tracked, |out| Step::Relu { x, out })
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f32) -> Var {
        let data = self
            .value(x)
            .data()
            .iter()
            .map(|&v| if v >= 0.0 { v } else { slope * v })
            .collect();
        let shape = self.value(x).shape().to_vec();
        let tracked = self.tracked(&[x]);
        self.push(Tensor::new(shape, data).unwrap(), tracked, |out| Step::LeakyRelu { x, out, slope })
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let data = self.value(x).data().iter().map(|&v| sigmoid_f32(v)).collect();
        let shape = self.value(x).shape().to_vec();
        let tracked = self.tracked(&[x]);
        self.push(Tensor::new(shape, data).unwrap(), tracked, |out| Step::Sigmoid { x, out })
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        let data = self.value(x).data().iter().map(|&v| softplus_f32(v)).collect();
        let shape = self.value(x).shape().to_vec();
        let tracked = self.tracked(&[x]);
        self.push(Tensor::new(shape, data).unwrap(), tracked, |out| Step::Softplus { x, out })
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let data = self.value(x).data().iter().map(|&v| v.exp()).collect();
        let shape = self.value(x).shape().to_vec();
        let tracked = self.tracked(&[x]);
        self.push(Tensor::new(shape, data).unwrap(), tracked, |out| Step::Exp { x, out })
    }

    pub fn log(&mut self, x: Var) -> Var {
        let data = self.value(x).data().iter().map(|&v| v.ln()).collect();
        let shape = self.value(x).shape().to_vec();
        let tracked = self.tracked(&[x]);
        self.push(Tensor::new(shape, data).unwrap(), tracked, |out| Step::Log { x, out })
    }

    pub fn clamp(&mut self, x: Var, lo: f32, hi: f32) -> Var {
        let data = self.value(x).data().iter().map(|&v| v.clamp(lo, hi)).collect();
        let shape = self.value(x).shape().to_vec();
        let tracked = self.tracked(&[x]);
        self.push(Tensor::new(shape, data).unwrap(), tracked, |out| Step::Clamp { x, out, lo, hi })
    }

    /// Row-wise softmax of a rank-2 tensor.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let xs = self.value(x).shape().to_vec();
        if xs.len() != 2 {
            return Err(Error::ShapeMismatch { op: "softmax", details: format!("{xs:?}") });
        }
        let (rows, cols) = (xs[0], xs[1]);
        let data = ops::softmax_rows(self.value(x).data(), rows, cols);
        let tracked = self.tracked(&[x]);
        Ok(self.push(Tensor::new(xs, data)?, tracked, |out| Step::Softmax { x, out, rows, cols }))
    }

    // ── Reductions ──────────────────────────────────────────────────────

    pub fn sum(&mut self, x: Var) -> Var {
        let s: f32 = self.value(x).data().iter().sum();
        let tracked = self.tracked(&[x]);
        self.push(Tensor::scalar(s), tracked, |out| Step::Sum { x, out })
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).numel() as f32;
        let s: f32 = self.value(x).data().iter().sum();
        let tracked = self.tracked(&[x]);
        self.push(Tensor::scalar(s / n), tracked, |out| Step::Mean { x, out })
    }

    /// Euclidean norm over all elements.
    pub fn l2_norm(&mut self, x: Var) -> Var {
        let s: f32 = self.value(x).data().iter().map(|&v| v * v).sum::<f32>().sqrt();
        let tracked = self.tracked(&[x]);
        self.push(Tensor::scalar(s), tracked, |out| Step::L2Norm { x, out })
    }

    /// Mean cross-entropy of (rows × cols) logits against labels.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let xs = self.value(logits).shape().to_vec();
        if xs.len() != 2 || xs[0] != labels.len() {
            return Err(Error::ShapeMismatch {
                op: "cross_entropy",
                details: format!("logits {xs:?} vs {} labels", labels.len()),
            });
        }
        let (rows, cols) = (xs[0], xs[1]);
        for &l in labels {
            if l >= cols {
                return Err(Error::LabelOutOfRange { label: l, classes: cols });
            }
        }
        let loss = ops::cross_entropy_forward(self.value(logits).data(), labels, rows, cols);
        let tracked = self.tracked(&[logits]);
        let labels = labels.to_vec();
        Ok(self.push(Tensor::scalar(loss), tracked, |out| Step::CrossEntropy { logits, labels, out, rows, cols }))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let value = self.value(x).clone().reshaped(shape)?;
        let tracked = self.tracked(&[x]);
        Ok(self.push(value, tracked, |out| Step::Reshape { x, out }))
    }

    // ── Backward ────────────────────────────────────────────────────────

    /// Reverse sweep from a scalar loss. Gradients land on every tracked
    /// leaf; the step record is cleared afterwards.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let node = &self.nodes[loss.0];
        if !node.value.is_scalar() {
            return Err(Error::NotScalar { op: "backward", shape: node.value.shape().to_vec() });
        }
        self.accumulate(loss, &[1.0]);
        let steps = std::mem::take(&mut self.steps);
        for step in steps.iter().rev() {
            self.backward_step(step);
        }
        Ok(())
    }

    fn take_grad(&mut self, v: Var) -> Option<Vec<f32>> {
        self.nodes[v.0].grad.clone()
    }

    fn accumulate(&mut self, v: Var, g: &[f32]) {
        if !self.nodes[v.0].tracked {
            return;
        }
        match &mut self.nodes[v.0].grad {
            Some(existing) => {
                for (e, &x) in existing.iter_mut().zip(g) {
                    *e += x;
                }
            }
            None => self.nodes[v.0].grad = Some(g.to_vec()),
        }
    }

    fn backward_step(&mut self, step: &Step) {
        match step {
            Step::Add { a, b, out } => {
                if let Some(g) = self.take_grad(*out) {
                    self.accumulate(*a, &g);
                    self.accumulate(*b, &g);
                }
            }
            Step::Sub { a, b, out } => {
                if let Some(g) = self.take_grad(*out) {
                    self.accumulate(*a, &g);
                    let neg: Vec<f32> = g.iter().map(|v| -v).collect();
                    self.accumulate(*b, &neg);
                }
            }
            Step::Mul { a, b, out } => {
                if let Some(g) = self.take_grad(*out) {
                    let da: Vec<f32> = g.iter().zip(self.nodes[b.0].value.data()).map(|(gv, bv)| gv * bv).collect();
                    let db: Vec<f32> = g.iter().zip(self.nodes[a.0].value.data()).map(|(gv, av)| gv * av).collect();
                    self.accumulate(*a, &da);
                    self.accumulate(*b, &db);
                }
            }
            Step::Scale { x, c, out } => {
                if let Some(g) = self.take_grad(*out) {
                    let dx: Vec<f32> = g.iter().map(|v| c * v).collect();
                    self.accumulate(*x, &dx);
                }
            }
            Step::AddBias { x, bias, out, rows, cols } => {
                if let Some(g) = self.take_grad(*out) {
                    self.accumulate(*x, &g);
                    let mut db = vec![0.0f32; *cols];
                    for r in 0..*rows {
                        for c in 0..*cols {
                            db[c] += g[r * cols + c];
                        }
                    }
                    self.accumulate(*bias, &db);
                }
            }
            Step::AddChannelBias { x, bias, out, n, c, hw } => {
                if let Some(g) = self.take_grad(*out) {
                    self.accumulate(*x, &g);
                    let mut db = vec![0.0f32; *c];
                    for b in 0..*n {
                        for ch in 0..*c {
                            let base = (b * c + ch) * hw;
                            db[ch] += g[base..base + hw].iter().sum::<f32>();
                        }
                    }
                    self.accumulate(*bias, &db);
                }
            }
            Step::Matmul { a, b, out, m, k, n } => {
                if let Some(g) = self.take_grad(*out) {
                    // dA = g · Bᵀ ; dB = Aᵀ · g
                    let da = ops::matmul_a_bt(&g, self.nodes[b.0].value.data(), *m, *n, *k);
                    let db = ops::matmul_at_b(self.nodes[a.0].value.data(), &g, *m, *k, *n);
                    self.accumulate(*a, &da);
                    self.accumulate(*b, &db);
                }
            }
            Step::Conv2d { x, w, out, dims } => {
                if let Some(g) = self.take_grad(*out) {
                    let d = *dims;
                    if self.nodes[x.0].tracked {
                        let dx = ops::conv2d_grad_input(
                            &g,
                            self.nodes[w.0].value.data(),
                            d.n,
                            d.ci,
                            d.h,
                            d.w,
                            d.co,
                            d.k,
                            d.pad,
                        );
                        self.accumulate(*x, &dx);
                    }
                    if self.nodes[w.0].tracked {
                        let dw = ops::conv2d_grad_weight(
                            self.nodes[x.0].value.data(),
                            &g,
                            d.n,
                            d.ci,
                            d.h,
                            d.w,
                            d.co,
                            d.k,
                            d.pad,
                        );
                        self.accumulate(*w, &dw);
                    }
                }
            }
            Step::ConvTranspose2d { x, w, out, dims } => {
                if let Some(g) = self.take_grad(*out) {
                    let d = *dims;
                    if self.nodes[x.0].tracked {
                        let dx = ops::conv_transpose2d_grad_input(
                            &g,
                            self.nodes[w.0].value.data(),
                            d.n,
                            d.ci,
                            d.h,
                            d.w,
                            d.co,
                            d.k,
                            d.stride,
                            d.pad,
                        );
                        self.accumulate(*x, &dx);
                    }
                    if self.nodes[w.0].tracked {
                        let dw = ops::conv_transpose2d_grad_weight(
                            self.nodes[x.0].value.data(),
                            &g,
                            d.n,
                            d.ci,
                            d.h,
                            d.w,
                            d.co,
                            d.k,
                            d.stride,
                            d.pad,
                        );
                        self.accumulate(*w, &dw);
                    }
                }
            }
            Step::AvgPool2 { x, out, n, c, h, w } => {
                if let Some(g) = self.take_grad(*out) {
                    let dx = ops::avg_pool2_grad(&g, *n, *c, *h, *w);
                    self.accumulate(*x, &dx);
                }
            }
            Step::Relu { x, out } => {
                if let Some(g) = self.take_grad(*out) {
                    let dx: Vec<f32> = g
                        .iter()
                        .zip(self.nodes[x.0].value.data())
                        .map(|(gv, &xv)| if xv > 0.0 { *gv } else { 0.0 })
                        .collect();
                    self.accumulate(*x, &dx);
                }
            }
            Step::LeakyRelu { x, out, slope } => {
                if let Some(g) = self.take_grad(*out) {
                    let dx: Vec<f32> = g
                        .iter()
                        .zip(self.nodes[x.0].value.data())
                        .map(|(gv, &xv)| if xv >= 0.0 { *gv } else { slope * gv })
                        .collect();
                    self.accumulate(*x, &dx);
                }
            }
            Step::Sigmoid { x, out } => {
                if let Some(g) = self.take_grad(*out) {
                    let dx: Vec<f32> = g
                        .iter()
                        .zip(self.nodes[out.0].value.data())
                        .map(|(gv, &ov)| gv * ov * (1.0 - ov))
                        .collect();
                    self.accumulate(*x, &dx);
                }
            }
            Step::Softplus { x, out } => {
                if let Some(g) = self.take_grad(*out) {
                    let dx: Vec<f32> = g
                        .iter()
                        .zip(self.nodes[x.0].value.data())
                        .map(|(gv, &xv)| gv * sigmoid_f32(xv))
                        .collect();
                    self.accumulate(*x, &dx);
                }
            }
            Step::Exp { x, out } => {
                if let Some(g) = self.take_grad(*out) {
                    let dx: Vec<f32> = g
                        .iter()
                        .zip(self.nodes[out.0].value.data())
                        .map(|(gv, &ov)| gv * ov)
                        .collect();
                    self.accumulate(*x, &dx);
                }
            }
            Step::Log { x, out } => {
                if let Some(g) = self.take_grad(*out) {
                    let dx: Vec<f32> = g
                        .iter()
                        .zip(self.nodes[x.0].value.data())
                        .map(|(gv, &xv)| gv / xv)
                        .collect();
                    self.accumulate(*x, &dx);
                }
            }
            Step::Clamp { x, out, lo, hi } => {
                if let Some(g) = self.take_grad(*out) {
                    let dx: Vec<f32> = g
                        .iter()
                        .zip(self.nodes[x.0].value.data())
                        .map(|(gv, &xv)| if xv >= *lo && xv <= *hi { *gv } else { 0.0 })
                        .collect();
                    self.accumulate(*x, &dx);
                }
            }
            Step::Softmax { x, out, rows, cols } => {
                if let Some(g) = self.take_grad(*out) {
                    let s = self.nodes[out.0].value.data();
                    let mut dx = vec![0.0f32; rows * cols];
                    for r in 0..*rows {
                        let base = r * cols;
                        let dot: f32 = (0..*cols).map(|c| g[base + c] * s[base + c]).sum();
                        for c in 0..*cols {
                            dx[base + c] = s[base + c] * (g[base + c] - dot);
                        }
                    }
                    self.accumulate(*x, &dx);
                }
            }
            Step::Sum { x, out } => {
                if let Some(g) = self.take_grad(*out) {
                    let dx = vec![g[0]; self.nodes[x.0].value.numel()];
                    self.accumulate(*x, &dx);
                }
            }
            Step::Mean { x, out } => {
                if let Some(g) = self.take_grad(*out) {
                    let n = self.nodes[x.0].value.numel();
                    let dx = vec![g[0] / n as f32; n];
                    self.accumulate(*x, &dx);
                }
            }
            Step::L2Norm { x, out } => {
                if let Some(g) = self.take_grad(*out) {
                    let norm = self.nodes[out.0].value.item();
                    let scale = if norm > 0.0 { g[0] / norm } else { 0.0 };
                    let dx: Vec<f32> = self.nodes[x.0].value.data().iter().map(|&xv| scale * xv).collect();
                    self.accumulate(*x, &dx);
                }
            }
            Step::CrossEntropy { logits, labels, out, rows, cols } => {
                if let Some(g) = self.take_grad(*out) {
                    let d = ops::cross_entropy_grad(self.nodes[logits.0].value.data(), labels, *rows, *cols, g[0]);
                    self.accumulate(*logits, &d);
                }
            }
            Step::Reshape { x, out } => {
                if let Some(g) = self.take_grad(*out) {
                    self.accumulate(*x, &g);
                }
            }
        }
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f32, f32) -> f32) -> Vec<f32> {
    a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect()
}

pub(crate) fn sigmoid_f32(x: f32) -> f32 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softplus_f32(x: f32) -> f32 {
    // log(1 + exp(x)) without overflow
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_gradient() {
        // d/dx x² at x=3 → 6
        let mut t = Tape::new();
        let x = t.leaf(Tensor::scalar(3.0), true);
        let y = t.mul(x, x).unwrap();
        t.backward(y).unwrap();
        assert_eq!(t.grad(x).unwrap().item(), 6.0);
    }

    #[test]
    fn l2_norm_gradient_is_direction() {
        // d/dx ‖x‖₂ at (3,4) → (0.6, 0.8)
        let mut t = Tape::new();
        let x = t.leaf(Tensor::new(vec![2], vec![3.0, 4.0]).unwrap(), true);
        let y = t.l2_norm(x);
        assert_eq!(t.value(y).item(), 5.0);
        t.backward(y).unwrap();
        let g = t.grad(x).unwrap();
        assert!((g.data()[0] - 0.6).abs() < 1e-6);
        assert!((g.data()[1] - 0.8).abs() < 1e-6);
    }

    #[test]
    fn relu_example() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::new(vec![2], vec![-1.0, 2.0]).unwrap());
        let y = t.relu(x);
        assert_eq!(t.value(y).data(), &[0.0, 2.0]);
    }

    #[test]
    fn backward_requires_scalar() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::new(vec![2], vec![1.0, 2.0]).unwrap(), true);
        let y = t.relu(x);
        let err = t.backward(y).unwrap_err();
        assert!(matches!(err, Error::NotScalar { .. }));
    }

    #[test]
    fn backward_clears_tape() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::scalar(2.0), true);
        let y = t.mul(x, x).unwrap();
        assert_eq!(t.num_steps(), 1);
        t.backward(y).unwrap();
        assert_eq!(t.num_steps(), 0);
    }

    #[test]
    fn untracked_inputs_record_nothing() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::scalar(2.0));
        let _ = t.mul(x, x).unwrap();
        assert_eq!(t.num_steps(), 0);
    }

    #[test]
    fn linearity_of_backward() {
        // grad of (l1 + l2) equals grad(l1) + grad(l2) computed separately
        let xv = Tensor::new(vec![3], vec![0.5, -1.2, 2.0]).unwrap();

        let run = |combined: bool| -> Vec<f32> {
            if combined {
                let mut t = Tape::new();
                let x = t.leaf(xv.clone(), true);
                let l1 = t.l2_norm(x);
                let sq = t.mul(x, x).unwrap();
                let l2 = t.sum(sq);
                let s = t.add(l1, l2).unwrap();
                t.backward(s).unwrap();
                t.grad(x).unwrap().into_data()
            } else {
                let mut t1 = Tape::new();
                let x1 = t1.leaf(xv.clone(), true);
                let l1 = t1.l2_norm(x1);
                t1.backward(l1).unwrap();
                let g1 = t1.grad(x1).unwrap().into_data();

                let mut t2 = Tape::new();
                let x2 = t2.leaf(xv.clone(), true);
                let sq = t2.mul(x2, x2).unwrap();
                let l2 = t2.sum(sq);
                t2.backward(l2).unwrap();
                let g2 = t2.grad(x2).unwrap().into_data();
                g1.iter().zip(&g2).map(|(a, b)| a + b).collect()
            }
        };

        let combined = run(true);
        let separate = run(false);
        for (c, s) in combined.iter().zip(&separate) {
            assert!((c - s).abs() < 1e-6, "{c} vs {s}");
        }
    }

    #[test]
    fn repeat_run_is_bit_identical() {
        let run = || {
            let mut t = Tape::new();
            let x = t.leaf(Tensor::new(vec![4], vec![0.1, -0.7, 1.3, 2.2]).unwrap(), true);
            let s = t.sigmoid(x);
            let m = t.mul(s, x).unwrap();
            let loss = t.mean(m);
            t.backward(loss).unwrap();
            (t.value(loss).item().to_bits(), t.grad(x).unwrap().into_data())
        };
        let (v1, g1) = run();
        let (v2, g2) = run();
        assert_eq!(v1, v2);
        assert_eq!(
            g1.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            g2.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn cross_entropy_two_equal_logits() {
        // logits [0, 0], label 0 → ln 2
        let mut t = Tape::new();
        let logits = t.constant(Tensor::new(vec![1, 2], vec![0.0, 0.0]).unwrap());
        let loss = t.cross_entropy(logits, &[0]).unwrap();
        assert!((t.value(loss).item() - std::f32::consts::LN_2).abs() < 1e-6);
    }

    #[test]
    fn cross_entropy_label_out_of_range() {
        let mut t = Tape::new();
        let logits = t.constant(Tensor::new(vec![1, 2], vec![0.0, 0.0]).unwrap());
        let err = t.cross_entropy(logits, &[2]).unwrap_err();
        assert!(matches!(err, Error::LabelOutOfRange { label: 2, classes: 2 }));
    }

    #[test]
    fn cross_entropy_matches_naive_formula() {
        // random 4×10 logits: fused loss equals −log softmax[label] computed directly
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f32 / (1u64 << 53) as f32 * 8.0 - 4.0
        };
        let logits_v: Vec<f32> = (0..40).map(|_| next()).collect();
        let labels = [3usize, 0, 9, 5];

        let mut t = Tape::new();
        let logits = t.constant(Tensor::new(vec![4, 10], logits_v.clone()).unwrap());
        let loss = t.cross_entropy(logits, &labels).unwrap();

        let mut naive = 0.0f64;
        for (r, &label) in labels.iter().enumerate() {
            let row = &logits_v[r * 10..(r + 1) * 10];
            let sum: f64 = row.iter().map(|&v| (v as f64).exp()).sum();
            let p = (row[label] as f64).exp() / sum;
            naive += -p.ln();
        }
        naive /= 4.0;
        assert!((t.value(loss).item() as f64 - naive).abs() < 1e-6);
    }

    #[test]
    fn shape_mismatch_names_primitive() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::zeros(vec![2, 3]));
        let b = t.constant(Tensor::zeros(vec![3, 3]));
        let err = t.add(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("add") && msg.contains("[2, 3]"), "{msg}");
    }

    #[test]
    fn gradient_accumulates_over_multiple_uses() {
        // y = x·2 + x·3 → dy/dx = 5
        let mut t = Tape::new();
        let x = t.leaf(Tensor::scalar(1.0), true);
        let a = t.scale(x, 2.0);
        let b = t.scale(x, 3.0);
        let y = t.add(a, b).unwrap();
        t.backward(y).unwrap();
        assert_eq!(t.grad(x).unwrap().item(), 5.0);
    }
}

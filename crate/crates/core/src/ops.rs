//! Raw numeric kernels behind the tape primitives.
//!
//! All loops are sequential with a fixed accumulation order, so results are
//! bit-reproducible regardless of the caller's parallelism.

/// C = A (m×k) · B (k×n), row-major.
pub fn matmul(a: &[f32], b: &[f32], m: usize, k: usize, n: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; m * n];
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let out_row = &mut out[i * n..(i + 1) * n];
        for (p, &av) in a_row.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
    out
}

/// C = Aᵀ (k×m)ᵀ · B ... i.e. A is stored (m×k) and we compute Aᵀ·B (k×n' where B is m×n').
pub fn matmul_at_b(a: &[f32], b: &[f32], m: usize, k: usize, n: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; k * n];
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let b_row = &b[i * n..(i + 1) * n];
        for (p, &av) in a_row.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let out_row = &mut out[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
    out
}

/// C = A (m×k) · Bᵀ where B is stored (n×k).
pub fn matmul_a_bt(a: &[f32], b: &[f32], m: usize, k: usize, n: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; m * n];
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let b_row = &b[j * k..(j + 1) * k];
            let mut acc = 0.0f32;
            for (&av, &bv) in a_row.iter().zip(b_row) {
                acc += av * bv;
            }
            out[i * n + j] = acc;
        }
    }
    out
}

/// Output spatial size of a stride-1 convolution.
pub fn conv2d_out_hw(h: usize, w: usize, ksize: usize, pad: usize) -> (usize, usize) {
    (h + 2 * pad + 1 - ksize, w + 2 * pad + 1 - ksize)
}

/// Cross-correlation, stride 1. `x`: (n, ci, h, w); `weight`: (co, ci, k, k).
pub fn conv2d(
    x: &[f32],
    weight: &[f32],
    n: usize,
    ci: usize,
    h: usize,
    w: usize,
    co: usize,
    ksize: usize,
    pad: usize,
) -> Vec<f32> {
    let (oh, ow) = conv2d_out_hw(h, w, ksize, pad);
    let mut out = vec![0.0f32; n * co * oh * ow];
    for b in 0..n {
        for oc in 0..co {
            let out_base = (b * co + oc) * oh * ow;
            for ic in 0..ci {
                let x_base = (b * ci + ic) * h * w;
                let w_base = (oc * ci + ic) * ksize * ksize;
                for ky in 0..ksize {
                    for kx in 0..ksize {
                        let wv = weight[w_base + ky * ksize + kx];
                        if wv == 0.0 {
                            continue;
                        }
                        // oy + ky - pad must land in [0, h)
                        let oy_lo = pad.saturating_sub(ky);
                        let oy_hi = (h + pad - ky).min(oh);
                        let ox_lo = pad.saturating_sub(kx);
                        let ox_hi = (w + pad - kx).min(ow);
                        for oy in oy_lo..oy_hi {
                            let iy = oy + ky - pad;
                            let x_row = &x[x_base + iy * w + (ox_lo + kx - pad)..];
                            let out_row = &mut out[out_base + oy * ow + ox_lo..out_base + oy * ow + ox_hi];
                            for (o, &xv) in out_row.iter_mut().zip(x_row) {
                                *o += wv * xv;
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Gradient of [`conv2d`] w.r.t. its input.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_grad_input(
    dout: &[f32],
    weight: &[f32],
    n: usize,
    ci: usize,
    h: usize,
    w: usize,
    co: usize,
    ksize: usize,
    pad: usize,
) -> Vec<f32> {
    let (oh, ow) = conv2d_out_hw(h, w, ksize, pad);
    let mut dx = vec![0.0f32; n * ci * h * w];
    for b in 0..n {
        for ic in 0..ci {
            let dx_base = (b * ci + ic) * h * w;
            for oc in 0..co {
                let dout_base = (b * co + oc) * oh * ow;
                let w_base = (oc * ci + ic) * ksize * ksize;
                for ky in 0..ksize {
                    for kx in 0..ksize {
                        let wv = weight[w_base + ky * ksize + kx];
                        if wv == 0.0 {
                            continue;
                        }
                        let oy_lo = pad.saturating_sub(ky);
                        let oy_hi = (h + pad - ky).min(oh);
                        let ox_lo = pad.saturating_sub(kx);
                        let ox_hi = (w + pad - kx).min(ow);
                        for oy in oy_lo..oy_hi {
                            let iy = oy + ky - pad;
                            let dout_row = &dout[dout_base + oy * ow + ox_lo..dout_base + oy * ow + ox_hi];
                            let dx_row = &mut dx[dx_base + iy * w + (ox_lo + kx - pad)..];
                            for (&dv, xg) in dout_row.iter().zip(dx_row) {
                                *xg += wv * dv;
                            }
                        }
                    }
                }
            }
        }
    }
    dx
}

/// Gradient of [`conv2d`] w.r.t. its weights.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_grad_weight(
    x: &[f32],
    dout: &[f32],
    n: usize,
    ci: usize,
    h: usize,
    w: usize,
    co: usize,
    ksize: usize,
    pad: usize,
) -> Vec<f32> {
    let (oh, ow) = conv2d_out_hw(h, w, ksize, pad);
    let mut dw = vec![0.0f32; co * ci * ksize * ksize];
    for b in 0..n {
        for oc in 0..co {
            let dout_base = (b * co + oc) * oh * ow;
            for ic in 0..ci {
                let x_base = (b * ci + ic) * h * w;
                let w_base = (oc * ci + ic) * ksize * ksize;
                for ky in 0..ksize {
                    for kx in 0..ksize {
                        let oy_lo = pad.saturating_sub(ky);
                        let oy_hi = (h + pad - ky).min(oh);
                        let ox_lo = pad.saturating_sub(kx);
                        let ox_hi = (w + pad - kx).min(ow);
                        let mut acc = 0.0f32;
                        for oy in oy_lo..oy_hi {
                            let iy = oy + ky - pad;
                            let dout_row = &dout[dout_base + oy * ow + ox_lo..dout_base + oy * ow + ox_hi];
                            let x_row = &x[x_base + iy * w + (ox_lo + kx - pad)..];
                            for (&dv, &xv) in dout_row.iter().zip(x_row) {
                                acc += dv * xv;
                            }
                        }
                        dw[w_base + ky * ksize + kx] += acc;
                    }
                }
            }
        }
    }
    dw
}

/// Output spatial size of a transposed convolution.
pub fn conv_transpose2d_out_hw(h: usize, w: usize, ksize: usize, stride: usize, pad: usize) -> (usize, usize) {
    ((h - 1) * stride + ksize - 2 * pad, (w - 1) * stride + ksize - 2 * pad)
}

/// Transposed convolution. `x`: (n, ci, h, w); `weight`: (ci, co, k, k).
#[allow(clippy::too_many_arguments)]
pub fn conv_transpose2d(
    x: &[f32],
    weight: &[f32],
    n: usize,
    ci: usize,
    h: usize,
    w: usize,
    co: usize,
    ksize: usize,
    stride: usize,
    pad: usize,
) -> Vec<f32> {
    let (oh, ow) = conv_transpose2d_out_hw(h, w, ksize, stride, pad);
    let mut out = vec![0.0f32; n * co * oh * ow];
    for b in 0..n {
        for ic in 0..ci {
            let x_base = (b * ci + ic) * h * w;
            for oc in 0..co {
                let out_base = (b * co + oc) * oh * ow;
                let w_base = (ic * co + oc) * ksize * ksize;
                for ky in 0..ksize {
                    for kx in 0..ksize {
                        let wv = weight[w_base + ky * ksize + kx];
                        if wv == 0.0 {
                            continue;
                        }
                        for iy in 0..h {
                            let oy = (stride * iy + ky) as isize - pad as isize;
                            if oy < 0 || oy as usize >= oh {
                                continue;
                            }
                            let oy = oy as usize;
                            for ix in 0..w {
                                let ox = (stride * ix + kx) as isize - pad as isize;
                                if ox < 0 || ox as usize >= ow {
                                    continue;
                                }
                                out[out_base + oy * ow + ox as usize] += wv * x[x_base + iy * w + ix];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Gradient of [`conv_transpose2d`] w.r.t. its input.
#[allow(clippy::too_many_arguments)]
pub fn conv_transpose2d_grad_input(
    dout: &[f32],
    weight: &[f32],
    n: usize,
    ci: usize,
    h: usize,
    w: usize,
    co: usize,
    ksize: usize,
    stride: usize,
    pad: usize,
) -> Vec<f32> {
    let (oh, ow) = conv_transpose2d_out_hw(h, w, ksize, stride, pad);
    let mut dx = vec![0.0f32; n * ci * h * w];
    for b in 0..n {
        for ic in 0..ci {
            let dx_base = (b * ci + ic) * h * w;
            for oc in 0..co {
                let dout_base = (b * co + oc) * oh * ow;
                let w_base = (ic * co + oc) * ksize * ksize;
                for ky in 0..ksize {
                    for kx in 0..ksize {
                        let wv = weight[w_base + ky * ksize + kx];
                        if wv == 0.0 {
                            continue;
                        }
                        for iy in 0..h {
                            let oy = (stride * iy + ky) as isize - pad as isize;
                            if oy < 0 || oy as usize >= oh {
                                continue;
                            }
                            let oy = oy as usize;
                            for ix in 0..w {
                                let ox = (stride * ix + kx) as isize - pad as isize;
                                if ox < 0 || ox as usize >= ow {
                                    continue;
                                }
                                dx[dx_base + iy * w + ix] += wv * dout[dout_base + oy * ow + ox as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    dx
}

/// Gradient of [`conv_transpose2d`] w.r.t. its weights.
#[allow(clippy::too_many_arguments)]
pub fn conv_transpose2d_grad_weight(
    x: &[f32],
    dout: &[f32],
    n: usize,
    ci: usize,
    h: usize,
    w: usize,
    co: usize,
    ksize: usize,
    stride: usize,
    pad: usize,
) -> Vec<f32> {
    let (oh, ow) = conv_transpose2d_out_hw(h, w, ksize, stride, pad);
    let mut dw = vec![0.0f32; ci * co * ksize * ksize];
    for b in 0..n {
        for ic in 0..ci {
            let x_base = (b * ci + ic) * h * w;
            for oc in 0..co {
                let dout_base = (b * co + oc) * oh * ow;
                let w_base = (ic * co + oc) * ksize * ksize;
                for ky in 0..ksize {
                    for kx in 0..ksize {
                        let mut acc = 0.0f32;
                        for iy in 0..h {
                            let oy = (stride * iy + ky) as isize - pad as isize;
                            if oy < 0 || oy as usize >= oh {
                                continue;
                            }
                            let oy = oy as usize;
                            for ix in 0..w {
                                let ox = (stride * ix + kx) as isize - pad as isize;
                                if ox < 0 || ox as usize >= ow {
                                    continue;
                                }
                                acc += x[x_base + iy * w + ix] * dout[dout_base + oy * ow + ox as usize];
                            }
                        }
                        dw[w_base + ky * ksize + kx] += acc;
                    }
                }
            }
        }
    }
    dw
}

/// 2×2 average pooling, stride 2. Requires even spatial dims.
pub fn avg_pool2(x: &[f32], n: usize, c: usize, h: usize, w: usize) -> Vec<f32> {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = vec![0.0f32; n * c * oh * ow];
    for bc in 0..n * c {
        let x_base = bc * h * w;
        let o_base = bc * oh * ow;
        for oy in 0..oh {
            for ox in 0..ow {
                let i = x_base + 2 * oy * w + 2 * ox;
                out[o_base + oy * ow + ox] = 0.25 * (x[i] + x[i + 1] + x[i + w] + x[i + w + 1]);
            }
        }
    }
    out
}

pub fn avg_pool2_grad(dout: &[f32], n: usize, c: usize, h: usize, w: usize) -> Vec<f32> {
    let (oh, ow) = (h / 2, w / 2);
    let mut dx = vec![0.0f32; n * c * h * w];
    for bc in 0..n * c {
        let x_base = bc * h * w;
        let o_base = bc * oh * ow;
        for oy in 0..oh {
            for ox in 0..ow {
                let g = 0.25 * dout[o_base + oy * ow + ox];
                let i = x_base + 2 * oy * w + 2 * ox;
                dx[i] += g;
                dx[i + 1] += g;
                dx[i + w] += g;
                dx[i + w + 1] += g;
            }
        }
    }
    dx
}

/// Row-wise stabilized softmax of an (rows × cols) matrix.
pub fn softmax_rows(x: &[f32], rows: usize, cols: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; rows * cols];
    for r in 0..rows {
        let row = &x[r * cols..(r + 1) * cols];
        let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let mut sum = 0.0f32;
        let out_row = &mut out[r * cols..(r + 1) * cols];
        for (o, &v) in out_row.iter_mut().zip(row) {
            let e = (v - max).exp();
            *o = e;
            sum += e;
        }
        let inv = 1.0 / sum;
        for o in out_row.iter_mut() {
            *o *= inv;
        }
    }
    out
}

/// Mean cross-entropy of logits (rows × cols) against integer labels,
/// via the log-sum-exp shift.
pub fn cross_entropy_forward(logits: &[f32], labels: &[usize], rows: usize, cols: usize) -> f32 {
    let mut total = 0.0f64;
    for (r, &label) in labels.iter().enumerate() {
        let row = &logits[r * cols..(r + 1) * cols];
        let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let lse = row.iter().map(|&v| ((v - max) as f64).exp()).sum::<f64>().ln() + max as f64;
        total += lse - row[label] as f64;
    }
    (total / rows as f64) as f32
}

/// Gradient of [`cross_entropy_forward`] w.r.t. the logits: (softmax − onehot)·g/rows.
pub fn cross_entropy_grad(logits: &[f32], labels: &[usize], rows: usize, cols: usize, upstream: f32) -> Vec<f32> {
    let mut d = softmax_rows(logits, rows, cols);
    let scale = upstream / rows as f32;
    for (r, &label) in labels.iter().enumerate() {
        let row = &mut d[r * cols..(r + 1) * cols];
        row[label] -= 1.0;
        for v in row.iter_mut() {
            *v *= scale;
        }
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_small() {
        // [1 2; 3 4] · [5 6; 7 8] = [19 22; 43 50]
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [5.0, 6.0, 7.0, 8.0];
        assert_eq!(matmul(&a, &b, 2, 2, 2), vec![19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn conv2d_ones_kernel_over_ones_image() {
        // 3×3 ones kernel over 5×5 ones image, no padding → 3×3 of 9s.
        let x = vec![1.0f32; 25];
        let w = vec![1.0f32; 9];
        let out = conv2d(&x, &w, 1, 1, 5, 5, 1, 3, 0);
        assert_eq!(out.len(), 9);
        assert!(out.iter().all(|&v| v == 9.0));
    }

    #[test]
    fn conv2d_padding_keeps_size() {
        let x = vec![1.0f32; 16];
        let w = vec![1.0f32; 9];
        let out = conv2d(&x, &w, 1, 1, 4, 4, 1, 3, 1);
        assert_eq!(out.len(), 16);
        // corner touches 4 input cells, edge 6, interior 9
        assert_eq!(out[0], 4.0);
        assert_eq!(out[1], 6.0);
        assert_eq!(out[5], 9.0);
    }

    #[test]
    fn conv_transpose_doubles_spatial_size() {
        let (oh, ow) = conv_transpose2d_out_hw(4, 4, 4, 2, 1);
        assert_eq!((oh, ow), (8, 8));
        let x = vec![1.0f32; 16];
        let w = vec![1.0f32; 16];
        let out = conv_transpose2d(&x, &w, 1, 1, 4, 4, 1, 4, 2, 1);
        assert_eq!(out.len(), 64);
        // total mass: every input cell contributes its kernel wherever it lands in-bounds;
        // interior input cells contribute all 16 taps
        let total: f32 = out.iter().sum();
        assert!(total > 0.0);
    }

    #[test]
    fn avg_pool_halves() {
        let x: Vec<f32> = (0..16).map(|v| v as f32).collect();
        let out = avg_pool2(&x, 1, 1, 4, 4);
        // block (0,0) = mean(0,1,4,5) = 2.5
        assert_eq!(out[0], 2.5);
        assert_eq!(out.len(), 4);
    }

    #[test]
    fn softmax_symmetry() {
        let out = softmax_rows(&[0.0, 0.0], 1, 2);
        assert!((out[0] - 0.5).abs() < 1e-7);
        assert!((out[1] - 0.5).abs() < 1e-7);
    }

    #[test]
    fn cross_entropy_saturated_is_stable() {
        // logits [1000, 0], label 0 → ≈ 0 thanks to the log-sum-exp shift
        let loss = cross_entropy_forward(&[1000.0, 0.0], &[0], 1, 2);
        assert!(loss.abs() < 1e-6, "loss = {loss}");
    }
}

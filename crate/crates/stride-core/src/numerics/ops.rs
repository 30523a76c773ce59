//! Forward kernels and their hand-derived adjoints: 3x3 same-padded
//! convolution, 2x2 max pooling, ReLU6, the tanh recurrent cell, and MSE.
//!
//! Shapes are validated at the boundary; inner loops run on raw slices so the
//! f32 path autovectorizes. All kernels are pure.

use super::tensor::{Real, ShapeError, Tensor};

/// One row of a same-padded 3x1 horizontal correlation: `dst += w0*src[x-1] +
/// w1*src[x] + w2*src[x+1]` with zero padding at both ends.
#[inline]
fn conv_row_add<R: Real>(dst: &mut [R], src: &[R], w0: R, w1: R, w2: R) {
    let w = dst.len();
    debug_assert_eq!(src.len(), w);
    if w == 1 {
        dst[0] += w1 * src[0];
        return;
    }
    dst[0] += w1 * src[0] + w2 * src[1];
    let (s0, rest) = (&src[..w - 2], &src[1..]);
    let s1 = &rest[..w - 2];
    let s2 = &rest[1..w - 1];
    for (((d, &a), &b), &c) in dst[1..w - 1].iter_mut().zip(s0).zip(s1).zip(s2) {
        *d += w0 * a + w1 * b + w2 * c;
    }
    dst[w - 1] += w0 * src[w - 2] + w1 * src[w - 1];
}

/// Accumulate one (dst plane, src plane) pair of a same-padded 3x3
/// correlation. `k9` is the kernel in row-major (ky, kx) order; `flip`
/// rotates it 180 degrees, which turns the correlation into the adjoint map
/// used for input gradients.
fn conv_plane_accum<R: Real>(dst: &mut [R], src: &[R], k9: &[R], h: usize, w: usize, flip: bool) {
    for ky in 0..3usize {
        let (w0, w1, w2) = if flip {
            let r = 2 - ky;
            (k9[r * 3 + 2], k9[r * 3 + 1], k9[r * 3])
        } else {
            (k9[ky * 3], k9[ky * 3 + 1], k9[ky * 3 + 2])
        };
        // Output row y reads source row y + ky - 1.
        let (y_lo, y_hi) = match ky {
            0 => (1, h),
            1 => (0, h),
            _ => (0, h - 1),
        };
        for y in y_lo..y_hi {
            let sy = y + ky - 1;
            conv_row_add(&mut dst[y * w..(y + 1) * w], &src[sy * w..(sy + 1) * w], w0, w1, w2);
        }
    }
}

/// 3x3 convolution with "same" zero padding and stride 1.
///
/// `input` is C x H x W, `kernels` is O x C x 3 x 3, `bias` is O; the output
/// keeps the input's spatial extent.
pub fn conv2d_same<R: Real>(
    input: &Tensor<R>,
    kernels: &Tensor<R>,
    bias: &Tensor<R>,
) -> Result<Tensor<R>, ShapeError> {
    let (c_in, h, w) = expect_chw("conv2d_same", input)?;
    let ks = kernels.shape();
    if ks.len() != 4 || ks[2] != 3 || ks[3] != 3 {
        return Err(ShapeError::Invalid {
            op: "conv2d_same",
            msg: format!("kernels must be OxCx3x3, got {ks:?}"),
        });
    }
    let (o_ch, k_c) = (ks[0], ks[1]);
    if k_c != c_in {
        return Err(ShapeError::Mismatch {
            op: "conv2d_same",
            expected: vec![o_ch, c_in, 3, 3],
            got: ks.to_vec(),
        });
    }
    bias.expect_shape("conv2d_same", &[o_ch])?;

    let mut out = Tensor::zeros(&[o_ch, h, w]);
    let plane = h * w;
    let (od, id, kd, bd) = (out.data_mut(), input.data(), kernels.data(), bias.data());
    for o in 0..o_ch {
        let dst = &mut od[o * plane..(o + 1) * plane];
        let b = bd[o];
        for v in dst.iter_mut() {
            *v = b;
        }
        for c in 0..c_in {
            let k9 = &kd[(o * c_in + c) * 9..(o * c_in + c) * 9 + 9];
            conv_plane_accum(dst, &id[c * plane..(c + 1) * plane], k9, h, w, false);
        }
    }
    Ok(out)
}

/// Adjoint of [`conv2d_same`]: gradients w.r.t. input, kernels, and bias.
pub fn conv2d_same_backward<R: Real>(
    input: &Tensor<R>,
    kernels: &Tensor<R>,
    grad_out: &Tensor<R>,
) -> Result<(Tensor<R>, Tensor<R>, Tensor<R>), ShapeError> {
    let (c_in, h, w) = expect_chw("conv2d_same_backward", input)?;
    let o_ch = kernels.shape()[0];
    grad_out.expect_shape("conv2d_same_backward", &[o_ch, h, w])?;

    let mut g_in = Tensor::zeros(input.shape());
    let mut g_k = Tensor::zeros(kernels.shape());
    let mut g_b = Tensor::zeros(&[o_ch]);
    let plane = h * w;
    let (id, kd, gd) = (input.data(), kernels.data(), grad_out.data());

    for o in 0..o_ch {
        let g_plane = &gd[o * plane..(o + 1) * plane];
        g_b.data_mut()[o] = g_plane.iter().fold(R::ZERO, |acc, &g| acc + g);
        for c in 0..c_in {
            let in_plane = &id[c * plane..(c + 1) * plane];
            let k9 = &kd[(o * c_in + c) * 9..(o * c_in + c) * 9 + 9];
            // dL/dinput: full correlation of grad with the rotated kernel.
            conv_plane_accum(
                &mut g_in.data_mut()[c * plane..(c + 1) * plane],
                g_plane,
                k9,
                h,
                w,
                true,
            );
            // dL/dkernel[ky][kx] = sum over valid pixels of grad * shifted input.
            let gk9 = &mut g_k.data_mut()[(o * c_in + c) * 9..(o * c_in + c) * 9 + 9];
            for ky in 0..3usize {
                let (y_lo, y_hi) = match ky {
                    0 => (1, h),
                    1 => (0, h),
                    _ => (0, h - 1),
                };
                for kx in 0..3usize {
                    let mut acc = R::ZERO;
                    for y in y_lo..y_hi {
                        let sy = y + ky - 1;
                        let g_row = &g_plane[y * w..(y + 1) * w];
                        let s_row = &in_plane[sy * w..(sy + 1) * w];
                        // x range where x + kx - 1 is in bounds.
                        let (x_lo, x_hi) = match kx {
                            0 => (1, w),
                            1 => (0, w),
                            _ => (0, w - 1),
                        };
                        acc += dot(&g_row[x_lo..x_hi], &s_row[x_lo + kx - 1..x_hi + kx - 1]);
                    }
                    gk9[ky * 3 + kx] += acc;
                }
            }
        }
    }
    Ok((g_in, g_k, g_b))
}

/// 2x2 max pooling with stride 2 and floor semantics: a trailing odd row or
/// column is dropped. Returns the pooled tensor plus the flat argmax index
/// (within each channel plane) of every output cell; ties break to the first
/// element in row-major window order.
pub fn maxpool2<R: Real>(input: &Tensor<R>) -> Result<(Tensor<R>, Vec<u32>), ShapeError> {
    let (c_ch, h, w) = expect_chw("maxpool2", input)?;
    if h < 2 || w < 2 {
        return Err(ShapeError::Invalid {
            op: "maxpool2",
            msg: format!("spatial dims must be >= 2, got {h}x{w}"),
        });
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros(&[c_ch, oh, ow]);
    let mut arg = vec![0u32; c_ch * oh * ow];
    let plane = h * w;
    let id = input.data();
    let od = out.data_mut();
    for c in 0..c_ch {
        let src = &id[c * plane..(c + 1) * plane];
        for oy in 0..oh {
            for ox in 0..ow {
                let base = (2 * oy) * w + 2 * ox;
                let idxs = [base, base + 1, base + w, base + w + 1];
                let mut best = idxs[0];
                let mut best_v = src[best];
                for &i in &idxs[1..] {
                    if src[i] > best_v {
                        best_v = src[i];
                        best = i;
                    }
                }
                od[c * oh * ow + oy * ow + ox] = best_v;
                arg[c * oh * ow + oy * ow + ox] = best as u32;
            }
        }
    }
    Ok((out, arg))
}

/// Adjoint of [`maxpool2`]: routes each output gradient to its argmax cell.
pub fn maxpool2_backward<R: Real>(
    input_shape: &[usize],
    argmax: &[u32],
    grad_out: &Tensor<R>,
) -> Tensor<R> {
    let (c_ch, h, w) = (input_shape[0], input_shape[1], input_shape[2]);
    let (oh, ow) = (grad_out.shape()[1], grad_out.shape()[2]);
    let mut g_in = Tensor::zeros(&[c_ch, h, w]);
    let gd = grad_out.data();
    let gid = g_in.data_mut();
    for c in 0..c_ch {
        let out_plane = oh * ow;
        for i in 0..out_plane {
            let src = argmax[c * out_plane + i] as usize;
            gid[c * h * w + src] += gd[c * out_plane + i];
        }
    }
    g_in
}

/// Elementwise min(max(x, 0), 6).
pub fn relu6<R: Real>(x: &Tensor<R>) -> Tensor<R> {
    let six = R::from_f64(6.0);
    x.map(|v| {
        if v < R::ZERO {
            R::ZERO
        } else if v > six {
            six
        } else {
            v
        }
    })
}

/// Adjoint of [`relu6`]: passes gradient only where 0 < x < 6.
pub fn relu6_backward<R: Real>(x: &Tensor<R>, grad_out: &Tensor<R>) -> Tensor<R> {
    let six = R::from_f64(6.0);
    let mut g = Tensor::zeros(x.shape());
    for ((g, &xi), &go) in g
        .data_mut()
        .iter_mut()
        .zip(x.data())
        .zip(grad_out.data())
    {
        if xi > R::ZERO && xi < six {
            *g = go;
        }
    }
    g
}

/// In-place fused ReLU6 nonlinearity used on hot paths (same semantics as
/// [`relu6`], skipping the intermediate allocation).
pub fn relu6_inplace<R: Real>(x: &mut Tensor<R>) {
    let six = R::from_f64(6.0);
    for v in x.data_mut() {
        if *v < R::ZERO {
            *v = R::ZERO;
        } else if *v > six {
            *v = six;
        }
    }
}

/// Dot product with four fixed-order partial sums so the reduction
/// vectorizes without changing its result across runs.
#[inline]
pub fn dot<R: Real>(a: &[R], b: &[R]) -> R {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [R::ZERO; 4];
    let chunks = a.len() / 4;
    let (a4, a_tail) = a.split_at(chunks * 4);
    let (b4, b_tail) = b.split_at(chunks * 4);
    for (ca, cb) in a4.chunks_exact(4).zip(b4.chunks_exact(4)) {
        acc[0] += ca[0] * cb[0];
        acc[1] += ca[1] * cb[1];
        acc[2] += ca[2] * cb[2];
        acc[3] += ca[3] * cb[3];
    }
    let mut total = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (&x, &y) in a_tail.iter().zip(b_tail) {
        total += x * y;
    }
    total
}

/// `dst += m * v` for a row-major `rows x cols` matrix.
#[inline]
pub fn matvec_add<R: Real>(dst: &mut [R], m: &[R], v: &[R], rows: usize, cols: usize) {
    debug_assert_eq!(m.len(), rows * cols);
    debug_assert_eq!(v.len(), cols);
    debug_assert_eq!(dst.len(), rows);
    for (d, row) in dst.iter_mut().zip(m.chunks_exact(cols)) {
        *d += dot(row, v);
    }
}

/// `dst += m^T * v` for a row-major `rows x cols` matrix.
#[inline]
pub fn matvec_t_add<R: Real>(dst: &mut [R], m: &[R], v: &[R], rows: usize, cols: usize) {
    debug_assert_eq!(m.len(), rows * cols);
    debug_assert_eq!(v.len(), rows);
    debug_assert_eq!(dst.len(), cols);
    for (row, &vi) in m.chunks_exact(cols).zip(v) {
        for (d, &a) in dst.iter_mut().zip(row) {
            *d += a * vi;
        }
    }
}

/// `m += scale * a b^T` (rank-one accumulate).
#[inline]
pub fn outer_add<R: Real>(m: &mut [R], a: &[R], b: &[R]) {
    debug_assert_eq!(m.len(), a.len() * b.len());
    for (row, &ai) in m.chunks_exact_mut(b.len()).zip(a) {
        for (d, &bj) in row.iter_mut().zip(b) {
            *d += ai * bj;
        }
    }
}

/// One step of the tanh recurrent cell with the dual-bias convention:
/// `h = tanh(W_in x + W_rec h_prev + b_in + b_rec)`.
pub fn rnn_step<R: Real>(
    x: &Tensor<R>,
    h_prev: &Tensor<R>,
    w_in: &Tensor<R>,
    w_rec: &Tensor<R>,
    b_in: &Tensor<R>,
    b_rec: &Tensor<R>,
) -> Result<Tensor<R>, ShapeError> {
    let n = x.len();
    let m = h_prev.len();
    w_in.expect_shape("rnn_step", &[m, n])?;
    w_rec.expect_shape("rnn_step", &[m, m])?;
    b_in.expect_shape("rnn_step", &[m])?;
    b_rec.expect_shape("rnn_step", &[m])?;

    let mut pre = vec![R::ZERO; m];
    for ((p, &bi), &br) in pre.iter_mut().zip(b_in.data()).zip(b_rec.data()) {
        *p = bi + br;
    }
    matvec_add(&mut pre, w_in.data(), x.data(), m, n);
    matvec_add(&mut pre, w_rec.data(), h_prev.data(), m, m);
    let data = pre.into_iter().map(|p| p.tanh_portable()).collect();
    Tensor::from_vec(&[m], data)
}

/// Parameter and carry gradients for one [`rnn_step`].
pub struct RnnStepGrads<R: Real> {
    pub x: Tensor<R>,
    pub h_prev: Tensor<R>,
    /// dL/d(pre-activation); callers accumulate it into W/b gradients.
    pub dpre: Vec<R>,
}

/// Adjoint of [`rnn_step`] given the produced `h` and incoming `dL/dh`.
///
/// Weight gradients are accumulated by the caller from `dpre` (they need the
/// step's `x` and `h_prev`, which the caller already holds on its tape).
pub fn rnn_step_backward<R: Real>(
    h: &Tensor<R>,
    grad_h: &[R],
    w_in: &Tensor<R>,
    w_rec: &Tensor<R>,
) -> RnnStepGrads<R> {
    let m = h.len();
    let n = w_in.shape()[1];
    let mut dpre = vec![R::ZERO; m];
    for ((d, &hv), &g) in dpre.iter_mut().zip(h.data()).zip(grad_h) {
        *d = g * (R::ONE - hv * hv);
    }
    let mut gx = Tensor::zeros(&[n]);
    let mut gh = Tensor::zeros(&[m]);
    matvec_t_add(gx.data_mut(), w_in.data(), &dpre, m, n);
    matvec_t_add(gh.data_mut(), w_rec.data(), &dpre, m, m);
    RnnStepGrads {
        x: gx,
        h_prev: gh,
        dpre,
    }
}

/// Mean squared error and its gradient w.r.t. predictions.
pub fn mse<R: Real>(pred: &[R], target: &[R]) -> (R, Vec<R>) {
    debug_assert_eq!(pred.len(), target.len());
    let n = R::from_f64(pred.len() as f64);
    let mut loss = R::ZERO;
    let mut grad = vec![R::ZERO; pred.len()];
    let two = R::from_f64(2.0);
    for ((g, &p), &t) in grad.iter_mut().zip(pred).zip(target) {
        let d = p - t;
        loss += d * d;
        *g = two * d / n;
    }
    (loss / n, grad)
}

fn expect_chw<R: Real>(op: &'static str, t: &Tensor<R>) -> Result<(usize, usize, usize), ShapeError> {
    let s = t.shape();
    if s.len() != 3 {
        return Err(ShapeError::Invalid {
            op,
            msg: format!("expected a CxHxW tensor, got shape {s:?}"),
        });
    }
    Ok((s[0], s[1], s[2]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng::RngState;

    fn rand_tensor(shape: &[usize], rng: &mut RngState, scale: f64) -> Tensor<f64> {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.range_f64(-scale, scale)).collect();
        Tensor::from_vec(shape, data).unwrap()
    }

    #[test]
    fn conv_identity_kernel_is_identity() {
        let mut rng = RngState::new(1);
        let input = rand_tensor(&[3, 7, 9], &mut rng, 2.0);
        // Center weight one per matching channel, zero elsewhere.
        let mut k = Tensor::zeros(&[3, 3, 3, 3]);
        for o in 0..3 {
            k.data_mut()[(o * 3 + o) * 9 + 4] = 1.0;
        }
        let bias = Tensor::zeros(&[3]);
        let out = conv2d_same(&input, &k, &bias).unwrap();
        assert_eq!(out, input);
    }

    #[test]
    fn conv_all_ones_on_constant_counts_window_size() {
        let c = 1.5f64;
        let input = Tensor::filled(&[1, 5, 6], c);
        let k = Tensor::filled(&[1, 1, 3, 3], 1.0);
        let bias = Tensor::zeros(&[1]);
        let out = conv2d_same(&input, &k, &bias).unwrap();
        let (h, w) = (5usize, 6usize);
        for y in 0..h {
            for x in 0..w {
                let corner = (y == 0 || y == h - 1) && (x == 0 || x == w - 1);
                let edge = y == 0 || y == h - 1 || x == 0 || x == w - 1;
                let want = if corner {
                    4.0 * c
                } else if edge {
                    6.0 * c
                } else {
                    9.0 * c
                };
                assert_eq!(out.data()[y * w + x], want, "at ({y},{x})");
            }
        }
    }

    /// Six-nested-loop reference convolution.
    fn conv_reference(input: &Tensor<f64>, k: &Tensor<f64>, bias: &Tensor<f64>) -> Tensor<f64> {
        let (ci, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
        let o_ch = k.shape()[0];
        let mut out = Tensor::zeros(&[o_ch, h, w]);
        for o in 0..o_ch {
            for y in 0..h {
                for x in 0..w {
                    let mut acc = bias.data()[o];
                    for c in 0..ci {
                        for ky in 0..3usize {
                            for kx in 0..3usize {
                                let iy = y as isize + ky as isize - 1;
                                let ix = x as isize + kx as isize - 1;
                                if iy >= 0 && iy < h as isize && ix >= 0 && ix < w as isize {
                                    acc += input.data()[(c * h + iy as usize) * w + ix as usize]
                                        * k.data()[((o * ci + c) * 3 + ky) * 3 + kx];
                                }
                            }
                        }
                    }
                    out.data_mut()[(o * h + y) * w + x] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_brute_force_reference() {
        let mut rng = RngState::new(2);
        let input = rand_tensor(&[2, 5, 5], &mut rng, 1.0);
        let k = rand_tensor(&[4, 2, 3, 3], &mut rng, 1.0);
        let bias = rand_tensor(&[4], &mut rng, 1.0);
        let got = conv2d_same(&input, &k, &bias).unwrap();
        let want = conv_reference(&input, &k, &bias);
        for (g, w) in got.data().iter().zip(want.data()) {
            assert!((g - w).abs() < 1e-12, "{g} vs {w}");
        }
    }

    #[test]
    fn conv_rejects_channel_mismatch() {
        let input = Tensor::<f64>::zeros(&[2, 4, 4]);
        let k = Tensor::<f64>::zeros(&[3, 5, 3, 3]);
        let bias = Tensor::<f64>::zeros(&[3]);
        let err = conv2d_same(&input, &k, &bias).unwrap_err();
        assert!(matches!(err, ShapeError::Mismatch { .. }), "{err}");
    }

    #[test]
    fn maxpool_basic_and_floor_shape() {
        let input = Tensor::from_vec(&[1, 2, 2], vec![1.0f64, 2.0, 3.0, 4.0]).unwrap();
        let (out, arg) = maxpool2(&input).unwrap();
        assert_eq!(out.shape(), &[1, 1, 1]);
        assert_eq!(out.data(), &[4.0]);
        assert_eq!(arg, vec![3]);

        let tall = Tensor::<f64>::zeros(&[1, 25, 50]);
        let (out, _) = maxpool2(&tall).unwrap();
        assert_eq!(out.shape(), &[1, 12, 25]);
    }

    #[test]
    fn maxpool_constant_input_stays_constant() {
        let input = Tensor::filled(&[2, 6, 6], 3.25f64);
        let (out, _) = maxpool2(&input).unwrap();
        assert!(out.data().iter().all(|&v| v == 3.25));
        assert_eq!(out.shape(), &[2, 3, 3]);
    }

    #[test]
    fn maxpool_ties_break_row_major_first() {
        let input = Tensor::from_vec(&[1, 2, 2], vec![7.0f64, 7.0, 7.0, 7.0]).unwrap();
        let (_, arg) = maxpool2(&input).unwrap();
        assert_eq!(arg, vec![0]);
    }

    #[test]
    fn maxpool_rejects_tiny_input() {
        let input = Tensor::<f64>::zeros(&[1, 1, 5]);
        assert!(maxpool2(&input).is_err());
    }

    #[test]
    fn maxpool_output_values_come_from_input_window() {
        let mut rng = RngState::new(5);
        let input = rand_tensor(&[3, 9, 7], &mut rng, 4.0);
        let (out, arg) = maxpool2(&input).unwrap();
        let (h, w) = (9usize, 7usize);
        let (oh, ow) = (4usize, 3usize);
        for c in 0..3 {
            for oy in 0..oh {
                for ox in 0..ow {
                    let v = out.data()[(c * oh + oy) * ow + ox];
                    let a = arg[(c * oh + oy) * ow + ox] as usize;
                    assert_eq!(input.data()[c * h * w + a], v);
                    // Argmax lies inside the window.
                    let (ay, ax) = (a / w, a % w);
                    assert!(ay / 2 == oy && ax / 2 == ox);
                }
            }
        }
    }

    #[test]
    fn relu6_clamps_both_sides() {
        let x = Tensor::from_vec(&[3], vec![-1.0f64, 3.0, 8.0]).unwrap();
        let y = relu6(&x);
        assert_eq!(y.data(), &[0.0, 3.0, 6.0]);
        let g = relu6_backward(&x, &Tensor::filled(&[3], 1.0));
        assert_eq!(g.data(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn rnn_step_zero_weights_zero_output() {
        let x = Tensor::from_vec(&[3], vec![5.0f64, -2.0, 9.0]).unwrap();
        let h = rnn_step(
            &x,
            &Tensor::zeros(&[4]),
            &Tensor::zeros(&[4, 3]),
            &Tensor::zeros(&[4, 4]),
            &Tensor::zeros(&[4]),
            &Tensor::zeros(&[4]),
        )
        .unwrap();
        assert!(h.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rnn_step_identity_input_weights_is_tanh() {
        let x = Tensor::from_vec(&[3], vec![0.1f64, -0.2, 0.3]).unwrap();
        let mut w_in = Tensor::zeros(&[3, 3]);
        for i in 0..3 {
            w_in.data_mut()[i * 3 + i] = 1.0;
        }
        let h = rnn_step(
            &x,
            &Tensor::zeros(&[3]),
            &w_in,
            &Tensor::zeros(&[3, 3]),
            &Tensor::zeros(&[3]),
            &Tensor::zeros(&[3]),
        )
        .unwrap();
        for (hv, xv) in h.data().iter().zip(x.data()) {
            assert!((hv - xv.tanh()).abs() < 1e-12);
            assert!(hv.abs() < 1.0);
        }
    }

    #[test]
    fn rnn_step_matches_reference_matvec() {
        let mut rng = RngState::new(9);
        let (n, m) = (5usize, 4usize);
        let x = rand_tensor(&[n], &mut rng, 1.0);
        let hp = rand_tensor(&[m], &mut rng, 1.0);
        let w_in = rand_tensor(&[m, n], &mut rng, 0.7);
        let w_rec = rand_tensor(&[m, m], &mut rng, 0.7);
        let b_in = rand_tensor(&[m], &mut rng, 0.5);
        let b_rec = rand_tensor(&[m], &mut rng, 0.5);
        let h = rnn_step(&x, &hp, &w_in, &w_rec, &b_in, &b_rec).unwrap();
        for i in 0..m {
            let mut pre = b_in.data()[i] + b_rec.data()[i];
            for j in 0..n {
                pre += w_in.data()[i * n + j] * x.data()[j];
            }
            for j in 0..m {
                pre += w_rec.data()[i * m + j] * hp.data()[j];
            }
            assert!((h.data()[i] - crate::numerics::tensor::tanh_portable_f64(pre)).abs() < 1e-15);
        }
    }

    #[test]
    fn rnn_step_rejects_shape_mismatch() {
        let x = Tensor::<f64>::zeros(&[3]);
        let err = rnn_step(
            &x,
            &Tensor::zeros(&[4]),
            &Tensor::zeros(&[4, 2]),
            &Tensor::zeros(&[4, 4]),
            &Tensor::zeros(&[4]),
            &Tensor::zeros(&[4]),
        )
        .unwrap_err();
        assert!(matches!(err, ShapeError::Mismatch { .. }));
    }

    #[test]
    fn mse_basics() {
        let (loss, grad) = mse(&[1.0f64, 2.0], &[1.0, 4.0]);
        assert_eq!(loss, 2.0);
        assert_eq!(grad, vec![0.0, -2.0]);
    }

    // Finite-difference checks for each adjoint in isolation; the composed
    // model tape is checked in the model module.
    fn central_diff(f: &mut dyn FnMut(f64) -> f64, x0: f64) -> f64 {
        let h = 1e-5;
        (f(x0 + h) - f(x0 - h)) / (2.0 * h)
    }

    #[test]
    fn conv_backward_matches_finite_differences() {
        let mut rng = RngState::new(20);
        let input = rand_tensor(&[2, 4, 5], &mut rng, 1.0);
        let k = rand_tensor(&[3, 2, 3, 3], &mut rng, 0.6);
        let bias = rand_tensor(&[3], &mut rng, 0.3);
        // Random linear functional over the output keeps the check cheap.
        let w_out = rand_tensor(&[3, 4, 5], &mut rng, 1.0);
        let loss = |inp: &Tensor<f64>, kk: &Tensor<f64>, bb: &Tensor<f64>| {
            let out = conv2d_same(inp, kk, bb).unwrap();
            out.data().iter().zip(w_out.data()).map(|(a, b)| a * b).sum::<f64>()
        };
        let (g_in, g_k, g_b) = conv2d_same_backward(&input, &k, &w_out).unwrap();
        for idx in [0usize, 7, 19, 39] {
            let mut f = |v: f64| {
                let mut inp = input.clone();
                inp.data_mut()[idx] = v;
                loss(&inp, &k, &bias)
            };
            let fd = central_diff(&mut f, input.data()[idx]);
            assert!((fd - g_in.data()[idx]).abs() < 1e-7, "input {idx}");
        }
        for idx in [0usize, 10, 26, 53] {
            let mut f = |v: f64| {
                let mut kk = k.clone();
                kk.data_mut()[idx] = v;
                loss(&input, &kk, &bias)
            };
            let fd = central_diff(&mut f, k.data()[idx]);
            assert!((fd - g_k.data()[idx]).abs() < 1e-7, "kernel {idx}");
        }
        for idx in 0..3usize {
            let mut f = |v: f64| {
                let mut bb = bias.clone();
                bb.data_mut()[idx] = v;
                loss(&input, &k, &bb)
            };
            let fd = central_diff(&mut f, bias.data()[idx]);
            assert!((fd - g_b.data()[idx]).abs() < 1e-7, "bias {idx}");
        }
    }

    #[test]
    fn maxpool_backward_routes_to_argmax() {
        let mut rng = RngState::new(21);
        let input = rand_tensor(&[2, 4, 4], &mut rng, 1.0);
        let (out, arg) = maxpool2(&input).unwrap();
        let g_out = Tensor::filled(out.shape(), 1.0);
        let g_in = maxpool2_backward(input.shape(), &arg, &g_out);
        assert_eq!(g_in.data().iter().sum::<f64>(), out.len() as f64);
        for (i, &g) in g_in.data().iter().enumerate() {
            let c = i / 16;
            let is_arg = arg.iter().skip(c * 4).take(4).any(|&a| a as usize == i % 16) ;
            assert_eq!(g != 0.0, is_arg, "cell {i}");
        }
    }
}

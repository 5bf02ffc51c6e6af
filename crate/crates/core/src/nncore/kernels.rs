//! Slice-level forward/backward kernels shared by the public operators and
//! by [`Network`](super::Network).
//!
//! Short accumulations (over a kernel or a channel axis) run in storage
//! precision; long reductions (weight gradients, dense dot products) keep
//! 8 storage-precision lanes per 256-element block and sum the blocks in
//! `f64`.

use super::tensor::Scalar;

const BLOCK: usize = 256;
/// Length tile for the channel-mixing kernels; a multiple of `BLOCK` so
/// tiled reductions add the same block partials in the same order.
const TILE: usize = 2 * BLOCK;

#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut total = 0.0f64;
    dot_blocks(a, b, &mut total);
    total
}

#[inline]
pub(crate) fn sum<T: Scalar>(a: &[T]) -> f64 {
    let mut total = 0.0f64;
    for chunk in a.chunks(BLOCK) {
        let mut lanes = [T::ZERO; 8];
        let mut it = chunk.chunks_exact(8);
        for x in &mut it {
            for l in 0..8 {
                lanes[l] += x[l];
            }
        }
        let mut block = 0.0f64;
        for l in lanes {
            block += l.to_f64();
        }
        for x in it.remainder() {
            block += x.to_f64();
        }
        total += block;
    }
    total
}

/// `y += alpha * x`
#[inline]
pub(crate) fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * *xi;
    }
}

pub(crate) fn depthwise_forward<T: Scalar>(x: &[T], channels: usize, len: usize, w: &[T], k: usize, out: &mut [T]) {
    let out_len = len + 1 - k;
    for c in 0..channels {
        let xr = &x[c * len..(c + 1) * len];
        let o = &mut out[c * out_len..(c + 1) * out_len];
        o.fill(T::ZERO);
        for j in 0..k {
            axpy(w[c * k + j], &xr[j..j + out_len], o);
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn depthwise_backward<T: Scalar>(
    x: &[T],
    channels: usize,
    len: usize,
    w: &[T],
    k: usize,
    gout: &[T],
    mut gx: Option<&mut [T]>,
    gw: &mut [T],
) {
    let out_len = len + 1 - k;
    for c in 0..channels {
        let xr = &x[c * len..(c + 1) * len];
        let g = &gout[c * out_len..(c + 1) * out_len];
        for j in 0..k {
            gw[c * k + j] = T::from_f64(dot(g, &xr[j..j + out_len]));
        }
        if let Some(gx) = gx.as_deref_mut() {
            let gxr = &mut gx[c * len..(c + 1) * len];
            gxr.fill(T::ZERO);
            for j in 0..k {
                axpy(w[c * k + j], g, &mut gxr[j..j + out_len]);
            }
        }
    }
}

pub(crate) fn pointwise_forward<T: Scalar>(
    x: &[T],
    channels: usize,
    len: usize,
    w: &[T],
    b: &[T],
    filters: usize,
    out: &mut [T],
) {
    for start in (0..len).step_by(TILE) {
        let end = (start + TILE).min(len);
        for f in 0..filters {
            let o = &mut out[f * len + start..f * len + end];
            o.fill(b[f]);
            for c in 0..channels {
                axpy(w[f * channels + c], &x[c * len + start..c * len + end], o);
            }
        }
    }
}

/// Adds the 8-lane partial of each `BLOCK` of `a · b` into `acc`, one
/// block at a time, so that feeding consecutive tiles reproduces [`dot`].
#[inline]
fn dot_blocks<T: Scalar>(a: &[T], b: &[T], acc: &mut f64) {
    for (ca, cb) in a.chunks(BLOCK).zip(b.chunks(BLOCK)) {
        let mut lanes = [T::ZERO; 8];
        let mut ia = ca.chunks_exact(8);
        let mut ib = cb.chunks_exact(8);
        for (xa, xb) in (&mut ia).zip(&mut ib) {
            for l in 0..8 {
                lanes[l] += xa[l] * xb[l];
            }
        }
        let mut block = 0.0f64;
        for l in lanes {
            block += l.to_f64();
        }
        for (x, y) in ia.remainder().iter().zip(ib.remainder()) {
            block += (*x * *y).to_f64();
        }
        *acc += block;
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn pointwise_backward<T: Scalar>(
    x: &[T],
    channels: usize,
    len: usize,
    w: &[T],
    filters: usize,
    gout: &[T],
    mut gx: Option<&mut [T]>,
    gw: &mut [T],
    gb: &mut [T],
) {
    let mut acc_w = vec![0.0f64; filters * channels];
    let mut acc_b = vec![0.0f64; filters];
    for start in (0..len).step_by(TILE) {
        let end = (start + TILE).min(len);
        for f in 0..filters {
            let g = &gout[f * len + start..f * len + end];
            acc_b[f] += sum(g);
            for c in 0..channels {
                dot_blocks(g, &x[c * len + start..c * len + end], &mut acc_w[f * channels + c]);
            }
        }
        if let Some(gx) = gx.as_deref_mut() {
            for c in 0..channels {
                gx[c * len + start..c * len + end].fill(T::ZERO);
            }
            for f in 0..filters {
                let g = &gout[f * len + start..f * len + end];
                for c in 0..channels {
                    axpy(w[f * channels + c], g, &mut gx[c * len + start..c * len + end]);
                }
            }
        }
    }
    for (g, a) in gw.iter_mut().zip(&acc_w) {
        *g = T::from_f64(*a);
    }
    for (g, a) in gb.iter_mut().zip(&acc_b) {
        *g = T::from_f64(*a);
    }
}

pub(crate) fn relu_forward<T: Scalar>(x: &[T], out: &mut [T]) {
    for (o, &v) in out.iter_mut().zip(x) {
        *o = if v > T::ZERO { v } else { T::ZERO };
    }
}

/// `gx = gout` where the pre-activation was positive, else 0.
pub(crate) fn relu_backward<T: Scalar>(pre: &[T], gout: &[T], gx: &mut [T]) {
    for ((g, &p), &u) in gx.iter_mut().zip(pre).zip(gout) {
        *g = if p > T::ZERO { u } else { T::ZERO };
    }
}

/// Non-overlapping max-pool; the `len % m` tail of each row is dropped.
/// `argmax` receives flat input indices; ties keep the lowest index.
pub(crate) fn maxpool_forward<T: Scalar>(
    x: &[T],
    channels: usize,
    len: usize,
    m: usize,
    out: &mut [T],
    argmax: &mut [u32],
) {
    let out_len = len / m;
    for c in 0..channels {
        let row = &x[c * len..c * len + out_len * m];
        let o = &mut out[c * out_len..(c + 1) * out_len];
        let a = &mut argmax[c * out_len..(c + 1) * out_len];
        let base = (c * len) as u32;
        if m == 2 {
            for (i, ((pair, ov), av)) in row.chunks_exact(2).zip(o.iter_mut()).zip(a.iter_mut()).enumerate() {
                let second = pair[1] > pair[0];
                *ov = if second { pair[1] } else { pair[0] };
                *av = base + 2 * i as u32 + second as u32;
            }
            continue;
        }
        for (i, ((win, ov), av)) in row.chunks_exact(m).zip(o.iter_mut()).zip(a.iter_mut()).enumerate() {
            let mut best = 0;
            for j in 1..m {
                if win[j] > win[best] {
                    best = j;
                }
            }
            *ov = win[best];
            *av = base + (i * m + best) as u32;
        }
    }
}

pub(crate) fn maxpool_backward<T: Scalar>(argmax: &[u32], gout: &[T], gx: &mut [T]) {
    gx.fill(T::ZERO);
    for (&idx, &g) in argmax.iter().zip(gout) {
        gx[idx as usize] += g;
    }
}

pub(crate) fn dense_forward<T: Scalar>(x: &[T], w: &[T], b: &[T], out: &mut [T]) {
    let n = x.len();
    for (o, (row, &bias)) in out.iter_mut().zip(w.chunks_exact(n).zip(b)) {
        *o = T::from_f64(bias.to_f64() + dot(row, x));
    }
}

pub(crate) fn dense_backward<T: Scalar>(
    x: &[T],
    w: &[T],
    gout: &[T],
    gx: Option<&mut [T]>,
    gw: &mut [T],
    gb: &mut [T],
) {
    let n = x.len();
    for ((grow, &g), gbias) in gw.chunks_exact_mut(n).zip(gout).zip(gb.iter_mut()) {
        *gbias = g;
        for (gwi, &xi) in grow.iter_mut().zip(x) {
            *gwi = g * xi;
        }
    }
    if let Some(gx) = gx {
        gx.fill(T::ZERO);
        for (row, &g) in w.chunks_exact(n).zip(gout) {
            axpy(g, row, gx);
        }
    }
}

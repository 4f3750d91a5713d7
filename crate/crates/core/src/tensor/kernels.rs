//! Raw forward/backward kernels on tensors. No graph bookkeeping here.

use std::cell::Cell;

use rayon::prelude::*;

use super::{numel, Dims, Scalar, Tensor};
use crate::error::{Error, Result};

thread_local! {
    static MACS: Cell<u64> = const { Cell::new(0) };
}

/// Multiply-accumulates executed by forward conv/matmul kernels on this
/// thread since the last reset.
pub fn mac_count() -> u64 {
    MACS.with(|m| m.get())
}

pub fn reset_mac_count() {
    MACS.with(|m| m.set(0));
}

fn add_macs(n: u64) {
    MACS.with(|m| m.set(m.get() + n));
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
}

impl ConvGeom {
    pub const fn new(stride: usize, padding: usize, groups: usize) -> Self {
        Self {
            stride,
            padding,
            groups,
        }
    }

    /// Stride 1 with zero padding that preserves spatial size for odd `k`.
    pub const fn same(k: usize, groups: usize) -> Self {
        Self::new(1, k / 2, groups)
    }
}

pub fn conv2d_out_dims(x: Dims, w: Dims, g: ConvGeom) -> Result<Dims> {
    let [b, ci, h, wd] = x;
    let [co, cig, kh, kw] = w;
    let fail = |d: String| Err(Error::shape("conv2d", d));
    if g.groups == 0 || g.stride == 0 {
        return fail("groups and stride must be positive".into());
    }
    if kh != kw || kh == 0 {
        return fail(format!(
            "kernel must be square and non-empty, got {kh}x{kw}"
        ));
    }
    if ci % g.groups != 0 || co % g.groups != 0 || cig * g.groups != ci {
        return fail(format!(
            "input channels {ci}, kernel {w:?}, groups {}",
            g.groups
        ));
    }
    if h + 2 * g.padding < kh || wd + 2 * g.padding < kw {
        return fail(format!("input {h}x{wd} smaller than kernel {kh}"));
    }
    let oh = (h + 2 * g.padding - kh) / g.stride + 1;
    let ow = (wd + 2 * g.padding - kw) / g.stride + 1;
    Ok([b, co, oh, ow])
}

/// Output columns `ox` whose input column `ox*s + k - p` lies in `[0, w)`.
#[inline]
fn valid_range(out: usize, inp: usize, k: usize, s: usize, p: usize) -> (usize, usize) {
    let lo = if p > k { (p - k).div_ceil(s) } else { 0 };
    if inp + p < k + 1 {
        return (0, 0);
    }
    let hi = ((inp - 1 + p - k) / s + 1).min(out);
    (lo.min(hi), hi)
}

pub fn conv2d_forward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    g: ConvGeom,
) -> Result<Tensor<T>> {
    let od = conv2d_out_dims(x.dims(), w.dims(), g)?;
    let [_, ci, h, wd] = x.dims();
    let [co, cig, k, _] = w.dims();
    let [b, _, oh, ow] = od;
    if let Some(bt) = bias {
        if bt.len() != co {
            return Err(Error::shape(
                "conv2d",
                format!("bias of {} for {co} outputs", bt.len()),
            ));
        }
    }
    add_macs((b * co * cig * k * k * oh * ow) as u64);
    let cog = co / g.groups;
    let (xs, ws) = (x.data(), w.data());
    let (s, p) = (g.stride, g.padding);
    let mut out = vec![T::zero(); numel(&od)];
    out.par_chunks_mut(oh * ow)
        .enumerate()
        .for_each(|(plane, o)| {
            let bi = plane / co;
            let oc = plane % co;
            let grp = oc / cog;
            if let Some(bt) = bias {
                o.fill(bt.data()[oc]);
            }
            for icg in 0..cig {
                let ic = grp * cig + icg;
                let xp = &xs[(bi * ci + ic) * h * wd..][..h * wd];
                for ky in 0..k {
                    for kx in 0..k {
                        let wv = ws[((oc * cig + icg) * k + ky) * k + kx];
                        if wv == T::zero() {
                            continue;
                        }
                        let (lo, hi) = valid_range(ow, wd, kx, s, p);
                        for oy in 0..oh {
                            let iy = (oy * s + ky) as isize - p as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let row = &xp[iy as usize * wd..][..wd];
                            let orow = &mut o[oy * ow..][..ow];
                            for ox in lo..hi {
                                orow[ox] += wv * row[ox * s + kx - p];
                            }
                        }
                    }
                }
            }
        });
    Ok(Tensor::from_parts(od, out))
}

/// Gradients of a convolution with respect to each operand.
pub fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    gy: &Tensor<T>,
    g: ConvGeom,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let [b, ci, h, wd] = x.dims();
    let [co, cig, k, _] = w.dims();
    let [_, _, oh, ow] = gy.dims();
    let cog = co / g.groups;
    let (xs, ws, gys) = (x.data(), w.data(), gy.data());
    let (s, p) = (g.stride, g.padding);

    let mut gx = vec![T::zero(); x.len()];
    gx.par_chunks_mut(h * wd)
        .enumerate()
        .for_each(|(plane, gxp)| {
            let bi = plane / ci;
            let ic = plane % ci;
            let grp = ic / cig;
            let icg = ic % cig;
            for oc in grp * cog..(grp + 1) * cog {
                let gyp = &gys[(bi * co + oc) * oh * ow..][..oh * ow];
                for ky in 0..k {
                    for kx in 0..k {
                        let wv = ws[((oc * cig + icg) * k + ky) * k + kx];
                        if wv == T::zero() {
                            continue;
                        }
                        let (lo, hi) = valid_range(ow, wd, kx, s, p);
                        for oy in 0..oh {
                            let iy = (oy * s + ky) as isize - p as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let grow = &gyp[oy * ow..][..ow];
                            let xrow = &mut gxp[iy as usize * wd..][..wd];
                            for ox in lo..hi {
                                xrow[ox * s + kx - p] += wv * grow[ox];
                            }
                        }
                    }
                }
            }
        });

    let mut gw = vec![T::zero(); w.len()];
    gw.par_chunks_mut(cig * k * k)
        .enumerate()
        .for_each(|(oc, gwo)| {
            let grp = oc / cog;
            for icg in 0..cig {
                let ic = grp * cig + icg;
                for ky in 0..k {
                    for kx in 0..k {
                        let (lo, hi) = valid_range(ow, wd, kx, s, p);
                        let mut acc = T::zero();
                        for bi in 0..b {
                            let xp = &xs[(bi * ci + ic) * h * wd..][..h * wd];
                            let gyp = &gys[(bi * co + oc) * oh * ow..][..oh * ow];
                            for oy in 0..oh {
                                let iy = (oy * s + ky) as isize - p as isize;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                let xrow = &xp[iy as usize * wd..][..wd];
                                let grow = &gyp[oy * ow..][..ow];
                                for ox in lo..hi {
                                    acc += grow[ox] * xrow[ox * s + kx - p];
                                }
                            }
                        }
                        gwo[(icg * k + ky) * k + kx] = acc;
                    }
                }
            }
        });

    let mut gb = vec![T::zero(); co];
    for bi in 0..b {
        for (oc, gbv) in gb.iter_mut().enumerate() {
            *gbv += gys[(bi * co + oc) * oh * ow..][..oh * ow]
                .iter()
                .copied()
                .sum::<T>();
        }
    }

    (
        Tensor::from_parts(x.dims(), gx),
        Tensor::from_parts(w.dims(), gw),
        Tensor::from_parts([1, co, 1, 1], gb),
    )
}

/// Source indices and interpolation weight for half-pixel-centre bilinear
/// sampling along one axis.
pub(crate) fn bilinear_axis(inp: usize, out: usize) -> Vec<(usize, usize, f64)> {
    let scale = inp as f64 / out as f64;
    (0..out)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(inp - 1);
            let i1 = (i0 + 1).min(inp - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

pub fn resize_bilinear_forward<T: Scalar>(
    x: &Tensor<T>,
    oh: usize,
    ow: usize,
) -> Result<Tensor<T>> {
    let [b, c, h, w] = x.dims();
    if oh == 0 || ow == 0 || h == 0 || w == 0 {
        return Err(Error::shape(
            "bilinear_resize",
            format!("{h}x{w} -> {oh}x{ow}"),
        ));
    }
    if (oh, ow) == (h, w) {
        return Ok(x.clone());
    }
    let ay = bilinear_axis(h, oh);
    let ax = bilinear_axis(w, ow);
    let xs = x.data();
    let mut out = vec![T::zero(); b * c * oh * ow];
    out.par_chunks_mut(oh * ow)
        .enumerate()
        .for_each(|(plane, o)| {
            let xp = &xs[plane * h * w..][..h * w];
            for (oy, &(y0, y1, ly)) in ay.iter().enumerate() {
                let ly = T::of(ly);
                for (ox, &(x0, x1, lx)) in ax.iter().enumerate() {
                    let lx = T::of(lx);
                    let top = xp[y0 * w + x0] * (T::one() - lx) + xp[y0 * w + x1] * lx;
                    let bot = xp[y1 * w + x0] * (T::one() - lx) + xp[y1 * w + x1] * lx;
                    o[oy * ow + ox] = top * (T::one() - ly) + bot * ly;
                }
            }
        });
    Ok(Tensor::from_parts([b, c, oh, ow], out))
}

pub fn resize_bilinear_backward<T: Scalar>(gy: &Tensor<T>, in_dims: Dims) -> Tensor<T> {
    let [b, c, h, w] = in_dims;
    let [_, _, oh, ow] = gy.dims();
    if (oh, ow) == (h, w) {
        return gy.clone();
    }
    let ay = bilinear_axis(h, oh);
    let ax = bilinear_axis(w, ow);
    let gs = gy.data();
    let mut gx = vec![T::zero(); b * c * h * w];
    gx.par_chunks_mut(h * w).enumerate().for_each(|(plane, g)| {
        let gp = &gs[plane * oh * ow..][..oh * ow];
        for (oy, &(y0, y1, ly)) in ay.iter().enumerate() {
            let ly = T::of(ly);
            for (ox, &(x0, x1, lx)) in ax.iter().enumerate() {
                let lx = T::of(lx);
                let v = gp[oy * ow + ox];
                g[y0 * w + x0] += v * (T::one() - ly) * (T::one() - lx);
                g[y0 * w + x1] += v * (T::one() - ly) * lx;
                g[y1 * w + x0] += v * ly * (T::one() - lx);
                g[y1 * w + x1] += v * ly * lx;
            }
        }
    });
    Tensor::from_parts(in_dims, gx)
}

pub fn pixel_shuffle_forward<T: Scalar>(x: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    let [b, c, h, w] = x.dims();
    if r == 0 || c % (r * r) != 0 {
        return Err(Error::shape(
            "pixel_shuffle",
            format!("{c} channels not divisible by r^2 = {}", r * r),
        ));
    }
    let oc = c / (r * r);
    let od = [b, oc, h * r, w * r];
    let xs = x.data();
    let mut out = vec![T::zero(); x.len()];
    for bi in 0..b {
        for o in 0..oc {
            for i in 0..r {
                for j in 0..r {
                    let src_c = o * r * r + i * r + j;
                    let sp = &xs[(bi * c + src_c) * h * w..][..h * w];
                    for y in 0..h {
                        for xx in 0..w {
                            let dst = ((bi * oc + o) * h * r + y * r + i) * w * r + xx * r + j;
                            out[dst] = sp[y * w + xx];
                        }
                    }
                }
            }
        }
    }
    Ok(Tensor::from_parts(od, out))
}

/// Inverse rearrangement of [`pixel_shuffle_forward`].
pub fn pixel_unshuffle<T: Scalar>(y: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    let [b, oc, hr, wr] = y.dims();
    if r == 0 || hr % r != 0 || wr % r != 0 {
        return Err(Error::shape(
            "pixel_unshuffle",
            format!("{hr}x{wr} with r = {r}"),
        ));
    }
    let (h, w) = (hr / r, wr / r);
    let c = oc * r * r;
    let ys = y.data();
    let mut out = vec![T::zero(); y.len()];
    for bi in 0..b {
        for o in 0..oc {
            for i in 0..r {
                for j in 0..r {
                    let dst_c = o * r * r + i * r + j;
                    for yy in 0..h {
                        for xx in 0..w {
                            let src = ((bi * oc + o) * hr + yy * r + i) * wr + xx * r + j;
                            out[((bi * c + dst_c) * h + yy) * w + xx] = ys[src];
                        }
                    }
                }
            }
        }
    }
    Ok(Tensor::from_parts([b, c, h, w], out))
}

/// Saved statistics of a channel layer norm, needed by the backward pass.
pub struct LayerNormCache<T> {
    pub xhat: Tensor<T>,
    pub rstd: Vec<T>,
}

pub fn layer_norm_forward<T: Scalar>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    eps: f64,
) -> Result<(Tensor<T>, LayerNormCache<T>)> {
    let [b, c, h, w] = x.dims();
    if gamma.len() != c || beta.len() != c {
        return Err(Error::shape(
            "layer_norm",
            format!("affine of {}/{} for {c} channels", gamma.len(), beta.len()),
        ));
    }
    if eps <= 0.0 {
        return Err(Error::Invalid("layer_norm eps must be positive".into()));
    }
    let hw = h * w;
    let xs = x.data();
    let (gs, bs) = (gamma.data(), beta.data());
    let mut y = vec![T::zero(); x.len()];
    let mut xhat = vec![T::zero(); x.len()];
    let mut rstd = vec![T::zero(); b * hw];
    let inv_c = T::one() / T::of(c as f64);
    let eps = T::of(eps);
    for bi in 0..b {
        for pos in 0..hw {
            let idx = |ch: usize| (bi * c + ch) * hw + pos;
            let mean = (0..c).map(|ch| xs[idx(ch)]).sum::<T>() * inv_c;
            let var = (0..c)
                .map(|ch| {
                    let d = xs[idx(ch)] - mean;
                    d * d
                })
                .sum::<T>()
                * inv_c;
            let r = T::one() / (var + eps).sqrt();
            rstd[bi * hw + pos] = r;
            for ch in 0..c {
                let n = (xs[idx(ch)] - mean) * r;
                xhat[idx(ch)] = n;
                y[idx(ch)] = n * gs[ch] + bs[ch];
            }
        }
    }
    Ok((
        Tensor::from_parts(x.dims(), y),
        LayerNormCache {
            xhat: Tensor::from_parts(x.dims(), xhat),
            rstd,
        },
    ))
}

pub fn layer_norm_backward<T: Scalar>(
    gy: &Tensor<T>,
    gamma: &Tensor<T>,
    cache: &LayerNormCache<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let [b, c, h, w] = gy.dims();
    let hw = h * w;
    let (gys, gs, xh) = (gy.data(), gamma.data(), cache.xhat.data());
    let mut gx = vec![T::zero(); gy.len()];
    let mut gg = vec![T::zero(); c];
    let mut gb = vec![T::zero(); c];
    let inv_c = T::one() / T::of(c as f64);
    for bi in 0..b {
        for pos in 0..hw {
            let idx = |ch: usize| (bi * c + ch) * hw + pos;
            let mut mean_g = T::zero();
            let mut mean_gx = T::zero();
            for ch in 0..c {
                let g = gys[idx(ch)] * gs[ch];
                mean_g += g;
                mean_gx += g * xh[idx(ch)];
                gg[ch] += gys[idx(ch)] * xh[idx(ch)];
                gb[ch] += gys[idx(ch)];
            }
            mean_g *= inv_c;
            mean_gx *= inv_c;
            let r = cache.rstd[bi * hw + pos];
            for ch in 0..c {
                let g = gys[idx(ch)] * gs[ch];
                gx[idx(ch)] = r * (g - mean_g - xh[idx(ch)] * mean_gx);
            }
        }
    }
    (
        Tensor::from_parts(gy.dims(), gx),
        Tensor::from_parts([1, c, 1, 1], gg),
        Tensor::from_parts([1, c, 1, 1], gb),
    )
}

fn axis_layout(dims: Dims, axis: usize) -> (usize, usize, usize) {
    let outer: usize = dims[..axis].iter().product();
    let inner: usize = dims[axis + 1..].iter().product();
    (outer, dims[axis], inner)
}

/// `softmax(scale * x)` along `axis`, max-subtracted.
pub fn softmax_forward<T: Scalar>(x: &Tensor<T>, axis: usize, scale: f64) -> Result<Tensor<T>> {
    if axis > 3 {
        return Err(Error::shape("softmax", format!("axis {axis}")));
    }
    let (outer, n, inner) = axis_layout(x.dims(), axis);
    let xs = x.data();
    let s = T::of(scale);
    let mut y = vec![T::zero(); x.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |k: usize| (o * n + k) * inner + i;
            let m = (0..n)
                .map(|k| s * xs[at(k)])
                .fold(T::neg_infinity(), T::max);
            let mut z = T::zero();
            for k in 0..n {
                let e = (s * xs[at(k)] - m).exp();
                y[at(k)] = e;
                z += e;
            }
            for k in 0..n {
                y[at(k)] = y[at(k)] / z;
            }
        }
    }
    Ok(Tensor::from_parts(x.dims(), y))
}

pub fn softmax_backward<T: Scalar>(
    y: &Tensor<T>,
    gy: &Tensor<T>,
    axis: usize,
    scale: f64,
) -> Tensor<T> {
    let (outer, n, inner) = axis_layout(y.dims(), axis);
    let (ys, gs) = (y.data(), gy.data());
    let s = T::of(scale);
    let mut gx = vec![T::zero(); y.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |k: usize| (o * n + k) * inner + i;
            let dot = (0..n).map(|k| ys[at(k)] * gs[at(k)]).sum::<T>();
            for k in 0..n {
                gx[at(k)] = s * ys[at(k)] * (gs[at(k)] - dot);
            }
        }
    }
    Tensor::from_parts(y.dims(), gx)
}

fn matmul_dims(a: Dims, ta: bool, b: Dims, tb: bool) -> Result<(usize, usize, usize)> {
    if a[0] != b[0] || a[1] != b[1] {
        return Err(Error::shape("matmul", format!("batch {a:?} vs {b:?}")));
    }
    let (m, ka) = if ta { (a[3], a[2]) } else { (a[2], a[3]) };
    let (kb, n) = if tb { (b[3], b[2]) } else { (b[2], b[3]) };
    if ka != kb {
        return Err(Error::shape("matmul", format!("inner {ka} vs {kb}")));
    }
    Ok((m, ka, n))
}

pub(crate) fn matmul_raw<T: Scalar>(
    a: &Tensor<T>,
    ta: bool,
    b: &Tensor<T>,
    tb: bool,
) -> Result<Tensor<T>> {
    let (m, k, n) = matmul_dims(a.dims(), ta, b.dims(), tb)?;
    let batches = a.dims()[0] * a.dims()[1];
    let (asz, bsz) = (m * k, k * n);
    let (av, bv) = (a.data(), b.data());
    let mut out = vec![T::zero(); batches * m * n];
    out.par_chunks_mut(m * n).enumerate().for_each(|(bi, o)| {
        let am = &av[bi * asz..][..asz];
        let bm = &bv[bi * bsz..][..bsz];
        for i in 0..m {
            let orow = &mut o[i * n..][..n];
            for kk in 0..k {
                let aik = if ta { am[kk * m + i] } else { am[i * k + kk] };
                if tb {
                    for (j, ov) in orow.iter_mut().enumerate() {
                        *ov += aik * bm[j * k + kk];
                    }
                } else {
                    let brow = &bm[kk * n..][..n];
                    for (ov, &bkj) in orow.iter_mut().zip(brow) {
                        *ov += aik * bkj;
                    }
                }
            }
        }
    });
    Ok(Tensor::from_parts([a.dims()[0], a.dims()[1], m, n], out))
}

/// Batched product of the last two axes, `op(a) · op(b)` with optional
/// transposes.
pub fn matmul_forward<T: Scalar>(
    a: &Tensor<T>,
    ta: bool,
    b: &Tensor<T>,
    tb: bool,
) -> Result<Tensor<T>> {
    let (m, k, n) = matmul_dims(a.dims(), ta, b.dims(), tb)?;
    add_macs((a.dims()[0] * a.dims()[1] * m * k * n) as u64);
    matmul_raw(a, ta, b, tb)
}

pub fn broadcast_dims(a: Dims, b: Dims) -> Result<Dims> {
    let mut out = [0; 4];
    for i in 0..4 {
        out[i] = match (a[i], b[i]) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return Err(Error::shape("broadcast", format!("{a:?} vs {b:?}"))),
        };
    }
    Ok(out)
}

fn strides(d: Dims) -> [usize; 4] {
    [d[1] * d[2] * d[3], d[2] * d[3], d[3], 1]
}

fn bcast_strides(d: Dims) -> [usize; 4] {
    let s = strides(d);
    let mut out = [0; 4];
    for i in 0..4 {
        out[i] = if d[i] == 1 { 0 } else { s[i] };
    }
    out
}

pub fn broadcast_binary<T: Scalar>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    f: impl Fn(T, T) -> T,
) -> Result<Tensor<T>> {
    let od = broadcast_dims(a.dims(), b.dims())?;
    if a.dims() == b.dims() {
        return a.zip_map(b, f);
    }
    let (sa, sb) = (bcast_strides(a.dims()), bcast_strides(b.dims()));
    let (av, bv) = (a.data(), b.data());
    let mut out = Vec::with_capacity(numel(&od));
    for i0 in 0..od[0] {
        for i1 in 0..od[1] {
            for i2 in 0..od[2] {
                let ba = i0 * sa[0] + i1 * sa[1] + i2 * sa[2];
                let bb = i0 * sb[0] + i1 * sb[1] + i2 * sb[2];
                for i3 in 0..od[3] {
                    out.push(f(av[ba + i3 * sa[3]], bv[bb + i3 * sb[3]]));
                }
            }
        }
    }
    Ok(Tensor::from_parts(od, out))
}

/// Sum a broadcast gradient back down to `dims`.
pub fn reduce_to<T: Scalar>(g: &Tensor<T>, dims: Dims) -> Tensor<T> {
    if g.dims() == dims {
        return g.clone();
    }
    let gd = g.dims();
    let s = bcast_strides(dims);
    let gv = g.data();
    let mut out = vec![T::zero(); numel(&dims)];
    let mut i = 0;
    for i0 in 0..gd[0] {
        for i1 in 0..gd[1] {
            for i2 in 0..gd[2] {
                let base = i0 * s[0] + i1 * s[1] + i2 * s[2];
                for i3 in 0..gd[3] {
                    out[base + i3 * s[3]] += gv[i];
                    i += 1;
                }
            }
        }
    }
    Tensor::from_parts(dims, out)
}

pub fn permute<T: Scalar>(x: &Tensor<T>, perm: [usize; 4]) -> Result<Tensor<T>> {
    let mut seen = [false; 4];
    for &p in &perm {
        if p > 3 || seen[p] {
            return Err(Error::shape("permute", format!("{perm:?}")));
        }
        seen[p] = true;
    }
    let d = x.dims();
    let od = [d[perm[0]], d[perm[1]], d[perm[2]], d[perm[3]]];
    let s = strides(d);
    let ps = [s[perm[0]], s[perm[1]], s[perm[2]], s[perm[3]]];
    let xv = x.data();
    let mut out = Vec::with_capacity(x.len());
    for i0 in 0..od[0] {
        for i1 in 0..od[1] {
            for i2 in 0..od[2] {
                let base = i0 * ps[0] + i1 * ps[1] + i2 * ps[2];
                for i3 in 0..od[3] {
                    out.push(xv[base + i3 * ps[3]]);
                }
            }
        }
    }
    Ok(Tensor::from_parts(od, out))
}

pub fn inverse_perm(perm: [usize; 4]) -> [usize; 4] {
    let mut inv = [0; 4];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

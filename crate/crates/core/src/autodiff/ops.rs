//! Differentiable operations. Each records its own backward rule.

use crate::error::{Error, Result};
use crate::tensor::kernels::{self, ConvGeom};
use crate::tensor::{Dims, Scalar, Tensor};

use super::Var;

fn binary<T: Scalar>(
    a: &Var<T>,
    b: &Var<T>,
    f: impl Fn(T, T) -> T,
    da: impl Fn(T, T, T) -> T + 'static,
    db: impl Fn(T, T, T) -> T + 'static,
) -> Result<Var<T>> {
    let out = kernels::broadcast_binary(a.value(), b.value(), f)?;
    let (av, bv) = (a.value().clone(), b.value().clone());
    let (ad, bd) = (a.dims(), b.dims());
    Ok(Var::record(out, vec![a.clone(), b.clone()], move |g| {
        let ea = expand(&av, g.dims());
        let eb = expand(&bv, g.dims());
        let mut gad = Vec::with_capacity(g.len());
        let mut gbd = Vec::with_capacity(g.len());
        for ((&gv, &x), &y) in g.data().iter().zip(ea.data()).zip(eb.data()) {
            gad.push(da(gv, x, y));
            gbd.push(db(gv, x, y));
        }
        vec![
            Some(kernels::reduce_to(&Tensor::from_parts(g.dims(), gad), ad)),
            Some(kernels::reduce_to(&Tensor::from_parts(g.dims(), gbd), bd)),
        ]
    }))
}

fn expand<T: Scalar>(t: &Tensor<T>, dims: Dims) -> Tensor<T> {
    if t.dims() == dims {
        return t.clone();
    }
    kernels::broadcast_binary(t, &Tensor::zeros(dims), |x, _| x).expect("broadcastable")
}

/// Elementwise sum with broadcasting over unit axes.
pub fn add<T: Scalar>(a: &Var<T>, b: &Var<T>) -> Result<Var<T>> {
    if a.dims() == b.dims() {
        let out = a.value().zip_map(b.value(), |x, y| x + y)?;
        return Ok(Var::record(out, vec![a.clone(), b.clone()], |g| {
            vec![Some(g.clone()), Some(g.clone())]
        }));
    }
    binary(a, b, |x, y| x + y, |g, _, _| g, |g, _, _| g)
}

pub fn sub<T: Scalar>(a: &Var<T>, b: &Var<T>) -> Result<Var<T>> {
    binary(a, b, |x, y| x - y, |g, _, _| g, |g, _, _| -g)
}

/// Elementwise (Hadamard) product with broadcasting.
pub fn mul<T: Scalar>(a: &Var<T>, b: &Var<T>) -> Result<Var<T>> {
    binary(a, b, |x, y| x * y, |g, _, y| g * y, |g, x, _| g * x)
}

fn unary<T: Scalar>(x: &Var<T>, f: impl Fn(T) -> T, df: impl Fn(T, T) -> T + 'static) -> Var<T> {
    let out = x.value().map(f);
    let xv = x.value().clone();
    let yv = out.clone();
    Var::record(out, vec![x.clone()], move |g| {
        let d = g
            .data()
            .iter()
            .zip(xv.data())
            .zip(yv.data())
            .map(|((&gv, &xi), &yi)| gv * df(xi, yi))
            .collect();
        vec![Some(Tensor::from_parts(g.dims(), d))]
    })
}

pub fn scale<T: Scalar>(x: &Var<T>, s: f64) -> Var<T> {
    let s = T::of(s);
    unary(x, move |v| v * s, move |_, _| s)
}

pub fn add_scalar<T: Scalar>(x: &Var<T>, s: f64) -> Var<T> {
    let s = T::of(s);
    unary(x, move |v| v + s, |_, _| T::one())
}

pub fn square<T: Scalar>(x: &Var<T>) -> Var<T> {
    unary(x, |v| v * v, |xi, _| xi + xi)
}

pub fn relu<T: Scalar>(x: &Var<T>) -> Var<T> {
    unary(
        x,
        |v| v.max(T::zero()),
        |xi, _| if xi > T::zero() { T::one() } else { T::zero() },
    )
}

pub fn sigmoid<T: Scalar>(x: &Var<T>) -> Var<T> {
    unary(
        x,
        |v| T::one() / (T::one() + (-v).exp()),
        |_, y| y * (T::one() - y),
    )
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

/// GELU, tanh approximation.
pub fn gelu<T: Scalar>(x: &Var<T>) -> Var<T> {
    let (c, a, half) = (T::of(GELU_C), T::of(GELU_A), T::of(0.5));
    unary(
        x,
        move |v| half * v * (T::one() + (c * (v + a * v * v * v)).tanh()),
        move |v, _| {
            let t = (c * (v + a * v * v * v)).tanh();
            let du = c * (T::one() + T::of(3.0) * a * v * v);
            half * (T::one() + t) + half * v * (T::one() - t * t) * du
        },
    )
}

/// Clamp to `[lo, hi]`. The gradient passes where the input lies inside
/// the closed interval.
pub fn clamp<T: Scalar>(x: &Var<T>, lo: f64, hi: f64) -> Var<T> {
    let (l, h) = (T::of(lo), T::of(hi));
    unary(
        x,
        move |v| v.max(l).min(h),
        move |v, _| {
            if v >= l && v <= h {
                T::one()
            } else {
                T::zero()
            }
        },
    )
}

pub fn sum<T: Scalar>(x: &Var<T>) -> Var<T> {
    let dims = x.dims();
    let out = Tensor::scalar(x.value().sum());
    Var::record(out, vec![x.clone()], move |g| {
        vec![Some(Tensor::full(dims, g.item()))]
    })
}

pub fn mean<T: Scalar>(x: &Var<T>) -> Var<T> {
    let n = x.value().len() as f64;
    scale(&sum(x), 1.0 / n)
}

pub fn conv2d<T: Scalar>(
    x: &Var<T>,
    w: &Var<T>,
    bias: Option<&Var<T>>,
    geom: ConvGeom,
) -> Result<Var<T>> {
    let out = kernels::conv2d_forward(x.value(), w.value(), bias.map(Var::value), geom)?;
    let (xv, wv) = (x.value().clone(), w.value().clone());
    let mut parents = vec![x.clone(), w.clone()];
    let has_bias = bias.is_some();
    if let Some(b) = bias {
        parents.push(b.clone());
    }
    let bdims = bias.map(Var::dims);
    let (need_x, need_w) = (x.requires_grad(), w.requires_grad());
    Ok(Var::record(out, parents, move |g| {
        let (gx, gw, gb) = kernels::conv2d_backward(&xv, &wv, g, geom);
        let mut v = vec![need_x.then_some(gx), need_w.then_some(gw)];
        if has_bias {
            v.push(Some(
                gb.reshape(bdims.expect("bias dims")).expect("bias numel"),
            ));
        }
        v
    }))
}

pub fn resize_bilinear<T: Scalar>(x: &Var<T>, oh: usize, ow: usize) -> Result<Var<T>> {
    let out = kernels::resize_bilinear_forward(x.value(), oh, ow)?;
    let d = x.dims();
    Ok(Var::record(out, vec![x.clone()], move |g| {
        vec![Some(kernels::resize_bilinear_backward(g, d))]
    }))
}

pub fn pixel_shuffle<T: Scalar>(x: &Var<T>, r: usize) -> Result<Var<T>> {
    let out = kernels::pixel_shuffle_forward(x.value(), r)?;
    Ok(Var::record(out, vec![x.clone()], move |g| {
        vec![Some(kernels::pixel_unshuffle(g, r).expect("shuffled dims"))]
    }))
}

/// Layer normalisation over the channel axis at every spatial position.
pub fn layer_norm<T: Scalar>(
    x: &Var<T>,
    gamma: &Var<T>,
    beta: &Var<T>,
    eps: f64,
) -> Result<Var<T>> {
    let (out, cache) = kernels::layer_norm_forward(x.value(), gamma.value(), beta.value(), eps)?;
    let gv = gamma.value().clone();
    let (gd, bd) = (gamma.dims(), beta.dims());
    Ok(Var::record(
        out,
        vec![x.clone(), gamma.clone(), beta.clone()],
        move |g| {
            let (gx, gg, gb) = kernels::layer_norm_backward(g, &gv, &cache);
            vec![
                Some(gx),
                Some(gg.reshape(gd).expect("gamma numel")),
                Some(gb.reshape(bd).expect("beta numel")),
            ]
        },
    ))
}

pub fn softmax<T: Scalar>(x: &Var<T>, axis: usize, scale: f64) -> Result<Var<T>> {
    let out = kernels::softmax_forward(x.value(), axis, scale)?;
    let y = out.clone();
    Ok(Var::record(out, vec![x.clone()], move |g| {
        vec![Some(kernels::softmax_backward(&y, g, axis, scale))]
    }))
}

/// Batched `op(a) · op(b)` over the last two axes.
pub fn matmul<T: Scalar>(a: &Var<T>, ta: bool, b: &Var<T>, tb: bool) -> Result<Var<T>> {
    let out = kernels::matmul_forward(a.value(), ta, b.value(), tb)?;
    let (av, bv) = (a.value().clone(), b.value().clone());
    let (need_a, need_b) = (a.requires_grad(), b.requires_grad());
    Ok(Var::record(out, vec![a.clone(), b.clone()], move |g| {
        let ga = need_a.then(|| {
            if ta {
                kernels::matmul_raw(&bv, tb, g, true)
            } else {
                kernels::matmul_raw(g, false, &bv, !tb)
            }
            .expect("matmul grad dims")
        });
        let gb = need_b.then(|| {
            if tb {
                kernels::matmul_raw(g, true, &av, ta)
            } else {
                kernels::matmul_raw(&av, !ta, g, false)
            }
            .expect("matmul grad dims")
        });
        vec![ga, gb]
    }))
}

pub fn reshape<T: Scalar>(x: &Var<T>, dims: Dims) -> Result<Var<T>> {
    let out = x.value().reshape(dims)?;
    let d = x.dims();
    Ok(Var::record(out, vec![x.clone()], move |g| {
        vec![Some(g.reshape(d).expect("same numel"))]
    }))
}

pub fn permute<T: Scalar>(x: &Var<T>, perm: [usize; 4]) -> Result<Var<T>> {
    let out = kernels::permute(x.value(), perm)?;
    let inv = kernels::inverse_perm(perm);
    Ok(Var::record(out, vec![x.clone()], move |g| {
        vec![Some(kernels::permute(g, inv).expect("valid perm"))]
    }))
}

/// Concatenate along the channel axis.
pub fn concat_channels<T: Scalar>(xs: &[Var<T>]) -> Result<Var<T>> {
    let first = xs
        .first()
        .ok_or_else(|| Error::shape("concat", "no inputs"))?
        .dims();
    let [b, _, h, w] = first;
    let mut chans = Vec::with_capacity(xs.len());
    for x in xs {
        let [xb, xc, xh, xw] = x.dims();
        if (xb, xh, xw) != (b, h, w) {
            return Err(Error::shape(
                "concat",
                format!("{first:?} vs {:?}", x.dims()),
            ));
        }
        chans.push(xc);
    }
    let total: usize = chans.iter().sum();
    let hw = h * w;
    let mut data = Vec::with_capacity(b * total * hw);
    for bi in 0..b {
        for (x, &c) in xs.iter().zip(&chans) {
            data.extend_from_slice(&x.value().data()[bi * c * hw..][..c * hw]);
        }
    }
    let out = Tensor::from_parts([b, total, h, w], data);
    Ok(Var::record(out, xs.to_vec(), move |g| {
        let mut start = 0;
        chans
            .iter()
            .map(|&c| {
                let s = slice_channels_raw(g, start, c);
                start += c;
                Some(s)
            })
            .collect()
    }))
}

fn slice_channels_raw<T: Scalar>(x: &Tensor<T>, start: usize, len: usize) -> Tensor<T> {
    let [b, c, h, w] = x.dims();
    let hw = h * w;
    let mut data = Vec::with_capacity(b * len * hw);
    for bi in 0..b {
        data.extend_from_slice(&x.data()[(bi * c + start) * hw..][..len * hw]);
    }
    Tensor::from_parts([b, len, h, w], data)
}

/// Channels `start..start + len`.
pub fn slice_channels<T: Scalar>(x: &Var<T>, start: usize, len: usize) -> Result<Var<T>> {
    let d = x.dims();
    if start + len > d[1] || len == 0 {
        return Err(Error::shape(
            "slice",
            format!("{start}+{len} of {} channels", d[1]),
        ));
    }
    let out = slice_channels_raw(x.value(), start, len);
    Ok(Var::record(out, vec![x.clone()], move |g| {
        let [b, c, h, w] = d;
        let hw = h * w;
        let mut full = vec![T::zero(); b * c * hw];
        for bi in 0..b {
            full[(bi * c + start) * hw..][..len * hw]
                .copy_from_slice(&g.data()[bi * len * hw..][..len * hw]);
        }
        vec![Some(Tensor::from_parts(d, full))]
    }))
}

/// Global average pool to (b, c, 1, 1).
pub fn mean_hw<T: Scalar>(x: &Var<T>) -> Var<T> {
    let [b, c, h, w] = x.dims();
    let hw = h * w;
    let inv = T::one() / T::of(hw as f64);
    let data = x
        .value()
        .data()
        .chunks(hw)
        .map(|p| p.iter().copied().sum::<T>() * inv)
        .collect();
    let out = Tensor::from_parts([b, c, 1, 1], data);
    Var::record(out, vec![x.clone()], move |g| {
        let data = g
            .data()
            .iter()
            .flat_map(|&v| std::iter::repeat_n(v * inv, hw))
            .collect();
        vec![Some(Tensor::from_parts([b, c, h, w], data))]
    })
}

/// Mean over channels, (b, 1, h, w).
pub fn mean_c<T: Scalar>(x: &Var<T>) -> Var<T> {
    let [b, c, h, w] = x.dims();
    let hw = h * w;
    let inv = T::one() / T::of(c as f64);
    let xs = x.value().data();
    let mut data = vec![T::zero(); b * hw];
    for bi in 0..b {
        for ch in 0..c {
            for (o, &v) in data[bi * hw..][..hw]
                .iter_mut()
                .zip(&xs[(bi * c + ch) * hw..][..hw])
            {
                *o += v;
            }
        }
    }
    data.iter_mut().for_each(|v| *v *= inv);
    let out = Tensor::from_parts([b, 1, h, w], data);
    Var::record(out, vec![x.clone()], move |g| {
        vec![Some(expand(&g.map(|v| v * inv), [b, c, h, w]))]
    })
}

/// Maximum over channels, (b, 1, h, w). Ties send the gradient to the
/// first maximal channel.
pub fn max_c<T: Scalar>(x: &Var<T>) -> Var<T> {
    let [b, c, h, w] = x.dims();
    let hw = h * w;
    let xs = x.value().data();
    let mut data = vec![T::neg_infinity(); b * hw];
    let mut arg = vec![0usize; b * hw];
    for bi in 0..b {
        for ch in 0..c {
            for p in 0..hw {
                let v = xs[(bi * c + ch) * hw + p];
                if v > data[bi * hw + p] {
                    data[bi * hw + p] = v;
                    arg[bi * hw + p] = ch;
                }
            }
        }
    }
    let out = Tensor::from_parts([b, 1, h, w], data);
    Var::record(out, vec![x.clone()], move |g| {
        let mut gx = vec![T::zero(); b * c * hw];
        for bi in 0..b {
            for p in 0..hw {
                gx[(bi * c + arg[bi * hw + p]) * hw + p] = g.data()[bi * hw + p];
            }
        }
        vec![Some(Tensor::from_parts([b, c, h, w], gx))]
    })
}

/// 2×2 average pooling with stride 2; odd trailing rows/columns dropped.
pub fn avg_pool2<T: Scalar>(x: &Var<T>) -> Result<Var<T>> {
    let [b, c, h, w] = x.dims();
    let (oh, ow) = (h / 2, w / 2);
    if oh == 0 || ow == 0 {
        return Err(Error::shape("avg_pool2", format!("{h}x{w}")));
    }
    let q = T::of(0.25);
    let xs = x.value().data();
    let mut data = Vec::with_capacity(b * c * oh * ow);
    for plane in 0..b * c {
        let p = &xs[plane * h * w..][..h * w];
        for y in 0..oh {
            for xx in 0..ow {
                let (r0, r1) = (2 * y * w, (2 * y + 1) * w);
                data.push(
                    (p[r0 + 2 * xx] + p[r0 + 2 * xx + 1] + p[r1 + 2 * xx] + p[r1 + 2 * xx + 1]) * q,
                );
            }
        }
    }
    let out = Tensor::from_parts([b, c, oh, ow], data);
    Ok(Var::record(out, vec![x.clone()], move |g| {
        let mut gx = vec![T::zero(); b * c * h * w];
        for plane in 0..b * c {
            let gp = &g.data()[plane * oh * ow..][..oh * ow];
            let o = &mut gx[plane * h * w..][..h * w];
            for y in 0..oh {
                for xx in 0..ow {
                    let v = gp[y * ow + xx] * q;
                    for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                        o[(2 * y + dy) * w + 2 * xx + dx] = v;
                    }
                }
            }
        }
        vec![Some(Tensor::from_parts([b, c, h, w], gx))]
    }))
}

/// Interleave channel groups: (b, g·n, h, w) viewed as (g, n) becomes (n, g).
pub fn channel_shuffle<T: Scalar>(x: &Var<T>, groups: usize) -> Result<Var<T>> {
    let [b, c, h, w] = x.dims();
    if groups == 0 || c % groups != 0 {
        return Err(Error::shape(
            "channel_shuffle",
            format!("{c} channels, {groups} groups"),
        ));
    }
    let v = reshape(x, [b, groups, c / groups, h * w])?;
    let v = permute(&v, [0, 2, 1, 3])?;
    reshape(&v, [b, c, h, w])
}

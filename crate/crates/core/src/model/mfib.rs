//! Multi-branch feature integration block (MFIB) and its cascade (MFIBA).

use crate::autodiff::{ops, Var};
use crate::error::{Error, Result};
use crate::params::{Bound, ParamStore};
use crate::rng::SeededRng;
use crate::tensor::kernels::ConvGeom;
use crate::tensor::Scalar;

use super::config::{ModelConfig, MLP_GROUPS};
use super::layers::{add_conv, add_norm, add_normal, conv, conv_cost, norm, Init};

pub const QUERY_STD: f64 = 0.02;

/// Register the parameters of one MFIB at width `c` under `pre`.
pub fn init_mfib(
    store: &mut ParamStore,
    rng: &mut SeededRng,
    pre: &str,
    c: usize,
    cfg: &ModelConfig,
) -> Result<()> {
    let c4 = c / 4;
    let q = cfg.query_base;
    let hid = cfg.mlp_hidden(c);
    add_norm(store, &format!("{pre}.norm"), c)?;
    add_normal(store, rng, &format!("{pre}.q_hw"), [1, c4, q, q], QUERY_STD)?;
    add_conv(
        store,
        rng,
        &format!("{pre}.hw_refine"),
        c4,
        c4,
        3,
        c4,
        Init::Identity,
    )?;
    add_normal(store, rng, &format!("{pre}.q_ch"), [1, 1, c4, q], QUERY_STD)?;
    add_conv(
        store,
        rng,
        &format!("{pre}.ch_refine"),
        1,
        1,
        3,
        1,
        Init::Identity,
    )?;
    add_normal(store, rng, &format!("{pre}.q_cw"), [1, 1, c4, q], QUERY_STD)?;
    add_conv(
        store,
        rng,
        &format!("{pre}.cw_refine"),
        1,
        1,
        3,
        1,
        Init::Identity,
    )?;
    add_conv(
        store,
        rng,
        &format!("{pre}.pw"),
        c4,
        c4,
        1,
        1,
        Init::Uniform,
    )?;
    add_conv(
        store,
        rng,
        &format!("{pre}.fc1"),
        c,
        hid,
        1,
        MLP_GROUPS,
        Init::Uniform,
    )?;
    add_conv(
        store,
        rng,
        &format!("{pre}.fc2"),
        hid,
        c,
        1,
        MLP_GROUPS,
        Init::Zero,
    )
}

/// The four branch outputs of an MFIB, before concatenation.
pub fn mfib_branches<T: Scalar>(x: &Var<T>, p: &Bound<T>, pre: &str) -> Result<[Var<T>; 4]> {
    let [_, c, h, w] = x.dims();
    if c % 4 != 0 {
        return Err(Error::shape(
            "mfib",
            format!("{c} channels not divisible by 4"),
        ));
    }
    let c4 = c / 4;
    let y = norm(p, &format!("{pre}.norm"), x)?;
    let part = |i: usize| ops::slice_channels(&y, i * c4, c4);

    // Spatial plane: query (1, c/4, q, q) stretched to (h, w).
    let q = ops::resize_bilinear(p.get(&format!("{pre}.q_hw"))?, h, w)?;
    let q = conv(p, &format!("{pre}.hw_refine"), &q, ConvGeom::same(3, c4))?;
    let hw = ops::mul(&part(0)?, &q)?;

    // Channel-height plane, features viewed as (b, w, c/4, h).
    let q = ops::resize_bilinear(p.get(&format!("{pre}.q_ch"))?, c4, h)?;
    let q = conv(p, &format!("{pre}.ch_refine"), &q, ConvGeom::same(3, 1))?;
    let x2 = ops::permute(&part(1)?, [0, 3, 1, 2])?;
    let ch = ops::permute(&ops::mul(&x2, &q)?, [0, 2, 3, 1])?;

    // Channel-width plane, features viewed as (b, h, c/4, w).
    let q = ops::resize_bilinear(p.get(&format!("{pre}.q_cw"))?, c4, w)?;
    let q = conv(p, &format!("{pre}.cw_refine"), &q, ConvGeom::same(3, 1))?;
    let x3 = ops::permute(&part(2)?, [0, 2, 1, 3])?;
    let cw = ops::permute(&ops::mul(&x3, &q)?, [0, 2, 1, 3])?;

    let pw = conv(p, &format!("{pre}.pw"), &part(3)?, ConvGeom::same(1, 1))?;
    Ok([hw, ch, cw, pw])
}

pub fn mfib_forward<T: Scalar>(x: &Var<T>, p: &Bound<T>, pre: &str) -> Result<Var<T>> {
    let cat = ops::concat_channels(&mfib_branches(x, p, pre)?)?;
    let m = conv(
        p,
        &format!("{pre}.fc1"),
        &cat,
        ConvGeom::same(1, MLP_GROUPS),
    )?;
    let m = ops::channel_shuffle(&ops::gelu(&m), MLP_GROUPS)?;
    let m = conv(p, &format!("{pre}.fc2"), &m, ConvGeom::same(1, MLP_GROUPS))?;
    ops::add(x, &m)
}

pub fn init_mfiba(
    store: &mut ParamStore,
    rng: &mut SeededRng,
    pre: &str,
    c: usize,
    n: usize,
    cfg: &ModelConfig,
) -> Result<()> {
    for j in 0..n {
        init_mfib(store, rng, &format!("{pre}.mfib{j}"), c, cfg)?;
    }
    add_conv(
        store,
        rng,
        &format!("{pre}.conv"),
        c,
        c,
        3,
        c,
        Init::Identity,
    )
}

/// `n` chained MFIBs closed by a depthwise 3×3 conv.
pub fn mfiba_forward<T: Scalar>(x: &Var<T>, p: &Bound<T>, pre: &str, n: usize) -> Result<Var<T>> {
    let mut y = x.clone();
    for j in 0..n {
        y = mfib_forward(&y, p, &format!("{pre}.mfib{j}"))?;
    }
    conv(
        p,
        &format!("{pre}.conv"),
        &y,
        ConvGeom::same(3, x.dims()[1]),
    )
}

pub fn init_stage(
    store: &mut ParamStore,
    rng: &mut SeededRng,
    pre: &str,
    c: usize,
    depth: usize,
    cfg: &ModelConfig,
) -> Result<()> {
    for (i, n) in cfg.cascade_chunks(depth).into_iter().enumerate() {
        init_mfiba(store, rng, &format!("{pre}.mfiba{i}"), c, n, cfg)?;
    }
    Ok(())
}

pub fn stage_forward<T: Scalar>(
    x: &Var<T>,
    p: &Bound<T>,
    pre: &str,
    depth: usize,
    cfg: &ModelConfig,
) -> Result<Var<T>> {
    let mut y = x.clone();
    for (i, n) in cfg.cascade_chunks(depth).into_iter().enumerate() {
        y = mfiba_forward(&y, p, &format!("{pre}.mfiba{i}"), n)?;
    }
    Ok(y)
}

/// (params, MACs) of one MFIB at width `c` on an `h`×`w` map.
pub fn mfib_cost(c: usize, h: usize, w: usize, cfg: &ModelConfig) -> (u64, u64) {
    let c4 = c / 4;
    let q = cfg.query_base as u64;
    let hid = cfg.mlp_hidden(c);
    let parts = [
        conv_cost(c4, c4, 3, c4, h, w),
        conv_cost(1, 1, 3, 1, c4, h),
        conv_cost(1, 1, 3, 1, c4, w),
        conv_cost(c4, c4, 1, 1, h, w),
        conv_cost(c, hid, 1, MLP_GROUPS, h, w),
        conv_cost(hid, c, 1, MLP_GROUPS, h, w),
    ];
    let queries = c4 as u64 * q * q + 2 * c4 as u64 * q;
    let norm = 2 * c as u64;
    parts
        .iter()
        .fold((queries + norm, 0), |(p, m), &(dp, dm)| (p + dp, m + dm))
}

/// (params, MACs) of one MFIBA of `n` blocks.
pub fn mfiba_cost(c: usize, h: usize, w: usize, n: usize, cfg: &ModelConfig) -> (u64, u64) {
    let (bp, bm) = mfib_cost(c, h, w, cfg);
    let (cp, cm) = conv_cost(c, c, 3, c, h, w);
    (n as u64 * bp + cp, n as u64 * bm + cm)
}

pub fn stage_cost(c: usize, h: usize, w: usize, depth: usize, cfg: &ModelConfig) -> (u64, u64) {
    cfg.cascade_chunks(depth)
        .into_iter()
        .map(|n| mfiba_cost(c, h, w, n, cfg))
        .fold((0, 0), |(p, m), (a, b)| (p + a, m + b))
}

/// MACs of one MFIBA with `mfib_cascade` blocks at width `c`.
pub fn mfiba_macs(c: usize, h: usize, w: usize, cfg: &ModelConfig) -> u64 {
    mfiba_cost(c, h, w, cfg.mfib_cascade, cfg).1
}

/// MACs of `depth` standard dense 3×3 convolutions at width `c`.
pub fn conv_stack_macs(c: usize, h: usize, w: usize, depth: usize) -> u64 {
    depth as u64 * conv_cost(c, c, 3, 1, h, w).1
}

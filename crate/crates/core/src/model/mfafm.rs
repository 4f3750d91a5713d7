//! Multi-scale feature adaptive fusion module (MFAFM).

use crate::autodiff::{ops, Var};
use crate::error::{Error, Result};
use crate::params::{Bound, ParamStore};
use crate::rng::SeededRng;
use crate::tensor::kernels::ConvGeom;
use crate::tensor::Scalar;

use super::layers::{add_conv, conv, conv_cost, Init};

pub const CA_REDUCTION: usize = 4;

#[derive(Clone, Copy, Debug)]
pub struct MfafmDims {
    pub x: usize,
    pub skip1: usize,
    pub skip2: usize,
    /// Width of each of the three branches.
    pub width: usize,
    pub out: usize,
}

impl MfafmDims {
    fn reduced(&self) -> usize {
        (3 * self.width / CA_REDUCTION).max(1)
    }
}

pub fn init_mfafm(
    store: &mut ParamStore,
    rng: &mut SeededRng,
    pre: &str,
    d: MfafmDims,
) -> Result<()> {
    let m = d.width;
    add_conv(
        store,
        rng,
        &format!("{pre}.b3"),
        d.x,
        m,
        3,
        1,
        Init::Uniform,
    )?;
    add_conv(
        store,
        rng,
        &format!("{pre}.b5"),
        d.skip1,
        m,
        5,
        1,
        Init::Uniform,
    )?;
    add_conv(
        store,
        rng,
        &format!("{pre}.b7"),
        d.skip2,
        m,
        7,
        1,
        Init::Uniform,
    )?;
    add_conv(
        store,
        rng,
        &format!("{pre}.ca_reduce"),
        3 * m,
        d.reduced(),
        1,
        1,
        Init::Uniform,
    )?;
    add_conv(
        store,
        rng,
        &format!("{pre}.ca_expand"),
        d.reduced(),
        3 * m,
        1,
        1,
        Init::Uniform,
    )?;
    add_conv(store, rng, &format!("{pre}.sa"), 2, 1, 7, 1, Init::Uniform)?;
    add_conv(
        store,
        rng,
        &format!("{pre}.proj"),
        3 * m,
        d.out,
        1,
        1,
        Init::Uniform,
    )?;
    add_conv(
        store,
        rng,
        &format!("{pre}.res"),
        d.x,
        d.out,
        1,
        1,
        Init::Uniform,
    )
}

/// Concatenated multi-scale branches before gating.
pub fn mfafm_concat<T: Scalar>(
    x: &Var<T>,
    skip1: &Var<T>,
    skip2: &Var<T>,
    p: &Bound<T>,
    pre: &str,
) -> Result<Var<T>> {
    let hw = |v: &Var<T>| [v.dims()[0], v.dims()[2], v.dims()[3]];
    if hw(x) != hw(skip1) || hw(x) != hw(skip2) {
        return Err(Error::shape(
            "mfafm",
            format!("{:?}, {:?}, {:?}", x.dims(), skip1.dims(), skip2.dims()),
        ));
    }
    let a = conv(p, &format!("{pre}.b3"), x, ConvGeom::same(3, 1))?;
    let b = conv(p, &format!("{pre}.b5"), skip1, ConvGeom::same(5, 1))?;
    let c = conv(p, &format!("{pre}.b7"), skip2, ConvGeom::same(7, 1))?;
    ops::concat_channels(&[a, b, c])
}

pub fn channel_gate<T: Scalar>(x: &Var<T>, p: &Bound<T>, pre: &str) -> Result<Var<T>> {
    let g = conv(
        p,
        &format!("{pre}.ca_reduce"),
        &ops::mean_hw(x),
        ConvGeom::same(1, 1),
    )?;
    let g = conv(
        p,
        &format!("{pre}.ca_expand"),
        &ops::relu(&g),
        ConvGeom::same(1, 1),
    )?;
    Ok(ops::sigmoid(&g))
}

pub fn spatial_gate<T: Scalar>(x: &Var<T>, p: &Bound<T>, pre: &str) -> Result<Var<T>> {
    let s = ops::concat_channels(&[ops::mean_c(x), ops::max_c(x)])?;
    let s = conv(p, &format!("{pre}.sa"), &s, ConvGeom::same(7, 1))?;
    Ok(ops::sigmoid(&s))
}

/// `skip2` must already be resized to the spatial size of `x`.
pub fn mfafm_forward<T: Scalar>(
    x: &Var<T>,
    skip1: &Var<T>,
    skip2: &Var<T>,
    p: &Bound<T>,
    pre: &str,
) -> Result<Var<T>> {
    let cat = mfafm_concat(x, skip1, skip2, p, pre)?;
    let xca = ops::mul(&cat, &channel_gate(&cat, p, pre)?)?;
    let xsa = ops::mul(&xca, &spatial_gate(&xca, p, pre)?)?;
    let fused = conv(p, &format!("{pre}.proj"), &xsa, ConvGeom::same(1, 1))?;
    let res = conv(p, &format!("{pre}.res"), x, ConvGeom::same(1, 1))?;
    ops::add(&fused, &res)
}

pub fn mfafm_cost(d: MfafmDims, h: usize, w: usize) -> (u64, u64) {
    let m = d.width;
    let r = d.reduced();
    let parts = [
        conv_cost(d.x, m, 3, 1, h, w),
        conv_cost(d.skip1, m, 5, 1, h, w),
        conv_cost(d.skip2, m, 7, 1, h, w),
        conv_cost(3 * m, r, 1, 1, 1, 1),
        conv_cost(r, 3 * m, 1, 1, 1, 1),
        conv_cost(2, 1, 7, 1, h, w),
        conv_cost(3 * m, d.out, 1, 1, h, w),
        conv_cost(d.x, d.out, 1, 1, h, w),
    ];
    parts
        .iter()
        .fold((0, 0), |(p, mm), &(dp, dm)| (p + dp, mm + dm))
}

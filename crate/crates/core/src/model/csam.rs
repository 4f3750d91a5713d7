//! Color-calibrated self-supervised attention module (CSAM): the decoder's
//! upsampling bridge.

use crate::autodiff::{ops, Var};
use crate::error::Result;
use crate::params::{Bound, ParamStore};
use crate::rng::SeededRng;
use crate::tensor::kernels::ConvGeom;
use crate::tensor::{Scalar, Tensor};

use super::layers::{add_conv, add_norm, conv, conv_cost, norm, Init};

pub struct CsamOutput<T: Scalar> {
    pub features: Var<T>,
    /// RGB estimate produced by the color matrix, at the upsampled size.
    pub fake: Var<T>,
    /// Channel-to-channel attention, (b, 1, c_out, c_out).
    pub attention: Var<T>,
}

pub fn init_csam(
    store: &mut ParamStore,
    rng: &mut SeededRng,
    pre: &str,
    ci: usize,
    co: usize,
) -> Result<()> {
    add_conv(
        store,
        rng,
        &format!("{pre}.up"),
        ci,
        4 * co,
        1,
        1,
        Init::Uniform,
    )?;
    add_conv(
        store,
        rng,
        &format!("{pre}.color"),
        co,
        3,
        1,
        1,
        Init::Uniform,
    )?;
    add_conv(
        store,
        rng,
        &format!("{pre}.feedback"),
        3,
        co,
        1,
        1,
        Init::Uniform,
    )?;
    add_norm(store, &format!("{pre}.norm"), co)?;
    for n in ["q", "k", "v"] {
        add_conv(
            store,
            rng,
            &format!("{pre}.{n}"),
            co,
            co,
            1,
            1,
            Init::Uniform,
        )?;
    }
    store.insert(format!("{pre}.alpha"), Tensor::scalar(1.0))?;
    add_conv(
        store,
        rng,
        &format!("{pre}.local"),
        co,
        co,
        3,
        co,
        Init::Uniform,
    )
}

/// 1×1 conv to 4·c_out channels followed by PixelShuffle(2).
pub fn upsample<T: Scalar>(x: &Var<T>, p: &Bound<T>, pre: &str) -> Result<Var<T>> {
    let up = conv(p, &format!("{pre}.up"), x, ConvGeom::same(1, 1))?;
    ops::pixel_shuffle(&up, 2)
}

pub fn csam_forward<T: Scalar>(x: &Var<T>, p: &Bound<T>, pre: &str) -> Result<CsamOutput<T>> {
    let xu = upsample(x, p, pre)?;
    let [b, co, h, w] = xu.dims();
    let fake = conv(p, &format!("{pre}.color"), &xu, ConvGeom::same(1, 1))?;
    let g = ops::add(
        &xu,
        &conv(p, &format!("{pre}.feedback"), &fake, ConvGeom::same(1, 1))?,
    )?;
    let g = norm(p, &format!("{pre}.norm"), &g)?;
    let proj = |n: &str| conv(p, &format!("{pre}.{n}"), &g, ConvGeom::same(1, 1));
    let (q, k, v) = (proj("q")?, proj("k")?, proj("v")?);
    let flat = [b, 1, co, h * w];
    let logits = ops::matmul(
        &ops::reshape(&q, flat)?,
        false,
        &ops::reshape(&k, flat)?,
        true,
    )?;
    let logits = ops::mul(&logits, p.get(&format!("{pre}.alpha"))?)?;
    let attention = ops::softmax(&logits, 3, 1.0 / (co as f64).sqrt())?;
    let av = ops::matmul(&attention, false, &ops::reshape(&v, flat)?, false)?;
    let local = conv(p, &format!("{pre}.local"), &v, ConvGeom::same(3, co))?;
    let features = ops::add(&ops::reshape(&av, [b, co, h, w])?, &local)?;
    Ok(CsamOutput {
        features,
        fake,
        attention,
    })
}

/// (params, MACs) of a CSAM whose output map is `h`×`w`.
pub fn csam_cost(ci: usize, co: usize, h: usize, w: usize) -> (u64, u64) {
    let parts = [
        conv_cost(ci, 4 * co, 1, 1, h / 2, w / 2),
        conv_cost(co, 3, 1, 1, h, w),
        conv_cost(3, co, 1, 1, h, w),
        conv_cost(co, co, 1, 1, h, w),
        conv_cost(co, co, 1, 1, h, w),
        conv_cost(co, co, 1, 1, h, w),
        conv_cost(co, co, 3, co, h, w),
    ];
    let attn = 2 * (co * co * h * w) as u64;
    let extra = 2 * co as u64 + 1;
    parts
        .iter()
        .fold((extra, attn), |(p, m), &(dp, dm)| (p + dp, m + dm))
}

pub fn upsample_cost(ci: usize, co: usize, h: usize, w: usize) -> (u64, u64) {
    conv_cost(ci, 4 * co, 1, 1, h / 2, w / 2)
}

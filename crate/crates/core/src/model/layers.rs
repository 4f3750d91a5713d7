//! Parameter initialisation and the small building blocks shared by the
//! model components.

use crate::autodiff::{ops, Var};
use crate::error::Result;
use crate::params::{Bound, ParamStore};
use crate::rng::SeededRng;
use crate::tensor::kernels::ConvGeom;
use crate::tensor::{Scalar, Tensor};

pub const LN_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// Uniform in ±1/sqrt(fan_in).
    Uniform,
    Zero,
    /// Depthwise identity: centre tap 1, all else 0.
    Identity,
}

/// Register `{name}.weight` of dims (co, ci/groups, k, k) and a zero
/// `{name}.bias`.
pub fn add_conv(
    store: &mut ParamStore,
    rng: &mut SeededRng,
    name: &str,
    ci: usize,
    co: usize,
    k: usize,
    groups: usize,
    init: Init,
) -> Result<()> {
    let cig = ci / groups;
    let dims = [co, cig, k, k];
    let w = match init {
        Init::Zero => Tensor::zeros(dims),
        Init::Identity => Tensor::from_fn(
            dims,
            |[_, _, y, x]| {
                if y == k / 2 && x == k / 2 {
                    1.0
                } else {
                    0.0
                }
            },
        ),
        Init::Uniform => {
            let bound = 1.0 / ((cig * k * k) as f64).sqrt();
            Tensor::from_fn(dims, |_| rng.uniform_range(-bound, bound) as f32)
        }
    };
    store.insert(format!("{name}.weight"), w)?;
    store.insert(format!("{name}.bias"), Tensor::zeros([1, co, 1, 1]))
}

pub fn add_norm(store: &mut ParamStore, name: &str, c: usize) -> Result<()> {
    store.insert(format!("{name}.gamma"), Tensor::ones([1, c, 1, 1]))?;
    store.insert(format!("{name}.beta"), Tensor::zeros([1, c, 1, 1]))
}

pub fn add_normal(
    store: &mut ParamStore,
    rng: &mut SeededRng,
    name: &str,
    dims: [usize; 4],
    std: f64,
) -> Result<()> {
    store.insert(name, Tensor::from_fn(dims, |_| rng.normal(0.0, std) as f32))
}

pub fn conv<T: Scalar>(p: &Bound<T>, name: &str, x: &Var<T>, geom: ConvGeom) -> Result<Var<T>> {
    let w = p.get(&format!("{name}.weight"))?;
    let b = p.get(&format!("{name}.bias"))?;
    ops::conv2d(x, w, Some(b), geom)
}

pub fn norm<T: Scalar>(p: &Bound<T>, name: &str, x: &Var<T>) -> Result<Var<T>> {
    let g = p.get(&format!("{name}.gamma"))?;
    let b = p.get(&format!("{name}.beta"))?;
    ops::layer_norm(x, g, b, LN_EPS)
}

/// Parameter and multiply-accumulate count of one convolution.
pub fn conv_cost(
    ci: usize,
    co: usize,
    k: usize,
    groups: usize,
    oh: usize,
    ow: usize,
) -> (u64, u64) {
    let w = (co * (ci / groups) * k * k) as u64;
    (w + co as u64, w * (oh * ow) as u64)
}

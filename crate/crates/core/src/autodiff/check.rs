//! Finite-difference verification of reverse-mode gradients, run in double
//! precision.

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::params::{Bound, ParamStore};
use crate::rng::SeededRng;
use crate::tensor::{Scalar, Tensor};

use super::Var;

/// A deterministic scalar-valued graph over named parameters. Generic over
/// the element type so the same builder runs in `f32` and `f64`.
pub trait GraphFn {
    fn build<T: Scalar>(&self, params: &Bound<T>) -> Result<Var<T>>;
}

#[derive(Clone, Copy, Debug)]
pub struct GradCheckConfig {
    pub step: f64,
    pub tol: f64,
    /// Elements checked per parameter; `None` checks all of them.
    pub samples_per_param: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-4,
            tol: 1e-4,
            samples_per_param: Some(16),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradSample {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub checked: usize,
    /// Largest relative errors first.
    pub worst: Vec<GradSample>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.worst.first().map_or(0.0, |s| s.rel_err)
    }
}

const WORST_KEPT: usize = 8;

fn eval<G: GraphFn>(f: &G, tensors: &IndexMap<String, Tensor<f64>>) -> Result<f64> {
    let bound = Bound::from_tensors(tensors.clone(), false);
    let out = f.build(&bound)?;
    if out.value().len() != 1 {
        return Err(Error::shape(
            "grad_check",
            format!("output {:?} is not scalar", out.dims()),
        ));
    }
    Ok(out.value().item())
}

/// Compare analytic gradients to central differences. Fails with the worst
/// offending element if any relative error exceeds `cfg.tol`.
pub fn grad_check<G: GraphFn>(
    f: &G,
    params: &ParamStore,
    cfg: GradCheckConfig,
) -> Result<GradCheckReport> {
    if !(cfg.step > 0.0 && cfg.step <= 1e-2) {
        return Err(Error::Invalid(format!(
            "step {} outside (0, 1e-2]",
            cfg.step
        )));
    }
    let base: IndexMap<String, Tensor<f64>> = params
        .iter()
        .map(|(k, t)| (k.to_string(), t.cast()))
        .collect();
    let bound = Bound::from_tensors(base.clone(), true);
    let out = f.build(&bound)?;
    out.backward();
    let grads = bound.grads();

    let mut rng = SeededRng::new(cfg.seed);
    let mut samples = Vec::new();
    for (name, t) in &base {
        let n = t.len();
        let idx: Vec<usize> = match cfg.samples_per_param {
            Some(k) if k < n => (0..k).map(|_| rng.below(n)).collect(),
            _ => (0..n).collect(),
        };
        for i in idx {
            let mut probe = base.clone();
            let mut bump = |delta: f64| -> Result<f64> {
                let mut d = t.to_vec();
                d[i] += delta;
                probe.insert(name.clone(), Tensor::new(t.dims(), d)?);
                eval(f, &probe)
            };
            let numeric = (bump(cfg.step)? - bump(-cfg.step)?) / (2.0 * cfg.step);
            let analytic = grads[name].data()[i];
            let rel_err = (analytic - numeric).abs() / analytic.abs().max(1.0);
            samples.push(GradSample {
                param: name.clone(),
                index: i,
                analytic,
                numeric,
                rel_err,
            });
        }
    }
    let checked = samples.len();
    samples.sort_by(|a, b| b.rel_err.total_cmp(&a.rel_err));
    samples.truncate(WORST_KEPT);
    if let Some(w) = samples.first().filter(|w| !(w.rel_err <= cfg.tol)) {
        return Err(Error::GradCheck {
            param: w.param.clone(),
            index: w.index,
            analytic: w.analytic,
            numeric: w.numeric,
            rel_err: w.rel_err,
        });
    }
    Ok(GradCheckReport {
        checked,
        worst: samples,
    })
}

/// One step of a [`RandomGraph`].
#[derive(Clone, Debug, PartialEq)]
pub enum RandomOp {
    Conv {
        k: usize,
        depthwise: bool,
        out: usize,
    },
    StridedConv,
    LayerNorm,
    Softmax {
        axis: usize,
        scale: f64,
    },
    Resize {
        h: usize,
        w: usize,
    },
    PixelShuffle,
    Gelu,
    Sigmoid,
    Square,
    MulParam,
    AddParam,
    ChannelMatmul,
    Permute([usize; 4]),
    ChannelShuffle,
    GlobalPool,
    AvgPool,
    ConcatSlice,
}

/// A seeded random composition of smooth operators ending in a weighted
/// sum. Kinked operators (relu, clamp, max) are excluded so central
/// differences stay accurate.
#[derive(Clone, Debug)]
pub struct RandomGraph {
    pub ops: Vec<RandomOp>,
    pub weights: Tensor<f64>,
}

impl RandomGraph {
    /// Generate a graph and its parameters.
    pub fn generate(seed: u64) -> Result<(Self, ParamStore)> {
        let mut rng = SeededRng::new(seed).split("random-graph");
        let mut store = ParamStore::new();
        let mut dims = [1, 4, 6, 6];
        let normal = |rng: &mut SeededRng, d: [usize; 4]| {
            Tensor::from_fn(d, |_| rng.normal(0.0, 0.5) as f32)
        };
        store.insert("x", normal(&mut rng, dims))?;
        let n_ops = 2 + rng.below(5);
        let mut ops = Vec::with_capacity(n_ops);
        for i in 0..n_ops {
            let [_, c, h, w] = dims;
            let op = loop {
                let cand = match rng.below(18) {
                    0 | 1 => {
                        let k = [1, 3, 5][rng.below(3)];
                        let depthwise = rng.below(2) == 0;
                        let out = if depthwise {
                            c
                        } else {
                            [2, 4, 8][rng.below(3)]
                        };
                        RandomOp::Conv { k, depthwise, out }
                    }
                    2 => RandomOp::StridedConv,
                    3 => RandomOp::LayerNorm,
                    4 => RandomOp::Softmax {
                        axis: 1 + rng.below(3),
                        scale: rng.uniform_range(0.2, 2.0),
                    },
                    5 => RandomOp::Resize {
                        h: 2 + rng.below(8),
                        w: 2 + rng.below(8),
                    },
                    6 => RandomOp::PixelShuffle,
                    7 => RandomOp::Gelu,
                    8 => RandomOp::Sigmoid,
                    9 => RandomOp::Square,
                    10 => RandomOp::MulParam,
                    11 => RandomOp::AddParam,
                    12 => RandomOp::ChannelMatmul,
                    13 => {
                        let mut p = [0, 1, 2, 3];
                        rng.shuffle(&mut p[1..]);
                        RandomOp::Permute(p)
                    }
                    14 => RandomOp::ChannelShuffle,
                    15 => RandomOp::GlobalPool,
                    16 => RandomOp::AvgPool,
                    _ => RandomOp::ConcatSlice,
                };
                let ok = match &cand {
                    RandomOp::Conv { k, .. } => h + 2 * (k / 2) >= *k,
                    RandomOp::StridedConv | RandomOp::AvgPool => h >= 2 && w >= 2,
                    RandomOp::PixelShuffle => c % 4 == 0 && h * w * 4 <= 256,
                    RandomOp::ChannelShuffle => c % 2 == 0,
                    RandomOp::GlobalPool => i + 1 == n_ops,
                    RandomOp::Permute(_) => c * h * w <= 512,
                    _ => true,
                };
                if ok {
                    break cand;
                }
            };
            let pre = format!("op{i}");
            dims = match &op {
                RandomOp::Conv { k, depthwise, out } => {
                    let g = if *depthwise { c } else { 1 };
                    store.insert(format!("{pre}.w"), normal(&mut rng, [*out, c / g, *k, *k]))?;
                    store.insert(format!("{pre}.b"), normal(&mut rng, [1, *out, 1, 1]))?;
                    [1, *out, h, w]
                }
                RandomOp::StridedConv => {
                    store.insert(format!("{pre}.w"), normal(&mut rng, [c, c, 3, 3]))?;
                    [1, c, (h - 1) / 2 + 1, (w - 1) / 2 + 1]
                }
                RandomOp::LayerNorm | RandomOp::MulParam | RandomOp::AddParam => {
                    store.insert(format!("{pre}.a"), normal(&mut rng, [1, c, 1, 1]))?;
                    if op == RandomOp::LayerNorm {
                        store.insert(format!("{pre}.b"), normal(&mut rng, [1, c, 1, 1]))?;
                    }
                    dims
                }
                RandomOp::ChannelMatmul => {
                    store.insert(format!("{pre}.a"), normal(&mut rng, [1, 1, c, c]))?;
                    dims
                }
                RandomOp::Resize { h, w } => [1, c, *h, *w],
                RandomOp::PixelShuffle => [1, c / 4, h * 2, w * 2],
                RandomOp::Permute(p) => [dims[p[0]], dims[p[1]], dims[p[2]], dims[p[3]]],
                RandomOp::GlobalPool => [1, c, 1, 1],
                RandomOp::AvgPool => [1, c, h / 2, w / 2],
                _ => dims,
            };
            ops.push(op);
        }
        let weights = Tensor::from_fn(dims, |_| rng.normal(0.0, 1.0));
        Ok((Self { ops, weights }, store))
    }
}

impl GraphFn for RandomGraph {
    fn build<T: Scalar>(&self, p: &Bound<T>) -> Result<Var<T>> {
        use super::ops;
        use crate::tensor::kernels::ConvGeom;
        let mut x = p.get("x")?.clone();
        for (i, op) in self.ops.iter().enumerate() {
            let name = |s: &str| format!("op{i}.{s}");
            let [b, c, h, w] = x.dims();
            x = match op {
                RandomOp::Conv { k, depthwise, .. } => {
                    let g = if *depthwise { c } else { 1 };
                    ops::conv2d(
                        &x,
                        p.get(&name("w"))?,
                        Some(p.get(&name("b"))?),
                        ConvGeom::same(*k, g),
                    )?
                }
                RandomOp::StridedConv => {
                    ops::conv2d(&x, p.get(&name("w"))?, None, ConvGeom::new(2, 1, 1))?
                }
                RandomOp::LayerNorm => {
                    ops::layer_norm(&x, p.get(&name("a"))?, p.get(&name("b"))?, 1e-5)?
                }
                RandomOp::Softmax { axis, scale } => ops::softmax(&x, *axis, *scale)?,
                RandomOp::Resize { h, w } => ops::resize_bilinear(&x, *h, *w)?,
                RandomOp::PixelShuffle => ops::pixel_shuffle(&x, 2)?,
                RandomOp::Gelu => ops::gelu(&x),
                RandomOp::Sigmoid => ops::sigmoid(&x),
                RandomOp::Square => ops::square(&x),
                RandomOp::MulParam => ops::mul(&x, p.get(&name("a"))?)?,
                RandomOp::AddParam => ops::add(&x, p.get(&name("a"))?)?,
                RandomOp::ChannelMatmul => {
                    let flat = ops::reshape(&x, [b, 1, c, h * w])?;
                    let y = ops::matmul(p.get(&name("a"))?, false, &flat, false)?;
                    ops::reshape(&y, [b, c, h, w])?
                }
                RandomOp::Permute(perm) => ops::permute(&x, *perm)?,
                RandomOp::ChannelShuffle => ops::channel_shuffle(&x, 2)?,
                RandomOp::GlobalPool => ops::mean_hw(&x),
                RandomOp::AvgPool => ops::avg_pool2(&x)?,
                RandomOp::ConcatSlice => {
                    let both = ops::concat_channels(&[x.clone(), ops::scale(&x, -0.5)])?;
                    let shifted = ops::slice_channels(&both, c / 2, c)?;
                    ops::add(&x, &shifted)?
                }
            };
        }
        let wts = Var::constant(self.weights.cast::<T>());
        Ok(ops::sum(&ops::mul(&x, &wts)?))
    }
}

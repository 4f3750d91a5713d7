//! Hybrid restoration objective: pixel L2, a feature-space term and
//! supervision of the colour-matrix estimates.

use crate::autodiff::{ops, Var};
use crate::error::{Error, Result};
use crate::params::{Bound, ParamStore};
use crate::rng::SeededRng;
use crate::tensor::kernels::ConvGeom;
use crate::tensor::{Scalar, Tensor};

/// Mean squared error over all elements.
pub fn l2_loss<T: Scalar>(pred: &Var<T>, target: &Var<T>) -> Result<Var<T>> {
    if pred.dims() != target.dims() {
        return Err(Error::shape(
            "l2_loss",
            format!("{:?} vs {:?}", pred.dims(), target.dims()),
        ));
    }
    Ok(ops::mean(&ops::square(&ops::sub(pred, target)?)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Layer {
    Conv(usize),
    Relu,
    Pool,
}

/// VGG-shaped layer list; indices 3, 8 and 15 are the relu outputs at the
/// end of the first three blocks.
const LAYOUT: [Layer; 16] = [
    Layer::Conv(0),
    Layer::Relu,
    Layer::Conv(1),
    Layer::Relu,
    Layer::Pool,
    Layer::Conv(2),
    Layer::Relu,
    Layer::Conv(3),
    Layer::Relu,
    Layer::Pool,
    Layer::Conv(4),
    Layer::Relu,
    Layer::Conv(5),
    Layer::Relu,
    Layer::Conv(6),
    Layer::Relu,
];
const CONV_CHANNELS: [(usize, usize); 7] = [
    (3, 8),
    (8, 8),
    (8, 16),
    (16, 16),
    (16, 32),
    (32, 32),
    (32, 32),
];
pub const TAPS: [usize; 3] = [3, 8, 15];

/// Fixed random convolution stack standing in for a pretrained backbone.
#[derive(Clone, Debug)]
pub struct ConvStack {
    params: ParamStore,
}

impl ConvStack {
    pub fn new(seed: u64) -> Result<Self> {
        let mut rng = SeededRng::new(seed).split("perceptual-stack");
        let mut params = ParamStore::new();
        for (i, &(ci, co)) in CONV_CHANNELS.iter().enumerate() {
            // He-style scale keeps activations from vanishing through the stack.
            let std = (2.0 / (ci * 9) as f64).sqrt();
            params.insert(
                format!("conv{i}.weight"),
                Tensor::from_fn([co, ci, 3, 3], |_| rng.normal(0.0, std) as f32),
            )?;
            params.insert(format!("conv{i}.bias"), Tensor::zeros([1, co, 1, 1]))?;
        }
        Ok(Self { params })
    }

    pub fn features<T: Scalar>(&self, x: &Var<T>) -> Result<Vec<Var<T>>> {
        let p = Bound::<T>::frozen(&self.params);
        let mut h = x.clone();
        let mut taps = Vec::with_capacity(TAPS.len());
        for (i, layer) in LAYOUT.iter().enumerate() {
            h = match *layer {
                Layer::Conv(j) => {
                    crate::model::layers::conv(&p, &format!("conv{j}"), &h, ConvGeom::same(3, 1))?
                }
                Layer::Relu => ops::relu(&h),
                Layer::Pool => ops::avg_pool2(&h)?,
            };
            if TAPS.contains(&i) {
                taps.push(h.clone());
            }
        }
        Ok(taps)
    }
}

#[derive(Clone, Debug, Default)]
pub enum Extractor {
    /// The input itself is the only feature map.
    #[default]
    Identity,
    ConvStack(ConvStack),
}

impl Extractor {
    pub fn conv_stack(seed: u64) -> Result<Self> {
        Ok(Extractor::ConvStack(ConvStack::new(seed)?))
    }

    pub fn features<T: Scalar>(&self, x: &Var<T>) -> Result<Vec<Var<T>>> {
        match self {
            Extractor::Identity => Ok(vec![x.clone()]),
            Extractor::ConvStack(s) => s.features(x),
        }
    }
}

/// Sum over feature taps of the L2 distance between feature maps.
pub fn perceptual_loss<T: Scalar>(
    pred: &Var<T>,
    target: &Var<T>,
    extractor: &Extractor,
) -> Result<Var<T>> {
    let fp = extractor.features(pred)?;
    let ft = extractor.features(target)?;
    let mut terms = fp.iter().zip(&ft).map(|(a, b)| l2_loss(a, b));
    let first = terms
        .next()
        .ok_or_else(|| Error::Invalid("extractor produced no feature maps".into()))??;
    terms.try_fold(first, |acc, t| ops::add(&acc, &t?))
}

#[derive(Clone, Debug)]
pub struct LossConfig {
    pub lambda: f64,
    pub extractor: Extractor,
    pub fake_weight: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda: 0.04,
            extractor: Extractor::Identity,
            fake_weight: 0.1,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.fake_weight >= 0.0) {
            return Err(Error::Invalid(format!(
                "loss weights must be non-negative (lambda {}, fake {})",
                self.lambda, self.fake_weight
            )));
        }
        Ok(())
    }
}

/// `l2 + λ·perceptual + w·Σ l2(fake, target resized to the fake)`.
pub fn total_loss<T: Scalar>(
    pred: &Var<T>,
    target: &Var<T>,
    fakes: &[Var<T>],
    cfg: &LossConfig,
) -> Result<Var<T>> {
    cfg.validate()?;
    let mut total = l2_loss(pred, target)?;
    if cfg.lambda > 0.0 {
        let perc = perceptual_loss(pred, target, &cfg.extractor)?;
        total = ops::add(&total, &ops::scale(&perc, cfg.lambda))?;
    }
    if cfg.fake_weight > 0.0 {
        for fake in fakes {
            let [_, _, h, w] = fake.dims();
            let t = ops::resize_bilinear(target, h, w)?;
            total = ops::add(&total, &ops::scale(&l2_loss(fake, &t)?, cfg.fake_weight))?;
        }
    }
    Ok(total)
}

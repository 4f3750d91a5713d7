//! U-shaped MCAF-Net assembly.

use crate::autodiff::{ops, Var};
use crate::error::{Error, Result};
use crate::params::{Bound, ParamStore};
use crate::rng::SeededRng;
use crate::tensor::kernels::ConvGeom;
use crate::tensor::{Scalar, Tensor};

use super::config::ModelConfig;
use super::csam::{csam_forward, init_csam, upsample};
use super::layers::{add_conv, conv, Init};
use super::mfafm::{init_mfafm, mfafm_forward, MfafmDims};
use super::mfib::{init_stage, stage_forward};

pub struct NetOutput<T: Scalar> {
    /// Restored image, clamped to [0, 1].
    pub dehazed: Var<T>,
    /// Color-matrix estimates of the two bridges, at half and full size.
    pub fakes: Vec<Var<T>>,
    pub attention: Vec<Var<T>>,
}

pub(crate) fn fusion_dims(cfg: &ModelConfig) -> [MfafmDims; 2] {
    let [c1, c2, c3, c4, c5] = cfg.embed_dims;
    let width = cfg.fusion_width();
    [
        MfafmDims {
            x: c4,
            skip1: c2,
            skip2: c3,
            width,
            out: c4,
        },
        MfafmDims {
            x: c5,
            skip1: c1,
            skip2: c2,
            width,
            out: c5,
        },
    ]
}

/// Build a freshly initialised parameter set. Residual feed-forward outputs
/// and the output head start at zero, so the untrained network returns
/// `clamp(input)`.
pub fn init_params(cfg: &ModelConfig, seed: u64) -> Result<ParamStore> {
    cfg.validate()?;
    let mut rng = SeededRng::new(seed).split("mcafnet-init");
    let rng = &mut rng;
    let s = &mut ParamStore::new();
    let [c1, c2, c3, c4, c5] = cfg.embed_dims;
    let d = cfg.depths;
    let fuse = fusion_dims(cfg);
    add_conv(s, rng, "embed", cfg.in_channels, c1, 3, 1, Init::Uniform)?;
    init_stage(s, rng, "stage1", c1, d[0], cfg)?;
    add_conv(s, rng, "down1", c1, c2, 3, 1, Init::Uniform)?;
    init_stage(s, rng, "stage2", c2, d[1], cfg)?;
    add_conv(s, rng, "down2", c2, c3, 3, 1, Init::Uniform)?;
    init_stage(s, rng, "stage3", c3, d[2], cfg)?;
    for (i, (ci, co, stage, depth)) in [(c3, c4, "stage4", d[3]), (c4, c5, "stage5", d[4])]
        .into_iter()
        .enumerate()
    {
        let bridge = format!("bridge{}", i + 1);
        if cfg.use_csam {
            init_csam(s, rng, &bridge, ci, co)?;
        } else {
            add_conv(
                s,
                rng,
                &format!("{bridge}.up"),
                ci,
                4 * co,
                1,
                1,
                Init::Uniform,
            )?;
        }
        if cfg.use_mfafm {
            init_mfafm(s, rng, &format!("fuse{}", i + 1), fuse[i])?;
        }
        init_stage(s, rng, stage, co, depth, cfg)?;
    }
    add_conv(s, rng, "head", c5, cfg.out_channels, 3, 1, Init::Zero)?;
    Ok(std::mem::take(s))
}

pub fn mcafnet_forward<T: Scalar>(
    img: &Var<T>,
    p: &Bound<T>,
    cfg: &ModelConfig,
) -> Result<NetOutput<T>> {
    let [_, c, h, w] = img.dims();
    if c != cfg.in_channels || h % 4 != 0 || w % 4 != 0 || h == 0 || w == 0 {
        return Err(Error::shape(
            "mcafnet",
            format!(
                "input {:?} needs {} channels and sides divisible by 4",
                img.dims(),
                cfg.in_channels
            ),
        ));
    }
    let d = cfg.depths;
    let down = ConvGeom::new(2, 1, 1);
    let e = conv(p, "embed", img, ConvGeom::same(3, 1))?;
    let s1 = stage_forward(&e, p, "stage1", d[0], cfg)?;
    let s2 = stage_forward(&conv(p, "down1", &s1, down)?, p, "stage2", d[1], cfg)?;
    let s3 = stage_forward(&conv(p, "down2", &s2, down)?, p, "stage3", d[2], cfg)?;

    let mut fakes = Vec::new();
    let mut attention = Vec::new();
    let mut bridge = |x: &Var<T>, pre: &str| -> Result<Var<T>> {
        if cfg.use_csam {
            let o = csam_forward(x, p, pre)?;
            fakes.push(o.fake);
            attention.push(o.attention);
            Ok(o.features)
        } else {
            upsample(x, p, pre)
        }
    };
    let fuse = |x: &Var<T>, skip1: &Var<T>, deeper: &Var<T>, pre: &str| -> Result<Var<T>> {
        if cfg.use_mfafm {
            let [_, _, fh, fw] = x.dims();
            let skip2 = ops::resize_bilinear(deeper, fh, fw)?;
            mfafm_forward(x, skip1, &skip2, p, pre)
        } else {
            ops::add(x, skip1)
        }
    };

    let u4 = bridge(&s3, "bridge1")?;
    let s4 = stage_forward(&fuse(&u4, &s2, &s3, "fuse1")?, p, "stage4", d[3], cfg)?;
    let u5 = bridge(&s4, "bridge2")?;
    let s5 = stage_forward(&fuse(&u5, &s1, &s2, "fuse2")?, p, "stage5", d[4], cfg)?;
    let out = conv(p, "head", &s5, ConvGeom::same(3, 1))?;
    let dehazed = ops::clamp(&ops::add(img, &out)?, 0.0, 1.0);
    Ok(NetOutput {
        dehazed,
        fakes,
        attention,
    })
}

/// A configuration paired with its parameters.
#[derive(Clone, Debug)]
pub struct McafNet {
    pub cfg: ModelConfig,
    pub params: ParamStore,
}

impl McafNet {
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        let params = init_params(&cfg, seed)?;
        Ok(Self { cfg, params })
    }

    /// Inference without recording a graph. Input and output are
    /// (b, 3, h, w) with values in [0, 1].
    pub fn infer(&self, img: &Tensor) -> Result<Tensor> {
        let p = Bound::<f32>::frozen(&self.params);
        let out = mcafnet_forward(&Var::constant(img.clone()), &p, &self.cfg)?;
        out.dehazed.value().clone().ensure_finite("mcafnet")
    }
}

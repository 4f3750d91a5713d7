//! Closed-form parameter and multiply-accumulate counts.
//!
//! Only convolutions and matrix products are counted; everything else is
//! treated as free.

use crate::error::{Error, Result};

use super::config::ModelConfig;
use super::csam::{csam_cost, upsample_cost};
use super::layers::conv_cost;
use super::mfafm::mfafm_cost;
use super::mfib::stage_cost;
use super::net::fusion_dims;

/// FLOPs charged per multiply-accumulate.
pub const FLOPS_PER_MAC: u64 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelCost {
    pub params: u64,
    pub macs: u64,
    pub flops: u64,
}

/// Learnable elements and forward cost at an `h`×`w` input.
pub fn count_params_flops(cfg: &ModelConfig, h: usize, w: usize) -> Result<ModelCost> {
    cfg.validate()?;
    if h % 4 != 0 || w % 4 != 0 || h == 0 || w == 0 {
        return Err(Error::shape(
            "count_params_flops",
            format!("{h}x{w} not divisible by 4"),
        ));
    }
    let [c1, c2, c3, c4, c5] = cfg.embed_dims;
    let d = cfg.depths;
    let (h2, w2, h4, w4) = (h / 2, w / 2, h / 4, w / 4);
    let fuse = fusion_dims(cfg);
    let mut parts = vec![
        conv_cost(cfg.in_channels, c1, 3, 1, h, w),
        stage_cost(c1, h, w, d[0], cfg),
        conv_cost(c1, c2, 3, 1, h2, w2),
        stage_cost(c2, h2, w2, d[1], cfg),
        conv_cost(c2, c3, 3, 1, h4, w4),
        stage_cost(c3, h4, w4, d[2], cfg),
        stage_cost(c4, h2, w2, d[3], cfg),
        stage_cost(c5, h, w, d[4], cfg),
        conv_cost(c5, cfg.out_channels, 3, 1, h, w),
    ];
    for (ci, co, oh, ow) in [(c3, c4, h2, w2), (c4, c5, h, w)] {
        parts.push(if cfg.use_csam {
            csam_cost(ci, co, oh, ow)
        } else {
            upsample_cost(ci, co, oh, ow)
        });
    }
    if cfg.use_mfafm {
        parts.push(mfafm_cost(fuse[0], h2, w2));
        parts.push(mfafm_cost(fuse[1], h, w));
    }
    let (params, macs) = parts
        .iter()
        .fold((0, 0), |(p, m), &(dp, dm)| (p + dp, m + dm));
    Ok(ModelCost {
        params,
        macs,
        flops: macs * FLOPS_PER_MAC,
    })
}

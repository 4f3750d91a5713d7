//! Image-quality metrics.

pub mod ciede;
pub mod fullref;
pub mod niqe;

use serde::{Serialize, Serializer};

use crate::data::Image;
use crate::error::Result;

pub use ciede::{ciede2000, ciede2000_lab, mean_ciede2000, srgb_to_lab};
pub use fullref::{mse, psnr, psnr_from_mse, ssim, ssim_with, Grayscale};
pub use niqe::{niqe_fit, niqe_score, NiqeConfig, NiqeModel};

/// Serialise non-finite values as the strings `"inf"`, `"-inf"`, `"nan"`.
pub fn serialize_f64<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else if v.is_nan() {
        s.serialize_str("nan")
    } else if *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricReport {
    #[serde(serialize_with = "serialize_f64")]
    pub psnr: f64,
    pub mse: f64,
    pub ssim: f64,
    pub ciede2000: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub niqe: Option<f64>,
}

/// All full-reference metrics of `test` against `reference`; NIQE of
/// `test` when a model is supplied.
pub fn evaluate(reference: &Image, test: &Image, niqe: Option<&NiqeModel>) -> Result<MetricReport> {
    let m = mse(reference, test)?;
    Ok(MetricReport {
        psnr: psnr_from_mse(m, 1.0),
        mse: m,
        ssim: ssim(reference, test)?,
        ciede2000: mean_ciede2000(reference, test)?,
        niqe: niqe.map(|model| niqe_score(test, model)).transpose()?,
    })
}

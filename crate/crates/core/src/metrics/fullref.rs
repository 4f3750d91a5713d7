//! Full-reference metrics: MSE, PSNR and SSIM.

use crate::data::Image;
use crate::error::{Error, Result};

fn same_dims(a: &Image, b: &Image, op: &'static str) -> Result<()> {
    if (a.width(), a.height()) != (b.width(), b.height()) {
        return Err(Error::shape(
            op,
            format!(
                "{}x{} vs {}x{}",
                a.width(),
                a.height(),
                b.width(),
                b.height()
            ),
        ));
    }
    Ok(())
}

/// Mean squared error over all channels and pixels.
pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    same_dims(a, b, "mse")?;
    Ok(mse_slices(a.data(), b.data()))
}

pub fn mse_slices(a: &[f32], b: &[f32]) -> f64 {
    let s: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    s / a.len().max(1) as f64
}

/// `10·log10(peak² / mse)`, `+∞` when the inputs are identical.
pub fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

pub fn psnr(a: &Image, b: &Image, peak: f64) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?, peak))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Grayscale {
    /// Unweighted mean of R, G and B.
    #[default]
    Mean,
    /// ITU-R BT.601 luma weights.
    Luma,
}

impl Grayscale {
    pub fn convert(self, img: &Image) -> Vec<f64> {
        let w = match self {
            Grayscale::Mean => [1.0 / 3.0; 3],
            Grayscale::Luma => [0.299, 0.587, 0.114],
        };
        (0..img.pixels())
            .map(|i| (0..3).map(|c| w[c] * img.plane(c)[i] as f64).sum())
            .collect()
    }
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn gaussian_kernel() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as f64;
    let k: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-(i as f64 - r).powi(2) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable "valid" filtering: output is (h-10)×(w-10).
fn filter_valid(src: &[f64], w: usize, h: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (ow, oh) = (w + 1 - n, h + 1 - n);
    let mut tmp = vec![0.0; h * ow];
    for y in 0..h {
        let row = &src[y * w..][..w];
        for x in 0..ow {
            tmp[y * ow + x] = k.iter().zip(&row[x..x + n]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..n).map(|i| k[i] * tmp[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Mean SSIM of the grayscale images over all fully-contained 11×11
/// Gaussian windows, dynamic range 1.
pub fn ssim_with(a: &Image, b: &Image, gray: Grayscale) -> Result<f64> {
    same_dims(a, b, "ssim")?;
    let (w, h) = (a.width(), a.height());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::shape(
            "ssim",
            format!("{w}x{h} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"),
        ));
    }
    let (x, y) = (gray.convert(a), gray.convert(b));
    let k = gaussian_kernel();
    let prod = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(u, v)| u * v).collect::<Vec<_>>();
    let mx = filter_valid(&x, w, h, &k);
    let my = filter_valid(&y, w, h, &k);
    let sxx = filter_valid(&prod(&x, &x), w, h, &k);
    let syy = filter_valid(&prod(&y, &y), w, h, &k);
    let sxy = filter_valid(&prod(&x, &y), w, h, &k);
    let c1 = (SSIM_K1 * 1.0f64).powi(2);
    let c2 = (SSIM_K2 * 1.0f64).powi(2);
    let total: f64 = (0..mx.len())
        .map(|i| {
            let (ux, uy) = (mx[i], my[i]);
            let vx = sxx[i] - ux * ux;
            let vy = syy[i] - uy * uy;
            let cxy = sxy[i] - ux * uy;
            ((2.0 * ux * uy + c1) * (2.0 * cxy + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2))
        })
        .sum();
    Ok(total / mx.len() as f64)
}

pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    ssim_with(a, b, Grayscale::Mean)
}

//! NIQE: natural image quality evaluator.
//!
//! Patches of mean-subtracted contrast-normalised (MSCN) luminance are
//! summarised by generalised Gaussian fits at two scales. A pristine model
//! is the multivariate Gaussian of those features over sharp patches of a
//! corpus; an image's score is the distance between its own feature
//! Gaussian and the model.

use std::path::Path;
use std::sync::OnceLock;

use indexmap::IndexMap;
use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::ln_gamma;

use crate::data::Image;
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::weights;

pub const FEATURES: usize = 36;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NiqeConfig {
    pub patch: usize,
    /// Patches whose mean local deviation is below this fraction of the
    /// sharpest patch are excluded from the pristine fit.
    pub sharpness: f64,
    /// Relative diagonal loading applied when a covariance is singular.
    pub eps: f64,
}

impl Default for NiqeConfig {
    fn default() -> Self {
        Self {
            patch: 96,
            sharpness: 0.75,
            eps: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NiqeModel {
    pub mean: Vec<f64>,
    /// Row-major `FEATURES × FEATURES`.
    pub cov: Vec<f64>,
    pub patch: usize,
    pub eps: f64,
    /// Set when the pristine covariance needed diagonal loading.
    pub regularized: bool,
}

const WINDOW: usize = 7;
const WINDOW_SIGMA: f64 = 7.0 / 6.0;
const MSCN_C: f64 = 1.0;

fn window() -> &'static [f64] {
    static W: OnceLock<Vec<f64>> = OnceLock::new();
    W.get_or_init(|| {
        let r = (WINDOW / 2) as f64;
        let k: Vec<f64> = (0..WINDOW)
            .map(|i| (-(i as f64 - r).powi(2) / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA)).exp())
            .collect();
        let s: f64 = k.iter().sum();
        k.into_iter().map(|v| v / s).collect()
    })
}

/// Separable Gaussian blur with edge clamping.
fn blur(src: &[f64], w: usize, h: usize) -> Vec<f64> {
    let k = window();
    let r = (WINDOW / 2) as isize;
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = (0..WINDOW)
                .map(|i| k[i] * src[y * w + clamp(x as isize + i as isize - r, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = (0..WINDOW)
                .map(|i| k[i] * tmp[clamp(y as isize + i as isize - r, h) * w + x])
                .sum();
        }
    }
    out
}

/// MSCN coefficients and the local deviation map.
pub fn mscn(lum: &[f64], w: usize, h: usize) -> (Vec<f64>, Vec<f64>) {
    let mu = blur(lum, w, h);
    let sq: Vec<f64> = lum.iter().map(|v| v * v).collect();
    let mu2 = blur(&sq, w, h);
    let sigma: Vec<f64> = mu2
        .iter()
        .zip(&mu)
        .map(|(m2, m)| (m2 - m * m).abs().sqrt())
        .collect();
    let coef = lum
        .iter()
        .zip(&mu)
        .zip(&sigma)
        .map(|((v, m), s)| (v - m) / (s + MSCN_C))
        .collect();
    (coef, sigma)
}

const ALPHA_MIN: f64 = 0.2;
const ALPHA_STEP: f64 = 0.001;
const ALPHA_COUNT: usize = 9801;

/// `(alpha, Γ(2/α)² / (Γ(1/α)·Γ(3/α)))` on the search grid.
fn alpha_grid() -> &'static [(f64, f64)] {
    static G: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    G.get_or_init(|| {
        (0..ALPHA_COUNT)
            .map(|i| {
                let a = ALPHA_MIN + i as f64 * ALPHA_STEP;
                let r = (2.0 * ln_gamma(2.0 / a) - ln_gamma(1.0 / a) - ln_gamma(3.0 / a)).exp();
                (a, r)
            })
            .collect()
    })
}

fn nearest_alpha(target: f64) -> f64 {
    alpha_grid()
        .iter()
        .min_by(|x, y| (x.1 - target).abs().total_cmp(&(y.1 - target).abs()))
        .map(|g| g.0)
        .expect("non-empty grid")
}

/// Moment-matched generalised Gaussian: `(shape α, variance σ²)`.
pub fn fit_ggd(x: &[f64]) -> (f64, f64) {
    let n = x.len().max(1) as f64;
    let var = x.iter().map(|v| v * v).sum::<f64>() / n;
    let mabs = x.iter().map(|v| v.abs()).sum::<f64>() / n;
    if var <= 0.0 {
        return (ALPHA_MIN, 0.0);
    }
    (nearest_alpha(mabs * mabs / var), var)
}

/// Asymmetric generalised Gaussian: `(α, η, σl², σr²)`.
pub fn fit_aggd(x: &[f64]) -> (f64, f64, f64, f64) {
    let (mut ls, mut ln, mut rs, mut rn) = (0.0, 0usize, 0.0, 0usize);
    for &v in x {
        if v < 0.0 {
            ls += v * v;
            ln += 1;
        } else if v > 0.0 {
            rs += v * v;
            rn += 1;
        }
    }
    let sl = (ls / ln.max(1) as f64).sqrt();
    let sr = (rs / rn.max(1) as f64).sqrt();
    let n = x.len().max(1) as f64;
    let ms = x.iter().map(|v| v * v).sum::<f64>() / n;
    if ms <= 0.0 || sl == 0.0 || sr == 0.0 {
        return (ALPHA_MIN, 0.0, sl * sl, sr * sr);
    }
    let gh = sl / sr;
    let mabs = x.iter().map(|v| v.abs()).sum::<f64>() / n;
    let rhat = mabs * mabs / ms;
    let rhat_norm = rhat * (gh.powi(3) + 1.0) * (gh + 1.0) / (gh * gh + 1.0).powi(2);
    let alpha = nearest_alpha(rhat_norm);
    let (g1, g2, g3) = (
        ln_gamma(1.0 / alpha),
        ln_gamma(2.0 / alpha),
        ln_gamma(3.0 / alpha),
    );
    let eta = (sr - sl) * (g2 - g1).exp() * ((g1 - g3) / 2.0).exp();
    (alpha, eta, sl * sl, sr * sr)
}

fn patch_features(coef: &[f64], w: usize, x0: usize, y0: usize, p: usize, out: &mut Vec<f64>) {
    let at = |y: usize, x: usize| coef[(y0 + y) * w + x0 + x];
    let all: Vec<f64> = (0..p)
        .flat_map(|y| (0..p).map(move |x| (y, x)))
        .map(|(y, x)| at(y, x))
        .collect();
    let (a, s) = fit_ggd(&all);
    out.extend([a, s]);
    let shifts: [(usize, usize, usize, usize); 4] =
        [(0, 0, 0, 1), (0, 0, 1, 0), (0, 0, 1, 1), (0, 1, 1, 0)];
    for (ya, xa, yb, xb) in shifts {
        let mut prod = Vec::with_capacity(p * p);
        for y in 0..p - 1 {
            for x in 0..p - 1 {
                prod.push(at(y + ya, x + xa) * at(y + yb, x + xb));
            }
        }
        let (al, eta, l, r) = fit_aggd(&prod);
        out.extend([al, eta, l, r]);
    }
}

fn luminance(img: &Image) -> Vec<f64> {
    (0..img.pixels())
        .map(|i| (0..3).map(|c| img.plane(c)[i] as f64).sum::<f64>() * 255.0 / 3.0)
        .collect()
}

fn half(src: &[f64], w: usize, h: usize) -> (Vec<f64>, usize, usize) {
    let (hw, hh) = (w / 2, h / 2);
    let mut out = Vec::with_capacity(hw * hh);
    for y in 0..hh {
        for x in 0..hw {
            let s = src[2 * y * w + 2 * x]
                + src[2 * y * w + 2 * x + 1]
                + src[(2 * y + 1) * w + 2 * x]
                + src[(2 * y + 1) * w + 2 * x + 1];
            out.push(s / 4.0);
        }
    }
    (out, hw, hh)
}

/// Per-patch 36-dimensional features and patch sharpness, patches taken on
/// a non-overlapping grid.
pub fn image_features(img: &Image, patch: usize) -> Result<Vec<(Vec<f64>, f64)>> {
    if patch < 4 || patch % 2 != 0 {
        return Err(Error::Invalid(format!(
            "patch size {patch} must be even and >= 4"
        )));
    }
    let (w, h) = (img.width(), img.height());
    let (px, py) = (w / patch, h / patch);
    if px == 0 || py == 0 {
        return Err(Error::shape(
            "niqe",
            format!("{w}x{h} smaller than patch {patch}"),
        ));
    }
    let lum = luminance(img);
    let (c1, s1) = mscn(&lum, w, h);
    let (lum2, w2, h2) = half(&lum, w, h);
    let (c2, _) = mscn(&lum2, w2, h2);
    let hp = patch / 2;
    let mut out = Vec::with_capacity(px * py);
    for j in 0..py {
        for i in 0..px {
            let mut f = Vec::with_capacity(FEATURES);
            patch_features(&c1, w, i * patch, j * patch, patch, &mut f);
            patch_features(&c2, w2, i * hp, j * hp, hp, &mut f);
            let sharp = (0..patch)
                .flat_map(|y| (0..patch).map(move |x| (y, x)))
                .map(|(y, x)| s1[(j * patch + y) * w + i * patch + x])
                .sum::<f64>()
                / (patch * patch) as f64;
            out.push((f, sharp));
        }
    }
    Ok(out)
}

fn mean_cov(rows: &[Vec<f64>]) -> (DVector<f64>, DMatrix<f64>) {
    let n = rows.len();
    let mut mu = DVector::zeros(FEATURES);
    for r in rows {
        mu += DVector::from_column_slice(r);
    }
    mu /= n as f64;
    let mut cov = DMatrix::zeros(FEATURES, FEATURES);
    for r in rows {
        let d = DVector::from_column_slice(r) - &mu;
        cov += &d * d.transpose();
    }
    if n > 1 {
        cov /= (n - 1) as f64;
    }
    (mu, cov)
}

/// Cholesky of `m`, loading the diagonal by `eps` times its mean when `m`
/// is not positive definite. Returns whether loading was needed.
fn regularized_cholesky(
    m: &DMatrix<f64>,
    eps: f64,
) -> (nalgebra::Cholesky<f64, nalgebra::Dyn>, bool) {
    if let Some(c) = m.clone().cholesky() {
        return (c, false);
    }
    let scale = (m.trace() / m.nrows() as f64).abs().max(1e-12);
    let mut load = eps.max(f64::EPSILON) * scale;
    loop {
        let mut r = m.clone();
        for i in 0..r.nrows() {
            r[(i, i)] += load;
        }
        if let Some(c) = r.cholesky() {
            return (c, true);
        }
        load *= 10.0;
    }
}

/// Fit the pristine model to a corpus of at least ten images.
pub fn niqe_fit(corpus: &[Image], cfg: NiqeConfig) -> Result<NiqeModel> {
    if corpus.len() < 10 {
        return Err(Error::Invalid(format!(
            "corpus of {} images, need at least 10",
            corpus.len()
        )));
    }
    let mut feats = Vec::new();
    for img in corpus {
        feats.extend(image_features(img, cfg.patch)?);
    }
    let max_sharp = feats.iter().map(|f| f.1).fold(0.0, f64::max);
    let kept: Vec<Vec<f64>> = feats
        .into_iter()
        .filter(|f| f.1 >= cfg.sharpness * max_sharp)
        .map(|f| f.0)
        .collect();
    if kept.len() < 2 {
        return Err(Error::Invalid(
            "fewer than two sharp patches in corpus".into(),
        ));
    }
    let (mu, cov) = mean_cov(&kept);
    let (_, regularized) = regularized_cholesky(&cov, cfg.eps);
    Ok(NiqeModel {
        mean: mu.as_slice().to_vec(),
        cov: cov.transpose().as_slice().to_vec(),
        patch: cfg.patch,
        eps: cfg.eps,
        regularized,
    })
}

/// Distance between the image's patch-feature Gaussian and the model.
/// Lower is more natural.
pub fn niqe_score(img: &Image, model: &NiqeModel) -> Result<f64> {
    let rows: Vec<Vec<f64>> = image_features(img, model.patch)?
        .into_iter()
        .map(|f| f.0)
        .collect();
    let (mu2, cov2) = mean_cov(&rows);
    let mu1 = DVector::from_column_slice(&model.mean);
    let cov1 = DMatrix::from_row_slice(FEATURES, FEATURES, &model.cov);
    let m = (cov1 + cov2) / 2.0;
    let (chol, _) = regularized_cholesky(&m, model.eps);
    let d = mu1 - mu2;
    let q = d.dot(&chol.solve(&d));
    Ok(q.max(0.0).sqrt())
}

impl NiqeModel {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mean = Tensor::new(
            [1, 1, 1, FEATURES],
            self.mean.iter().map(|&v| v as f32).collect(),
        )?;
        let cov = Tensor::new(
            [1, 1, FEATURES, FEATURES],
            self.cov.iter().map(|&v| v as f32).collect(),
        )?;
        let meta = Tensor::vector(vec![
            self.patch as f32,
            self.eps as f32,
            f32::from(u8::from(self.regularized)),
        ]);
        let bytes = weights::encode([
            ("niqe.mean", &mean),
            ("niqe.cov", &cov),
            ("niqe.meta", &meta),
        ])?;
        crate::atomic::write_atomic(path, &bytes)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let m: IndexMap<String, Tensor> = weights::decode(&bytes, path)?;
        let get = |k: &str, n: usize| -> Result<Vec<f64>> {
            let t = m.get(k).ok_or_else(|| Error::Format {
                path: path.to_path_buf(),
                detail: format!("missing `{k}`"),
            })?;
            if t.len() != n {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    detail: format!("`{k}` has {} values, expected {n}", t.len()),
                });
            }
            Ok(t.data().iter().map(|&v| v as f64).collect())
        };
        let meta = get("niqe.meta", 3)?;
        Ok(Self {
            mean: get("niqe.mean", FEATURES)?,
            cov: get("niqe.cov", FEATURES * FEATURES)?,
            patch: meta[0] as usize,
            eps: meta[1],
            regularized: meta[2] != 0.0,
        })
    }
}

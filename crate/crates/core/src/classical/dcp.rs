use serde::{Deserialize, Serialize};

use crate::data::Image;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DcpConfig {
    /// Half-width of the square patch.
    pub radius: usize,
    pub omega: f64,
    /// Lower bound on transmission.
    pub t0: f64,
    /// Fraction of brightest dark-channel pixels averaged into A.
    pub quantile: f64,
}

impl Default for DcpConfig {
    fn default() -> Self {
        Self {
            radius: 7,
            omega: 0.95,
            t0: 0.1,
            quantile: 0.001,
        }
    }
}

impl DcpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0 && self.omega <= 1.0) {
            return Err(Error::Invalid(format!(
                "omega {} outside (0, 1]",
                self.omega
            )));
        }
        if !(self.t0 > 0.0 && self.t0 < 1.0) {
            return Err(Error::Invalid(format!("t0 {} outside (0, 1)", self.t0)));
        }
        if !(self.quantile > 0.0 && self.quantile <= 1.0) {
            return Err(Error::Invalid(format!(
                "quantile {} outside (0, 1]",
                self.quantile
            )));
        }
        Ok(())
    }
}

/// Single-channel map, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Map {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Map {
    pub fn filled(width: usize, height: usize, v: f64) -> Self {
        Self {
            width,
            height,
            data: vec![v; width * height],
        }
    }

    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len().max(1) as f64
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

fn min_filter_1d(src: &[f64], n: usize, stride: usize, r: usize, dst: &mut [f64]) {
    for i in 0..n {
        let lo = i.saturating_sub(r);
        let hi = (i + r).min(n - 1);
        dst[i * stride] = (lo..=hi)
            .map(|j| src[j * stride])
            .fold(f64::INFINITY, f64::min);
    }
}

/// Minimum over a (2r+1)² window clipped to the image, which equals edge
/// clamping for a minimum.
fn min_filter(m: &Map, r: usize) -> Map {
    let (w, h) = (m.width, m.height);
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        min_filter_1d(&m.data[y * w..][..w], w, 1, r, &mut tmp[y * w..][..w]);
    }
    let mut out = vec![0.0; w * h];
    for x in 0..w {
        min_filter_1d(&tmp[x..], h, w, r, &mut out[x..]);
    }
    Map {
        width: w,
        height: h,
        data: out,
    }
}

fn channel_min(img: &Image, scale: [f64; 3]) -> Map {
    let data = (0..img.pixels())
        .map(|i| {
            (0..3)
                .map(|c| img.plane(c)[i] as f64 / scale[c])
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    Map {
        width: img.width(),
        height: img.height(),
        data,
    }
}

/// Per-pixel minimum over channels and the surrounding patch.
pub fn dark_channel(img: &Image, radius: usize) -> Map {
    min_filter(&channel_min(img, [1.0; 3]), radius)
}

/// Mean colour of the `ceil(quantile·N)` pixels with the largest dark
/// channel. Ties are broken by raster order. Components are floored at
/// 1e-6 so later divisions stay finite.
pub fn estimate_atmospheric_light(img: &Image, dark: &Map, quantile: f64) -> Result<[f64; 3]> {
    if !(quantile > 0.0 && quantile <= 1.0) {
        return Err(Error::Invalid(format!(
            "quantile {quantile} outside (0, 1]"
        )));
    }
    if dark.data.len() != img.pixels() {
        return Err(Error::shape(
            "atmospheric_light",
            "dark channel dims differ from image",
        ));
    }
    let n = dark.data.len();
    let k = ((quantile * n as f64).ceil() as usize).clamp(1, n);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| dark.data[b].total_cmp(&dark.data[a]).then(a.cmp(&b)));
    let mut a = [0.0; 3];
    for &i in &idx[..k] {
        for (c, ac) in a.iter_mut().enumerate() {
            *ac += img.plane(c)[i] as f64;
        }
    }
    Ok(a.map(|v| (v / k as f64).max(1e-6)))
}

/// `1 − ω·min_patch min_c I/A`, clamped to `[t0, 1]`.
pub fn transmission(img: &Image, a: [f64; 3], cfg: &DcpConfig) -> Result<Map> {
    if a.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::Invalid(format!(
            "atmospheric light {a:?} must be positive"
        )));
    }
    let mut t = min_filter(&channel_min(img, a), cfg.radius);
    for v in &mut t.data {
        *v = (1.0 - cfg.omega * *v).clamp(cfg.t0, 1.0);
    }
    Ok(t)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HazeClass {
    Thin,
    Moderate,
    Thick,
}

impl HazeClass {
    pub const ALL: [HazeClass; 3] = [HazeClass::Thin, HazeClass::Moderate, HazeClass::Thick];

    pub fn as_str(self) -> &'static str {
        match self {
            HazeClass::Thin => "thin",
            HazeClass::Moderate => "moderate",
            HazeClass::Thick => "thick",
        }
    }
}

/// Mean dark channel on the 0–255 scale.
pub fn haze_density(img: &Image, radius: usize) -> f64 {
    dark_channel(img, radius).mean() * 255.0
}

/// Grading boundaries on the 0–255 mean-dark-channel scale.
pub const DEFAULT_THRESHOLDS: (f64, f64) = (110.58, 159.31);

/// Below `t1` thin, above `t2` thick, moderate in between with both ends
/// inclusive.
pub fn classify_haze(density: f64, thresholds: (f64, f64)) -> HazeClass {
    let (t1, t2) = thresholds;
    if density < t1 {
        HazeClass::Thin
    } else if density <= t2 {
        HazeClass::Moderate
    } else {
        HazeClass::Thick
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HazeReport {
    pub path: String,
    pub mean_dark_channel: f64,
    pub class: HazeClass,
    pub thresholds: [f64; 2],
}

impl HazeReport {
    pub fn analyze(path: &str, img: &Image, radius: usize, thresholds: (f64, f64)) -> Self {
        let d = haze_density(img, radius);
        Self {
            path: path.to_string(),
            mean_dark_channel: d,
            class: classify_haze(d, thresholds),
            thresholds: [thresholds.0, thresholds.1],
        }
    }
}

#[derive(Clone, Debug)]
pub struct DcpOutput {
    pub image: Image,
    pub dark: Map,
    pub atmospheric_light: [f64; 3],
    pub transmission: Map,
}

/// Dark-channel-prior dehazing: `J = (I − A) / max(t, t0) + A`, clamped
/// to [0, 1].
pub fn dcp_dehaze(img: &Image, cfg: &DcpConfig) -> Result<DcpOutput> {
    cfg.validate()?;
    let dark = dark_channel(img, cfg.radius);
    let a = estimate_atmospheric_light(img, &dark, cfg.quantile)?;
    let t = transmission(img, a, cfg)?;
    let mut out = img.clone();
    let n = img.pixels();
    for c in 0..3 {
        let plane = &mut out.data_mut()[c * n..][..n];
        for (v, &ti) in plane.iter_mut().zip(&t.data) {
            let j = (*v as f64 - a[c]) / ti.max(cfg.t0) + a[c];
            *v = j.clamp(0.0, 1.0) as f32;
        }
    }
    Ok(DcpOutput {
        image: out,
        dark,
        atmospheric_light: a,
        transmission: t,
    })
}

use crate::data::Image;
use crate::error::{Error, Result};
use crate::rng::SeededRng;

use super::dcp::Map;

#[derive(Clone, Debug)]
pub enum Transmission {
    Uniform(f64),
    Map(Map),
}

impl Transmission {
    fn at(&self, i: usize) -> f64 {
        match self {
            Transmission::Uniform(t) => *t,
            Transmission::Map(m) => m.data[i],
        }
    }

    /// `allow_zero` admits total haze, which is fine forward but not invertible.
    fn check(&self, img: &Image, allow_zero: bool) -> Result<()> {
        let valid = |t: f64| (t > 0.0 || (allow_zero && t == 0.0)) && t <= 1.0;
        let ok = match self {
            Transmission::Uniform(t) => valid(*t),
            Transmission::Map(m) => {
                if m.width != img.width() || m.height != img.height() {
                    return Err(Error::shape("transmission", "map dims differ from image"));
                }
                m.data.iter().all(|&t| valid(t))
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Range(format!(
                "transmission must lie in {}0, 1]",
                if allow_zero { "[" } else { "(" }
            )))
        }
    }
}

/// Atmospheric scattering model `I = J·t + A·(1 − t)`.
pub fn synthesize_haze(clear: &Image, t: &Transmission, a: [f64; 3]) -> Result<Image> {
    t.check(clear, true)?;
    if a.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::Range(format!(
            "atmospheric light {a:?} outside [0, 1]"
        )));
    }
    let n = clear.pixels();
    let mut out = clear.clone();
    for c in 0..3 {
        for (i, v) in out.data_mut()[c * n..][..n].iter_mut().enumerate() {
            let ti = t.at(i);
            *v = (*v as f64 * ti + a[c] * (1.0 - ti)) as f32;
        }
    }
    Ok(out)
}

/// Exact inverse of [`synthesize_haze`] given the true `t` and `A`.
pub fn invert_haze(hazy: &Image, t: &Transmission, a: [f64; 3]) -> Result<Image> {
    t.check(hazy, false)?;
    let n = hazy.pixels();
    let mut out = hazy.clone();
    for c in 0..3 {
        for (i, v) in out.data_mut()[c * n..][..n].iter_mut().enumerate() {
            *v = ((*v as f64 - a[c]) / t.at(i) + a[c]) as f32;
        }
    }
    Ok(out)
}

/// Land-cover palettes: vegetation, water, bare soil, built-up.
const PALETTES: [([f64; 3], [f64; 3]); 4] = [
    ([0.05, 0.22, 0.02], [0.20, 0.45, 0.10]),
    ([0.02, 0.08, 0.15], [0.06, 0.20, 0.35]),
    ([0.35, 0.25, 0.10], [0.55, 0.40, 0.20]),
    ([0.30, 0.30, 0.30], [0.60, 0.60, 0.62]),
];

/// Smooth noise in roughly [-1, 1]: bilinear interpolation of a coarse
/// random lattice.
fn value_noise(rng: &mut SeededRng, w: usize, h: usize, cell: usize) -> Vec<f64> {
    let gw = w / cell + 2;
    let gh = h / cell + 2;
    let grid: Vec<f64> = (0..gw * gh).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let fy = y as f64 / cell as f64;
        let (y0, ty) = (fy.floor() as usize, fy.fract());
        for x in 0..w {
            let fx = x as f64 / cell as f64;
            let (x0, tx) = (fx.floor() as usize, fx.fract());
            let g = |yy: usize, xx: usize| grid[yy * gw + xx];
            let top = g(y0, x0) * (1.0 - tx) + g(y0, x0 + 1) * tx;
            let bot = g(y0 + 1, x0) * (1.0 - tx) + g(y0 + 1, x0 + 1) * tx;
            out.push(top * (1.0 - ty) + bot * ty);
        }
    }
    out
}

/// Haze-free aerial-looking scene: Voronoi land-cover parcels with smooth
/// shading, fine texture and scattered shadows, plus one bright rooftop
/// block. Deterministic in `seed`.
pub fn scene(seed: u64, width: usize, height: usize) -> Image {
    let mut rng = SeededRng::new(seed).split("scene");
    let parcels = ((width * height) / 576).max(4);
    let sites: Vec<(f64, f64, [f64; 3])> = (0..parcels)
        .map(|_| {
            let (lo, hi) = PALETTES[rng.below(PALETTES.len())];
            let colour = [0, 1, 2].map(|c| rng.uniform_range(lo[c], hi[c]));
            (
                rng.uniform() * width as f64,
                rng.uniform() * height as f64,
                colour,
            )
        })
        .collect();
    let shade = value_noise(&mut rng, width, height, 24);
    let grain = value_noise(&mut rng, width, height, 3);
    let shadow: Vec<bool> = (0..width * height).map(|_| rng.uniform() < 0.02).collect();
    let side = (width.min(height) / 6).max(2);
    let (ry, rx) = (rng.below(height - side + 1), rng.below(width - side + 1));
    let roof = [0, 1, 2].map(|_| rng.uniform_range(0.82, 0.92));
    let mut nearest = vec![0usize; width * height];
    for y in 0..height {
        for x in 0..width {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            nearest[y * width + x] = (0..sites.len())
                .min_by(|&a, &b| {
                    let d = |s: &(f64, f64, [f64; 3])| (s.0 - px).powi(2) + (s.1 - py).powi(2);
                    d(&sites[a]).total_cmp(&d(&sites[b]))
                })
                .unwrap_or(0);
        }
    }
    Image::from_fn(width, height, |c, y, x| {
        let i = y * width + x;
        if (ry..ry + side).contains(&y) && (rx..rx + side).contains(&x) {
            return (roof[c] * (1.0 + 0.02 * grain[i])).clamp(0.0, 1.0) as f32;
        }
        let mut v = sites[nearest[i]].2[c] * (1.0 + 0.25 * shade[i]) * (1.0 + 0.15 * grain[i]);
        if shadow[i] {
            v *= 0.15;
        }
        v.clamp(0.0, 1.0) as f32
    })
}

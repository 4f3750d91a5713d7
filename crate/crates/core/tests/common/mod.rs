#![allow(dead_code)]

use mcaf_core::data::Image;
use mcaf_core::{SeededRng, Tensor};

/// Sharma, Wu and Dalal CIEDE2000 test pairs: L1 a1 b1 L2 a2 b2 ΔE00.
pub const SHARMA: [[f64; 7]; 34] = [
    [50.0000, 2.6772, -79.7751, 50.0000, 0.0000, -82.7485, 2.0425],
    [50.0000, 3.1571, -77.2803, 50.0000, 0.0000, -82.7485, 2.8615],
    [50.0000, 2.8361, -74.0200, 50.0000, 0.0000, -82.7485, 3.4412],
    [
        50.0000, -1.3802, -84.2814, 50.0000, 0.0000, -82.7485, 1.0000,
    ],
    [
        50.0000, -1.1848, -84.8006, 50.0000, 0.0000, -82.7485, 1.0000,
    ],
    [
        50.0000, -0.9009, -85.5211, 50.0000, 0.0000, -82.7485, 1.0000,
    ],
    [50.0000, 0.0000, 0.0000, 50.0000, -1.0000, 2.0000, 2.3669],
    [50.0000, -1.0000, 2.0000, 50.0000, 0.0000, 0.0000, 2.3669],
    [50.0000, 2.4900, -0.0010, 50.0000, -2.4900, 0.0009, 7.1792],
    [50.0000, 2.4900, -0.0010, 50.0000, -2.4900, 0.0010, 7.1792],
    [50.0000, 2.4900, -0.0010, 50.0000, -2.4900, 0.0011, 7.2195],
    [50.0000, 2.4900, -0.0010, 50.0000, -2.4900, 0.0012, 7.2195],
    [50.0000, -0.0010, 2.4900, 50.0000, 0.0009, -2.4900, 4.8045],
    [50.0000, -0.0010, 2.4900, 50.0000, 0.0010, -2.4900, 4.8045],
    [50.0000, -0.0010, 2.4900, 50.0000, 0.0011, -2.4900, 4.7461],
    [50.0000, 2.5000, 0.0000, 50.0000, 0.0000, -2.5000, 4.3065],
    [50.0000, 2.5000, 0.0000, 73.0000, 25.0000, -18.0000, 27.1492],
    [50.0000, 2.5000, 0.0000, 61.0000, -5.0000, 29.0000, 22.8977],
    [50.0000, 2.5000, 0.0000, 56.0000, -27.0000, -3.0000, 31.9030],
    [50.0000, 2.5000, 0.0000, 58.0000, 24.0000, 15.0000, 19.4535],
    [50.0000, 2.5000, 0.0000, 50.0000, 3.1736, 0.5854, 1.0000],
    [50.0000, 2.5000, 0.0000, 50.0000, 3.2972, 0.0000, 1.0000],
    [50.0000, 2.5000, 0.0000, 50.0000, 1.8634, 0.5757, 1.0000],
    [50.0000, 2.5000, 0.0000, 50.0000, 3.2592, 0.3350, 1.0000],
    [
        60.2574, -34.0099, 36.2677, 60.4626, -34.1751, 39.4387, 1.2644,
    ],
    [
        63.0109, -31.0961, -5.8663, 62.8187, -29.7946, -4.0864, 1.2630,
    ],
    [61.2901, 3.7196, -5.3901, 61.4292, 2.2480, -4.9620, 1.8731],
    [35.0831, -44.1164, 3.7933, 35.0232, -40.0716, 1.5901, 1.8645],
    [
        22.7233, 20.0904, -46.6940, 23.0331, 14.9730, -42.5619, 2.0373,
    ],
    [36.4612, 47.8580, 18.3852, 36.2715, 50.5065, 21.2231, 1.4146],
    [90.8027, -2.0831, 1.4410, 91.1528, -1.6435, 0.0447, 1.4441],
    [90.9257, -0.5406, -0.9208, 88.6381, -0.8985, -0.7239, 1.5381],
    [6.7747, -0.2908, -2.4247, 5.8714, -0.0985, -2.2286, 0.6377],
    [2.0776, 0.0795, -1.1350, 0.9033, -0.0636, -0.5514, 0.9082],
];

/// Independent ΔE00 written straight from the standard formula, in
/// radians throughout.
pub fn ciede2000_oracle(p: [f64; 3], q: [f64; 3]) -> f64 {
    use std::f64::consts::PI;
    let (l1, a1, b1) = (p[0], p[1], p[2]);
    let (l2, a2, b2) = (q[0], q[1], q[2]);
    let cab = (a1.hypot(b1) + a2.hypot(b2)) / 2.0;
    let g = 0.5 * (1.0 - (cab.powi(7) / (cab.powi(7) + 25f64.powi(7))).sqrt());
    let (ap1, ap2) = ((1.0 + g) * a1, (1.0 + g) * a2);
    let (cp1, cp2) = (ap1.hypot(b1), ap2.hypot(b2));
    let hp = |b: f64, a: f64| {
        if b == 0.0 && a == 0.0 {
            0.0
        } else {
            let h = b.atan2(a);
            if h < 0.0 {
                h + 2.0 * PI
            } else {
                h
            }
        }
    };
    let (hp1, hp2) = (hp(b1, ap1), hp(b2, ap2));
    let dl = l2 - l1;
    let dc = cp2 - cp1;
    let dh = if cp1 * cp2 == 0.0 {
        0.0
    } else if (hp2 - hp1).abs() <= PI {
        hp2 - hp1
    } else if hp2 - hp1 > PI {
        hp2 - hp1 - 2.0 * PI
    } else {
        hp2 - hp1 + 2.0 * PI
    };
    let dhh = 2.0 * (cp1 * cp2).sqrt() * (dh / 2.0).sin();
    let lbar = (l1 + l2) / 2.0;
    let cbar = (cp1 + cp2) / 2.0;
    let hbar = if cp1 * cp2 == 0.0 {
        hp1 + hp2
    } else if (hp1 - hp2).abs() <= PI {
        (hp1 + hp2) / 2.0
    } else if hp1 + hp2 < 2.0 * PI {
        (hp1 + hp2 + 2.0 * PI) / 2.0
    } else {
        (hp1 + hp2 - 2.0 * PI) / 2.0
    };
    let deg = PI / 180.0;
    let t = 1.0 - 0.17 * (hbar - 30.0 * deg).cos()
        + 0.24 * (2.0 * hbar).cos()
        + 0.32 * (3.0 * hbar + 6.0 * deg).cos()
        - 0.20 * (4.0 * hbar - 63.0 * deg).cos();
    let dtheta = 30.0 * deg * (-((hbar / deg - 275.0) / 25.0).powi(2)).exp();
    let rc = 2.0 * (cbar.powi(7) / (cbar.powi(7) + 25f64.powi(7))).sqrt();
    let sl = 1.0 + 0.015 * (lbar - 50.0).powi(2) / (20.0 + (lbar - 50.0).powi(2)).sqrt();
    let sc = 1.0 + 0.045 * cbar;
    let sh = 1.0 + 0.015 * cbar * t;
    let rt = -(2.0 * dtheta).sin() * rc;
    ((dl / sl).powi(2) + (dc / sc).powi(2) + (dhh / sh).powi(2) + rt * (dc / sc) * (dhh / sh))
        .sqrt()
}

/// Exact optimal 1-D k-means by dynamic programming over sorted values.
/// Returns the midpoints between adjacent optimal centroids.
pub fn dp_kmeans_thresholds(values: &[f64], k: usize) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let mut s1 = vec![0.0; n + 1];
    let mut s2 = vec![0.0; n + 1];
    for i in 0..n {
        s1[i + 1] = s1[i] + v[i];
        s2[i + 1] = s2[i] + v[i] * v[i];
    }
    // within-cluster squared error of v[i..j]
    let sse = |i: usize, j: usize| {
        let m = (j - i) as f64;
        let s = s1[j] - s1[i];
        (s2[j] - s2[i]) - s * s / m
    };
    let inf = f64::INFINITY;
    let mut cost = vec![vec![inf; n + 1]; k + 1];
    let mut arg = vec![vec![0usize; n + 1]; k + 1];
    cost[0][0] = 0.0;
    for c in 1..=k {
        for j in c..=n {
            for i in (c - 1)..j {
                let v = cost[c - 1][i] + sse(i, j);
                if v < cost[c][j] {
                    cost[c][j] = v;
                    arg[c][j] = i;
                }
            }
        }
    }
    let mut bounds = vec![n];
    let mut j = n;
    for c in (1..=k).rev() {
        j = arg[c][j];
        bounds.push(j);
    }
    bounds.reverse();
    let centroids: Vec<f64> = bounds
        .windows(2)
        .map(|w| (s1[w[1]] - s1[w[0]]) / (w[1] - w[0]) as f64)
        .collect();
    centroids.windows(2).map(|w| (w[0] + w[1]) / 2.0).collect()
}

/// Three Gaussian bumps at 60, 135 and 200 with σ = 10, 300 samples each.
pub fn trimodal(seed: u64) -> Vec<f64> {
    let mut rng = SeededRng::new(seed);
    [60.0, 135.0, 200.0]
        .iter()
        .flat_map(|&mu| (0..300).map(|_| rng.normal(mu, 10.0)).collect::<Vec<_>>())
        .collect()
}

/// Separable Gaussian blur with edge clamping.
pub fn blur(img: &Image, sigma: f64) -> Image {
    let r = (3.0 * sigma).ceil() as i64;
    let k: Vec<f64> = (-r..=r)
        .map(|d| (-((d * d) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let ks: f64 = k.iter().sum();
    let (w, h) = (img.width() as i64, img.height() as i64);
    let pass = |src: &Image, dx: i64, dy: i64| {
        Image::from_fn(w as usize, h as usize, |c, y, x| {
            let mut s = 0.0;
            for (i, d) in (-r..=r).enumerate() {
                let yy = (y as i64 + d * dy).clamp(0, h - 1) as usize;
                let xx = (x as i64 + d * dx).clamp(0, w - 1) as usize;
                s += k[i] * src.get(c, yy, xx) as f64;
            }
            (s / ks) as f32
        })
    };
    pass(&pass(img, 1, 0), 0, 1)
}

/// Additive Gaussian noise, clipped to [0, 1].
pub fn add_noise(img: &Image, sigma: f64, seed: u64) -> Image {
    let mut rng = SeededRng::new(seed);
    Image::from_fn(img.width(), img.height(), |c, y, x| {
        (img.get(c, y, x) as f64 + rng.normal(0.0, sigma)).clamp(0.0, 1.0) as f32
    })
}

pub fn random_image(w: usize, h: usize, seed: u64) -> Image {
    let mut rng = SeededRng::new(seed);
    Image::from_fn(w, h, |_, _, _| rng.uniform() as f32)
}

/// Direct nested-loop convolution with zero padding.
pub fn conv_oracle(
    x: &Tensor<f64>,
    w: &Tensor<f64>,
    b: &[f64],
    s: usize,
    p: usize,
    g: usize,
) -> Tensor<f64> {
    let [n, _, h, wd] = x.dims();
    let [co, cig, k, _] = w.dims();
    let oh = (h + 2 * p - k) / s + 1;
    let ow = (wd + 2 * p - k) / s + 1;
    let cog = co / g;
    Tensor::from_fn([n, co, oh, ow], |[bi, oc, oy, ox]| {
        let grp = oc / cog;
        let mut acc = b[oc];
        for icg in 0..cig {
            for ky in 0..k {
                for kx in 0..k {
                    let iy = (oy * s + ky) as isize - p as isize;
                    let ix = (ox * s + kx) as isize - p as isize;
                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                        continue;
                    }
                    acc += w.at([oc, icg, ky, kx])
                        * x.at([bi, grp * cig + icg, iy as usize, ix as usize]);
                }
            }
        }
        acc
    })
}

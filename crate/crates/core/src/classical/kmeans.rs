use crate::error::{Error, Result};
use crate::rng::SeededRng;

pub const MAX_ITERATIONS: usize = 100;
pub const TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct KMeans {
    /// Ascending.
    pub centroids: Vec<f64>,
    /// Midpoints between adjacent centroids.
    pub thresholds: Vec<f64>,
    pub iterations: usize,
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// One-dimensional Lloyd iteration from quantile seeds `(2i+1)/2k`.
/// A cluster that empties is re-seeded from a value drawn with `seed`.
pub fn kmeans_thresholds(values: &[f64], k: usize, seed: u64) -> Result<KMeans> {
    if k == 0 {
        return Err(Error::Invalid("k must be >= 1".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid("values must be finite".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut distinct = sorted.clone();
    distinct.dedup();
    if distinct.len() < k {
        return Err(Error::Degenerate(format!(
            "{} distinct values for {k} clusters",
            distinct.len()
        )));
    }
    let mut rng = SeededRng::new(seed).split("kmeans");
    let mut cent: Vec<f64> = (0..k)
        .map(|i| quantile_sorted(&sorted, (2 * i + 1) as f64 / (2 * k) as f64))
        .collect();
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let mut sum = vec![0.0; k];
        let mut cnt = vec![0usize; k];
        for &v in values {
            let mut best = 0;
            for j in 1..k {
                if (v - cent[j]).abs() < (v - cent[best]).abs() {
                    best = j;
                }
            }
            sum[best] += v;
            cnt[best] += 1;
        }
        let mut shift: f64 = 0.0;
        for j in 0..k {
            let next = if cnt[j] > 0 {
                sum[j] / cnt[j] as f64
            } else {
                sorted[rng.below(sorted.len())]
            };
            shift = shift.max((next - cent[j]).abs());
            cent[j] = next;
        }
        if shift < TOLERANCE {
            break;
        }
    }
    cent.sort_by(f64::total_cmp);
    let thresholds = cent.windows(2).map(|w| (w[0] + w[1]) / 2.0).collect();
    Ok(KMeans {
        centroids: cent,
        thresholds,
        iterations,
    })
}

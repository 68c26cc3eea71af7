use crate::error::{Error, Result};
use crate::image::Image;

pub const DEFAULT_BINS: usize = 25;

/// Fixed `[lo, hi]` range of the L, a and b channels.
pub const LAB_RANGES: [(f64, f64); 3] = [(0.0, 100.0), (-128.0, 127.0), (-128.0, 127.0)];

#[inline]
fn bin_of(v: f64, (lo, hi): (f64, f64), bins: usize) -> usize {
    let t = ((v - lo) / (hi - lo) * bins as f64).floor();
    (t.max(0.0) as usize).min(bins - 1)
}

/// Normalized histogram of one LAB channel.
pub fn lab_histogram(lab: &Image, channel: usize, bins: usize) -> Vec<f64> {
    let mut h = vec![0.0; bins];
    for px in lab.pixels() {
        h[bin_of(px[channel], LAB_RANGES[channel], bins)] += 1.0;
    }
    let n = lab.len() as f64;
    h.iter_mut().for_each(|v| *v /= n);
    h
}

/// Symmetric chi-square distance; empty bin pairs contribute nothing.
pub fn chi2(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(a, b)| *a + *b > 0.0)
        .map(|(a, b)| (a - b).powi(2) / (a + b))
        .sum()
}

/// Mean over L, a and b of the chi-square distance between the channel histograms.
pub fn hist_chi2(a: &Image, b: &Image, bins: usize) -> Result<f64> {
    a.require_channels(3)?;
    b.require_channels(3)?;
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("histogram distance of an empty image"));
    }
    if bins == 0 {
        return Err(Error::invalid("bins must be positive"));
    }
    let total: f64 = (0..3)
        .map(|c| chi2(&lab_histogram(a, c, bins), &lab_histogram(b, c, bins)))
        .sum();
    Ok(total / 3.0)
}

use nalgebra::{DMatrix, SymmetricEigen};
use statrs::distribution::{ContinuousCDF, Gamma};

use crate::error::{Error, Result};
use crate::image::Image;

pub const DEFAULT_PATCH_SIZE: usize = 7;
/// Confidence level of the weak-texture threshold.
const CONFIDENCE: f64 = 1.0 - 1e-6;
const MAX_ITERS: usize = 10;

struct Patches {
    /// One column per patch.
    data: DMatrix<f64>,
    /// Trace of each patch's gradient covariance.
    texture: Vec<f64>,
}

fn collect_patches(img: &Image, p: usize) -> Patches {
    let (w, h) = (img.width(), img.height());
    let (nx, ny) = (w - p + 1, h - p + 1);
    let mut data = DMatrix::zeros(p * p, nx * ny);
    let mut texture = Vec::with_capacity(nx * ny);
    for y0 in 0..ny {
        for x0 in 0..nx {
            let col = y0 * nx + x0;
            let mut t = 0.0;
            for dy in 0..p {
                for dx in 0..p {
                    data[(dy * p + dx, col)] = img.get(x0 + dx, y0 + dy, 0);
                    if dx >= 1 && dx + 1 < p {
                        let g = 0.5 * (img.get(x0 + dx + 1, y0 + dy, 0) - img.get(x0 + dx - 1, y0 + dy, 0));
                        t += g * g;
                    }
                    if dy >= 1 && dy + 1 < p {
                        let g = 0.5 * (img.get(x0 + dx, y0 + dy + 1, 0) - img.get(x0 + dx, y0 + dy - 1, 0));
                        t += g * g;
                    }
                }
            }
            texture.push(t);
        }
    }
    Patches { data, texture }
}

/// Noise variance from the smallest eigenvalue of the selected patches'
/// covariance.
///
/// The smallest sample eigenvalue of `n` noise vectors in `d` dimensions sits
/// near `var * (1 - sqrt(d / n))^2`, so it is rescaled by that factor.
fn noise_variance(patches: &DMatrix<f64>, selected: &[usize]) -> f64 {
    let d = patches.nrows();
    let n = selected.len() as f64;
    let mut x = DMatrix::zeros(d, selected.len());
    for (k, &i) in selected.iter().enumerate() {
        x.set_column(k, &patches.column(i));
    }
    let mean = x.column_mean();
    for mut col in x.column_iter_mut() {
        col -= &mean;
    }
    let cov = (&x * x.transpose()) / n;
    let eig = SymmetricEigen::new(cov);
    let edge = (1.0 - (d as f64 / n).sqrt()).powi(2);
    eig.eigenvalues.min().max(0.0) / edge
}

/// Blind estimate of additive white Gaussian noise from weakly textured patches.
///
/// Works on luminance. The estimate starts from the smallest eigenvalue of the
/// covariance of all patches, corrected for its finite-sample bias, then alternates between keeping the patches
/// whose gradient energy is plausible for pure noise at the current level and
/// re-estimating the level from those patches.
pub fn estimate_noise(img: &Image, patch_size: usize) -> Result<f64> {
    if img.width() < 32 || img.height() < 32 {
        return Err(Error::ImageTooSmall(format!(
            "noise estimation needs at least 32x32 pixels, got {}x{}",
            img.width(),
            img.height()
        )));
    }
    if patch_size < 3 {
        return Err(Error::invalid("patch_size must be at least 3"));
    }
    let lum = img.luminance();
    let p = patch_size;
    let patches = collect_patches(&lum, p);
    let n = (p * p) as f64;
    // trace(Dh^T Dh + Dv^T Dv) for the [-1/2, 0, 1/2] derivative kernels
    let grad_trace = 2.0 * (p * (p - 2)) as f64 * 0.5;
    let gamma = Gamma::new(n / 2.0, n / (2.0 * grad_trace)).map_err(|e| Error::invalid(e.to_string()))?;
    let quantile = gamma.inverse_cdf(CONFIDENCE);

    let all: Vec<usize> = (0..patches.texture.len()).collect();
    let mut var = noise_variance(&patches.data, &all);
    let mut selection = all;
    for _ in 0..MAX_ITERS {
        if var <= 0.0 {
            return Ok(0.0);
        }
        let tau = var * quantile;
        let next: Vec<usize> = (0..patches.texture.len()).filter(|&i| patches.texture[i] < tau).collect();
        if next.len() < 4 * p * p {
            break;
        }
        if next == selection {
            break;
        }
        var = noise_variance(&patches.data, &next);
        selection = next;
    }
    Ok(var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{synth_lightfield, SceneKind};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn with_noise(img: &Image, sigma: f64, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, sigma).unwrap();
        img.map(|v| v + n.sample(&mut rng))
    }

    #[test]
    fn clean_constant_image_is_noise_free() {
        let img = Image::filled(48, 40, 1, 0.5);
        assert!(estimate_noise(&img, 7).unwrap() < 1e-4);
    }

    #[test]
    fn constant_image_with_noise() {
        let flat = Image::filled(64, 64, 1, 0.5);
        let mean = (0..20).map(|s| estimate_noise(&with_noise(&flat, 0.02, s), 7).unwrap()).sum::<f64>() / 20.0;
        assert!((mean / 0.02 - 1.0).abs() < 0.1, "mean estimate {mean}");
    }

    #[test]
    fn textured_scene_with_noise() {
        let lf = synth_lightfield(SceneKind::TexturedDisparity, 1, 1, 128, 128, 0.0).unwrap();
        let img = lf.centre_view().luminance();
        for (seed, sigma) in [(1, 0.05), (2, 0.02), (3, 0.01)] {
            let est = estimate_noise(&with_noise(&img, sigma, seed), 7).unwrap();
            assert!((est / sigma - 1.0).abs() < 0.15, "sigma {sigma}: {est}");
        }
    }

    #[test]
    fn larger_noise_gives_larger_estimates() {
        let img = synth_lightfield(SceneKind::SmoothGradient, 1, 1, 96, 96, 0.0).unwrap().centre_view().luminance();
        let est: Vec<f64> = [0.01, 0.02, 0.05, 0.1]
            .iter()
            .map(|&s| estimate_noise(&with_noise(&img, s, 9), 7).unwrap())
            .collect();
        assert!(est.windows(2).all(|w| w[0] < w[1]), "{est:?}");
    }

    #[test]
    fn shift_invariant() {
        let img = with_noise(&Image::filled(40, 40, 1, 0.3), 0.03, 7);
        let a = estimate_noise(&img, 7).unwrap();
        let b = estimate_noise(&img.map(|v| v + 0.25), 7).unwrap();
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn small_images_rejected() {
        assert!(estimate_noise(&Image::new(31, 40, 1), 7).is_err());
    }
}

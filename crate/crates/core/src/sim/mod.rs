//! Forward model of a lenslet camera, used to produce RAW and white image
//! fixtures from a known light field.
//!
//! Each lenslet is a pinhole: the sensor pixel at offset `(dx, dy)` from a
//! lenslet centre sees view `(u_c + dy / step_y, v_c + dx / step_x)` at the
//! lenslet's spatial position. Sampling between views is bilinear, unlike the
//! decoder's bicubic, so a round trip exercises two independent code paths.

mod scenes;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use scenes::{synth_lightfield, SceneKind, COLOR_CHART_PALETTE};

use crate::colour::{lab_to_rgb, rgb_to_lab};
use crate::decode::{BayerPattern, CfaColour, PlenopticRaw, WhiteBalanceFactors, WhiteImage};
use crate::error::{Error, Result};
use crate::grid::LensletGrid;
use crate::image::Image;
use crate::lightfield::{ColourSpace, LightField};

/// Peak white image response at a lenslet centre.
pub const WI_PEAK: f64 = 0.95;
/// Value written at hot pixels of a simulated white image.
pub const HOT_PIXEL_VALUE: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub grid: LensletGrid,
    /// Gaussian falloff width as a fraction of the micro-lens radius.
    pub vignette_sigma: f64,
    pub wb_gains_applied: WhiteBalanceFactors,
    pub noise_sigma: f64,
    pub hot_pixel_count: usize,
    pub pattern: BayerPattern,
    pub seed: u64,
}

impl SimParams {
    pub fn new(grid: LensletGrid) -> Self {
        SimParams {
            grid,
            vignette_sigma: 0.6,
            wb_gains_applied: WhiteBalanceFactors::UNITY,
            noise_sigma: 0.0,
            hot_pixel_count: 0,
            pattern: BayerPattern::Rggb,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.wb_gains_applied.validate()?;
        if !(self.vignette_sigma > 0.0) {
            return Err(Error::invalid("vignette_sigma must be positive"));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::invalid("noise_sigma must be non-negative"));
        }
        Ok(())
    }

    fn check_sensor(&self, width: usize, height: usize) -> Result<()> {
        self.validate()?;
        if !self.grid.fits_sensor(width, height) {
            return Err(Error::invalid(format!(
                "lenslet grid does not fit a {width}x{height} sensor"
            )));
        }
        if self.hot_pixel_count > width * height {
            return Err(Error::invalid("more hot pixels than sensor samples"));
        }
        Ok(())
    }

    /// Gaussian vignetting factor in `[0, 1]` at a sensor position.
    pub fn vignetting(&self, x: f64, y: f64) -> f64 {
        let hit = self.grid.nearest_lens(x, y);
        let s = self.vignette_sigma * self.grid.radius();
        (-(hit.dx * hit.dx + hit.dy * hit.dy) / (2.0 * s * s)).exp()
    }

    fn site_gain(&self, x: usize, y: usize) -> f64 {
        self.wb_gains_applied.gain_for(self.pattern.colour_at(x, y))
    }
}

/// Adds `delta` to the CIELAB lightness of every non-centre view, clipping
/// the result to the RGB gamut. Builds fixtures whose views disagree in colour.
pub fn shift_lightness(lf: &LightField, delta: f64) -> Result<LightField> {
    if lf.colour_space() != ColourSpace::LinearRgb {
        return Err(Error::invalid("lightness shift expects a linear RGB light field"));
    }
    let centre = lf.centre();
    let white = lf.white_point();
    lf.map_views(ColourSpace::LinearRgb, |v, img| {
        if v == centre {
            return Ok(img.clone());
        }
        let mut lab = rgb_to_lab(img, white)?;
        for px in lab.data_mut().chunks_exact_mut(3) {
            px[0] += delta;
        }
        Ok(lab_to_rgb(&lab, white)?.image)
    })
}

/// Synthesizes the white image a camera with `params` would record.
///
/// Red and blue sites are divided by the applied white-balance gains, so that
/// multiplying by the same gains during decoding restores a neutral response.
pub fn synth_white_image(params: &SimParams, width: usize, height: usize) -> Result<WhiteImage> {
    params.check_sensor(width, height)?;
    let mut img = Image::from_fn(width, height, 1, |x, y| {
        let v = WI_PEAK * params.vignetting(x as f64, y as f64) / params.site_gain(x, y);
        [v, 0.0, 0.0]
    });
    if params.hot_pixel_count > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ 0x407_b1c5);
        for i in sample(&mut rng, width * height, params.hot_pixel_count) {
            img.data_mut()[i] = HOT_PIXEL_VALUE;
        }
    }
    WhiteImage::new(img, params.pattern)
}

/// Bilinear sample of channel `c` at fractional view `(u, v)` and spatial
/// position `(s, t)`, all clamped to the light field's extent.
fn sample_lf(lf: &LightField, u: f64, v: f64, s: f64, t: f64, c: usize) -> f64 {
    fn split(p: f64, n: usize) -> (usize, usize, f64) {
        let p = p.clamp(0.0, (n - 1) as f64);
        let i = (p.floor() as usize).min(n - 1);
        let j = (i + 1).min(n - 1);
        (i, j, p - i as f64)
    }
    let (u0, u1, fu) = split(u, lf.rows());
    let (v0, v1, fv) = split(v, lf.cols());
    let (s0, s1, fs) = split(s, lf.height());
    let (t0, t1, ft) = split(t, lf.width());
    let spatial = |img: &Image| {
        let top = img.get(t0, s0, c) * (1.0 - ft) + img.get(t1, s0, c) * ft;
        let bottom = img.get(t0, s1, c) * (1.0 - ft) + img.get(t1, s1, c) * ft;
        top * (1.0 - fs) + bottom * fs
    };
    let view = |r: usize, q: usize| spatial(&lf.views()[r * lf.cols() + q]);
    let near = view(u0, v0) * (1.0 - fv) + view(u0, v1) * fv;
    let far = view(u1, v0) * (1.0 - fv) + view(u1, v1) * fv;
    near * (1.0 - fu) + far * fu
}

/// Type-7 sample quantile by full sort.
fn sorted_quantile(mut values: Vec<f64>, p: f64) -> f64 {
    values.sort_by(f64::total_cmp);
    let h = (values.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(values.len() - 1);
    values[lo] + (h - lo as f64) * (values[hi] - values[lo])
}

/// Renders the RAW mosaic a camera with `params` records of `lf`.
///
/// The exposure is scaled by `WI_PEAK / q`, where `q` is the 0.999 quantile of
/// the white-balanced white image, so a noise-free capture decodes back to the
/// light field's own intensities.
pub fn simulate_raw(lf: &LightField, params: &SimParams, width: usize, height: usize) -> Result<PlenopticRaw> {
    params.check_sensor(width, height)?;
    if lf.colour_space() != ColourSpace::LinearRgb {
        return Err(Error::invalid("simulate_raw expects a linear RGB light field"));
    }
    if lf.rows() < 2 || lf.cols() < 2 {
        return Err(Error::invalid(format!(
            "light field needs at least 2x2 views, got {}x{}",
            lf.rows(),
            lf.cols()
        )));
    }
    let grid = &params.grid;
    if lf.width() != grid.lens_cols || lf.height() != grid.lens_rows {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{} views", grid.lens_cols, grid.lens_rows),
            actual: format!("{}x{}", lf.width(), lf.height()),
        });
    }

    let wi = synth_white_image(params, width, height)?;
    let balanced: Vec<f64> = (0..width * height)
        .map(|i| wi.sensor.data()[i] * params.site_gain(i % width, i / width))
        .collect();
    let q = sorted_quantile(balanced, 0.999);

    let step_x = grid.spacing_x / lf.cols() as f64;
    let step_y = grid.spacing_y / lf.rows() as f64;
    let (uc, vc) = ((lf.rows() / 2) as f64, (lf.cols() / 2) as f64);
    let noise = Normal::new(0.0, params.noise_sigma).map_err(|e| Error::invalid(e.to_string()))?;

    let rows: Vec<Vec<f64>> = (0..height)
        .into_par_iter()
        .map(|y| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(y as u64);
            (0..width)
                .map(|x| {
                    let (px, py) = (x as f64, y as f64);
                    let hit = grid.nearest_lens(px, py);
                    let u = uc + hit.dy / step_y;
                    let v = vc + hit.dx / step_x;
                    let c = match params.pattern.colour_at(x, y) {
                        CfaColour::Red => 0,
                        CfaColour::Green => 1,
                        CfaColour::Blue => 2,
                    };
                    let radiance = sample_lf(lf, u, v, hit.row as f64, hit.col as f64, c);
                    let mut value = radiance * WI_PEAK * params.vignetting(px, py) / q;
                    if params.noise_sigma > 0.0 {
                        value += noise.sample(&mut rng);
                    }
                    value.clamp(0.0, 1.0)
                })
                .collect()
        })
        .collect();
    let sensor = Image::from_vec(width, height, 1, rows.concat())?;
    PlenopticRaw::new(sensor, params.pattern, 0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decode::{decode, devignette, normalize_white_image, DecodeParams};
    use crate::image::psnr;
    use crate::lightfield::ViewIndex;

    fn params(lenses: usize) -> SimParams {
        SimParams::new(LensletGrid::square(10.0, lenses, lenses))
    }

    #[test]
    fn white_image_peaks_at_lens_centres() {
        let mut p = params(4);
        p.wb_gains_applied = WhiteBalanceFactors::new(2.0, 1.5).unwrap();
        let wi = synth_white_image(&p, 40, 40).unwrap();
        // centres at (5 + 10 t, 5 + 10 s); (5, 5) is a blue site under RGGB
        assert!((wi.sensor.get(5, 5, 0) - 0.95 / 1.5).abs() < 1e-6);
        assert!((wi.sensor.get(15, 5, 0) - 0.95 / 1.5).abs() < 1e-6);
        // (6, 5) is green, one pixel from the centre
        let s: f64 = 0.6 * 5.0;
        let expect = 0.95 * (-1.0 / (2.0 * s * s)).exp();
        assert!((wi.sensor.get(6, 5, 0) - expect).abs() < 1e-12);
    }

    #[test]
    fn huge_sigma_gives_uniform_white_image() {
        let mut p = params(3);
        p.vignette_sigma = 1e3;
        p.wb_gains_applied = WhiteBalanceFactors::new(2.0, 1.0).unwrap();
        let wi = synth_white_image(&p, 30, 30).unwrap();
        for y in 0..30 {
            for x in 0..30 {
                let expect = if (x % 2, y % 2) == (0, 0) { 0.475 } else { 0.95 };
                assert!((wi.sensor.get(x, y, 0) - expect).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn hot_pixel_count_is_exact() {
        let mut p = params(3);
        p.hot_pixel_count = 5;
        let wi = synth_white_image(&p, 30, 30).unwrap();
        assert_eq!(wi.sensor.data().iter().filter(|&&v| v == HOT_PIXEL_VALUE).count(), 5);
    }

    #[test]
    fn white_scene_decodes_to_ones() {
        let mut p = params(4);
        p.wb_gains_applied = WhiteBalanceFactors::new(1.8, 1.4).unwrap();
        let lf = LightField::from_views_fn(3, 3, ColourSpace::LinearRgb, |_| Image::filled(4, 4, 3, 1.0)).unwrap();
        let raw = simulate_raw(&lf, &p, 40, 40).unwrap();
        let wi = synth_white_image(&p, 40, 40).unwrap();
        let norm = normalize_white_image(&wi, p.wb_gains_applied, 0.999).unwrap();
        let out = devignette(&raw, &norm).unwrap();
        for (i, &v) in out.image.data().iter().enumerate() {
            if !out.invalid[i] {
                assert!((v - 1.0).abs() < 1e-9, "{i}: {v}");
            }
        }
    }

    #[test]
    fn flat_white_scene_reproduces_white_image_pattern() {
        let p = params(4);
        let lf = LightField::from_views_fn(3, 3, ColourSpace::LinearRgb, |_| Image::filled(4, 4, 3, 1.0)).unwrap();
        let raw = simulate_raw(&lf, &p, 40, 40).unwrap();
        let wi = synth_white_image(&p, 40, 40).unwrap();
        let ratio = raw.sensor.get(5, 5, 0) / wi.sensor.get(5, 5, 0);
        for (r, w) in raw.sensor.data().iter().zip(wi.sensor.data()) {
            assert!((r - ratio * w).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = params(4);
        let lf = LightField::from_views_fn(1, 1, ColourSpace::LinearRgb, |_| Image::filled(4, 4, 3, 1.0)).unwrap();
        assert!(simulate_raw(&lf, &p, 40, 40).is_err());
        let lf = LightField::from_views_fn(3, 3, ColourSpace::LinearRgb, |_| Image::filled(5, 4, 3, 1.0)).unwrap();
        assert!(matches!(simulate_raw(&lf, &p, 40, 40), Err(Error::DimensionMismatch { .. })));
        let mut bad = p;
        bad.vignette_sigma = 0.0;
        assert!(synth_white_image(&bad, 40, 40).is_err());
        assert!(synth_white_image(&p, 20, 20).is_err());
    }

    #[test]
    fn noise_is_seeded() {
        let mut p = params(4);
        p.noise_sigma = 0.02;
        let lf = synth_lightfield(SceneKind::FlatGrey, 3, 3, 4, 4, 0.0).unwrap();
        let a = simulate_raw(&lf, &p, 40, 40).unwrap();
        let b = simulate_raw(&lf, &p, 40, 40).unwrap();
        assert_eq!(a, b);
        p.seed = 1;
        assert_ne!(a, simulate_raw(&lf, &p, 40, 40).unwrap());
    }

    #[test]
    fn smooth_scene_round_trip() {
        let (n, lenses) = (9, 24);
        let p = params(lenses);
        let lf = synth_lightfield(SceneKind::SmoothGradient, n, n, lenses, lenses, 0.0).unwrap();
        let raw = simulate_raw(&lf, &p, 240, 240).unwrap();
        let wi = synth_white_image(&p, 240, 240).unwrap();
        let out = decode(&raw, &wi, WhiteBalanceFactors::UNITY, &p.grid, &DecodeParams::default()).unwrap();
        let c = ViewIndex::new(n / 2, n / 2);
        let centre = psnr(out.view(c), lf.view(c)).unwrap();
        assert!(centre >= 40.0, "centre PSNR {centre:.2}");
        for v in out.valid_indices() {
            let db = psnr(out.view(v), lf.view(v)).unwrap();
            assert!(db >= 32.0, "view {v} PSNR {db:.2}");
        }
    }

    #[test]
    fn lightness_shift_spares_the_centre() {
        let lf = synth_lightfield(SceneKind::SmoothGradient, 3, 3, 16, 16, 0.0).unwrap();
        let shifted = shift_lightness(&lf, 10.0).unwrap();
        assert_eq!(shifted.centre_view(), lf.centre_view());
        let v = ViewIndex::new(0, 2);
        let a = rgb_to_lab(lf.view(v), lf.white_point()).unwrap();
        let b = rgb_to_lab(shifted.view(v), lf.white_point()).unwrap();
        assert!((b.get(3, 3, 0) - a.get(3, 3, 0) - 10.0).abs() < 1e-4);
    }
}

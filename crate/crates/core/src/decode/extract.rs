//! Sub-aperture view extraction by resampling the demosaiced sensor at each
//! lenslet's view-dependent position.

use rayon::prelude::*;

use crate::decode::{DecodeParams, Interpolation, WhiteImage, WEIGHT_FLOOR};
use crate::error::{Error, Result};
use crate::grid::LensletGrid;
use crate::image::Image;
use crate::lightfield::{ColourSpace, LightField, ViewIndex};

#[inline]
fn keys_cubic(t: f64) -> f64 {
    const A: f64 = -0.5;
    let t = t.abs();
    if t <= 1.0 {
        ((A + 2.0) * t - (A + 3.0)) * t * t + 1.0
    } else if t < 2.0 {
        ((A * t - 5.0 * A) * t + 8.0 * A) * t - 4.0 * A
    } else {
        0.0
    }
}

/// Keys (a = -0.5) cubic weights for the taps `floor(p) - 1 ..= floor(p) + 2`.
#[inline]
pub fn bicubic_weights(p: f64) -> (isize, [f64; 4]) {
    let i = p.floor();
    let f = p - i;
    (
        i as isize - 1,
        [keys_cubic(f + 1.0), keys_cubic(f), keys_cubic(1.0 - f), keys_cubic(2.0 - f)],
    )
}

struct Sampler<'a> {
    rgb: &'a Image,
    weights: Option<&'a [f64]>,
}

impl Sampler<'_> {
    /// Bicubic sample at a continuous sensor position. With white image
    /// weights, each tap's kernel weight is multiplied by the white image
    /// value there and the result renormalized.
    fn sample(&self, px: f64, py: f64) -> [f64; 3] {
        let (w, h) = (self.rgb.width() as isize, self.rgb.height() as isize);
        let (x0, kx) = bicubic_weights(px);
        let (y0, ky) = bicubic_weights(py);
        let data = self.rgb.data();
        let mut plain = [0.0; 3];
        let mut plain_norm = 0.0;
        let mut guided = [0.0; 3];
        let mut guided_norm = 0.0;
        for (j, wy) in ky.iter().enumerate() {
            let yy = (y0 + j as isize).clamp(0, h - 1) as usize;
            for (i, wx) in kx.iter().enumerate() {
                let xx = (x0 + i as isize).clamp(0, w - 1) as usize;
                let k = wx * wy;
                let idx = yy * w as usize + xx;
                let px = &data[idx * 3..idx * 3 + 3];
                plain_norm += k;
                for c in 0..3 {
                    plain[c] += k * px[c];
                }
                if let Some(wi) = self.weights {
                    let kw = k * wi[idx].max(0.0);
                    guided_norm += kw;
                    for c in 0..3 {
                        guided[c] += kw * px[c];
                    }
                }
            }
        }
        if self.weights.is_some() && guided_norm >= WEIGHT_FLOOR {
            guided.map(|v| v / guided_norm)
        } else {
            plain.map(|v| v / plain_norm)
        }
    }
}

/// Resamples a demosaiced, devignetted sensor image into a light field of
/// `num_views_u` x `num_views_v` views, each `lens_cols` x `lens_rows` pixels.
///
/// View `(u, v)` of lenslet `(s, t)` is read at
/// `lens_centre(s, t) + R * ((v - v_c) * dx, (u - u_c) * dy)` with
/// `dx = spacing_x / num_views_v` and `dy = spacing_y / num_views_u`.
/// Views are independent and extracted in parallel.
pub fn extract_views(
    devig: &Image,
    wi_norm: &WhiteImage,
    grid: &LensletGrid,
    params: &DecodeParams,
) -> Result<LightField> {
    params.validate()?;
    grid.validate()?;
    devig.require_channels(3)?;
    if devig.width() != wi_norm.sensor.width() || devig.height() != wi_norm.sensor.height() {
        return Err(Error::DimensionMismatch {
            expected: devig.shape_string(),
            actual: wi_norm.sensor.shape_string(),
        });
    }
    let (nu, nv) = (params.num_views_u, params.num_views_v);
    let dx = grid.spacing_x / nv as f64;
    let dy = grid.spacing_y / nu as f64;
    if dx < 1.0 || dy < 1.0 {
        return Err(Error::invalid(format!(
            "{nu}x{nv} views need at least one sensor pixel per view step (got {dx:.3} x {dy:.3})"
        )));
    }
    let sampler = Sampler {
        rgb: devig,
        weights: match params.interpolation {
            Interpolation::Bicubic => None,
            Interpolation::WiGuidedBicubic => Some(wi_norm.sensor.data()),
        },
    };
    let (uc, vc) = ((nu / 2) as f64, (nv / 2) as f64);
    let (lw, lh) = (grid.lens_cols, grid.lens_rows);
    let views: Vec<Image> = (0..nu * nv)
        .into_par_iter()
        .map(|i| {
            let (u, v) = ((i / nv) as f64, (i % nv) as f64);
            let (ox, oy) = grid.rotate((v - vc) * dx, (u - uc) * dy);
            let mut img = Image::new(lw, lh, 3);
            for s in 0..lh {
                for t in 0..lw {
                    let (cx, cy) = grid.lens_centre(s, t);
                    img.set_pixel(t, s, sampler.sample(cx + ox, cy + oy));
                }
            }
            img
        })
        .collect();

    let valid: Vec<bool> = views
        .iter()
        .enumerate()
        .map(|(i, img)| i == (nu / 2) * nv + nv / 2 || img.luminance().mean() >= params.dark_view_luma_floor)
        .collect();
    LightField::with_mask(nu, nv, views, valid, ColourSpace::LinearRgb)
}

/// Sensor position sampled for view `v` of lenslet `(s, t)`.
pub fn view_position(grid: &LensletGrid, params: &DecodeParams, v: ViewIndex, s: usize, t: usize) -> (f64, f64) {
    let dx = grid.spacing_x / params.num_views_v as f64;
    let dy = grid.spacing_y / params.num_views_u as f64;
    let (cx, cy) = grid.lens_centre(s, t);
    let (ox, oy) = grid.rotate(
        (v.col as f64 - (params.num_views_v / 2) as f64) * dx,
        (v.row as f64 - (params.num_views_u / 2) as f64) * dy,
    );
    (cx + ox, cy + oy)
}

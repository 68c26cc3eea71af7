//! Deterministic procedural light fields used as ground truth.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::lightfield::{ColourSpace, LightField};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SceneKind {
    FlatGrey,
    SmoothGradient,
    TexturedDisparity,
    ColorChart,
}

impl std::str::FromStr for SceneKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flat-grey" => Ok(SceneKind::FlatGrey),
            "smooth-gradient" => Ok(SceneKind::SmoothGradient),
            "textured-disparity" => Ok(SceneKind::TexturedDisparity),
            "color-chart" => Ok(SceneKind::ColorChart),
            _ => Err(Error::invalid(format!("unknown scene {s:?}"))),
        }
    }
}

/// Linear RGB patch colours of the chart scene, row-major over 4 rows x 6 columns.
pub const COLOR_CHART_PALETTE: [[f64; 3]; 24] = [
    [0.1714, 0.0844, 0.0565],
    [0.5394, 0.3005, 0.2232],
    [0.1226, 0.1946, 0.3372],
    [0.1009, 0.1511, 0.0529],
    [0.2416, 0.2159, 0.4342],
    [0.1329, 0.5153, 0.4057],
    [0.6777, 0.2016, 0.0257],
    [0.0865, 0.1059, 0.3948],
    [0.5395, 0.0890, 0.1238],
    [0.1078, 0.0425, 0.1420],
    [0.3435, 0.5029, 0.0482],
    [0.7454, 0.3657, 0.0247],
    [0.0330, 0.0511, 0.2867],
    [0.0708, 0.2955, 0.0655],
    [0.4479, 0.0332, 0.0435],
    [0.8388, 0.5775, 0.0109],
    [0.5177, 0.0840, 0.3017],
    [0.0000, 0.2362, 0.3763],
    [0.8754, 0.8767, 0.8592],
    [0.5858, 0.5900, 0.5874],
    [0.3574, 0.3641, 0.3648],
    [0.1903, 0.1932, 0.1946],
    [0.0866, 0.0886, 0.0903],
    [0.0313, 0.0313, 0.0324],
];

const TEXTURE_SEED: u64 = 0x1f_5eed;

/// Sum of incommensurate plane waves, so patches are locally distinctive.
struct Texture {
    waves: Vec<[f64; 5]>, // kx, ky, phase, amplitude, channel
}

impl Texture {
    fn new() -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(TEXTURE_SEED);
        let mut waves = Vec::new();
        for channel in 0..3 {
            for _ in 0..5 {
                let wavelength = rng.random_range(5.0..18.0);
                let angle = rng.random_range(0.0..PI);
                let k = 2.0 * PI / wavelength;
                waves.push([
                    k * angle.cos(),
                    k * angle.sin(),
                    rng.random_range(0.0..2.0 * PI),
                    rng.random_range(0.03..0.07),
                    channel as f64,
                ]);
            }
        }
        Texture { waves }
    }

    fn eval(&self, x: f64, y: f64) -> [f64; 3] {
        let mut out = [0.45, 0.5, 0.4];
        for w in &self.waves {
            out[w[4] as usize] += w[3] * (w[0] * x + w[1] * y + w[2]).sin();
        }
        out
    }
}

fn scene_value(kind: SceneKind, texture: &Texture, x: f64, y: f64, w: usize, h: usize) -> [f64; 3] {
    match kind {
        SceneKind::FlatGrey => [0.5; 3],
        SceneKind::SmoothGradient => {
            let (fx, fy) = (x / w as f64, y / h as f64);
            [
                0.25 + 0.5 * fx,
                0.3 + 0.4 * fy,
                0.45 + 0.15 * (PI * (fx + fy)).sin(),
            ]
        }
        SceneKind::TexturedDisparity => texture.eval(x, y),
        SceneKind::ColorChart => {
            let col = ((x / w as f64) * 6.0).floor().clamp(0.0, 5.0) as usize;
            let row = ((y / h as f64) * 4.0).floor().clamp(0.0, 3.0) as usize;
            COLOR_CHART_PALETTE[row * 6 + col]
        }
    }
}

/// Renders a `rows` x `cols` light field of `width` x `height` views.
///
/// View `(u, v)` is the centre view translated by
/// `(disparity * (v - v_c), disparity * (u - u_c))` pixels.
pub fn synth_lightfield(
    kind: SceneKind,
    rows: usize,
    cols: usize,
    width: usize,
    height: usize,
    disparity: f64,
) -> Result<LightField> {
    if disparity.abs() * rows.max(cols) as f64 >= width as f64 / 4.0 {
        return Err(Error::invalid(format!(
            "disparity {disparity} too large for {rows}x{cols} views of width {width}"
        )));
    }
    let texture = Texture::new();
    let (uc, vc) = ((rows / 2) as f64, (cols / 2) as f64);
    LightField::from_views_fn(rows, cols, ColourSpace::LinearRgb, |v| {
        let sx = disparity * (v.col as f64 - vc);
        let sy = disparity * (v.row as f64 - uc);
        Image::from_fn(width, height, 3, |x, y| {
            scene_value(kind, &texture, x as f64 - sx, y as f64 - sy, width, height)
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lightfield::ViewIndex;

    #[test]
    fn flat_grey_is_constant() {
        let lf = synth_lightfield(SceneKind::FlatGrey, 3, 3, 16, 12, 0.0).unwrap();
        assert!(lf.views().iter().all(|v| v.data().iter().all(|&x| x == 0.5)));
    }

    #[test]
    fn textured_views_are_translated_centre_views() {
        let d = 2.0;
        let lf = synth_lightfield(SceneKind::TexturedDisparity, 5, 5, 48, 40, d).unwrap();
        let c = lf.centre_view();
        let view = lf.view(ViewIndex::new(3, 0));
        // shift = (d * (0 - 2), d * (3 - 2)) = (-4, 2)
        for y in 4..36 {
            for x in 4..40 {
                let moved = view.pixel(x, y);
                let orig = c.pixel(x + 4, y - 2);
                for ch in 0..3 {
                    assert!((moved[ch] - orig[ch]).abs() < 1e-12);
                }
            }
        }
        assert!(lf.views().iter().all(|v| v.data().iter().all(|x| (0.0..=1.0).contains(x))));
    }

    #[test]
    fn chart_corner_patch() {
        let lf = synth_lightfield(SceneKind::ColorChart, 1, 1, 60, 40, 0.0).unwrap();
        assert_eq!(lf.centre_view().pixel(2, 2), COLOR_CHART_PALETTE[0]);
        assert_eq!(lf.centre_view().pixel(59, 39), COLOR_CHART_PALETTE[23]);
    }

    #[test]
    fn excessive_disparity_rejected() {
        assert!(synth_lightfield(SceneKind::TexturedDisparity, 5, 5, 32, 32, 2.0).is_err());
    }

    #[test]
    fn deterministic() {
        let a = synth_lightfield(SceneKind::TexturedDisparity, 3, 3, 20, 20, 0.5).unwrap();
        let b = synth_lightfield(SceneKind::TexturedDisparity, 3, 3, 20, 20, 0.5).unwrap();
        assert_eq!(a, b);
    }
}

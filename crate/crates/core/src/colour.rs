//! Colour science: the sRGB transfer curve and the linear RGB → XYZ → CIELAB
//! chain using Rec.709 primaries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

/// Linear Rec.709 RGB to CIE XYZ (D65).
pub const RGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];

/// CIE XYZ (D65) to linear Rec.709 RGB.
pub const XYZ_TO_RGB: [[f64; 3]; 3] = [
    [3.2404542, -1.5371385, -0.4985314],
    [-0.9692660, 1.8760108, 0.0415560],
    [0.0556434, -0.2040259, 1.0572252],
];

const SRGB_KNEE: f64 = 0.0031308;
const LAB_EPSILON: f64 = 216.0 / 24389.0;
const LAB_KAPPA: f64 = 24389.0 / 27.0;

/// Reference white in XYZ, used to normalize before the CIELAB nonlinearity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WhitePoint(pub [f64; 3]);

impl WhitePoint {
    pub const D65: WhitePoint = WhitePoint([0.95047, 1.0, 1.08883]);

    pub fn validate(&self) -> Result<()> {
        if self.0.iter().all(|&v| v > 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(Error::invalid(format!("white point {:?} must be strictly positive", self.0)))
        }
    }
}

impl Default for WhitePoint {
    fn default() -> Self {
        WhitePoint::D65
    }
}

/// A CIELAB colour: `l` in `[0, 100]`, `a` and `b` roughly in `[-128, 127]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LabColor {
    pub l: f64,
    pub a: f64,
    pub b: f64,
}

impl LabColor {
    pub const fn new(l: f64, a: f64, b: f64) -> Self {
        LabColor { l, a, b }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.l, self.a, self.b]
    }

    pub fn from_array(v: [f64; 3]) -> Self {
        LabColor::new(v[0], v[1], v[2])
    }

    /// CIE76 colour difference.
    pub fn delta_e(self, other: LabColor) -> f64 {
        let dl = self.l - other.l;
        let da = self.a - other.a;
        let db = self.b - other.b;
        (dl * dl + da * da + db * db).sqrt()
    }
}

#[inline]
pub(crate) fn mat3_mul(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

/// sRGB opto-electronic transfer function for one sample in `[0, 1]`.
#[inline]
pub fn srgb_encode_value(v: f64) -> f64 {
    let v = v.clamp(0.0, 1.0);
    if v <= SRGB_KNEE {
        12.92 * v
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    }
}

/// Inverse of [`srgb_encode_value`].
#[inline]
pub fn srgb_decode_value(v: f64) -> f64 {
    let v = v.clamp(0.0, 1.0);
    if v <= 0.04045 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

/// Applies the sRGB transfer curve to a linear RGB image. Samples are clipped
/// to `[0, 1]` first.
pub fn srgb_encode(img: &Image) -> Result<Image> {
    img.require_channels(3)?;
    Ok(img.map(srgb_encode_value))
}

pub fn srgb_decode(img: &Image) -> Result<Image> {
    img.require_channels(3)?;
    Ok(img.map(srgb_decode_value))
}

#[inline]
fn lab_f(t: f64) -> f64 {
    if t > LAB_EPSILON {
        t.cbrt()
    } else {
        (LAB_KAPPA * t + 16.0) / 116.0
    }
}

#[inline]
fn lab_f_inv(f: f64) -> f64 {
    let f3 = f * f * f;
    if f3 > LAB_EPSILON {
        f3
    } else {
        (116.0 * f - 16.0) / LAB_KAPPA
    }
}

pub fn xyz_to_lab(xyz: [f64; 3], white: WhitePoint) -> LabColor {
    let fx = lab_f(xyz[0] / white.0[0]);
    let fy = lab_f(xyz[1] / white.0[1]);
    let fz = lab_f(xyz[2] / white.0[2]);
    LabColor::new(116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz))
}

pub fn lab_to_xyz(lab: LabColor, white: WhitePoint) -> [f64; 3] {
    let fy = (lab.l + 16.0) / 116.0;
    let fx = fy + lab.a / 500.0;
    let fz = fy - lab.b / 200.0;
    [
        white.0[0] * lab_f_inv(fx),
        white.0[1] * lab_f_inv(fy),
        white.0[2] * lab_f_inv(fz),
    ]
}

pub fn linear_rgb_to_lab(rgb: [f64; 3], white: WhitePoint) -> LabColor {
    xyz_to_lab(mat3_mul(&RGB_TO_XYZ, rgb), white)
}

/// LAB to linear RGB without any gamut clipping.
pub fn lab_to_linear_rgb_unclipped(lab: LabColor, white: WhitePoint) -> [f64; 3] {
    mat3_mul(&XYZ_TO_RGB, lab_to_xyz(lab, white))
}

pub fn rgb_to_lab(img: &Image, white: WhitePoint) -> Result<Image> {
    img.require_channels(3)?;
    white.validate()?;
    let mut out = img.clone();
    for px in out.data_mut().chunks_exact_mut(3) {
        let lab = linear_rgb_to_lab([px[0], px[1], px[2]], white);
        px.copy_from_slice(&lab.to_array());
    }
    Ok(out)
}

/// Result of a LAB → RGB conversion: the clipped image and the number of
/// pixels that had at least one channel outside `[0, 1]`.
#[derive(Clone, Debug)]
pub struct GamutClipped {
    pub image: Image,
    pub clipped_pixels: usize,
}

pub fn lab_to_rgb(img: &Image, white: WhitePoint) -> Result<GamutClipped> {
    img.require_channels(3)?;
    white.validate()?;
    let mut out = img.clone();
    let mut clipped_pixels = 0;
    for px in out.data_mut().chunks_exact_mut(3) {
        let rgb = lab_to_linear_rgb_unclipped(LabColor::new(px[0], px[1], px[2]), white);
        let mut clipped = false;
        for (dst, v) in px.iter_mut().zip(rgb) {
            // Tolerate rounding noise at the gamut boundary.
            if !(-1e-9..=1.0 + 1e-9).contains(&v) {
                clipped = true;
            }
            *dst = v.clamp(0.0, 1.0);
        }
        clipped_pixels += usize::from(clipped);
    }
    Ok(GamutClipped {
        image: out,
        clipped_pixels,
    })
}

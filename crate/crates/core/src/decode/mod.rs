//! Lenslet RAW decoding: white image normalization, devignetting,
//! demosaicing and sub-aperture view extraction.
//!
//! [`decode`] runs the stages in that order. Devignetting comes first so that
//! the demosaicing filters see a sensor with roughly uniform brightness.

mod demosaic;
mod extract;
mod white;

use serde::{Deserialize, Serialize};

pub use demosaic::demosaic;
pub use extract::{bicubic_weights, extract_views, view_position};
pub use white::{apply_white_balance, devignette, normalize_white_image, quantile, Devignetted};

use crate::error::{Error, Result};
use crate::grid::LensletGrid;
use crate::image::Image;
use crate::lightfield::LightField;

/// White image samples below this floor are treated as unreliable.
pub const WI_FLOOR: f64 = 1e-3;
/// Below this summed tap weight the WI-guided interpolator falls back to plain bicubic.
pub const WEIGHT_FLOOR: f64 = 1e-6;

/// Colour of a CFA site.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CfaColour {
    Red = 0,
    Green = 1,
    Blue = 2,
}

/// 2x2 Bayer tile, named by its top-left, top-right, bottom-left, bottom-right sites.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum BayerPattern {
    Rggb,
    Grbg,
    Gbrg,
    Bggr,
}

impl BayerPattern {
    #[inline]
    pub fn colour_at(self, x: usize, y: usize) -> CfaColour {
        use CfaColour::*;
        let tile = match self {
            BayerPattern::Rggb => [Red, Green, Green, Blue],
            BayerPattern::Grbg => [Green, Red, Blue, Green],
            BayerPattern::Gbrg => [Green, Blue, Red, Green],
            BayerPattern::Bggr => [Blue, Green, Green, Red],
        };
        tile[(y & 1) * 2 + (x & 1)]
    }
}

impl std::str::FromStr for BayerPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "RGGB" => Ok(BayerPattern::Rggb),
            "GRBG" => Ok(BayerPattern::Grbg),
            "GBRG" => Ok(BayerPattern::Gbrg),
            "BGGR" => Ok(BayerPattern::Bggr),
            _ => Err(Error::invalid(format!("unknown Bayer pattern {s:?}"))),
        }
    }
}

/// Single-channel sensor mosaic with its levels.
#[derive(Clone, Debug, PartialEq)]
pub struct PlenopticRaw {
    pub sensor: Image,
    pub pattern: BayerPattern,
    pub black_level: f64,
    pub saturation_level: f64,
}

impl PlenopticRaw {
    pub fn new(sensor: Image, pattern: BayerPattern, black_level: f64, saturation_level: f64) -> Result<Self> {
        sensor.require_channels(1)?;
        if !(black_level < saturation_level) {
            return Err(Error::invalid("black level must be below the saturation level"));
        }
        Ok(PlenopticRaw {
            sensor,
            pattern,
            black_level,
            saturation_level,
        })
    }

    /// Subtracts the black level and rescales so the saturation level maps to 1.
    pub fn linearized(&self) -> PlenopticRaw {
        PlenopticRaw {
            sensor: linearize(&self.sensor, self.black_level, self.saturation_level),
            pattern: self.pattern,
            black_level: 0.0,
            saturation_level: 1.0,
        }
    }
}

pub(crate) fn linearize(img: &Image, black: f64, sat: f64) -> Image {
    if black == 0.0 && sat == 1.0 {
        return img.clone();
    }
    let range = sat - black;
    img.map(|v| ((v - black) / range).clamp(0.0, 1.0))
}

/// Flat-field capture recording the micro-lens vignetting pattern.
#[derive(Clone, Debug, PartialEq)]
pub struct WhiteImage {
    pub sensor: Image,
    pub pattern: BayerPattern,
}

impl WhiteImage {
    pub fn new(sensor: Image, pattern: BayerPattern) -> Result<Self> {
        sensor.require_channels(1)?;
        Ok(WhiteImage { sensor, pattern })
    }

    /// Positions whose sample is below [`WI_FLOOR`].
    pub fn unreliable_mask(&self) -> Vec<bool> {
        self.sensor.data().iter().map(|&v| v < WI_FLOOR).collect()
    }
}

/// Red and blue white-balance gains; green is fixed at 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WhiteBalanceFactors {
    pub r_gain: f64,
    pub b_gain: f64,
}

impl WhiteBalanceFactors {
    pub const UNITY: WhiteBalanceFactors = WhiteBalanceFactors { r_gain: 1.0, b_gain: 1.0 };

    pub fn new(r_gain: f64, b_gain: f64) -> Result<Self> {
        let wb = WhiteBalanceFactors { r_gain, b_gain };
        wb.validate()?;
        Ok(wb)
    }

    pub fn validate(&self) -> Result<()> {
        if self.r_gain > 0.0 && self.b_gain > 0.0 && self.r_gain.is_finite() && self.b_gain.is_finite() {
            Ok(())
        } else {
            Err(Error::invalid("white balance gains must be positive"))
        }
    }

    #[inline]
    pub fn gain_for(&self, c: CfaColour) -> f64 {
        match c {
            CfaColour::Red => self.r_gain,
            CfaColour::Green => 1.0,
            CfaColour::Blue => self.b_gain,
        }
    }
}

impl Default for WhiteBalanceFactors {
    fn default() -> Self {
        Self::UNITY
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Interpolation {
    Bicubic,
    #[serde(alias = "wi-guided")]
    WiGuidedBicubic,
}

impl std::str::FromStr for Interpolation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bicubic" => Ok(Interpolation::Bicubic),
            "wi-guided" | "wi-guided-bicubic" => Ok(Interpolation::WiGuidedBicubic),
            _ => Err(Error::invalid(format!("unknown interpolation {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DemosaicMethod {
    GradientCorrectedBilinear,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeParams {
    pub num_views_u: usize,
    pub num_views_v: usize,
    pub interpolation: Interpolation,
    pub demosaic: DemosaicMethod,
    pub percentile: f64,
    pub dark_view_luma_floor: f64,
}

impl Default for DecodeParams {
    fn default() -> Self {
        DecodeParams {
            num_views_u: 9,
            num_views_v: 9,
            interpolation: Interpolation::WiGuidedBicubic,
            demosaic: DemosaicMethod::GradientCorrectedBilinear,
            percentile: 0.999,
            dark_view_luma_floor: 0.02,
        }
    }
}

impl DecodeParams {
    pub fn validate(&self) -> Result<()> {
        if self.num_views_u % 2 == 0 || self.num_views_v % 2 == 0 {
            return Err(Error::invalid("view counts must be odd so a centre view exists"));
        }
        if !(self.percentile > 0.9 && self.percentile < 1.0) {
            return Err(Error::invalid("percentile must lie in (0.9, 1)"));
        }
        if !(0.0..1.0).contains(&self.dark_view_luma_floor) {
            return Err(Error::invalid("dark view floor must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Full RAW → sub-aperture pipeline.
pub fn decode(
    raw: &PlenopticRaw,
    wi: &WhiteImage,
    wb: WhiteBalanceFactors,
    grid: &LensletGrid,
    params: &DecodeParams,
) -> Result<LightField> {
    params.validate()?;
    grid.validate()?;
    if raw.pattern != wi.pattern {
        return Err(Error::invalid("RAW and white image Bayer patterns differ"));
    }
    let raw = raw.linearized();
    let wi_norm = normalize_white_image(wi, wb, params.percentile)?;
    let devig = devignette(&raw, &wi_norm)?;
    let rgb = demosaic(&devig.image, raw.pattern)?;
    let mut lf = extract_views(&rgb, &wi_norm, grid, params)?;
    lf.push_history("decoded");
    Ok(lf)
}

//! RAW fixture bundles: a sensor mosaic, its white image, metadata and an
//! optional ground-truth light field in one directory.
//!
//! ```text
//! bundle/
//!   metadata.json
//!   raw.png        16-bit single channel
//!   white.png      16-bit single channel, divided by `white_scale`
//!   gt/            light field directory
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::decode::{BayerPattern, PlenopticRaw, WhiteBalanceFactors, WhiteImage};
use crate::error::{Error, Result};
use crate::grid::LensletGrid;
use crate::io::{load_lightfield, read_image, save_lightfield, write_png16};
use crate::lightfield::LightField;
use crate::sim::SceneKind;

pub const METADATA_NAME: &str = "metadata.json";
pub const RAW_NAME: &str = "raw.png";
pub const WHITE_NAME: &str = "white.png";
pub const GROUND_TRUTH_DIR: &str = "gt";

/// Contents of `metadata.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawMetadata {
    pub width: usize,
    pub height: usize,
    pub pattern: BayerPattern,
    pub black_level: f64,
    pub saturation_level: f64,
    /// Gains to apply when normalizing the white image.
    pub wb_gains: WhiteBalanceFactors,
    pub grid: LensletGrid,
    /// Stored white samples are multiplied by this on load.
    pub white_scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationRecord>,
}

/// How a simulated bundle was produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationRecord {
    pub scene: SceneKind,
    pub views_u: usize,
    pub views_v: usize,
    pub disparity: f64,
    pub vignette_sigma: f64,
    pub gains_applied: WhiteBalanceFactors,
    pub noise_sigma: f64,
    pub hot_pixel_count: usize,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct RawBundle {
    pub metadata: RawMetadata,
    pub raw: PlenopticRaw,
    pub white: WhiteImage,
    pub ground_truth: Option<LightField>,
}

impl RawBundle {
    /// Packs a RAW capture; the metadata is derived from its parts.
    pub fn new(
        raw: PlenopticRaw,
        white: WhiteImage,
        wb_gains: WhiteBalanceFactors,
        grid: LensletGrid,
        simulation: Option<SimulationRecord>,
        ground_truth: Option<LightField>,
    ) -> Result<Self> {
        raw.sensor.check_same_shape(&white.sensor)?;
        let peak = white.sensor.data().iter().fold(0.0f64, |m, &v| m.max(v));
        let metadata = RawMetadata {
            width: raw.sensor.width(),
            height: raw.sensor.height(),
            pattern: raw.pattern,
            black_level: raw.black_level,
            saturation_level: raw.saturation_level,
            wb_gains,
            grid,
            white_scale: peak.max(1.0),
            simulation,
        };
        Ok(RawBundle {
            metadata,
            raw,
            white,
            ground_truth,
        })
    }
}

pub fn save_bundle(bundle: &RawBundle, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut text = serde_json::to_string_pretty(&bundle.metadata)?;
    text.push('\n');
    fs::write(dir.join(METADATA_NAME), text)?;
    write_png16(&dir.join(RAW_NAME), &bundle.raw.sensor)?;
    let scale = bundle.metadata.white_scale;
    write_png16(&dir.join(WHITE_NAME), &bundle.white.sensor.map(|v| v / scale))?;
    if let Some(gt) = &bundle.ground_truth {
        save_lightfield(gt, &dir.join(GROUND_TRUTH_DIR))?;
    }
    Ok(())
}

pub fn read_metadata(dir: &Path) -> Result<RawMetadata> {
    let path = dir.join(METADATA_NAME);
    if !path.exists() {
        return Err(Error::MissingManifest(path));
    }
    serde_json::from_str(&fs::read_to_string(&path)?).map_err(|e| Error::format(&path, e.to_string()))
}

fn read_sensor(path: &Path, meta: &RawMetadata) -> Result<crate::image::Image> {
    if !path.exists() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("{} does not exist", path.display()),
        )));
    }
    let img = read_image(path)?;
    if img.width() != meta.width || img.height() != meta.height || img.channels() != 1 {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{}x1", meta.width, meta.height),
            actual: format!("{} in {}", img.shape_string(), path.display()),
        });
    }
    Ok(img)
}

/// Loads a bundle; the ground truth is read when its directory exists.
pub fn load_bundle(dir: &Path) -> Result<RawBundle> {
    let metadata = read_metadata(dir)?;
    if !(metadata.white_scale > 0.0) {
        return Err(Error::format(dir.join(METADATA_NAME), "white_scale must be positive"));
    }
    let raw_img = read_sensor(&dir.join(RAW_NAME), &metadata)?;
    let raw = PlenopticRaw::new(raw_img, metadata.pattern, metadata.black_level, metadata.saturation_level)?;
    let white_img = read_sensor(&dir.join(WHITE_NAME), &metadata)?;
    let scale = metadata.white_scale;
    let white = WhiteImage::new(white_img.map(|v| v * scale), metadata.pattern)?;
    let gt_dir = dir.join(GROUND_TRUTH_DIR);
    let ground_truth = if gt_dir.exists() { Some(load_lightfield(&gt_dir)?) } else { None };
    Ok(RawBundle {
        metadata,
        raw,
        white,
        ground_truth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{simulate_raw, synth_lightfield, synth_white_image, SimParams};

    #[test]
    fn round_trip_keeps_hot_pixels() {
        let grid = LensletGrid::square(10.0, 6, 6);
        let mut params = SimParams::new(grid);
        params.hot_pixel_count = 3;
        let lf = synth_lightfield(SceneKind::SmoothGradient, 3, 3, 6, 6, 0.0).unwrap();
        let (w, h) = grid.sensor_size();
        let raw = simulate_raw(&lf, &params, w, h).unwrap();
        let white = synth_white_image(&params, w, h).unwrap();
        let bundle = RawBundle::new(raw, white, WhiteBalanceFactors::UNITY, grid, None, Some(lf)).unwrap();
        assert_eq!(bundle.metadata.white_scale, 10.0);
        let dir = tempfile::tempdir().unwrap();
        save_bundle(&bundle, dir.path()).unwrap();
        let back = load_bundle(dir.path()).unwrap();
        assert_eq!(back.metadata, bundle.metadata);
        let hot = back.white.sensor.data().iter().filter(|&&v| (v - 10.0).abs() < 1e-9).count();
        assert_eq!(hot, 3);
        for (a, b) in back.raw.sensor.data().iter().zip(bundle.raw.sensor.data()) {
            assert!((a - b).abs() <= 0.5 / 65535.0 + 1e-12);
        }
        for (a, b) in back.white.sensor.data().iter().zip(bundle.white.sensor.data()) {
            assert!((a - b).abs() <= 10.0 * 0.5 / 65535.0 + 1e-12);
        }
        assert!(back.ground_truth.is_some());
    }

    #[test]
    fn missing_white_image_is_an_input_error() {
        let grid = LensletGrid::square(10.0, 4, 4);
        let params = SimParams::new(grid);
        let (w, h) = grid.sensor_size();
        let white = synth_white_image(&params, w, h).unwrap();
        let raw = PlenopticRaw::new(white.sensor.clone(), BayerPattern::Rggb, 0.0, 1.0).unwrap();
        let bundle = RawBundle::new(raw, white, WhiteBalanceFactors::UNITY, grid, None, None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_bundle(&bundle, dir.path()).unwrap();
        fs::remove_file(dir.path().join(WHITE_NAME)).unwrap();
        let err = load_bundle(dir.path()).unwrap_err();
        assert!(err.is_input_error());
    }
}

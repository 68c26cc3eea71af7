//! TOML pipeline configuration. Every section is optional and defaults to
//! the library defaults.

use std::path::Path;

use anyhow::Context;
use lfpipe::correspondence::MatchConfig;
use lfpipe::decode::{BayerPattern, DecodeParams, WhiteBalanceFactors};
use lfpipe::denoise::DenoiseParams;
use lfpipe::metrics::ReportConfig;
use lfpipe::propagation::PropagationScheme;
use lfpipe::transfer::TransferConfig;
use lfpipe::{LensletGrid, LensletLayout, SceneKind};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub simulate: SimulateConfig,
    /// Unset means: take the view count from the bundle's simulation record.
    pub decode: Option<DecodeParams>,
    pub recolour: RecolourConfig,
    pub denoise: DenoiseParams,
    pub report: ReportConfig,
    pub stages: StageToggles,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            simulate: SimulateConfig::default(),
            decode: None,
            recolour: RecolourConfig::default(),
            denoise: DenoiseParams::default(),
            report: ReportConfig::default(),
            stages: StageToggles::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub scene: SceneKind,
    /// Views per side of the ground-truth light field.
    pub views: usize,
    pub lens_rows: usize,
    pub lens_cols: usize,
    pub spacing: f64,
    pub rotation: f64,
    pub layout: LensletLayout,
    pub disparity: f64,
    /// CIELAB lightness added to every non-centre view of the scene.
    pub lightness_shift: f64,
    pub vignette_sigma: f64,
    pub gains_applied: WhiteBalanceFactors,
    /// Gains written to the metadata; unset means the applied gains.
    pub metadata_gains: Option<WhiteBalanceFactors>,
    pub noise_sigma: f64,
    pub hot_pixel_count: usize,
    pub pattern: BayerPattern,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            scene: SceneKind::TexturedDisparity,
            views: 5,
            lens_rows: 96,
            lens_cols: 96,
            spacing: 10.0,
            rotation: 0.0,
            layout: LensletLayout::Square,
            disparity: 0.5,
            lightness_shift: 0.0,
            vignette_sigma: 0.6,
            gains_applied: WhiteBalanceFactors::UNITY,
            metadata_gains: None,
            noise_sigma: 0.0,
            hot_pixel_count: 0,
            pattern: BayerPattern::Rggb,
        }
    }
}

impl SimulateConfig {
    pub fn grid(&self) -> LensletGrid {
        let mut g = LensletGrid::square(self.spacing, self.lens_rows, self.lens_cols);
        g.rotation = self.rotation;
        g.layout = self.layout;
        g
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecolourConfig {
    /// Schemes run by `pipeline`; `recolour` uses the first.
    pub schemes: Vec<PropagationScheme>,
    pub transfer: TransferConfig,
    pub matching: MatchConfig,
}

impl Default for RecolourConfig {
    fn default() -> Self {
        RecolourConfig {
            schemes: vec![PropagationScheme::Prop],
            transfer: TransferConfig::default(),
            matching: MatchConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageToggles {
    pub recolour: bool,
    pub denoise: bool,
    pub report: bool,
}

impl Default for StageToggles {
    fn default() -> Self {
        StageToggles {
            recolour: true,
            denoise: true,
            report: true,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))
            }
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg: PipelineConfig = toml::from_str(
            r#"
            seed = 7
            [simulate]
            scene = "flat-grey"
            [recolour]
            schemes = ["centre", "prop+centre"]
            [denoise]
            sigma = 0.02
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.simulate.scene, SceneKind::FlatGrey);
        assert_eq!(cfg.simulate.views, 5);
        assert_eq!(
            cfg.recolour.schemes,
            vec![PropagationScheme::Centre, PropagationScheme::PropCentre]
        );
        assert_eq!(cfg.denoise.sigma, Some(0.02));
        assert_eq!(cfg.denoise.patch_size, 8);
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = PipelineConfig::default();
        let back: PipelineConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<PipelineConfig>("sead = 1").is_err());
    }
}

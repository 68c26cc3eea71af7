//! One function per pipeline stage, shared by the stage subcommands and
//! `pipeline`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::anyhow;
use lfpipe::bundle::{load_bundle, save_bundle, RawBundle, SimulationRecord};
use lfpipe::decode::{decode, DecodeParams, Interpolation};
use lfpipe::denoise::{denoise_lightfield, resolve_sigma};
use lfpipe::io::{load_lightfield, save_lightfield, view_file_name, write_png16};
use lfpipe::metrics::{comparison_table, estimate_noise, lightfield_report, MetricReport};
use lfpipe::propagation::{recolour_lightfield, PropagationScheme};
use lfpipe::sim::{shift_lightness, simulate_raw, synth_white_image, SimParams};
use lfpipe::{synth_lightfield, LightField};
use log::{info, warn};
use serde::Serialize;

use crate::config::PipelineConfig;

pub const EXIT_STAGE_FAILURE: u8 = 1;
pub const EXIT_INPUT_ERROR: u8 = 2;

/// An error with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn input(error: impl Into<anyhow::Error>) -> Self {
        Failure {
            code: EXIT_INPUT_ERROR,
            error: error.into(),
        }
    }

    pub fn stage(error: impl Into<anyhow::Error>) -> Self {
        Failure {
            code: EXIT_STAGE_FAILURE,
            error: error.into(),
        }
    }
}

impl From<lfpipe::Error> for Failure {
    fn from(e: lfpipe::Error) -> Self {
        if e.is_input_error() {
            Failure::input(e)
        } else {
            Failure::stage(e)
        }
    }
}

pub type CmdResult<T = ()> = Result<T, Failure>;

/// Stages in their required order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Decode,
    Recolour,
    Denoise,
}

impl Stage {
    fn history_tag(self) -> &'static str {
        match self {
            Stage::Decode => "decoded",
            Stage::Recolour => "recoloured",
            Stage::Denoise => "denoised",
        }
    }
}

fn last_stage(lf: &LightField) -> Option<Stage> {
    lf.history()
        .iter()
        .filter_map(|h| {
            [Stage::Decode, Stage::Recolour, Stage::Denoise]
                .into_iter()
                .find(|s| h.split(':').next() == Some(s.history_tag()))
        })
        .max()
}

/// Checks that `stage` directly follows the last stage applied to `lf`.
pub fn check_order(lf: &LightField, stage: Stage, allow_any: bool) -> CmdResult {
    let previous = last_stage(lf);
    let expected = match stage {
        Stage::Decode => None,
        Stage::Recolour => Some(Stage::Decode),
        Stage::Denoise => Some(Stage::Recolour),
    };
    if previous == expected {
        return Ok(());
    }
    let msg = format!(
        "{:?} expects input whose last stage is {:?}, found {:?} (history {:?})",
        stage,
        expected,
        previous,
        lf.history()
    );
    if allow_any {
        warn!("stage order overridden: {msg}");
        Ok(())
    } else {
        Err(Failure::input(anyhow!(msg)))
    }
}

fn write_text(path: &Path, text: &str) -> CmdResult {
    fs::write(path, text).map_err(|e| Failure::input(anyhow!("writing {}: {e}", path.display())))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> CmdResult {
    let mut text = serde_json::to_string_pretty(value).map_err(Failure::stage)?;
    text.push('\n');
    write_text(path, &text)
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    version: &'a str,
    inputs: Vec<String>,
    workers: Option<usize>,
    config: &'a PipelineConfig,
}

/// Records the resolved parameters of a run beside its outputs, both as a
/// JSON manifest and as a config file that reproduces the run.
pub fn write_run_manifest(
    out: &Path,
    command: &str,
    inputs: &[&Path],
    workers: Option<usize>,
    cfg: &PipelineConfig,
) -> CmdResult {
    fs::create_dir_all(out).map_err(Failure::input)?;
    let manifest = RunManifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
        workers,
        config: cfg,
    };
    write_json(&out.join("run.json"), &manifest)?;
    write_text(&out.join("config.toml"), &cfg.to_toml())
}

/// Writes a simulated fixture bundle.
pub fn simulate(cfg: &PipelineConfig, out: &Path) -> CmdResult<RawBundle> {
    let s = &cfg.simulate;
    let grid = s.grid();
    let mut lf = synth_lightfield(s.scene, s.views, s.views, s.lens_cols, s.lens_rows, s.disparity)?;
    if s.lightness_shift != 0.0 {
        lf = shift_lightness(&lf, s.lightness_shift)?;
    }
    lf.push_history("synthesized");
    let mut params = SimParams::new(grid);
    params.vignette_sigma = s.vignette_sigma;
    params.wb_gains_applied = s.gains_applied;
    params.noise_sigma = s.noise_sigma;
    params.hot_pixel_count = s.hot_pixel_count;
    params.pattern = s.pattern;
    params.seed = cfg.seed;
    let (w, h) = grid.sensor_size();
    let raw = simulate_raw(&lf, &params, w, h)?;
    let white = synth_white_image(&params, w, h)?;
    let record = SimulationRecord {
        scene: s.scene,
        views_u: s.views,
        views_v: s.views,
        disparity: s.disparity,
        vignette_sigma: s.vignette_sigma,
        gains_applied: s.gains_applied,
        noise_sigma: s.noise_sigma,
        hot_pixel_count: s.hot_pixel_count,
        seed: cfg.seed,
    };
    let metadata_gains = s.metadata_gains.unwrap_or(s.gains_applied);
    let bundle = RawBundle::new(raw, white, metadata_gains, grid, Some(record), Some(lf))?;
    save_bundle(&bundle, out)?;
    info!("wrote {}x{} sensor bundle to {}", w, h, out.display());
    Ok(bundle)
}

/// Decode parameters for a bundle: the configured ones, or the defaults with
/// the view count of the bundle's simulation record.
pub fn resolve_decode_params(cfg: &PipelineConfig, bundle: &RawBundle) -> DecodeParams {
    cfg.decode.unwrap_or_else(|| {
        let mut p = DecodeParams::default();
        if let Some(sim) = &bundle.metadata.simulation {
            p.num_views_u = sim.views_u;
            p.num_views_v = sim.views_v;
        }
        p
    })
}

/// Decodes a bundle into a light field directory. `cfg.decode` is resolved
/// in place, including an interpolation override.
pub fn decode_bundle(
    cfg: &mut PipelineConfig,
    input: &Path,
    out: &Path,
    preview: bool,
    interpolation: Option<Interpolation>,
) -> CmdResult<LightField> {
    let bundle = load_bundle(input)?;
    let mut params = resolve_decode_params(cfg, &bundle);
    if let Some(i) = interpolation {
        params.interpolation = i;
    }
    cfg.decode = Some(params);
    let m = &bundle.metadata;
    let lf = decode(&bundle.raw, &bundle.white, m.wb_gains, &m.grid, &params)?;
    save_lightfield(&lf, out)?;
    if preview {
        let dir = out.join("preview");
        fs::create_dir_all(&dir).map_err(Failure::input)?;
        let srgb = lf.to_srgb()?;
        for v in srgb.valid_indices() {
            write_png16(&dir.join(view_file_name(v, "png")), srgb.view(v))?;
        }
    }
    let invalid = lf.num_views() - lf.valid_count();
    info!(
        "decoded {}x{} views of {}x{} ({} invalid) to {}",
        lf.rows(),
        lf.cols(),
        lf.width(),
        lf.height(),
        invalid,
        out.display()
    );
    Ok(lf)
}

/// Recolours a light field directory with one scheme.
pub fn recolour(
    cfg: &PipelineConfig,
    input: &Path,
    out: &Path,
    scheme: PropagationScheme,
    allow_any_order: bool,
) -> CmdResult<LightField> {
    let lf = load_lightfield(input)?;
    check_order(&lf, Stage::Recolour, allow_any_order)?;
    let lf = lf.to_linear_rgb()?;
    let mut matching = cfg.recolour.matching;
    matching.seed = cfg.seed;
    let res = recolour_lightfield(&lf, scheme, &cfg.recolour.transfer, &matching)?;
    save_lightfield(&res.lightfield, out)?;
    write_json(&out.join("transforms.json"), &res.log)?;
    write_text(&out.join("plan.txt"), &res.plan.to_string())?;
    let failed = res.log.iter().filter(|l| l.error.is_some()).count();
    info!(
        "recoloured {} views with scheme {} ({} failed) to {}",
        res.log.len(),
        scheme,
        failed,
        out.display()
    );
    Ok(res.lightfield)
}

#[derive(Serialize)]
struct DenoiseRecord {
    sigma: f64,
    /// Luminance noise estimate of the centre view when sigma was estimated.
    centre_luminance_estimate: Option<f64>,
}

/// Denoises a light field directory.
pub fn denoise(cfg: &PipelineConfig, input: &Path, out: &Path, allow_any_order: bool) -> CmdResult<LightField> {
    let lf = load_lightfield(input)?;
    check_order(&lf, Stage::Denoise, allow_any_order)?;
    let params = cfg.denoise;
    let estimate = match params.sigma {
        Some(_) => None,
        None => Some(estimate_noise(lf.centre_view(), params.noise_patch_size)?),
    };
    let sigma = resolve_sigma(&lf, &params)?;
    match estimate {
        Some(e) => info!("sigma = {sigma:.6} per channel from centre view luminance estimate {e:.6}"),
        None => info!("sigma = {sigma:.6} per channel as configured"),
    }
    let res = denoise_lightfield(&lf, &lfpipe::denoise::DenoiseParams { sigma: Some(sigma), ..params })?;
    save_lightfield(&res.lightfield, out)?;
    write_json(
        &out.join("denoise.json"),
        &DenoiseRecord {
            sigma,
            centre_luminance_estimate: estimate,
        },
    )?;
    info!("denoised light field written to {}", out.display());
    Ok(res.lightfield)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum ReportFormat {
    Text,
    Csv,
    Json,
}

fn file_stem(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Scores labelled light fields. With `out`, writes every format there;
/// otherwise prints `format` to stdout.
pub fn report(
    cfg: &PipelineConfig,
    inputs: &[(String, PathBuf)],
    out: Option<&Path>,
    format: ReportFormat,
) -> CmdResult<Vec<MetricReport>> {
    let mut reports = Vec::with_capacity(inputs.len());
    for (label, path) in inputs {
        let lf = load_lightfield(path)?;
        reports.push(lightfield_report(&lf, &cfg.report)?.with_label(label.clone()));
    }
    let text: String = reports.iter().map(|r| r.to_text() + "\n").collect::<String>() + &comparison_table(&reports);
    match out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(Failure::input)?;
            write_text(&dir.join("report.txt"), &text)?;
            write_text(&dir.join("comparison.txt"), &comparison_table(&reports))?;
            write_json(&dir.join("report.json"), &reports)?;
            for r in &reports {
                write_text(&dir.join(format!("{}.csv", file_stem(&r.label))), &r.to_csv()?)?;
            }
            info!("wrote {} reports to {}", reports.len(), dir.display());
        }
        None => {
            let s = match format {
                ReportFormat::Text => text,
                ReportFormat::Csv => reports
                    .iter()
                    .map(|r| r.to_csv())
                    .collect::<lfpipe::Result<Vec<_>>>()?
                    .join("\n"),
                ReportFormat::Json => serde_json::to_string_pretty(&reports).map_err(Failure::stage)? + "\n",
            };
            print!("{s}");
        }
    }
    Ok(reports)
}

/// Runs decode, recolour, denoise and report into subdirectories of `out`.
/// Without an input bundle one is simulated first.
pub fn pipeline(
    cfg: &mut PipelineConfig,
    input: Option<&Path>,
    out: &Path,
    interpolation: Option<Interpolation>,
) -> CmdResult<Vec<MetricReport>> {
    let bundle_dir = match input {
        Some(p) => p.to_path_buf(),
        None => {
            let dir = out.join("bundle");
            simulate(cfg, &dir)?;
            dir
        }
    };
    let decoded = out.join("decoded");
    decode_bundle(cfg, &bundle_dir, &decoded, false, interpolation)?;
    let mut runs = vec![("decoded".to_string(), decoded.clone())];
    let schemes = cfg.recolour.schemes.clone();
    if cfg.stages.recolour {
        for scheme in &schemes {
            let rec = out.join("recoloured").join(scheme.name());
            recolour(cfg, &decoded, &rec, *scheme, false)?;
            runs.push((format!("recoloured/{scheme}"), rec.clone()));
            if cfg.stages.denoise {
                let den = out.join("denoised").join(scheme.name());
                denoise(cfg, &rec, &den, false)?;
                runs.push((format!("denoised/{scheme}"), den));
            }
        }
    } else if cfg.stages.denoise {
        warn!("denoising is skipped because recolouring is disabled");
    }
    if cfg.stages.report {
        report(cfg, &runs, Some(&out.join("report")), ReportFormat::Text)
    } else {
        Ok(Vec::new())
    }
}

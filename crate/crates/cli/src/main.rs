//! `lfpipe`: batch front end for decoding, recolouring, denoising and
//! scoring lenslet light fields.

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::anyhow;
use clap::{Args, Parser, Subcommand};
use lfpipe::decode::Interpolation;
use lfpipe::propagation::PropagationScheme;
use lfpipe::SceneKind;

use commands::{CmdResult, Failure, ReportFormat};
use config::PipelineConfig;

#[derive(Parser, Debug)]
#[command(name = "lfpipe", version, about = "Lenslet light field decoding, recolouring, denoising and metrics")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// RNG seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for stage-internal parallelism.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Propagation scheme: centre, prop or prop+centre.
    #[arg(long, global = true)]
    scheme: Option<PropagationScheme>,
    /// View interpolation: bicubic or wi-guided.
    #[arg(long, global = true)]
    interpolation: Option<Interpolation>,
    /// Noise level for denoising: `auto` or a number.
    #[arg(long, global = true)]
    sigma: Option<Sigma>,
    /// Run a stage even if its input has not been through the preceding stage.
    #[arg(long, global = true)]
    ignore_stage_order: bool,
}

#[derive(Clone, Copy, Debug)]
enum Sigma {
    Auto,
    Value(f64),
}

impl FromStr for Sigma {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "auto" {
            return Ok(Sigma::Auto);
        }
        match s.parse::<f64>() {
            Ok(v) if v >= 0.0 && v.is_finite() => Ok(Sigma::Value(v)),
            _ => Err(format!("expected `auto` or a non-negative number, got {s:?}")),
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a simulated RAW fixture bundle with its ground truth.
    Simulate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        scene: Option<SceneKind>,
        /// Disparity in pixels per view step.
        #[arg(long)]
        disparity: Option<f64>,
        #[arg(long)]
        noise_sigma: Option<f64>,
    },
    /// Decode a RAW bundle into a light field directory.
    Decode {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write sRGB previews.
        #[arg(long)]
        preview: bool,
    },
    /// Homogenize view colours against the centre view.
    Recolour {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Denoise a light field.
    Denoise {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score light fields against their centre views.
    Report {
        /// Light field directories, one report each.
        #[arg(long, required = true, num_args = 1..)]
        input: Vec<PathBuf>,
        /// Row labels, in input order; defaults to the directory names.
        #[arg(long, num_args = 1..)]
        label: Vec<String>,
        /// Directory receiving text, CSV and JSON reports.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "text")]
        format: ReportFormat,
    },
    /// Run decode, recolour, denoise and report end to end.
    Pipeline {
        /// RAW bundle; simulated from the configuration when absent.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn resolve_config(common: &Common) -> CmdResult<PipelineConfig> {
    let mut cfg = PipelineConfig::load(common.config.as_deref()).map_err(Failure::input)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(scheme) = common.scheme {
        cfg.recolour.schemes = vec![scheme];
    }
    match common.sigma {
        Some(Sigma::Auto) => cfg.denoise.sigma = None,
        Some(Sigma::Value(v)) => cfg.denoise.sigma = Some(v),
        None => {}
    }
    Ok(cfg)
}

fn run(cli: Cli) -> CmdResult {
    let common = &cli.common;
    if let Some(n) = common.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(Failure::stage)?;
    }
    let mut cfg = resolve_config(common)?;
    let allow = common.ignore_stage_order;
    let workers = common.workers;
    match cli.command {
        Command::Simulate {
            out,
            scene,
            disparity,
            noise_sigma,
        } => {
            if let Some(s) = scene {
                cfg.simulate.scene = s;
            }
            if let Some(d) = disparity {
                cfg.simulate.disparity = d;
            }
            if let Some(n) = noise_sigma {
                cfg.simulate.noise_sigma = n;
            }
            commands::simulate(&cfg, &out)?;
            commands::write_run_manifest(&out, "simulate", &[], workers, &cfg)
        }
        Command::Decode { input, out, preview } => {
            commands::decode_bundle(&mut cfg, &input, &out, preview, common.interpolation)?;
            commands::write_run_manifest(&out, "decode", &[&input], workers, &cfg)
        }
        Command::Recolour { input, out } => {
            let scheme = *cfg
                .recolour
                .schemes
                .first()
                .ok_or_else(|| Failure::input(anyhow!("no propagation scheme configured")))?;
            cfg.recolour.schemes = vec![scheme];
            commands::recolour(&cfg, &input, &out, scheme, allow)?;
            commands::write_run_manifest(&out, "recolour", &[&input], workers, &cfg)
        }
        Command::Denoise { input, out } => {
            commands::denoise(&cfg, &input, &out, allow)?;
            commands::write_run_manifest(&out, "denoise", &[&input], workers, &cfg)
        }
        Command::Report {
            input,
            label,
            out,
            format,
        } => {
            if !label.is_empty() && label.len() != input.len() {
                return Err(Failure::input(anyhow!(
                    "{} labels given for {} inputs",
                    label.len(),
                    input.len()
                )));
            }
            let runs: Vec<(String, PathBuf)> = input
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let name = label.get(i).cloned().unwrap_or_else(|| dir_label(p));
                    (name, p.clone())
                })
                .collect();
            commands::report(&cfg, &runs, out.as_deref(), format)?;
            if let Some(dir) = &out {
                let inputs: Vec<&Path> = input.iter().map(PathBuf::as_path).collect();
                commands::write_run_manifest(dir, "report", &inputs, workers, &cfg)?;
            }
            Ok(())
        }
        Command::Pipeline { input, out } => {
            commands::pipeline(&mut cfg, input.as_deref(), &out, common.interpolation)?;
            let inputs: Vec<&Path> = input.iter().map(PathBuf::as_path).collect();
            commands::write_run_manifest(&out, "pipeline", &inputs, workers, &cfg)
        }
    }
}

fn dir_label(p: &Path) -> String {
    p.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| p.display().to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            log::error!("{:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

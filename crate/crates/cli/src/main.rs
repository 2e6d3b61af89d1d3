//! `geocalib`: simulate datasets, refine calibrations, evaluate them.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use geocalib::graph::Ablations;
use geocalib::Error;

use commands::{BenchVlArgs, CalibSpec, EvaluateArgs, RefineArgs, SimulateArgs};
use config::RunConfig;

#[derive(Parser)]
#[command(name = "geocalib", version, about = "Camera calibration refinement against georeferenced anchors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration with [simulate], [refine] and [evaluate] sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Leave the creation time out of written reports.
    #[arg(long, global = true)]
    no_timestamp: bool,
    /// Check the configuration and inputs, then stop.
    #[arg(long, global = true)]
    validate_only: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Ablation {
    NoNadir,
    CamOptJoint,
    NoFineAdjust,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with ground truth.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Overrides simulate.seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Refine intrinsics and extrinsics on a dataset.
    Refine {
        #[command(flatten)]
        common: Common,
        /// Dataset directory.
        #[arg(long)]
        data: PathBuf,
        /// Initial intrinsics (default: the dataset's intrinsics_init.json).
        #[arg(long)]
        intrinsics: Option<PathBuf>,
        /// Initial extrinsics (default: the dataset's extrinsics_init.json).
        #[arg(long)]
        extrinsics: Option<PathBuf>,
        /// Ablation to apply; may be repeated.
        #[arg(long, value_enum)]
        ablate: Vec<Ablation>,
    },
    /// Reprojection error (and optionally localization) for calibrations.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// LABEL=DIR or LABEL=INTRINSICS,EXTRINSICS; may be repeated.
        /// Defaults to the dataset's initial calibration.
        #[arg(long)]
        calib: Vec<CalibSpec>,
        /// Anchors written by refine (default: rebuilt from the dataset).
        #[arg(long)]
        anchors: Option<PathBuf>,
        /// Also run the localization benchmark.
        #[arg(long)]
        vl: bool,
    },
    /// Frame-wise localization benchmark on held-out matches.
    BenchVl {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// LABEL=DIR or LABEL=INTRINSICS,EXTRINSICS; may be repeated.
        #[arg(long)]
        calib: Vec<CalibSpec>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::Format { .. } | Error::Io(_) | Error::InvalidInput(_) | Error::OutOfBounds { .. } => 4,
        _ => 3,
    }
}

fn run(cli: Cli) -> geocalib::Result<()> {
    let common = match &cli.command {
        Command::Simulate { common, .. }
        | Command::Refine { common, .. }
        | Command::Evaluate { common, .. }
        | Command::BenchVl { common, .. } => common,
    };
    let cfg = RunConfig::load(common.config.as_deref())?;
    let timestamp = !common.no_timestamp;
    match &cli.command {
        Command::Simulate { seed, .. } => commands::cmd_simulate(
            &cfg,
            &SimulateArgs {
                out: common.out.clone(),
                seed: *seed,
                validate_only: common.validate_only,
            },
        ),
        Command::Refine {
            data,
            intrinsics,
            extrinsics,
            ablate,
            ..
        } => {
            let mut ablations = Ablations::default();
            for a in ablate {
                match a {
                    Ablation::NoNadir => ablations.no_nadir = true,
                    Ablation::CamOptJoint => ablations.cam_opt_joint = true,
                    Ablation::NoFineAdjust => ablations.no_fine_adjust = true,
                }
            }
            commands::cmd_refine(
                &cfg,
                &RefineArgs {
                    data: data.clone(),
                    intrinsics: intrinsics.clone(),
                    extrinsics: extrinsics.clone(),
                    out: common.out.clone(),
                    ablations,
                    timestamp,
                    validate_only: common.validate_only,
                },
            )
        }
        Command::Evaluate {
            data, calib, anchors, vl, ..
        } => commands::cmd_evaluate(
            &cfg,
            &EvaluateArgs {
                data: data.clone(),
                calibs: calib.clone(),
                anchors: anchors.clone(),
                vl: *vl,
                out: common.out.clone(),
                timestamp,
                validate_only: common.validate_only,
            },
        ),
        Command::BenchVl { data, calib, .. } => commands::cmd_bench_vl(
            &cfg,
            &BenchVlArgs {
                data: data.clone(),
                calibs: calib.clone(),
                out: common.out.clone(),
                timestamp,
                validate_only: common.validate_only,
            },
        ),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

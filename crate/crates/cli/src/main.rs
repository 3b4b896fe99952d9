use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stereoscale::evaluation::Alignment;
use stereoscale::Error;

mod commands;
mod manifest;
mod svg;

#[derive(Debug, Parser)]
#[command(name = "stereoscale", version, about = "Stereo depth and ego-motion by direct loss minimisation")]
struct Cli {
    /// `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `seed` from the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a synthetic stereo sequence with ground-truth depths and poses.
    Synth,
    /// Jointly estimate depths and poses for a sequence written by `synth`.
    Optimize {
        /// Directory holding `left_NNN.ppm`, `right_NNN.ppm` (and ground truth for non-flat init).
        #[arg(long)]
        input: PathBuf,
    },
    /// Translational and rotational drift of an estimated trajectory.
    EvalTraj {
        #[arg(long)]
        estimate: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        /// none, 6dof or 7dof.
        #[arg(long, default_value = "none")]
        align: Alignment,
    },
    /// Depth error metrics over matching PFM files.
    EvalDepth {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Ground-truth depths above this are ignored.
        #[arg(long, default_value_t = stereoscale::evaluation::DEFAULT_DEPTH_CAP)]
        cap: f64,
        /// Rescale each prediction by the ratio of medians first.
        #[arg(long)]
        median_scale: bool,
    },
}

fn exit_code(err: &Error) -> u8 {
    if err.is_numerical() {
        3
    } else {
        2
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            match &err {
                Error::TooShort { .. } => eprintln!("error: too short for drift evaluation: {err}"),
                Error::Divergence { .. } => eprintln!("error: numerical failure: {err}"),
                _ => eprintln!("error: {err}"),
            }
            ExitCode::from(exit_code(&err))
        }
    }
}

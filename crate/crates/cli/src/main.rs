//! `omnisr`: dataset synthesis, training, inference, evaluation, ablation
//! and diagnostics for omnidirectional super-resolution.

mod commands;
mod error;
mod manifest;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use crate::commands::*;
use crate::error::CliError;
use crate::manifest::RunManifest;

#[derive(Debug, Parser)]
#[command(name = "omnisr", version, about = "Omnidirectional super-resolution experiments")]
struct Cli {
    /// Worker threads for parallel stages; 0 uses every core. Results do
    /// not depend on this value.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Root for outputs whose path is not given explicitly.
    #[arg(long, global = true, env = "OMNISR_OUT_ROOT", default_value = "runs")]
    out_root: PathBuf,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize an LR/HR pair dataset from HR panoramas.
    Synth(SynthArgs),
    /// Train a model variant on a synthesized dataset.
    Train(TrainArgs),
    /// Super-resolve one LR panorama with a checkpoint.
    Infer(InferArgs),
    /// Score a checkpoint on a dataset and write a metrics CSV.
    Eval(EvalArgs),
    /// Train and evaluate several variants under one schedule.
    Ablate(AblateArgs),
    /// Linearity and pseudo-inverse diagnostics for a degradation operator.
    ProbeOperator(ProbeArgs),
    /// Assembled dynamic kernels over a grid of degradation levels.
    DumpKernels(DumpArgs),
    /// Render loss, metric and kernel CSVs as PNG charts.
    Plot(PlotArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Self::Synth(_) => "synth",
            Self::Train(_) => "train",
            Self::Infer(_) => "infer",
            Self::Eval(_) => "eval",
            Self::Ablate(_) => "ablate",
            Self::ProbeOperator(_) => "probe-operator",
            Self::DumpKernels(_) => "dump-kernels",
            Self::Plot(_) => "plot",
        }
    }
}

fn run(cli: &Cli) -> Result<PathBuf, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build_global()
        .map_err(|e| CliError::Domain(format!("thread pool: {e}")))?;
    let jobs = rayon::current_num_threads();
    let mut m = RunManifest::new(cli.command.name(), std::env::args().collect(), jobs);
    let root = cli.out_root.as_path();
    let start = Instant::now();
    let out = match &cli.command {
        Command::Synth(a) => synth(a, root, &mut m)?,
        Command::Train(a) => train(a, root, &mut m)?,
        Command::Infer(a) => infer(a, &mut m)?,
        Command::Eval(a) => eval(a, root, &mut m)?,
        Command::Ablate(a) => ablation(a, root, &mut m)?,
        Command::ProbeOperator(a) => probe_operator(a, root, &mut m)?,
        Command::DumpKernels(a) => dump_kernels(a, root, &mut m)?,
        Command::Plot(a) => plot_cmd(a, root, &mut m)?,
    };
    m.timings.insert("wall_clock".into(), start.elapsed().as_secs_f64());
    let path = m.write(&out)?;
    log::info!("manifest: {}", path.display());
    Ok(out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

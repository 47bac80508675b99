//! Command-line workflows: synthesis, training, reconstruction, evaluation,
//! and the self-check suite.
//!
//! Exit codes: 0 success, 1 contract/validation/state/format failure, 2 I/O,
//! 3 numeric failure.

mod commands;
pub mod selfcheck;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{contract_err, Result};
use crate::pipeline::{format_config, read_config};

pub use commands::{orbit_poses, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "wonderland", version, about = "Camera-guided latent diffusion and feed-forward Gaussian reconstruction")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run the fast invariant suite.
    Selfcheck {
        #[arg(long, hide = true)]
        inject_fault: Option<String>,
    },
    /// Generate synthetic scenes.
    Synth(SynthArgs),
    /// Train the diffusion model or one LaLRM stage.
    Train(TrainArgs),
    /// Image + trajectory to a Gaussian splat and renders.
    Reconstruct(ReconstructArgs),
    /// Evaluate a LaLRM checkpoint, or compare two trajectories.
    Eval(EvalArgs),
}

#[derive(Args, Debug)]
pub struct Common {
    /// Key-value config file (`section.key = value`).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Config override, `key=value`; wins over the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub scenes: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "small")]
    pub complexity: String,
    #[arg(long, default_value_t = 17)]
    pub frames: usize,
    #[arg(long, default_value_t = 96)]
    pub height: usize,
    #[arg(long, default_value_t = 144)]
    pub width: usize,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Dit,
    Lalrm,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub model: ModelKind,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// LaLRM stage: low_res or high_res.
    #[arg(long)]
    pub stage: Option<String>,
    /// Camera branches for the diffusion model: none, lora, ctrl, dual.
    #[arg(long)]
    pub branches: Option<String>,
    /// Checkpoint to continue from: the low_res LaLRM for high_res, or a base diffusion model.
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Diffusion checkpoint supplying generated latents in the high_res stage.
    #[arg(long)]
    pub dit: Option<PathBuf>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub trajectory: PathBuf,
    #[arg(long)]
    pub dit: Option<PathBuf>,
    #[arg(long)]
    pub lalrm: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Use `--latent` instead of sampling the diffusion model.
    #[arg(long)]
    pub skip_dit: bool,
    #[arg(long)]
    pub latent: Option<PathBuf>,
    /// Diffusion sampling steps.
    #[arg(long)]
    pub steps: Option<usize>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Sample latents with this diffusion checkpoint instead of encoding the seen frames.
    #[arg(long)]
    pub dit: Option<PathBuf>,
    /// Render the ground-truth clouds instead of a model.
    #[arg(long)]
    pub ground_truth: bool,
    /// Compare two trajectory files and print R_err / T_err.
    #[arg(long, num_args = 2, value_names = ["A", "B"])]
    pub trajectories: Option<Vec<PathBuf>>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[command(flatten)]
    pub common: Common,
}

/// Config file overlaid by `--set` flags.
pub fn resolve_config(common: &Common, defaults: &[(&str, String)]) -> Result<BTreeMap<String, String>> {
    let mut cfg: BTreeMap<String, String> = defaults.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
    if let Some(path) = &common.config {
        cfg.extend(read_config(path)?);
    }
    for o in &common.overrides {
        let (k, v) = o.split_once('=').ok_or_else(|| contract_err!("--set expects KEY=VALUE, got `{o}`"))?;
        cfg.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(cfg)
}

pub fn write_run_lock(dir: &Path, command: &str, cfg: &BTreeMap<String, String>) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut all = cfg.clone();
    all.insert("run.command".into(), command.into());
    std::fs::write(dir.join("run.lock"), format_config(&all))?;
    Ok(())
}

fn configure_threads() {
    if let Some(n) = std::env::var("WONDERLAND_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

pub fn run(cli: Cli) -> Result<i32> {
    configure_threads();
    match cli.command {
        Command::Selfcheck { inject_fault } => {
            if let Some(f) = &inject_fault {
                if !selfcheck::FAULTS.contains(&f.as_str()) {
                    return Err(contract_err!("unknown fault `{f}`"));
                }
            }
            let results = selfcheck::run(inject_fault.as_deref());
            let mut failed = 0;
            for r in &results {
                println!("{} {:<26} {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
                failed += usize::from(!r.passed);
            }
            println!("{} checks, {failed} failed", results.len());
            Ok(i32::from(failed > 0))
        }
        Command::Synth(a) => commands::synth(&a).map(|_| 0),
        Command::Train(a) => commands::train(&a).map(|_| 0),
        Command::Reconstruct(a) => commands::reconstruct(&a).map(|_| 0),
        Command::Eval(a) => commands::eval(&a).map(|_| 0),
    }
}

/// Parses `std::env::args`, runs the command, and returns the exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

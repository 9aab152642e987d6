use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use splitgrow::experiment::{execute, Experiment, RunConfig};
use splitgrow::Error;

/// Environment variable that overrides the configured output directory.
const OUT_ENV: &str = "SPLITGROW_OUT";

#[derive(Parser)]
#[command(name = "splitgrow", version, about = "Grow networks by splitting neurons along their splitting gradients")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Path to a `key = value` config file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (takes precedence over the environment and config).
    #[arg(long, env = OUT_ENV)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment named in the config.
    Run(Common),
    /// Run every derivative oracle and property check; exit 0 iff all pass.
    Verify {
        #[arg(long, env = OUT_ENV, default_value = "out/verify")]
        out: PathBuf,
    },
    /// Loss decrease vs. rotation of the split direction away from v_min.
    SweepAngle(Common),
    /// Splitting index vs. measured gain for every neuron.
    EigenGain(Common),
}

fn load(common: &Common, experiment: Option<Experiment>) -> Result<(RunConfig, PathBuf), Error> {
    let mut cfg = RunConfig::from_file(&common.config)?;
    if let Some(e) = experiment {
        if cfg.experiment != e {
            // Re-resolve defaults for the forced experiment, keeping explicit keys.
            let text = std::fs::read_to_string(&common.config)?;
            let body: String = text
                .lines()
                .filter(|l| !l.trim_start().to_ascii_lowercase().starts_with("experiment"))
                .map(|l| format!("{l}\n"))
                .collect();
            cfg = RunConfig::parse(&format!("experiment = {}\n{body}", e.name()))?;
        }
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
        cfg.optim.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    let out = cfg.output_dir.clone();
    Ok((cfg, out))
}

fn run(cli: Cli) -> Result<bool, Error> {
    let (cfg, out) = match &cli.command {
        Command::Run(c) => load(c, None)?,
        Command::SweepAngle(c) => load(c, Some(Experiment::AngleSweep))?,
        Command::EigenGain(c) => load(c, Some(Experiment::EigenVsGain))?,
        Command::Verify { out } => {
            let mut cfg = RunConfig::defaults(Experiment::VerifyAll);
            cfg.output_dir = out.clone();
            (cfg, out.clone())
        }
    };
    let summary = execute(&cfg, &out)?;
    println!("{}", summary.message.trim_end());
    for f in &summary.files {
        println!("wrote {}", f.display());
    }
    Ok(summary.passed)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e @ Error::Config { .. }) => {
            eprintln!("usage error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

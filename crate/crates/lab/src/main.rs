use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use uhslab::{run, RunOptions, Subcommand};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    Forward,
    VerifyWeights,
    CarlemanSweep,
    InverseStability,
    Convergence,
}

impl From<Cmd> for Subcommand {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Forward => Subcommand::Forward,
            Cmd::VerifyWeights => Subcommand::VerifyWeights,
            Cmd::CarlemanSweep => Subcommand::CarlemanSweep,
            Cmd::InverseStability => Subcommand::InverseStability,
            Cmd::Convergence => Subcommand::Convergence,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "uhslab", version, about = "Run ultrahyperbolic Schrödinger experiments")]
struct Args {
    #[arg(value_enum)]
    subcommand: Cmd,
    /// TOML experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `[output] directory`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for every random choice; overrides `[inverse] seed`.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let opts = RunOptions {
        out: args.out,
        seed: args.seed,
    };
    match run(args.subcommand.into(), &args.config, &opts) {
        Ok(out) => {
            for f in &out.files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("uhslab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

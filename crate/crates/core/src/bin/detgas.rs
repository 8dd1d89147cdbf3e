use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use detgas::harness::{cmd_diag, cmd_fekete, cmd_ldp, cmd_sample, describe, exit_code, ExperimentConfig, RunContext};
use detgas::{Error, Result};

#[derive(Parser)]
#[command(name = "detgas", version, about = "Fekete configurations, beta-ensemble sampling and equidistribution diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fekete configurations per degree and their distance to equilibrium.
    Fekete(Common),
    /// MCMC chains (and exact samples for beta = 2) per degree and beta.
    Sample(Common),
    /// Decay and exceedance fits from existing sample archives.
    Ldp(Common),
    /// Bernstein-Markov constants, lbb_check, tau and norm ratios.
    Diag(Common),
    /// Parse and check a config without running anything.
    ValidateConfig(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Overrides `output.dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn context(c: &Common) -> Result<RunContext> {
    let config = ExperimentConfig::load(&c.config)?;
    RunContext::new(config, c.seed, c.out.clone(), c.workers)
}

fn run(cli: Cli) -> Result<()> {
    let (c, name) = match &cli.command {
        Command::Fekete(c) => (c, "fekete"),
        Command::Sample(c) => (c, "sample"),
        Command::Ldp(c) => (c, "ldp"),
        Command::Diag(c) => (c, "diag"),
        Command::ValidateConfig(c) => (c, "validate-config"),
    };
    let ctx = context(c)?;
    let record = match name {
        "fekete" => cmd_fekete(&ctx)?,
        "sample" => cmd_sample(&ctx)?,
        "ldp" => cmd_ldp(&ctx)?,
        "diag" => cmd_diag(&ctx)?,
        _ => {
            println!("{}", describe(&ctx)?);
            return Ok(());
        }
    };
    println!(
        "{name}: {} entries written to {} (config_hash={})",
        record.entries.len(),
        ctx.out.display(),
        record.config_hash
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("detgas: {e}");
            let code = exit_code(&e);
            if matches!(e, Error::Config(_)) {
                eprintln!("see docs/config.md for the config grammar");
            }
            ExitCode::from(code as u8)
        }
    }
}

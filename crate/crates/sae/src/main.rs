use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use sae::commands::{self, Outputs, Status};
use sae::config::{Overrides, RunConfig};
use sae::manifest::{sha256_hex, Manifest};
use sae::{Error, Result};

#[derive(Parser)]
#[command(name = "sae", version, about = "Small area estimation of a composite poverty headcount")]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = number of CPUs).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one mixed model per census-missing indicator.
    Fit,
    /// Monte Carlo headcount estimates for every domain.
    Estimate,
    /// Point estimates with bootstrap MSE and CV.
    Mse,
    /// Design-based simulation over the configured scenarios.
    Simulate,
    /// Write a synthetic population, its census view and true headcounts.
    Generate,
    /// Expected poverty indicator of one unit with one or two missing indicators.
    Oracle {
        #[arg(long, allow_negative_numbers = true)]
        alpha: f64,
        #[arg(long, allow_negative_numbers = true)]
        k: f64,
        #[arg(long, allow_negative_numbers = true)]
        delta: f64,
        #[arg(long)]
        pi: f64,
        #[arg(long)]
        pi2: Option<f64>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Fit => "fit",
            Command::Estimate => "estimate",
            Command::Mse => "mse",
            Command::Simulate => "simulate",
            Command::Generate => "generate",
            Command::Oracle { .. } => "oracle",
        }
    }
}

fn run(cli: &Cli) -> Result<Status> {
    if let Command::Oracle { alpha, k, delta, pi, pi2 } = cli.command {
        println!("{}", commands::cmd_oracle(alpha, k, delta, pi, pi2)?);
        return Ok(Status::Ok);
    }
    let overrides = Overrides { seed: cli.seed, threads: cli.threads, out: cli.out.clone() };
    let cfg = RunConfig::resolve(cli.config.as_deref(), &overrides)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build()?;
    let start = Instant::now();
    let mut out = Outputs::default();
    let status = pool.install(|| match cli.command {
        Command::Fit => commands::cmd_fit(&cfg, &mut out),
        Command::Estimate => commands::cmd_estimate(&cfg, &mut out),
        Command::Mse => commands::cmd_mse(&cfg, &mut out),
        Command::Simulate => commands::cmd_simulate(&cfg, &mut out),
        Command::Generate => commands::cmd_generate(&cfg, &mut out),
        Command::Oracle { .. } => unreachable!(),
    })?;
    let config_json = serde_json::to_vec(&cfg).map_err(|source| Error::Json { path: "<config>".into(), source })?;
    Manifest {
        command: cli.command.name().to_string(),
        version: env!("CARGO_PKG_VERSION"),
        core_version: sae_core::VERSION,
        config_sha256: sha256_hex(&config_json),
        seed: cfg.seed,
        threads: pool.current_num_threads(),
        runtime_seconds: start.elapsed().as_secs_f64(),
        outputs: out.files,
    }
    .write(&cfg.out)?;
    Ok(status)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(status) => ExitCode::from(status.exit_code() as u8),
        Err(e) => {
            eprintln!("ERROR: {}: {e}", e.kind());
            ExitCode::from(1)
        }
    }
}

use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand};
use dmccs_cli::compare::write_report;
use dmccs_cli::sim::write_sim_csv;
use dmccs_cli::{compare_report, run_experiment, run_simulation, ExperimentConfig, ResultTable};

#[derive(Parser)]
#[command(name = "dmccs", version, about = "Decentralized coded caching placement experiments")]
struct Cli {
    /// Write CSV here instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize or evaluate every scheme over the M grid.
    Run { config: PathBuf },
    /// Gaps between each scheme and gp_lb in a result CSV.
    Compare { csv: PathBuf },
    /// Monte Carlo delivery of each scheme's placement.
    Simulate { config: PathBuf },
}

fn load(path: &PathBuf, seed: Option<u64>) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("--threads")?;
    }
    // Buffer so a failed run leaves no partial output file behind.
    let mut out = Vec::new();
    match &cli.command {
        Command::Run { config } => run_experiment(&load(config, cli.seed)?)?.write_csv(&mut out)?,
        Command::Compare { csv } => {
            let file = File::open(csv).with_context(|| format!("opening {}", csv.display()))?;
            let table = ResultTable::read_csv(file)?;
            write_report(&compare_report(&table)?, &mut out)?;
        }
        Command::Simulate { config } => write_sim_csv(&run_simulation(&load(config, cli.seed)?)?, &mut out)?,
    }
    match &cli.out {
        Some(p) => std::fs::write(p, &out).with_context(|| format!("writing {}", p.display()))?,
        None => io::stdout().lock().write_all(&out)?,
    }
    Ok(())
}

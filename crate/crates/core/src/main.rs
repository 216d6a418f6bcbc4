use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use xtx::control::Variant;
use xtx::harness::{emit_report, report_dir, run_grid, summaries, summary_table, ExperimentConfig};

#[derive(Parser)]
#[command(name = "xtx", version, about = "Exploit-then-explore agents on synthetic text games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one or more variants over a set of seeds and write a report.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Variant name, a comma-separated list, or `all`. Defaults to the config's.
        #[arg(long)]
        variant: Option<String>,
        /// Comma-separated seeds, overriding the config.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Rebuild the summary table and plot from an existing metrics CSV.
    Report {
        #[arg(long = "in")]
        dir: PathBuf,
    },
}

fn variants(arg: &str) -> Result<Vec<Variant>> {
    if arg.trim() == "all" {
        return Ok(Variant::ALL.to_vec());
    }
    Ok(arg.split(',').map(str::parse).collect::<Result<_, _>>()?)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            variant,
            seeds,
            episodes,
            out,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            let list = match variant {
                Some(v) => variants(&v)?,
                None => vec![cfg.variant],
            };
            cfg.variant = list[0];
            if let Some(s) = seeds {
                cfg.seeds = s;
            }
            if let Some(e) = episodes {
                cfg.episodes = e;
            }
            cfg.validate()?;
            eprintln!(
                "running {} variant(s) x {} seed(s) x {} episodes",
                list.len(),
                cfg.seeds.len(),
                cfg.episodes
            );
            let runs = run_grid(&cfg, &list)?;
            let paths = emit_report(&out, &cfg, &runs).context("writing report")?;
            print!("{}", summary_table(&summaries(&runs)));
            for p in paths {
                eprintln!("wrote {}", p.display());
            }
        }
        Command::Report { dir } => {
            let sums = report_dir(&dir).with_context(|| format!("reading {}", dir.display()))?;
            print!("{}", summary_table(&sums));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

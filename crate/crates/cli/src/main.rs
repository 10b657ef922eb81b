use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use rfgp::harness::config::parse_sweep;
use rfgp::harness::{run_scenario, ScenarioConfig};

/// Decentralized random-feature GP simulator.
#[derive(Parser, Debug)]
#[command(name = "rfgp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one scenario and write metrics.csv, config_resolved.txt and snapshots.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated epochs after which to snapshot every agent.
        #[arg(long, value_delimiter = ',')]
        snapshots: Option<Vec<i64>>,
    },
    /// Run a scenario once per value of one config key.
    Sweep {
        config: PathBuf,
        /// `dotted.key=v1,v2,...`, e.g. `consensus.rounds=1,2,5,10,20`.
        #[arg(long)]
        param: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn base_overrides(seed: Option<u64>, snapshots: Option<&[i64]>) -> Vec<(String, String)> {
    let mut ov = Vec::new();
    if let Some(s) = seed {
        ov.push(("seed".to_string(), s.to_string()));
    }
    if let Some(epochs) = snapshots {
        let list: Vec<String> = epochs.iter().map(i64::to_string).collect();
        ov.push((
            "eval.snapshots".to_string(),
            format!("[{}]", list.join(", ")),
        ));
    }
    ov
}

fn run_one(config: &Path, overrides: &[(String, String)], out: &Path) -> Result<String> {
    let cfg = ScenarioConfig::load_with_overrides(config, overrides)
        .with_context(|| format!("loading {}", config.display()))?;
    let output = run_scenario(&cfg)?;
    output
        .write_to(out, &cfg)
        .with_context(|| format!("writing results to {}", out.display()))?;
    Ok(output.metrics_csv()?)
}

fn run(config: &Path, out: &Path, seed: Option<u64>, snapshots: Option<&[i64]>) -> Result<()> {
    run_one(config, &base_overrides(seed, snapshots), out)?;
    eprintln!("wrote {}", out.join("metrics.csv").display());
    Ok(())
}

fn sweep(config: &Path, param: &str, out: &Path, seed: Option<u64>) -> Result<()> {
    let (key, values) = parse_sweep(param)?;
    let mut summary = format!("{key},t,agent,rmse,npll,w2\n");
    for value in &values {
        let mut ov = base_overrides(seed, None);
        ov.push((key.clone(), value.clone()));
        let dir = out.join(format!("{key}={value}"));
        let csv = run_one(config, &ov, &dir).with_context(|| format!("{key}={value}"))?;
        for line in csv.lines().skip(1) {
            writeln!(summary, "{value},{line}").expect("writing to a String");
        }
        eprintln!("{key}={value}: done");
    }
    fs::create_dir_all(out)?;
    fs::write(out.join("sweep.csv"), summary)?;
    eprintln!("wrote {}", out.join("sweep.csv").display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run {
            config,
            out,
            seed,
            snapshots,
        } => run(config, out, *seed, snapshots.as_deref()),
        Command::Sweep {
            config,
            param,
            out,
            seed,
        } => sweep(config, param, out, *seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

mod analyze;
mod config;
mod run;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use log::info;
use mfabc::kuramoto::generate_observed;

use crate::config::{ConfigError, ExperimentConfig};

/// Multifidelity ABC experiments on the Kuramoto oscillator network.
#[derive(Parser)]
#[command(name = "mfabc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate synthetic observed data and write it as JSON.
    GenerateData {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides `model.data_seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides `model.data`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the configured algorithm and write caches and a generation summary.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `run.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides `run.out`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides `run.replicates`.
        #[arg(long)]
        replicates: Option<usize>,
    },
    /// Report ESS, simulation time and posterior means from cache files.
    Analyze {
        /// Cache CSVs, run directories, or directories of replicate runs.
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare two groups of runs generation by generation.
    Compare {
        base: PathBuf,
        other: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

const EXIT_CONFIG: u8 = 2;
const EXIT_DEGENERATE: u8 = 3;

fn output(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn generate_data(config: Option<&Path>, seed: Option<u64>, out: Option<PathBuf>) -> Result<()> {
    let cfg = match config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let kuramoto = cfg.kuramoto()?;
    let seed = seed.unwrap_or(cfg.model.data_seed);
    let out = out.unwrap_or(cfg.model.data);
    let data = generate_observed(&kuramoto, seed)?;
    let mut text = serde_json::to_string_pretty(&data)?;
    text.push('\n');
    fs::write(&out, text).with_context(|| format!("writing {}", out.display()))?;
    info!("observed data with seed {seed} written to {}", out.display());
    Ok(())
}

fn run(config: &Path, seed: Option<u64>, out: Option<PathBuf>, replicates: Option<usize>) -> Result<()> {
    let cfg = ExperimentConfig::load(config)?;
    let plan = cfg.plan()?;
    let kuramoto = cfg.kuramoto()?;
    let replicates = replicates.unwrap_or(cfg.run.replicates);
    if replicates == 0 {
        return Err(ConfigError("--replicates must be positive".into()).into());
    }
    let seed = seed.unwrap_or(cfg.run.seed);
    let out = out.unwrap_or_else(|| cfg.run.out.clone());
    let data = run::load_observed(&cfg.model.data).map_err(|e| ConfigError(format!("{e:#}")))?;
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    fs::copy(config, out.join("config.toml")).context("copying configuration")?;
    for r in 0..replicates {
        let (dir, run_seed) = run::replicate_target(&out, seed, r, replicates);
        info!(
            "{} replicate {r} (seed {}) -> {}",
            plan.algorithm.name(),
            run_seed.0,
            dir.display()
        );
        let results = run::execute(&plan, kuramoto, &data, run_seed)?;
        for (_, s) in &results {
            info!(
                "  generation {}: ε {:.4}, η ({:.3}, {:.3}), {} proposals, ESS {:.1}, {:.3} s",
                s.generation, s.epsilon, s.eta1, s.eta2, s.proposals, s.ess, s.sim_time_s
            );
        }
        run::write_artifacts(&dir, &results)?;
    }
    Ok(())
}

fn load_group(path: &Path) -> Result<Vec<(String, Vec<analyze::Metrics>)>> {
    analyze::discover(path)?
        .into_iter()
        .map(|r| Ok((r.label.clone(), analyze::run_metrics(&analyze::load_run(&r)?))))
        .collect()
}

fn analyze(paths: &[PathBuf], out: Option<&Path>) -> Result<()> {
    let mut runs = Vec::new();
    for p in paths {
        runs.extend(load_group(p)?);
    }
    analyze::write_report(output(out)?, &runs)
}

fn compare(base: &Path, other: &Path, out: Option<&Path>) -> Result<()> {
    let strip = |g: Vec<(String, Vec<analyze::Metrics>)>| g.into_iter().map(|(_, m)| m).collect::<Vec<_>>();
    let a = strip(load_group(base)?);
    let b = strip(load_group(other)?);
    analyze::write_comparison(output(out)?, &a, &b)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<ConfigError>().is_some() {
        return EXIT_CONFIG;
    }
    match err.downcast_ref::<mfabc::Error>() {
        Some(
            mfabc::Error::DegenerateGeneration { .. }
            | mfabc::Error::DegenerateSample(_)
            | mfabc::Error::ProposalCeiling { .. }
            | mfabc::Error::SamplerAbort(_),
        ) => EXIT_DEGENERATE,
        Some(mfabc::Error::InvalidArgument(_)) => EXIT_CONFIG,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenerateData { config, seed, out } => generate_data(config.as_deref(), seed, out),
        Command::Run {
            config,
            seed,
            out,
            replicates,
        } => run(&config, seed, out, replicates),
        Command::Analyze { paths, out } => analyze(&paths, out.as_deref()),
        Command::Compare { base, other, out } => compare(&base, &other, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

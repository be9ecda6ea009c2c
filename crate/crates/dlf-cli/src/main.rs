//! Command-line front end: single-run demos, parameter sweeps, diffusion
//! curves, and re-rendering of figures from existing CSV tables.

mod plot;
mod render;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use dlf::experiment::{log_spaced, run_alpha_curve, run_demo, run_sweep, ExperimentConfig};
use dlf::filter::FilterKind;
use dlf::output::{write_demo_outputs, write_sweep_outputs};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "dlf", version, about = "Advection-diffusion data assimilation runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Experiment configuration file (JSON). Every field has a default, so
    /// `{}` reproduces the base case.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed override (precedence: config < DLF_SEED env < this flag).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; created if absent.
    #[arg(long, default_value = "dlf-out")]
    out: PathBuf,
    /// Replicates per cell.
    #[arg(long)]
    replicates: Option<usize>,
    /// Filters to run.
    #[arg(long, value_delimiter = ',')]
    filters: Option<Vec<String>>,
    /// Worker threads for replicate jobs (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one replicate and write field/metric tables plus figures.
    Demo(CommonArgs),
    /// Replicated sweep over the (alpha, I) grid with quantile summaries.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Relative-diffusion values.
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.001, 0.01, 0.1])]
        alphas: Vec<f64>,
        /// Observations per observation time.
        #[arg(long, value_delimiter = ',', default_values_t = vec![10, 20, 40, 60])]
        obs_counts: Vec<usize>,
    },
    /// Replicated runs over a log-spaced alpha grid at fixed I.
    AlphaCurve {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 1e-4)]
        alpha_min: f64,
        #[arg(long, default_value_t = 5.0)]
        alpha_max: f64,
        #[arg(long, default_value_t = 9)]
        alpha_count: usize,
        /// Explicit alpha list; overrides the log grid.
        #[arg(long, value_delimiter = ',')]
        alphas: Option<Vec<f64>>,
    },
    /// Re-render all figures from the CSV tables in --out, no recomputation.
    Replot {
        /// Directory holding previously written CSV tables.
        #[arg(long, default_value = "dlf-out")]
        out: PathBuf,
    },
}

fn load_config(common: &CommonArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            ExperimentConfig::from_json(&text).map_err(|e| anyhow::anyhow!("{e}"))?
        }
        None => ExperimentConfig::default(),
    };
    if let Ok(env_seed) = std::env::var("DLF_SEED") {
        cfg.base_seed = env_seed
            .parse()
            .with_context(|| format!("DLF_SEED value '{env_seed}' is not a u64"))?;
    }
    if let Some(seed) = common.seed {
        cfg.base_seed = seed;
    }
    if let Some(replicates) = common.replicates {
        cfg.replicates = replicates;
    }
    if let Some(filters) = &common.filters {
        cfg.filters = filters
            .iter()
            .map(|f| f.parse::<FilterKind>().map_err(|e| anyhow::anyhow!("{e}")))
            .collect::<Result<Vec<_>>>()?;
    }
    if let Some(jobs) = common.jobs {
        // Ignore the error if a global pool already exists.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
    cfg.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
    Ok(cfg)
}

fn finish(out: &std::path::Path, written_csv: &[String], failures: usize) -> Result<()> {
    let figures = render::render_dir(out)?;
    for name in written_csv.iter().chain(&figures) {
        println!("wrote {}", out.join(name).display());
    }
    if failures > 0 {
        eprintln!("{failures} replicate(s) failed; partial outputs are intact");
        std::process::exit(2);
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Demo(common) => {
            let cfg = load_config(&common)?;
            let demo = run_demo(&cfg, 0).map_err(|e| anyhow::anyhow!("{e}"))?;
            let written = write_demo_outputs(&common.out, &cfg, &demo, 0)
                .map_err(|e| anyhow::anyhow!("{e}"))?;
            finish(&common.out, &written, 0)
        }
        Command::Sweep {
            common,
            alphas,
            obs_counts,
        } => {
            let cfg = load_config(&common)?;
            let sweep =
                run_sweep(&cfg, &alphas, &obs_counts).map_err(|e| anyhow::anyhow!("{e}"))?;
            write_sweep_outputs(&common.out, &sweep).map_err(|e| anyhow::anyhow!("{e}"))?;
            let files = ["runs.csv", "series.csv", "summary.csv", "manifest.json"]
                .map(String::from)
                .to_vec();
            finish(&common.out, &files, sweep.failures.len())
        }
        Command::AlphaCurve {
            common,
            alpha_min,
            alpha_max,
            alpha_count,
            alphas,
        } => {
            let cfg = load_config(&common)?;
            let grid = alphas.unwrap_or_else(|| log_spaced(alpha_min, alpha_max, alpha_count));
            let sweep = run_alpha_curve(&cfg, &grid).map_err(|e| anyhow::anyhow!("{e}"))?;
            write_sweep_outputs(&common.out, &sweep).map_err(|e| anyhow::anyhow!("{e}"))?;
            let files = ["runs.csv", "series.csv", "summary.csv", "manifest.json"]
                .map(String::from)
                .to_vec();
            finish(&common.out, &files, sweep.failures.len())
        }
        Command::Replot { out } => {
            let figures = render::render_dir(&out)?;
            if figures.is_empty() {
                anyhow::bail!("no renderable CSV tables found in {}", out.display());
            }
            for name in &figures {
                println!("wrote {}", out.join(name).display());
            }
            Ok(())
        }
    }
}

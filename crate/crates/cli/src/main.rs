use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use ffqec::analytics::{approx_steady_state, optimize_threshold, steady_state, transition_matrix, GaussianDiscriminator, ThreeLevelParams};
use ffqec::harness::{apply_override, parse_config_text, run_evolution, run_sweep, run_window_scan, ExperimentConfig, RawConfig};

#[derive(Parser)]
#[command(name = "ffqec", version, about = "Memory experiments with state-dependent noise and BP+OSD decoding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Logical error rate and decoder cost over a parameter sweep.
    Sweep(RunArgs),
    /// Per-cycle check populations from an unleaked start (no decoding).
    Evolution(RunArgs),
    /// Metrics as a function of decoding-window length.
    WindowScan(RunArgs),
    /// Exact and approximate steady state of the three-level readout chain.
    SteadyState {
        #[arg(long, default_value_t = 0.002)]
        p_leak: f64,
        #[arg(long, default_value_t = 0.2)]
        p_seep: f64,
        /// Net probability of reaching the ground state before readout, minus one half.
        #[arg(long, default_value_t = 0.0)]
        delta: f64,
    },
    /// Readout threshold minimizing the prior-weighted error of a Gaussian discriminator.
    OptimizeReadout {
        /// Probability that the measured state is |0>.
        #[arg(long, default_value_t = 0.5)]
        p0: f64,
        #[arg(long, default_value_t = 0.0)]
        mu0: f64,
        #[arg(long, default_value_t = 1.0)]
        mu1: f64,
        #[arg(long, default_value_t = 0.2)]
        sigma: f64,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    shots: Option<usize>,
    /// CSV output path; a `.manifest` sidecar is written next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    threads: Option<usize>,
}

impl RunArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut raw = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                parse_config_text(&text)?
            }
            None => RawConfig::new(),
        };
        for kv in &self.overrides {
            apply_override(&mut raw, kv)?;
        }
        let flags = [
            ("seed", self.seed.map(|v| v.to_string())),
            ("shots", self.shots.map(|v| v.to_string())),
            ("output", self.out.as_ref().map(|p| p.display().to_string())),
            ("threads", self.threads.map(|v| v.to_string())),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                raw.insert(k.to_string(), v);
            }
        }
        Ok(ExperimentConfig::from_raw(&raw)?)
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Sweep(args) => {
            let rows = run_sweep(&args.resolve()?)?;
            log::info!("{} rows", rows.len());
        }
        Command::Evolution(args) => {
            let rows = run_evolution(&args.resolve()?)?;
            log::info!("{} rows", rows.len());
        }
        Command::WindowScan(args) => {
            let rows = run_window_scan(&args.resolve()?)?;
            log::info!("{} rows", rows.len());
        }
        Command::SteadyState { p_leak, p_seep, delta } => {
            let params = ThreeLevelParams::new(p_leak, p_seep, delta)?;
            let exact = steady_state(&transition_matrix(&params)?)?;
            let approx = approx_steady_state(&params)?;
            println!("state,exact,approx");
            for (i, name) in ["ground", "excited", "leaked"].iter().enumerate() {
                println!("{name},{},{}", exact[i], approx[i]);
            }
        }
        Command::OptimizeReadout { p0, mu0, mu1, sigma } => {
            let disc = GaussianDiscriminator { mu0, mu1, sigma };
            let c = optimize_threshold(p0, &disc)?;
            println!("threshold,p10,p01,objective");
            println!("{},{},{},{}", c.threshold, c.p10, c.p01, c.objective);
        }
    }
    Ok(())
}

use std::path::PathBuf;
use std::process::ExitCode;

use aois_core::engine::output::write_run;
use aois_core::engine::sweep::{aggregate, sweep, write_sweep, Axis};
use aois_core::engine::verify::run_all;
use aois_core::engine::{run_episode, Mode, SystemConfig};
use clap::{Parser, Subcommand};

/// Semantic-age-aware downlink scheduling simulator.
#[derive(Parser)]
#[command(name = "aois", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one episode and write CSV, JSON and plot files.
    Run {
        /// JSON configuration; built-in defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "sca")]
        mode: Mode,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        slots: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Sweep one parameter over several values and seeds.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "zf")]
        mode: Mode,
        /// p_max (dBm), mean_l or omega.
        #[arg(long)]
        axis: Axis,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
        #[arg(long)]
        slots: Option<u64>,
        #[arg(long, default_value = "sweep")]
        out: PathBuf,
    },
    /// Run the built-in numerical self-checks and print PASS/FAIL per check.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load(config: Option<PathBuf>, slots: Option<u64>) -> aois_core::Result<SystemConfig> {
    let mut cfg = match config {
        Some(path) => SystemConfig::load(&path)?,
        None => SystemConfig::default(),
    };
    if let Some(s) = slots {
        cfg.slots = s;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> aois_core::Result<bool> {
    match cli.command {
        Command::Run { config, mode, seed, slots, out } => {
            let mut cfg = load(config, slots)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let result = run_episode(&cfg, mode)?;
            write_run(&result, &out)?;
            let s = &result.summary;
            println!(
                "mode={} seed={} slots={} avg_aois={:.6} avg_cost={:.6} transmit_fraction={:.4} lost_updates={}",
                s.mode,
                s.seed,
                s.slots,
                s.avg_aois,
                s.avg_cost_per_user.iter().sum::<f64>(),
                s.transmit_fraction,
                s.lost_updates
            );
            println!("wrote {}", out.display());
            Ok(true)
        }
        Command::Sweep { config, mode, axis, values, seeds, slots, out } => {
            let cfg = load(config, slots)?;
            cfg.validate(mode)?;
            let rows = sweep(&cfg, mode, axis, &values, &seeds)?;
            write_sweep(&rows, axis, &out)?;
            for (v, mean, std) in aggregate(&rows) {
                println!("value={v} mean_aois={mean:.6} std={std:.6}");
            }
            println!("wrote {}", out.display());
            Ok(true)
        }
        Command::Verify { seed } => {
            let checks = run_all(seed)?;
            for c in &checks {
                println!("{c}");
            }
            Ok(checks.iter().all(|c| c.passed))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

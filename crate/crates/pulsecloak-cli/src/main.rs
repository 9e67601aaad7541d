//! `pulsecloak`: drive the heartbeat-obfuscation simulator from a scenario
//! file. `keygen` makes keys, `simulate` produces sensor captures, `extract`
//! reads heart rates back out, `eval` plays privacy games, and `bench`
//! sweeps one axis of the setup.

mod commands;
mod config;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};

use commands::SweepAxis;
use config::ScenarioConfig;
use pulsecloak::obfuscation::FrequencySpace;

#[derive(Parser)]
#[command(name = "pulsecloak", version, about)]
struct Cli {
    /// Scenario file (TOML). Every field is optional; defaults describe a
    /// 30 s mmWave capture of a 66 BPM subject at 20 dB SNR.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed. Overrides the scenario file; all randomness derives
    /// from it, so equal seeds give byte-identical outputs.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory. Overrides the scenario file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Run the invariant self-check suite first; any failure aborts with a
    /// nonzero exit code.
    #[arg(long, global = true)]
    check: bool,

    #[command(subcommand)]
    command: Command,
}

fn parse_space(s: &str) -> Result<FrequencySpace, String> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err("expected LOW:HIGH:RESOLUTION, e.g. 45:180:0.002".into());
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.trim().parse::<f64>().map_err(|e| e.to_string()))
        .collect::<Result<_, String>>()?;
    FrequencySpace::new(nums[0], nums[1], nums[2]).map_err(|e| e.to_string())
}

#[derive(Subcommand)]
enum Command {
    /// Generate a key file and print its scheme parameters.
    Keygen {
        /// Number of decoy frequencies in the key (at least 1).
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        p: u64,

        /// Frequency grid as LOW:HIGH:RESOLUTION in BPM. Defaults to the
        /// scenario's space (45:180:0.002).
        #[arg(long, value_parser = parse_space)]
        space: Option<FrequencySpace>,
    },

    /// Synthesize the scene and run it through the sensor. Writes the chest
    /// and observed displacement CSVs, the raw IF matrix, and a 6-BPM
    /// spectrogram.
    Simulate {
        /// Key file whose frequencies drive the decoy actuator. Without it,
        /// the scenario's `pulse_train.decoy_frequencies_bpm` list is used.
        #[arg(long)]
        key: Option<PathBuf>,
    },

    /// Estimate heart rate from a displacement CSV with both estimators.
    Extract {
        /// Input CSV (defaults to `<out>/observed.csv`).
        #[arg(long)]
        input: Option<PathBuf>,

        /// Key file; adds the authorized (decoy-notched) estimates.
        #[arg(long)]
        key: Option<PathBuf>,
    },

    /// Run the configured privacy game and write summary.json + trials.csv.
    Eval {
        /// Fix this key for every trial instead of sampling fresh keys.
        #[arg(long)]
        key: Option<PathBuf>,
    },

    /// Sweep one axis and tabulate privacy metrics per point.
    Bench {
        #[arg(long, value_enum)]
        sweep: SweepAxis,

        /// Trials per sweep point.
        #[arg(long, default_value_t = 16)]
        trials: usize,
    },
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let mut config = match &cli.config {
        Some(path) => ScenarioConfig::load(path)?,
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.out_dir = out.clone();
    }
    config.validate()?;

    if cli.check {
        commands::run_self_checks(&config)?;
    }

    match cli.command {
        Command::Keygen { p, space } => commands::keygen(&config, p as usize, space),
        Command::Simulate { key } => commands::simulate(&config, key.as_deref()),
        Command::Extract { input, key } => {
            commands::extract(&config, input.as_deref(), key.as_deref())
        }
        Command::Eval { key } => commands::eval(&config, key.as_deref()),
        Command::Bench { sweep, trials } => commands::bench(&config, sweep, trials),
    }
}

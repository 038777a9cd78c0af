use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use srnn_pcm::bench::{device_bench, drift_demo, write_drift_csv, DeviceBenchConfig, DriftDemoConfig};
use srnn_pcm::report::write_run_outputs;
use srnn_pcm::sweep::{sweep, write_sweep_outputs, SweepConfig};
use srnn_pcm::{ExperimentConfig, Trainer};

/// Train spiking RNNs with e-prop on simulated phase-change memory crossbars.
#[derive(Debug, Parser)]
#[command(name = "srnn-pcm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML configuration file; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one network and write metrics, weights and plots.
    Train {
        #[command(flatten)]
        common: Common,
        /// Overrides the number of epochs.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Random search over a declared hyperparameter space.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Overrides the trial budget.
        #[arg(long)]
        budget: Option<usize>,
        /// Overrides the number of worker threads.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Programming accuracy of multi-device synapses.
    DeviceBench {
        #[command(flatten)]
        common: Common,
        /// Overrides the repetitions per grid cell.
        #[arg(long)]
        repetitions: Option<usize>,
    },
    /// Conductance drift curves after consecutive SET pulses.
    DriftDemo {
        #[command(flatten)]
        common: Common,
    },
}

fn out_dir(common: &Common, fallback: &str) -> PathBuf {
    common.out.clone().unwrap_or_else(|| PathBuf::from(fallback))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .with_context(|| format!("creating {}", path.display()))
}

fn run_train(common: Common, epochs: Option<usize>) -> Result<()> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(e) = epochs {
        cfg.epochs = e;
    }
    let out = common
        .out
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out/train"));
    cfg.validate()?;
    let mut trainer = Trainer::new(&cfg)?;
    while let Some(r) = trainer.epoch()? {
        if r.epoch % 25 == 0 || r.epoch + 1 == cfg.epochs {
            log::info!("epoch {:4}  mse {:.5}  rate {:.2} Hz", r.epoch, r.mse, r.firing_rate_hz);
        }
    }
    write_run_outputs(&mut trainer, &out)?;
    let m = trainer.metrics();
    if m.failed {
        println!("run diverged after {} epochs", m.records.len());
    }
    println!(
        "score {:.5}  final mse {:.5}  firing rate {:.2} Hz  pulses/epoch {:.1}",
        m.score(),
        m.final_mse().unwrap_or(f64::NAN),
        m.final_firing_rate(),
        m.mean_pulses_per_epoch()
    );
    println!("wrote {}", out.display());
    Ok(())
}

fn run_sweep(common: Common, budget: Option<usize>, workers: Option<usize>) -> Result<()> {
    let path = common
        .config
        .as_ref()
        .context("sweep needs --config with a [[param]] space")?;
    let mut cfg = SweepConfig::load(path)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(b) = budget {
        cfg.budget = b;
    }
    if workers.is_some() {
        cfg.workers = workers;
    }
    let out = out_dir(&common, "out/sweep");
    let entries = sweep(&cfg)?;
    write_sweep_outputs(&entries, &out)?;
    for e in entries.iter().take(5) {
        println!(
            "#{:<3} score {:.5}  {}  seed {}",
            e.rank,
            e.score,
            e.hash(),
            e.config.seed
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn run_device_bench(common: Common, repetitions: Option<usize>) -> Result<()> {
    let mut cfg = match &common.config {
        Some(path) => DeviceBenchConfig::load(path)?,
        None => DeviceBenchConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(r) = repetitions {
        cfg.repetitions = r;
    }
    let out = out_dir(&common, "out/device-bench");
    fs::create_dir_all(&out)?;
    let table = device_bench(&cfg)?;
    let path = out.join("device_bench.csv");
    table.write_csv(create(&path)?)?;
    for &n in &cfg.n_values {
        if let (Some(std), Some(ratio)) = (table.mean_std(n), table.std_ratio(n)) {
            println!("n={n}: mean std {std:.4} µS, ratio to n=1 {ratio:.3}");
        }
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn run_drift_demo(common: Common) -> Result<()> {
    let mut cfg = match &common.config {
        Some(path) => DriftDemoConfig::load(path)?,
        None => DriftDemoConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let out = out_dir(&common, "out/drift-demo");
    fs::create_dir_all(&out)?;
    let points = drift_demo(&cfg)?;
    let path = out.join("drift.csv");
    write_drift_csv(&points, create(&path)?)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Train { common, epochs } => run_train(common, epochs),
        Command::Sweep {
            common,
            budget,
            workers,
        } => run_sweep(common, budget, workers),
        Command::DeviceBench {
            common,
            repetitions,
        } => run_device_bench(common, repetitions),
        Command::DriftDemo { common } => run_drift_demo(common),
    }
}

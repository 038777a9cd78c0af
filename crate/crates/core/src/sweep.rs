//! Seeded random search over experiment configurations.
//!
//! A sweep file holds a `base` experiment and a list of `[[param]]` entries,
//! each naming a dotted config path and either a numeric range or a list of
//! values:
//!
//! ```toml
//! budget = 60
//! seed = 1
//!
//! [base]
//! mode = "perf"
//!
//! [[param]]
//! path = "updater.eta"
//! low = 0.001
//! high = 0.1
//! log = true
//!
//! [[param]]
//! path = "updater.scheme"
//! values = ["sign", "mixed"]
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{load_toml, sub_seed, ExperimentConfig};
use crate::error::{Error, Result};
use crate::train::{train, TrialMetrics};

const SEED_SAMPLER: u64 = 100;
const SEED_TRIALS: u64 = 101;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamSpace {
    /// Dotted path into the experiment config, e.g. `updater.eta`.
    pub path: String,
    #[serde(default)]
    pub low: Option<f64>,
    #[serde(default)]
    pub high: Option<f64>,
    /// Sample uniformly in log space.
    #[serde(default)]
    pub log: bool,
    /// Round samples to integers.
    #[serde(default)]
    pub integer: bool,
    /// Explicit choices; overrides `low`/`high`.
    #[serde(default)]
    pub values: Option<Vec<toml::Value>>,
}

impl ParamSpace {
    pub fn range(path: &str, low: f64, high: f64, log: bool) -> Self {
        Self {
            path: path.to_string(),
            low: Some(low),
            high: Some(high),
            log,
            integer: false,
            values: None,
        }
    }

    pub fn choice(path: &str, values: Vec<toml::Value>) -> Self {
        Self {
            path: path.to_string(),
            low: None,
            high: None,
            log: false,
            integer: false,
            values: Some(values),
        }
    }

    fn validate(&self) -> Result<()> {
        let err = |msg: &str| Err(Error::config(format!("param `{}`: {msg}", self.path)));
        if self.path.is_empty() || self.path.split('.').any(str::is_empty) {
            return err("invalid path");
        }
        if let Some(values) = &self.values {
            if values.is_empty() {
                return err("empty value list");
            }
            return Ok(());
        }
        match (self.low, self.high) {
            (Some(lo), Some(hi)) => {
                if !lo.is_finite() || !hi.is_finite() || lo > hi {
                    return err("range must satisfy low <= high");
                }
                if self.log && lo <= 0.0 {
                    return err("log range must be positive");
                }
                if self.integer && lo.ceil() > hi.floor() {
                    return err("range contains no integer");
                }
                Ok(())
            }
            _ => err("needs either `values` or both `low` and `high`"),
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> toml::Value {
        if let Some(values) = &self.values {
            return values[rng.random_range(0..values.len())].clone();
        }
        let (lo, hi) = (self.low.unwrap_or(0.0), self.high.unwrap_or(0.0));
        let x = if lo == hi {
            lo
        } else if self.log {
            rng.random_range(lo.ln()..=hi.ln()).exp()
        } else {
            rng.random_range(lo..=hi)
        };
        if self.integer {
            toml::Value::Integer(x.round().clamp(lo.ceil(), hi.floor()) as i64)
        } else {
            toml::Value::Float(x)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub budget: usize,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; defaults to the available parallelism.
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub base: ExperimentConfig,
    #[serde(default)]
    pub param: Vec<ParamSpace>,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(Error::config("sweep budget must be at least 1"));
        }
        if self.param.is_empty() {
            return Err(Error::config("sweep space is empty: declare at least one [[param]]"));
        }
        if self.workers == Some(0) {
            return Err(Error::config("workers must be at least 1"));
        }
        for p in &self.param {
            p.validate()?;
        }
        self.base.validate()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let cfg: Self = load_toml(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// The configurations tried by this sweep, in trial order.
    pub fn sample_configs(&self) -> Result<Vec<ExperimentConfig>> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(self.seed, SEED_SAMPLER));
        let base = toml::Value::try_from(&self.base)
            .map_err(|e| Error::config(format!("cannot encode base config: {e}")))?;
        (0..self.budget)
            .map(|i| {
                let mut doc = base.clone();
                for p in &self.param {
                    set_path(&mut doc, &p.path, p.sample(&mut rng))?;
                }
                let mut cfg: ExperimentConfig = doc
                    .try_into()
                    .map_err(|e: toml::de::Error| Error::config(format!("trial {i}: {e}")))?;
                cfg.seed = sub_seed(sub_seed(self.seed, SEED_TRIALS), i as u64);
                cfg.validate()?;
                Ok(cfg)
            })
            .collect()
    }
}

/// Set `path` (dot separated) in a TOML table, creating intermediate tables.
pub fn set_path(doc: &mut toml::Value, path: &str, value: toml::Value) -> Result<()> {
    let mut node = doc;
    let mut parts = path.split('.').peekable();
    while let Some(key) = parts.next() {
        let table = node
            .as_table_mut()
            .ok_or_else(|| Error::config(format!("`{path}`: `{key}` is not inside a table")))?;
        if parts.peek().is_none() {
            table.insert(key.to_string(), value);
            return Ok(());
        }
        node = table
            .entry(key.to_string())
            .or_insert_with(|| toml::Value::Table(toml::map::Map::new()));
    }
    Err(Error::config("empty parameter path"))
}

#[derive(Debug, Clone)]
pub struct SweepEntry {
    pub rank: usize,
    pub trial: usize,
    pub score: f64,
    pub config: ExperimentConfig,
    pub metrics: TrialMetrics,
}

impl SweepEntry {
    pub fn hash(&self) -> String {
        self.config.hash()
    }
}

/// Train every configuration and rank them by score, best first. Ties keep
/// trial order.
pub fn run_configs(configs: Vec<ExperimentConfig>, workers: usize) -> Result<Vec<SweepEntry>> {
    let workers = workers.clamp(1, configs.len().max(1));
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<TrialMetrics>>>> =
        Mutex::new((0..configs.len()).map(|_| None).collect());
    thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(cfg) = configs.get(i) else { break };
                let r = train(cfg);
                match &r {
                    Ok(m) => log::info!("trial {i}: score {:.5}", m.score()),
                    Err(e) => log::warn!("trial {i}: {e}"),
                }
                results.lock().expect("no worker panicked")[i] = Some(r);
            });
        }
    });
    let results = results.into_inner().expect("no worker panicked");
    let mut entries = Vec::with_capacity(configs.len());
    for (trial, (config, result)) in configs.into_iter().zip(results).enumerate() {
        let metrics = result.expect("every trial slot is filled")?;
        entries.push(SweepEntry {
            rank: 0,
            trial,
            score: metrics.score(),
            config,
            metrics,
        });
    }
    entries.sort_by(|a, b| a.score.total_cmp(&b.score).then(a.trial.cmp(&b.trial)));
    for (rank, e) in entries.iter_mut().enumerate() {
        e.rank = rank + 1;
    }
    Ok(entries)
}

pub fn sweep(cfg: &SweepConfig) -> Result<Vec<SweepEntry>> {
    let configs = cfg.sample_configs()?;
    let workers = cfg.workers.unwrap_or_else(|| {
        thread::available_parallelism().map_or(1, |n| n.get())
    });
    run_configs(configs, workers)
}

pub fn write_leaderboard<W: Write>(entries: &[SweepEntry], mut out: W) -> std::io::Result<()> {
    writeln!(
        out,
        "rank,score,config_hash,seed,trial,final_mse,firing_rate_hz,pulses_per_epoch"
    )?;
    for e in entries {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            e.rank,
            e.score,
            e.hash(),
            e.config.seed,
            e.trial,
            e.metrics.final_mse().unwrap_or(f64::NAN),
            e.metrics.final_firing_rate(),
            e.metrics.mean_pulses_per_epoch()
        )?;
    }
    Ok(())
}

/// Write `leaderboard.csv`, one config per trial under `configs/`, and the
/// winner as `best.toml`.
pub fn write_sweep_outputs(entries: &[SweepEntry], dir: &Path) -> Result<()> {
    let configs = dir.join("configs");
    fs::create_dir_all(&configs).map_err(|e| Error::io(&configs, e))?;
    let board = dir.join("leaderboard.csv");
    let file = fs::File::create(&board).map_err(|e| Error::io(&board, e))?;
    write_leaderboard(entries, std::io::BufWriter::new(file)).map_err(|e| Error::io(&board, e))?;
    for e in entries {
        let path = configs.join(format!("{}_{}.toml", e.hash(), e.config.seed));
        fs::write(&path, e.config.to_toml()).map_err(|err| Error::io(&path, err))?;
    }
    if let Some(best) = entries.first() {
        let path = dir.join("best.toml");
        fs::write(&path, best.config.to_toml()).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

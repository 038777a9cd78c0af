//! Device-level characterization: programming accuracy of multi-device
//! synapses and conductance drift curves.

use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{load_toml, sub_seed};
use crate::crossbar::Crossbar;
use crate::device::{DeviceMode, DeviceModelParams, DeviceState};
use crate::error::{Error, Result};
use crate::updaters::{plan_multimem, UpdaterConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceBenchConfig {
    pub seed: u64,
    pub n_values: Vec<usize>,
    /// Normalized conductances `(1/N)(sum G+ - sum G-)` in µS; sources and
    /// targets both range over `grid_min..=grid_max` in steps of `grid_step`.
    pub grid_min: f64,
    pub grid_max: f64,
    pub grid_step: f64,
    pub repetitions: usize,
    /// Time between programming and the READ, in seconds.
    pub read_delay: f64,
    pub device: DeviceModelParams,
}

impl Default for DeviceBenchConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_values: vec![1, 2, 4, 8],
            grid_min: -10.0,
            grid_max: 10.0,
            grid_step: 1.0,
            repetitions: 1000,
            read_delay: 0.0,
            device: DeviceModelParams::default(),
        }
    }
}

impl DeviceBenchConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let cfg: Self = load_toml(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_values.is_empty() || self.n_values.contains(&0) {
            return Err(Error::config("n_values must be non-empty and positive"));
        }
        if !(self.grid_step > 0.0) || self.grid_min > self.grid_max {
            return Err(Error::config("grid needs grid_step > 0 and grid_min <= grid_max"));
        }
        if self.grid_min < -10.0 || self.grid_max > 10.0 {
            return Err(Error::config("grid must lie within +-10 µS"));
        }
        if self.repetitions == 0 {
            return Err(Error::config("repetitions must be at least 1"));
        }
        if !(self.read_delay >= 0.0) || !self.read_delay.is_finite() {
            return Err(Error::config("read_delay must be non-negative"));
        }
        self.device.validate()
    }

    pub fn grid(&self) -> Vec<f64> {
        let count = ((self.grid_max - self.grid_min) / self.grid_step + 1e-9).floor() as usize + 1;
        (0..count)
            .map(|i| self.grid_min + i as f64 * self.grid_step)
            .collect()
    }
}

/// Error statistics of one `(n, source, target)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchCell {
    pub n: usize,
    pub source: f64,
    pub target: f64,
    pub mean_achieved: f64,
    /// Mean of `achieved - target`.
    pub mean_error: f64,
    pub std_error: f64,
    pub planned_pulses: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchTable {
    pub cells: Vec<BenchCell>,
}

impl BenchTable {
    /// Grid-averaged error standard deviation for `n` devices per side.
    pub fn mean_std(&self, n: usize) -> Option<f64> {
        let stds: Vec<f64> = self
            .cells
            .iter()
            .filter(|c| c.n == n)
            .map(|c| c.std_error)
            .collect();
        (!stds.is_empty()).then(|| stds.iter().sum::<f64>() / stds.len() as f64)
    }

    /// `mean_std(n) / mean_std(1)`.
    pub fn std_ratio(&self, n: usize) -> Option<f64> {
        Some(self.mean_std(n)? / self.mean_std(1)?)
    }

    pub fn cell(&self, n: usize, source: f64, target: f64) -> Option<&BenchCell> {
        self.cells
            .iter()
            .find(|c| c.n == n && c.source == source && c.target == target)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "n,g_source,g_target,mean_achieved,mean_error,std_error,planned_pulses"
        )?;
        for c in &self.cells {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                c.n, c.source, c.target, c.mean_achieved, c.mean_error, c.std_error, c.planned_pulses
            )?;
        }
        Ok(())
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Program `repetitions` independent synapses to a source level and then to
/// a target level with the multi-memristor planner, and compare the read-back
/// normalized conductance with the target.
///
/// Each repetition is one row of a `repetitions x 1` crossbar with
/// `beta = 1 / n`, so weights are normalized conductances.
pub fn device_bench(cfg: &DeviceBenchConfig) -> Result<BenchTable> {
    cfg.validate()?;
    let grid = cfg.grid();
    let reps = cfg.repetitions;
    let mut cells = Vec::new();
    for (ni, &n) in cfg.n_values.iter().enumerate() {
        let beta = 1.0 / n as f64;
        let ucfg = UpdaterConfig {
            n,
            eta: 1.0,
            ..UpdaterConfig::default()
        };
        for (si, &source) in grid.iter().enumerate() {
            let seed = sub_seed(cfg.seed, ((ni * grid.len() + si) as u64) << 1);
            let mut base = Crossbar::new(reps, 1, n, cfg.device.clone(), seed)?;
            let grad = Array2::from_elem((reps, 1), -source);
            let plan = plan_multimem(&grad, &ucfg, &base, beta)?;
            base.apply_plan(&plan)?;
            for &target in &grid {
                let mut xbar = base.clone();
                let grad = Array2::from_elem((reps, 1), source - target);
                let plan = plan_multimem(&grad, &ucfg, &xbar, beta)?;
                xbar.apply_plan(&plan)?;
                xbar.advance_clock(cfg.read_delay)?;
                let achieved: Vec<f64> = xbar.read_effective(beta)?.iter().copied().collect();
                let errors: Vec<f64> = achieved.iter().map(|a| a - target).collect();
                let (mean_error, std_error) = mean_std(&errors);
                cells.push(BenchCell {
                    n,
                    source,
                    target,
                    mean_achieved: mean_error + target,
                    mean_error,
                    std_error,
                    planned_pulses: plan.total_pulses(),
                });
            }
        }
    }
    Ok(BenchTable { cells })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriftDemoConfig {
    pub seed: u64,
    pub devices: usize,
    /// Consecutive SET pulses applied at time zero.
    pub pulses: usize,
    /// Read times are log-spaced over `[t_start, t_end]` seconds after the
    /// last pulse.
    pub t_start: f64,
    pub t_end: f64,
    pub points: usize,
    pub device: DeviceModelParams,
}

impl Default for DriftDemoConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            devices: 300,
            pulses: 8,
            t_start: 1.0,
            t_end: 1e5,
            points: 26,
            device: DeviceModelParams::default(),
        }
    }
}

impl DriftDemoConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let cfg: Self = load_toml(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.devices == 0 || self.points < 2 {
            return Err(Error::config("drift demo needs devices >= 1 and points >= 2"));
        }
        if !(self.t_start > 0.0) || !(self.t_end > self.t_start) || !self.t_end.is_finite() {
            return Err(Error::config("drift demo needs 0 < t_start < t_end"));
        }
        self.device.validate()
    }

    pub fn times(&self) -> Vec<f64> {
        let (a, b) = (self.t_start.ln(), self.t_end.ln());
        (0..self.points)
            .map(|i| (a + (b - a) * i as f64 / (self.points - 1) as f64).exp())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftPoint {
    pub mode: DeviceMode,
    pub pulses: usize,
    pub t: f64,
    pub mean_g: f64,
    pub std_g: f64,
}

/// Conductance statistics after 1..=`pulses` SET pulses (at `t = 0`) and the
/// subsequent drift, for both the realistic model and its perf-mode twin.
pub fn drift_demo(cfg: &DriftDemoConfig) -> Result<Vec<DriftPoint>> {
    cfg.validate()?;
    let times = cfg.times();
    let mut out = Vec::new();
    for (mi, mode) in [DeviceMode::Realistic, DeviceMode::Perf].into_iter().enumerate() {
        let params = match mode {
            DeviceMode::Realistic => DeviceModelParams {
                mode,
                ..cfg.device.clone()
            },
            DeviceMode::Perf => DeviceModelParams {
                g_unit: cfg.device.g_max / f64::from(1u32 << cfg.device.cb_res),
                mode,
                ..cfg.device.clone()
            },
        };
        params.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(cfg.seed, mi as u64));
        let mut devices: Vec<DeviceState> = (0..cfg.devices)
            .map(|_| DeviceState::fresh(&params, 0.0, &mut rng))
            .collect();
        for p in 0..=cfg.pulses {
            if p > 0 {
                for d in devices.iter_mut() {
                    d.apply_set(&params, 0.0, &mut rng)?;
                }
            }
            for &t in &times {
                let reads = devices
                    .iter()
                    .map(|d| d.read(&params, t, &mut rng))
                    .collect::<Result<Vec<f64>>>()?;
                let (mean_g, std_g) = mean_std(&reads);
                out.push(DriftPoint {
                    mode,
                    pulses: p,
                    t,
                    mean_g,
                    std_g,
                });
            }
        }
    }
    Ok(out)
}

pub fn write_drift_csv<W: Write>(points: &[DriftPoint], mut out: W) -> std::io::Result<()> {
    writeln!(out, "mode,pulses,t,mean_g,std_g")?;
    for p in points {
        let mode = match p.mode {
            DeviceMode::Realistic => "realistic",
            DeviceMode::Perf => "perf",
        };
        writeln!(out, "{mode},{},{},{},{}", p.pulses, p.t, p.mean_g, p.std_g)?;
    }
    Ok(())
}

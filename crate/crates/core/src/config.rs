//! Experiment configuration files.
//!
//! Configs are TOML documents whose keys mirror the struct fields below.
//! Every section is optional and falls back to its defaults; unknown keys are
//! rejected.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::crossbar::default_beta;
use crate::device::{DeviceMode, DeviceModelParams};
use crate::eprop::Feedback;
use crate::error::{Error, Result};
use crate::snn::NetParams;
use crate::updaters::UpdaterConfig;

/// Where the network weights live during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Full statistical PCM model.
    #[default]
    Realistic,
    /// Ideal quantized memory (no noise, no drift).
    Perf,
    /// Floating-point weights, no crossbar.
    Fp32,
}

impl Mode {
    pub fn device_mode(self) -> Option<DeviceMode> {
        match self {
            Mode::Realistic => Some(DeviceMode::Realistic),
            Mode::Perf => Some(DeviceMode::Perf),
            Mode::Fp32 => None,
        }
    }
}

/// Initial weights are drawn from `Normal(0, scale / sqrt(fan_in))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitConfig {
    pub w_in_scale: f64,
    pub w_rec_scale: f64,
    pub w_out_scale: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            w_in_scale: 1.0,
            w_rec_scale: 0.5,
            w_out_scale: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Seed for input spikes, initial weights, devices and updater streams.
    pub seed: u64,
    pub mode: Mode,
    pub epochs: usize,
    /// Number of final epochs averaged into the reported score.
    pub eval_window: usize,
    /// Seed of the target pattern, fixed across runs.
    pub pattern_seed: u64,
    /// Trial length in time steps.
    pub steps: usize,
    pub input_rate_hz: f64,
    /// Weight per µS; defaults to `1 / (n * (g_max - g_min))`.
    pub beta: Option<f64>,
    pub feedback: Feedback,
    pub device: DeviceModelParams,
    pub net: NetParams,
    pub init: InitConfig,
    pub updater: UpdaterConfig,
    /// Output directory; the command line `--out` takes precedence.
    pub out_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            mode: Mode::Realistic,
            epochs: 250,
            eval_window: 10,
            pattern_seed: 2021,
            steps: 1000,
            input_rate_hz: 50.0,
            beta: None,
            feedback: Feedback::Symmetric,
            device: DeviceModelParams::default(),
            net: NetParams::default(),
            init: InitConfig::default(),
            updater: UpdaterConfig::default(),
            out_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs must be at least 1"));
        }
        if self.eval_window == 0 {
            return Err(Error::config("eval_window must be at least 1"));
        }
        if !(self.input_rate_hz >= 0.0) || !self.input_rate_hz.is_finite() {
            return Err(Error::config("input_rate_hz must be non-negative"));
        }
        if let Some(beta) = self.beta {
            if !(beta > 0.0) || !beta.is_finite() {
                return Err(Error::config("beta must be positive"));
            }
        }
        let scales = [self.init.w_in_scale, self.init.w_rec_scale, self.init.w_out_scale];
        if scales.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(Error::config("init scales must be non-negative"));
        }
        self.net.validate()?;
        self.updater.validate()?;
        self.device_params().validate()
    }

    /// Device parameters with the mode taken from the experiment mode.
    pub fn device_params(&self) -> DeviceModelParams {
        let mut params = self.device.clone();
        if let Some(mode) = self.mode.device_mode() {
            params.mode = mode;
        }
        params
    }

    pub fn beta(&self) -> f64 {
        self.beta
            .unwrap_or_else(|| default_beta(&self.device_params(), self.updater.n))
    }

    pub fn trial_duration(&self) -> f64 {
        self.steps as f64 * self.net.dt
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse {
            path: PathBuf::from("<string>"),
            source: e,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let cfg: Self = load_toml(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    /// Short content hash of the configuration, ignoring the seed and the
    /// output directory.
    pub fn hash(&self) -> String {
        let mut normalized = self.clone();
        normalized.seed = 0;
        normalized.out_dir = None;
        let digest = Sha256::digest(normalized.to_toml().as_bytes());
        hex::encode(&digest[..8])
    }
}

pub(crate) fn load_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Derive an independent sub-seed for the stream named `tag`.
pub fn sub_seed(seed: u64, tag: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ tag.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

//! The training loop: one epoch presents the fixed one-second pattern once,
//! estimates e-prop gradients, and transfers them to the weight store.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::{sub_seed, ExperimentConfig, Mode};
use crate::crossbar::{ApplyStats, Crossbar};
use crate::eprop::{run_eprop_trial, Feedback, Gradients};
use crate::error::{Error, Result};
use crate::snn::{poisson_input, Network, SpikeTrain, TrialOutput, Weights};
use crate::task::make_target;
use crate::updaters::Updater;

/// Layer names in the order used by every per-layer array.
pub const LAYERS: [&str; 3] = ["in", "rec", "out"];

const SEED_INPUT: u64 = 0;
const SEED_INIT: u64 = 1;
const SEED_FEEDBACK: u64 = 2;
const SEED_XBAR: u64 = 3;
const SEED_UPDATER: u64 = 6;

/// Per-epoch training record. Pulse and refresh counts are cumulative since
/// the start of training; `programmed` counts the devices touched in this
/// epoch alone.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mse: f64,
    pub firing_rate_hz: f64,
    pub pulses: [u64; 3],
    pub refreshes: [u64; 3],
    pub programmed: [u64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialMetrics {
    pub records: Vec<EpochRecord>,
    /// Devices per layer (zero in fp32 mode).
    pub devices: [u64; 3],
    /// Pulses spent writing the initial weights, not part of `records`.
    pub init_pulses: u64,
    pub failed: bool,
    pub eval_window: usize,
}

impl TrialMetrics {
    /// Mean MSE over the final evaluation window, or infinity for a failed run.
    pub fn score(&self) -> f64 {
        if self.failed || self.records.is_empty() {
            return f64::INFINITY;
        }
        let w = self.eval_window.min(self.records.len());
        let tail = &self.records[self.records.len() - w..];
        tail.iter().map(|r| r.mse).sum::<f64>() / w as f64
    }

    pub fn final_mse(&self) -> Option<f64> {
        self.records.last().map(|r| r.mse)
    }

    pub fn total_pulses(&self) -> u64 {
        self.records.last().map_or(0, |r| r.pulses.iter().sum())
    }

    pub fn mean_pulses_per_epoch(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.total_pulses() as f64 / self.records.len() as f64
    }

    /// Mean over epochs of the fraction of a layer's devices programmed in
    /// that epoch.
    pub fn mean_programmed_fraction(&self) -> [f64; 3] {
        let mut out = [0.0; 3];
        if self.records.is_empty() {
            return out;
        }
        for (l, o) in out.iter_mut().enumerate() {
            if self.devices[l] == 0 {
                continue;
            }
            let sum: u64 = self.records.iter().map(|r| r.programmed[l]).sum();
            *o = sum as f64 / (self.records.len() as f64 * self.devices[l] as f64);
        }
        out
    }

    /// Mean firing rate over the final evaluation window.
    pub fn final_firing_rate(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        let w = self.eval_window.min(self.records.len());
        let tail = &self.records[self.records.len() - w..];
        tail.iter().map(|r| r.firing_rate_hz).sum::<f64>() / w as f64
    }
}

/// Counts of `values` in `bins` equal bins over `[lo, hi]`; values outside
/// the range land in the edge bins.
pub fn histogram(values: impl IntoIterator<Item = f64>, bins: usize, lo: f64, hi: f64) -> Vec<u64> {
    let mut counts = vec![0u64; bins];
    if bins == 0 || !(hi > lo) {
        return counts;
    }
    let width = (hi - lo) / bins as f64;
    for v in values {
        let b = ((v - lo) / width).floor();
        let b = if b.is_nan() { 0 } else { b.clamp(0.0, (bins - 1) as f64) as usize };
        counts[b] += 1;
    }
    counts
}

fn init_weights(cfg: &ExperimentConfig) -> Result<Weights> {
    let p = &cfg.net;
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(cfg.seed, SEED_INIT));
    let mut w = Weights::zeros(p);
    let fill = |m: &mut Array2<f64>, scale: f64, fan_in: usize, rng: &mut ChaCha8Rng| -> Result<()> {
        if scale == 0.0 {
            return Ok(());
        }
        let dist = Normal::new(0.0, scale / (fan_in as f64).sqrt())
            .map_err(|e| Error::config(format!("init distribution: {e}")))?;
        m.mapv_inplace(|_| dist.sample(rng).clamp(-1.0, 1.0));
        Ok(())
    };
    fill(&mut w.w_in, cfg.init.w_in_scale, p.n_in, &mut rng)?;
    fill(&mut w.w_rec, cfg.init.w_rec_scale, p.n_rec, &mut rng)?;
    fill(&mut w.w_out, cfg.init.w_out_scale, p.n_rec, &mut rng)?;
    for j in 0..p.n_rec {
        w.w_rec[[j, j]] = 0.0;
    }
    Ok(w)
}

enum Store {
    Float(Weights),
    Crossbar {
        xbars: Vec<Crossbar>,
        updater: Updater,
        beta: f64,
    },
}

/// A training run in progress. [`Trainer::run`] drives it to completion;
/// [`Trainer::epoch`] advances it one epoch at a time.
pub struct Trainer {
    cfg: ExperimentConfig,
    input: SpikeTrain,
    target: Array2<f64>,
    random_feedback: Option<Array2<f64>>,
    store: Store,
    metrics: TrialMetrics,
    last_output: Option<TrialOutput>,
    last_gradients: Option<Gradients>,
}

impl Trainer {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let p = &cfg.net;
        let input = poisson_input(
            cfg.input_rate_hz,
            cfg.steps,
            p.n_in,
            p.dt,
            sub_seed(cfg.seed, SEED_INPUT),
        )?;
        let target = make_target(cfg.pattern_seed, cfg.steps, p.n_out, p.dt);
        let random_feedback = match cfg.feedback {
            Feedback::Symmetric => None,
            Feedback::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(cfg.seed, SEED_FEEDBACK));
                let dist = Normal::new(0.0, 1.0 / (p.n_rec as f64).sqrt())
                    .map_err(|e| Error::config(format!("feedback distribution: {e}")))?;
                Some(Array2::from_shape_simple_fn((p.n_out, p.n_rec), || dist.sample(&mut rng)))
            }
        };
        let w0 = init_weights(cfg)?;
        let mut init_pulses = 0;
        let mut devices = [0u64; 3];
        let store = match cfg.mode {
            Mode::Fp32 => Store::Float(w0),
            Mode::Realistic | Mode::Perf => {
                let params = cfg.device_params();
                let beta = cfg.beta();
                let n = cfg.updater.n;
                let mut xbars = Vec::with_capacity(3);
                for (l, w) in [&w0.w_in, &w0.w_rec, &w0.w_out].into_iter().enumerate() {
                    let (rows, cols) = w.dim();
                    let seed = sub_seed(cfg.seed, SEED_XBAR + l as u64);
                    let mut xbar = Crossbar::new(rows, cols, n, params.clone(), seed)?;
                    init_pulses += xbar.program_weights(w, beta)?.pulses;
                    devices[l] = xbar.shape().devices() as u64;
                    xbars.push(xbar);
                }
                let dims: Vec<(usize, usize)> = [&w0.w_in, &w0.w_rec, &w0.w_out]
                    .iter()
                    .map(|w| w.dim())
                    .collect();
                let rng = ChaCha8Rng::seed_from_u64(sub_seed(cfg.seed, SEED_UPDATER));
                let updater = Updater::new(cfg.updater.clone(), &dims, rng)?;
                Store::Crossbar { xbars, updater, beta }
            }
        };
        Ok(Self {
            cfg: cfg.clone(),
            input,
            target,
            random_feedback,
            store,
            metrics: TrialMetrics {
                records: Vec::with_capacity(cfg.epochs),
                devices,
                init_pulses,
                failed: false,
                eval_window: cfg.eval_window,
            },
            last_output: None,
            last_gradients: None,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn metrics(&self) -> &TrialMetrics {
        &self.metrics
    }

    pub fn into_metrics(self) -> TrialMetrics {
        self.metrics
    }

    pub fn input(&self) -> &SpikeTrain {
        &self.input
    }

    pub fn target(&self) -> &Array2<f64> {
        &self.target
    }

    /// Network output and raster of the most recent epoch.
    pub fn last_output(&self) -> Option<&TrialOutput> {
        self.last_output.as_ref()
    }

    pub fn last_gradients(&self) -> Option<&Gradients> {
        self.last_gradients.as_ref()
    }

    pub fn crossbars(&self) -> &[Crossbar] {
        match &self.store {
            Store::Float(_) => &[],
            Store::Crossbar { xbars, .. } => xbars,
        }
    }

    pub fn is_done(&self) -> bool {
        self.metrics.failed || self.metrics.records.len() >= self.cfg.epochs
    }

    /// Current effective weights. On a crossbar this is a READ and therefore
    /// noisy in realistic mode.
    pub fn read_weights(&mut self) -> Result<Weights> {
        match &mut self.store {
            Store::Float(w) => Ok(w.clone()),
            Store::Crossbar { xbars, beta, .. } => Ok(Weights {
                w_in: xbars[0].read_effective(*beta)?,
                w_rec: xbars[1].read_effective(*beta)?,
                w_out: xbars[2].read_effective(*beta)?,
            }),
        }
    }

    /// Run one epoch. Returns `Ok(None)` once training has finished or
    /// failed; divergence marks the run failed instead of returning an error.
    pub fn epoch(&mut self) -> Result<Option<&EpochRecord>> {
        if self.is_done() {
            return Ok(None);
        }
        let weights = self.read_weights()?;
        let net = Network::new(&weights, &self.cfg.net)?;
        let feedback = self
            .random_feedback
            .clone()
            .unwrap_or_else(|| weights.w_out.clone());
        let trial = run_eprop_trial(&net, &self.input, &self.target, &feedback)?;
        if !trial.loss.is_finite() || !trial.grads.is_finite() {
            log::warn!(
                "run diverged at epoch {} (loss {})",
                self.metrics.records.len(),
                trial.loss
            );
            self.metrics.failed = true;
            return Ok(None);
        }

        let mut stats = [ApplyStats::default(); 3];
        match &mut self.store {
            Store::Float(w) => {
                let eta = self.cfg.updater.eta;
                for (m, g) in [&mut w.w_in, &mut w.w_rec, &mut w.w_out]
                    .into_iter()
                    .zip(trial.grads.layers())
                {
                    m.zip_mut_with(g, |w, &g| *w = (*w - eta * g).clamp(-1.0, 1.0));
                }
            }
            Store::Crossbar { xbars, updater, beta } => {
                for (l, (xbar, grad)) in xbars.iter_mut().zip(trial.grads.layers()).enumerate() {
                    let plan = updater.plan(l, grad, xbar, *beta)?;
                    stats[l] = xbar.apply_plan(&plan)?;
                }
                let duration = self.cfg.trial_duration();
                for xbar in xbars.iter_mut() {
                    xbar.advance_clock(duration)?;
                }
            }
        }

        let prev = self.metrics.records.last();
        let mut pulses = prev.map_or([0; 3], |r| r.pulses);
        let mut refreshes = prev.map_or([0; 3], |r| r.refreshes);
        let mut programmed = [0; 3];
        for l in 0..3 {
            pulses[l] += stats[l].pulses;
            refreshes[l] += stats[l].refreshed;
            programmed[l] = stats[l].programmed_devices;
        }
        let record = EpochRecord {
            epoch: self.metrics.records.len(),
            mse: trial.loss,
            firing_rate_hz: trial.output.firing_rate_hz(self.cfg.net.dt),
            pulses,
            refreshes,
            programmed,
        };
        log::debug!(
            "epoch {} mse {:.5} rate {:.2} Hz pulses {:?}",
            record.epoch,
            record.mse,
            record.firing_rate_hz,
            record.pulses
        );
        self.metrics.records.push(record);
        self.last_output = Some(trial.output);
        self.last_gradients = Some(trial.grads);
        Ok(self.metrics.records.last())
    }

    /// Train until `epochs` are done or the run diverges.
    pub fn run(&mut self) -> Result<&TrialMetrics> {
        while self.epoch()?.is_some() {}
        Ok(&self.metrics)
    }
}

/// Train a configuration from scratch and return its metrics.
pub fn train(cfg: &ExperimentConfig) -> Result<TrialMetrics> {
    let mut trainer = Trainer::new(cfg)?;
    trainer.run()?;
    Ok(trainer.into_metrics())
}

//! Memristor-aware weight-update schemes.
//!
//! Each planner turns a per-epoch gradient matrix into a [`PulsePlan`]: a
//! non-negative SET-pulse count per device plus the synapses to refresh
//! first. Pulses on `G+` raise the weight, pulses on `G-` lower it; no scheme
//! ever reads the devices except through the refresh criterion.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::crossbar::{Crossbar, Polarity, PulsePlan};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Sign gradient descent with stop-learning.
    Sign,
    /// Single pulses executed with probability `|grad| / p_scale`.
    Stochastic,
    /// Linear pulse-count estimate spread over `n` devices per side.
    Multimem,
    /// High-precision accumulation, transferred in whole pulse quanta.
    Mixed,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Sign, Scheme::Stochastic, Scheme::Multimem, Scheme::Mixed];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Sign => "sign",
            Scheme::Stochastic => "stochastic",
            Scheme::Multimem => "multimem",
            Scheme::Mixed => "mixed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UpdaterConfig {
    pub scheme: Scheme,
    /// Sign-scheme step in weight units. Rounded to whole pulses, at least
    /// one; unset means exactly one pulse.
    pub delta: Option<f64>,
    /// Stop-learning threshold of the sign scheme.
    pub theta: f64,
    /// Probability scaling factor of the stochastic scheme.
    pub p_scale: f64,
    /// Devices per polarity per synapse.
    pub n: usize,
    /// Learning rate (weight units per unit gradient).
    pub eta: f64,
    /// Refresh when a device exceeds this conductance (µS)...
    pub g_hi: f64,
    /// ...and the pair difference is below this (µS).
    pub d_lo: f64,
    pub update_ready: bool,
}

impl Default for UpdaterConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::Mixed,
            delta: None,
            theta: 1e-3,
            p_scale: 1.0,
            n: 1,
            eta: 0.1,
            g_hi: 9.0,
            d_lo: 4.5,
            update_ready: false,
        }
    }
}

impl UpdaterConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("theta", self.theta),
            ("p_scale", self.p_scale),
            ("eta", self.eta),
            ("g_hi", self.g_hi),
            ("d_lo", self.d_lo),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::config(format!("updater.{name} must be positive, got {v}")));
            }
        }
        if let Some(d) = self.delta {
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::config(format!("updater.delta must be positive, got {d}")));
            }
        }
        if self.n == 0 {
            return Err(Error::config("updater.n must be at least 1"));
        }
        Ok(())
    }
}

/// Largest pulse count worth sending to one side of a synapse: enough to
/// drive all of its devices from HRS to saturation.
fn pulse_cap(xbar: &Crossbar) -> f64 {
    let p = xbar.params();
    let per_device = ((p.g_max - p.g_min) / p.pulse_quantum()).ceil();
    per_device * xbar.shape().n as f64
}

fn check_grad(grad: &Array2<f64>, xbar: &Crossbar) -> Result<()> {
    let s = xbar.shape();
    if grad.dim() != (s.rows, s.cols) {
        return Err(Error::config(format!(
            "gradient shape {:?} does not match crossbar {}x{}",
            grad.dim(),
            s.rows,
            s.cols
        )));
    }
    Ok(())
}

fn refreshable_plan(xbar: &Crossbar, cfg: &UpdaterConfig) -> PulsePlan {
    let mut plan = PulsePlan::empty(xbar.shape());
    plan.pre_reset = xbar.needs_refresh(cfg.g_hi, cfg.d_lo);
    plan
}

/// `dW = -delta * sign(grad)` where `|grad| > theta`, as single pulses.
pub fn plan_sign(
    grad: &Array2<f64>,
    cfg: &UpdaterConfig,
    xbar: &Crossbar,
    beta: f64,
) -> Result<PulsePlan> {
    check_grad(grad, xbar)?;
    let quantum = beta * xbar.params().pulse_quantum();
    let m = match cfg.delta {
        Some(delta) => ((delta / quantum).round().max(1.0)).min(pulse_cap(xbar)) as u32,
        None => 1,
    };
    let mut plan = refreshable_plan(xbar, cfg);
    for ((r, c), &g) in grad.indexed_iter() {
        if g.abs() > cfg.theta {
            xbar.queue_pulses(&mut plan, r, c, Polarity::for_change(-g), m);
        }
    }
    Ok(plan)
}

/// One pulse per synapse with probability `min(1, |grad| / p_scale)`.
pub fn plan_stochastic<R: Rng + ?Sized>(
    grad: &Array2<f64>,
    cfg: &UpdaterConfig,
    xbar: &Crossbar,
    rng: &mut R,
) -> Result<PulsePlan> {
    check_grad(grad, xbar)?;
    let mut plan = refreshable_plan(xbar, cfg);
    for ((r, c), &g) in grad.indexed_iter() {
        let p = (g.abs() / cfg.p_scale).min(1.0);
        // Draw for every synapse so the stream does not depend on the gradient pattern.
        let u: f64 = rng.random();
        if p > 0.0 && u < p {
            xbar.queue_pulses(&mut plan, r, c, Polarity::for_change(-g), 1);
        }
    }
    Ok(plan)
}

/// `round(|eta * grad| / beta / g_unit)` pulses spread over the circular queue.
pub fn plan_multimem(
    grad: &Array2<f64>,
    cfg: &UpdaterConfig,
    xbar: &Crossbar,
    beta: f64,
) -> Result<PulsePlan> {
    check_grad(grad, xbar)?;
    if cfg.n != xbar.shape().n {
        return Err(Error::config(format!(
            "updater expects n={} devices per side, crossbar has {}",
            cfg.n,
            xbar.shape().n
        )));
    }
    let quantum = xbar.params().pulse_quantum();
    let cap = pulse_cap(xbar);
    let mut plan = refreshable_plan(xbar, cfg);
    for ((r, c), &g) in grad.indexed_iter() {
        let change = -cfg.eta * g;
        let m = ((change.abs() / beta) / quantum).round().min(cap);
        if m >= 1.0 {
            xbar.queue_pulses(&mut plan, r, c, Polarity::for_change(change), m as u32);
        }
    }
    Ok(plan)
}

/// High-precision residual of the ideal weight change per synapse.
#[derive(Debug, Clone, PartialEq)]
pub struct Accumulator {
    pub residual: Array2<f64>,
}

impl Accumulator {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            residual: Array2::zeros((rows, cols)),
        }
    }
}

/// Accumulate `-eta * grad` and emit every whole multiple of the one-pulse
/// weight quantum `beta * g_unit`, keeping the remainder.
pub fn plan_mixed(
    grad: &Array2<f64>,
    cfg: &UpdaterConfig,
    acc: &mut Accumulator,
    xbar: &Crossbar,
    beta: f64,
) -> Result<PulsePlan> {
    check_grad(grad, xbar)?;
    if acc.residual.dim() != grad.dim() {
        return Err(Error::config("accumulator shape does not match gradient"));
    }
    let quantum = beta * xbar.params().pulse_quantum();
    let cap = pulse_cap(xbar);
    let mut plan = refreshable_plan(xbar, cfg);
    for (((r, c), &g), res) in grad.indexed_iter().zip(acc.residual.iter_mut()) {
        *res += -cfg.eta * g;
        let m = (*res / quantum).trunc().clamp(-cap, cap);
        if m != 0.0 {
            *res -= m * quantum;
            xbar.queue_pulses(&mut plan, r, c, Polarity::for_change(m), m.abs() as u32);
        }
    }
    Ok(plan)
}

/// Update-ready criterion: when a planned update would push a device past
/// `g_max`, reset the whole synapse and program the post-update difference
/// from HRS instead.
pub fn update_ready_adjust(mut plan: PulsePlan, xbar: &Crossbar) -> Result<PulsePlan> {
    if plan.shape() != xbar.shape() {
        return Err(Error::config("plan shape does not match crossbar"));
    }
    let shape = xbar.shape();
    let params = xbar.params();
    let quantum = params.pulse_quantum();
    for r in 0..shape.rows {
        for c in 0..shape.cols {
            let planned: Vec<(Polarity, u32)> = Polarity::BOTH
                .iter()
                .map(|&p| (p, plan.synapse_pulses(p, r, c)))
                .collect();
            if planned.iter().all(|&(_, m)| m == 0) {
                continue;
            }
            let overflows = Polarity::BOTH.iter().any(|&p| {
                (0..shape.n).any(|k| {
                    let m = plan.pulses(p, k, r, c);
                    m > 0 && xbar.device(p, k, r, c).g + f64::from(m) * quantum > params.g_max
                })
            });
            if !overflows {
                continue;
            }
            let (plus, minus) = xbar.synapse_sums(r, c);
            let planned_change = (f64::from(planned[0].1) - f64::from(planned[1].1)) * quantum;
            let target = plus - minus + planned_change;
            plan.clear_synapse(r, c);
            plan.pre_reset.set(r, c, false);
            plan.pre_clear.set(r, c, true);
            let m = (target.abs() / quantum).round() as u32;
            if m > 0 {
                xbar.queue_pulses(&mut plan, r, c, Polarity::for_change(target), m);
            }
        }
    }
    Ok(plan)
}

/// Stateful per-run planner: owns the mixed-precision accumulators and the
/// stochastic scheme's random stream.
#[derive(Debug, Clone)]
pub struct Updater {
    cfg: UpdaterConfig,
    accumulators: Vec<Accumulator>,
    rng: ChaCha8Rng,
}

impl Updater {
    /// `layers` lists the `(rows, cols)` of every crossbar this updater serves.
    pub fn new(cfg: UpdaterConfig, layers: &[(usize, usize)], rng: ChaCha8Rng) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            accumulators: layers.iter().map(|&(r, c)| Accumulator::zeros(r, c)).collect(),
            cfg,
            rng,
        })
    }

    pub fn config(&self) -> &UpdaterConfig {
        &self.cfg
    }

    pub fn accumulator(&self, layer: usize) -> &Accumulator {
        &self.accumulators[layer]
    }

    pub fn plan(
        &mut self,
        layer: usize,
        grad: &Array2<f64>,
        xbar: &Crossbar,
        beta: f64,
    ) -> Result<PulsePlan> {
        let plan = match self.cfg.scheme {
            Scheme::Sign => plan_sign(grad, &self.cfg, xbar, beta)?,
            Scheme::Stochastic => plan_stochastic(grad, &self.cfg, xbar, &mut self.rng)?,
            Scheme::Multimem => plan_multimem(grad, &self.cfg, xbar, beta)?,
            Scheme::Mixed => {
                let acc = self
                    .accumulators
                    .get_mut(layer)
                    .ok_or_else(|| Error::config(format!("no accumulator for layer {layer}")))?;
                plan_mixed(grad, &self.cfg, acc, xbar, beta)?
            }
        };
        if self.cfg.update_ready {
            update_ready_adjust(plan, xbar)
        } else {
            Ok(plan)
        }
    }
}

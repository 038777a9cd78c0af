//! Discrete-time leaky integrate-and-fire recurrent network with a leaky
//! linear readout, and frozen Poisson input generation.
//!
//! One step maps `(v, z, y)` and the input spikes `x` to
//!
//! ```text
//! v' = alpha * v + W_rec z + W_in x - z * v_th
//! z' = H((v' - v_th) / v_th)
//! y' = kappa * y + W_out z'
//! ```
//!
//! with no self-recurrence and no refractory period.

use std::io::Write;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetParams {
    pub n_in: usize,
    pub n_rec: usize,
    pub n_out: usize,
    /// Simulation time step (s).
    pub dt: f64,
    /// Membrane time constant (s).
    pub tau_m: f64,
    /// Readout time constant (s).
    pub tau_out: f64,
    pub v_th: f64,
    /// Pseudo-derivative amplitude.
    pub gamma: f64,
}

impl Default for NetParams {
    fn default() -> Self {
        Self {
            n_in: 100,
            n_rec: 100,
            n_out: 1,
            dt: 1e-3,
            tau_m: 20e-3,
            tau_out: 20e-3,
            v_th: 0.6,
            gamma: 0.3,
        }
    }
}

impl NetParams {
    pub fn alpha(&self) -> f64 {
        (-self.dt / self.tau_m).exp()
    }

    pub fn kappa(&self) -> f64 {
        (-self.dt / self.tau_out).exp()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_in == 0 || self.n_rec == 0 || self.n_out == 0 {
            return Err(Error::config("network sizes must be at least 1"));
        }
        for (name, v) in [("dt", self.dt), ("tau_m", self.tau_m), ("tau_out", self.tau_out)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::config(format!("net.{name} must be positive, got {v}")));
            }
        }
        if !(self.v_th > 0.0) || !self.v_th.is_finite() {
            return Err(Error::config("net.v_th must be positive"));
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(Error::config("net.gamma must be non-negative"));
        }
        Ok(())
    }
}

/// Binary spike tensor of shape `(steps, channels)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpikeTrain {
    steps: usize,
    channels: usize,
    bits: Vec<bool>,
}

impl SpikeTrain {
    pub fn zeros(steps: usize, channels: usize) -> Self {
        Self {
            steps,
            channels,
            bits: vec![false; steps * channels],
        }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn row(&self, t: usize) -> &[bool] {
        &self.bits[t * self.channels..(t + 1) * self.channels]
    }

    pub fn row_mut(&mut self, t: usize) -> &mut [bool] {
        &mut self.bits[t * self.channels..(t + 1) * self.channels]
    }

    pub fn get(&self, t: usize, ch: usize) -> bool {
        self.bits[t * self.channels + ch]
    }

    pub fn set(&mut self, t: usize, ch: usize, on: bool) {
        self.bits[t * self.channels + ch] = on;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Mean rate per channel in Hz.
    pub fn mean_rate(&self, dt: f64) -> f64 {
        if self.steps == 0 || self.channels == 0 {
            return 0.0;
        }
        self.count() as f64 / (self.steps as f64 * self.channels as f64 * dt)
    }

    /// Event list `t,neuron`, one line per spike.
    pub fn write_events_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,neuron")?;
        for t in 0..self.steps {
            for (ch, _) in self.row(t).iter().enumerate().filter(|(_, &b)| b) {
                writeln!(out, "{t},{ch}")?;
            }
        }
        Ok(())
    }
}

/// Independent Bernoulli(`rate * dt`) spikes per bin and channel.
pub fn poisson_input(
    rate_hz: f64,
    steps: usize,
    channels: usize,
    dt: f64,
    seed: u64,
) -> Result<SpikeTrain> {
    let p = rate_hz * dt;
    if !p.is_finite() || !(0.0..=1.0).contains(&p) {
        return Err(Error::config(format!(
            "input spike probability rate*dt = {p} must lie in [0, 1]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = SpikeTrain::zeros(steps, channels);
    if p > 0.0 {
        for b in &mut train.bits {
            *b = rng.random_bool(p);
        }
    }
    Ok(train)
}

/// Network weights in their natural `(post, pre)` orientation.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    /// `n_rec x n_in`
    pub w_in: Array2<f64>,
    /// `n_rec x n_rec`; the diagonal is ignored.
    pub w_rec: Array2<f64>,
    /// `n_out x n_rec`
    pub w_out: Array2<f64>,
}

impl Weights {
    pub fn zeros(params: &NetParams) -> Self {
        Self {
            w_in: Array2::zeros((params.n_rec, params.n_in)),
            w_rec: Array2::zeros((params.n_rec, params.n_rec)),
            w_out: Array2::zeros((params.n_out, params.n_rec)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetState {
    pub v: Vec<f64>,
    pub z: Vec<bool>,
    pub y: Vec<f64>,
}

impl NetState {
    pub fn zeros(params: &NetParams) -> Self {
        Self {
            v: vec![0.0; params.n_rec],
            z: vec![false; params.n_rec],
            y: vec![0.0; params.n_out],
        }
    }
}

/// Readout trace and spike raster of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutput {
    /// `steps x n_out`
    pub y: Array2<f64>,
    /// `steps x n_rec`
    pub raster: SpikeTrain,
}

impl TrialOutput {
    pub fn firing_rate_hz(&self, dt: f64) -> f64 {
        self.raster.mean_rate(dt)
    }
}

/// A network with validated weights, ready to simulate.
///
/// Weights are stored transposed (`pre x post`) so that the sparse spike
/// vectors select contiguous rows.
#[derive(Debug, Clone)]
pub struct Network {
    params: NetParams,
    alpha: f64,
    kappa: f64,
    w_in_t: Array2<f64>,
    w_rec_t: Array2<f64>,
    w_out_t: Array2<f64>,
}

impl Network {
    pub fn new(weights: &Weights, params: &NetParams) -> Result<Self> {
        params.validate()?;
        let expect = [
            ("w_in", weights.w_in.dim(), (params.n_rec, params.n_in)),
            ("w_rec", weights.w_rec.dim(), (params.n_rec, params.n_rec)),
            ("w_out", weights.w_out.dim(), (params.n_out, params.n_rec)),
        ];
        for (name, got, want) in expect {
            if got != want {
                return Err(Error::config(format!("{name} has shape {got:?}, expected {want:?}")));
            }
        }
        for (name, w) in [("w_in", &weights.w_in), ("w_rec", &weights.w_rec), ("w_out", &weights.w_out)] {
            if let Some(((r, c), v)) = w.indexed_iter().find(|(_, v)| !v.is_finite()) {
                return Err(Error::Numerical(format!("{name}[{r}, {c}] = {v}")));
            }
        }
        let mut w_rec_t = weights.w_rec.t().to_owned();
        for j in 0..params.n_rec {
            w_rec_t[[j, j]] = 0.0;
        }
        Ok(Self {
            params: params.clone(),
            alpha: params.alpha(),
            kappa: params.kappa(),
            w_in_t: weights.w_in.t().as_standard_layout().to_owned(),
            w_rec_t: w_rec_t.as_standard_layout().to_owned(),
            w_out_t: weights.w_out.t().as_standard_layout().to_owned(),
        })
    }

    pub fn params(&self) -> &NetParams {
        &self.params
    }

    /// Advance the state by one time step with input spikes `x`.
    pub fn step(&self, state: &mut NetState, x: &[bool]) {
        debug_assert_eq!(x.len(), self.params.n_in);
        let v_th = self.params.v_th;
        for (v, &z) in state.v.iter_mut().zip(&state.z) {
            *v = self.alpha * *v - if z { v_th } else { 0.0 };
        }
        for (i, _) in state.z.iter().enumerate().filter(|(_, &z)| z) {
            for (v, w) in state.v.iter_mut().zip(self.w_rec_t.row(i)) {
                *v += w;
            }
        }
        for (i, _) in x.iter().enumerate().filter(|(_, &s)| s) {
            for (v, w) in state.v.iter_mut().zip(self.w_in_t.row(i)) {
                *v += w;
            }
        }
        for (z, &v) in state.z.iter_mut().zip(&state.v) {
            *z = (v - v_th) / v_th > 0.0;
        }
        for y in state.y.iter_mut() {
            *y *= self.kappa;
        }
        for (j, _) in state.z.iter().enumerate().filter(|(_, &z)| z) {
            for (y, w) in state.y.iter_mut().zip(self.w_out_t.row(j)) {
                *y += w;
            }
        }
    }

    /// Run a full trial from the zero state.
    pub fn run_trial(&self, x: &SpikeTrain) -> Result<TrialOutput> {
        self.run_trial_with(x, |_, _, _| {})
    }

    /// Run a full trial, calling `observe(t, previous_spikes, state)` after
    /// every step.
    pub fn run_trial_with<F>(&self, x: &SpikeTrain, mut observe: F) -> Result<TrialOutput>
    where
        F: FnMut(usize, &[bool], &NetState),
    {
        if x.channels() != self.params.n_in {
            return Err(Error::config(format!(
                "input has {} channels, network expects {}",
                x.channels(),
                self.params.n_in
            )));
        }
        let steps = x.steps();
        let mut state = NetState::zeros(&self.params);
        let mut z_prev = state.z.clone();
        let mut y = Array2::zeros((steps, self.params.n_out));
        let mut raster = SpikeTrain::zeros(steps, self.params.n_rec);
        for t in 0..steps {
            z_prev.copy_from_slice(&state.z);
            self.step(&mut state, x.row(t));
            if state.v.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!("membrane potential at step {t}")));
            }
            observe(t, &z_prev, &state);
            for (dst, &src) in y.row_mut(t).iter_mut().zip(&state.y) {
                *dst = src;
            }
            raster.row_mut(t).copy_from_slice(&state.z);
        }
        Ok(TrialOutput { y, raster })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_params() -> NetParams {
        NetParams {
            n_in: 4,
            n_rec: 3,
            n_out: 2,
            ..NetParams::default()
        }
    }

    #[test]
    fn zero_network_only_decays_readout() {
        let p = small_params();
        let net = Network::new(&Weights::zeros(&p), &p).unwrap();
        let mut s = NetState::zeros(&p);
        s.y = vec![1.0, -2.0];
        net.step(&mut s, &[false; 4]);
        assert_eq!(s.v, vec![0.0; 3]);
        assert_eq!(s.z, vec![false; 3]);
        assert_eq!(s.y, vec![p.kappa(), -2.0 * p.kappa()]);
    }

    #[test]
    fn membrane_decays_without_drive() {
        let mut p = small_params();
        p.tau_m = -p.dt / 0.9f64.ln();
        assert!((p.alpha() - 0.9).abs() < 1e-15);
        let net = Network::new(&Weights::zeros(&p), &p).unwrap();
        let mut s = NetState::zeros(&p);
        s.v = vec![0.5 * p.v_th; 3];
        net.step(&mut s, &[false; 4]);
        for v in &s.v {
            assert!((v - 0.45 * p.v_th).abs() < 1e-12);
        }
        assert!(s.z.iter().all(|z| !z));
    }

    #[test]
    fn spike_triggers_single_soft_reset() {
        let p = small_params();
        let mut w = Weights::zeros(&p);
        w.w_in[[0, 0]] = 1.2 * p.v_th;
        let net = Network::new(&w, &p).unwrap();
        let mut s = NetState::zeros(&p);
        net.step(&mut s, &[true, false, false, false]);
        assert!(s.z[0]);
        assert!((s.v[0] - 1.2 * p.v_th).abs() < 1e-12);
        net.step(&mut s, &[false; 4]);
        let want = p.alpha() * 1.2 * p.v_th - p.v_th;
        assert!((s.v[0] - want).abs() < 1e-12);
        assert!(!s.z[0]);
        net.step(&mut s, &[false; 4]);
        assert!((s.v[0] - p.alpha() * want).abs() < 1e-12);
    }

    #[test]
    fn heaviside_is_strict() {
        let p = small_params();
        let mut w = Weights::zeros(&p);
        w.w_in[[1, 0]] = p.v_th;
        let net = Network::new(&w, &p).unwrap();
        let mut s = NetState::zeros(&p);
        net.step(&mut s, &[true, false, false, false]);
        assert!(!s.z[1]);
    }

    #[test]
    fn non_finite_weights_are_rejected() {
        let p = small_params();
        let mut w = Weights::zeros(&p);
        w.w_rec[[1, 2]] = f64::NAN;
        assert!(matches!(Network::new(&w, &p), Err(Error::Numerical(_))));
        let mut w = Weights::zeros(&p);
        w.w_out = Array2::zeros((1, 3));
        assert!(matches!(Network::new(&w, &p), Err(Error::Config(_))));
    }

    #[test]
    fn empty_trial_gives_empty_traces() {
        let p = small_params();
        let net = Network::new(&Weights::zeros(&p), &p).unwrap();
        let out = net.run_trial(&SpikeTrain::zeros(0, 4)).unwrap();
        assert_eq!(out.y.dim(), (0, 2));
        assert_eq!(out.raster.steps(), 0);
    }

    #[test]
    fn zero_weights_stay_silent() {
        let p = NetParams::default();
        let x = poisson_input(50.0, 200, p.n_in, p.dt, 3).unwrap();
        let net = Network::new(&Weights::zeros(&p), &p).unwrap();
        let out = net.run_trial(&x).unwrap();
        assert!(out.y.iter().all(|&y| y == 0.0));
        assert_eq!(out.raster.count(), 0);
    }

    fn random_weights(p: &NetParams, seed: u64, scale: f64) -> Weights {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = Weights::zeros(p);
        for a in [&mut w.w_in, &mut w.w_rec, &mut w.w_out] {
            a.mapv_inplace(|_| scale * (rng.random::<f64>() * 2.0 - 1.0));
        }
        w
    }

    #[test]
    fn trials_are_deterministic() {
        let p = NetParams::default();
        let x = poisson_input(50.0, 300, p.n_in, p.dt, 11).unwrap();
        let w = random_weights(&p, 5, 0.4);
        let a = Network::new(&w, &p).unwrap().run_trial(&x).unwrap();
        let b = Network::new(&w, &p).unwrap().run_trial(&x).unwrap();
        assert_eq!(a, b);
        assert!(a.raster.count() > 0);
    }

    #[test]
    fn recurrent_diagonal_is_ignored() {
        let p = NetParams {
            n_rec: 20,
            ..NetParams::default()
        };
        let x = poisson_input(50.0, 300, p.n_in, p.dt, 2).unwrap();
        let mut w = random_weights(&p, 9, 0.4);
        let base = Network::new(&w, &p).unwrap().run_trial(&x).unwrap();
        for j in 0..p.n_rec {
            w.w_rec[[j, j]] = 5.0;
        }
        let other = Network::new(&w, &p).unwrap().run_trial(&x).unwrap();
        assert_eq!(base, other);
    }

    #[test]
    fn readout_is_linear_in_raster() {
        let p = NetParams::default();
        let x = poisson_input(50.0, 200, p.n_in, p.dt, 4).unwrap();
        let mut w = random_weights(&p, 1, 0.4);
        let net = Network::new(&w, &p).unwrap();
        let spikes = net.run_trial(&x).unwrap();
        let w_out_a = w.w_out.clone();
        let w_out_b = w.w_out.mapv(|v| 0.3 - v);
        let mut run = |w_out: Array2<f64>| {
            w.w_out = w_out;
            Network::new(&w, &p).unwrap().run_trial(&x).unwrap()
        };
        let ya = run(w_out_a.clone()).y;
        let yb = run(w_out_b.clone()).y;
        let ysum = run(&w_out_a + &w_out_b).y;
        for ((a, b), s) in ya.iter().zip(yb.iter()).zip(ysum.iter()) {
            assert!((a + b - s).abs() < 1e-9);
        }
        // Spikes are untouched by the readout.
        assert_eq!(run(w_out_b).raster, spikes.raster);
    }

    #[test]
    fn membrane_stays_bounded() {
        let p = NetParams::default();
        let x = poisson_input(50.0, 500, p.n_in, p.dt, 8).unwrap();
        let scale = 0.3;
        let w = random_weights(&p, 2, scale);
        let net = Network::new(&w, &p).unwrap();
        let max_drive = scale * (p.n_in + p.n_rec) as f64;
        let bound = max_drive / (1.0 - p.alpha()) + p.v_th;
        net.run_trial_with(&x, |_, _, s| {
            assert!(s.v.iter().all(|v| v.abs() <= bound));
        })
        .unwrap();
    }

    #[test]
    fn poisson_rates() {
        let p = NetParams::default();
        let zero = poisson_input(0.0, 100, 10, p.dt, 1).unwrap();
        assert_eq!(zero.count(), 0);
        let x = poisson_input(50.0, 1000, 100, 1e-3, 42).unwrap();
        let rate = x.mean_rate(1e-3);
        assert!((45.0..=55.0).contains(&rate), "rate {rate}");
        assert_eq!(x, poisson_input(50.0, 1000, 100, 1e-3, 42).unwrap());
        assert!(matches!(
            poisson_input(2000.0, 10, 10, 1e-3, 1),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn events_csv() {
        let mut s = SpikeTrain::zeros(3, 2);
        s.set(0, 1, true);
        s.set(2, 0, true);
        let mut buf = Vec::new();
        s.write_events_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,neuron\n0,1\n2,0\n");
    }
}

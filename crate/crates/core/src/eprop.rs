//! Online e-prop gradient estimation for the LIF network.
//!
//! Every synapse `(j, i)` keeps a presynaptic trace `zbar_i` (low-pass with
//! the membrane factor `alpha`) and a readout-filtered eligibility trace
//! `ebar_ji` (low-pass with `kappa`). With the triangular pseudo-derivative
//! `h_j = gamma * max(0, 1 - |(v_j - v_th) / v_th|)` and the learning signal
//! `L_j = sum_k B_kj (y_k - y*_k)`, the accumulated gradient is
//! `sum_t L_j^t * ebar_ji^t`. The readout gradient `sum_t eps_k^t * zbar_out_j^t`
//! is exact.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::snn::{NetParams, Network, SpikeTrain, TrialOutput};

/// Source of the matrix that broadcasts readout errors to recurrent neurons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Feedback {
    /// `B = W_out`, re-read every trial.
    #[default]
    Symmetric,
    /// A fixed random matrix drawn once per run.
    Random,
}

#[inline]
pub fn pseudo_derivative(v: f64, v_th: f64, gamma: f64) -> f64 {
    gamma * (1.0 - ((v - v_th) / v_th).abs()).max(0.0)
}

/// Eligibility machinery for one trial. All traces start at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceState {
    pub zbar_in: Vec<f64>,
    pub zbar_rec: Vec<f64>,
    /// `n_rec x n_in`
    pub ebar_in: Array2<f64>,
    /// `n_rec x n_rec`
    pub ebar_rec: Array2<f64>,
    pub zbar_out: Vec<f64>,
    alpha: f64,
    kappa: f64,
    v_th: f64,
    gamma: f64,
}

impl TraceState {
    pub fn new(params: &NetParams) -> Self {
        Self {
            zbar_in: vec![0.0; params.n_in],
            zbar_rec: vec![0.0; params.n_rec],
            ebar_in: Array2::zeros((params.n_rec, params.n_in)),
            ebar_rec: Array2::zeros((params.n_rec, params.n_rec)),
            zbar_out: vec![0.0; params.n_rec],
            alpha: params.alpha(),
            kappa: params.kappa(),
            v_th: params.v_th,
            gamma: params.gamma,
        }
    }

    /// Update the traces for one step.
    ///
    /// `z_prev` and `x` are the spikes that drove the new potentials `v`;
    /// `z` are the spikes emitted from `v`.
    pub fn step(&mut self, z_prev: &[bool], x: &[bool], v: &[f64], z: &[bool]) {
        let (alpha, kappa) = (self.alpha, self.kappa);
        for (bar, &s) in self.zbar_in.iter_mut().zip(x) {
            *bar = alpha * *bar + f64::from(u8::from(s));
        }
        for (bar, &s) in self.zbar_rec.iter_mut().zip(z_prev) {
            *bar = alpha * *bar + f64::from(u8::from(s));
        }
        for (j, &vj) in v.iter().enumerate() {
            let h = pseudo_derivative(vj, self.v_th, self.gamma);
            filter_row(self.ebar_in.row_mut(j).as_slice_mut().unwrap(), &self.zbar_in, kappa, h);
            filter_row(self.ebar_rec.row_mut(j).as_slice_mut().unwrap(), &self.zbar_rec, kappa, h);
        }
        for (bar, &s) in self.zbar_out.iter_mut().zip(z) {
            *bar = kappa * *bar + f64::from(u8::from(s));
        }
    }
}

#[inline]
fn filter_row(row: &mut [f64], zbar: &[f64], kappa: f64, h: f64) {
    if h == 0.0 {
        row.iter_mut().for_each(|e| *e *= kappa);
    } else {
        for (e, &zb) in row.iter_mut().zip(zbar) {
            *e = kappa * *e + h * zb;
        }
    }
}

#[inline]
fn accumulate_row(grad: &mut [f64], ebar: &[f64], signal: f64) {
    if signal != 0.0 {
        for (g, &e) in grad.iter_mut().zip(ebar) {
            *g += signal * e;
        }
    }
}

/// Loss gradients in weight orientation.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub d_in: Array2<f64>,
    pub d_rec: Array2<f64>,
    pub d_out: Array2<f64>,
}

impl Gradients {
    pub fn zeros(params: &NetParams) -> Self {
        Self {
            d_in: Array2::zeros((params.n_rec, params.n_in)),
            d_rec: Array2::zeros((params.n_rec, params.n_rec)),
            d_out: Array2::zeros((params.n_out, params.n_rec)),
        }
    }

    pub fn layers(&self) -> [&Array2<f64>; 3] {
        [&self.d_in, &self.d_rec, &self.d_out]
    }

    pub fn is_finite(&self) -> bool {
        self.layers().iter().all(|g| g.iter().all(|v| v.is_finite()))
    }
}

/// Running sums `sum_t L_j ebar_ji` and `sum_t eps_k zbar_out_j` over a trial.
#[derive(Debug, Clone, PartialEq)]
pub struct GradAccum {
    pub g_in: Array2<f64>,
    pub g_rec: Array2<f64>,
    pub g_out: Array2<f64>,
    steps: usize,
    signal: Vec<f64>,
    error: Vec<f64>,
}

impl GradAccum {
    pub fn new(params: &NetParams) -> Self {
        Self {
            g_in: Array2::zeros((params.n_rec, params.n_in)),
            g_rec: Array2::zeros((params.n_rec, params.n_rec)),
            g_out: Array2::zeros((params.n_out, params.n_rec)),
            steps: 0,
            signal: vec![0.0; params.n_rec],
            error: vec![0.0; params.n_out],
        }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Add the contribution of one step, after the traces were updated for it.
    /// `feedback` is `n_out x n_rec`.
    pub fn accumulate(
        &mut self,
        traces: &TraceState,
        y: &[f64],
        y_star: &[f64],
        feedback: &Array2<f64>,
    ) {
        for ((e, &yk), &tk) in self.error.iter_mut().zip(y).zip(y_star) {
            *e = yk - tk;
        }
        self.signal.iter_mut().for_each(|l| *l = 0.0);
        for (k, &eps) in self.error.iter().enumerate() {
            for (l, &b) in self.signal.iter_mut().zip(feedback.row(k)) {
                *l += b * eps;
            }
        }
        for (j, &l) in self.signal.iter().enumerate() {
            accumulate_row(
                self.g_in.row_mut(j).as_slice_mut().unwrap(),
                traces.ebar_in.row(j).as_slice().unwrap(),
                l,
            );
            accumulate_row(
                self.g_rec.row_mut(j).as_slice_mut().unwrap(),
                traces.ebar_rec.row(j).as_slice().unwrap(),
                l,
            );
            self.g_rec[[j, j]] = 0.0;
        }
        for (k, &eps) in self.error.iter().enumerate() {
            accumulate_row(
                self.g_out.row_mut(k).as_slice_mut().unwrap(),
                &traces.zbar_out,
                eps,
            );
        }
        self.steps += 1;
    }

    /// Gradients of the trial MSE (mean over steps and outputs).
    pub fn mse_gradients(&self) -> Gradients {
        let n_out = self.g_out.nrows();
        let scale = if self.steps == 0 {
            0.0
        } else {
            2.0 / (self.steps * n_out) as f64
        };
        Gradients {
            d_in: self.g_in.mapv(|g| g * scale),
            d_rec: self.g_rec.mapv(|g| g * scale),
            d_out: self.g_out.mapv(|g| g * scale),
        }
    }
}

/// Mean over steps and output channels of `(y - y*)^2`.
pub fn trial_loss(y: &Array2<f64>, y_star: &Array2<f64>) -> Result<f64> {
    if y.dim() != y_star.dim() {
        return Err(Error::config(format!(
            "trace shapes differ: {:?} vs {:?}",
            y.dim(),
            y_star.dim()
        )));
    }
    if y.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = y.iter().zip(y_star).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(sum / y.len() as f64)
}

#[derive(Debug, Clone)]
pub struct EpropTrial {
    pub output: TrialOutput,
    pub grads: Gradients,
    pub loss: f64,
}

/// Simulate one trial and estimate MSE gradients online.
pub fn run_eprop_trial(
    net: &Network,
    x: &SpikeTrain,
    target: &Array2<f64>,
    feedback: &Array2<f64>,
) -> Result<EpropTrial> {
    let params = net.params();
    if target.dim() != (x.steps(), params.n_out) {
        return Err(Error::config(format!(
            "target shape {:?} does not match {} steps x {} outputs",
            target.dim(),
            x.steps(),
            params.n_out
        )));
    }
    if feedback.dim() != (params.n_out, params.n_rec) {
        return Err(Error::config("feedback matrix must be n_out x n_rec"));
    }
    let mut traces = TraceState::new(params);
    let mut acc = GradAccum::new(params);
    let output = net.run_trial_with(x, |t, z_prev, state| {
        traces.step(z_prev, x.row(t), &state.v, &state.z);
        acc.accumulate(
            &traces,
            &state.y,
            target.row(t).as_slice().expect("standard layout target"),
            feedback,
        );
    })?;
    let loss = trial_loss(&output.y, target)?;
    Ok(EpropTrial {
        output,
        grads: acc.mse_gradients(),
        loss,
    })
}

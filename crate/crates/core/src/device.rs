//! Statistical model of a single phase-change memory device.
//!
//! A device is a plain [`DeviceState`] value. SET pulses add a stochastic,
//! history-dependent conductance increment; RESET re-amorphizes the device
//! back to the high-resistance state; READ applies power-law drift and
//! conductance-proportional read noise on top of the stored conductance.
//!
//! In [`DeviceMode::Perf`] all stochasticity and drift are disabled and a SET
//! pulse adds exactly `g_max / 2^cb_res`, which turns the device into an
//! ideal `cb_res`-bit memory cell.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DeviceMode {
    #[default]
    Realistic,
    Perf,
}

/// Parameters of the device model. All conductances are in µS, times in s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceModelParams {
    pub g_min: f64,
    pub g_max: f64,
    /// Mean single-pulse increment on a fresh device; the pulse quantum used
    /// by the updaters.
    pub g_unit: f64,
    /// `[c0, c1]`: `mu = c0 + c1 * g_unit * max(0, 1 - (level - g_min) / (g_max - g_min))`.
    pub write_mu_coeffs: [f64; 2],
    /// `[s0, s1]`: `sigma = s0 + s1 * mu`.
    pub write_sigma_coeffs: [f64; 2],
    /// Read noise standard deviation as a fraction of the drifted conductance.
    pub read_noise_coeff: f64,
    pub nu_mean: f64,
    pub nu_std: f64,
    /// Upper clip of the per-device drift exponent.
    pub nu_max: f64,
    /// Reference read delay after a write.
    pub t0: f64,
    pub hrs_mu: f64,
    pub hrs_sigma: f64,
    pub mode: DeviceMode,
    /// Bits per device in perf-mode.
    pub cb_res: u32,
}

impl Default for DeviceModelParams {
    fn default() -> Self {
        Self {
            g_min: 0.1,
            g_max: 12.0,
            g_unit: 0.75,
            write_mu_coeffs: [0.3, 0.6],
            write_sigma_coeffs: [0.05, 0.25],
            read_noise_coeff: 0.03,
            nu_mean: 0.05,
            nu_std: 0.02,
            nu_max: 0.12,
            t0: 25.0,
            hrs_mu: 0.1,
            hrs_sigma: 0.01,
            mode: DeviceMode::Realistic,
            cb_res: 4,
        }
    }
}

impl DeviceModelParams {
    /// Ideal 4-bit memory with the default conductance range.
    pub fn perf() -> Self {
        Self {
            mode: DeviceMode::Perf,
            ..Self::default()
        }
    }

    /// Realistic model with read noise and drift switched off. Write noise
    /// and write nonlinearity remain.
    pub fn without_read_effects(mut self) -> Self {
        self.read_noise_coeff = 0.0;
        self.nu_mean = 0.0;
        self.nu_std = 0.0;
        self
    }

    pub fn is_perf(&self) -> bool {
        self.mode == DeviceMode::Perf
    }

    /// Conductance change that the updaters assume a single SET pulse produces.
    pub fn pulse_quantum(&self) -> f64 {
        match self.mode {
            DeviceMode::Perf => self.g_max / f64::from(1u32 << self.cb_res),
            DeviceMode::Realistic => self.g_unit,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.g_min,
            self.g_max,
            self.g_unit,
            self.write_mu_coeffs[0],
            self.write_mu_coeffs[1],
            self.write_sigma_coeffs[0],
            self.write_sigma_coeffs[1],
            self.read_noise_coeff,
            self.nu_mean,
            self.nu_std,
            self.nu_max,
            self.t0,
            self.hrs_mu,
            self.hrs_sigma,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("device parameters must be finite"));
        }
        if !(self.g_min < self.g_max) || self.g_min < 0.0 {
            return Err(Error::config("device: need 0 <= g_min < g_max"));
        }
        if self.g_unit <= 0.0 || self.t0 <= 0.0 {
            return Err(Error::config("device: g_unit and t0 must be positive"));
        }
        let sigmas = [
            self.write_sigma_coeffs[0],
            self.write_sigma_coeffs[1],
            self.read_noise_coeff,
            self.nu_std,
            self.hrs_sigma,
        ];
        if sigmas.iter().any(|&s| s < 0.0) {
            return Err(Error::config("device: noise parameters must be >= 0"));
        }
        if self.nu_max < 0.0 {
            return Err(Error::config("device: nu_max must be >= 0"));
        }
        if !(1..=16).contains(&self.cb_res) {
            return Err(Error::config("device: cb_res must be in 1..=16"));
        }
        if self.is_perf() {
            let quantum = self.g_max / f64::from(1u32 << self.cb_res);
            if (quantum - self.g_unit).abs() > 1e-9 {
                return Err(Error::config(format!(
                    "device: perf-mode requires g_unit = g_max / 2^cb_res = {quantum}"
                )));
            }
        }
        Ok(())
    }

    fn clip(&self, g: f64) -> f64 {
        g.clamp(self.g_min, self.g_max)
    }

    /// Mean and standard deviation of the next SET increment.
    pub fn write_stats(&self, p_mem: f64, g: f64) -> (f64, f64) {
        let [c0, c1] = self.write_mu_coeffs;
        let [s0, s1] = self.write_sigma_coeffs;
        let level = p_mem.max(g);
        let headroom = (1.0 - (level - self.g_min) / (self.g_max - self.g_min)).max(0.0);
        let mu = c0 + c1 * self.g_unit * headroom;
        (mu, s0 + s1 * mu)
    }

    fn sample_nu<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.is_perf() || self.nu_std == 0.0 {
            return self.nu_mean.clamp(0.0, self.nu_max);
        }
        let nu = Normal::new(self.nu_mean, self.nu_std)
            .expect("validated nu_std")
            .sample(rng);
        nu.clamp(0.0, self.nu_max)
    }

    fn sample_hrs<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.is_perf() || self.hrs_sigma == 0.0 {
            return self.clip(self.hrs_mu);
        }
        let g = Normal::new(self.hrs_mu, self.hrs_sigma)
            .expect("validated hrs_sigma")
            .sample(rng);
        self.clip(g)
    }
}

/// State of one device.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceState {
    /// Conductance (µS) as established `t0` seconds after the last write.
    pub g: f64,
    /// Programming history (µS).
    pub p_mem: f64,
    /// Last write time (s).
    pub t_p: f64,
    /// Cumulative number of SET pulses received.
    pub count: u64,
    /// Drift exponent.
    pub nu: f64,
}

impl DeviceState {
    /// A device iteratively programmed to the high-resistance state at time `t`.
    pub fn fresh<R: Rng + ?Sized>(params: &DeviceModelParams, t: f64, rng: &mut R) -> Self {
        let g = params.sample_hrs(rng);
        Self {
            g,
            p_mem: g,
            t_p: t,
            count: 0,
            nu: params.sample_nu(rng),
        }
    }

    /// Apply one SET pulse at time `t`.
    pub fn apply_set<R: Rng + ?Sized>(
        &mut self,
        params: &DeviceModelParams,
        t: f64,
        rng: &mut R,
    ) -> Result<()> {
        self.check_time(t)?;
        let delta = match params.mode {
            DeviceMode::Perf => params.pulse_quantum(),
            DeviceMode::Realistic => {
                let (mu, sigma) = params.write_stats(self.p_mem, self.g);
                if sigma > 0.0 {
                    Normal::new(mu, sigma).expect("sigma > 0").sample(rng)
                } else {
                    mu
                }
            }
        };
        self.g = params.clip(self.g + delta);
        self.p_mem = self.p_mem.max(self.g);
        self.t_p = t;
        self.count += 1;
        Ok(())
    }

    /// Conductance after drift, without read noise.
    pub fn drifted(&self, params: &DeviceModelParams, t: f64) -> Result<f64> {
        self.check_time(t)?;
        if params.is_perf() || self.nu == 0.0 {
            return Ok(self.g);
        }
        let elapsed = (t - self.t_p).max(params.t0);
        Ok(self.g * (elapsed / params.t0).powf(-self.nu))
    }

    /// Sense the conductance at time `t`.
    pub fn read<R: Rng + ?Sized>(
        &self,
        params: &DeviceModelParams,
        t: f64,
        rng: &mut R,
    ) -> Result<f64> {
        let g_drift = self.drifted(params, t)?;
        if params.is_perf() {
            return Ok(g_drift);
        }
        let sigma = params.read_noise_coeff * g_drift;
        let noise = if sigma > 0.0 {
            Normal::new(0.0, sigma).expect("sigma > 0").sample(rng)
        } else {
            0.0
        };
        Ok(params.clip(g_drift + noise))
    }

    /// Melt-quench RESET to the high-resistance state at time `t`. The write
    /// count is cumulative and survives the reset.
    pub fn reset<R: Rng + ?Sized>(&mut self, params: &DeviceModelParams, t: f64, rng: &mut R) {
        let count = self.count;
        let t = if t.is_finite() { t.max(self.t_p) } else { self.t_p };
        *self = Self::fresh(params, t, rng);
        self.count = count;
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !t.is_finite() {
            return Err(Error::Precondition(format!("time {t} is not finite")));
        }
        if t < self.t_p {
            return Err(Error::Precondition(format!(
                "time {t} precedes last write at {}",
                self.t_p
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn noiseless() -> DeviceModelParams {
        DeviceModelParams::default().without_read_effects()
    }

    #[test]
    fn perf_set_adds_one_quantum() {
        let params = DeviceModelParams::perf();
        let mut d = DeviceState::fresh(&params, 0.0, &mut rng(1));
        d.g = 2.0;
        d.apply_set(&params, 0.0, &mut rng(2)).unwrap();
        assert!((d.g - 2.75).abs() < 1e-12);
        assert_eq!(d.count, 1);
    }

    #[test]
    fn fresh_device_first_pulse_mean_near_g_unit() {
        let params = DeviceModelParams::default();
        let mut r = rng(3);
        let n = 10_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let mut d = DeviceState::fresh(&params, 0.0, &mut r);
            let before = d.g;
            d.apply_set(&params, 0.0, &mut r).unwrap();
            sum += d.g - before;
        }
        let mean = sum / n as f64;
        assert!((0.6..=0.9).contains(&mean), "mean first increment {mean}");
    }

    #[test]
    fn saturated_device_stays_bounded() {
        let params = DeviceModelParams::default();
        let mut r = rng(4);
        let mut d = DeviceState::fresh(&params, 0.0, &mut r);
        d.g = 12.0;
        d.p_mem = 12.0;
        for _ in 0..100 {
            d.apply_set(&params, 0.0, &mut r).unwrap();
            assert!(d.g <= 12.0);
        }
    }

    #[test]
    fn set_rejects_time_travel_and_nan() {
        let params = DeviceModelParams::default();
        let mut r = rng(5);
        let mut d = DeviceState::fresh(&params, 10.0, &mut r);
        assert!(matches!(
            d.apply_set(&params, 9.0, &mut r),
            Err(Error::Precondition(_))
        ));
        assert!(d.apply_set(&params, f64::NAN, &mut r).is_err());
        assert!(d.read(&params, 9.0, &mut r).is_err());
        assert_eq!(d.count, 0);
    }

    #[test]
    fn read_without_drift_or_noise_is_identity() {
        let params = noiseless();
        let mut r = rng(6);
        let mut d = DeviceState::fresh(&params, 0.0, &mut r);
        d.g = 7.3;
        assert_eq!(d.read(&params, 1e4, &mut r).unwrap(), 7.3);
    }

    #[test]
    fn drift_matches_power_law() {
        let mut params = noiseless();
        params.nu_mean = 0.05;
        let mut d = DeviceState::fresh(&params, 0.0, &mut rng(7));
        assert_eq!(d.nu, 0.05);
        d.g = 10.0;
        let t = 100.0 * params.t0;
        let got = d.read(&params, t, &mut rng(8)).unwrap();
        let want = 10.0 * 100f64.powf(-0.05);
        assert!((got - 7.943_282_347_242_815).abs() < 1e-12);
        assert!(((got - want) / want).abs() < 1e-12);
        // At exactly t0 after the write there is no drift yet.
        assert_eq!(d.read(&params, params.t0, &mut rng(9)).unwrap(), 10.0);
    }

    #[test]
    fn read_noise_grows_with_conductance() {
        let mut params = DeviceModelParams::default();
        params.nu_mean = 0.0;
        params.nu_std = 0.0;
        let mut r = rng(10);
        let std_at = |g: f64, r: &mut ChaCha8Rng| {
            let mut d = DeviceState::fresh(&params, 0.0, r);
            d.g = g;
            let reads: Vec<f64> = (0..10_000).map(|_| d.read(&params, 0.0, r).unwrap()).collect();
            let mean = reads.iter().sum::<f64>() / reads.len() as f64;
            (reads.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / reads.len() as f64).sqrt()
        };
        let hi = std_at(10.0, &mut r);
        let lo = std_at(1.0, &mut r);
        assert!(hi > lo, "std(10)={hi} std(1)={lo}");
    }

    #[test]
    fn reset_samples_hrs() {
        let params = DeviceModelParams::default();
        let mut r = rng(11);
        let mut d = DeviceState::fresh(&params, 0.0, &mut r);
        d.count = 5;
        let mut sum = 0.0;
        for i in 0..10_000 {
            d.g = 9.0;
            d.reset(&params, i as f64, &mut r);
            assert!(d.g >= 0.1 - 4.0 * 0.01 && d.g >= params.g_min && d.g <= params.g_max);
            assert_eq!(d.count, 5);
            assert_eq!(d.t_p, i as f64);
            assert!((0.0..=params.nu_max).contains(&d.nu));
            sum += d.g;
        }
        let mean = sum / 10_000.0;
        assert!((0.095..=0.105).contains(&mean), "mean {mean}");
    }

    #[test]
    fn perf_reset_is_exact() {
        let params = DeviceModelParams::perf();
        let mut d = DeviceState::fresh(&params, 0.0, &mut rng(12));
        d.g = 5.0;
        d.reset(&params, 1.0, &mut rng(13));
        assert_eq!(d.g, 0.1);
    }

    #[test]
    fn perf_saturates_after_ceil_range_over_quantum_pulses() {
        let params = DeviceModelParams::perf();
        let mut r = rng(14);
        let mut d = DeviceState::fresh(&params, 0.0, &mut r);
        let needed = ((params.g_max - params.g_min) / params.pulse_quantum()).ceil() as usize;
        for _ in 0..needed - 1 {
            d.apply_set(&params, 0.0, &mut r).unwrap();
        }
        assert!(d.g < params.g_max);
        d.apply_set(&params, 0.0, &mut r).unwrap();
        assert_eq!(d.g, params.g_max);
    }

    #[test]
    fn perf_mode_ignores_rng() {
        let params = DeviceModelParams::perf();
        let run = |seed| {
            let mut r = rng(seed);
            let mut d = DeviceState::fresh(&params, 0.0, &mut r);
            let mut out = vec![];
            for k in 0..20 {
                d.apply_set(&params, k as f64, &mut r).unwrap();
                out.push(d.read(&params, k as f64 + 100.0, &mut r).unwrap());
            }
            d.reset(&params, 200.0, &mut r);
            out.push(d.g);
            out
        };
        assert_eq!(run(1), run(999));
    }

    #[test]
    fn mean_write_response_is_concave() {
        let params = noiseless();
        let mut r = rng(15);
        let devices = 5_000;
        let k_max = 20;
        let mut mean = vec![0.0; k_max + 1];
        for _ in 0..devices {
            let mut d = DeviceState::fresh(&params, 0.0, &mut r);
            mean[0] += d.g;
            for slot in mean.iter_mut().skip(1) {
                d.apply_set(&params, 0.0, &mut r).unwrap();
                *slot += d.g;
            }
        }
        for m in &mut mean {
            *m /= devices as f64;
        }
        for k in 1..k_max {
            let second = mean[k + 1] - 2.0 * mean[k] + mean[k - 1];
            assert!(second < 0.0, "not concave at k={k}: {second}");
        }
    }

    #[test]
    fn perf_validation_requires_consistent_quantum() {
        let mut params = DeviceModelParams::perf();
        params.cb_res = 3;
        assert!(params.validate().is_err());
        params.g_unit = 1.5;
        assert!(params.validate().is_ok());
        assert!(DeviceModelParams::default().validate().is_ok());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn conductance_stays_in_bounds(seed in any::<u64>(), ops in proptest::collection::vec(0u8..3, 1..60)) {
                let params = DeviceModelParams::default();
                let mut r = rng(seed);
                let mut d = DeviceState::fresh(&params, 0.0, &mut r);
                let mut t = 0.0;
                for op in ops {
                    t += 1.0;
                    match op {
                        0 => d.apply_set(&params, t, &mut r).unwrap(),
                        1 => d.reset(&params, t, &mut r),
                        _ => {
                            let g = d.read(&params, t + 50.0, &mut r).unwrap();
                            prop_assert!((params.g_min..=params.g_max).contains(&g));
                        }
                    }
                    prop_assert!((params.g_min..=params.g_max).contains(&d.g));
                    prop_assert!(d.nu >= 0.0);
                }
            }
        }
    }
}

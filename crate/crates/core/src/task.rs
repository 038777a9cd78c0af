//! Pattern-generation target: a one-second sum of four sinusoids.

use std::f64::consts::PI;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Component frequencies in Hz.
pub const FREQUENCIES: [f64; 4] = [1.0, 2.0, 3.0, 5.0];

#[derive(Debug, Clone, PartialEq)]
pub struct TargetPattern {
    pub amplitudes: [f64; 4],
    pub phases: [f64; 4],
}

impl TargetPattern {
    /// Amplitudes from U[0.5, 2], phases from U[0, 2*pi).
    pub fn sample(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut amplitudes = [0.0; 4];
        let mut phases = [0.0; 4];
        for (a, p) in amplitudes.iter_mut().zip(phases.iter_mut()) {
            *a = rng.random_range(0.5..=2.0);
            *p = rng.random_range(0.0..2.0 * PI);
        }
        Self { amplitudes, phases }
    }

    pub fn value(&self, t: f64) -> f64 {
        FREQUENCIES
            .iter()
            .zip(&self.amplitudes)
            .zip(&self.phases)
            .map(|((f, a), p)| a * (2.0 * PI * f * t + p).sin())
            .sum()
    }

    pub fn trace(&self, steps: usize, dt: f64) -> Vec<f64> {
        (0..steps).map(|s| self.value(s as f64 * dt)).collect()
    }
}

/// Target traces for `n_out` readouts, `steps x n_out`. Output `k` uses the
/// pattern drawn from `seed + k`.
pub fn make_target(seed: u64, steps: usize, n_out: usize, dt: f64) -> Array2<f64> {
    let mut out = Array2::zeros((steps, n_out));
    for k in 0..n_out {
        let trace = TargetPattern::sample(seed.wrapping_add(k as u64)).trace(steps, dt);
        for (dst, v) in out.column_mut(k).iter_mut().zip(trace) {
            *dst = v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn silent_pattern_is_zero() {
        let mut p = TargetPattern::sample(3);
        p.amplitudes = [0.0; 4];
        assert!(p.trace(1000, 1e-3).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn samples_lie_in_declared_ranges() {
        for seed in 0..200 {
            let p = TargetPattern::sample(seed);
            for (a, ph) in p.amplitudes.iter().zip(&p.phases) {
                assert!((0.5..=2.0).contains(a));
                assert!((0.0..2.0 * PI).contains(ph));
            }
            let bound: f64 = p.amplitudes.iter().sum();
            assert!(bound <= 8.0);
            assert!(p.trace(1000, 1e-3).iter().all(|v| v.abs() <= bound + 1e-12));
        }
    }

    #[test]
    fn components_recoverable_by_dft() {
        let steps = 1000;
        let p = TargetPattern::sample(17);
        let y = p.trace(steps, 1e-3);
        for (f, a) in FREQUENCIES.iter().zip(&p.amplitudes) {
            let (mut re, mut im) = (0.0, 0.0);
            for (s, v) in y.iter().enumerate() {
                let arg = 2.0 * PI * f * s as f64 / steps as f64;
                re += v * arg.cos();
                im -= v * arg.sin();
            }
            let mag = (re * re + im * im).sqrt();
            let want = a * steps as f64 / 2.0;
            assert!(((mag - want) / want).abs() < 0.01, "f={f}: {mag} vs {want}");
        }
    }

    #[test]
    fn same_seed_same_target() {
        assert_eq!(make_target(5, 100, 2, 1e-3), make_target(5, 100, 2, 1e-3));
        assert_ne!(make_target(5, 100, 1, 1e-3), make_target(6, 100, 1, 1e-3));
    }
}

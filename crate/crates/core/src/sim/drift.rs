use std::f64::consts::{PI, TAU};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Phase-drift settings of the interferometer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftConfig {
    /// Mean absolute drift per millisecond.
    pub rate_rad_per_ms: f64,
    #[serde(default)]
    pub initial_phase: f64,
}

impl Default for DriftConfig {
    fn default() -> Self {
        DriftConfig {
            rate_rad_per_ms: 0.62,
            initial_phase: 0.0,
        }
    }
}

/// Wiener-process model of the reference-frame deviation `φ_δ`.
///
/// Increments over `t` ms are `N(0, s²t)` with `s = rate/√(2/π)`, so that the
/// mean absolute change over one millisecond equals `rate`.
#[derive(Debug, Clone)]
pub struct DriftProcess {
    rate_rad_per_ms: f64,
    phase: f64,
    rng: ChaCha8Rng,
}

impl DriftProcess {
    pub fn new(config: DriftConfig, seed: u64) -> Result<Self> {
        if !(config.rate_rad_per_ms >= 0.0) || !config.rate_rad_per_ms.is_finite() {
            return Err(Error::invalid(format!("drift rate {} must be nonnegative", config.rate_rad_per_ms)));
        }
        if !config.initial_phase.is_finite() {
            return Err(Error::invalid("initial phase must be finite"));
        }
        Ok(DriftProcess {
            rate_rad_per_ms: config.rate_rad_per_ms,
            phase: config.initial_phase.rem_euclid(TAU),
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn phase(&self) -> f64 {
        self.phase
    }

    /// Standard deviation of the increment over one millisecond.
    pub fn sigma_per_sqrt_ms(&self) -> f64 {
        self.rate_rad_per_ms / (2.0 / PI).sqrt()
    }

    pub fn advance(&mut self, dt_s: f64) -> Result<f64> {
        if !(dt_s >= 0.0) {
            return Err(Error::invalid(format!("time step {dt_s} must be nonnegative")));
        }
        if dt_s == 0.0 || self.rate_rad_per_ms == 0.0 {
            return Ok(self.phase);
        }
        let z: f64 = StandardNormal.sample(&mut self.rng);
        let step = z * self.sigma_per_sqrt_ms() * (dt_s * 1e3).sqrt();
        self.phase = (self.phase + step).rem_euclid(TAU);
        Ok(self.phase)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wrapped_diff(a: f64, b: f64) -> f64 {
        let d = (b - a).rem_euclid(TAU);
        if d > PI {
            d - TAU
        } else {
            d
        }
    }

    #[test]
    fn zero_rate_or_zero_step_is_static() {
        let mut d = DriftProcess::new(DriftConfig { rate_rad_per_ms: 0.0, initial_phase: 1.0 }, 1).unwrap();
        assert_eq!(d.advance(1.0).unwrap(), 1.0);
        let mut d = DriftProcess::new(DriftConfig::default(), 1).unwrap();
        assert_eq!(d.advance(0.0).unwrap(), 0.0);
        assert!(d.advance(-1.0).is_err());
    }

    #[test]
    fn mean_absolute_drift_per_ms() {
        let mut d = DriftProcess::new(DriftConfig::default(), 7).unwrap();
        let n = 10_000;
        let mut total = 0.0;
        for _ in 0..n {
            let before = d.phase();
            let after = d.advance(1e-3).unwrap();
            total += wrapped_diff(before, after).abs();
        }
        let mean = total / n as f64;
        assert!((mean - 0.62).abs() < 0.02, "{mean}");
    }

    #[test]
    fn seeded_paths_repeat() {
        let mut a = DriftProcess::new(DriftConfig::default(), 3).unwrap();
        let mut b = DriftProcess::new(DriftConfig::default(), 3).unwrap();
        for _ in 0..100 {
            assert_eq!(a.advance(2e-6).unwrap(), b.advance(2e-6).unwrap());
        }
        assert!((0.0..TAU).contains(&a.phase()));
    }
}

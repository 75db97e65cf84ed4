use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Region {
    /// Bright pulses with Alice's extra phase `phase` and no encoding.
    Reference { pulses: u32, phase: f64 },
    /// Idle pulses letting the detectors recover after a reference region.
    Recovery { pulses: u32 },
    /// Encoded rounds.
    Quantum { pulses: u32 },
}

impl Region {
    pub fn pulses(&self) -> u32 {
        match *self {
            Region::Reference { pulses, .. } | Region::Recovery { pulses } | Region::Quantum { pulses } => pulses,
        }
    }
}

/// Arrangement of one pulse train.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLayout {
    pub pulses_per_train: u32,
    pub regions: Vec<Region>,
    /// Reference intensity per side as a multiple of the signal intensity.
    pub reference_multiplier: f64,
    pub clock_rate_hz: f64,
}

impl Default for TrainLayout {
    fn default() -> Self {
        TrainLayout {
            pulses_per_train: 625,
            regions: vec![
                Region::Reference { pulses: 50, phase: 0.0 },
                Region::Recovery { pulses: 25 },
                Region::Quantum { pulses: 237 },
                Region::Reference { pulses: 50, phase: FRAC_PI_2 },
                Region::Recovery { pulses: 25 },
                Region::Quantum { pulses: 238 },
            ],
            reference_multiplier: 20.0,
            clock_rate_hz: 312.5e6,
        }
    }
}

impl TrainLayout {
    pub fn validate(&self) -> Result<()> {
        let total: u64 = self.regions.iter().map(|r| u64::from(r.pulses())).sum();
        if total != u64::from(self.pulses_per_train) {
            return Err(Error::invalid(format!(
                "layout regions hold {total} pulses, train has {}",
                self.pulses_per_train
            )));
        }
        if !(self.reference_multiplier > 1.0) {
            return Err(Error::invalid(format!(
                "reference multiplier {} must exceed 1",
                self.reference_multiplier
            )));
        }
        if !(self.clock_rate_hz > 0.0) {
            return Err(Error::invalid("clock rate must be positive"));
        }
        if self.quantum_pulses() == 0 {
            return Err(Error::invalid("layout has no quantum pulses"));
        }
        let has = |target: f64| {
            self.regions
                .iter()
                .any(|r| matches!(r, Region::Reference { phase, .. } if (phase - target).abs() < 1e-12))
        };
        if !has(0.0) || !has(FRAC_PI_2) {
            return Err(Error::invalid("layout needs reference regions at phases 0 and π/2"));
        }
        Ok(())
    }

    pub fn quantum_pulses(&self) -> u64 {
        self.regions
            .iter()
            .filter_map(|r| match r {
                Region::Quantum { pulses } => Some(u64::from(*pulses)),
                _ => None,
            })
            .sum()
    }

    /// Pulses of the reference regions with phase `phase`.
    pub fn reference_pulses(&self, phase: f64) -> u64 {
        self.regions
            .iter()
            .filter_map(|r| match r {
                Region::Reference { pulses, phase: p } if (p - phase).abs() < 1e-12 => Some(u64::from(*pulses)),
                _ => None,
            })
            .sum()
    }

    /// Duration of one train in seconds.
    pub fn train_period(&self) -> f64 {
        f64::from(self.pulses_per_train) / self.clock_rate_hz
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_layout_is_consistent() {
        let l = TrainLayout::default();
        l.validate().unwrap();
        assert_eq!(l.quantum_pulses(), 475);
        assert_eq!(l.reference_pulses(0.0), 50);
        assert_eq!(l.reference_pulses(FRAC_PI_2), 50);
        assert!((l.train_period() - 2e-6).abs() < 1e-18);
    }

    #[test]
    fn rejects_miscounted_layout() {
        let mut l = TrainLayout::default();
        l.pulses_per_train = 600;
        assert!(l.validate().is_err());
        let mut l = TrainLayout::default();
        l.reference_multiplier = 0.5;
        assert!(l.validate().is_err());
        let mut l = TrainLayout::default();
        l.regions[3] = Region::Recovery { pulses: 50 };
        assert!(l.validate().is_err());
    }

    #[test]
    fn layout_round_trips_through_json() {
        let l = TrainLayout::default();
        let s = serde_json::to_string(&l).unwrap();
        assert!(s.contains("\"kind\":\"reference\""));
        let back: TrainLayout = serde_json::from_str(&s).unwrap();
        assert_eq!(back, l);
    }
}

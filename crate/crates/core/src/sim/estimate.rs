use std::f64::consts::{FRAC_PI_2, TAU};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::detect::{sample_single_clicks, PortMeans};
use crate::channel::ChannelModel;
use crate::error::{Error, Result};
use crate::protocol::slice_of_phase;

/// Single-click counts of the two reference regions. "Constructive" is the
/// port whose click ratio is `(1 + cos φ_δ)/2` in the in-phase region and
/// `(1 − sin φ_δ)/2` in the quadrature region.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceCounts {
    pub constructive_0: u64,
    pub destructive_0: u64,
    pub constructive_q: u64,
    pub destructive_q: u64,
}

impl ReferenceCounts {
    pub fn add(&mut self, o: &ReferenceCounts) {
        self.constructive_0 += o.constructive_0;
        self.destructive_0 += o.destructive_0;
        self.constructive_q += o.constructive_q;
        self.destructive_q += o.destructive_q;
    }

    pub fn total(&self) -> u64 {
        self.constructive_0 + self.destructive_0 + self.constructive_q + self.destructive_q
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhaseEstimate {
    pub phi: f64,
    pub slice: usize,
}

/// Estimates `φ_δ` from reference counts and returns it with its slice.
pub fn estimate_phase_slice(c: ReferenceCounts, slices: usize) -> Result<PhaseEstimate> {
    let n0 = c.constructive_0 + c.destructive_0;
    let nq = c.constructive_q + c.destructive_q;
    if n0 == 0 || nq == 0 {
        return Err(Error::EstimationUnavailable(format!(
            "reference regions recorded {n0} and {nq} clicks"
        )));
    }
    let cos = 2.0 * c.constructive_0 as f64 / n0 as f64 - 1.0;
    let sin = 1.0 - 2.0 * c.constructive_q as f64 / nq as f64;
    let phi = sin.atan2(cos).rem_euclid(TAU);
    Ok(PhaseEstimate {
        phi,
        slice: slice_of_phase(phi, slices)?,
    })
}

/// Samples the reference counts of one train: `pulses_0` in-phase and
/// `pulses_q` quadrature pulses with per-side intensity `mu_ref`.
pub fn sample_reference_counts<R: Rng + ?Sized>(
    rng: &mut R,
    phi_delta: f64,
    mu_ref: f64,
    pulses_0: u64,
    pulses_q: u64,
    ch: &ChannelModel,
) -> ReferenceCounts {
    let p0 = PortMeans::new(mu_ref, mu_ref, phi_delta.cos(), ch);
    let pq = PortMeans::new(mu_ref, mu_ref, (phi_delta + FRAC_PI_2).cos(), ch);
    let (c0, d0) = sample_single_clicks(rng, pulses_0, p0, ch.dark_count);
    let (cq, dq) = sample_single_clicks(rng, pulses_q, pq, ch.dark_count);
    ReferenceCounts {
        constructive_0: c0,
        destructive_0: d0,
        constructive_q: cq,
        destructive_q: dq,
    }
}

/// Reference counts with exactly `detections` single clicks per region at
/// deviation `phi_delta`, drawn from the ideal click ratios.
pub fn sample_reference_detections<R: Rng + ?Sized>(
    rng: &mut R,
    phi_delta: f64,
    detections: u64,
    misalignment: f64,
) -> ReferenceCounts {
    let visibility = 1.0 - 2.0 * misalignment;
    let p0 = (1.0 + visibility * phi_delta.cos()) / 2.0;
    let pq = (1.0 - visibility * phi_delta.sin()) / 2.0;
    let c0 = super::detect::binomial(rng, detections, p0);
    let cq = super::detect::binomial(rng, detections, pq);
    ReferenceCounts {
        constructive_0: c0,
        destructive_0: detections - c0,
        constructive_q: cq,
        destructive_q: detections - cq,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::slice_center;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn counts(a: u64, b: u64, c: u64, d: u64) -> ReferenceCounts {
        ReferenceCounts {
            constructive_0: a,
            destructive_0: b,
            constructive_q: c,
            destructive_q: d,
        }
    }

    #[test]
    fn estimator_examples() {
        let e = estimate_phase_slice(counts(1000, 0, 500, 500), 16).unwrap();
        assert!(e.phi.abs() < 1e-12);
        assert_eq!(e.slice, 0);
        let e = estimate_phase_slice(counts(750, 250, 67, 933), 16).unwrap();
        assert!((e.phi - PI / 3.0).abs() < 0.01, "{}", e.phi);
        assert_eq!(e.slice, 3);
        let e = estimate_phase_slice(counts(250, 750, 933, 67), 16).unwrap();
        assert!((e.phi - (2.0 * PI - 2.0 * PI / 3.0)).abs() < 0.01, "{}", e.phi);
        assert_eq!(e.slice, 11);
    }

    #[test]
    fn empty_region_is_unavailable() {
        assert!(matches!(
            estimate_phase_slice(counts(0, 0, 5, 5), 16),
            Err(Error::EstimationUnavailable(_))
        ));
        assert!(estimate_phase_slice(counts(3, 1, 0, 0), 16).is_err());
    }

    #[test]
    fn bright_references_recover_slice() {
        let c = ChannelModel::new(0.1, 1.0, 1e-6, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for j in 0..16 {
            let phi = slice_center(j, 16);
            let r = sample_reference_counts(&mut rng, phi, 5.0, 2000, 2000, &c);
            assert_eq!(estimate_phase_slice(r, 16).unwrap().slice, j);
        }
    }

    #[test]
    fn static_sweep_is_reliable() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for j in 0..16 {
            let phi = slice_center(j, 16);
            let ok = (0..500)
                .filter(|_| {
                    let r = sample_reference_detections(&mut rng, phi, 1000, 0.0);
                    estimate_phase_slice(r, 16).unwrap().slice == j
                })
                .count();
            assert!(ok >= 495, "slice {j}: {ok}/500");
        }
    }
}

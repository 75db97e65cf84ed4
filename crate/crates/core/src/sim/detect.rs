use rand::Rng;
use rand_distr::{Binomial, Distribution};

use crate::channel::ChannelModel;
use crate::protocol::DetectionOutcome;

/// Mean photon numbers arriving at the two detectors.
///
/// The relative phase is `θ_a − θ_b + φ_δ`; `L` is the constructive port. A
/// misalignment `e` moves a fraction `e` of each port's light into the other.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PortMeans {
    pub left: f64,
    pub right: f64,
}

impl PortMeans {
    pub fn new(mu_a: f64, mu_b: f64, cos_rel: f64, ch: &ChannelModel) -> Self {
        let eta = ch.eta_arm();
        let total = eta * (mu_a + mu_b);
        let cross = eta * (mu_a * mu_b).sqrt() * cos_rel;
        let left = (total / 2.0 + cross).clamp(0.0, total);
        let right = total - left;
        let e = ch.misalignment;
        PortMeans {
            left: (1.0 - e) * left + e * right,
            right: (1.0 - e) * right + e * left,
        }
    }

    pub fn total(&self) -> f64 {
        self.left + self.right
    }

    /// Probabilities of `(L only, R only, both)` per window.
    pub fn click_probabilities(&self, dark_count: f64) -> (f64, f64, f64) {
        let quiet_l = (1.0 - dark_count) * (-self.left).exp();
        let quiet_r = (1.0 - dark_count) * (-self.right).exp();
        ((1.0 - quiet_l) * quiet_r, (1.0 - quiet_r) * quiet_l, (1.0 - quiet_l) * (1.0 - quiet_r))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Detection {
    pub outcome: DetectionOutcome,
    /// Photons in the joint state sent by both users.
    pub photons: u32,
}

/// Samples a Poisson variate by inversion; `exp_neg_mean = e^{−mean}`.
pub(crate) fn poisson_inversion<R: Rng + ?Sized>(rng: &mut R, mean: f64, exp_neg_mean: f64) -> u32 {
    let u: f64 = rng.random();
    let mut k = 0u32;
    let mut p = exp_neg_mean;
    let mut cum = p;
    while u > cum && k < 1000 {
        k += 1;
        p *= mean / f64::from(k);
        cum += p;
        if p == 0.0 {
            break;
        }
    }
    k
}

/// One window given port means: the photon number of the joint coherent state
/// is Poisson, each photon survives the channel with `η_arm` and exits left
/// with probability `left/total`; dark counts are independent per detector.
///
/// This reproduces independent Poisson port statistics exactly while exposing
/// the photon number for bookkeeping.
pub(crate) fn sample_window<R: Rng + ?Sized>(
    rng: &mut R,
    mean_photons: f64,
    exp_neg_mean: f64,
    ports: PortMeans,
    ch: &ChannelModel,
) -> Detection {
    let photons = poisson_inversion(rng, mean_photons, exp_neg_mean);
    let (mut left, mut right) = (false, false);
    if photons > 0 {
        let eta = ch.eta_arm();
        let total = ports.total();
        let p_left = if total > 0.0 { ports.left / total } else { 0.5 };
        for _ in 0..photons {
            if rng.random::<f64>() < eta {
                if rng.random::<f64>() < p_left {
                    left = true;
                } else {
                    right = true;
                }
            }
        }
    }
    if ch.dark_count > 0.0 {
        left |= rng.random::<f64>() < ch.dark_count;
        right |= rng.random::<f64>() < ch.dark_count;
    }
    Detection {
        outcome: DetectionOutcome::from_clicks(left, right),
        photons,
    }
}

/// Interference of one round with per-side intensities `mu_a`, `mu_b` and
/// encoded phases `theta_a`, `theta_b` under reference deviation `phi_delta`.
pub fn detect_round<R: Rng + ?Sized>(
    mu_a: f64,
    mu_b: f64,
    theta_a: f64,
    theta_b: f64,
    phi_delta: f64,
    ch: &ChannelModel,
    rng: &mut R,
) -> Detection {
    let mu = mu_a.max(0.0) + mu_b.max(0.0);
    let ports = PortMeans::new(mu_a.max(0.0), mu_b.max(0.0), (theta_a - theta_b + phi_delta).cos(), ch);
    sample_window(rng, mu, (-mu).exp(), ports, ch)
}

/// Single-click counts `(L, R)` over `pulses` identical windows, sampled from
/// the multinomial over {L only, R only, both, none}.
pub(crate) fn sample_single_clicks<R: Rng + ?Sized>(
    rng: &mut R,
    pulses: u64,
    ports: PortMeans,
    dark_count: f64,
) -> (u64, u64) {
    if pulses == 0 {
        return (0, 0);
    }
    let (pl, pr, _) = ports.click_probabilities(dark_count);
    let left = binomial(rng, pulses, pl);
    let rest = pulses - left;
    let pr_cond = if pl < 1.0 { (pr / (1.0 - pl)).clamp(0.0, 1.0) } else { 0.0 };
    let right = binomial(rng, rest, pr_cond);
    (left, right)
}

pub(crate) fn binomial<R: Rng + ?Sized>(rng: &mut R, n: u64, p: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).map(|b| b.sample(rng)).unwrap_or(0)
}

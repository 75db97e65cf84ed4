//! Closed-form channel models: yields, gains and error rates of the
//! phase-matching protocol, asymptotic key rates, the MDI reference protocol
//! and the repeaterless bounds.
//!
//! Throughout, `η` in the gain/yield formulas is the per-arm transmittance
//! including detection (`eta_arm = eta_ch · eta_d`), while the bounds take the
//! end-to-end transmittance `eta_tot = eta_ch² · eta_d`.

mod bessel;
mod curve;
mod mdi;

pub use bessel::bessel_i0;
pub use curve::{
    golden_section_max, optimize_intensity, rate_distance_curve, write_curve_csv, CurveConfig, CurvePoint,
};
pub use mdi::{key_rate_mdi, MdiParams, MdiRate};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::{binary_entropy_unchecked, ProtocolParams};

/// Misalignment of the phase-matched group used in the reference simulation.
pub const DEFAULT_MISALIGNMENT: f64 = 0.053;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    /// Transmittance from one user to the measurement site.
    pub eta_ch: f64,
    /// Detector efficiency.
    pub eta_d: f64,
    /// Dark-count probability per detector per window.
    pub dark_count: f64,
    /// Misalignment error of the matched group.
    #[serde(default)]
    pub misalignment: f64,
}

impl ChannelModel {
    pub fn new(eta_ch: f64, eta_d: f64, dark_count: f64, misalignment: f64) -> Result<Self> {
        let ch = ChannelModel {
            eta_ch,
            eta_d,
            dark_count,
            misalignment,
        };
        ch.validate()?;
        Ok(ch)
    }

    /// Symmetric fibre link of total length `distance_km`; each user sits
    /// half the distance from the measurement site.
    pub fn from_fiber(
        distance_km: f64,
        loss_db_per_km: f64,
        eta_d: f64,
        dark_count: f64,
        misalignment: f64,
    ) -> Result<Self> {
        if !(distance_km >= 0.0) || !(loss_db_per_km > 0.0) {
            return Err(Error::invalid(format!(
                "distance {distance_km} km / loss {loss_db_per_km} dB/km out of range"
            )));
        }
        let eta_ch = 10f64.powf(-loss_db_per_km * distance_km / 2.0 / 10.0);
        ChannelModel::new(eta_ch, eta_d, dark_count, misalignment)
    }

    pub fn validate(&self) -> Result<()> {
        let in_unit = |x: f64| x > 0.0 && x <= 1.0;
        if !in_unit(self.eta_ch) || !in_unit(self.eta_d) {
            return Err(Error::invalid(format!(
                "transmittances must lie in (0, 1]: eta_ch = {}, eta_d = {}",
                self.eta_ch, self.eta_d
            )));
        }
        if !(0.0..0.5).contains(&self.dark_count) {
            return Err(Error::invalid(format!("dark count {} outside [0, 0.5)", self.dark_count)));
        }
        if !(0.0..=1.0).contains(&self.misalignment) {
            return Err(Error::invalid(format!("misalignment {} outside [0, 1]", self.misalignment)));
        }
        Ok(())
    }

    pub fn eta_arm(&self) -> f64 {
        self.eta_ch * self.eta_d
    }

    pub fn eta_tot(&self) -> f64 {
        self.eta_ch * self.eta_ch * self.eta_d
    }
}

/// Click probability of a `k`-photon joint state.
pub fn yield_k(k: u32, ch: &ChannelModel) -> f64 {
    let survive = (-ch.eta_arm()).ln_1p() * f64::from(k);
    let y = -survive.exp_m1() + 2.0 * ch.dark_count * survive.exp();
    y.clamp(0.0, 1.0)
}

/// Gain with each side sending `mu_total / 2`.
pub fn gain_pm(mu_total: f64, ch: &ChannelModel) -> f64 {
    let x = ch.eta_arm() * mu_total;
    let g = -(-x).exp_m1() + 2.0 * ch.dark_count * (-x).exp();
    g.clamp(0.0, 1.0)
}

/// Bit error rate for a fixed fraction `leak` of the arriving intensity
/// landing in the wrong detector. `leak = sin²(φ_δ/2)` for a pure phase offset.
pub fn bit_error_with_leak(mu_total: f64, leak: f64, ch: &ChannelModel) -> Result<f64> {
    let q = gain_pm(mu_total, ch);
    if q <= 0.0 {
        return Err(Error::UndefinedErrorRate);
    }
    let x = ch.eta_arm() * mu_total;
    let e = (-x).exp() / q * (ch.dark_count + x * leak);
    Ok(e.clamp(0.0, 1.0))
}

/// Bit error rate at reference deviation `phi_delta`.
pub fn bit_error_pm(mu_total: f64, phi_delta: f64, ch: &ChannelModel) -> Result<f64> {
    if !phi_delta.is_finite() {
        return Err(Error::invalid("phase offset must be finite"));
    }
    let s = (phi_delta / 2.0).sin();
    bit_error_with_leak(mu_total, s * s, ch)
}

/// Error rate of the matched group with the channel's misalignment `e_d0`.
pub fn matched_group_error(mu_total: f64, ch: &ChannelModel) -> Result<f64> {
    bit_error_with_leak(mu_total, ch.misalignment, ch)
}

/// Misalignment assumed for one merged group in the asymptotic model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupMisalignment {
    pub group: usize,
    pub misalignment: f64,
}

/// Upper bound on the even-photon click fraction in the asymptotic limit.
pub fn even_fraction_asymptotic(mu_total: f64, ch: &ChannelModel) -> f64 {
    let q = gain_pm(mu_total, ch);
    if q <= 0.0 {
        return 1.0;
    }
    let odd = mu_total * (-mu_total).exp() * yield_k(1, ch) / q;
    (1.0 - odd).clamp(0.0, 1.0)
}

/// Asymptotic key rate per round of the phase-matching protocol at signal
/// intensity `mu_total`, summing the kept groups. Each merged group holds a
/// `2/D` share of the clicks.
pub fn key_rate_pm_at(
    mu_total: f64,
    slices: usize,
    f_ec: f64,
    ch: &ChannelModel,
    groups: &[GroupMisalignment],
) -> f64 {
    if groups.is_empty() || mu_total <= 0.0 {
        return 0.0;
    }
    let q = gain_pm(mu_total, ch);
    if q <= 0.0 {
        return 0.0;
    }
    let privacy = 1.0 - binary_entropy_unchecked(even_fraction_asymptotic(mu_total, ch));
    let share = 2.0 / slices as f64;
    groups
        .iter()
        .map(|g| {
            let e = bit_error_with_leak(mu_total, g.misalignment, ch).unwrap_or(0.5);
            let r = privacy - f_ec * binary_entropy_unchecked(e.min(0.5));
            share * q * r.max(0.0)
        })
        .sum()
}

pub fn key_rate_pm_asymptotic(params: &ProtocolParams, ch: &ChannelModel, groups: &[GroupMisalignment]) -> Result<f64> {
    if let Some(g) = groups.iter().find(|g| g.group >= params.slices / 2) {
        return Err(Error::invalid(format!("group {} outside 0..{}", g.group, params.slices / 2)));
    }
    Ok(key_rate_pm_at(params.intensities.signal, params.slices, params.f_ec, ch, groups))
}

fn check_transmittance(eta: f64) -> Result<()> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::invalid(format!("transmittance {eta} outside (0, 1)")));
    }
    Ok(())
}

/// Takeoka–Guha–Wilde bound `−log₂((1−η)/(1+η))`.
pub fn tgw_bound(eta_tot: f64) -> Result<f64> {
    check_transmittance(eta_tot)?;
    Ok(-((1.0 - eta_tot) / (1.0 + eta_tot)).log2())
}

/// Repeaterless (PLOB) bound `−log₂(1−η)`, the linear rate-transmittance bound.
pub fn plob_bound(eta_tot: f64) -> Result<f64> {
    check_transmittance(eta_tot)?;
    Ok(-(-eta_tot).ln_1p() / std::f64::consts::LN_2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{GroupSet, Intensities, SettingRatios};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn ch(eta_arm: f64, pd: f64) -> ChannelModel {
        ChannelModel::new(eta_arm, 1.0, pd, 0.0).unwrap()
    }

    fn factorial(k: u32) -> f64 {
        (1..=k).map(f64::from).product()
    }

    /// Independent route: Σ_k Poisson(μ, k)·Y_k.
    fn gain_by_poisson_sum(mu: f64, c: &ChannelModel) -> f64 {
        let mut total = 0.0;
        for k in 0..60u32 {
            let p = (-mu).exp() * mu.powi(k as i32) / factorial(k);
            total += p * yield_k(k, c);
            if k > 5 && p < 1e-18 {
                break;
            }
        }
        total
    }

    #[test]
    fn yield_examples() {
        let c = ch(0.3, 1e-3);
        assert!((yield_k(0, &c) - 2e-3).abs() < 1e-15);
        let c = ch(0.5, 0.0);
        assert_eq!(yield_k(1, &c), 0.5);
        assert!((yield_k(2, &c) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn gain_examples() {
        assert_eq!(gain_pm(0.0, &ch(0.1, 0.0)), 0.0);
        assert!((gain_pm(0.0, &ch(0.1, 2.29e-7)) - 4.58e-7).abs() < 1e-18);
        // mpmath: 1 − exp(−0.0716·0.02346) = 1.678326033e-3
        let g = gain_pm(0.0716, &ch(0.02346, 0.0));
        assert!((g - 1.678326033e-3).abs() < 1e-12, "{g}");
        assert!((g - gain_by_poisson_sum(0.0716, &ch(0.02346, 0.0))).abs() < 1e-12);
    }

    #[test]
    fn error_examples() {
        let c = ch(0.1, 0.0);
        assert_eq!(bit_error_pm(0.2, 0.0, &c).unwrap(), 0.0);
        // x = ημ = 0.01: x·e^{−x}/(1−e^{−x}) = 0.99500833 (mpmath)
        let e = bit_error_pm(0.1, PI, &c).unwrap();
        assert!((e - 0.9950083333).abs() < 1e-9, "{e}");
        assert!(matches!(bit_error_pm(0.0, 0.3, &c), Err(Error::UndefinedErrorRate)));

        let c = ChannelModel::new(0.1, 1.0, 1e-6, 0.053).unwrap();
        let x: f64 = 0.1 * 0.2;
        let expect = (1e-6 + x * 0.053) * (-x).exp() / gain_pm(0.2, &c);
        assert!((matched_group_error(0.2, &c).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn bound_examples() {
        assert!((tgw_bound(1.0 / 3.0).unwrap() - 1.0).abs() < 1e-12);
        assert!((tgw_bound(0.5).unwrap() - 1.584962500721156).abs() < 1e-12);
        let small = tgw_bound(1e-6).unwrap();
        let approx = 2e-6 / std::f64::consts::LN_2;
        assert!((small / approx - 1.0).abs() < 1e-3);
        assert!((plob_bound(0.5).unwrap() - 1.0).abs() < 1e-15);
        let sig3 = |x: f64| format!("{x:.2e}");
        assert_eq!(sig3(plob_bound(2.40e-3).unwrap()), "3.47e-3");
        assert_eq!(sig3(plob_bound(3.77e-7).unwrap()), "5.44e-7");
        assert!(plob_bound(0.0).is_err());
        assert!(plob_bound(1.0).is_err());
        assert!(tgw_bound(-0.1).is_err());
    }

    #[test]
    fn table_channel_consistency() {
        let c = ChannelModel::new(1.02e-1, 0.23, 2.29e-7, 0.0).unwrap();
        assert!((c.eta_tot() - 2.39e-3).abs() < 0.005e-3, "{}", c.eta_tot());
        assert!(c.eta_tot() <= c.eta_arm());
    }

    fn params_302() -> ProtocolParams {
        ProtocolParams {
            slices: 16,
            intensities: Intensities { signal: 0.0768, weak: 0.0384, vacuum: 0.0 },
            ratios: SettingRatios { signal: 0.85, weak: 0.12, vacuum: 0.03 },
            rounds: 20_000_133_132_000,
            f_ec: 1.1,
            n_alpha: 7.0,
            group_set: GroupSet::matched(),
        }
    }

    #[test]
    fn pm_rate_beats_linear_bound_at_302km() {
        let c = ChannelModel::new(1.29e-3, 0.23, 7.75e-8, DEFAULT_MISALIGNMENT).unwrap();
        let g = [GroupMisalignment { group: 0, misalignment: DEFAULT_MISALIGNMENT }];
        let r = key_rate_pm_asymptotic(&params_302(), &c, &g).unwrap();
        let bound = plob_bound(3.77e-7).unwrap();
        assert!(r > bound, "R = {r:e}, bound = {bound:e}");
        assert_eq!(key_rate_pm_asymptotic(&params_302(), &c, &[]).unwrap(), 0.0);
    }

    #[test]
    fn pm_rate_positive_for_clean_channel() {
        let c = ch(0.9, 0.0);
        let g = [GroupMisalignment { group: 0, misalignment: 0.0 }];
        assert!(key_rate_pm_at(0.1, 16, 1.1, &c, &g) > 0.0);
        let q = even_fraction_asymptotic(0.1, &c);
        assert!((0.0..=1.0).contains(&q));
    }

    proptest! {
        #[test]
        fn gain_matches_poisson_sum(mu in 0.0f64..2.0, eta in 1e-6f64..1.0, pd in 0.0f64..1e-3) {
            let c = ch(eta, pd);
            prop_assert!((gain_pm(mu, &c) - gain_by_poisson_sum(mu, &c)).abs() < 1e-10);
        }

        #[test]
        fn tgw_dominates_plob(eta in 1e-9f64..0.999) {
            prop_assert!(tgw_bound(eta).unwrap() >= plob_bound(eta).unwrap());
        }

        #[test]
        fn error_even_and_monotone(phi in 0.0f64..PI, dphi in 0.0f64..0.5, mu in 0.01f64..1.0, pd in 0.0f64..1e-4) {
            let c = ch(0.05, pd);
            let e = bit_error_pm(mu, phi, &c).unwrap();
            prop_assert!((e - bit_error_pm(mu, -phi, &c).unwrap()).abs() < 1e-14);
            let phi2 = (phi + dphi).min(PI);
            prop_assert!(bit_error_pm(mu, phi2, &c).unwrap() >= e - 1e-15);
            prop_assert!((0.0..=1.0).contains(&e));
        }

        #[test]
        fn rate_nonincreasing_in_misalignment(e1 in 0.0f64..0.2, de in 0.0f64..0.1, eta in 1e-5f64..0.5) {
            let c = ch(eta, 1e-7);
            let r = |e: f64| key_rate_pm_at(0.1, 16, 1.1, &c, &[GroupMisalignment { group: 0, misalignment: e }]);
            prop_assert!(r(e1) >= 0.0);
            prop_assert!(r(e1 + de) <= r(e1) + 1e-18);
        }
    }
}

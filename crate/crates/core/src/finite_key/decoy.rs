use serde::Serialize;

use super::chernoff::{chernoff_direct, chernoff_inverse_clamped, BoundedValue};
use crate::error::{Error, Result};
use crate::protocol::{GroupSet, ProtocolParams, Setting, TallyTable};

fn poisson(mu: f64, k: u32) -> f64 {
    if mu == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    let ln_fact: f64 = (1..=k).map(|i| f64::from(i).ln()).sum();
    (f64::from(k) * mu.ln() - mu - ln_fact).exp()
}

/// Lower bound on the single-photon yield from bounded gains of the three
/// settings (`mu`, `nu` are total intensities), clamped to `[0, 1]`.
///
/// Uses the weak-decoy lower end and the signal and vacuum upper ends.
pub fn y1_lower(signal: &BoundedValue, weak: &BoundedValue, vacuum: &BoundedValue, mu: f64, nu: f64) -> Result<f64> {
    let denom = mu * nu - nu * nu;
    if !(nu > 0.0 && denom > 0.0) {
        return Err(Error::InvalidIntensity(format!(
            "decoy bound needs 0 < nu < mu, got mu = {mu}, nu = {nu}"
        )));
    }
    let r = nu * nu / (mu * mu);
    let y = mu / denom * (weak.lower * nu.exp() - signal.upper * mu.exp() * r - (1.0 - r) * vacuum.upper);
    Ok(if y.is_nan() { 0.0 } else { y.clamp(0.0, 1.0) })
}

/// Expected number of rounds in which the joint state carries `k` photons and
/// both sides chose the same setting: `N Σ_a P^a(k) (r^a)²`.
pub fn expected_k_photon_sends(params: &ProtocolParams, k: u32) -> f64 {
    let n = params.rounds as f64;
    Setting::ALL
        .iter()
        .map(|&s| {
            let r = params.ratios.get(s);
            poisson(params.intensities.total(s), k) * r * r
        })
        .sum::<f64>()
        * n
}

/// Fraction of the expected single-photon clicks that fall on signal rounds
/// inside the group set: `P^s(1)(r^s)²(2|J|/D) / Σ_a P^a(1)(r^a)²`.
pub fn single_photon_group_fraction(params: &ProtocolParams, groups: &GroupSet) -> f64 {
    let weight = |s: Setting| {
        let r = params.ratios.get(s);
        poisson(params.intensities.total(s), 1) * r * r
    };
    let total: f64 = Setting::ALL.iter().map(|&s| weight(s)).sum();
    if total <= 0.0 {
        return 0.0;
    }
    weight(Setting::Signal) * (2.0 * groups.len() as f64 / params.slices as f64) / total
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SingleClickLower {
    /// `M̄₁^L = N₁^∞ Ȳ₁^{*L}`.
    pub all_settings: f64,
    pub group_fraction: f64,
    /// Expected single-photon signal clicks in the group set.
    pub expected: f64,
    /// Observed-domain bound; `None` when the expectation is zero.
    pub bound: Option<BoundedValue>,
    pub value: f64,
    pub epsilon: f64,
    pub degenerate: bool,
}

/// Observed-domain lower bound on single-photon signal clicks within `groups`.
pub fn m1_lower_in_group(y1l: f64, params: &ProtocolParams, groups: &GroupSet) -> Result<SingleClickLower> {
    if !(0.0..=1.0).contains(&y1l) {
        return Err(Error::invalid(format!("single-photon yield bound {y1l} outside [0, 1]")));
    }
    let all_settings = expected_k_photon_sends(params, 1) * y1l;
    let group_fraction = single_photon_group_fraction(params, groups);
    let expected = all_settings * group_fraction;
    if expected <= 0.0 {
        return Ok(SingleClickLower {
            all_settings,
            group_fraction,
            expected,
            bound: None,
            value: 0.0,
            epsilon: 0.0,
            degenerate: true,
        });
    }
    let b = chernoff_direct(expected, params.n_alpha)?;
    Ok(SingleClickLower {
        all_settings,
        group_fraction,
        expected,
        bound: Some(b),
        value: b.lower,
        epsilon: b.epsilon,
        degenerate: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SettingBounds {
    /// Bounds on the expected click count `M̄^a`.
    pub clicks: BoundedValue,
    /// Bounds on the gain `Q̄^a = M̄^a / N^a`.
    pub gain: BoundedValue,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecoyEstimate {
    pub group_set: GroupSet,
    pub signal: SettingBounds,
    pub weak: SettingBounds,
    pub vacuum: SettingBounds,
    pub y1_lower: f64,
    pub single_photon_sends: f64,
    pub m1: SingleClickLower,
    /// `M₁^{s(J),L}`.
    pub m1_lower: f64,
    /// Sum of every bound's failure probability.
    pub epsilon: f64,
}

fn setting_bounds(tally: &TallyTable, s: Setting, n_alpha: f64) -> Result<SettingBounds> {
    let st = tally.state(s);
    if st.sent == 0 {
        return Err(Error::dataset(format!("tally.{}.sent", s.name()), "no rounds sent with this setting"));
    }
    let clicks = chernoff_inverse_clamped(st.clicks as f64, n_alpha)?;
    Ok(SettingBounds {
        clicks,
        gain: clicks.scaled(st.sent as f64),
    })
}

/// Runs the decoy-state estimation on `tally` for the group set `groups`.
pub fn estimate_decoy(tally: &TallyTable, params: &ProtocolParams, groups: &GroupSet) -> Result<DecoyEstimate> {
    params.validate()?;
    if tally.slices != params.slices {
        return Err(Error::invalid(format!(
            "tally uses D = {}, parameters D = {}",
            tally.slices, params.slices
        )));
    }
    let signal = setting_bounds(tally, Setting::Signal, params.n_alpha)?;
    let weak = setting_bounds(tally, Setting::Weak, params.n_alpha)?;
    let vacuum = setting_bounds(tally, Setting::Vacuum, params.n_alpha)?;
    let y1 = y1_lower(
        &signal.gain,
        &weak.gain,
        &vacuum.gain,
        params.intensities.signal,
        params.intensities.weak,
    )?;
    let m1 = m1_lower_in_group(y1, params, groups)?;
    let epsilon = signal.clicks.epsilon + weak.clicks.epsilon + vacuum.clicks.epsilon + m1.epsilon;
    Ok(DecoyEstimate {
        group_set: groups.clone(),
        signal,
        weak,
        vacuum,
        y1_lower: y1,
        single_photon_sends: expected_k_photon_sends(params, 1),
        m1_lower: m1.value,
        m1,
        epsilon,
    })
}

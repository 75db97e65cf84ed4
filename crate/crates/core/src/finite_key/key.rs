use serde::Serialize;

use super::decoy::{estimate_decoy, DecoyEstimate};
use crate::channel::plob_bound;
use crate::error::{Error, Result};
use crate::protocol::{binary_entropy_unchecked, GroupSet, ProtocolParams, TallyTable};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupKey {
    pub group: usize,
    pub clicks: u64,
    pub errors: u64,
    pub error_rate: f64,
    /// `M^{(j)}[1 − H(q_even)]`.
    pub privacy_term: f64,
    /// `f·M^{(j)}·H(E^{(j)})`.
    pub correction_cost: f64,
    pub key: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KeyReport {
    pub group_set: GroupSet,
    pub groups: Vec<GroupKey>,
    /// Signal clicks in the group set, `M^{(J)}`.
    pub clicks: u64,
    pub q_even_upper: f64,
    pub key_length: f64,
    pub rounds: u64,
    pub key_rate: f64,
    pub eta_tot: Option<f64>,
    pub plob_bound: Option<f64>,
    pub ratio_to_plob: Option<f64>,
    /// Key length relative to the matched group alone.
    pub expansion_factor: Option<f64>,
    pub epsilon: f64,
    pub decoy: DecoyEstimate,
}

/// Key length for the group set of `estimate`.
///
/// `q_even = 1 − M₁^{s(J),L}/M^{(J)}` is shared by every group; each group
/// contributes `M^{(j)}[1 − H(q_even)] − f M^{(j)} H(E^{(j)})` and the total is
/// clamped at zero.
pub fn key_length(
    tally: &TallyTable,
    estimate: &DecoyEstimate,
    params: &ProtocolParams,
    eta_tot: Option<f64>,
) -> Result<KeyReport> {
    let set = &estimate.group_set;
    let mut rows = Vec::with_capacity(set.len());
    for j in set.iter() {
        let g = tally.signal.group(j).ok_or_else(|| {
            Error::dataset(
                format!("tally.signal.groups[{j}]"),
                format!("group {j} is in the group set but has no counts"),
            )
        })?;
        rows.push((j, *g));
    }
    let clicks: u64 = rows.iter().map(|(_, g)| g.clicks).sum();
    let q = if clicks == 0 {
        1.0
    } else {
        (1.0 - estimate.m1_lower / clicks as f64).clamp(0.0, 1.0)
    };
    // entropies saturate at ½ so the key never grows with a looser bound
    let privacy = 1.0 - binary_entropy_unchecked(q.min(0.5));
    let groups: Vec<GroupKey> = rows
        .into_iter()
        .map(|(group, g)| {
            let m = g.clicks as f64;
            let error_rate = if g.clicks == 0 { 0.0 } else { g.errors as f64 / m };
            let privacy_term = m * privacy;
            let correction_cost = params.f_ec * m * binary_entropy_unchecked(error_rate.min(0.5));
            GroupKey {
                group,
                clicks: g.clicks,
                errors: g.errors,
                error_rate,
                privacy_term,
                correction_cost,
                key: privacy_term - correction_cost,
            }
        })
        .collect();
    let key = groups.iter().map(|g| g.key).sum::<f64>().max(0.0);
    let plob = eta_tot.map(plob_bound).transpose()?;
    let key_rate = key / params.rounds as f64;
    Ok(KeyReport {
        group_set: set.clone(),
        groups,
        clicks,
        q_even_upper: q,
        key_length: key,
        rounds: params.rounds,
        key_rate,
        eta_tot,
        plob_bound: plob,
        ratio_to_plob: plob.map(|b| key_rate / b),
        expansion_factor: None,
        epsilon: estimate.epsilon,
        decoy: estimate.clone(),
    })
}

fn report_for(tally: &TallyTable, params: &ProtocolParams, set: &GroupSet, eta_tot: Option<f64>) -> Result<KeyReport> {
    let est = estimate_decoy(tally, params, set)?;
    key_length(tally, &est, params, eta_tot)
}

/// Full analysis for the parameters' own group set, with the expansion
/// factor against the matched group.
pub fn analyze(tally: &TallyTable, params: &ProtocolParams, eta_tot: Option<f64>) -> Result<KeyReport> {
    let mut report = report_for(tally, params, &params.group_set, eta_tot)?;
    let aligned = if params.group_set == GroupSet::matched() {
        report.key_length
    } else {
        report_for(tally, params, &GroupSet::matched(), None)?.key_length
    };
    report.expansion_factor = (aligned > 0.0).then(|| report.key_length / aligned);
    Ok(report)
}

/// Picks the group set with the largest key among nested prefixes of the
/// covered groups ordered by signal error rate. Candidates in which some
/// group would contribute negatively are skipped.
pub fn optimize_group_set(tally: &TallyTable, params: &ProtocolParams, eta_tot: Option<f64>) -> Result<KeyReport> {
    let covered = tally.covered_groups().min(params.groups());
    if covered == 0 {
        return Err(Error::dataset("tally.signal.groups", "no group counts to choose from"));
    }
    let rate = |j: usize| {
        let g = tally.signal.groups[j];
        if g.clicks == 0 {
            f64::INFINITY
        } else {
            g.errors as f64 / g.clicks as f64
        }
    };
    let mut order: Vec<usize> = (0..covered).collect();
    order.sort_by(|&a, &b| rate(a).total_cmp(&rate(b)).then(a.cmp(&b)));

    let mut best: Option<KeyReport> = None;
    let mut fallback: Option<KeyReport> = None;
    for n in 1..=covered {
        let set = GroupSet::new(order[..n].to_vec());
        let report = report_for(tally, params, &set, eta_tot)?;
        if fallback.is_none() {
            fallback = Some(report.clone());
        }
        if report.groups.iter().any(|g| g.key < 0.0) {
            continue;
        }
        if best.as_ref().is_none_or(|b| report.key_length > b.key_length) {
            best = Some(report);
        }
    }
    let mut report = best.or(fallback).ok_or_else(|| Error::Internal("no candidate group set".into()))?;
    let aligned = report_for(tally, params, &GroupSet::matched(), None)?.key_length;
    report.expansion_factor = (aligned > 0.0).then(|| report.key_length / aligned);
    Ok(report)
}

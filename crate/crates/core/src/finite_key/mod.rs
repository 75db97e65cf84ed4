//! Finite-size decoy-state analysis: Chernoff bounds in both directions, the
//! single-photon click estimate and the group-set key length.

mod chernoff;
mod decoy;
mod key;

pub use chernoff::{chernoff_direct, chernoff_inverse, chernoff_inverse_clamped, g2, BoundedValue};
pub use decoy::{
    estimate_decoy, expected_k_photon_sends, m1_lower_in_group, single_photon_group_fraction, y1_lower,
    DecoyEstimate, SettingBounds, SingleClickLower,
};
pub use key::{analyze, key_length, optimize_group_set, GroupKey, KeyReport};

//! Monte-Carlo simulation of the optical rounds: pulse-train layout, phase
//! drift, interference at the measurement site, reference-based phase
//! estimation and tally accumulation.
//!
//! Each user's random phase takes the center of the chosen slice, so the
//! relative phase of a round is `2π(j_a − j_b)/D + π(κ_a ⊕ κ_b) + φ_δ`.

mod detect;
mod drift;
mod estimate;
mod layout;
mod run;

pub use detect::{detect_round, Detection, PortMeans};
pub use drift::{DriftConfig, DriftProcess};
pub use estimate::{
    estimate_phase_slice, sample_reference_counts, sample_reference_detections, PhaseEstimate, ReferenceCounts,
};
pub use layout::{Region, TrainLayout};
pub use run::{
    run_protocol, run_protocol_with_threads, write_train_records, Diagnostics, GroundTruth, PhotonCounts,
    ReferenceMode, SimConfig, SimOutput, TrainRecord, PHOTON_BUCKETS,
};

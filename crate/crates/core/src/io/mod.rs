//! Dataset schema and fixtures, the published slice matrix, and the
//! reproduction of published key lengths.
//!
//! Dataset JSON (`schema_version` 1):
//!
//! ```text
//! { schema_version, label, distance_km,
//!   channel:     { channel_loss, detector_efficiency, total_loss, dark_count_per_pulse },
//!   intensities: { signal_single_side, decoy_single_side, vacuum_single_side },
//!   tally:       { slices, rounds, mixed_sends,
//!                  signal|weak|vacuum: { sent, clicks, groups: [{ clicks, errors }, ...] } },
//!   analysis:    { f_ec, n_alpha },
//!   published:   { plob_bound, aligned_qber_percent, key_length, aligned_key_length,
//!                  expansion_factor, failure_probability, key_rate_bps } }
//! ```

mod dataset;
mod reproduce;
mod slices;

pub use dataset::{
    bundled_dataset, bundled_dataset_names, compute_observables, load_dataset, parse_dataset, resolve_dataset,
    AnalysisConstants, DatasetChannel, DatasetIntensities, ExperimentDataset, Observables, PublishedValues,
    DATA_DIR_ENV, SCHEMA_VERSION,
};
pub use reproduce::{reproduce, Comparison, Reproduction, TallyFile, CLOCK_RATE_HZ};
pub use slices::SliceCountMatrix;

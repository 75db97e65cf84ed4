use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::plob_bound;
use crate::error::{Error, Result};
use crate::protocol::{GroupSet, Intensities, ProtocolParams, Setting, SettingRatios, TallyTable};

pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable naming the directory searched for dataset files.
pub const DATA_DIR_ENV: &str = "PMQKD_DATA_DIR";

const BUNDLED: [(&str, &str); 5] = [
    ("101km", include_str!("../../data/101km.json")),
    ("201km", include_str!("../../data/201km.json")),
    ("302km", include_str!("../../data/302km.json")),
    ("402km", include_str!("../../data/402km.json")),
    ("502km", include_str!("../../data/502km.json")),
];

pub const BUNDLED_SLICE_MATRIX: &str = include_str!("../../data/101km_slices.csv");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetChannel {
    /// Single-side channel transmittance.
    pub channel_loss: f64,
    pub detector_efficiency: f64,
    /// End-to-end transmittance as published.
    pub total_loss: f64,
    pub dark_count_per_pulse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetIntensities {
    pub signal_single_side: f64,
    pub decoy_single_side: f64,
    #[serde(default)]
    pub vacuum_single_side: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConstants {
    pub f_ec: f64,
    pub n_alpha: f64,
}

/// Values printed alongside the experiment, kept for comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PublishedValues {
    pub plob_bound: f64,
    pub aligned_qber_percent: f64,
    pub key_length: u64,
    pub aligned_key_length: u64,
    pub expansion_factor: f64,
    pub failure_probability: f64,
    pub key_rate_bps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentDataset {
    pub schema_version: u32,
    pub label: String,
    pub distance_km: f64,
    pub channel: DatasetChannel,
    pub intensities: DatasetIntensities,
    pub tally: TallyTable,
    pub analysis: AnalysisConstants,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub published: Option<PublishedValues>,
}

impl ExperimentDataset {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::dataset(
                "schema_version",
                format!("version {} is not supported (expected {SCHEMA_VERSION})", self.schema_version),
            ));
        }
        let c = &self.channel;
        for (field, v) in [
            ("channel.channel_loss", c.channel_loss),
            ("channel.detector_efficiency", c.detector_efficiency),
            ("channel.total_loss", c.total_loss),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::dataset(field, format!("{v} outside (0, 1]")));
            }
        }
        if !(0.0..0.5).contains(&c.dark_count_per_pulse) {
            return Err(Error::dataset("channel.dark_count_per_pulse", "outside [0, 0.5)"));
        }
        let i = &self.intensities;
        if !(0.0 <= i.vacuum_single_side && i.vacuum_single_side < i.decoy_single_side && i.decoy_single_side < i.signal_single_side) {
            return Err(Error::dataset("intensities", "need 0 <= vacuum < decoy < signal"));
        }
        if !(self.analysis.f_ec >= 1.0) {
            return Err(Error::dataset("analysis.f_ec", "must be at least 1"));
        }
        if !(self.analysis.n_alpha > 0.0) {
            return Err(Error::dataset("analysis.n_alpha", "must be positive"));
        }
        self.tally.validate()
    }

    /// Protocol parameters implied by the dataset. Per-side setting ratios are
    /// `√(N^a/N)`, renormalized to sum to one.
    pub fn protocol_params(&self, group_set: GroupSet) -> Result<ProtocolParams> {
        let n = self.tally.rounds as f64;
        let raw = Setting::ALL.map(|s| (self.tally.state(s).sent as f64 / n).sqrt());
        let sum: f64 = raw.iter().sum();
        if !(sum > 0.0) {
            return Err(Error::dataset("tally", "no rounds sent"));
        }
        let p = ProtocolParams {
            slices: self.tally.slices,
            intensities: Intensities {
                signal: 2.0 * self.intensities.signal_single_side,
                weak: 2.0 * self.intensities.decoy_single_side,
                vacuum: 2.0 * self.intensities.vacuum_single_side,
            },
            ratios: SettingRatios {
                signal: raw[0] / sum,
                weak: raw[1] / sum,
                vacuum: 1.0 - raw[0] / sum - raw[1] / sum,
            },
            rounds: self.tally.rounds,
            f_ec: self.analysis.f_ec,
            n_alpha: self.analysis.n_alpha,
            group_set,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Parses and validates a dataset from JSON text.
pub fn parse_dataset(text: &str) -> Result<ExperimentDataset> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    match value.get("schema_version").and_then(|v| v.as_u64()) {
        Some(v) if v == u64::from(SCHEMA_VERSION) => {}
        Some(v) => {
            return Err(Error::dataset(
                "schema_version",
                format!("version {v} is not supported (expected {SCHEMA_VERSION})"),
            ))
        }
        None => return Err(Error::dataset("schema_version", "missing or not an integer")),
    }
    // parse the text again so errors carry line and column
    let ds: ExperimentDataset = serde_json::from_str(text)?;
    ds.validate()?;
    Ok(ds)
}

pub fn load_dataset(path: &Path) -> Result<ExperimentDataset> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        context: format!("reading {}", path.display()),
        source,
    })?;
    parse_dataset(&text)
}

pub fn bundled_dataset_names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(n, _)| *n)
}

pub fn bundled_dataset(name: &str) -> Option<ExperimentDataset> {
    let key = name.strip_suffix(".json").unwrap_or(name);
    BUNDLED
        .iter()
        .find(|(n, _)| *n == key)
        .map(|(_, text)| parse_dataset(text).expect("bundled datasets are valid"))
}

/// Resolves a dataset argument: an existing path, then a file in the data
/// directory named by [`DATA_DIR_ENV`], then a bundled dataset by label.
pub fn resolve_dataset(arg: &str) -> Result<ExperimentDataset> {
    let direct = PathBuf::from(arg);
    if direct.is_file() {
        return load_dataset(&direct);
    }
    if let Ok(dir) = std::env::var(DATA_DIR_ENV) {
        let candidate = Path::new(&dir).join(arg);
        if candidate.is_file() {
            return load_dataset(&candidate);
        }
    }
    let file_name = direct.file_name().and_then(|f| f.to_str()).unwrap_or(arg);
    bundled_dataset(file_name).ok_or_else(|| {
        Error::invalid(format!(
            "dataset {arg} not found (bundled: {})",
            bundled_dataset_names().collect::<Vec<_>>().join(", ")
        ))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Observables {
    pub label: String,
    /// Signal error rate per published group; `None` when a group is empty.
    pub qber: Vec<Option<f64>>,
    pub gain_signal: f64,
    pub gain_weak: f64,
    pub gain_vacuum: f64,
    pub eta_tot: f64,
    /// `channel_loss² · detector_efficiency`, for comparison with `eta_tot`.
    pub eta_tot_from_channel: f64,
    pub plob_bound: f64,
}

pub fn compute_observables(ds: &ExperimentDataset) -> Result<Observables> {
    let t = &ds.tally;
    let gain = |s: Setting| {
        let st = t.state(s);
        if st.sent == 0 {
            0.0
        } else {
            st.clicks as f64 / st.sent as f64
        }
    };
    let qber = t
        .signal
        .groups
        .iter()
        .map(|g| (g.clicks > 0).then(|| g.errors as f64 / g.clicks as f64))
        .collect();
    Ok(Observables {
        label: ds.label.clone(),
        qber,
        gain_signal: gain(Setting::Signal),
        gain_weak: gain(Setting::Weak),
        gain_vacuum: gain(Setting::Vacuum),
        eta_tot: ds.channel.total_loss,
        eta_tot_from_channel: ds.channel.channel_loss.powi(2) * ds.channel.detector_efficiency,
        plob_bound: plob_bound(ds.channel.total_loss)?,
    })
}

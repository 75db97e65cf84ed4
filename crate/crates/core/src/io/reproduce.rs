use std::fmt;

use serde::{Deserialize, Serialize};

use super::dataset::{compute_observables, ExperimentDataset, Observables, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::finite_key::{analyze, optimize_group_set, KeyReport};
use crate::protocol::{GroupSet, TallyTable};
use crate::sim::{Diagnostics, GroundTruth};

/// Clock rate used for the optional bits-per-second conversion.
pub const CLOCK_RATE_HZ: f64 = 312.5e6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub quantity: String,
    pub computed: f64,
    pub published: Option<f64>,
    pub relative_deviation: Option<f64>,
}

impl Comparison {
    fn new(quantity: &str, computed: f64, published: Option<f64>) -> Self {
        let relative_deviation = published.and_then(|p| (p != 0.0).then(|| (computed - p) / p));
        Comparison {
            quantity: quantity.to_string(),
            computed,
            published,
            relative_deviation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reproduction {
    pub observables: Observables,
    pub report: KeyReport,
    /// Key length of the matched group alone.
    pub aligned_key_length: f64,
    pub comparisons: Vec<Comparison>,
}

impl Reproduction {
    pub fn comparison(&self, quantity: &str) -> Option<&Comparison> {
        self.comparisons.iter().find(|c| c.quantity == quantity)
    }
}

/// Runs the analyzer on a dataset and lines the results up against the
/// published values. `duty` enables the bits-per-second row
/// (`R · clock · duty`).
pub fn reproduce(ds: &ExperimentDataset, duty: Option<f64>) -> Result<Reproduction> {
    if let Some(d) = duty {
        if !(d > 0.0 && d <= 1.0) {
            return Err(Error::invalid(format!("duty factor {d} outside (0, 1]")));
        }
    }
    let observables = compute_observables(ds)?;
    let eta = Some(ds.channel.total_loss);
    let params = ds.protocol_params(GroupSet::matched())?;
    let aligned = analyze(&ds.tally, &params, eta)?;
    let report = optimize_group_set(&ds.tally, &params, eta)?;
    let pubv = ds.published.as_ref();
    let n = ds.tally.rounds as f64;
    let mut comparisons = vec![
        Comparison::new("plob_bound", observables.plob_bound, pubv.map(|p| p.plob_bound)),
        Comparison::new(
            "aligned_qber_percent",
            100.0 * observables.qber.first().copied().flatten().unwrap_or(f64::NAN),
            pubv.map(|p| p.aligned_qber_percent),
        ),
        Comparison::new("key_length", report.key_length, pubv.map(|p| p.key_length as f64)),
        Comparison::new("aligned_key_length", aligned.key_length, pubv.map(|p| p.aligned_key_length as f64)),
        Comparison::new(
            "expansion_factor",
            report.expansion_factor.unwrap_or(f64::NAN),
            pubv.map(|p| p.expansion_factor),
        ),
        Comparison::new("failure_probability", report.epsilon, pubv.map(|p| p.failure_probability)),
        Comparison::new("key_rate", report.key_rate, pubv.map(|p| p.key_length as f64 / n)),
        Comparison::new(
            "ratio_to_plob",
            report.ratio_to_plob.unwrap_or(f64::NAN),
            pubv.map(|p| p.key_length as f64 / n / observables.plob_bound),
        ),
    ];
    if let Some(d) = duty {
        comparisons.push(Comparison::new(
            "key_rate_bps",
            report.key_rate * CLOCK_RATE_HZ * d,
            pubv.map(|p| p.key_rate_bps),
        ));
    }
    Ok(Reproduction {
        observables,
        aligned_key_length: aligned.key_length,
        report,
        comparisons,
    })
}

impl fmt::Display for Reproduction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "dataset {}", self.observables.label)?;
        for (j, q) in self.observables.qber.iter().enumerate() {
            match q {
                Some(q) => writeln!(f, "  QBER group {j}: {:.2}%", 100.0 * q)?,
                None => writeln!(f, "  QBER group {j}: undefined (no clicks)")?,
            }
        }
        writeln!(f, "  group set: {:?}", self.report.group_set.as_slice())?;
        writeln!(f, "  {:<22} {:>14} {:>14} {:>10}", "quantity", "computed", "published", "deviation")?;
        for c in &self.comparisons {
            let p = c.published.map(|p| format!("{p:.4e}")).unwrap_or_else(|| "-".into());
            let d = c
                .relative_deviation
                .map(|d| format!("{:+.1}%", 100.0 * d))
                .unwrap_or_else(|| "-".into());
            writeln!(f, "  {:<22} {:>14.4e} {:>14} {:>10}", c.quantity, c.computed, p, d)?;
        }
        Ok(())
    }
}

/// Output of a simulation run as written to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TallyFile {
    pub schema_version: u32,
    pub seed: u64,
    pub tally: TallyTable,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<GroundTruth>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<Diagnostics>,
}

impl TallyFile {
    pub fn parse(text: &str) -> Result<Self> {
        let t: TallyFile = serde_json::from_str(text)?;
        if t.schema_version != SCHEMA_VERSION {
            return Err(Error::dataset(
                "schema_version",
                format!("version {} is not supported (expected {SCHEMA_VERSION})", t.schema_version),
            ));
        }
        t.tally.validate()?;
        Ok(t)
    }
}

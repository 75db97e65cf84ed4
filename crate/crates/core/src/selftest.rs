//! Quick invariant checks behind `pmqkd selftest`.

use crate::channel::{gain_pm, plob_bound, tgw_bound, yield_k, ChannelModel};
use crate::finite_key::{chernoff_direct, chernoff_inverse};
use crate::io::{bundled_dataset, bundled_dataset_names, compute_observables, SliceCountMatrix};
use crate::protocol::{binary_entropy, sift, slice_center, slice_of_phase, Click, GroupSet, Intensities, ProtocolParams, SettingRatios};
use crate::sim::{estimate_phase_slice, run_protocol, DriftConfig, ReferenceCounts, ReferenceMode, SimConfig, TrainLayout};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: impl Into<String>) -> Check {
    Check {
        name,
        passed,
        detail: detail.into(),
    }
}

fn slices() -> Check {
    let ok = (0..16).all(|j| slice_of_phase(slice_center(j, 16), 16).ok() == Some(j))
        && (0..16).all(|k| {
            sift((5 + k) % 16, (3 + k) % 16, 14, Click::Left, 16).ok().map(|s| s.group) == Some(0)
        });
    check("slice arithmetic", ok, "centers map to their slice; sifting depends on j_a - j_b only")
}

fn entropy() -> Check {
    let ok = (1..50).all(|i| {
        let x = i as f64 / 100.0;
        let (a, b) = (binary_entropy(x).unwrap(), binary_entropy(1.0 - x).unwrap());
        (a - b).abs() < 1e-12 && binary_entropy(x + 0.01).unwrap() > a
    });
    check("binary entropy", ok, "symmetric and increasing on [0, 1/2]")
}

fn gain() -> Check {
    let ch = ChannelModel::new(0.05, 1.0, 1e-5, 0.0).unwrap();
    let mut worst: f64 = 0.0;
    for mu in [0.01, 0.1, 0.5, 1.5] {
        let mut p = (-mu as f64).exp();
        let mut sum = 0.0;
        for k in 0..80u32 {
            sum += p * yield_k(k, &ch);
            p *= mu / f64::from(k + 1);
        }
        worst = worst.max((sum - gain_pm(mu, &ch)).abs());
    }
    check("gain vs photon-number sum", worst < 1e-10, format!("max deviation {worst:.2e}"))
}

fn bounds() -> Check {
    let ok = [1e-9, 1e-5, 0.01, 0.3, 0.9].iter().all(|&e| tgw_bound(e).unwrap() >= plob_bound(e).unwrap());
    let p = plob_bound(3.77e-7).unwrap();
    check(
        "repeaterless bounds",
        ok && format!("{p:.2e}") == "5.44e-7",
        format!("PLOB(3.77e-7) = {p:.3e}; TGW >= PLOB"),
    )
}

fn chernoff() -> Check {
    let i = chernoff_inverse(1e6, 7.0).unwrap();
    let d = chernoff_direct(1e6, 7.0).unwrap();
    let ok = i.lower == 993_000.0 && (1e-11..1e-10).contains(&i.epsilon) && (1e-11..1e-10).contains(&d.epsilon);
    check("chernoff bounds", ok, format!("inverse eps {:.3e}, direct eps {:.3e}", i.epsilon, d.epsilon))
}

fn datasets() -> Check {
    let mut detail = Vec::new();
    let mut ok = true;
    for name in bundled_dataset_names() {
        let ds = bundled_dataset(name).unwrap();
        let o = compute_observables(&ds).unwrap();
        let computed = format!("{:.2}", 100.0 * o.qber[0].unwrap_or(f64::NAN));
        let published = format!("{:.2}", ds.published.as_ref().map(|p| p.aligned_qber_percent).unwrap_or(f64::NAN));
        ok &= computed == published;
        detail.push(format!("{name} {computed}%"));
    }
    let m = SliceCountMatrix::bundled();
    let signal = bundled_dataset("101km").unwrap().tally.signal.clicks;
    ok &= m.total() == signal;
    check("bundled datasets", ok, detail.join(", "))
}

fn estimator() -> Check {
    let e = estimate_phase_slice(
        ReferenceCounts {
            constructive_0: 750,
            destructive_0: 250,
            constructive_q: 67,
            destructive_q: 933,
        },
        16,
    );
    let ok = e.map(|e| e.slice == 3).unwrap_or(false);
    check("phase estimator", ok, "(750, 250, 67, 933) -> slice 3")
}

fn simulation() -> Check {
    let cfg = SimConfig {
        protocol: ProtocolParams {
            slices: 16,
            intensities: Intensities { signal: 0.2, weak: 0.1, vacuum: 0.0 },
            ratios: SettingRatios { signal: 1.0, weak: 0.0, vacuum: 0.0 },
            rounds: 1,
            f_ec: 1.1,
            n_alpha: 7.0,
            group_set: GroupSet::matched(),
        },
        channel: ChannelModel::new(0.1, 1.0, 1e-6, 0.0).unwrap(),
        drift: DriftConfig { rate_rad_per_ms: 0.0, initial_phase: 0.0 },
        layout: TrainLayout::default(),
        reference: ReferenceMode::Exact,
    };
    let Ok(out) = run_protocol(&cfg, 1000, 1, false) else {
        return check("simulated gain", false, "simulation failed");
    };
    let n = out.tally.signal.sent as f64;
    let q = gain_pm(0.2, &cfg.channel);
    let emp = out.tally.signal.clicks as f64 / n;
    let z = (emp - q) / (q * (1.0 - q) / n).sqrt();
    check("simulated gain", z.abs() < 5.0 && out.tally.validate().is_ok(), format!("z = {z:.2}"))
}

pub fn run() -> Vec<Check> {
    vec![slices(), entropy(), gain(), bounds(), chernoff(), datasets(), estimator(), simulation()]
}

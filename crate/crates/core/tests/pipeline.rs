use pmqkd::channel::{plob_bound, yield_k, ChannelModel};
use pmqkd::finite_key::{analyze, optimize_group_set};
use pmqkd::protocol::{GroupSet, Intensities, ProtocolParams, SettingRatios};
use pmqkd::sim::{run_protocol, DriftConfig, ReferenceMode, SimConfig, TrainLayout};

fn config(eta_arm: f64) -> SimConfig {
    SimConfig {
        protocol: ProtocolParams {
            slices: 16,
            intensities: Intensities { signal: 0.1, weak: 0.03, vacuum: 0.0 },
            ratios: SettingRatios { signal: 0.6, weak: 0.3, vacuum: 0.1 },
            rounds: 1,
            f_ec: 1.1,
            n_alpha: 7.0,
            group_set: GroupSet::matched(),
        },
        channel: ChannelModel::new(eta_arm, 1.0, 1e-4, 0.02).unwrap(),
        drift: DriftConfig::default(),
        layout: TrainLayout::default(),
        reference: ReferenceMode::Estimated { window_trains: 2 },
    }
}

#[test]
fn simulated_key_is_sound_and_positive() {
    let mut cfg = config(0.3);
    let out = run_protocol(&cfg, cfg.trains_for_rounds(50_000_000), 21, false).unwrap();
    cfg.protocol.rounds = out.tally.rounds;
    let eta = cfg.channel.eta_tot();
    let report = analyze(&out.tally, &cfg.protocol, Some(eta)).unwrap();
    let truth = out.truth.single_photon_clicks_in(report.group_set.iter()) as f64;
    let m1 = report.decoy.m1_lower;
    assert!(m1 <= truth, "{m1} > {truth}");
    assert!(m1 >= 0.7 * truth, "{m1} vs {truth}");
    assert!(report.decoy.y1_lower <= yield_k(1, &cfg.channel));
    assert!(report.key_length > 0.0, "{}", serde_json::to_string_pretty(&report).unwrap());
    assert!(report.epsilon > 0.0 && report.epsilon < 1e-6, "{}", report.epsilon);
    let bound = plob_bound(eta).unwrap();
    assert!((report.ratio_to_plob.unwrap() - report.key_rate / bound).abs() < 1e-12);

    let best = optimize_group_set(&out.tally, &cfg.protocol, Some(eta)).unwrap();
    assert!(best.key_length >= report.key_length);
    assert!(best.group_set.contains(0));
}

#[test]
fn key_vanishes_when_the_channel_is_too_lossy() {
    let mut cfg = config(1e-4);
    let out = run_protocol(&cfg, cfg.trains_for_rounds(2_000_000), 22, false).unwrap();
    cfg.protocol.rounds = out.tally.rounds;
    match analyze(&out.tally, &cfg.protocol, None) {
        Ok(r) => assert_eq!(r.key_length, 0.0),
        Err(e) => assert!(e.is_validation(), "{e}"),
    }
}

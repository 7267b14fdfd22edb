use std::time::Duration;

use mcu::net::NetConditions;
use mcu::recorder::{inspect_recording, read_recording_file};
use mcu::scenario::{run_scenario, ReplaySource, ScenarioConfig, ScenarioError, StatsReport};
use mcu_core::conference::Mode;
use proptest::prelude::*;

fn cfg(clients: usize, mode: Mode, secs: f64) -> ScenarioConfig {
    ScenarioConfig {
        clients,
        mode,
        duration: Duration::from_secs_f64(secs),
        ..ScenarioConfig::default()
    }
}

fn run(c: &ScenarioConfig) -> StatsReport {
    run_scenario(c).expect("scenario runs")
}

#[test]
fn lossless_forward_delivers_everything() {
    let r = run(&cfg(3, Mode::Forward, 2.0));
    assert!(r.passed(), "{:?}", r.violations);
    assert!(r.checks.payload_fidelity.applicable && r.checks.payload_fidelity.passed);
    for p in &r.participants {
        let c = p.client.as_ref().unwrap();
        assert_eq!(c.streams_in, 4);
        assert_eq!(c.losses_declared, 0);
        // 1.8 s of media: 90 audio frames and 18 video frames per peer.
        assert_eq!(c.frames_received, 2 * (90 + 18));
    }
}

#[test]
fn single_client_hears_nothing() {
    let r = run(&cfg(1, Mode::Forward, 1.0));
    assert!(r.passed(), "{:?}", r.violations);
    assert_eq!(
        r.participants[0].client.as_ref().unwrap().packets_received,
        0
    );
}

#[test]
fn mix_sends_two_streams() {
    let r = run(&cfg(4, Mode::Mix, 1.5));
    assert!(r.passed(), "{:?}", r.violations);
    for p in &r.participants {
        assert_eq!(p.client.as_ref().unwrap().streams_in, 2);
        assert_eq!(p.mcu.as_ref().unwrap().streams_out, 2);
    }
}

#[test]
fn loss_markers_match_drops() {
    let mut c = cfg(3, Mode::Forward, 2.0);
    c.conditions = NetConditions {
        loss_prob: 0.05,
        reorder_prob: 0.2,
        seed: 11,
        ..NetConditions::default()
    };
    let r = run(&c);
    assert!(r.passed(), "{:?}", r.violations);
    let l = &r.checks.loss_accounting;
    assert!(l.markers > 0);
    assert_eq!(l.markers, l.expected);
    assert!(!r.checks.payload_fidelity.applicable);
}

#[test]
fn same_seed_same_report_bytes() {
    let mut c = cfg(3, Mode::Mix, 1.5);
    c.conditions = NetConditions {
        loss_prob: 0.03,
        reorder_prob: 0.1,
        jitter: Duration::from_millis(4),
        seed: 5,
        ..NetConditions::default()
    };
    let a = run(&c).to_json();
    assert_eq!(a, run(&c).to_json());
    c.conditions.seed = 6;
    assert_ne!(a, run(&c).to_json());
}

#[test]
fn halving_the_cap_downgrades() {
    let mut c = cfg(2, Mode::Mix, 5.0);
    c.screen_width = 1280;
    c.conditions.bandwidth_cap = Some(1_600_000);
    c.bandwidth_halve_at = Some(Duration::from_secs(2));
    let r = run(&c);
    assert!(r.passed(), "{:?}", r.violations);
    assert!(r.checks.adaptation.applicable && r.checks.adaptation.passed);
    for id in ["client-0", "client-1"] {
        let s = r
            .profile_switches
            .iter()
            .find(|s| s.participant == id)
            .unwrap();
        assert_eq!((s.from.as_str(), s.to.as_str()), ("HIGH", "MID"));
        assert!(s.time_s > 2.0 && s.time_s <= 4.0, "{}", s.time_s);
    }
}

#[test]
fn record_then_inspect_matches_sent_frames() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.mcur");
    let mut c = cfg(2, Mode::Mix, 1.0);
    c.record = Some(path.clone());
    let r = run(&c);
    assert!(r.passed(), "{:?}", r.violations);
    assert_eq!(r.recording.as_deref(), Some(path.to_str().unwrap()));
    let summary = inspect_recording(&path).unwrap();
    assert!(summary.streams.iter().all(|s| s.monotonic));
    for p in &r.participants {
        for sent in &p.sent_streams {
            let rec = summary
                .streams
                .iter()
                .find(|s| s.stream_id == sent.ssrc)
                .unwrap();
            assert!(!rec.composite);
            assert_eq!(rec.payload_digest, sent.multiset_digest);
        }
    }
    // Mix rooms also record their composites.
    assert!(summary.streams.iter().any(|s| s.composite));
}

#[test]
fn replay_joins_as_a_participant() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.mcur");
    let mut c = cfg(2, Mode::Forward, 1.0);
    c.record = Some(path.clone());
    run(&c);
    let recorded = read_recording_file(&path).unwrap();

    let mut c = cfg(1, Mode::Forward, 1.0);
    c.conditions.seed = 99;
    c.replay = Some(ReplaySource {
        path: path.clone(),
        speed: 2.0,
    });
    let r = run(&c);
    assert!(r.passed(), "{:?}", r.violations);
    let replay = r.replay.as_ref().unwrap();
    assert_eq!(replay.chunks, recorded.chunks.len());
    assert_eq!(replay.stream_ids.len(), 4);
    let span = (recorded.chunks.last().unwrap().timestamp_us - recorded.chunks[0].timestamp_us)
        as f64
        / 2e6;
    assert!((replay.span_s - span).abs() < 1e-6);
    // The lone live client hears every recorded stream intact.
    assert!(r.checks.payload_fidelity.passed);
    assert_eq!(r.participants[0].client.as_ref().unwrap().streams_in, 4);

    c.conditions.seed = 1;
    assert!(matches!(
        run_scenario(&c),
        Err(ScenarioError::ConfigInvalid(_))
    ));
}

#[test]
fn invalid_configs_are_refused() {
    let bad = [
        ScenarioConfig {
            clients: 0,
            ..ScenarioConfig::default()
        },
        ScenarioConfig {
            duration: Duration::ZERO,
            ..ScenarioConfig::default()
        },
        ScenarioConfig {
            conditions: NetConditions {
                loss_prob: 1.5,
                ..NetConditions::default()
            },
            ..ScenarioConfig::default()
        },
        ScenarioConfig {
            bandwidth_halve_at: Some(Duration::from_secs(1)),
            ..ScenarioConfig::default()
        },
    ];
    for c in bad {
        assert!(matches!(
            run_scenario(&c),
            Err(ScenarioError::ConfigInvalid(_))
        ));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    /// Ordering, self-delivery, conservation and loss accounting hold
    /// under any seeded network conditions.
    #[test]
    fn invariants_hold_under_any_conditions(
        clients in 2usize..5,
        mix in any::<bool>(),
        loss in 0.0f64..0.15,
        reorder in 0.0f64..0.3,
        jitter_ms in 0u64..30,
        seed in any::<u64>(),
    ) {
        let mut c = cfg(clients, if mix { Mode::Mix } else { Mode::Forward }, 1.0);
        c.conditions = NetConditions {
            loss_prob: loss,
            reorder_prob: reorder,
            jitter: Duration::from_millis(jitter_ms),
            seed,
            ..NetConditions::default()
        };
        let r = run(&c);
        prop_assert!(r.passed(), "{:?}", r.violations);
        prop_assert!(r.checks.loss_accounting.applicable);
    }
}

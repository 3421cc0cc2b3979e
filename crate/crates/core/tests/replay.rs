use sipmatch::config::EngineConfig;
use sipmatch::controller::InterfaceKind;
use sipmatch::replay::{load_recording, replay, synthesize, write_recording};

const WALKTHROUGH: &str = r#"
[[sequences]]
id = "S1"
codes = [1, 2, -1]
mode = "translate_fb"

[[sequences]]
id = "S2"
codes = [1, 2]
mode = "translate_lr"

[[sequences]]
id = "S3"
codes = [2, 1]
mode = "translate_ud"
"#;

#[test]
fn short_then_long_sip_then_silence_selects_s2() {
    let config = EngineConfig::from_toml(WALKTHROUGH).unwrap();
    let samples = synthesize(&[(2.5, 200), (0.5, 200), (2.5, 300), (0.5, 600), (2.5, 2000)]);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s2.csv");
    std::fs::write(&path, write_recording(&samples)).unwrap();

    let out = replay(&load_recording(&path).unwrap(), &config, InterfaceKind::Asp).unwrap();
    assert_eq!(out.event_trace(), "200,400,1\n700,1300,2\n");
    assert_eq!(out.match_trace(), "400,pending,S1|S2\n1300,pending,S1|S2\n2800,matched,S2\n");
    let last_step = out.steps.last().unwrap();
    assert_eq!(last_step.command.mode, Some(sipmatch::ControlMode::TranslateLr));
}

#[test]
fn shipped_recordings_replay_identically_in_both_interfaces() {
    let config = EngineConfig::default();
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/grip_and_forward.csv");
    let samples = load_recording(path).unwrap();
    let asp = replay(&samples, &config, InterfaceKind::Asp).unwrap();
    let bsp = replay(&samples, &config, InterfaceKind::Bsp).unwrap();
    assert_eq!(asp.event_trace(), bsp.event_trace());
    assert!(asp.match_trace().contains("matched,grip"));
    assert!(asp.match_trace().ends_with("matched,fb\n"));
    assert_eq!(asp.metrics.moving_ms + asp.metrics.wasted_ms, asp.metrics.completion_ms);
}

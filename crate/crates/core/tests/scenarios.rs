//! The three bundled care scenarios through the full closed loop.

use homecare::agent::rules::{CHECK_IN_TEXT, HYDRATION_TEXT};
use homecare::agent::{FallStatus, InterventionKind as K};
use homecare::runner::commands::{run_one_scenario, DeviceMode};
use homecare::runner::RunConfig;
use homecare::sim::scenario::ScenarioScript;

fn cfg() -> RunConfig {
    RunConfig::load(&RunConfig::bundled_path()).unwrap()
}

fn scenario(name: &str) -> std::path::PathBuf {
    cfg().scenarios.into_iter().find(|p| p.ends_with(format!("{name}.toml"))).unwrap()
}

#[test]
fn exertion_pauses_hydrates_and_cools() {
    let (_, logs, _) = run_one_scenario(&cfg(), &scenario("exertion"), DeviceMode::InProcess).unwrap();
    let d = logs.dispatched();
    assert_eq!(
        d,
        vec![(K::PauseTraining, None), (K::Reminder, Some(HYDRATION_TEXT.into())), (K::DeviceCommand, Some("ac".into()))],
        "{:#?}",
        logs.audit
    );
    let ac = &logs.device_logs["ac"];
    assert!(ac.iter().any(|c| c.method == "set_power" && c.params[0]["power"] == "on" && c.ok));
}

#[test]
fn unanswered_fall_alerts_the_caregiver() {
    let (_, logs, _) = run_one_scenario(&cfg(), &scenario("fall"), DeviceMode::InProcess).unwrap();
    let kinds: Vec<K> = logs.dispatched().into_iter().map(|x| x.0).collect();
    assert_eq!(kinds, vec![K::Reminder, K::CaregiverAlert]);
    assert_eq!(logs.notifications[0].text.as_deref(), Some(CHECK_IN_TEXT));
    assert_eq!(logs.notifications[1].channel.as_deref(), Some("notification_log"));
    assert!(logs.notifications[1].context.is_some());
    let f = &logs.outcome.falls[0];
    assert_eq!(f.status, FallStatus::Unresponsive);
    assert!(f.trigger_to_dispatch_ms < 1000.0);
    assert!((f.ts - 90_000).abs() <= 5, "fall at {}", f.ts);
}

#[test]
fn answered_fall_does_not_alert() {
    let dir = tempfile::tempdir().unwrap();
    let mut script = ScenarioScript::load(&scenario("fall")).unwrap();
    script.events.push(homecare::sim::scenario::TimedEvent {
        t_s: 100.0,
        event: homecare::sim::scenario::ScenarioEvent::VoiceUtterance { text: "I'm fine".into() },
    });
    let p = dir.path().join("fall_answered.toml");
    std::fs::write(&p, script.to_toml()).unwrap();
    let (_, logs, _) = run_one_scenario(&cfg(), &p, DeviceMode::InProcess).unwrap();
    let kinds: Vec<K> = logs.dispatched().into_iter().map(|x| x.0).collect();
    assert_eq!(kinds, vec![K::Reminder]);
    assert_eq!(logs.outcome.falls[0].status, FallStatus::Responded);
}

#[test]
fn dark_evening_turns_on_the_lamp() {
    let (_, logs, _) = run_one_scenario(&cfg(), &scenario("evening_light"), DeviceMode::InProcess).unwrap();
    assert_eq!(logs.dispatched(), vec![(K::DeviceCommand, Some("lamp".into()))]);
    assert!(logs.device_logs["lamp"].iter().any(|c| c.method == "toggle_light" && c.ok));
}

#[test]
fn exertion_over_loopback_udp() {
    let (_, logs, receipts) = run_one_scenario(&cfg(), &scenario("exertion"), DeviceMode::Loopback).unwrap();
    assert!(receipts.iter().all(|r| r.success));
    assert!(logs.device_logs["ac"].iter().any(|c| c.method == "set_power" && c.ok));
}

//! Reference decision policy: exertion, fall check-in, evening light.

use serde::{Deserialize, Serialize};

use super::context::ContextWindow;
use super::decision::{AgentDecision, Intervention, InterventionKind};
use super::safety::DEFAULT_ALERT_CHANNEL;
use crate::devices::guard::params;
use crate::Millis;

/// Trigger values. The defaults fire on the bundled scenarios and stay
/// silent on a resting baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub rest_hr: f64,
    /// exertion fires above `rest_hr + hr_margin` bpm
    pub hr_margin: f64,
    /// ms
    pub hrv_max: f64,
    /// °C per minute, least-squares over the window
    pub temp_slope: f64,
    pub lux_max: f64,
    /// local seconds since midnight; the evening runs to midnight
    pub evening_from_s: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            rest_hr: 70.0,
            hr_margin: 40.0,
            hrv_max: 30.0,
            temp_slope: 0.05,
            lux_max: 50.0,
            evening_from_s: 18.0 * 3600.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RulePolicy {
    pub thresholds: Thresholds,
    pub ac_device: String,
    pub lamp_device: String,
    pub alert_channel: String,
}

impl Default for RulePolicy {
    fn default() -> Self {
        Self {
            thresholds: Thresholds::default(),
            ac_device: "ac".into(),
            lamp_device: "lamp".into(),
            alert_channel: DEFAULT_ALERT_CHANNEL.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FallStatus {
    /// just detected; ask the user
    Pending,
    /// the user answered "I'm fine"
    Responded,
    /// no answer within the response window
    Unresponsive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FallTrigger {
    pub ts: Millis,
    pub status: FallStatus,
}

pub const CHECK_IN_TEXT: &str = "A fall was detected. Are you okay? Say \"I'm fine\" if you do not need help.";
pub const HYDRATION_TEXT: &str = "Please pause and drink some water.";

/// Least-squares slope of (minute index, value) over the present values.
pub fn slope_per_minute(values: &[Option<f64>]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = values.iter().enumerate().filter_map(|(i, v)| v.map(|v| (i as f64, v))).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

pub fn exertion(ctx: &ContextWindow, th: &Thresholds) -> bool {
    let hr = ctx.latest(|m| m.hr_mean);
    let hrv = ctx.latest(|m| m.hrv_mean);
    let temps: Vec<Option<f64>> = ctx.minutes.iter().map(|m| m.temp_mean).collect();
    matches!((hr, hrv, slope_per_minute(&temps)),
        (Some(hr), Some(hrv), Some(s)) if hr > th.rest_hr + th.hr_margin && hrv < th.hrv_max && s > th.temp_slope)
}

pub fn dark_evening(ctx: &ContextWindow, th: &Thresholds) -> bool {
    let lux = ctx.latest(|m| m.light_mean);
    matches!((lux, ctx.clock_s), (Some(l), Some(c)) if l < th.lux_max && c >= th.evening_from_s)
}

pub fn decide_rule_based(ctx: &ContextWindow, trigger: Option<&FallTrigger>, policy: &RulePolicy) -> AgentDecision {
    use InterventionKind as K;
    let th = &policy.thresholds;
    let mut out = Vec::new();
    let mut why = Vec::new();
    if let Some(f) = trigger {
        match f.status {
            FallStatus::Pending => {
                out.push(Intervention::text(K::Reminder, CHECK_IN_TEXT));
                why.push("fall detected: check in");
            }
            FallStatus::Unresponsive => {
                let mut alert = Intervention::text(K::CaregiverAlert, "Fall detected and no response to the check-in.");
                alert.params = Some(params(serde_json::json!({ "channel": policy.alert_channel })));
                out.push(alert);
                why.push("no response after fall: alert caregiver");
            }
            FallStatus::Responded => why.push("user responded after fall"),
        }
    } else {
        if exertion(ctx, th) {
            out.push(Intervention::of(K::PauseTraining));
            out.push(Intervention::text(K::Reminder, HYDRATION_TEXT));
            out.push(Intervention::command(&policy.ac_device, "set_power", params(serde_json::json!({ "power": "on" }))));
            why.push("heart rate high, HRV low, temperature rising");
        }
        if dark_evening(ctx, th) {
            out.push(Intervention::command(&policy.lamp_device, "toggle_light", params(serde_json::json!({ "power": "on" }))));
            why.push("dark room in the evening");
        }
    }
    if out.is_empty() {
        out.push(Intervention::of(K::None));
    }
    AgentDecision {
        interventions: out,
        rationale: (!why.is_empty()).then(|| why.join("; ")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::context::{MinuteRecord, MINUTE_MS, WINDOW_MINUTES};
    use crate::agent::safety::{validate, Whitelist};
    use crate::devices::Registry;
    use crate::seed;
    use rand::Rng;

    fn window(hr: [f64; 6], hrv: f64, temp: [f64; 6], lux: f64, clock_s: f64) -> ContextWindow {
        ContextWindow {
            patient_ref: "P".into(),
            now_ts: 360_000,
            minutes: (0..WINDOW_MINUTES)
                .map(|k| MinuteRecord {
                    start_ts: k as Millis * MINUTE_MS,
                    hr_mean: Some(hr[k]),
                    hrv_mean: Some(hrv),
                    temp_mean: Some(temp[k]),
                    light_mean: Some(lux),
                    activity: None,
                })
                .collect(),
            clock_s: Some(clock_s),
            missing: false,
        }
    }

    const FLAT: [f64; 6] = [33.5; 6];

    #[test]
    fn slope_matches_hand_computation() {
        // y = 2x + 1 exactly, with a gap
        let v = [Some(1.0), None, Some(5.0), Some(7.0), None, Some(11.0)];
        assert!((slope_per_minute(&v).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(slope_per_minute(&[Some(1.0), None]), None);
    }

    #[test]
    fn exertion_fires_all_three() {
        let ctx = window([80., 90., 100., 105., 110., 118.], 25.0, [33.5, 33.6, 33.7, 33.9, 34.0, 34.2], 300.0, 36_000.0);
        let d = decide_rule_based(&ctx, None, &RulePolicy::default());
        assert_eq!(d.kinds(), vec![InterventionKind::PauseTraining, InterventionKind::Reminder, InterventionKind::DeviceCommand]);
        assert_eq!(d.interventions[2].device.as_deref(), Some("ac"));
    }

    #[test]
    fn quiescent_window_is_none() {
        let d = decide_rule_based(&window([70.; 6], 60.0, FLAT, 300.0, 36_000.0), None, &RulePolicy::default());
        assert!(d.is_none());
        // any one exertion sign alone does not fire
        let d = decide_rule_based(&window([120.; 6], 60.0, FLAT, 300.0, 36_000.0), None, &RulePolicy::default());
        assert!(d.is_none());
    }

    #[test]
    fn evening_light() {
        let p = RulePolicy::default();
        let dark_evening = decide_rule_based(&window([70.; 6], 60.0, FLAT, 10.0, 19.0 * 3600.0), None, &p);
        assert_eq!(dark_evening.interventions[0].action.as_deref(), Some("toggle_light"));
        assert!(decide_rule_based(&window([70.; 6], 60.0, FLAT, 10.0, 14.0 * 3600.0), None, &p).is_none());
        assert!(decide_rule_based(&window([70.; 6], 60.0, FLAT, 80.0, 19.0 * 3600.0), None, &p).is_none());
    }

    #[test]
    fn fall_states() {
        let ctx = window([70.; 6], 60.0, FLAT, 300.0, 36_000.0);
        let p = RulePolicy::default();
        let at = |status| decide_rule_based(&ctx, Some(&FallTrigger { ts: 0, status }), &p);
        assert_eq!(at(FallStatus::Pending).kinds(), vec![InterventionKind::Reminder]);
        assert_eq!(at(FallStatus::Unresponsive).kinds(), vec![InterventionKind::CaregiverAlert]);
        assert!(at(FallStatus::Responded).is_none());
    }

    #[test]
    fn rule_decisions_always_pass_the_safety_layer() {
        let reg = Registry::demo();
        let wl = Whitelist::for_registry(&reg);
        let mut rng = seed::rng(11, "closure");
        for _ in 0..1000 {
            let ctx = ContextWindow {
                patient_ref: "P".into(),
                now_ts: 360_000,
                minutes: (0..WINDOW_MINUTES)
                    .map(|k| MinuteRecord {
                        start_ts: k as Millis * MINUTE_MS,
                        hr_mean: Some(60.0 + 80.0 * rng.gen::<f64>()).filter(|_| rng.gen_bool(0.9)),
                        hrv_mean: Some(10.0 + 60.0 * rng.gen::<f64>()).filter(|_| rng.gen_bool(0.9)),
                        temp_mean: Some(33.0 + 0.4 * k as f64 * rng.gen::<f64>()).filter(|_| rng.gen_bool(0.9)),
                        light_mean: Some(200.0 * rng.gen::<f64>()).filter(|_| rng.gen_bool(0.9)),
                        activity: None,
                    })
                    .collect(),
                clock_s: Some(86_400.0 * rng.gen::<f64>()),
                missing: false,
            };
            let trig = match rng.gen_range(0..4) {
                0 => Some(FallStatus::Pending),
                1 => Some(FallStatus::Unresponsive),
                2 => Some(FallStatus::Responded),
                _ => None,
            }
            .map(|status| FallTrigger { ts: 0, status });
            let d = decide_rule_based(&ctx, trig.as_ref(), &RulePolicy::default());
            assert_eq!(validate(&d, &wl, &reg), crate::agent::safety::SafetyVerdict::Pass, "{d:?}");
        }
    }
}

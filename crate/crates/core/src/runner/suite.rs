//! The scripted interaction suite: voice and gaze commands issued against
//! the appliances, with latency and success statistics.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::rig::DeviceRig;
use super::RunError;
use crate::devices::DeviceKind;
use crate::intent::router::synthetic_dwell;
use crate::intent::types::BlinkEvent;
use crate::intent::{gaze_intent, parse_voice_command, select_object, DeliveryReceipt, GazeConfig, Grammar};
use crate::sim::scenario::default_objects;
use crate::Millis;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteStep {
    #[serde(default)]
    pub voice: Option<String>,
    /// object label to dwell on, confirmed by a double blink
    #[serde(default)]
    pub gaze: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InteractionSuite {
    pub spacing_ms: Millis,
    #[serde(default = "InteractionSuite::default_dwell")]
    pub dwell_ms: Millis,
    pub steps: Vec<SuiteStep>,
}

impl InteractionSuite {
    fn default_dwell() -> Millis {
        700
    }

    pub fn parse(text: &str) -> Result<Self, RunError> {
        let s: Self = toml::from_str(text).map_err(|e| RunError::Config(e.to_string()))?;
        if let Some(i) = s.steps.iter().position(|st| st.voice.is_some() == st.gaze.is_some()) {
            return Err(RunError::Config(format!("suite step {i}: give exactly one of voice or gaze")));
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn bundled() -> Self {
        Self::parse(include_str!("../../data/interaction_suite.toml")).expect("bundled suite is valid")
    }
}

/// Per-step result. `receipt` is absent when no intent could be formed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub step: usize,
    pub input: String,
    pub receipt: Option<DeliveryReceipt>,
    #[serde(default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub n: usize,
    pub mean_ms: f64,
    /// sample standard deviation
    pub sd_ms: f64,
    /// nearest-rank 95th percentile
    pub p95_ms: f64,
    pub max_ms: f64,
}

impl LatencyStats {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let rank = ((0.95 * n as f64).ceil() as usize).clamp(1, n);
        Some(Self {
            n,
            mean_ms: mean,
            sd_ms: sd,
            p95_ms: sorted[rank - 1],
            max_ms: sorted[n - 1],
        })
    }
}

/// Success over commands: first try means delivered without a retransmit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuccessRates {
    pub commands: usize,
    pub first_try: f64,
    pub after_retry: f64,
    pub max_retries: u32,
}

impl SuccessRates {
    pub fn of(steps: &[StepResult]) -> Self {
        let n = steps.len();
        let ok = |f: &dyn Fn(&DeliveryReceipt) -> bool| steps.iter().filter(|s| s.receipt.as_ref().is_some_and(f)).count();
        let rate = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
        Self {
            commands: n,
            first_try: rate(ok(&|r| r.success && r.retries == 0)),
            after_retry: rate(ok(&|r| r.success)),
            max_retries: steps.iter().filter_map(|s| s.receipt.as_ref()).map(|r| r.retries).max().unwrap_or(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub steps: Vec<StepResult>,
    pub success: SuccessRates,
    pub latency: Option<LatencyStats>,
}

pub fn run_suite(suite: &InteractionSuite, rig: &DeviceRig, grammar: &Grammar) -> SuiteReport {
    let reg = &rig.arbiter.registry;
    let boxes = default_objects();
    let mut steps = Vec::new();
    for (i, st) in suite.steps.iter().enumerate() {
        let ts = i as Millis * suite.spacing_ms;
        let (input, intent) = match (&st.voice, &st.gaze) {
            (Some(text), _) => (text.clone(), parse_voice_command(text, grammar, reg, ts).map_err(|e| e.to_string())),
            (_, Some(label)) => {
                let intent = boxes
                    .iter()
                    .find(|b| &b.label == label)
                    .and_then(|b| {
                        let (x, y) = b.center();
                        let samples = synthetic_dwell(ts, x, y, suite.dwell_ms);
                        let end = samples.last().map_or(ts, |s| s.timestamp);
                        let blinks = [BlinkEvent { timestamp: end + 150 }, BlinkEvent { timestamp: end + 450 }];
                        select_object(&samples, &blinks, &boxes, &GazeConfig::default())
                    })
                    .and_then(|sel| {
                        let d = DeviceKind::from_label(&sel.object).and_then(|k| reg.find(k, None))?;
                        let power = rig.arbiter.client().intended(d.device_id);
                        let power = power.as_ref().and_then(|s| s.properties.get("power")).and_then(|p| p.as_str());
                        gaze_intent(&sel, reg, power, ts)
                    })
                    .ok_or_else(|| format!("no gaze selection for {label}"));
                (format!("gaze:{label}"), intent)
            }
            (None, None) => unreachable!("validated at parse"),
        };
        let (receipt, error) = match intent {
            Ok(intent) => {
                let r = rig.arbiter.issue_intent(&intent);
                let e = r.error.clone();
                (Some(r), e)
            }
            Err(e) => (None, Some(e)),
        };
        steps.push(StepResult {
            step: i,
            input,
            receipt,
            error,
        });
    }
    let latencies: Vec<f64> = steps
        .iter()
        .filter_map(|s| s.receipt.as_ref())
        .filter(|r| r.success)
        .map(|r| r.latency_ms)
        .collect();
    SuiteReport {
        success: SuccessRates::of(&steps),
        latency: LatencyStats::of(&latencies),
        steps,
    }
}

//! Safety layer: structural checks, then the action whitelist. Nothing that
//! fails either reaches a device.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::decision::{parse_decision, AgentDecision, InterventionKind};
use super::AgentError;
use crate::devices::{ParamSpec, Registry};

pub const DEFAULT_ALERT_CHANNEL: &str = "notification_log";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum SafetyVerdict {
    Pass,
    RejectStructural { reason: String },
    RejectWhitelist { offending: String },
}

impl SafetyVerdict {
    pub fn is_pass(&self) -> bool {
        *self == Self::Pass
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Whitelist {
    pub actions: BTreeMap<String, BTreeMap<String, ParamSpec>>,
    pub alert_channels: Vec<String>,
}

impl Whitelist {
    /// Every state-changing action of the registered devices. Where two
    /// kinds share an action name their schemas are identical.
    pub fn for_registry(registry: &Registry) -> Self {
        let mut actions = BTreeMap::new();
        for d in &registry.devices {
            for (a, schema) in d.capabilities() {
                if a != "get_prop" {
                    actions.insert(a, schema);
                }
            }
        }
        Self {
            actions,
            alert_channels: vec![DEFAULT_ALERT_CHANNEL.to_string()],
        }
    }
}

fn structural(reason: impl Into<String>) -> SafetyVerdict {
    SafetyVerdict::RejectStructural { reason: reason.into() }
}

fn check_structure(d: &AgentDecision, registry: &Registry) -> Result<(), SafetyVerdict> {
    use InterventionKind as K;
    if d.interventions.is_empty() {
        return Ok(());
    }
    if d.interventions.len() > 1 && d.interventions.iter().any(|i| i.kind == K::None) {
        return Err(structural("'none' combined with other interventions"));
    }
    let mut effects: BTreeMap<(String, String), Value> = BTreeMap::new();
    for (n, i) in d.interventions.iter().enumerate() {
        let device_fields = i.device.is_some() || i.action.is_some();
        match i.kind {
            K::DeviceCommand => {
                let (Some(dev), Some(action), Some(params)) = (&i.device, &i.action, &i.params) else {
                    return Err(structural(format!("intervention {n}: device_command needs device, action and params")));
                };
                if registry.get(dev).is_none() {
                    return Err(structural(format!("intervention {n}: unknown device {dev}")));
                }
                if let Some((prop, v)) = crate::devices::state::effect(action, params) {
                    if let Some(prev) = effects.insert((dev.clone(), prop.clone()), v.clone()) {
                        if prev != v {
                            return Err(structural(format!("conflicting interventions on {dev}.{prop}")));
                        }
                    }
                }
            }
            K::Reminder | K::CaregiverAlert => {
                if i.text.as_deref().map_or(true, |t| t.trim().is_empty()) {
                    return Err(structural(format!("intervention {n}: {:?} needs text", i.kind)));
                }
                if device_fields {
                    return Err(structural(format!("intervention {n}: device fields on a notification")));
                }
                if i.kind == K::CaregiverAlert && !i.params.as_ref().is_some_and(|p| p.get("channel").is_some_and(Value::is_string)) {
                    return Err(structural(format!("intervention {n}: caregiver_alert needs params.channel")));
                }
            }
            K::PauseTraining | K::None => {
                if device_fields || i.params.is_some() {
                    return Err(structural(format!("intervention {n}: unexpected fields on {:?}", i.kind)));
                }
            }
        }
    }
    Ok(())
}

fn check_whitelist(d: &AgentDecision, wl: &Whitelist, registry: &Registry) -> Result<(), SafetyVerdict> {
    let reject = |s: String| SafetyVerdict::RejectWhitelist { offending: s };
    for i in &d.interventions {
        match i.kind {
            InterventionKind::DeviceCommand => {
                let (dev, action, params) = (i.device.as_ref().unwrap(), i.action.as_ref().unwrap(), i.params.as_ref().unwrap());
                let schema = wl.actions.get(action).ok_or_else(|| reject(action.clone()))?;
                let desc = registry.get(dev).expect("structural check resolved the device");
                if !desc.capabilities().contains_key(action) {
                    return Err(reject(format!("{dev}.{action}")));
                }
                for (k, v) in params {
                    match schema.get(k) {
                        Some(spec) if spec.admits(v) => {}
                        _ => return Err(reject(format!("{action}.{k}={v}"))),
                    }
                }
                if let Some(k) = schema.keys().find(|k| !params.contains_key(*k)) {
                    return Err(reject(format!("{action}.{k} missing")));
                }
            }
            InterventionKind::CaregiverAlert => {
                let ch = i.params.as_ref().and_then(|p| p.get("channel")).and_then(Value::as_str).unwrap_or("");
                if !wl.alert_channels.iter().any(|c| c == ch) {
                    return Err(reject(format!("channel {ch}")));
                }
            }
            _ => {}
        }
    }
    Ok(())
}

/// Structural checks first; the first failure wins.
pub fn validate(decision: &AgentDecision, wl: &Whitelist, registry: &Registry) -> SafetyVerdict {
    match check_structure(decision, registry).and_then(|_| check_whitelist(decision, wl, registry)) {
        Ok(()) => SafetyVerdict::Pass,
        Err(v) => v,
    }
}

/// Parse then validate raw model output. A parse failure is structural.
pub fn check_raw(raw: &str, wl: &Whitelist, registry: &Registry) -> (Option<AgentDecision>, SafetyVerdict) {
    match parse_decision(raw) {
        Err(e) => (None, structural(format!("parse: {e}"))),
        Ok(d) => {
            let v = validate(&d, wl, registry);
            (Some(d), v)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expected {
    Valid,
    Erroneous,
}

/// One corpus file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusItem {
    pub id: u32,
    pub expected: Expected,
    #[serde(default)]
    pub note: String,
    /// the model output, verbatim
    pub raw: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusItemResult {
    pub id: u32,
    pub expected: Expected,
    pub verdict: SafetyVerdict,
}

/// `detected`: erroneous items rejected. `false_activations`: valid items
/// the safety layer rejected. `missed`: erroneous items that passed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusResult {
    pub total: usize,
    pub erroneous: usize,
    pub detected: usize,
    pub missed: usize,
    pub false_activations: usize,
    pub items: Vec<CorpusItemResult>,
}

pub fn bundled_corpus_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/safety_corpus")
}

/// Numbered `*.json` files in `dir`, in name order.
pub fn load_corpus(dir: &Path) -> Result<Vec<CorpusItem>, AgentError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p)?;
            serde_json::from_str(&text).map_err(|e| AgentError::Corpus(format!("{}: {e}", p.display())))
        })
        .collect()
}

pub fn safety_corpus_eval(items: &[CorpusItem], wl: &Whitelist, registry: &Registry) -> CorpusResult {
    let results: Vec<CorpusItemResult> = items
        .iter()
        .map(|it| CorpusItemResult {
            id: it.id,
            expected: it.expected,
            verdict: check_raw(&it.raw, wl, registry).1,
        })
        .collect();
    let count = |e: Expected, pass: bool| results.iter().filter(|r| r.expected == e && r.verdict.is_pass() == pass).count();
    CorpusResult {
        total: results.len(),
        erroneous: results.iter().filter(|r| r.expected == Expected::Erroneous).count(),
        detected: count(Expected::Erroneous, false),
        missed: count(Expected::Erroneous, true),
        false_activations: count(Expected::Valid, false),
        items: results,
    }
}

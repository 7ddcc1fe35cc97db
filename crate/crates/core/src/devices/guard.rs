//! Rule-based fallback guard between intents and devices.
//!
//! Checked in order against the history of *allowed* commands:
//! - Duplicate: the same device, action and parameters within the debounce.
//! - Conflict: the same device had a conflict-key property (default
//!   `power`) set to a different value within the debounce.
//! - RateLimit: the device already accepted `max_per_minute` commands in
//!   the trailing 60 s.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::state::effect;
use crate::intent::types::Intent;
use crate::Millis;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GuardPolicy {
    pub debounce_ms: Millis,
    /// per-action overrides of `debounce_ms`
    pub action_debounce_ms: BTreeMap<String, Millis>,
    pub conflict_keys: Vec<String>,
    pub max_per_minute: usize,
}

impl Default for GuardPolicy {
    fn default() -> Self {
        Self {
            debounce_ms: 2000,
            action_debounce_ms: BTreeMap::new(),
            conflict_keys: vec!["power".into()],
            max_per_minute: 10,
        }
    }
}

impl GuardPolicy {
    pub fn debounce_for(&self, action: &str) -> Millis {
        self.action_debounce_ms.get(action).copied().unwrap_or(self.debounce_ms).max(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DenyReason {
    Duplicate,
    Conflict,
    RateLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", content = "reason", rename_all = "snake_case")]
pub enum GuardVerdict {
    Allow,
    Deny(DenyReason),
}

/// Pure decision for `intent` given the allowed-command history.
pub fn guard(intent: &Intent, history: &[Intent], policy: &GuardPolicy) -> GuardVerdict {
    let now = intent.issued_ts;
    let same_device = || history.iter().filter(|h| h.target_device == intent.target_device && h.issued_ts <= now);
    let within = |h: &Intent, ms: Millis| now - h.issued_ts < ms;

    let deb = policy.debounce_for(&intent.action);
    if same_device().any(|h| within(h, deb) && h.action == intent.action && h.params == intent.params) {
        return GuardVerdict::Deny(DenyReason::Duplicate);
    }
    if let Some((prop, val)) = effect(&intent.action, &intent.params) {
        if policy.conflict_keys.contains(&prop) {
            let clash = same_device().any(|h| {
                within(h, policy.debounce_for(&h.action).max(deb))
                    && matches!(effect(&h.action, &h.params), Some((p, v)) if p == prop && v != val)
            });
            if clash {
                return GuardVerdict::Deny(DenyReason::Conflict);
            }
        }
    }
    if same_device().filter(|h| within(h, 60_000)).count() >= policy.max_per_minute {
        return GuardVerdict::Deny(DenyReason::RateLimit);
    }
    GuardVerdict::Allow
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuardRecord {
    pub intent: Intent,
    pub verdict: GuardVerdict,
}

/// Stateful wrapper: remembers allowed commands and every decision.
#[derive(Debug, Clone, Default)]
pub struct Guard {
    pub policy: GuardPolicy,
    allowed: Vec<Intent>,
    records: Vec<GuardRecord>,
}

impl Guard {
    pub fn new(policy: GuardPolicy) -> Self {
        Self {
            policy,
            ..Self::default()
        }
    }

    pub fn check(&mut self, intent: &Intent) -> GuardVerdict {
        let v = guard(intent, &self.allowed, &self.policy);
        if v == GuardVerdict::Allow {
            self.allowed.push(intent.clone());
            // nothing older than a minute can affect a later decision
            let horizon = intent.issued_ts - 60_000.max(self.policy.debounce_ms);
            self.allowed.retain(|h| h.issued_ts > horizon);
        }
        self.records.push(GuardRecord {
            intent: intent.clone(),
            verdict: v,
        });
        v
    }

    pub fn records(&self) -> &[GuardRecord] {
        &self.records
    }

    pub fn denied(&self) -> usize {
        self.records.iter().filter(|r| r.verdict != GuardVerdict::Allow).count()
    }
}

/// Convenience for tests and the CLI: `{"power": "on"}` → param map.
pub fn params(v: Value) -> BTreeMap<String, Value> {
    v.as_object().cloned().unwrap_or_default().into_iter().collect()
}

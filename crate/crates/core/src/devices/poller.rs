//! Periodic `get_prop` polling with reconciliation and offline tracking.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::client::MiioClient;
use super::registry::Registry;
use super::state::DeviceState;
use crate::Millis;

pub const DEFAULT_PERIOD_S: u64 = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum PollEvent {
    /// The device reports something other than what was last commanded;
    /// the intended state is updated to the reported value.
    Reconciled {
        device: String,
        property: String,
        intended: Value,
        actual: Value,
        ts: Millis,
    },
    Offline { device: String, ts: Millis },
    Online { device: String, ts: Millis },
}

#[derive(Debug, Clone, Default)]
pub struct Poller {
    pub period_s: u64,
    offline: BTreeSet<String>,
    last_seen: BTreeMap<String, Millis>,
}

impl Poller {
    pub fn new(period_s: u64) -> Self {
        Self {
            period_s,
            ..Self::default()
        }
    }

    pub fn is_offline(&self, device: &str) -> bool {
        self.offline.contains(device)
    }

    pub fn last_seen(&self, device: &str) -> Option<Millis> {
        self.last_seen.get(device).copied()
    }

    /// One polling round over every registered device at time `now`.
    pub fn poll_once(&mut self, client: &MiioClient, registry: &Registry, now: Millis) -> Vec<PollEvent> {
        let mut events = Vec::new();
        for d in &registry.devices {
            let names: Vec<Value> = d.kind.properties().iter().map(|p| Value::from(*p)).collect();
            let out = match client.send_command(d, "get_prop", Value::Array(names)) {
                Ok(o) => o,
                Err(_) => {
                    if self.offline.insert(d.name.clone()) {
                        events.push(PollEvent::Offline {
                            device: d.name.clone(),
                            ts: now,
                        });
                    }
                    continue;
                }
            };
            if self.offline.remove(&d.name) {
                events.push(PollEvent::Online {
                    device: d.name.clone(),
                    ts: now,
                });
            }
            self.last_seen.insert(d.name.clone(), now);
            let values = out.result.as_array().cloned().unwrap_or_default();
            let mut actual = DeviceState::initial(d.kind, d.device_id);
            for (p, v) in d.kind.properties().iter().zip(values) {
                actual.properties.insert(p.to_string(), v);
            }
            actual.last_seen_ts = Some(now);
            if let Some(intended) = client.intended(d.device_id) {
                for (p, want) in &intended.properties {
                    let got = actual.properties.get(p).cloned().unwrap_or(Value::Null);
                    if &got != want {
                        events.push(PollEvent::Reconciled {
                            device: d.name.clone(),
                            property: p.clone(),
                            intended: want.clone(),
                            actual: got,
                            ts: now,
                        });
                    }
                }
            }
            client.set_intended(actual);
        }
        events
    }
}

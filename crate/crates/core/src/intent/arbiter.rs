//! Single dispatch point for intents from every source: schema check,
//! fallback guard, per-device serialization, delivery with latency metering.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::types::Intent;
use crate::devices::{DenyReason, Guard, GuardPolicy, GuardVerdict, MiioClient, Registry};
use crate::Millis;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeliveryReceipt {
    pub intent: Intent,
    pub success: bool,
    pub ack_ts: Millis,
    /// wall-clock time from dispatch to acknowledgement
    pub latency_ms: f64,
    /// device transmissions used (0 when never sent)
    pub attempts: u32,
    pub retries: u32,
    pub verdict: GuardVerdict,
    #[serde(default)]
    pub result: Option<Value>,
    #[serde(default)]
    pub error: Option<String>,
}

impl DeliveryReceipt {
    pub fn denied(&self) -> Option<DenyReason> {
        match self.verdict {
            GuardVerdict::Deny(r) => Some(r),
            GuardVerdict::Allow => None,
        }
    }
}

pub struct Arbiter {
    pub registry: Registry,
    client: Arc<MiioClient>,
    guard: Mutex<Guard>,
    device_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
    log: Mutex<Vec<DeliveryReceipt>>,
}

impl Arbiter {
    pub fn new(registry: Registry, client: Arc<MiioClient>, policy: GuardPolicy) -> Self {
        Self {
            registry,
            client,
            guard: Mutex::new(Guard::new(policy)),
            device_locks: Mutex::new(HashMap::new()),
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn client(&self) -> &MiioClient {
        &self.client
    }

    fn device_lock(&self, name: &str) -> Arc<Mutex<()>> {
        self.device_locks.lock().expect("locks").entry(name.to_string()).or_default().clone()
    }

    /// Dispatch one intent. Never panics on device failure: the receipt
    /// says what happened. The client retransmits once on timeout, so a
    /// single lost packet costs one retry.
    pub fn issue_intent(&self, intent: &Intent) -> DeliveryReceipt {
        let fail = |verdict, err: String| DeliveryReceipt {
            intent: intent.clone(),
            success: false,
            ack_ts: intent.issued_ts,
            latency_ms: 0.0,
            attempts: 0,
            retries: 0,
            verdict,
            result: None,
            error: Some(err),
        };
        let receipt = match self.registry.get(&intent.target_device) {
            None => fail(GuardVerdict::Allow, format!("unknown device {}", intent.target_device)),
            Some(d) => match d.check(&intent.action, &intent.params) {
                Err(e) => fail(GuardVerdict::Allow, e.to_string()),
                Ok(()) => {
                    let lock = self.device_lock(&d.name);
                    let _serial = lock.lock().expect("device lock");
                    match self.guard.lock().expect("guard").check(intent) {
                        GuardVerdict::Deny(r) => fail(GuardVerdict::Deny(r), format!("guard: {r:?}")),
                        GuardVerdict::Allow => {
                            let params = Value::Array(vec![serde_json::to_value(&intent.params).expect("params")]);
                            let t0 = Instant::now();
                            let out = self.client.send_command(d, &intent.action, params);
                            let latency_ms = t0.elapsed().as_secs_f64() * 1000.0;
                            let ack_ts = intent.issued_ts + latency_ms.round() as Millis;
                            match out {
                                Ok(o) => DeliveryReceipt {
                                    intent: intent.clone(),
                                    success: true,
                                    ack_ts,
                                    latency_ms,
                                    attempts: o.attempts,
                                    retries: o.attempts - 1,
                                    verdict: GuardVerdict::Allow,
                                    result: Some(o.result),
                                    error: None,
                                },
                                Err(e) => DeliveryReceipt {
                                    ack_ts,
                                    latency_ms,
                                    attempts: 2,
                                    retries: 1,
                                    ..fail(GuardVerdict::Allow, e.to_string())
                                },
                            }
                        }
                    }
                }
            },
        };
        if !receipt.success {
            log::warn!("intent {} {} failed: {:?}", intent.target_device, intent.action, receipt.error);
        }
        self.log.lock().expect("log").push(receipt.clone());
        receipt
    }

    pub fn receipts(&self) -> Vec<DeliveryReceipt> {
        self.log.lock().expect("log").clone()
    }

    pub fn guard_denials(&self) -> usize {
        self.guard.lock().expect("guard").denied()
    }

    /// Intent log, one JSON object per line: intent, receipt, latency_ms.
    pub fn log_jsonl(&self) -> String {
        self.receipts()
            .iter()
            .map(|r| serde_json::to_string(r).expect("receipt serializes") + "\n")
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::devices::guard::params;
    use crate::devices::{ClientConfig, Faults, InProcessTransport, VirtualDevice};
    use crate::intent::types::IntentSource;
    use serde_json::json;

    fn setup() -> (Arbiter, Vec<Arc<VirtualDevice>>) {
        let reg = Registry::demo();
        let mut t = InProcessTransport::new();
        let devs = reg
            .devices
            .iter()
            .map(|d| {
                let v = Arc::new(VirtualDevice::new(d.clone()));
                t.attach(&d.address, v.clone());
                v
            })
            .collect();
        let client = Arc::new(MiioClient::new(Arc::new(t), ClientConfig::default()));
        (Arbiter::new(reg, client, GuardPolicy::default()), devs)
    }

    fn it(dev: &str, action: &str, p: Value, ts: Millis) -> Intent {
        Intent {
            target_device: dev.into(),
            action: action.into(),
            params: params(p),
            source: IntentSource::Voice,
            issued_ts: ts,
        }
    }

    #[test]
    fn healthy_lamp() {
        let (a, devs) = setup();
        let r = a.issue_intent(&it("lamp", "toggle_light", json!({"power": "on"}), 100));
        assert!(r.success && r.retries == 0);
        assert!(r.ack_ts >= 100);
        assert_eq!(devs[0].state().properties["power"], json!("on"));
    }

    #[test]
    fn dropped_first_packet_costs_one_retry() {
        let (a, devs) = setup();
        devs[0].set_faults(Faults {
            drop_next: 1,
            ..Faults::default()
        });
        let r = a.issue_intent(&it("lamp", "toggle_light", json!({"power": "on"}), 0));
        assert!(r.success);
        assert_eq!(r.retries, 1);
    }

    #[test]
    fn offline_device_fails() {
        let (a, devs) = setup();
        devs[1].set_faults(Faults {
            offline: true,
            ..Faults::default()
        });
        let r = a.issue_intent(&it("ac", "set_power", json!({"power": "on"}), 0));
        assert!(!r.success && r.error.is_some());
    }

    #[test]
    fn denied_intents_never_reach_the_device() {
        let (a, devs) = setup();
        a.issue_intent(&it("lamp", "toggle_light", json!({"power": "on"}), 0));
        let dup = a.issue_intent(&it("lamp", "toggle_light", json!({"power": "on"}), 500));
        assert_eq!(dup.denied(), Some(DenyReason::Duplicate));
        let bad = a.issue_intent(&it("lamp", "set_brightness", json!({"brightness": 500}), 9000));
        assert!(!bad.success && bad.attempts == 0);
        assert_eq!(devs[0].command_log().len(), 1);
        assert_eq!(a.log_jsonl().lines().count(), 3);
    }
}

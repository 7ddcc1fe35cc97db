//! MiIO client: hello handshake, encrypted JSON-RPC with one retransmit,
//! per-device request ids starting at 1.
//!
//! Commands to the same device are serialized by a per-device lock; calls to
//! different devices proceed in parallel. The client also keeps the state it
//! *intends* each device to be in, which the poller compares against what
//! the device reports.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::miio::{decode_packet, encode_packet, Header, HELLO};
use super::registry::DeviceDescriptor;
use super::state::{effect, DeviceState};
use super::transport::Transport;
use super::DeviceError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClientConfig {
    pub timeout_ms: u64,
}

impl Default for ClientConfig {
    fn default() -> Self {
        Self { timeout_ms: 3000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandOutcome {
    pub result: Value,
    /// 1 on first-try success, 2 after the retransmit
    pub attempts: u32,
    pub request_id: u64,
}

#[derive(Debug, Default)]
struct Session {
    next_id: u64,
    /// device stamp at the last handshake or reply, and when we saw it
    stamp: Option<(u32, Instant)>,
}

pub struct MiioClient {
    transport: Arc<dyn Transport>,
    cfg: ClientConfig,
    sessions: Mutex<HashMap<u32, Arc<Mutex<Session>>>>,
    intended: Mutex<BTreeMap<u32, DeviceState>>,
}

impl MiioClient {
    pub fn new(transport: Arc<dyn Transport>, cfg: ClientConfig) -> Self {
        Self {
            transport,
            cfg,
            sessions: Mutex::new(HashMap::new()),
            intended: Mutex::new(BTreeMap::new()),
        }
    }

    fn timeout(&self) -> Duration {
        Duration::from_millis(self.cfg.timeout_ms)
    }

    fn session(&self, device_id: u32) -> Arc<Mutex<Session>> {
        self.sessions
            .lock()
            .expect("sessions")
            .entry(device_id)
            .or_insert_with(|| {
                Arc::new(Mutex::new(Session {
                    next_id: 1,
                    stamp: None,
                }))
            })
            .clone()
    }

    /// Send hello (one retry) and return the device's (id, stamp).
    pub fn handshake(&self, address: &str) -> Result<(u32, u32), DeviceError> {
        for _ in 0..2 {
            self.transport.send(address, &HELLO)?;
            let deadline = Instant::now() + self.timeout();
            while let Some(left) = deadline.checked_duration_since(Instant::now()) {
                let Some(pkt) = self.transport.recv(address, left)? else {
                    break;
                };
                if let Ok(h) = Header::parse(&pkt) {
                    if h.is_hello() {
                        return Ok((h.device_id, h.stamp));
                    }
                }
            }
        }
        Err(DeviceError::Unreachable {
            address: address.to_string(),
        })
    }

    /// Intended state of a device, if any command has succeeded on it.
    pub fn intended(&self, device_id: u32) -> Option<DeviceState> {
        self.intended.lock().expect("intended").get(&device_id).cloned()
    }

    pub fn set_intended(&self, state: DeviceState) {
        self.intended.lock().expect("intended").insert(state.device_id, state);
    }

    /// Execute `method` on the device. `params` is the JSON-RPC params
    /// value: `[{..}]` for setters, a list of names for `get_prop`.
    pub fn send_command(&self, d: &DeviceDescriptor, method: &str, params: Value) -> Result<CommandOutcome, DeviceError> {
        if !d.capabilities().contains_key(method) {
            return Err(DeviceError::Unsupported(method.to_string()));
        }
        let session = self.session(d.device_id);
        let mut s = session.lock().expect("session");
        if s.stamp.is_none() {
            let (_, stamp) = self.handshake(&d.address)?;
            s.stamp = Some((stamp, Instant::now()));
        }
        let (base, at) = s.stamp.expect("handshake done");
        let stamp = base.wrapping_add(at.elapsed().as_secs() as u32);
        let id = s.next_id;
        s.next_id += 1;
        let body = serde_json::to_vec(&json!({ "id": id, "method": method, "params": params }))
            .map_err(|e| DeviceError::Codec(e.to_string()))?;
        let pkt = encode_packet(&d.token, d.device_id, stamp, &body)?;

        for attempt in 1..=2 {
            self.transport.send(&d.address, &pkt)?;
            let deadline = Instant::now() + self.timeout();
            while let Some(left) = deadline.checked_duration_since(Instant::now()) {
                let Some(raw) = self.transport.recv(&d.address, left)? else {
                    break;
                };
                let Ok((h, plain)) = decode_packet(&d.token, &raw) else {
                    continue;
                };
                let Ok(reply) = serde_json::from_slice::<Value>(&plain) else {
                    continue;
                };
                if reply.get("id").and_then(Value::as_u64) != Some(id) {
                    continue; // stale or replayed response
                }
                s.stamp = Some((h.stamp, Instant::now()));
                drop(s);
                if let Some(err) = reply.get("error") {
                    return Err(DeviceError::Device {
                        code: err.get("code").and_then(Value::as_i64).unwrap_or(-1),
                        message: err.get("message").and_then(Value::as_str).unwrap_or("").to_string(),
                    });
                }
                let result = reply.get("result").cloned().unwrap_or(Value::Null);
                self.record(d, method, &params);
                return Ok(CommandOutcome {
                    result,
                    attempts: attempt,
                    request_id: id,
                });
            }
        }
        Err(DeviceError::Unreachable {
            address: d.address.clone(),
        })
    }

    fn record(&self, d: &DeviceDescriptor, method: &str, params: &Value) {
        if method == "get_prop" {
            return; // reads never change intent; the poller reconciles them
        }
        let mut map = self.intended.lock().expect("intended");
        let st = map
            .entry(d.device_id)
            .or_insert_with(|| DeviceState::initial(d.kind, d.device_id));
        let kv: BTreeMap<String, Value> = match params {
            Value::Array(a) if a.len() == 1 => a[0].as_object().map(|o| o.clone().into_iter().collect()),
            Value::Object(o) => Some(o.clone().into_iter().collect()),
            _ => None,
        }
        .unwrap_or_default();
        if let Some((p, v)) = effect(method, &kv) {
            st.properties.insert(p, v);
        }
    }
}

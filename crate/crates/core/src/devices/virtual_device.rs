//! Virtual lamp / TV / air conditioner speaking MiIO.
//!
//! A device answers hello with its id and uptime stamp, decrypts commands
//! with its token, executes them against [`DeviceState`] and replies with
//! `{"id", "result"}` or `{"id", "error": {"code", "message"}}`. A request
//! id it has already executed is answered from cache, not re-executed, so a
//! client retransmit cannot apply a command twice.
//!
//! Faults: `drop_next` swallows that many command packets (hellos are not
//! affected), `offline` ignores everything, `duplicate_responses` sends
//! every reply twice.

use std::collections::HashMap;
use std::net::UdpSocket;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::miio::{decode_packet, encode_packet, hello_reply, Header};
use super::registry::DeviceDescriptor;
use super::state::DeviceState;
use super::DeviceError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Faults {
    pub drop_next: u32,
    pub offline: bool,
    pub duplicate_responses: bool,
}

/// One executed request, as seen by the device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandRecord {
    pub id: u64,
    pub method: String,
    pub params: Value,
    pub ok: bool,
}

struct Inner {
    state: DeviceState,
    log: Vec<CommandRecord>,
    replies: HashMap<u64, Vec<u8>>,
    faults: Faults,
}

pub struct VirtualDevice {
    pub descriptor: DeviceDescriptor,
    boot: Instant,
    start_stamp: u32,
    inner: Mutex<Inner>,
}

impl VirtualDevice {
    pub fn new(descriptor: DeviceDescriptor) -> Self {
        Self::with_stamp(descriptor, 1000)
    }

    /// `start_stamp` is the uptime in seconds reported at creation.
    pub fn with_stamp(descriptor: DeviceDescriptor, start_stamp: u32) -> Self {
        let state = DeviceState::initial(descriptor.kind, descriptor.device_id);
        Self {
            descriptor,
            boot: Instant::now(),
            start_stamp,
            inner: Mutex::new(Inner {
                state,
                log: Vec::new(),
                replies: HashMap::new(),
                faults: Faults::default(),
            }),
        }
    }

    pub fn stamp(&self) -> u32 {
        self.start_stamp + self.boot.elapsed().as_secs() as u32
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        self.inner.lock().expect("device state")
    }

    pub fn state(&self) -> DeviceState {
        self.lock().state.clone()
    }

    pub fn command_log(&self) -> Vec<CommandRecord> {
        self.lock().log.clone()
    }

    pub fn set_faults(&self, f: Faults) {
        self.lock().faults = f;
    }

    pub fn faults(&self) -> Faults {
        self.lock().faults
    }

    /// Change a property behind the controller's back (a physical switch).
    pub fn set_property(&self, name: &str, value: Value) {
        self.lock().state.properties.insert(name.to_string(), value);
    }

    /// Process one incoming datagram; returns the datagrams to send back.
    pub fn handle(&self, packet: &[u8]) -> Vec<Vec<u8>> {
        let mut inner = self.lock();
        if inner.faults.offline {
            return vec![];
        }
        let Ok(header) = Header::parse(packet) else {
            return vec![];
        };
        let stamp = self.stamp();
        let d = &self.descriptor;
        if header.is_hello() {
            return vec![hello_reply(d.device_id, stamp)];
        }
        if inner.faults.drop_next > 0 {
            inner.faults.drop_next -= 1;
            return vec![];
        }
        let Ok((_, body)) = decode_packet(&d.token, packet) else {
            return vec![];
        };
        let Ok(req) = serde_json::from_slice::<Value>(&body) else {
            return vec![];
        };
        let Some(id) = req.get("id").and_then(Value::as_u64) else {
            return vec![];
        };
        let reply = match inner.replies.get(&id) {
            Some(r) => r.clone(),
            None => {
                let method = req.get("method").and_then(Value::as_str).unwrap_or("").to_string();
                let params = req.get("params").cloned().unwrap_or(Value::Null);
                let kind = d.kind;
                let outcome = inner.state.apply(kind, &method, &params);
                let body = match &outcome {
                    Ok(result) => json!({ "id": id, "result": result }),
                    Err(e) => json!({ "id": id, "error": { "code": error_code(e), "message": e.to_string() } }),
                };
                inner.log.push(CommandRecord {
                    id,
                    method,
                    params,
                    ok: outcome.is_ok(),
                });
                let bytes = serde_json::to_vec(&body).expect("reply serializes");
                let Ok(pkt) = encode_packet(&d.token, d.device_id, stamp, &bytes) else {
                    return vec![];
                };
                inner.replies.insert(id, pkt.clone());
                pkt
            }
        };
        if inner.faults.duplicate_responses {
            vec![reply.clone(), reply]
        } else {
            vec![reply]
        }
    }

    /// Answer on `bind` from a background thread until the handle drops.
    pub fn serve(self: &Arc<Self>, bind: &str) -> Result<ServerHandle, DeviceError> {
        let socket = UdpSocket::bind(bind)?;
        socket.set_read_timeout(Some(Duration::from_millis(20)))?;
        let address = socket.local_addr()?.to_string();
        let stop = Arc::new(AtomicBool::new(false));
        let (dev, flag) = (self.clone(), stop.clone());
        let join = std::thread::spawn(move || {
            let mut buf = vec![0u8; 65_536];
            while !flag.load(Ordering::Relaxed) {
                let Ok((n, from)) = socket.recv_from(&mut buf) else {
                    continue;
                };
                for reply in dev.handle(&buf[..n]) {
                    let _ = socket.send_to(&reply, from);
                }
            }
        });
        Ok(ServerHandle {
            address,
            device: self.clone(),
            stop,
            join: Some(join),
        })
    }
}

/// JSON-RPC style codes for device-side failures.
fn error_code(e: &DeviceError) -> i64 {
    match e {
        DeviceError::Unsupported(_) => -32601,
        DeviceError::InvalidParam(_) => -32602,
        _ => -32000,
    }
}

/// A running UDP server; stops and joins on drop.
pub struct ServerHandle {
    pub address: String,
    pub device: Arc<VirtualDevice>,
    stop: Arc<AtomicBool>,
    join: Option<JoinHandle<()>>,
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(j) = self.join.take() {
            let _ = j.join();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::devices::miio::HELLO;
    use crate::devices::registry::Registry;

    fn lamp() -> VirtualDevice {
        VirtualDevice::new(Registry::demo().get("lamp").unwrap().clone())
    }

    fn request(d: &VirtualDevice, id: u64, method: &str, params: Value) -> Vec<Vec<u8>> {
        let body = serde_json::to_vec(&json!({"id": id, "method": method, "params": params})).unwrap();
        d.handle(&encode_packet(&d.descriptor.token, d.descriptor.device_id, 1, &body).unwrap())
    }

    fn reply(d: &VirtualDevice, pkt: &[u8]) -> Value {
        serde_json::from_slice(&decode_packet(&d.descriptor.token, pkt).unwrap().1).unwrap()
    }

    #[test]
    fn hello_and_command() {
        let d = lamp();
        let h = Header::parse(&d.handle(&HELLO)[0]).unwrap();
        assert_eq!(h.device_id, 4097);
        let r = request(&d, 1, "toggle_light", json!([{"power": "on"}]));
        assert_eq!(reply(&d, &r[0]), json!({"id": 1, "result": ["ok"]}));
        assert_eq!(d.state().properties["power"], json!("on"));
    }

    #[test]
    fn repeated_id_is_not_re_executed() {
        let d = lamp();
        request(&d, 7, "set_brightness", json!([{"brightness": 80}]));
        d.set_property("brightness", json!(10));
        let r = request(&d, 7, "set_brightness", json!([{"brightness": 80}]));
        assert_eq!(reply(&d, &r[0])["result"], json!(["ok"]));
        assert_eq!(d.state().properties["brightness"], json!(10));
        assert_eq!(d.command_log().len(), 1);
    }

    #[test]
    fn faults() {
        let d = lamp();
        d.set_faults(Faults {
            drop_next: 1,
            duplicate_responses: true,
            ..Faults::default()
        });
        assert_eq!(d.handle(&HELLO).len(), 1, "hello is not dropped");
        assert!(request(&d, 1, "get_prop", json!(["power"])).is_empty());
        assert_eq!(request(&d, 2, "get_prop", json!(["power"])).len(), 2);
        d.set_faults(Faults {
            offline: true,
            ..Faults::default()
        });
        assert!(d.handle(&HELLO).is_empty());
    }

    #[test]
    fn errors_carry_codes() {
        let d = lamp();
        let r = request(&d, 1, "set_brightness", json!([{"brightness": 500}]));
        assert_eq!(reply(&d, &r[0])["error"]["code"], json!(-32602));
        assert!(!d.command_log()[0].ok);
    }
}

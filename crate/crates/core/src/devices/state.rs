//! Appliance state and the pure command semantics shared by the virtual
//! servers and the replay oracle.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::registry::DeviceKind;
use super::DeviceError;
use crate::Millis;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceState {
    pub device_id: u32,
    pub properties: BTreeMap<String, Value>,
    pub last_seen_ts: Option<Millis>,
    pub stamp: u32,
}

/// Which property an action writes, and from which parameter.
fn target(action: &str) -> Option<(&'static str, &'static str)> {
    Some(match action {
        "toggle_light" | "set_power" => ("power", "power"),
        "set_brightness" => ("brightness", "brightness"),
        "set_temperature" => ("temperature_setpoint", "celsius"),
        "set_mode" => ("mode", "mode"),
        "set_channel" => ("channel", "channel"),
        "set_volume" => ("volume", "volume"),
        _ => return None,
    })
}

/// Property a command would set, if any: (property, value).
pub fn effect(action: &str, params: &BTreeMap<String, Value>) -> Option<(String, Value)> {
    let (prop, param) = target(action)?;
    params.get(param).map(|v| (prop.to_string(), v.clone()))
}

impl DeviceState {
    pub fn initial(kind: DeviceKind, device_id: u32) -> Self {
        let props: Vec<(&str, Value)> = match kind {
            DeviceKind::Lamp => vec![("power", json!("off")), ("brightness", json!(50))],
            DeviceKind::Ac => vec![("power", json!("off")), ("temperature_setpoint", json!(26)), ("mode", json!("cool"))],
            DeviceKind::Tv => vec![("power", json!("off")), ("channel", json!(1)), ("volume", json!(20))],
        };
        Self {
            device_id,
            properties: props.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            last_seen_ts: None,
            stamp: 0,
        }
    }

    /// Execute one command; returns the JSON-RPC `result` value.
    pub fn apply(&mut self, kind: DeviceKind, action: &str, params: &Value) -> Result<Value, DeviceError> {
        if action == "get_prop" {
            let names = params.as_array().cloned().unwrap_or_default();
            return Ok(Value::Array(
                names
                    .iter()
                    .map(|n| n.as_str().and_then(|n| self.properties.get(n)).cloned().unwrap_or(Value::Null))
                    .collect(),
            ));
        }
        let obj = match params {
            Value::Array(items) if items.len() == 1 => items[0].as_object().cloned(),
            Value::Object(o) => Some(o.clone()),
            _ => None,
        }
        .ok_or_else(|| DeviceError::InvalidParam(format!("{action}: params must be a single object")))?;
        let kv: BTreeMap<String, Value> = obj.into_iter().collect();
        let schema = kind.capabilities();
        if !schema.contains_key(action) {
            return Err(DeviceError::Unsupported(action.to_string()));
        }
        let probe = super::registry::DeviceDescriptor {
            name: String::new(),
            device_id: self.device_id,
            token: [0; 16],
            address: String::new(),
            kind,
            room: String::new(),
        };
        probe.check(action, &kv)?;
        if let Some((prop, v)) = effect(action, &kv) {
            self.properties.insert(prop, v);
        }
        Ok(json!(["ok"]))
    }
}

/// State after applying `log` to a fresh device (commands that fail are
/// no-ops, as on the device).
pub fn replay(kind: DeviceKind, device_id: u32, log: &[(String, Value)]) -> DeviceState {
    let mut s = DeviceState::initial(kind, device_id);
    for (a, p) in log {
        let _ = s.apply(kind, a, p);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lamp_semantics() {
        let mut s = DeviceState::initial(DeviceKind::Lamp, 1);
        assert_eq!(s.apply(DeviceKind::Lamp, "toggle_light", &json!([{"power": "on"}])).unwrap(), json!(["ok"]));
        assert_eq!(s.properties["power"], json!("on"));
        assert!(s.apply(DeviceKind::Lamp, "set_brightness", &json!([{"brightness": 0}])).is_err());
        assert_eq!(s.properties["brightness"], json!(50));
        assert_eq!(s.apply(DeviceKind::Lamp, "get_prop", &json!(["power", "nope"])).unwrap(), json!(["on", null]));
        assert!(matches!(s.apply(DeviceKind::Lamp, "set_channel", &json!([{"channel": 3}])), Err(DeviceError::Unsupported(_))));
    }

    #[test]
    fn ac_rejects_out_of_range() {
        let mut s = DeviceState::initial(DeviceKind::Ac, 2);
        assert!(s.apply(DeviceKind::Ac, "set_temperature", &json!([{"celsius": 45}])).is_err());
        s.apply(DeviceKind::Ac, "set_temperature", &json!([{"celsius": 24}])).unwrap();
        assert_eq!(s.properties["temperature_setpoint"], json!(24));
    }
}

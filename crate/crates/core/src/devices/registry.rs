//! Device descriptors, capability schemas and the registry file.
//!
//! ```toml
//! [[devices]]
//! name = "lamp"
//! device_id = 4097
//! token = "00112233445566778899aabbccddeeff"
//! address = "127.0.0.1:54321"
//! kind = "lamp"
//! room = "living_room"
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::miio::Token;
use super::DeviceError;

pub const DEFAULT_PORT: u16 = 54321;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeviceKind {
    Lamp,
    Tv,
    Ac,
}

/// Constraint on one parameter value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamSpec {
    OneOf(Vec<String>),
    Range { min: f64, max: f64 },
}

impl ParamSpec {
    fn one_of(v: &[&str]) -> Self {
        Self::OneOf(v.iter().map(|s| s.to_string()).collect())
    }

    pub fn admits(&self, v: &Value) -> bool {
        match self {
            Self::OneOf(opts) => v.as_str().map_or(false, |s| opts.iter().any(|o| o == s)),
            Self::Range { min, max } => v.as_f64().map_or(false, |x| x >= *min && x <= *max),
        }
    }
}

/// action → parameter name → constraint
pub type Capabilities = BTreeMap<String, BTreeMap<String, ParamSpec>>;

/// Every action any device understands (besides `get_prop`).
pub const ACTION_VOCABULARY: [&str; 8] = [
    "toggle_light",
    "set_brightness",
    "set_power",
    "set_temperature",
    "set_mode",
    "set_channel",
    "set_volume",
    "get_prop",
];

impl DeviceKind {
    pub fn capabilities(self) -> Capabilities {
        let power = || ("power".to_string(), ParamSpec::one_of(&["on", "off"]));
        let range = |name: &str, min: f64, max: f64| (name.to_string(), ParamSpec::Range { min, max });
        let mut c: Vec<(&str, Vec<(String, ParamSpec)>)> = match self {
            Self::Lamp => vec![
                ("toggle_light", vec![power()]),
                ("set_brightness", vec![range("brightness", 1.0, 100.0)]),
            ],
            Self::Ac => vec![
                ("set_power", vec![power()]),
                ("set_temperature", vec![range("celsius", 16.0, 30.0)]),
                ("set_mode", vec![("mode".into(), ParamSpec::one_of(&["cool", "heat", "fan", "auto"]))]),
            ],
            Self::Tv => vec![
                ("set_power", vec![power()]),
                ("set_channel", vec![range("channel", 1.0, 999.0)]),
                ("set_volume", vec![range("volume", 0.0, 100.0)]),
            ],
        };
        c.push(("get_prop", vec![]));
        c.into_iter().map(|(a, ps)| (a.to_string(), ps.into_iter().collect())).collect()
    }

    /// The action that switches this kind on or off.
    pub fn power_action(self) -> &'static str {
        match self {
            Self::Lamp => "toggle_light",
            Self::Ac | Self::Tv => "set_power",
        }
    }

    /// Kind shown by a camera detector label.
    pub fn from_label(label: &str) -> Option<Self> {
        match label {
            "lamp" | "light" => Some(Self::Lamp),
            "tv" | "television" => Some(Self::Tv),
            "air_conditioner" | "ac" => Some(Self::Ac),
            _ => None,
        }
    }

    /// Polled properties, in `get_prop` order.
    pub fn properties(self) -> &'static [&'static str] {
        match self {
            Self::Lamp => &["power", "brightness"],
            Self::Ac => &["power", "temperature_setpoint", "mode"],
            Self::Tv => &["power", "channel", "volume"],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceDescriptor {
    pub name: String,
    pub device_id: u32,
    #[serde(with = "hex_token")]
    pub token: Token,
    pub address: String,
    pub kind: DeviceKind,
    #[serde(default)]
    pub room: String,
}

impl DeviceDescriptor {
    pub fn capabilities(&self) -> Capabilities {
        self.kind.capabilities()
    }

    /// Check an action and its parameters against the schema.
    pub fn check(&self, action: &str, params: &BTreeMap<String, Value>) -> Result<(), DeviceError> {
        let caps = self.capabilities();
        let schema = caps.get(action).ok_or_else(|| DeviceError::Unsupported(action.to_string()))?;
        for (k, v) in params {
            let spec = schema
                .get(k)
                .ok_or_else(|| DeviceError::InvalidParam(format!("{action}: unknown parameter {k}")))?;
            if !spec.admits(v) {
                return Err(DeviceError::InvalidParam(format!("{action}: {k}={v} outside {spec:?}")));
            }
        }
        if let Some(missing) = schema.keys().find(|k| !params.contains_key(*k)) {
            return Err(DeviceError::InvalidParam(format!("{action}: missing {missing}")));
        }
        Ok(())
    }
}

mod hex_token {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &[u8; 16], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(t))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 16], D::Error> {
        let s = String::deserialize(d)?;
        let v = hex::decode(&s).map_err(serde::de::Error::custom)?;
        v.as_slice()
            .try_into()
            .map_err(|_| serde::de::Error::custom(format!("token must be 16 bytes, got {}", v.len())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Registry {
    pub devices: Vec<DeviceDescriptor>,
}

impl Registry {
    pub fn parse(text: &str) -> Result<Self, DeviceError> {
        let r: Self = toml::from_str(text).map_err(|e| DeviceError::Registry(e.to_string()))?;
        r.validate()?;
        Ok(r)
    }

    pub fn load(path: &Path) -> Result<Self, DeviceError> {
        let text = std::fs::read_to_string(path).map_err(|e| DeviceError::Registry(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("registry serializes")
    }

    pub fn validate(&self) -> Result<(), DeviceError> {
        let mut ids = BTreeSet::new();
        let mut names = BTreeSet::new();
        for d in &self.devices {
            if !ids.insert(d.device_id) {
                return Err(DeviceError::Registry(format!("duplicate device_id {}", d.device_id)));
            }
            if !names.insert(d.name.as_str()) {
                return Err(DeviceError::Registry(format!("duplicate device name {}", d.name)));
            }
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&DeviceDescriptor> {
        self.devices.iter().find(|d| d.name == name)
    }

    pub fn by_id(&self, id: u32) -> Option<&DeviceDescriptor> {
        self.devices.iter().find(|d| d.device_id == id)
    }

    /// First device of `kind`, preferring one in `room` when given.
    pub fn find(&self, kind: DeviceKind, room: Option<&str>) -> Option<&DeviceDescriptor> {
        let mut of_kind = self.devices.iter().filter(|d| d.kind == kind);
        match room {
            Some(r) => of_kind.find(|d| d.room == r),
            None => of_kind.next(),
        }
    }

    /// The bundled living room: lamp, air conditioner and TV on loopback.
    pub fn demo() -> Self {
        Self::parse(include_str!("../../data/registry.toml")).expect("bundled registry is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn capability_actions_are_in_vocabulary() {
        for k in [DeviceKind::Lamp, DeviceKind::Tv, DeviceKind::Ac] {
            for a in k.capabilities().keys() {
                assert!(ACTION_VOCABULARY.contains(&a.as_str()), "{a}");
            }
        }
    }

    #[test]
    fn demo_registry_round_trips() {
        let r = Registry::demo();
        assert_eq!(r.devices.len(), 3);
        assert_eq!(Registry::parse(&r.to_toml()).unwrap(), r);
        assert_eq!(r.find(DeviceKind::Ac, None).unwrap().name, "ac");
    }

    #[test]
    fn bad_tokens_and_duplicates_are_rejected() {
        let one = |id: u32, tok: &str| format!("[[devices]]\nname = \"d{id}\"\ndevice_id = {id}\ntoken = \"{tok}\"\naddress = \"127.0.0.1:1\"\nkind = \"lamp\"\n");
        let good = "00112233445566778899aabbccddeeff";
        assert!(Registry::parse(&one(1, good)).is_ok());
        assert!(Registry::parse(&one(1, "0011")).is_err());
        let dup = format!("{}{}", one(1, good), one(1, good).replace("name = \"d1\"", "name = \"x\""));
        assert!(Registry::parse(&dup).is_err());
    }

    #[test]
    fn schema_check() {
        let d = Registry::demo().get("ac").unwrap().clone();
        let p = |v: Value| v.as_object().unwrap().clone().into_iter().collect::<BTreeMap<_, _>>();
        assert!(d.check("set_temperature", &p(json!({"celsius": 24}))).is_ok());
        assert!(matches!(d.check("set_temperature", &p(json!({"celsius": 45}))), Err(DeviceError::InvalidParam(_))));
        assert!(matches!(d.check("unlock_front_door", &p(json!({}))), Err(DeviceError::Unsupported(_))));
        assert!(d.check("set_power", &p(json!({}))).is_err());
    }
}

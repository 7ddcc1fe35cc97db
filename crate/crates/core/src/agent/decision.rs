//! Agent decisions and their strict parser.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterventionKind {
    Reminder,
    DeviceCommand,
    CaregiverAlert,
    PauseTraining,
    None,
}

/// One action. `device_command` uses device/action/params; reminders and
/// alerts use `text`; an alert names its channel in `params.channel`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Intervention {
    pub kind: InterventionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub device: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<BTreeMap<String, Value>>,
}

impl Intervention {
    pub fn of(kind: InterventionKind) -> Self {
        Self {
            kind,
            text: None,
            device: None,
            action: None,
            params: None,
        }
    }

    pub fn text(kind: InterventionKind, text: &str) -> Self {
        Self {
            text: Some(text.to_string()),
            ..Self::of(kind)
        }
    }

    pub fn command(device: &str, action: &str, params: BTreeMap<String, Value>) -> Self {
        Self {
            device: Some(device.to_string()),
            action: Some(action.to_string()),
            params: Some(params),
            ..Self::of(InterventionKind::DeviceCommand)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentDecision {
    pub interventions: Vec<Intervention>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale: Option<String>,
}

impl AgentDecision {
    pub fn none() -> Self {
        Self {
            interventions: vec![Intervention::of(InterventionKind::None)],
            rationale: None,
        }
    }

    pub fn is_none(&self) -> bool {
        self.interventions.iter().all(|i| i.kind == InterventionKind::None)
    }

    pub fn kinds(&self) -> Vec<InterventionKind> {
        self.interventions.iter().map(|i| i.kind).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("line {line} column {column}: {reason}")]
pub struct ParseFailure {
    pub line: usize,
    pub column: usize,
    pub reason: String,
}

/// Strict parse: exactly one JSON object of the decision schema, no unknown
/// fields, nothing around it but whitespace.
pub fn parse_decision(raw: &str) -> Result<AgentDecision, ParseFailure> {
    serde_json::from_str(raw).map_err(|e| ParseFailure {
        line: e.line(),
        column: e.column(),
        reason: e.to_string(),
    })
}

/// JSON schema handed to the model in every prompt.
pub fn required_output_schema() -> Value {
    serde_json::json!({
        "type": "object",
        "additionalProperties": false,
        "required": ["interventions"],
        "properties": {
            "interventions": {
                "type": "array",
                "items": {
                    "type": "object",
                    "additionalProperties": false,
                    "required": ["kind"],
                    "properties": {
                        "kind": { "enum": ["reminder", "device_command", "caregiver_alert", "pause_training", "none"] },
                        "text": { "type": "string" },
                        "device": { "type": "string" },
                        "action": { "type": "string" },
                        "params": { "type": "object" }
                    }
                }
            },
            "rationale": { "type": "string" }
        }
    })
}

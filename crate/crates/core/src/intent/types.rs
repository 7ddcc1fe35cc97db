use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::Millis;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazeSample {
    pub timestamp: Millis,
    pub x: f64,
    pub y: f64,
    pub valid: bool,
}

impl GazeSample {
    pub fn is_well_formed(&self) -> bool {
        !self.valid || ((0.0..=1.0).contains(&self.x) && (0.0..=1.0).contains(&self.y))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlinkEvent {
    pub timestamp: Millis,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fixation {
    pub x: f64,
    pub y: f64,
    pub start_ts: Millis,
    pub duration_ms: Millis,
}

impl Fixation {
    pub fn end_ts(&self) -> Millis {
        self.start_ts + self.duration_ms
    }
}

/// Normalized detector box in scene coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectBox {
    pub label: String,
    pub bbox: [f64; 4],
    #[serde(default)]
    pub scene: String,
}

impl ObjectBox {
    pub fn new(label: &str, bbox: [f64; 4], scene: &str) -> Self {
        Self {
            label: label.to_string(),
            bbox,
            scene: scene.to_string(),
        }
    }

    pub fn is_well_formed(&self) -> bool {
        let [x0, y0, x1, y1] = self.bbox;
        x0 < x1 && y0 < y1 && self.bbox.iter().all(|v| (0.0..=1.0).contains(v))
    }

    pub fn area(&self) -> f64 {
        let [x0, y0, x1, y1] = self.bbox;
        (x1 - x0) * (y1 - y0)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let [x0, y0, x1, y1] = self.bbox;
        x >= x0 && x <= x1 && y >= y0 && y <= y1
    }

    pub fn center(&self) -> (f64, f64) {
        let [x0, y0, x1, y1] = self.bbox;
        ((x0 + x1) / 2.0, (y0 + y1) / 2.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activity {
    Walking,
    Sitting,
    Falling,
    Idle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionState {
    pub activity: Activity,
    pub timestamp: Millis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntentSource {
    Voice,
    Gaze,
    Agent,
}

/// A validated request to change one device's state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Intent {
    pub target_device: String,
    pub action: String,
    pub params: BTreeMap<String, serde_json::Value>,
    pub source: IntentSource,
    pub issued_ts: Millis,
}

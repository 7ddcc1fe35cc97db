//! Device clock models and mapping onto the gateway's unified time base.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use super::GatewayError;
use crate::Millis;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClockModel {
    pub offset_ms: f64,
    pub drift_ppm: f64,
}

impl ClockModel {
    pub const IDENTITY: ClockModel = ClockModel {
        offset_ms: 0.0,
        drift_ppm: 0.0,
    };

    pub fn new(offset_ms: f64, drift_ppm: f64) -> Result<Self, GatewayError> {
        if !(drift_ppm.abs() < 1000.0) || !offset_ms.is_finite() {
            return Err(GatewayError::InvalidClock(format!(
                "offset {offset_ms} ms / drift {drift_ppm} ppm"
            )));
        }
        Ok(Self { offset_ms, drift_ppm })
    }

    /// Inverse of [`synchronize`]: the reading a device with this clock
    /// shows at unified time `unified_ms`.
    pub fn device_reading(&self, unified_ms: f64) -> Millis {
        ((unified_ms - self.offset_ms) / (1.0 + self.drift_ppm * 1e-6)).round() as Millis
    }
}

/// unified = device + offset + drift * device / 1e6, rounded to the ms.
pub fn synchronize(device_ts: Millis, clock: &ClockModel) -> Millis {
    let d = device_ts as f64;
    (d + clock.offset_ms + clock.drift_ppm * d / 1e6).round() as Millis
}

/// Per-source clocks as estimated by the local time server.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClockRegistry {
    clocks: BTreeMap<String, ClockModel>,
}

impl ClockRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, source: impl Into<String>, clock: ClockModel) {
        self.clocks.insert(source.into(), clock);
    }

    pub fn get(&self, source: &str) -> Option<&ClockModel> {
        self.clocks.get(source)
    }

    pub fn synchronize(&self, source: &str, device_ts: Millis) -> Result<Millis, GatewayError> {
        self.clocks
            .get(source)
            .map(|c| synchronize(device_ts, c))
            .ok_or_else(|| GatewayError::UnknownSource(source.to_string()))
    }

    pub fn sources(&self) -> impl Iterator<Item = (&String, &ClockModel)> {
        self.clocks.iter()
    }
}

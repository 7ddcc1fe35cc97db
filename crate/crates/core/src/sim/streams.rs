//! Wristband physiology and ambient light records.

use serde::{Deserialize, Serialize};

use crate::Millis;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysioSample {
    pub timestamp: Millis,
    /// bpm
    pub heart_rate: f64,
    /// RMSSD-style scalar, ms
    pub hrv: f64,
    /// °C
    pub skin_temp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmbientSample {
    pub timestamp: Millis,
    /// lux
    pub light_level: f64,
    /// local wall-clock seconds since midnight
    pub time_of_day: f64,
}

/// Piecewise-linear signal: holds `base` until the first ramp, then
/// follows each ramp and holds its end value.
#[derive(Debug, Clone, PartialEq)]
pub struct RampTrack {
    base: f64,
    /// (start_ms, end_ms, from, to), sorted by start
    ramps: Vec<(f64, f64, f64, f64)>,
}

impl RampTrack {
    pub fn new(base: f64) -> Self {
        Self { base, ramps: Vec::new() }
    }

    pub fn push(&mut self, start_ms: f64, duration_ms: f64, from: f64, to: f64) {
        self.ramps.push((start_ms, start_ms + duration_ms, from, to));
    }

    pub fn value(&self, t_ms: f64) -> f64 {
        let mut v = self.base;
        for &(s, e, from, to) in &self.ramps {
            if t_ms < s {
                break;
            }
            v = if t_ms >= e || e <= s {
                to
            } else {
                from + (to - from) * (t_ms - s) / (e - s)
            };
        }
        v
    }
}

//! Sensor packets as they arrive at the gateway.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::intent::types::{ActionState, BlinkEvent, GazeSample, ObjectBox};
use crate::sim::gait::{PressureFrame, CHANNELS};
use crate::sim::streams::{AmbientSample, PhysioSample};
use crate::Millis;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Pressure,
    Physio,
    Ambient,
    Gaze,
    Voice,
    Perception,
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Pressure => "pressure",
            Self::Physio => "physio",
            Self::Ambient => "ambient",
            Self::Gaze => "gaze",
            Self::Voice => "voice",
            Self::Perception => "perception",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GazeRecord {
    Sample(GazeSample),
    Blink(BlinkEvent),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoiceUtterance {
    pub text: String,
}

/// Camera-side perception output. The detector and pose models are out of
/// scope; the simulator emits their results directly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PerceptionEvent {
    Action(ActionState),
    Objects { boxes: Vec<ObjectBox> },
    /// Video review of a walking bout.
    WalkAnnotation { assisted: bool, speed_change: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "data", rename_all = "snake_case")]
pub enum Payload {
    Pressure(PressureFrame),
    Physio(PhysioSample),
    Ambient(AmbientSample),
    Gaze(GazeRecord),
    Voice(VoiceUtterance),
    Perception(PerceptionEvent),
}

impl Payload {
    pub fn modality(&self) -> Modality {
        match self {
            Self::Pressure(_) => Modality::Pressure,
            Self::Physio(_) => Modality::Physio,
            Self::Ambient(_) => Modality::Ambient,
            Self::Gaze(_) => Modality::Gaze,
            Self::Voice(_) => Modality::Voice,
            Self::Perception(_) => Modality::Perception,
        }
    }

    /// Content checks beyond the type system. Returns the reason on failure.
    pub fn check(&self) -> Result<(), String> {
        match self {
            Self::Pressure(f) => {
                if f.values.len() != CHANNELS || f.values.iter().any(|v| !(*v >= 0.0)) {
                    return Err("pressure values must be finite and >= 0".into());
                }
            }
            Self::Physio(p) => {
                if !(30.0..=220.0).contains(&p.heart_rate) || !(p.hrv >= 0.0) || !(30.0..=42.0).contains(&p.skin_temp) {
                    return Err("physio sample out of physiological range".into());
                }
            }
            Self::Ambient(a) => {
                if !(a.light_level >= 0.0) {
                    return Err("light level must be >= 0".into());
                }
            }
            Self::Gaze(GazeRecord::Sample(g)) => {
                if !g.is_well_formed() {
                    return Err("gaze coordinates outside [0,1]".into());
                }
            }
            Self::Gaze(GazeRecord::Blink(_)) => {}
            Self::Voice(v) => {
                if v.text.trim().is_empty() {
                    return Err("empty utterance".into());
                }
            }
            Self::Perception(PerceptionEvent::Objects { boxes }) => {
                if boxes.iter().any(|b| !b.is_well_formed()) {
                    return Err("malformed object box".into());
                }
            }
            Self::Perception(_) => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorPacket {
    pub source_id: String,
    pub modality: Modality,
    /// device clock, ms
    pub device_timestamp: Millis,
    pub payload: Payload,
}

impl SensorPacket {
    pub fn new(source_id: impl Into<String>, device_timestamp: Millis, payload: Payload) -> Self {
        Self {
            source_id: source_id.into(),
            modality: payload.modality(),
            device_timestamp,
            payload,
        }
    }
}

/// Anything that consumes simulator output.
pub trait PacketSink {
    fn accept(&mut self, packet: SensorPacket);
}

impl PacketSink for Vec<SensorPacket> {
    fn accept(&mut self, packet: SensorPacket) {
        self.push(packet);
    }
}

/// Adapts a closure into a sink.
pub struct FnSink<F>(pub F);

impl<F: FnMut(SensorPacket)> PacketSink for FnSink<F> {
    fn accept(&mut self, packet: SensorPacket) {
        (self.0)(packet)
    }
}

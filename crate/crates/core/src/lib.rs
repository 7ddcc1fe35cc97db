//! Simulatable multimodal smart-home rehabilitation platform.
//!
//! Synthetic wearable and ambient streams feed a clock-synchronizing gateway
//! that segments gait, extracts features and classifies impairment. The same
//! timeline drives gaze/voice intents to MiIO-speaking virtual appliances and
//! an assistance agent whose decisions pass a safety layer before dispatch.

pub mod agent;
pub mod analytics;
pub mod devices;
pub mod gateway;
pub mod intent;
pub mod model;
pub mod runner;
pub mod seed;
pub mod sim;

/// Milliseconds, either on a device clock or the gateway's unified clock.
pub type Millis = i64;

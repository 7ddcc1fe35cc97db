//! Gait descriptors, spectrograms and pressure-map rasterization.

pub mod export;
pub mod features;
pub mod raster;
pub mod spectrogram;
pub mod stats;

use thiserror::Error;

pub use features::{asymmetry_index, coefficient_of_variation, extract_features, stance_phase_ratio, GaitFeatures};
pub use raster::{rasterize_pressure_map, PressureMap};
pub use spectrogram::{spectrogram, Spectrogram};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticsError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("no complete gait cycle in segment")]
    NoCycle,
    #[error("io error: {0}")]
    Io(String),
}

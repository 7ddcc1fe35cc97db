//! Feature table CSV export.

use serde::{Deserialize, Serialize};
use std::io::Write;

use super::features::GaitFeatures;
use super::AnalyticsError;
use crate::sim::profile::ImpairmentLevel;
use crate::Millis;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub patient: String,
    pub ts: Millis,
    pub cv: f64,
    pub stance_ratio_left: f64,
    pub stance_ratio_right: f64,
    pub pressure_asym: f64,
    pub stance_asym: f64,
    pub mean_peak_pressure_left: f64,
    pub mean_peak_pressure_right: f64,
    pub cadence: f64,
    pub label: Option<ImpairmentLevel>,
}

impl FeatureRow {
    pub fn new(patient: &str, ts: Millis, f: &GaitFeatures, label: Option<ImpairmentLevel>) -> Self {
        Self {
            patient: patient.to_string(),
            ts,
            cv: f.cv,
            stance_ratio_left: f.stance_ratio_left,
            stance_ratio_right: f.stance_ratio_right,
            pressure_asym: f.pressure_asym,
            stance_asym: f.stance_asym,
            mean_peak_pressure_left: f.mean_peak_pressure_left,
            mean_peak_pressure_right: f.mean_peak_pressure_right,
            cadence: f.cadence,
            label,
        }
    }
}

pub fn write_feature_csv<W: Write>(w: W, rows: &[FeatureRow]) -> Result<(), AnalyticsError> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r).map_err(|e| AnalyticsError::Io(e.to_string()))?;
    }
    out.flush().map_err(|e| AnalyticsError::Io(e.to_string()))
}

pub fn read_feature_csv<R: std::io::Read>(r: R) -> Result<Vec<FeatureRow>, AnalyticsError> {
    csv::Reader::from_reader(r)
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| AnalyticsError::Io(e.to_string()))
}

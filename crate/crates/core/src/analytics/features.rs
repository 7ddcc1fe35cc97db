//! Stride variability, stance-phase ratio and left/right asymmetry.
//!
//! All features are ratios, so scaling every pressure by k > 0 leaves them
//! unchanged. CV is measured over the peak summed force of each complete
//! contact, averaged across the two feet.

use serde::{Deserialize, Serialize};

use super::AnalyticsError;
use crate::gateway::segment::GaitSegment;
use crate::gateway::strides::{contact_intervals, Contact};
use crate::sim::gait::Foot;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaitFeatures {
    pub cv: f64,
    pub stance_ratio_left: f64,
    pub stance_ratio_right: f64,
    pub pressure_asym: f64,
    pub stance_asym: f64,
    pub mean_peak_pressure_left: f64,
    pub mean_peak_pressure_right: f64,
    pub cadence: f64,
}

/// Population standard deviation over mean.
pub fn coefficient_of_variation(series: &[f64]) -> Result<f64, AnalyticsError> {
    if series.is_empty() {
        return Err(AnalyticsError::Domain("CV of an empty series".into()));
    }
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    if mean == 0.0 || !mean.is_finite() {
        return Err(AnalyticsError::Domain("CV undefined for zero mean".into()));
    }
    let var = series.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    Ok(var.sqrt() / mean.abs())
}

/// |l − r| / ((l + r) / 2)
pub fn asymmetry_index(l: f64, r: f64) -> Result<f64, AnalyticsError> {
    if !(l + r > 0.0) {
        return Err(AnalyticsError::Domain("asymmetry index needs l + r > 0".into()));
    }
    Ok((l - r).abs() / ((l + r) / 2.0))
}

struct FootCycles {
    contacts: Vec<Contact>,
    totals: Vec<f64>,
}

impl FootCycles {
    fn new(segment: &GaitSegment, foot: Foot) -> Self {
        let totals = segment.totals(foot);
        Self {
            contacts: contact_intervals(&totals, GaitSegment::RATE_HZ),
            totals,
        }
    }

    /// (contact frames, cycle frames) for each onset-to-onset cycle whose
    /// contact is fully observed.
    fn cycles(&self) -> Vec<(usize, usize)> {
        self.contacts
            .windows(2)
            .filter(|w| w[0].complete)
            .map(|w| (w[0].end - w[0].start, w[1].start - w[0].start))
            .collect()
    }

    fn peaks(&self) -> Vec<f64> {
        self.contacts
            .iter()
            .filter(|c| c.complete)
            .map(|c| self.totals[c.start..c.end].iter().copied().fold(0.0, f64::max))
            .collect()
    }
}

fn ratio_of(cycles: &[(usize, usize)]) -> Result<f64, AnalyticsError> {
    let contact: usize = cycles.iter().map(|c| c.0).sum();
    let cycle: usize = cycles.iter().map(|c| c.1).sum();
    if cycle == 0 {
        return Err(AnalyticsError::NoCycle);
    }
    Ok(contact as f64 / cycle as f64)
}

/// Total contact time over total cycle time across complete cycles.
pub fn stance_phase_ratio(segment: &GaitSegment, foot: Foot) -> Result<f64, AnalyticsError> {
    ratio_of(&FootCycles::new(segment, foot).cycles())
}

/// Per-stride peak summed force for one foot (complete contacts only).
pub fn stride_peaks(segment: &GaitSegment, foot: Foot) -> Vec<f64> {
    FootCycles::new(segment, foot).peaks()
}

pub fn extract_features(segment: &GaitSegment) -> Result<GaitFeatures, AnalyticsError> {
    let l = FootCycles::new(segment, Foot::Left);
    let r = FootCycles::new(segment, Foot::Right);
    let (lc, rc) = (l.cycles(), r.cycles());
    let stance_ratio_left = ratio_of(&lc)?;
    let stance_ratio_right = ratio_of(&rc)?;
    let (lp, rp) = (l.peaks(), r.peaks());
    let cv = (coefficient_of_variation(&lp)? + coefficient_of_variation(&rp)?) / 2.0;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mean_peak_pressure_left, mean_peak_pressure_right) = (mean(&lp), mean(&rp));
    let cadence_of = |c: &[(usize, usize)]| {
        let frames: usize = c.iter().map(|x| x.1).sum();
        c.len() as f64 / (frames as f64 / GaitSegment::RATE_HZ)
    };
    Ok(GaitFeatures {
        cv,
        stance_ratio_left,
        stance_ratio_right,
        pressure_asym: asymmetry_index(mean_peak_pressure_left, mean_peak_pressure_right)?,
        stance_asym: asymmetry_index(stance_ratio_left, stance_ratio_right)?,
        mean_peak_pressure_left,
        mean_peak_pressure_right,
        cadence: (cadence_of(&lc) + cadence_of(&rc)) / 2.0,
    })
}

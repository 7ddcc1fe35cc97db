//! Synthetic cohort through the real pipeline: scripted walks are streamed
//! into a gateway, segmented, filtered, and labelled from the patient's FMA.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::RunError;
use crate::gateway::{
    detect_bouts, edge_case_filter, segment_walks, FilterVerdict, FnSink, FusedTimeline, GaitSegment, Gateway,
    RejectReason, SegmentStats,
};
use crate::seed;
use crate::sim::gait::SpeedProfile;
use crate::sim::profile::{ImpairmentLevel, PatientProfile};
use crate::sim::run::{run_scenario, Subject};
use crate::sim::scenario::{ScenarioEvent, ScenarioScript, TimedEvent};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CohortSpec {
    /// walking bouts recorded per patient
    pub walks_per_patient: usize,
    pub walk_s: f64,
    /// seated rest between bouts
    pub rest_s: f64,
    /// subset of reference-cohort ids; empty means all twenty
    pub patients: Vec<String>,
}

impl Default for CohortSpec {
    fn default() -> Self {
        Self {
            walks_per_patient: 2,
            walk_s: 60.0,
            rest_s: 20.0,
            patients: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientSummary {
    pub patient: String,
    pub level: ImpairmentLevel,
    pub accepted: usize,
    pub rejected: BTreeMap<RejectReason, usize>,
    pub stats: SegmentStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CohortData {
    pub segments: Vec<GaitSegment>,
    pub patients: Vec<PatientSummary>,
}

impl CohortData {
    pub fn class_counts(&self) -> [usize; 3] {
        let mut c = [0; 3];
        for s in &self.segments {
            if let Some(l) = s.label {
                c[l.index()] += 1;
            }
        }
        c
    }
}

/// Walk / sit alternation for one patient.
pub fn patient_script(profile: &PatientProfile, spec: &CohortSpec, seed: u64) -> ScenarioScript {
    let mut events = Vec::new();
    let mut t = 0.0;
    for _ in 0..spec.walks_per_patient {
        events.push(TimedEvent {
            t_s: t,
            event: ScenarioEvent::StartWalk {
                duration_s: spec.walk_s,
                assisted: false,
                speed_profile: SpeedProfile::Constant,
            },
        });
        t += spec.walk_s;
        events.push(TimedEvent {
            t_s: t,
            event: ScenarioEvent::Sit,
        });
        t += spec.rest_s;
    }
    ScenarioScript {
        seed: seed::derive(seed, &profile.id),
        patient: profile.id.clone(),
        name: Some(format!("cohort-{}", profile.id)),
        start_clock: "10:00".into(),
        baseline: Default::default(),
        objects: crate::sim::scenario::default_objects(),
        clocks: Vec::new(),
        events,
    }
}

/// Stream a script through a fresh gateway and return the fused timeline.
pub fn timeline_for(script: &ScenarioScript, subject: &Subject) -> Result<FusedTimeline, RunError> {
    let clocks = crate::sim::run::scenario_clocks(script)?;
    let gw = Gateway::new(clocks);
    let mut err = None;
    let mut sink = FnSink(|p| {
        if let Err(e) = gw.ingest(p) {
            err.get_or_insert(e);
        }
        gw.flush();
    });
    run_scenario(script, subject, &mut sink)?;
    if let Some(e) = err {
        return Err(e.into());
    }
    gw.flush_all();
    Ok(gw.take_timeline())
}

/// Segments of one timeline split by the admission filter.
pub fn admit(
    timeline: &FusedTimeline,
    patient: &str,
    label: Option<ImpairmentLevel>,
) -> (Vec<GaitSegment>, BTreeMap<RejectReason, usize>, SegmentStats) {
    let bouts = detect_bouts(timeline);
    let (segs, stats) = segment_walks(timeline, &bouts, patient, label);
    let mut rejected = BTreeMap::new();
    let mut accepted = Vec::new();
    for s in segs {
        match edge_case_filter(&s) {
            FilterVerdict::Accept => accepted.push(s),
            FilterVerdict::Reject(r) => *rejected.entry(r).or_insert(0) += 1,
        }
    }
    (accepted, rejected, stats)
}

/// Members of `cohort` selected by `spec.patients`; unknown ids are an error.
pub fn select_patients(cohort: &[PatientProfile], spec: &CohortSpec) -> Result<Vec<PatientProfile>, RunError> {
    if spec.patients.is_empty() {
        return Ok(cohort.to_vec());
    }
    spec.patients
        .iter()
        .map(|id| {
            cohort
                .iter()
                .find(|p| &p.id == id)
                .cloned()
                .ok_or_else(|| RunError::Config(format!("unknown patient {id}")))
        })
        .collect()
}

pub fn simulate_cohort(cohort: &[PatientProfile], spec: &CohortSpec, seed: u64) -> Result<CohortData, RunError> {
    let mut segments = Vec::new();
    let mut patients = Vec::new();
    for profile in &select_patients(cohort, spec)? {
        let subject = Subject::from_profile(profile.clone(), seed);
        let script = patient_script(profile, spec, seed);
        let tl = timeline_for(&script, &subject)?;
        let level = profile.level();
        let (acc, rejected, stats) = admit(&tl, &profile.id, Some(level));
        patients.push(PatientSummary {
            patient: profile.id.clone(),
            level,
            accepted: acc.len(),
            rejected,
            stats,
        });
        segments.extend(acc);
    }
    Ok(CohortData { segments, patients })
}

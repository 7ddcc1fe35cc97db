//! Walking-bout detection, 5-s gait windows and the admission filter.

use serde::{Deserialize, Serialize};

use super::packet::{Payload, PerceptionEvent};
use super::strides::count_strides;
use super::timeline::FusedTimeline;
use crate::sim::gait::{Foot, PressureFrame, CHANNELS};
use crate::sim::profile::ImpairmentLevel;
use crate::Millis;

pub const SEGMENT_MS: Millis = 5000;
pub const SEGMENT_FRAMES: usize = 1000;
pub const FRAME_MS: f64 = 5.0;
/// Left/right rows pair when their timestamps are this close.
pub const PAIR_TOLERANCE_MS: f64 = 2.5;
/// Larger stream holes drop the window.
pub const MAX_GAP_MS: f64 = 50.0;
/// Summed two-foot force that counts as loading.
pub const BOUT_FORCE_THRESHOLD: f64 = 100.0;
pub const BOUT_MIN_ACTIVE_MS: Millis = 500;
pub const BOUT_QUIET_MS: Millis = 1000;
/// Context kept on either side of the loaded span of a bout.
pub const BOUT_PAD_MS: Millis = 500;
pub const MIN_STRIDES: usize = 3;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentFlags {
    pub assisted: bool,
    pub speed_change: bool,
}

/// A 5-s, 200 Hz, two-foot pressure window. Rows are frames, stored flat
/// (row-major, 48 channels per row).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaitSegment {
    pub patient_ref: String,
    pub start_ts: Millis,
    pub left: Vec<f32>,
    pub right: Vec<f32>,
    pub label: Option<ImpairmentLevel>,
    pub flags: SegmentFlags,
}

impl GaitSegment {
    pub const RATE_HZ: f64 = 200.0;

    pub fn foot(&self, foot: Foot) -> &[f32] {
        match foot {
            Foot::Left => &self.left,
            Foot::Right => &self.right,
        }
    }

    pub fn frame(&self, foot: Foot, row: usize) -> &[f32] {
        &self.foot(foot)[row * CHANNELS..(row + 1) * CHANNELS]
    }

    pub fn rows(&self) -> usize {
        self.left.len() / CHANNELS
    }

    /// Summed force per frame.
    pub fn totals(&self, foot: Foot) -> Vec<f64> {
        self.foot(foot)
            .chunks_exact(CHANNELS)
            .map(|r| r.iter().map(|&v| f64::from(v)).sum())
            .collect()
    }

    pub fn totals_left(&self) -> Vec<f64> {
        self.totals(Foot::Left)
    }

    pub fn totals_right(&self) -> Vec<f64> {
        self.totals(Foot::Right)
    }

    /// Shape and sign invariants.
    pub fn is_valid(&self) -> bool {
        self.left.len() == SEGMENT_FRAMES * CHANNELS
            && self.right.len() == SEGMENT_FRAMES * CHANNELS
            && self.left.iter().chain(&self.right).all(|&v| v >= 0.0)
    }

    /// Build from explicit frames (tests and replay tooling).
    pub fn from_frames(patient_ref: &str, start_ts: Millis, left: &[[f32; CHANNELS]], right: &[[f32; CHANNELS]]) -> Self {
        Self {
            patient_ref: patient_ref.to_string(),
            start_ts,
            left: left.iter().flatten().copied().collect(),
            right: right.iter().flatten().copied().collect(),
            label: None,
            flags: SegmentFlags::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    ShortWalk,
    Assisted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FilterVerdict {
    Accept,
    Reject(RejectReason),
}

/// Admission rules: fewer than three strides on either foot, then assisted
/// walking, are rejected. Speed changes are kept.
pub fn edge_case_filter(segment: &GaitSegment) -> FilterVerdict {
    let (l, r) = count_strides(segment);
    if l.min(r) < MIN_STRIDES {
        FilterVerdict::Reject(RejectReason::ShortWalk)
    } else if segment.flags.assisted {
        FilterVerdict::Reject(RejectReason::Assisted)
    } else {
        FilterVerdict::Accept
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bout {
    pub start_ts: Millis,
    pub end_ts: Millis,
    pub flags: SegmentFlags,
}

impl Bout {
    pub fn duration_ms(&self) -> Millis {
        self.end_ts - self.start_ts
    }
}

fn pressure_frames(timeline: &FusedTimeline, foot: Foot) -> Vec<(Millis, &PressureFrame)> {
    timeline
        .iter()
        .filter_map(|r| match &r.payload {
            Payload::Pressure(f) if f.foot == foot => Some((r.ts_ms, f)),
            _ => None,
        })
        .collect()
}

/// Walking bouts from summed two-foot force. A bout opens once the force
/// stays above threshold for 0.5 s and closes after 1 s of quiescence or a
/// hole in the insole stream. Flags come from the camera's walk annotations.
pub fn detect_bouts(timeline: &FusedTimeline) -> Vec<Bout> {
    let mut events: Vec<(Millis, Foot, f64)> = Vec::new();
    for rec in timeline.iter() {
        if let Payload::Pressure(f) = &rec.payload {
            events.push((rec.ts_ms, f.foot, f.total()));
        }
    }
    // timeline order is already by ts; keep it stable

    let mut spans: Vec<(Millis, Millis)> = Vec::new();
    let mut latest = [0.0f64; 2];
    let mut run_start: Option<Millis> = None;
    let mut last_ts: Millis = 0;
    let mut active_since: Option<Millis> = None;
    let mut last_active: Option<Millis> = None;
    let mut bout_start: Option<Millis> = None;

    let close = |bout_start: &mut Option<Millis>, last_active: Option<Millis>, run_end: Millis, spans: &mut Vec<(Millis, Millis)>| {
        if let (Some(s), Some(a)) = (bout_start.take(), last_active) {
            spans.push((s, (a + BOUT_PAD_MS).min(run_end)));
        }
    };

    for &(ts, foot, total) in &events {
        if let Some(_) = run_start {
            if (ts - last_ts) as f64 > MAX_GAP_MS {
                close(&mut bout_start, last_active, last_ts + FRAME_MS as Millis, &mut spans);
                run_start = None;
            }
        }
        if run_start.is_none() {
            run_start = Some(ts);
            latest = [0.0; 2];
            active_since = None;
            last_active = None;
        }
        last_ts = ts;
        latest[foot as usize] = total;
        let active = latest[0] + latest[1] > BOUT_FORCE_THRESHOLD;
        if active {
            let since = *active_since.get_or_insert(ts);
            last_active = Some(ts);
            if bout_start.is_none() && ts - since >= BOUT_MIN_ACTIVE_MS {
                bout_start = Some(run_start.expect("run open").max(since - BOUT_PAD_MS));
            }
        } else {
            active_since = None;
            if let (Some(_), Some(a)) = (bout_start, last_active) {
                if ts - a >= BOUT_QUIET_MS {
                    close(&mut bout_start, last_active, ts, &mut spans);
                }
            }
        }
    }
    if run_start.is_some() {
        close(&mut bout_start, last_active, last_ts + FRAME_MS as Millis, &mut spans);
    }

    let annotations: Vec<(Millis, bool, bool)> = timeline
        .iter()
        .filter_map(|r| match &r.payload {
            Payload::Perception(PerceptionEvent::WalkAnnotation { assisted, speed_change }) => {
                Some((r.ts_ms, *assisted, *speed_change))
            }
            _ => None,
        })
        .collect();
    spans
        .into_iter()
        .map(|(s, e)| {
            let mut flags = SegmentFlags::default();
            for &(t, a, c) in &annotations {
                if t >= s - 2 * BOUT_QUIET_MS && t <= e {
                    flags.assisted |= a;
                    flags.speed_change |= c;
                }
            }
            Bout {
                start_ts: s,
                end_ts: e,
                flags,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentStats {
    pub windows: usize,
    pub emitted: usize,
    pub dropped_unpairable: usize,
    /// slots filled by holding a neighbour frame (gap ≤ 50 ms)
    pub held_slots: usize,
}

/// Index of the frame nearest to `t` in a ts-sorted list.
fn nearest(frames: &[(Millis, &PressureFrame)], t: f64) -> Option<(usize, f64)> {
    if frames.is_empty() {
        return None;
    }
    let i = frames.partition_point(|(ts, _)| (*ts as f64) < t);
    let mut best: Option<(usize, f64)> = None;
    for j in [i.saturating_sub(1), i.min(frames.len() - 1)] {
        let d = (frames[j].0 as f64 - t).abs();
        if best.map_or(true, |(_, bd)| d < bd) {
            best = Some((j, d));
        }
    }
    best
}

/// Consecutive non-overlapping 5-s windows inside each bout; a trailing
/// partial window is discarded. Every 5 ms slot takes the nearest frame of
/// each foot; slots further than 50 ms from any frame drop the window.
pub fn segment_walks(
    timeline: &FusedTimeline,
    bouts: &[Bout],
    patient_ref: &str,
    label: Option<ImpairmentLevel>,
) -> (Vec<GaitSegment>, SegmentStats) {
    let left = pressure_frames(timeline, Foot::Left);
    let right = pressure_frames(timeline, Foot::Right);
    let mut stats = SegmentStats::default();
    let mut out = Vec::new();
    for bout in bouts {
        let mut start = bout.start_ts;
        while (start + SEGMENT_MS) as f64 - PAIR_TOLERANCE_MS <= bout.end_ts as f64 {
            stats.windows += 1;
            let mut rows = [Vec::with_capacity(SEGMENT_FRAMES * CHANNELS), Vec::with_capacity(SEGMENT_FRAMES * CHANNELS)];
            let mut ok = true;
            'slots: for j in 0..SEGMENT_FRAMES {
                let t = start as f64 + j as f64 * FRAME_MS;
                for (k, frames) in [&left, &right].into_iter().enumerate() {
                    match nearest(frames, t) {
                        Some((idx, d)) if d <= MAX_GAP_MS => {
                            if d > PAIR_TOLERANCE_MS {
                                stats.held_slots += 1;
                            }
                            rows[k].extend_from_slice(&frames[idx].1.values);
                        }
                        _ => {
                            ok = false;
                            break 'slots;
                        }
                    }
                }
            }
            if ok {
                let [l, r] = rows;
                out.push(GaitSegment {
                    patient_ref: patient_ref.to_string(),
                    start_ts: start,
                    left: l,
                    right: r,
                    label,
                    flags: bout.flags,
                });
                stats.emitted += 1;
            } else {
                stats.dropped_unpairable += 1;
            }
            start += SEGMENT_MS;
        }
    }
    (out, stats)
}

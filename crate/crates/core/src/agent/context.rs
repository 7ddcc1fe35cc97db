//! Six one-minute bins ending at `now_ts`, built from the fused timeline.
//! Missing signals are `null`, never imputed.

use serde::{Deserialize, Serialize};

use crate::gateway::{Payload, TimelineRecord};
use crate::gateway::packet::PerceptionEvent;
use crate::intent::types::Activity;
use crate::Millis;

pub const WINDOW_MINUTES: usize = 6;
pub const MINUTE_MS: Millis = 60_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinuteRecord {
    pub start_ts: Millis,
    pub hr_mean: Option<f64>,
    pub hrv_mean: Option<f64>,
    pub temp_mean: Option<f64>,
    pub light_mean: Option<f64>,
    pub activity: Option<Activity>,
}

impl MinuteRecord {
    pub fn is_empty(&self) -> bool {
        self.hr_mean.is_none() && self.hrv_mean.is_none() && self.temp_mean.is_none() && self.light_mean.is_none() && self.activity.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextWindow {
    pub patient_ref: String,
    pub now_ts: Millis,
    /// oldest first, always [`WINDOW_MINUTES`] entries
    pub minutes: Vec<MinuteRecord>,
    /// local time of day at `now_ts`, seconds since midnight
    pub clock_s: Option<f64>,
    /// every bin is empty
    pub missing: bool,
}

impl ContextWindow {
    /// Most recent non-missing value of a per-minute signal.
    pub fn latest(&self, f: impl Fn(&MinuteRecord) -> Option<f64>) -> Option<f64> {
        self.minutes.iter().rev().find_map(f)
    }
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Activity with the most occupancy in `[a, b)`, given the ordered state
/// changes. Ties go to the earlier variant in [`Activity`] order.
fn dominant(changes: &[(Millis, Activity)], a: Millis, b: Millis) -> Option<Activity> {
    let mut occ: Vec<(Activity, Millis)> = Vec::new();
    for (i, &(t, act)) in changes.iter().enumerate() {
        let end = changes.get(i + 1).map_or(Millis::MAX, |c| c.0);
        let (lo, hi) = (t.max(a), end.min(b));
        if hi > lo {
            match occ.iter_mut().find(|(x, _)| *x == act) {
                Some(e) => e.1 += hi - lo,
                None => occ.push((act, hi - lo)),
            }
        }
    }
    occ.sort_by(|x, y| y.1.cmp(&x.1).then(x.0.cmp(&y.0)));
    occ.first().map(|e| e.0)
}

/// Build the window from records with `ts < now_ts`.
pub fn build_context(records: &[TimelineRecord], now_ts: Millis, patient_ref: &str) -> ContextWindow {
    let start = now_ts - WINDOW_MINUTES as Millis * MINUTE_MS;
    let mut bins: Vec<[Vec<f64>; 4]> = vec![Default::default(); WINDOW_MINUTES];
    let mut changes: Vec<(Millis, Activity)> = Vec::new();
    let mut last_ambient: Option<(Millis, f64)> = None;
    for r in records.iter().filter(|r| r.ts_ms < now_ts) {
        let bin = (r.ts_ms >= start).then(|| ((r.ts_ms - start) / MINUTE_MS) as usize);
        match &r.payload {
            Payload::Physio(p) => {
                if let Some(k) = bin {
                    bins[k][0].push(p.heart_rate);
                    bins[k][1].push(p.hrv);
                    bins[k][2].push(p.skin_temp);
                }
            }
            Payload::Ambient(a) => {
                if let Some(k) = bin {
                    bins[k][3].push(a.light_level);
                }
                last_ambient = Some((r.ts_ms, a.time_of_day));
            }
            Payload::Perception(PerceptionEvent::Action(s)) => changes.push((r.ts_ms, s.activity)),
            _ => {}
        }
    }
    let minutes: Vec<MinuteRecord> = bins
        .iter()
        .enumerate()
        .map(|(k, b)| {
            let a = start + k as Millis * MINUTE_MS;
            MinuteRecord {
                start_ts: a,
                hr_mean: mean(&b[0]),
                hrv_mean: mean(&b[1]),
                temp_mean: mean(&b[2]),
                light_mean: mean(&b[3]),
                activity: dominant(&changes, a, a + MINUTE_MS),
            }
        })
        .collect();
    let missing = minutes.iter().all(MinuteRecord::is_empty);
    ContextWindow {
        patient_ref: patient_ref.to_string(),
        now_ts,
        clock_s: last_ambient.map(|(ts, tod)| (tod + (now_ts - ts) as f64 / 1000.0).rem_euclid(86_400.0)),
        minutes,
        missing,
    }
}

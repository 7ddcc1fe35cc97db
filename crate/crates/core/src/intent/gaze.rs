//! Dispersion-threshold fixation detection, object mapping and double-blink
//! confirmation.

use super::types::{BlinkEvent, Fixation, GazeSample, ObjectBox};
use crate::Millis;

pub const DEFAULT_DISPERSION: f64 = 0.05;
pub const DEFAULT_MIN_DURATION_MS: Millis = 500;
pub const DEFAULT_CONFIRM_WINDOW_MS: Millis = 800;

/// Bounding-box diagonal of a set of points.
pub fn dispersion(points: &[GazeSample]) -> f64 {
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in points {
        x0 = x0.min(p.x);
        y0 = y0.min(p.y);
        x1 = x1.max(p.x);
        y1 = y1.max(p.y);
    }
    if points.is_empty() {
        return 0.0;
    }
    (x1 - x0).hypot(y1 - y0)
}

fn fixation_of(run: &[GazeSample]) -> Fixation {
    let n = run.len() as f64;
    Fixation {
        x: run.iter().map(|p| p.x).sum::<f64>() / n,
        y: run.iter().map(|p| p.y).sum::<f64>() / n,
        start_ts: run[0].timestamp,
        duration_ms: run[run.len() - 1].timestamp - run[0].timestamp,
    }
}

/// Scanning left to right, grow the longest run of valid samples starting
/// at the cursor whose dispersion stays within `max_dispersion`. A run
/// spanning at least `min_duration_ms` becomes a fixation and the cursor
/// jumps past it; otherwise the cursor advances by one sample.
pub fn detect_fixation(samples: &[GazeSample], max_dispersion: f64, min_duration_ms: Millis) -> Vec<Fixation> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < samples.len() {
        if !samples[i].valid {
            i += 1;
            continue;
        }
        let (mut x0, mut y0, mut x1, mut y1) = (samples[i].x, samples[i].y, samples[i].x, samples[i].y);
        let mut j = i;
        while j + 1 < samples.len() && samples[j + 1].valid {
            let p = samples[j + 1];
            let (nx0, ny0, nx1, ny1) = (x0.min(p.x), y0.min(p.y), x1.max(p.x), y1.max(p.y));
            if (nx1 - nx0).hypot(ny1 - ny0) > max_dispersion {
                break;
            }
            (x0, y0, x1, y1) = (nx0, ny0, nx1, ny1);
            j += 1;
        }
        if samples[j].timestamp - samples[i].timestamp >= min_duration_ms {
            out.push(fixation_of(&samples[i..=j]));
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

/// The smallest box containing the centroid. Equal areas fall back to the
/// label so the answer does not depend on the order of `boxes`.
pub fn map_fixation_to_object<'a>(fix: &Fixation, boxes: &'a [ObjectBox]) -> Option<&'a ObjectBox> {
    boxes
        .iter()
        .filter(|b| b.contains(fix.x, fix.y))
        .min_by(|a, b| a.area().total_cmp(&b.area()).then_with(|| a.label.cmp(&b.label)))
}

/// At least two blinks at or after `after_ts` within `window_ms` of each
/// other.
pub fn confirm_selection(blinks: &[BlinkEvent], after_ts: Millis, window_ms: Millis) -> bool {
    let ts: Vec<Millis> = blinks.iter().map(|b| b.timestamp).filter(|&t| t >= after_ts).collect();
    ts.windows(2).any(|w| w[1] - w[0] <= window_ms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use proptest::prelude::*;
    use rand::Rng;

    fn s(t: Millis, x: f64, y: f64) -> GazeSample {
        GazeSample {
            timestamp: t,
            x,
            y,
            valid: true,
        }
    }

    /// Exhaustive version: recompute the dispersion of every candidate run
    /// from scratch.
    fn oracle(samples: &[GazeSample], thr: f64, min_ms: Millis) -> Vec<Fixation> {
        let mut out = Vec::new();
        let mut i = 0;
        while i < samples.len() {
            let mut best = None;
            for j in i..samples.len() {
                let run = &samples[i..=j];
                if run.iter().all(|p| p.valid) && dispersion(run) <= thr {
                    best = Some(j);
                } else {
                    break;
                }
            }
            match best {
                Some(j) if samples[j].timestamp - samples[i].timestamp >= min_ms => {
                    out.push(fixation_of(&samples[i..=j]));
                    i = j + 1;
                }
                _ => i += 1,
            }
        }
        out
    }

    fn at_30hz(n: usize, x: f64, y: f64, t0: Millis) -> Vec<GazeSample> {
        (0..n).map(|k| s(t0 + (k as f64 * 1000.0 / 30.0).round() as Millis, x, y)).collect()
    }

    #[test]
    fn six_hundred_ms_dwell_is_one_fixation() {
        let v = at_30hz(19, 0.4, 0.6, 0);
        assert_eq!(v.last().unwrap().timestamp, 600);
        let f = detect_fixation(&v, DEFAULT_DISPERSION, DEFAULT_MIN_DURATION_MS);
        assert_eq!(f.len(), 1);
        assert!((f[0].x - 0.4).abs() < 1e-12 && (f[0].y - 0.6).abs() < 1e-12);
    }

    #[test]
    fn four_hundred_ms_dwell_is_ignored() {
        let v = at_30hz(13, 0.4, 0.6, 0);
        assert!(detect_fixation(&v, DEFAULT_DISPERSION, DEFAULT_MIN_DURATION_MS).is_empty());
    }

    #[test]
    fn invalid_sample_breaks_a_run() {
        let mut v = at_30hz(30, 0.5, 0.5, 0);
        v[10].valid = false;
        let f = detect_fixation(&v, DEFAULT_DISPERSION, DEFAULT_MIN_DURATION_MS);
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].start_ts, v[11].timestamp);
    }

    #[test]
    fn random_walk_with_one_dwell() {
        let mut rng = seed::rng(9, "walk");
        let (mut x, mut y) = (0.5f64, 0.5f64);
        let mut v = Vec::new();
        let mut t = 0;
        for k in 0..150 {
            if (60..85).contains(&k) {
                // 800 ms dwell with sub-threshold jitter
                v.push(s(t, 0.2 + 0.005 * rng.gen::<f64>(), 0.3 + 0.005 * rng.gen::<f64>()));
            } else {
                x = (x + 0.2 * (rng.gen::<f64>() - 0.5)).clamp(0.0, 1.0);
                y = (y + 0.2 * (rng.gen::<f64>() - 0.5)).clamp(0.0, 1.0);
                v.push(s(t, x, y));
            }
            t += 33;
        }
        let f = detect_fixation(&v, DEFAULT_DISPERSION, DEFAULT_MIN_DURATION_MS);
        assert_eq!(f.len(), 1);
        assert_eq!(f, oracle(&v, DEFAULT_DISPERSION, DEFAULT_MIN_DURATION_MS));
        assert!((f[0].x - 0.2).abs() < 0.01);
    }

    proptest! {
        #[test]
        fn matches_exhaustive_oracle(
            pts in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0, prop::bool::weighted(0.95), 0u8..4), 0..400),
            thr in 0.01f64..0.3,
        ) {
            // clustered points so fixations actually occur
            let mut t = 0;
            let mut v = Vec::new();
            let (mut cx, mut cy) = (0.5, 0.5);
            for (x, y, valid, jump) in pts {
                if jump == 0 {
                    cx = x;
                    cy = y;
                }
                v.push(GazeSample { timestamp: t, x: cx + 0.03 * (x - 0.5), y: cy + 0.03 * (y - 0.5), valid });
                t += 33;
            }
            prop_assert_eq!(detect_fixation(&v, thr, 200), oracle(&v, thr, 200));
        }
    }

    fn fix(x: f64, y: f64) -> Fixation {
        Fixation {
            x,
            y,
            start_ts: 0,
            duration_ms: 600,
        }
    }

    #[test]
    fn object_mapping_rules() {
        let boxes = vec![
            ObjectBox::new("tv", [0.3, 0.3, 0.7, 0.7], "room"),
            ObjectBox::new("remote", [0.45, 0.45, 0.55, 0.55], "room"),
            ObjectBox::new("lamp", [0.0, 0.0, 0.1, 0.1], "room"),
        ];
        assert_eq!(map_fixation_to_object(&fix(0.05, 0.05), &boxes).unwrap().label, "lamp");
        assert_eq!(map_fixation_to_object(&fix(0.5, 0.5), &boxes).unwrap().label, "remote");
        assert_eq!(map_fixation_to_object(&fix(0.35, 0.35), &boxes).unwrap().label, "tv");
        assert!(map_fixation_to_object(&fix(0.9, 0.9), &boxes).is_none());
        let mut rev = boxes.clone();
        rev.reverse();
        for p in [(0.5, 0.5), (0.35, 0.4), (0.05, 0.02)] {
            assert_eq!(map_fixation_to_object(&fix(p.0, p.1), &boxes), map_fixation_to_object(&fix(p.0, p.1), &rev));
        }
    }

    #[test]
    fn blink_confirmation_window() {
        let b = |ts: &[Millis]| ts.iter().map(|&t| BlinkEvent { timestamp: t }).collect::<Vec<_>>();
        assert!(confirm_selection(&b(&[1000, 1300]), 0, 800));
        assert!(!confirm_selection(&b(&[1000]), 0, 800));
        assert!(!confirm_selection(&b(&[1000, 1900]), 0, 800));
        assert!(!confirm_selection(&b(&[100, 300, 2000]), 500, 800), "blinks before the fixation do not count");
    }
}

//! Hysteresis contact detection on summed plantar force.

use super::segment::GaitSegment;

pub const ENTER_FRACTION: f64 = 0.20;
pub const LEAVE_FRACTION: f64 = 0.10;
pub const MIN_CONTACT_MS: f64 = 150.0;

/// One detected ground contact, in frame indices `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Contact {
    pub start: usize,
    pub end: usize,
    /// false when the contact touches either edge of the window
    pub complete: bool,
}

/// Contacts in a per-frame force series: enter above 20 % of the series
/// maximum, leave below 10 %, discard contacts shorter than 150 ms.
pub fn contact_intervals(totals: &[f64], rate_hz: f64) -> Vec<Contact> {
    let max = totals.iter().copied().fold(0.0, f64::max);
    if !(max > 0.0) {
        return Vec::new();
    }
    let (enter, leave) = (ENTER_FRACTION * max, LEAVE_FRACTION * max);
    let min_frames = (MIN_CONTACT_MS * rate_hz / 1000.0).ceil() as usize;
    let n = totals.len();
    let mut out = Vec::new();
    let mut open: Option<usize> = None;
    for (i, &v) in totals.iter().enumerate() {
        match open {
            None if v > enter => open = Some(i),
            Some(s) if v < leave => {
                if i - s >= min_frames {
                    out.push(Contact {
                        start: s,
                        end: i,
                        complete: s > 0 && totals[s - 1] <= enter,
                    });
                }
                open = None;
            }
            _ => {}
        }
    }
    if let Some(s) = open {
        if n - s >= min_frames {
            out.push(Contact {
                start: s,
                end: n,
                complete: false,
            });
        }
    }
    // a contact opening on frame 0 started before the window
    for c in out.iter_mut() {
        if c.start == 0 {
            c.complete = false;
        }
    }
    out
}

/// Number of contact intervals per foot.
pub fn count_strides(segment: &GaitSegment) -> (usize, usize) {
    let rate = GaitSegment::RATE_HZ;
    (
        contact_intervals(&segment.totals_left(), rate).len(),
        contact_intervals(&segment.totals_right(), rate).len(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_wave_with_four_plateaus() {
        let mut v = vec![0.0; 1000];
        for k in 0..4 {
            for x in &mut v[100 + 200 * k..200 + 200 * k] {
                *x = 50.0;
            }
        }
        let c = contact_intervals(&v, 200.0);
        assert_eq!(c.len(), 4);
        assert!(c.iter().all(|c| c.complete && c.end - c.start == 100));
    }

    #[test]
    fn all_zero_has_no_contacts() {
        assert!(contact_intervals(&[0.0; 500], 200.0).is_empty());
    }

    #[test]
    fn short_blips_ignored() {
        let mut v = vec![0.0; 400];
        for x in &mut v[10..30] {
            *x = 10.0; // 100 ms
        }
        for x in &mut v[100..200] {
            *x = 10.0;
        }
        assert_eq!(contact_intervals(&v, 200.0).len(), 1);
    }

    #[test]
    fn hysteresis_holds_through_dip() {
        // dips to 15 % of max: above the leave threshold, contact continues
        let mut v = vec![0.0; 300];
        for (i, x) in v[50..250].iter_mut().enumerate() {
            *x = if (90..110).contains(&i) { 15.0 } else { 100.0 };
        }
        assert_eq!(contact_intervals(&v, 200.0).len(), 1);
    }

    #[test]
    fn edge_contacts_are_incomplete() {
        let mut v = vec![10.0; 300];
        for x in &mut v[100..200] {
            *x = 0.0;
        }
        let c = contact_intervals(&v, 200.0);
        assert_eq!(c.len(), 2);
        assert!(c.iter().all(|c| !c.complete));
    }
}

//! Action-state routing and the gaze selection pipeline.

use serde::{Deserialize, Serialize};

use super::gaze::{confirm_selection, detect_fixation, map_fixation_to_object};
use super::types::{ActionState, Activity, BlinkEvent, GazeSample, Intent, IntentSource, ObjectBox};
use crate::devices::{DeviceKind, Registry};
use crate::Millis;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum RoutedEvent {
    Recorded(ActionState),
    /// Immediate agent invocation, bypassing the per-minute context path.
    AgentTrigger { ts: Millis },
}

#[derive(Debug, Clone, Default)]
pub struct ActionRouter {
    timeline: Vec<ActionState>,
}

impl ActionRouter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn on_action_state(&mut self, state: ActionState) -> Vec<RoutedEvent> {
        self.timeline.push(state);
        let mut out = vec![RoutedEvent::Recorded(state)];
        if state.activity == Activity::Falling {
            out.push(RoutedEvent::AgentTrigger { ts: state.timestamp });
        }
        out
    }

    pub fn timeline(&self) -> &[ActionState] {
        &self.timeline
    }
}

/// Result of a gaze + blink selection attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GazeSelection {
    pub object: String,
    pub fixation_end_ts: Millis,
    /// "audio confirmation" record for the user
    pub confirmation: String,
}

/// Parameters of the selection gesture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazeConfig {
    pub dispersion: f64,
    pub min_duration_ms: Millis,
    pub confirm_window_ms: Millis,
}

impl Default for GazeConfig {
    fn default() -> Self {
        Self {
            dispersion: super::gaze::DEFAULT_DISPERSION,
            min_duration_ms: super::gaze::DEFAULT_MIN_DURATION_MS,
            confirm_window_ms: super::gaze::DEFAULT_CONFIRM_WINDOW_MS,
        }
    }
}

/// The last fixation on a known object, confirmed by a double blink after it.
pub fn select_object(samples: &[GazeSample], blinks: &[BlinkEvent], boxes: &[ObjectBox], cfg: &GazeConfig) -> Option<GazeSelection> {
    let fixations = detect_fixation(samples, cfg.dispersion, cfg.min_duration_ms);
    fixations.iter().rev().find_map(|f| {
        let obj = map_fixation_to_object(f, boxes)?;
        confirm_selection(blinks, f.end_ts(), cfg.confirm_window_ms).then(|| GazeSelection {
            object: obj.label.clone(),
            fixation_end_ts: f.end_ts(),
            confirmation: format!("selected {}", obj.label),
        })
    })
}

/// Selecting an appliance toggles its power relative to `current_power`.
pub fn gaze_intent(selection: &GazeSelection, registry: &Registry, current_power: Option<&str>, issued_ts: Millis) -> Option<Intent> {
    let kind = DeviceKind::from_label(&selection.object)?;
    let d = registry.find(kind, None)?;
    let want = if current_power == Some("on") { "off" } else { "on" };
    Some(Intent {
        target_device: d.name.clone(),
        action: kind.power_action().to_string(),
        params: [("power".to_string(), serde_json::Value::from(want))].into_iter().collect(),
        source: IntentSource::Gaze,
        issued_ts,
    })
}

/// 30 Hz samples dwelling on `(x, y)` for `dwell_ms`; used by the scripted
/// interaction suite.
pub fn synthetic_dwell(t0: Millis, x: f64, y: f64, dwell_ms: Millis) -> Vec<GazeSample> {
    let n = (dwell_ms as f64 * 30.0 / 1000.0).floor() as usize + 1;
    (0..n)
        .map(|k| GazeSample {
            timestamp: t0 + (k as f64 * 1000.0 / 30.0).round() as Millis,
            x,
            y,
            valid: true,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::scenario::default_objects;

    #[test]
    fn falling_triggers_the_agent() {
        let mut r = ActionRouter::new();
        let ev = r.on_action_state(ActionState {
            activity: Activity::Falling,
            timestamp: 42,
        });
        assert_eq!(ev[1], RoutedEvent::AgentTrigger { ts: 42 });
    }

    #[test]
    fn timeline_keeps_every_state_in_order() {
        let mut r = ActionRouter::new();
        let acts = [Activity::Walking, Activity::Sitting, Activity::Idle, Activity::Falling];
        let mut triggers = 0;
        for k in 0..1000 {
            let ev = r.on_action_state(ActionState {
                activity: acts[k % 4],
                timestamp: k as Millis,
            });
            triggers += ev.len() - 1;
        }
        assert_eq!(r.timeline().len(), 1000);
        assert_eq!(triggers, 250);
        assert_eq!(r.timeline()[1].activity, Activity::Sitting);
    }

    #[test]
    fn dwell_and_double_blink_select_the_lamp() {
        let boxes = default_objects();
        let (x, y) = boxes[0].center();
        let samples = synthetic_dwell(0, x, y, 600);
        let blinks = [BlinkEvent { timestamp: 700 }, BlinkEvent { timestamp: 1000 }];
        let s = select_object(&samples, &blinks, &boxes, &GazeConfig::default()).unwrap();
        assert_eq!(s.object, "lamp");
        let i = gaze_intent(&s, &Registry::demo(), Some("off"), 1000).unwrap();
        assert_eq!((i.target_device.as_str(), i.action.as_str()), ("lamp", "toggle_light"));
        assert_eq!(i.params["power"], "on");
        assert!(select_object(&samples, &blinks[..1], &boxes, &GazeConfig::default()).is_none());
    }
}

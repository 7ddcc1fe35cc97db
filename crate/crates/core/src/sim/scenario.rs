//! Declarative scenario scripts (TOML).
//!
//! ```toml
//! seed = 7
//! patient = "P03"
//! start_clock = "14:00"
//!
//! [[events]]
//! t_s = 0
//! kind = "start_walk"
//! duration_s = 420
//!
//! [[events]]
//! t_s = 60
//! kind = "physio_ramp"
//! duration_s = 300
//! hr = [70, 115]
//! ```

use serde::{Deserialize, Serialize};
use std::path::Path;

use super::gait::SpeedProfile;
use super::SimError;
use crate::intent::types::ObjectBox;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioScript {
    pub seed: u64,
    pub patient: String,
    #[serde(default)]
    pub name: Option<String>,
    /// local wall clock at t = 0, "HH:MM" or "HH:MM:SS"
    #[serde(default = "default_start_clock")]
    pub start_clock: String,
    #[serde(default)]
    pub baseline: Baseline,
    /// Objects visible to the ambient camera; defaults to a living room.
    #[serde(default = "default_objects")]
    pub objects: Vec<ObjectBox>,
    /// Device clock models; sources without an entry get a seeded skew.
    #[serde(default)]
    pub clocks: Vec<ClockSpec>,
    #[serde(default)]
    pub events: Vec<TimedEvent>,
}

fn default_start_clock() -> String {
    "10:00".to_string()
}

pub fn default_objects() -> Vec<ObjectBox> {
    vec![
        ObjectBox::new("lamp", [0.05, 0.10, 0.20, 0.45], "living_room"),
        ObjectBox::new("tv", [0.35, 0.25, 0.65, 0.55], "living_room"),
        ObjectBox::new("air_conditioner", [0.72, 0.05, 0.95, 0.20], "living_room"),
        ObjectBox::new("sofa", [0.25, 0.60, 0.80, 0.95], "living_room"),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Baseline {
    #[serde(default = "Baseline::default_hr")]
    pub hr: f64,
    #[serde(default = "Baseline::default_hrv")]
    pub hrv: f64,
    #[serde(default = "Baseline::default_temp")]
    pub temp: f64,
    #[serde(default = "Baseline::default_light")]
    pub light: f64,
}

impl Baseline {
    fn default_hr() -> f64 {
        70.0
    }
    fn default_hrv() -> f64 {
        60.0
    }
    fn default_temp() -> f64 {
        33.5
    }
    fn default_light() -> f64 {
        300.0
    }
}

impl Default for Baseline {
    fn default() -> Self {
        Self {
            hr: Self::default_hr(),
            hrv: Self::default_hrv(),
            temp: Self::default_temp(),
            light: Self::default_light(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClockSpec {
    pub source: String,
    pub offset_ms: f64,
    #[serde(default)]
    pub drift_ppm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedEvent {
    pub t_s: f64,
    #[serde(flatten)]
    pub event: ScenarioEvent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScenarioEvent {
    StartWalk {
        duration_s: f64,
        #[serde(default)]
        assisted: bool,
        #[serde(default)]
        speed_profile: SpeedProfile,
    },
    Sit,
    Fall,
    VoiceUtterance {
        text: String,
    },
    GazeSequence {
        target_object: String,
        dwell_ms: f64,
    },
    BlinkPattern {
        count: u32,
        spacing_ms: f64,
    },
    AmbientRamp {
        from_lux: f64,
        to_lux: f64,
        duration_s: f64,
    },
    PhysioRamp {
        duration_s: f64,
        #[serde(default)]
        hr: Option<[f64; 2]>,
        #[serde(default)]
        hrv: Option<[f64; 2]>,
        #[serde(default)]
        temp: Option<[f64; 2]>,
    },
}

impl ScenarioScript {
    pub fn parse(text: &str) -> Result<Self, SimError> {
        let script: Self = toml::from_str(text).map_err(|e| {
            let (line, column) = e
                .span()
                .map(|span| line_col(text, span.start))
                .unwrap_or((0, 0));
            SimError::Parse {
                line,
                column,
                message: e.message().to_string(),
            }
        })?;
        script.validate()?;
        Ok(script)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), SimError> {
        start_clock_seconds(&self.start_clock)?;
        let mut last = 0.0f64;
        for (i, ev) in self.events.iter().enumerate() {
            if !(ev.t_s >= 0.0) {
                return Err(SimError::Domain(format!("event {i}: t_s must be >= 0")));
            }
            if ev.t_s < last {
                return Err(SimError::Domain(format!("event {i}: times must be nondecreasing")));
            }
            last = ev.t_s;
            let positive = |v: f64, what: &str| {
                if v > 0.0 {
                    Ok(())
                } else {
                    Err(SimError::Domain(format!("event {i}: {what} must be > 0")))
                }
            };
            match &ev.event {
                ScenarioEvent::StartWalk { duration_s, .. } => positive(*duration_s, "duration_s")?,
                ScenarioEvent::GazeSequence { target_object, dwell_ms } => {
                    positive(*dwell_ms, "dwell_ms")?;
                    if !self.objects.iter().any(|o| &o.label == target_object) {
                        return Err(SimError::Domain(format!("event {i}: unknown gaze target '{target_object}'")));
                    }
                }
                ScenarioEvent::BlinkPattern { count, spacing_ms } => {
                    positive(f64::from(*count), "count")?;
                    positive(*spacing_ms, "spacing_ms")?;
                }
                ScenarioEvent::AmbientRamp { duration_s, from_lux, to_lux } => {
                    positive(*duration_s, "duration_s")?;
                    if *from_lux < 0.0 || *to_lux < 0.0 {
                        return Err(SimError::Domain(format!("event {i}: lux must be >= 0")));
                    }
                }
                ScenarioEvent::PhysioRamp { duration_s, .. } => positive(*duration_s, "duration_s")?,
                ScenarioEvent::VoiceUtterance { text } => {
                    if text.trim().is_empty() {
                        return Err(SimError::Domain(format!("event {i}: empty utterance")));
                    }
                }
                ScenarioEvent::Sit | ScenarioEvent::Fall => {}
            }
        }
        if self.objects.iter().any(|o| !o.is_well_formed()) {
            return Err(SimError::Domain("malformed object box".into()));
        }
        Ok(())
    }

    pub fn start_clock_seconds(&self) -> f64 {
        start_clock_seconds(&self.start_clock).unwrap_or(0.0)
    }

    /// Simulated end of the script: last event plus its duration, plus a
    /// minute of tail so downstream windows close.
    pub fn duration_s(&self) -> f64 {
        let end = self
            .events
            .iter()
            .map(|e| {
                e.t_s
                    + match &e.event {
                        ScenarioEvent::StartWalk { duration_s, .. }
                        | ScenarioEvent::AmbientRamp { duration_s, .. }
                        | ScenarioEvent::PhysioRamp { duration_s, .. } => *duration_s,
                        ScenarioEvent::GazeSequence { dwell_ms, .. } => (dwell_ms + 600.0) / 1000.0,
                        ScenarioEvent::BlinkPattern { count, spacing_ms } => f64::from(*count) * spacing_ms / 1000.0,
                        _ => 0.0,
                    }
            })
            .fold(0.0, f64::max);
        end + 60.0
    }
}

fn start_clock_seconds(s: &str) -> Result<f64, SimError> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || SimError::Domain(format!("start_clock '{s}' is not HH:MM[:SS]"));
    if !(2..=3).contains(&parts.len()) {
        return Err(bad());
    }
    let nums: Vec<u32> = parts.iter().map(|p| p.parse::<u32>().map_err(|_| bad())).collect::<Result<_, _>>()?;
    let (h, m, sec) = (nums[0], nums[1], nums.get(2).copied().unwrap_or(0));
    if h > 23 || m > 59 || sec > 59 {
        return Err(bad());
    }
    Ok(f64::from(h * 3600 + m * 60 + sec))
}

/// 1-based line and column of a byte offset.
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.len(), |nl| before.len() - nl - 1) + 1;
    (line, column)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"
seed = 3
patient = "P01"

[[events]]
t_s = 0
kind = "start_walk"
duration_s = 12

[[events]]
t_s = 60
kind = "fall"
"#;

    #[test]
    fn parses_basic_script() {
        let s = ScenarioScript::parse(BASIC).unwrap();
        assert_eq!(s.seed, 3);
        assert_eq!(s.events.len(), 2);
        assert_eq!(s.events[1].event, ScenarioEvent::Fall);
        assert_eq!(s.start_clock_seconds(), 36000.0);
        assert_eq!(s.objects.len(), 4);
    }

    #[test]
    fn unknown_kind_reports_line() {
        let text = BASIC.replace("kind = \"fall\"", "kind = \"dance\"");
        match ScenarioScript::parse(&text) {
            Err(SimError::Parse { line, message, .. }) => {
                assert!(line > 0, "line position missing: {message}");
                assert!(message.contains("dance"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn decreasing_times_rejected() {
        let text = BASIC.replace("t_s = 60", "t_s = -1");
        assert!(ScenarioScript::parse(&text).is_err());
        let text = r#"
seed = 1
patient = "P01"
[[events]]
t_s = 10
kind = "sit"
[[events]]
t_s = 5
kind = "fall"
"#;
        assert!(matches!(ScenarioScript::parse(text), Err(SimError::Domain(_))));
    }

    #[test]
    fn nonpositive_duration_rejected() {
        let text = BASIC.replace("duration_s = 12", "duration_s = 0");
        assert!(matches!(ScenarioScript::parse(&text), Err(SimError::Domain(_))));
    }

    #[test]
    fn round_trips_through_toml() {
        let s = ScenarioScript::parse(BASIC).unwrap();
        let again = ScenarioScript::parse(&s.to_toml()).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn line_col_counts_from_one() {
        assert_eq!(line_col("ab\ncd", 0), (1, 1));
        assert_eq!(line_col("ab\ncd", 4), (2, 2));
    }
}

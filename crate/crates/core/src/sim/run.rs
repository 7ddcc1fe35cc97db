//! Scenario execution: turns a script into time-ordered sensor packets.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use super::gait::{default_gait_params, generate_walk_with_profile, AffectedSide, Foot, GaitParams, SpeedProfile};
use super::profile::PatientProfile;
use super::scenario::{ScenarioEvent, ScenarioScript};
use super::streams::{AmbientSample, PhysioSample, RampTrack};
use super::SimError;
use crate::gateway::clock::{ClockModel, ClockRegistry};
use crate::gateway::packet::{GazeRecord, Modality, PacketSink, Payload, PerceptionEvent, SensorPacket, VoiceUtterance};
use crate::intent::types::{ActionState, Activity, BlinkEvent, GazeSample};
use crate::{seed, Millis};

pub const SOURCE_INSOLE_LEFT: &str = "insole_left";
pub const SOURCE_INSOLE_RIGHT: &str = "insole_right";
pub const SOURCE_WRISTBAND: &str = "wristband";
pub const SOURCE_EYE_TRACKER: &str = "eye_tracker";
pub const SOURCE_MICROPHONE: &str = "microphone";
pub const SOURCE_CAMERA: &str = "camera";

pub const ALL_SOURCES: [&str; 6] = [
    SOURCE_INSOLE_LEFT,
    SOURCE_INSOLE_RIGHT,
    SOURCE_WRISTBAND,
    SOURCE_EYE_TRACKER,
    SOURCE_MICROPHONE,
    SOURCE_CAMERA,
];

const GAZE_PERIOD_MS: f64 = 1000.0 / 30.0;
const GAZE_TRANSIT_MS: f64 = 300.0;

/// Who is being simulated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subject {
    pub profile: PatientProfile,
    pub gait: GaitParams,
}

impl Subject {
    /// Level-default gait for the profile, with the affected side taken from
    /// the symptom text when it names one.
    pub fn from_profile(profile: PatientProfile, seed: u64) -> Self {
        let mut gait = default_gait_params(profile.level(), seed::derive(seed, &profile.id));
        if let Some(side) = profile.symptom_side() {
            let currently_left = gait.affected_side == AffectedSide::Left;
            let want_left = side == Foot::Left;
            if currently_left != want_left {
                std::mem::swap(&mut gait.stance_fraction_left, &mut gait.stance_fraction_right);
                std::mem::swap(&mut gait.peak_force_left, &mut gait.peak_force_right);
            }
            gait.affected_side = if want_left { AffectedSide::Left } else { AffectedSide::Right };
        }
        Self { profile, gait }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub t_ms: Millis,
    pub kind: String,
    pub detail: serde_json::Value,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    pub entries: Vec<LogEntry>,
}

impl EventLog {
    fn push(&mut self, t_ms: Millis, kind: &str, detail: serde_json::Value) {
        self.entries.push(LogEntry {
            t_ms,
            kind: kind.to_string(),
            detail,
        });
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("log entry serializes"));
            out.push('\n');
        }
        out
    }
}

/// Result of one scenario execution besides the packets themselves.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRun {
    pub log: EventLog,
    /// Ground-truth device clocks (what an ideal time server would estimate).
    pub clocks: ClockRegistry,
    pub packet_counts: BTreeMap<Modality, usize>,
    pub duration_ms: Millis,
}

/// Clocks for every source: script entries win, the rest are seeded skews
/// (devices booted up to 0.9 s before the session, drift within ±50 ppm).
pub fn scenario_clocks(script: &ScenarioScript) -> Result<ClockRegistry, SimError> {
    let mut reg = ClockRegistry::new();
    let mut rng = seed::rng(script.seed, "clocks");
    for src in ALL_SOURCES {
        let offset = -900.0 * rng.gen::<f64>();
        let drift = 100.0 * rng.gen::<f64>() - 50.0;
        reg.register(src, ClockModel::new(offset, drift).map_err(|e| SimError::Domain(e.to_string()))?);
    }
    for spec in &script.clocks {
        let c = ClockModel::new(spec.offset_ms, spec.drift_ppm).map_err(|e| SimError::Domain(e.to_string()))?;
        reg.register(spec.source.clone(), c);
    }
    Ok(reg)
}

struct Emitter {
    /// (true time ms, insertion seq, packet)
    packets: Vec<(f64, usize, SensorPacket)>,
    clocks: ClockRegistry,
}

impl Emitter {
    fn emit(&mut self, t_ms: f64, source: &str, build: impl FnOnce(Millis) -> Payload) -> Result<(), SimError> {
        let clock = self
            .clocks
            .get(source)
            .ok_or_else(|| SimError::Domain(format!("no clock for source {source}")))?;
        let device_ts = clock.device_reading(t_ms);
        let seq = self.packets.len();
        self.packets.push((t_ms, seq, SensorPacket::new(source, device_ts, build(device_ts))));
        Ok(())
    }
}

/// Execute `script` for `subject`, streaming packets into `sink` in
/// simulated-time order. Deterministic in (script, subject).
pub fn run_scenario(
    script: &ScenarioScript,
    subject: &Subject,
    sink: &mut dyn PacketSink,
) -> Result<ScenarioRun, SimError> {
    script.validate()?;
    let clocks = scenario_clocks(script)?;
    let mut em = Emitter {
        packets: Vec::new(),
        clocks: clocks.clone(),
    };
    let mut log = EventLog::default();
    let duration_ms = script.duration_s() * 1000.0;
    let clock0 = script.start_clock_seconds();
    let base = script.baseline;

    let mut hr = RampTrack::new(base.hr);
    let mut hrv = RampTrack::new(base.hrv);
    let mut temp = RampTrack::new(base.temp);
    let mut light = RampTrack::new(base.light);

    em.emit(0.0, SOURCE_CAMERA, |_| {
        Payload::Perception(PerceptionEvent::Objects {
            boxes: script.objects.clone(),
        })
    })?;
    let mut activity_changes: Vec<(f64, Activity)> = vec![(0.0, Activity::Idle)];

    let mut gaze_rng = seed::rng(script.seed, "gaze");
    for (idx, ev) in script.events.iter().enumerate() {
        let t = ev.t_s * 1000.0;
        let tm = t.round() as Millis;
        match &ev.event {
            ScenarioEvent::StartWalk {
                duration_s,
                assisted,
                speed_profile,
            } => {
                let walk_seed = seed::derive(script.seed, &format!("walk-{idx}"));
                let walk = generate_walk_with_profile(&subject.gait, *duration_s, 200.0, walk_seed, *speed_profile)?;
                em.emit(t, SOURCE_CAMERA, |_| {
                    Payload::Perception(PerceptionEvent::WalkAnnotation {
                        assisted: *assisted,
                        speed_change: *speed_profile == SpeedProfile::Change,
                    })
                })?;
                activity_changes.push((t, Activity::Walking));
                activity_changes.push((t + duration_s * 1000.0, Activity::Idle));
                for (frames, source) in [(walk.left, SOURCE_INSOLE_LEFT), (walk.right, SOURCE_INSOLE_RIGHT)] {
                    for mut frame in frames {
                        let ft = t + frame.timestamp;
                        em.emit(ft, source, |dev| {
                            frame.timestamp = dev as f64;
                            Payload::Pressure(frame)
                        })?;
                    }
                }
                log.push(
                    tm,
                    "start_walk",
                    serde_json::json!({
                        "duration_s": duration_s,
                        "assisted": assisted,
                        "speed_profile": speed_profile,
                        "strides_left": walk.truth_left.strides.len(),
                        "strides_right": walk.truth_right.strides.len(),
                    }),
                );
            }
            ScenarioEvent::Sit => {
                activity_changes.push((t, Activity::Sitting));
                log.push(tm, "sit", serde_json::Value::Null);
            }
            ScenarioEvent::Fall => {
                activity_changes.push((t, Activity::Falling));
                log.push(tm, "fall", serde_json::Value::Null);
            }
            ScenarioEvent::VoiceUtterance { text } => {
                em.emit(t, SOURCE_MICROPHONE, |_| Payload::Voice(VoiceUtterance { text: text.clone() }))?;
                log.push(tm, "voice_utterance", serde_json::json!({ "text": text }));
            }
            ScenarioEvent::GazeSequence { target_object, dwell_ms } => {
                let target = script
                    .objects
                    .iter()
                    .find(|o| &o.label == target_object)
                    .ok_or_else(|| SimError::Domain(format!("unknown gaze target {target_object}")))?;
                em.emit(t, SOURCE_CAMERA, |_| {
                    Payload::Perception(PerceptionEvent::Objects {
                        boxes: script.objects.clone(),
                    })
                })?;
                let samples = gaze_path(t, target.center(), *dwell_ms, &mut gaze_rng);
                let n = samples.len();
                for (st, x, y) in samples {
                    em.emit(st, SOURCE_EYE_TRACKER, |dev| {
                        Payload::Gaze(GazeRecord::Sample(GazeSample {
                            timestamp: dev,
                            x,
                            y,
                            valid: true,
                        }))
                    })?;
                }
                log.push(
                    tm,
                    "gaze_sequence",
                    serde_json::json!({ "target": target_object, "dwell_ms": dwell_ms, "samples": n }),
                );
            }
            ScenarioEvent::BlinkPattern { count, spacing_ms } => {
                for k in 0..*count {
                    em.emit(t + f64::from(k) * spacing_ms, SOURCE_EYE_TRACKER, |dev| {
                        Payload::Gaze(GazeRecord::Blink(BlinkEvent { timestamp: dev }))
                    })?;
                }
                log.push(tm, "blink_pattern", serde_json::json!({ "count": count, "spacing_ms": spacing_ms }));
            }
            ScenarioEvent::AmbientRamp {
                from_lux,
                to_lux,
                duration_s,
            } => {
                light.push(t, duration_s * 1000.0, *from_lux, *to_lux);
                log.push(
                    tm,
                    "ambient_ramp",
                    serde_json::json!({ "from_lux": from_lux, "to_lux": to_lux, "duration_s": duration_s }),
                );
            }
            ScenarioEvent::PhysioRamp {
                duration_s,
                hr: hr_r,
                hrv: hrv_r,
                temp: temp_r,
            } => {
                let d = duration_s * 1000.0;
                if let Some([a, b]) = hr_r {
                    hr.push(t, d, *a, *b);
                }
                if let Some([a, b]) = hrv_r {
                    hrv.push(t, d, *a, *b);
                }
                if let Some([a, b]) = temp_r {
                    temp.push(t, d, *a, *b);
                }
                log.push(
                    tm,
                    "physio_ramp",
                    serde_json::json!({ "duration_s": duration_s, "hr": hr_r, "hrv": hrv_r, "temp": temp_r }),
                );
            }
        }
    }

    // Activity states: a walk's trailing Idle is superseded by any explicit
    // state change that lands before it.
    activity_changes.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut last: Option<Activity> = None;
    let explicit: Vec<f64> = script
        .events
        .iter()
        .filter(|e| matches!(e.event, ScenarioEvent::Sit | ScenarioEvent::Fall | ScenarioEvent::StartWalk { .. }))
        .map(|e| e.t_s * 1000.0)
        .collect();
    for (i, &(t, act)) in activity_changes.iter().enumerate() {
        if act == Activity::Idle && i > 0 {
            // skip an end-of-walk Idle if a later explicit state starts at or before it
            let superseded = explicit.iter().any(|&e| e <= t && e > activity_changes[i - 1].0);
            if superseded {
                continue;
            }
        }
        if last == Some(act) {
            continue;
        }
        last = Some(act);
        em.emit(t, SOURCE_CAMERA, |dev| {
            Payload::Perception(PerceptionEvent::Action(ActionState {
                activity: act,
                timestamp: dev,
            }))
        })?;
    }

    // 1 Hz wristband streams
    let mut phys_rng = seed::rng(script.seed, "physio");
    let hr_noise = Normal::new(0.0, 0.5).expect("sigma");
    let hrv_noise = Normal::new(0.0, 0.5).expect("sigma");
    let temp_noise = Normal::new(0.0, 0.02).expect("sigma");
    let mut k = 0u64;
    loop {
        let t = k as f64 * 1000.0;
        if t >= duration_ms {
            break;
        }
        let sample_hr = (hr.value(t) + hr_noise.sample(&mut phys_rng)).clamp(30.0, 220.0);
        let sample_hrv = (hrv.value(t) + hrv_noise.sample(&mut phys_rng)).max(0.0);
        let sample_temp = (temp.value(t) + temp_noise.sample(&mut phys_rng)).clamp(30.0, 42.0);
        em.emit(t, SOURCE_WRISTBAND, |dev| {
            Payload::Physio(PhysioSample {
                timestamp: dev,
                heart_rate: sample_hr,
                hrv: sample_hrv,
                skin_temp: sample_temp,
            })
        })?;
        let lux = light.value(t).max(0.0);
        em.emit(t, SOURCE_WRISTBAND, |dev| {
            Payload::Ambient(AmbientSample {
                timestamp: dev,
                light_level: lux,
                time_of_day: (clock0 + t / 1000.0).rem_euclid(86_400.0),
            })
        })?;
        k += 1;
    }

    em.packets.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut packet_counts = BTreeMap::new();
    for (_, _, p) in em.packets {
        *packet_counts.entry(p.modality).or_insert(0) += 1;
        sink.accept(p);
    }
    log.push(
        duration_ms.round() as Millis,
        "end",
        serde_json::to_value(&packet_counts).expect("counts serialize"),
    );
    Ok(ScenarioRun {
        log,
        clocks,
        packet_counts,
        duration_ms: duration_ms.round() as Millis,
    })
}

/// Approach, dwell on `target`, then look away; 30 Hz samples.
fn gaze_path(t0: f64, target: (f64, f64), dwell_ms: f64, rng: &mut impl Rng) -> Vec<(f64, f64, f64)> {
    let jitter = Normal::new(0.0, 0.003).expect("sigma");
    let start = (0.05 + 0.9 * rng.gen::<f64>(), 0.05 + 0.9 * rng.gen::<f64>());
    let end = (0.05 + 0.9 * rng.gen::<f64>(), 0.05 + 0.9 * rng.gen::<f64>());
    let mut out = Vec::new();
    let mut t = 0.0;
    let total = 2.0 * GAZE_TRANSIT_MS + dwell_ms;
    while t <= total + 1e-9 {
        let (x, y) = if t < GAZE_TRANSIT_MS {
            let a = t / GAZE_TRANSIT_MS;
            (start.0 + (target.0 - start.0) * a, start.1 + (target.1 - start.1) * a)
        } else if t <= GAZE_TRANSIT_MS + dwell_ms {
            (target.0 + jitter.sample(rng), target.1 + jitter.sample(rng))
        } else {
            let a = (t - GAZE_TRANSIT_MS - dwell_ms) / GAZE_TRANSIT_MS;
            (target.0 + (end.0 - target.0) * a, target.1 + (end.1 - target.1) * a)
        };
        out.push((t0 + t, x.clamp(0.0, 1.0), y.clamp(0.0, 1.0)));
        t += GAZE_PERIOD_MS;
    }
    out
}

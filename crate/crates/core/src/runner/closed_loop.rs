//! One scenario end to end: the fused timeline drives the action router,
//! voice and gaze intents, minute ticks of the agent and the state poller.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::rig::DeviceRig;
use crate::agent::context::MINUTE_MS;
use crate::agent::{build_context, Agent, AuditRecord, FallStatus, FallTrigger, InterventionKind, Notification, Outcome};
use crate::devices::poller::DEFAULT_PERIOD_S;
use crate::devices::{CommandRecord, PollEvent, Poller};
use crate::gateway::packet::{GazeRecord, PerceptionEvent};
use crate::gateway::{Payload, TimelineRecord};
use crate::intent::types::{ActionState, BlinkEvent, GazeSample, ObjectBox};
use crate::intent::{gaze_intent, parse_voice_command, select_object, ActionRouter, GazeConfig, Grammar, RoutedEvent};
use crate::sim::scenario::default_objects;
use crate::Millis;

/// Phrases that answer a fall check-in.
const RESPONSES: [&str; 5] = ["i'm fine", "i am fine", "i'm okay", "i am okay", "i'm ok"];

pub fn is_fall_response(text: &str) -> bool {
    let t = text.trim().to_lowercase().replace('’', "'");
    RESPONSES.iter().any(|r| t.starts_with(r))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoiceLog {
    pub ts: Millis,
    pub text: String,
    /// target.action on a match, otherwise the NoMatch message
    pub parsed: Result<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FallEpisode {
    pub ts: Millis,
    pub status: FallStatus,
    /// wall clock from the router trigger to the end of the check-in dispatch
    pub trigger_to_dispatch_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOutcome {
    pub name: String,
    pub duration_ms: Millis,
    pub records: usize,
    pub actions: Vec<ActionState>,
    pub voice: Vec<VoiceLog>,
    pub falls: Vec<FallEpisode>,
    pub poll_events: Vec<PollEvent>,
}

/// Everything one closed-loop run produced.
pub struct LoopLogs {
    pub outcome: ScenarioOutcome,
    pub audit: Vec<AuditRecord>,
    pub notifications: Vec<Notification>,
    pub device_logs: BTreeMap<String, Vec<CommandRecord>>,
}

impl LoopLogs {
    /// Kinds of every intervention that was carried out (notified or
    /// executed on a device), in dispatch order.
    pub fn dispatched(&self) -> Vec<(InterventionKind, Option<String>)> {
        self.audit
            .iter()
            .filter_map(|a| a.dispatch.as_ref())
            .flat_map(|d| d.outcomes.iter())
            .filter(|(_, o)| matches!(o, Outcome::Executed { .. } | Outcome::Notified))
            .map(|(i, _)| (i.kind, i.text.clone().or_else(|| i.device.clone())))
            .collect()
    }
}

struct Loop<'a> {
    agent: &'a mut Agent,
    rig: &'a DeviceRig,
    grammar: &'a Grammar,
    patient: String,
    router: ActionRouter,
    poller: Poller,
    boxes: Vec<ObjectBox>,
    gaze: Vec<GazeSample>,
    blinks: Vec<BlinkEvent>,
    /// fall awaiting the end of its response window: (fall ts, answered)
    open_fall: Option<(Millis, bool)>,
    out: ScenarioOutcome,
}

impl Loop<'_> {
    fn tick(&mut self, records: &[TimelineRecord], now: Millis) {
        let ctx = build_context(records, now, &self.patient);
        self.agent.step(&ctx, None, &self.rig.arbiter);
    }

    fn close_fall(&mut self, records: &[TimelineRecord], now: Millis) {
        if let Some((ts, answered)) = self.open_fall.take() {
            let status = if answered { FallStatus::Responded } else { FallStatus::Unresponsive };
            let ctx = build_context(records, now, &self.patient);
            self.agent.step(&ctx, Some(&FallTrigger { ts, status }), &self.rig.arbiter);
            if let Some(f) = self.out.falls.iter_mut().rev().find(|f| f.ts == ts) {
                f.status = status;
            }
        }
    }

    fn poll(&mut self, now: Millis) {
        let ev = self.poller.poll_once(self.rig.arbiter.client(), &self.rig.arbiter.registry, now);
        self.out.poll_events.extend(ev);
    }

    fn on_record(&mut self, records: &[TimelineRecord], i: usize) {
        let rec = &records[i];
        match &rec.payload {
            Payload::Perception(PerceptionEvent::Action(state)) => {
                for ev in self.router.on_action_state(*state) {
                    if let RoutedEvent::AgentTrigger { ts } = ev {
                        let t0 = Instant::now();
                        // an earlier unanswered fall is resolved before the new one
                        self.close_fall(&records[..i], ts);
                        let ctx = build_context(&records[..i], ts, &self.patient);
                        let trig = FallTrigger {
                            ts,
                            status: FallStatus::Pending,
                        };
                        self.agent.step(&ctx, Some(&trig), &self.rig.arbiter);
                        self.out.falls.push(FallEpisode {
                            ts,
                            status: FallStatus::Pending,
                            trigger_to_dispatch_ms: t0.elapsed().as_secs_f64() * 1000.0,
                        });
                        self.open_fall = Some((ts, false));
                    }
                }
                self.out.actions.push(*state);
            }
            Payload::Perception(PerceptionEvent::Objects { boxes }) => self.boxes = boxes.clone(),
            Payload::Perception(PerceptionEvent::WalkAnnotation { .. }) => {}
            Payload::Voice(v) => {
                let parsed = if is_fall_response(&v.text) {
                    if let Some((_, answered)) = self.open_fall.as_mut() {
                        *answered = true;
                    }
                    Err("fall response".to_string())
                } else {
                    match parse_voice_command(&v.text, self.grammar, &self.rig.arbiter.registry, rec.ts_ms) {
                        Ok(intent) => {
                            let label = format!("{}.{}", intent.target_device, intent.action);
                            self.rig.arbiter.issue_intent(&intent);
                            Ok(label)
                        }
                        Err(e) => Err(e.to_string()),
                    }
                };
                self.out.voice.push(VoiceLog {
                    ts: rec.ts_ms,
                    text: v.text.clone(),
                    parsed,
                });
            }
            Payload::Gaze(GazeRecord::Sample(s)) => self.gaze.push(*s),
            Payload::Gaze(GazeRecord::Blink(b)) => {
                self.blinks.push(*b);
                if let Some(sel) = select_object(&self.gaze, &self.blinks, &self.boxes, &GazeConfig::default()) {
                    let reg = &self.rig.arbiter.registry;
                    let power = crate::devices::DeviceKind::from_label(&sel.object)
                        .and_then(|k| reg.find(k, None))
                        .and_then(|d| self.rig.arbiter.client().intended(d.device_id))
                        .and_then(|s| s.properties.get("power").and_then(|p| p.as_str()).map(str::to_string));
                    if let Some(intent) = gaze_intent(&sel, reg, power.as_deref(), rec.ts_ms) {
                        self.rig.arbiter.issue_intent(&intent);
                    }
                    self.gaze.clear();
                    self.blinks.clear();
                }
            }
            Payload::Pressure(_) | Payload::Physio(_) | Payload::Ambient(_) => {}
        }
    }
}

pub struct LoopInput<'a> {
    pub name: &'a str,
    pub patient: &'a str,
    pub records: &'a [TimelineRecord],
    pub duration_ms: Millis,
    pub response_window_ms: Millis,
    /// poll device state every this many ms; `None` disables polling
    pub poll_ms: Option<Millis>,
}

pub fn default_poll_ms() -> Option<Millis> {
    Some(DEFAULT_PERIOD_S as Millis * 1000)
}

/// Replay `records` in time order. Agent ticks fall on every whole minute up
/// to and including `duration_ms` and see only records strictly before the
/// tick.
pub fn run_closed_loop(input: &LoopInput, agent: &mut Agent, rig: &DeviceRig, grammar: &Grammar) -> LoopLogs {
    let audit_start = agent.audit().len();
    let notes_start = agent.notifications().len();
    let mut lp = Loop {
        agent,
        rig,
        grammar,
        patient: input.patient.to_string(),
        router: ActionRouter::new(),
        poller: Poller::new(DEFAULT_PERIOD_S),
        boxes: default_objects(),
        gaze: Vec::new(),
        blinks: Vec::new(),
        open_fall: None,
        out: ScenarioOutcome {
            name: input.name.to_string(),
            duration_ms: input.duration_ms,
            records: input.records.len(),
            actions: Vec::new(),
            voice: Vec::new(),
            falls: Vec::new(),
            poll_events: Vec::new(),
        },
    };
    let records = input.records;
    let mut next_tick = MINUTE_MS;
    let mut next_poll = input.poll_ms;
    // run every due timer strictly before `t`, in time order
    let mut timers = |lp: &mut Loop, upto: usize, t: Millis, inclusive: bool| loop {
        let due = |x: Millis| if inclusive { x <= t } else { x < t };
        let fall_due = lp.open_fall.map(|(ts, _)| ts + input.response_window_ms).filter(|&x| due(x));
        let poll_due = next_poll.filter(|&x| due(x));
        let tick_due = Some(next_tick).filter(|&x| due(x));
        let Some(at) = [fall_due, poll_due, tick_due].into_iter().flatten().min() else {
            break;
        };
        if fall_due == Some(at) {
            lp.close_fall(&records[..upto], at);
        } else if poll_due == Some(at) {
            lp.poll(at);
            next_poll = input.poll_ms.map(|p| at + p);
        } else {
            lp.tick(&records[..upto], at);
            next_tick += MINUTE_MS;
        }
    };
    for i in 0..records.len() {
        timers(&mut lp, i, records[i].ts_ms, false);
        lp.on_record(records, i);
    }
    timers(&mut lp, records.len(), input.duration_ms, true);
    lp.close_fall(records, input.duration_ms);
    let Loop { out, agent, .. } = lp;
    LoopLogs {
        outcome: out,
        audit: agent.audit()[audit_start..].to_vec(),
        notifications: agent.notifications()[notes_start..].to_vec(),
        device_logs: rig.device_logs(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fall_responses() {
        assert!(is_fall_response("I'm fine"));
        assert!(is_fall_response("  i am okay, thanks"));
        assert!(is_fall_response("I’m fine"));
        assert!(!is_fall_response("turn on the light"));
    }
}

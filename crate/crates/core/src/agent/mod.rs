//! The assistance loop: context window → prompt → decision (rules or an
//! LLM endpoint) → safety layer → dispatch through the guarded arbiter.

pub mod context;
pub mod decision;
pub mod llm;
pub mod prompt;
pub mod rules;
pub mod safety;

use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use context::{build_context, ContextWindow, MinuteRecord};
pub use decision::{parse_decision, AgentDecision, Intervention, InterventionKind, ParseFailure};
pub use llm::{decide_llm, EndpointConfig};
pub use prompt::{render_prompt, Demo, PromptStyle};
pub use rules::{decide_rule_based, FallStatus, FallTrigger, RulePolicy, Thresholds};
pub use safety::{check_raw, safety_corpus_eval, validate, CorpusResult, SafetyVerdict, Whitelist};

use crate::devices::{DenyReason, Registry};
use crate::intent::{Arbiter, DeliveryReceipt, Intent, IntentSource};
use crate::Millis;

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("prompt: {0}")]
    Prompt(String),
    #[error("corpus: {0}")]
    Corpus(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    RuleBased,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub style: PromptStyle,
    pub backend: BackendKind,
    pub endpoint: Option<EndpointConfig>,
    pub policy: RulePolicy,
    /// how long to wait for "I'm fine" after a fall check-in
    pub response_window_s: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            style: PromptStyle::Cot,
            backend: BackendKind::RuleBased,
            endpoint: None,
            policy: RulePolicy::default(),
            response_window_s: 30.0,
        }
    }
}

/// Entry in the caregiver/user notification log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Notification {
    pub ts: Millis,
    pub kind: InterventionKind,
    #[serde(default)]
    pub text: Option<String>,
    #[serde(default)]
    pub channel: Option<String>,
    /// attached to caregiver alerts
    #[serde(default)]
    pub context: Option<ContextWindow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Outcome {
    Executed { receipt: DeliveryReceipt },
    Skipped { reason: DenyReason },
    Failed { error: String },
    Notified,
    Noop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionReport {
    pub outcomes: Vec<(Intervention, Outcome)>,
}

impl ExecutionReport {
    pub fn failures(&self) -> usize {
        self.outcomes.iter().filter(|(_, o)| matches!(o, Outcome::Failed { .. })).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub ts: Millis,
    pub trigger: Option<FallTrigger>,
    pub prompt_sha256: String,
    pub backend: BackendKind,
    /// the LLM backend failed and the rules answered instead
    pub fallback: bool,
    pub raw_response: String,
    pub verdict: SafetyVerdict,
    /// same decision as the previous tick; not dispatched again
    pub suppressed_repeat: bool,
    pub dispatch: Option<ExecutionReport>,
    /// wall-clock time from decision request to end of dispatch
    pub latency_ms: f64,
}

pub struct Agent {
    pub cfg: AgentConfig,
    pub whitelist: Whitelist,
    registry: Registry,
    demos: Vec<Demo>,
    notifications: Vec<Notification>,
    audit: Vec<AuditRecord>,
    last_tick: Option<AgentDecision>,
}

impl Agent {
    pub fn new(cfg: AgentConfig, registry: Registry) -> Self {
        let demos = if cfg.style == PromptStyle::CotWithDemos {
            prompt::bundled_demos()
        } else {
            vec![]
        };
        Self {
            cfg,
            whitelist: Whitelist::for_registry(&registry),
            registry,
            demos,
            notifications: Vec::new(),
            audit: Vec::new(),
            last_tick: None,
        }
    }

    /// Obtain the raw decision text; returns (raw, fallback used).
    fn raw_decision(&self, prompt: &str, ctx: &ContextWindow, trigger: Option<&FallTrigger>) -> (String, bool) {
        let rules = || serde_json::to_string(&decide_rule_based(ctx, trigger, &self.cfg.policy)).expect("decision serializes");
        match (self.cfg.backend, &self.cfg.endpoint) {
            (BackendKind::Llm, Some(ep)) => match decide_llm(prompt, ep) {
                Ok(raw) => (raw, false),
                Err(e) => {
                    log::warn!("LLM backend failed, using rules: {e}");
                    (rules(), true)
                }
            },
            (BackendKind::Llm, None) => (rules(), true),
            (BackendKind::RuleBased, _) => (rules(), false),
        }
    }

    /// One decision cycle. `trigger` marks the fall path; plain ticks whose
    /// decision repeats the previous tick's are audited but not dispatched.
    pub fn step(&mut self, ctx: &ContextWindow, trigger: Option<&FallTrigger>, arbiter: &Arbiter) -> AuditRecord {
        let t0 = Instant::now();
        let prompt = render_prompt(ctx, trigger, self.cfg.style, &self.demos).expect("demos match the style");
        let (raw, fallback) = self.raw_decision(&prompt, ctx, trigger);
        let (decision, verdict) = check_raw(&raw, &self.whitelist, &self.registry);
        let mut suppressed = false;
        let mut dispatch = None;
        if let (Some(d), true) = (decision, verdict.is_pass()) {
            if trigger.is_none() {
                suppressed = !d.is_none() && self.last_tick.as_ref() == Some(&d);
                self.last_tick = Some(d.clone());
            }
            if !suppressed {
                dispatch = Some(self.dispatch(&d, ctx, arbiter));
            }
        }
        let rec = AuditRecord {
            ts: ctx.now_ts,
            trigger: trigger.copied(),
            prompt_sha256: hex::encode(Sha256::digest(prompt.as_bytes())),
            backend: self.cfg.backend,
            fallback,
            raw_response: raw,
            verdict,
            suppressed_repeat: suppressed,
            dispatch,
            latency_ms: t0.elapsed().as_secs_f64() * 1000.0,
        };
        self.audit.push(rec.clone());
        rec
    }

    /// Execute a decision that passed the safety layer.
    pub fn dispatch(&mut self, d: &AgentDecision, ctx: &ContextWindow, arbiter: &Arbiter) -> ExecutionReport {
        use InterventionKind as K;
        let mut outcomes = Vec::new();
        for i in &d.interventions {
            let outcome = match i.kind {
                K::DeviceCommand => {
                    let intent = Intent {
                        target_device: i.device.clone().unwrap_or_default(),
                        action: i.action.clone().unwrap_or_default(),
                        params: i.params.clone().unwrap_or_default(),
                        source: IntentSource::Agent,
                        issued_ts: ctx.now_ts,
                    };
                    let r = arbiter.issue_intent(&intent);
                    match (r.success, r.denied()) {
                        (true, _) => Outcome::Executed { receipt: r },
                        (false, Some(reason)) => Outcome::Skipped { reason },
                        (false, None) => Outcome::Failed {
                            error: r.error.unwrap_or_default(),
                        },
                    }
                }
                K::Reminder | K::CaregiverAlert | K::PauseTraining => {
                    let alert = i.kind == K::CaregiverAlert;
                    self.notifications.push(Notification {
                        ts: ctx.now_ts,
                        kind: i.kind,
                        text: i.text.clone(),
                        channel: i.params.as_ref().and_then(|p| p.get("channel")).and_then(|c| c.as_str()).map(str::to_string),
                        context: alert.then(|| ctx.clone()),
                    });
                    Outcome::Notified
                }
                K::None => Outcome::Noop,
            };
            outcomes.push((i.clone(), outcome));
        }
        ExecutionReport { outcomes }
    }

    pub fn notifications(&self) -> &[Notification] {
        &self.notifications
    }

    pub fn audit(&self) -> &[AuditRecord] {
        &self.audit
    }
}

pub fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    items.iter().map(|x| serde_json::to_string(x).expect("record serializes") + "\n").collect()
}

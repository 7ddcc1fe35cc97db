//! Canonical JSON prompts. Keys are sorted (serde_json's default map), so
//! equal inputs give byte-identical strings.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::context::ContextWindow;
use super::decision::{required_output_schema, AgentDecision, Intervention, InterventionKind};
use super::rules::FallTrigger;
use super::AgentError;
use crate::devices::guard::params;

pub const SCHEMA_VERSION: &str = "1.0";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptStyle {
    Basic,
    #[default]
    Cot,
    CotWithDemos,
}

/// A worked example: a sketch of the context and the expected decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demo {
    pub context: Value,
    pub decision: AgentDecision,
}

fn directives(style: PromptStyle) -> Value {
    let mut d = json!({
        "role": "You assist a stroke survivor training at home. Decide whether any intervention is needed now.",
        "output": "Reply with one JSON object that matches required_output_schema and nothing else.",
        "safety": "Only use devices and actions listed in the schema; when unsure, choose kind none.",
    });
    if style != PromptStyle::Basic {
        d["reasoning"] = json!(
            "Think step by step: check heart rate against rest, HRV, the temperature trend, light and time of day, \
             and any fall event. Put a short summary of that reasoning in rationale."
        );
    }
    d
}

pub fn render_prompt(ctx: &ContextWindow, trigger: Option<&FallTrigger>, style: PromptStyle, demos: &[Demo]) -> Result<String, AgentError> {
    if (style == PromptStyle::CotWithDemos) == demos.is_empty() {
        return Err(AgentError::Prompt("demos are required for, and only for, cot_with_demos".into()));
    }
    let mut p = json!({
        "schema_version": SCHEMA_VERSION,
        "patient": ctx.patient_ref,
        "now_ts": ctx.now_ts,
        "clock_s": ctx.clock_s,
        "window": ctx.minutes,
        "trigger": trigger,
        "directives": directives(style),
        "required_output_schema": required_output_schema(),
    });
    if !demos.is_empty() {
        p["demos"] = serde_json::to_value(demos).expect("demos serialize");
    }
    Ok(serde_json::to_string(&p).expect("prompt serializes"))
}

/// Two examples: an exertion episode and a quiet minute.
pub fn bundled_demos() -> Vec<Demo> {
    vec![
        Demo {
            context: json!({ "hr_last": 118, "hrv_last": 24, "temp_slope_per_min": 0.15 }),
            decision: AgentDecision {
                interventions: vec![
                    Intervention::of(InterventionKind::PauseTraining),
                    Intervention::text(InterventionKind::Reminder, super::rules::HYDRATION_TEXT),
                    Intervention::command("ac", "set_power", params(json!({ "power": "on" }))),
                ],
                rationale: Some("heart rate high, HRV low, temperature rising".into()),
            },
        },
        Demo {
            context: json!({ "hr_last": 72, "hrv_last": 58, "temp_slope_per_min": 0.0 }),
            decision: AgentDecision::none(),
        },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::context::build_context;

    fn ctx() -> ContextWindow {
        build_context(&[], 360_000, "P07")
    }

    #[test]
    fn byte_stable() {
        let a = render_prompt(&ctx(), None, PromptStyle::Cot, &[]).unwrap();
        let b = render_prompt(&ctx(), None, PromptStyle::Cot, &[]).unwrap();
        assert_eq!(a, b);
        let v: Value = serde_json::from_str(&a).unwrap();
        assert_eq!(v["window"].as_array().unwrap().len(), 6);
        assert_eq!(v["schema_version"], SCHEMA_VERSION);
    }

    #[test]
    fn demos_are_embedded() {
        let p = render_prompt(&ctx(), None, PromptStyle::CotWithDemos, &bundled_demos()).unwrap();
        let v: Value = serde_json::from_str(&p).unwrap();
        assert_eq!(v["demos"].as_array().unwrap().len(), 2);
        assert!(render_prompt(&ctx(), None, PromptStyle::CotWithDemos, &[]).is_err());
        assert!(render_prompt(&ctx(), None, PromptStyle::Basic, &bundled_demos()).is_err());
    }

    #[test]
    fn basic_and_cot_differ_only_in_directives() {
        let parse = |s| serde_json::from_str::<Value>(&render_prompt(&ctx(), None, s, &[]).unwrap()).unwrap();
        let (mut b, mut c) = (parse(PromptStyle::Basic), parse(PromptStyle::Cot));
        assert_ne!(b["directives"], c["directives"]);
        b.as_object_mut().unwrap().remove("directives");
        c.as_object_mut().unwrap().remove("directives");
        assert_eq!(b, c);
    }
}

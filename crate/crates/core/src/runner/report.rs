//! Metrics aggregated from an output directory. A pure function of the
//! files on disk; sections whose logs are missing are listed as incomplete.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::artifacts::{read_json, read_jsonl};
use super::cohort::PatientSummary;
use super::suite::{LatencyStats, StepResult, SuccessRates, SuiteReport};
use super::RunError;
use crate::agent::{AuditRecord, CorpusResult};
use crate::devices::PollEvent;
use crate::gateway::RejectReason;
use crate::intent::DeliveryReceipt;
use crate::model::EvalReport;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DeviceEventCounts {
    pub intents: usize,
    pub guard_denials: usize,
    pub failures: usize,
    pub reconciliations: usize,
    pub offline_events: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub suite_latency: Option<LatencyStats>,
    pub suite_success: Option<SuccessRates>,
    /// accepted segments and rejections per reason over the cohort
    pub accepted_segments: Option<usize>,
    pub rejections: Option<BTreeMap<RejectReason, usize>>,
    pub classifier: Option<EvalReport>,
    pub safety: Option<CorpusResult>,
    pub scenario_events: BTreeMap<String, DeviceEventCounts>,
    pub incomplete: Vec<String>,
}

pub const SUITE_RECEIPTS: &str = "suite/timing_steps.jsonl";
pub const COHORT_SUMMARY: &str = "simulate/patients.json";
pub const EVAL_REPORT: &str = "train/eval_report.json";
pub const SAFETY_RESULT: &str = "safety/corpus_result.json";
pub const SCENARIO_DIR: &str = "scenarios";

fn optional<T>(dir: &Path, rel: &str, incomplete: &mut Vec<String>, load: impl FnOnce(&Path) -> Result<T, RunError>) -> Option<T> {
    let p = dir.join(rel);
    if !p.exists() {
        incomplete.push(rel.to_string());
        return None;
    }
    match load(&p) {
        Ok(v) => Some(v),
        Err(e) => {
            incomplete.push(format!("{rel}: {e}"));
            None
        }
    }
}

pub fn build_report(dir: &Path) -> Result<MetricsReport, RunError> {
    let mut incomplete = Vec::new();
    let steps: Option<Vec<StepResult>> = optional(dir, SUITE_RECEIPTS, &mut incomplete, read_jsonl);
    let patients: Option<Vec<PatientSummary>> = optional(dir, COHORT_SUMMARY, &mut incomplete, read_json);
    let classifier = optional(dir, EVAL_REPORT, &mut incomplete, read_json);
    let safety = optional(dir, SAFETY_RESULT, &mut incomplete, read_json);

    let suite = steps.map(|s| {
        let lat: Vec<f64> = s.iter().filter_map(|x| x.receipt.as_ref()).filter(|r| r.success).map(|r| r.latency_ms).collect();
        SuiteReport {
            success: SuccessRates::of(&s),
            latency: LatencyStats::of(&lat),
            steps: s,
        }
    });
    let rejections = patients.as_ref().map(|ps| {
        let mut m = BTreeMap::new();
        for p in ps {
            for (r, n) in &p.rejected {
                *m.entry(*r).or_insert(0) += n;
            }
        }
        m
    });

    let mut scenario_events = BTreeMap::new();
    let sdir = dir.join(SCENARIO_DIR);
    if sdir.is_dir() {
        let mut names: Vec<_> = std::fs::read_dir(&sdir)?.filter_map(|e| e.ok()).filter(|e| e.path().is_dir()).collect();
        names.sort_by_key(|e| e.file_name());
        for e in names {
            let name = e.file_name().to_string_lossy().to_string();
            let rel = |f: &str| format!("{SCENARIO_DIR}/{name}/{f}");
            let receipts: Option<Vec<DeliveryReceipt>> = optional(dir, &rel("timing_receipts.jsonl"), &mut incomplete, read_jsonl);
            let polls: Option<Vec<PollEvent>> = optional(dir, &rel("poll.jsonl"), &mut incomplete, read_jsonl);
            let _audit: Option<Vec<AuditRecord>> = optional(dir, &rel("timing_audit.jsonl"), &mut incomplete, read_jsonl);
            let mut c = DeviceEventCounts::default();
            for r in receipts.iter().flatten() {
                c.intents += 1;
                if r.denied().is_some() {
                    c.guard_denials += 1;
                } else if !r.success {
                    c.failures += 1;
                }
            }
            for p in polls.iter().flatten() {
                match p {
                    PollEvent::Reconciled { .. } => c.reconciliations += 1,
                    PollEvent::Offline { .. } => c.offline_events += 1,
                    PollEvent::Online { .. } => {}
                }
            }
            scenario_events.insert(name, c);
        }
    } else {
        incomplete.push(SCENARIO_DIR.to_string());
    }

    Ok(MetricsReport {
        suite_latency: suite.as_ref().and_then(|s| s.latency),
        suite_success: suite.as_ref().map(|s| s.success),
        accepted_segments: patients.as_ref().map(|ps| ps.iter().map(|p| p.accepted).sum()),
        rejections,
        classifier,
        safety,
        scenario_events,
        incomplete,
    })
}

fn fmt_opt<T>(v: Option<T>, f: impl FnOnce(T) -> String) -> String {
    v.map_or_else(|| "incomplete".to_string(), f)
}

/// Human-readable summary table.
pub fn render_table(r: &MetricsReport) -> String {
    let mut s = String::new();
    let mut row = |k: &str, v: String| {
        let _ = writeln!(s, "{k:<28} {v}");
    };
    row(
        "suite latency (ms)",
        fmt_opt(r.suite_latency, |l| format!("mean {:.2}  sd {:.2}  p95 {:.2}  n {}", l.mean_ms, l.sd_ms, l.p95_ms, l.n)),
    );
    row(
        "suite success",
        fmt_opt(r.suite_success, |x| format!("first try {:.3}  after retry {:.3}  max retries {}", x.first_try, x.after_retry, x.max_retries)),
    );
    row("accepted segments", fmt_opt(r.accepted_segments, |n| n.to_string()));
    row("rejections", fmt_opt(r.rejections.as_ref(), |m| format!("{m:?}")));
    row(
        "classifier",
        fmt_opt(r.classifier.as_ref(), |c| format!("accuracy {:.4}  macro F1 {:.4}", c.weighted_accuracy, c.macro_f1)),
    );
    row(
        "safety corpus",
        fmt_opt(r.safety.as_ref(), |c| format!("detected {}/{}  false activations {}", c.detected, c.erroneous, c.false_activations)),
    );
    for (name, c) in &r.scenario_events {
        row(
            &format!("scenario {name}"),
            format!(
                "intents {}  denials {}  failures {}  reconciled {}  offline {}",
                c.intents, c.guard_denials, c.failures, c.reconciliations, c.offline_events
            ),
        );
    }
    if !r.incomplete.is_empty() {
        row("incomplete", r.incomplete.join(", "));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_dir_is_all_incomplete() {
        let dir = tempfile::tempdir().unwrap();
        let r = build_report(dir.path()).unwrap();
        assert!(r.suite_latency.is_none() && r.classifier.is_none());
        assert_eq!(r.incomplete.len(), 5);
        assert!(render_table(&r).contains("incomplete"));
    }
}

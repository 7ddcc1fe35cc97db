//! The CLI subcommands as library functions. Each writes under `out` and
//! returns a summary the CLI prints.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::artifacts::{read_dataset, write_dataset, write_json, write_jsonl, SegmentMeta};
use super::closed_loop::{default_poll_ms, run_closed_loop, LoopInput, LoopLogs};
use super::cohort::{simulate_cohort, timeline_for, PatientSummary};
use super::config::RunConfig;
use super::report::{build_report, render_table, MetricsReport, COHORT_SUMMARY, EVAL_REPORT, SAFETY_RESULT, SCENARIO_DIR, SUITE_RECEIPTS};
use super::rig::DeviceRig;
use super::suite::{run_suite, InteractionSuite, SuiteReport};
use super::RunError;
use crate::agent::context::MINUTE_MS;
use crate::agent::safety::{bundled_corpus_dir, load_corpus};
use crate::agent::{safety_corpus_eval, Agent, CorpusResult, Whitelist};
use crate::analytics::export::{write_feature_csv, FeatureRow};
use crate::analytics::extract_features;
use crate::devices::{ClientConfig, GuardPolicy, Registry, ServerHandle, VirtualDevice};
use crate::gateway::wire::{read_timeline_jsonl, write_timeline_jsonl};
use crate::gateway::FusedTimeline;
use crate::intent::Grammar;
use crate::model::{build_dataset, checkpoint, evaluate, items_from_segments, EvalReport};
use crate::sim::profile::{reference_cohort, PatientProfile, Sex};
use crate::sim::run::Subject;
use crate::sim::scenario::ScenarioScript;
use crate::Millis;

fn ensure(dir: &Path) -> Result<PathBuf, RunError> {
    std::fs::create_dir_all(dir)?;
    Ok(dir.to_path_buf())
}

/// Reference-cohort profile for `id`, or a generic mild profile.
pub fn subject_for(patient: &str, seed: u64) -> Result<Subject, RunError> {
    let profile = match reference_cohort().into_iter().find(|p| p.id == patient) {
        Some(p) => p,
        None => PatientProfile::new(patient, 60, Sex::Female, 24.0, 90, "")?,
    };
    Ok(Subject::from_profile(profile, seed))
}

pub fn script_name(script: &ScenarioScript, path: &Path) -> String {
    script
        .name
        .clone()
        .unwrap_or_else(|| path.file_stem().map_or("scenario".into(), |s| s.to_string_lossy().to_string()))
}

/// Load a script and simulate it through the gateway with the run seed.
pub fn scenario_timeline(cfg: &RunConfig, path: &Path) -> Result<(ScenarioScript, FusedTimeline), RunError> {
    let mut script = ScenarioScript::load(path)?;
    script.seed = cfg.scenario_seed(script.seed);
    let subject = subject_for(&script.patient, cfg.seed)?;
    let tl = timeline_for(&script, &subject)?;
    Ok((script, tl))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateSummary {
    pub accepted_segments: usize,
    pub class_counts: [usize; 3],
    pub balanced_per_class: usize,
    pub scenario_records: Vec<(String, usize)>,
}

/// Cohort segments, features and rasterized dataset, plus one timeline per
/// scenario. Writes under `out/simulate`.
pub fn cmd_simulate(cfg: &RunConfig, out: &Path) -> Result<SimulateSummary, RunError> {
    let dir = ensure(&out.join("simulate"))?;
    let data = simulate_cohort(&reference_cohort(), &cfg.cohort, cfg.seed)?;
    let items = items_from_segments(&data.segments, cfg.model.map_height, cfg.model.map_width)?;
    // fails when a class is missing
    let ds = build_dataset(items.clone(), cfg.seed)?;
    write_json(&out.join(COHORT_SUMMARY), &data.patients)?;
    write_jsonl(&dir.join("segments.jsonl"), &data.segments.iter().map(SegmentMeta::of).collect::<Vec<_>>())?;
    let rows = data
        .segments
        .iter()
        .map(|s| Ok(FeatureRow::new(&s.patient_ref, s.start_ts, &extract_features(s)?, s.label)))
        .collect::<Result<Vec<_>, RunError>>()?;
    write_feature_csv(std::fs::File::create(dir.join("features.csv"))?, &rows)?;
    write_dataset(&dir.join("dataset.bin"), &items, cfg.model.map_height, cfg.model.map_width)?;

    let tdir = ensure(&dir.join("timelines"))?;
    let mut scenario_records = Vec::new();
    for path in &cfg.scenarios {
        let (script, tl) = scenario_timeline(cfg, path)?;
        let name = script_name(&script, path);
        let mut w = std::io::BufWriter::new(std::fs::File::create(tdir.join(format!("{name}.jsonl")))?);
        write_timeline_jsonl(&mut w, &tl)?;
        scenario_records.push((name, tl.len()));
    }
    Ok(SimulateSummary {
        accepted_segments: data.segments.len(),
        class_counts: data.class_counts(),
        balanced_per_class: ds.class_counts[0],
        scenario_records,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub train_items: usize,
    pub test_items: usize,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub report: EvalReport,
}

/// Train on `out/simulate/dataset.bin`; writes checkpoint, history and the
/// held-out report under `out/train`.
pub fn cmd_train(cfg: &RunConfig, out: &Path, max_epochs: Option<usize>) -> Result<TrainSummary, RunError> {
    let dir = ensure(&out.join("train"))?;
    let (items, h, w) = read_dataset(&out.join("simulate/dataset.bin"))?;
    let mut mcfg = cfg.model.clone();
    if (h, w) != (mcfg.map_height, mcfg.map_width) {
        return Err(RunError::Config(format!("dataset maps are {h}x{w}, model expects {}x{}", mcfg.map_height, mcfg.map_width)));
    }
    if let Some(n) = max_epochs {
        mcfg.max_epochs = n;
    }
    let ds = build_dataset(items, cfg.seed)?;
    let t0 = Instant::now();
    let m = crate::model::train::train_with(&mcfg, &ds, |r| {
        log::info!("epoch {} train {:.4} val {:.4}", r.epoch, r.train_loss, r.val_loss)
    })?;
    let wall_s = t0.elapsed().as_secs_f64();
    let report = evaluate(&m.net, &ds)?;
    checkpoint::save(&m.net, &dir.join("checkpoint.bin"))?;
    std::fs::write(dir.join("history.csv"), m.history_csv())?;
    write_json(&out.join(EVAL_REPORT), &report)?;
    let summary = TrainSummary {
        train_items: ds.train.len(),
        test_items: ds.test.len(),
        best_epoch: m.best_epoch,
        epochs_run: m.epochs_run,
        report,
    };
    write_json(&dir.join("summary.json"), &summary)?;
    write_json(&dir.join("timing.json"), &serde_json::json!({ "train_wall_s": wall_s }))?;
    Ok(summary)
}

/// Re-evaluate the saved checkpoint on the held-out split.
pub fn cmd_eval(cfg: &RunConfig, out: &Path) -> Result<EvalReport, RunError> {
    let (items, _, _) = read_dataset(&out.join("simulate/dataset.bin"))?;
    let ds = build_dataset(items, cfg.seed)?;
    let net = checkpoint::load(&out.join("train/checkpoint.bin"))?;
    let report = evaluate(&net, &ds)?;
    if report.recomputed()? != report {
        return Err(RunError::Config("report does not match its confusion matrix".into()));
    }
    write_json(&ensure(&out.join("eval"))?.join("eval_report.json"), &report)?;
    Ok(report)
}

/// How `run-scenario` reaches the appliances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceMode {
    /// fresh servers on loopback ephemeral ports
    #[default]
    Loopback,
    /// servers already running at the registry addresses
    External,
    InProcess,
}

pub fn make_rig(cfg: &RunConfig, mode: DeviceMode) -> Result<DeviceRig, RunError> {
    let reg = Registry::load(&cfg.registry)?;
    let policy = GuardPolicy::default();
    Ok(match mode {
        DeviceMode::Loopback => DeviceRig::loopback_udp(&reg, policy, ClientConfig::default())?,
        DeviceMode::External => DeviceRig::external(&reg, policy, ClientConfig::default()),
        DeviceMode::InProcess => DeviceRig::in_process(&reg, policy),
    })
}

pub fn load_grammar(cfg: &RunConfig) -> Result<Grammar, RunError> {
    match &cfg.grammar {
        Some(p) => Grammar::load(p).map_err(RunError::Config),
        None => Ok(Grammar::bundled()),
    }
}

fn write_loop_logs(dir: &Path, logs: &LoopLogs, receipts: &[crate::intent::DeliveryReceipt]) -> Result<(), RunError> {
    write_json(&dir.join("outcome.json"), &logs.outcome)?;
    write_jsonl(&dir.join("timing_audit.jsonl"), &logs.audit)?;
    write_jsonl(&dir.join("notifications.jsonl"), &logs.notifications)?;
    write_jsonl(&dir.join("timing_receipts.jsonl"), receipts)?;
    write_jsonl(&dir.join("poll.jsonl"), &logs.outcome.poll_events)?;
    write_json(&dir.join("devices.json"), &logs.device_logs)?;
    Ok(())
}

/// Closed loop over one script with a fresh rig and agent.
pub fn run_one_scenario(cfg: &RunConfig, path: &Path, mode: DeviceMode) -> Result<(String, LoopLogs, Vec<crate::intent::DeliveryReceipt>), RunError> {
    let (script, tl) = scenario_timeline(cfg, path)?;
    let name = script_name(&script, path);
    let rig = make_rig(cfg, mode)?;
    let mut agent = Agent::new(cfg.agent.clone(), rig.arbiter.registry.clone());
    let input = LoopInput {
        name: &name,
        patient: &script.patient,
        records: tl.records(),
        duration_ms: (script.duration_s() * 1000.0).round() as Millis,
        response_window_ms: (cfg.agent.response_window_s * 1000.0).round() as Millis,
        poll_ms: default_poll_ms(),
    };
    let logs = run_closed_loop(&input, &mut agent, &rig, &load_grammar(cfg)?);
    let receipts = rig.arbiter.receipts();
    Ok((name, logs, receipts))
}

/// Every configured scenario (or `only`) through the closed loop; logs go
/// to `out/scenarios/<name>/`.
pub fn cmd_run_scenario(cfg: &RunConfig, out: &Path, only: &[PathBuf], mode: DeviceMode) -> Result<Vec<(String, LoopLogs)>, RunError> {
    let paths = if only.is_empty() { cfg.scenarios.clone() } else { only.to_vec() };
    let mut all = Vec::new();
    for p in &paths {
        let (name, logs, receipts) = run_one_scenario(cfg, p, mode)?;
        write_loop_logs(&ensure(&out.join(SCENARIO_DIR).join(&name))?, &logs, &receipts)?;
        all.push((name, logs));
    }
    Ok(all)
}

/// The interaction suite against the appliances; writes `out/suite/`.
pub fn cmd_run_suite(cfg: &RunConfig, out: &Path, mode: DeviceMode) -> Result<SuiteReport, RunError> {
    let suite = match &cfg.interaction_suite {
        Some(p) => InteractionSuite::load(p)?,
        None => InteractionSuite::bundled(),
    };
    let rig = make_rig(cfg, mode)?;
    let rep = run_suite(&suite, &rig, &load_grammar(cfg)?);
    write_jsonl(&ensure(&out.join("suite"))?.join("timing_steps.jsonl"), &rep.steps)?;
    debug_assert!(out.join(SUITE_RECEIPTS).exists());
    Ok(rep)
}

/// Replay a saved timeline through the agent with in-process appliances.
pub fn cmd_agent_replay(cfg: &RunConfig, timeline: &Path, patient: &str, out: &Path) -> Result<LoopLogs, RunError> {
    let tl = read_timeline_jsonl(std::io::BufReader::new(std::fs::File::open(timeline)?))?;
    let last = tl.records().last().map_or(0, |r| r.ts_ms);
    let duration_ms = (last / MINUTE_MS + 1) * MINUTE_MS;
    let rig = make_rig(cfg, DeviceMode::InProcess)?;
    let mut agent = Agent::new(cfg.agent.clone(), rig.arbiter.registry.clone());
    let name = timeline.file_stem().map_or("replay".into(), |s| s.to_string_lossy().to_string());
    let input = LoopInput {
        name: &name,
        patient,
        records: tl.records(),
        duration_ms,
        response_window_ms: (cfg.agent.response_window_s * 1000.0).round() as Millis,
        poll_ms: None,
    };
    let logs = run_closed_loop(&input, &mut agent, &rig, &load_grammar(cfg)?);
    write_loop_logs(&ensure(&out.join("replay").join(&name))?, &logs, &rig.arbiter.receipts())?;
    Ok(logs)
}

pub fn cmd_safety_eval(cfg: &RunConfig, corpus: Option<&Path>, out: &Path) -> Result<CorpusResult, RunError> {
    let reg = Registry::load(&cfg.registry)?;
    let dir = corpus.map_or_else(bundled_corpus_dir, Path::to_path_buf);
    let items = load_corpus(&dir)?;
    let wl = Whitelist {
        alert_channels: vec![cfg.agent.policy.alert_channel.clone()],
        ..Whitelist::for_registry(&reg)
    };
    let res = safety_corpus_eval(&items, &wl, &reg);
    ensure(&out.join("safety"))?;
    write_json(&out.join(SAFETY_RESULT), &res)?;
    Ok(res)
}

pub fn cmd_report(out: &Path) -> Result<(MetricsReport, String), RunError> {
    let r = build_report(out)?;
    write_json(&out.join("report.json"), &r)?;
    let table = render_table(&r);
    std::fs::write(out.join("report.txt"), &table)?;
    Ok((r, table))
}

/// Serve every registry device at its configured address.
pub fn cmd_serve_devices(cfg: &RunConfig) -> Result<Vec<ServerHandle>, RunError> {
    let reg = Registry::load(&cfg.registry)?;
    reg.devices
        .iter()
        .map(|d| Ok(std::sync::Arc::new(VirtualDevice::new(d.clone())).serve(&d.address)?))
        .collect()
}

/// Cohort summaries as written by `cmd_simulate`.
pub fn read_patients(out: &Path) -> Result<Vec<PatientSummary>, RunError> {
    super::artifacts::read_json(&out.join(COHORT_SUMMARY))
}

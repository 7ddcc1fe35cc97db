//! Acceptance criteria, one test each. Every test prints a single
//! `criterion N PASS|FAIL` line with the measured values and the pinned
//! tolerance. Run with `--nocapture` to see them.
//!
//! The tests hold a shared lock so wall-clock budgets are measured without
//! competing work on the same cores.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;

use homecare::agent::context::{MinuteRecord, MINUTE_MS, WINDOW_MINUTES};
use homecare::agent::rules::{CHECK_IN_TEXT, HYDRATION_TEXT};
use homecare::agent::safety::{bundled_corpus_dir, load_corpus};
use homecare::agent::{
    build_context, decide_rule_based, safety_corpus_eval, validate, ContextWindow, FallStatus, FallTrigger,
    InterventionKind as K, RulePolicy, SafetyVerdict, Whitelist,
};
use homecare::analytics::stats::mann_whitney_greater;
use homecare::analytics::{extract_features, GaitFeatures};
use homecare::devices::{decode_packet, encode_packet, Registry, Token, HELLO};
use homecare::gateway::{count_strides, detect_bouts, edge_case_filter, segment_walks, FilterVerdict, GaitSegment, Payload, RejectReason};
use homecare::intent::Activity;
use homecare::model::gradcheck::{jitter_biases, measure, DEFAULT_EPSILON};
use homecare::model::train::train_with;
use homecare::model::{build_dataset, evaluate, items_from_segments, predict, Dataset, ModelConfig, Net};
use homecare::runner::artifacts::digest_tree;
use homecare::runner::cohort::{simulate_cohort, timeline_for, CohortData, CohortSpec};
use homecare::runner::commands::{cmd_simulate, cmd_train, load_grammar, make_rig, run_one_scenario, scenario_timeline};
use homecare::runner::{run_suite, DeviceMode, InteractionSuite, RunConfig};
use homecare::seed;
use homecare::sim::gait::SpeedProfile;
use homecare::sim::profile::{reference_cohort, ImpairmentLevel};
use homecare::sim::run::Subject;
use homecare::sim::scenario::{default_objects, ScenarioEvent, ScenarioScript, TimedEvent};

const COHORT_SEED: u64 = 42;
const MAP: usize = 56;

fn serial() -> MutexGuard<'static, ()> {
    static LOCK: Mutex<()> = Mutex::new(());
    LOCK.lock().unwrap_or_else(|e| e.into_inner())
}

fn verdict(n: u32, title: &str, pass: bool, detail: &str) {
    println!("criterion {n} {}: {title} | {detail}", if pass { "PASS" } else { "FAIL" });
}

fn cfg() -> RunConfig {
    RunConfig::load(&RunConfig::bundled_path()).unwrap()
}

struct Cohort {
    data: CohortData,
    dataset: Dataset,
    /// simulation and rasterization wall time
    build_s: f64,
}

fn cohort() -> &'static Cohort {
    static C: OnceLock<Cohort> = OnceLock::new();
    C.get_or_init(|| {
        let t0 = Instant::now();
        let data = simulate_cohort(&reference_cohort(), &CohortSpec::default(), COHORT_SEED).unwrap();
        let items = items_from_segments(&data.segments, MAP, MAP).unwrap();
        let dataset = build_dataset(items, COHORT_SEED).unwrap();
        Cohort {
            data,
            dataset,
            build_s: t0.elapsed().as_secs_f64(),
        }
    })
}

/// Held-out accuracy by direct counting, independent of the report.
fn counted_accuracy(net: &Net, ds: &Dataset) -> f64 {
    let hits = ds
        .test_items()
        .filter(|it| predict(net, &it.left, &it.right).unwrap() == it.label)
        .count();
    hits as f64 / ds.test.len() as f64
}

#[test]
fn criterion_1_classifier_on_synthetic_cohort() {
    let _g = serial();
    const MIN_ACC: f64 = 0.90;
    const MIN_F1: f64 = 0.88;
    const CHANCE: (f64, f64) = (0.2, 0.47);
    const MIN_PER_CLASS: usize = 100;
    const BUDGET_S: f64 = 15.0 * 60.0;

    let c = cohort();
    let counts = c.data.class_counts();
    let model = ModelConfig {
        seed: seed::derive(COHORT_SEED, "model"),
        ..ModelConfig::desk_scale()
    };
    let t0 = Instant::now();
    let trained = train_with(&model, &c.dataset, |_| {}).unwrap();
    let train_s = t0.elapsed().as_secs_f64();
    let report = evaluate(&trained.net, &c.dataset).unwrap();
    let acc = counted_accuracy(&trained.net, &c.dataset);

    let shuffled = c.dataset.with_shuffled_train_labels(seed::derive(COHORT_SEED, "control"));
    let control = train_with(&model, &shuffled, |_| {}).unwrap();
    // the control is scored against the true held-out labels
    let control_acc = counted_accuracy(&control.net, &c.dataset);

    let total_s = c.build_s + train_s;
    let pass = counts.iter().all(|&n| n >= MIN_PER_CLASS)
        && (acc - report.weighted_accuracy).abs() < 1e-12
        && acc >= MIN_ACC
        && report.macro_f1 >= MIN_F1
        && (CHANCE.0..=CHANCE.1).contains(&control_acc)
        && total_s <= BUDGET_S;
    verdict(
        1,
        "classifier",
        pass,
        &format!(
            "segments/class {counts:?} (>= {MIN_PER_CLASS}); train {} test {}; accuracy {acc:.4} (>= {MIN_ACC}); \
             macro-F1 {:.4} (>= {MIN_F1}); shuffled-label accuracy {control_acc:.4} (in [{}, {}]); \
             best epoch {} of {}; runtime {total_s:.0} s (<= {BUDGET_S:.0} s)",
            c.dataset.train.len(),
            c.dataset.test.len(),
            report.macro_f1,
            CHANCE.0,
            CHANCE.1,
            trained.best_epoch,
            trained.epochs_run
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_2_gradient_check() {
    let _g = serial();
    const TOL: f64 = 1e-4;
    const TOL_ONE_LAYER: f64 = 1e-6;
    const BUDGET_S: f64 = 120.0;

    let item = &cohort().dataset.items[0];
    let t0 = Instant::now();
    let check = |hidden: Vec<usize>| {
        let cfg = ModelConfig {
            hidden,
            zero_init_final: false,
            seed: 5,
            ..ModelConfig::desk_scale()
        };
        let mut net = Net::new(&cfg).unwrap();
        jitter_biases(&mut net, 6, 0.1);
        let r = measure(&net, &item.left, &item.right, item.label.index(), DEFAULT_EPSILON).unwrap();
        (r, net.param_count())
    };
    let (deep, deep_n) = check(ModelConfig::desk_scale().hidden);
    let (flat, flat_n) = check(Vec::new());
    let secs = t0.elapsed().as_secs_f64();
    let pass = deep.n_params == deep_n
        && flat.n_params == flat_n
        && deep.kink_skipped == 0
        && flat.kink_skipped == 0
        && deep.max_rel_err < TOL
        && flat.max_rel_err < TOL_ONE_LAYER
        && secs <= BUDGET_S;
    verdict(
        2,
        "gradient check",
        pass,
        &format!(
            "desk-scale {deep_n} params max rel err {:.3e} (< {TOL:e}, worst {}); 1-layer head {flat_n} params {:.3e} (< {TOL_ONE_LAYER:e}); \
             kink retries {}/{} skipped {}/{}; runtime {secs:.1} s (<= {BUDGET_S} s)",
            deep.max_rel_err, deep.worst_tensor, flat.max_rel_err, deep.kink_retries, flat.kink_retries, deep.kink_skipped, flat.kink_skipped
        ),
    );
    assert!(pass);
}

/// U of `a` against `b` by counting pairs.
fn pair_count_u(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .map(|x| b.iter().map(|y| if x > y { 1.0 } else if x == y { 0.5 } else { 0.0 }).sum::<f64>())
        .sum()
}

#[test]
fn criterion_3_feature_orderings() {
    let _g = serial();
    const N: usize = 50;
    const ALPHA: f64 = 0.01;

    let c = cohort();
    let mut rng = seed::rng(COHORT_SEED, "feature-sample");
    let mut by_class: BTreeMap<ImpairmentLevel, Vec<GaitFeatures>> = BTreeMap::new();
    for level in [ImpairmentLevel::Mild, ImpairmentLevel::Moderate, ImpairmentLevel::Severe] {
        let mut segs: Vec<&GaitSegment> = c.data.segments.iter().filter(|s| s.label == Some(level)).collect();
        segs.shuffle(&mut rng);
        let feats = segs.iter().take(N).map(|s| extract_features(s).unwrap()).collect();
        by_class.insert(level, feats);
    }
    let metric = |name: &str, f: &GaitFeatures| match name {
        "cv" => f.cv,
        "pressure_asym" => f.pressure_asym,
        _ => f.stance_asym,
    };
    let mut pass = by_class.values().all(|v| v.len() == N);
    let mut detail = Vec::new();
    for name in ["cv", "pressure_asym", "stance_asym"] {
        let vals = |l: ImpairmentLevel| by_class[&l].iter().map(|f| metric(name, f)).collect::<Vec<f64>>();
        let (mild, moderate, severe) = (vals(ImpairmentLevel::Mild), vals(ImpairmentLevel::Moderate), vals(ImpairmentLevel::Severe));
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let hi = mann_whitney_greater(&severe, &moderate).unwrap();
        let lo = mann_whitney_greater(&moderate, &mild).unwrap();
        let u_ok = (hi.u - pair_count_u(&severe, &moderate)).abs() < 1e-9 && (lo.u - pair_count_u(&moderate, &mild)).abs() < 1e-9;
        let ok = mean(&severe) > mean(&moderate) && mean(&moderate) > mean(&mild) && hi.p_greater < ALPHA && lo.p_greater < ALPHA && u_ok;
        pass &= ok;
        detail.push(format!(
            "{name} means {:.4} > {:.4} > {:.4} p(S>Mo) {:.2e} p(Mo>Mi) {:.2e}",
            mean(&severe),
            mean(&moderate),
            mean(&mild),
            hi.p_greater,
            lo.p_greater
        ));
    }
    verdict(3, "feature orderings", pass, &format!("n = {N}/class, p < {ALPHA}; {}", detail.join("; ")));
    assert!(pass);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum WalkKind {
    TwoStride,
    Assisted,
    SpeedChange,
}

fn walk_script(patient: &str, kind: WalkKind) -> ScenarioScript {
    let (duration_s, assisted, speed_profile) = match kind {
        // two strides at the slow cadence, plus a fraction of the next
        WalkKind::TwoStride => (5.5, false, SpeedProfile::Slow),
        WalkKind::Assisted => (20.0, true, SpeedProfile::Constant),
        WalkKind::SpeedChange => (20.0, false, SpeedProfile::Change),
    };
    ScenarioScript {
        seed: seed::derive(7, &format!("{patient}-{kind:?}")),
        patient: patient.to_string(),
        name: Some(format!("{kind:?}")),
        start_clock: "10:00".into(),
        baseline: Default::default(),
        objects: default_objects(),
        clocks: Vec::new(),
        events: vec![
            TimedEvent {
                t_s: 2.0,
                event: ScenarioEvent::StartWalk {
                    duration_s,
                    assisted,
                    speed_profile,
                },
            },
            TimedEvent {
                t_s: 2.0 + duration_s,
                event: ScenarioEvent::Sit,
            },
        ],
    }
}

#[test]
fn criterion_4_edge_case_filter() {
    let _g = serial();
    let mut verdicts: BTreeMap<WalkKind, Vec<FilterVerdict>> = BTreeMap::new();
    let mut flags_ok = true;
    let mut strides_ok = true;
    for profile in reference_cohort() {
        for kind in [WalkKind::TwoStride, WalkKind::Assisted, WalkKind::SpeedChange] {
            let mut subject = Subject::from_profile(profile.clone(), COHORT_SEED);
            if kind == WalkKind::TwoStride {
                // no timing jitter, so the walk holds exactly two strides per foot
                subject.gait.stride_cv_target = 0.0;
            }
            let tl = timeline_for(&walk_script(&profile.id, kind), &subject).unwrap();
            let (segs, _) = segment_walks(&tl, &detect_bouts(&tl), &profile.id, Some(profile.level()));
            for s in &segs {
                flags_ok &= s.flags.assisted == (kind == WalkKind::Assisted) && s.flags.speed_change == (kind == WalkKind::SpeedChange);
                if kind == WalkKind::TwoStride {
                    strides_ok &= count_strides(s) == (2, 2);
                }
                verdicts.entry(kind).or_default().push(edge_case_filter(s));
            }
        }
    }
    let rejections: BTreeSet<RejectReason> = verdicts
        .values()
        .flatten()
        .filter_map(|v| match v {
            FilterVerdict::Reject(r) => Some(*r),
            FilterVerdict::Accept => None,
        })
        .collect();
    let all = |k: WalkKind, v: FilterVerdict| verdicts.get(&k).is_some_and(|x| !x.is_empty() && x.iter().all(|&y| y == v));
    let n = |k: WalkKind| verdicts.get(&k).map_or(0, Vec::len);
    let pass = flags_ok
        && strides_ok
        && n(WalkKind::TwoStride) == reference_cohort().len()
        && all(WalkKind::TwoStride, FilterVerdict::Reject(RejectReason::ShortWalk))
        && all(WalkKind::Assisted, FilterVerdict::Reject(RejectReason::Assisted))
        && all(WalkKind::SpeedChange, FilterVerdict::Accept)
        && rejections == BTreeSet::from([RejectReason::ShortWalk, RejectReason::Assisted]);
    verdict(
        4,
        "edge-case filter",
        pass,
        &format!(
            "rejections {rejections:?} (exactly ShortWalk, Assisted); 2-stride segments {} (2 strides per foot: {strides_ok}) all ShortWalk; assisted {} all Assisted; \
             speed-change {} accepted {}/{} (zero tolerance)",
            n(WalkKind::TwoStride),
            n(WalkKind::Assisted),
            n(WalkKind::SpeedChange),
            verdicts.get(&WalkKind::SpeedChange).map_or(0, |v| v.iter().filter(|&&x| x == FilterVerdict::Accept).count()),
            n(WalkKind::SpeedChange)
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_5_miio_codec() {
    let _g = serial();
    const ROUND_TRIPS: usize = 10_000;
    const CORRUPTIONS: usize = 1_000;
    let mut rng = seed::rng(5, "miio-acceptance");
    let packet = |rng: &mut rand_chacha::ChaCha8Rng| {
        let token: Token = rng.gen();
        let body: Vec<u8> = (0..rng.gen_range(0..600)).map(|_| rng.gen()).collect();
        let (id, stamp) = (rng.gen::<u32>(), rng.gen::<u32>());
        (token, body.clone(), id, stamp, encode_packet(&token, id, stamp, &body).unwrap())
    };
    let mut round_ok = 0;
    for _ in 0..ROUND_TRIPS {
        let (token, body, id, stamp, bytes) = packet(&mut rng);
        if let Ok((h, back)) = decode_packet(&token, &bytes) {
            if back == body && h.device_id == id && h.stamp == stamp && h.length as usize == bytes.len() {
                round_ok += 1;
            }
        }
    }
    let reference = format!("21310020{}", "ff".repeat(28));
    let hello_ok = hex::encode(HELLO) == reference;
    let mut detected = 0;
    for _ in 0..CORRUPTIONS {
        let (token, _, _, _, mut bytes) = packet(&mut rng);
        let at = rng.gen_range(0..bytes.len());
        bytes[at] ^= rng.gen_range(1..=255u8);
        if decode_packet(&token, &bytes).is_err() {
            detected += 1;
        }
    }
    let pass = round_ok == ROUND_TRIPS && hello_ok && detected == CORRUPTIONS;
    verdict(
        5,
        "MiIO codec",
        pass,
        &format!("round trips {round_ok}/{ROUND_TRIPS}; hello matches {reference}: {hello_ok}; single-byte corruptions detected {detected}/{CORRUPTIONS}"),
    );
    assert!(pass);
}

#[test]
fn criterion_6_interaction_suite_over_udp() {
    let _g = serial();
    const MAX_RETRIES: u32 = 1;
    const MAX_MEAN_MS: f64 = 1000.0;
    let cfg = cfg();
    let rig = make_rig(&cfg, DeviceMode::Loopback).unwrap();
    let suite = InteractionSuite::bundled();
    let rep = run_suite(&suite, &rig, &load_grammar(&cfg).unwrap());
    let lat: Vec<f64> = rep.steps.iter().filter_map(|s| s.receipt.as_ref()).filter(|r| r.success).map(|r| r.latency_ms).collect();
    let mean = lat.iter().sum::<f64>() / lat.len().max(1) as f64;
    let ok = rep.steps.iter().filter(|s| s.receipt.as_ref().is_some_and(|r| r.success)).count();
    let retries = rep.steps.iter().filter_map(|s| s.receipt.as_ref()).map(|r| r.retries).max().unwrap_or(0);
    let stats = rep.latency.expect("latencies present");
    let pass = suite.steps.len() == 20 && ok == 20 && retries <= MAX_RETRIES && (stats.mean_ms - mean).abs() < 1e-9 && mean < MAX_MEAN_MS;
    verdict(
        6,
        "interaction suite over loopback UDP",
        pass,
        &format!(
            "success {ok}/20 (first try {:.2}); max retries {retries} (<= {MAX_RETRIES}); latency ms mean {:.3} (< {MAX_MEAN_MS}) \
             sd {:.3} p95 {:.3} max {:.3} n {}",
            rep.success.first_try, stats.mean_ms, stats.sd_ms, stats.p95_ms, stats.max_ms, stats.n
        ),
    );
    assert!(pass);
}

fn random_window(rng: &mut impl Rng) -> ContextWindow {
    let acts = [Activity::Walking, Activity::Sitting, Activity::Falling, Activity::Idle];
    let opt = |rng: &mut dyn rand::RngCore, lo: f64, hi: f64| Some(lo + (hi - lo) * rng.gen::<f64>()).filter(|_| rng.gen_bool(0.85));
    let minutes = (0..WINDOW_MINUTES)
        .map(|k| MinuteRecord {
            start_ts: k as i64 * MINUTE_MS,
            hr_mean: opt(rng, 40.0, 190.0),
            hrv_mean: opt(rng, 5.0, 120.0),
            temp_mean: opt(rng, 30.0, 38.0),
            light_mean: opt(rng, 0.0, 1000.0),
            activity: rng.gen_bool(0.8).then(|| acts[rng.gen_range(0..4)]),
        })
        .collect();
    ContextWindow {
        patient_ref: "P01".into(),
        now_ts: WINDOW_MINUTES as i64 * MINUTE_MS,
        minutes,
        clock_s: rng.gen_bool(0.9).then(|| 86_400.0 * rng.gen::<f64>()),
        missing: false,
    }
}

#[test]
fn criterion_7_safety_layer() {
    let _g = serial();
    const SCENARIOS: usize = 2000;
    let cfg = cfg();
    let reg = Registry::load(&cfg.registry).unwrap();
    let wl = Whitelist::for_registry(&reg);
    let corpus = load_corpus(&bundled_corpus_dir()).unwrap();
    let res = safety_corpus_eval(&corpus, &wl, &reg);

    let mut rng = seed::rng(7, "closure-acceptance");
    let mut passed = 0;
    for _ in 0..SCENARIOS {
        let ctx = random_window(&mut rng);
        let trig = [None, Some(FallStatus::Pending), Some(FallStatus::Responded), Some(FallStatus::Unresponsive)][rng.gen_range(0..4)]
            .map(|status| FallTrigger { ts: 0, status });
        let d = decide_rule_based(&ctx, trig.as_ref(), &RulePolicy::default());
        if validate(&d, &wl, &reg) == SafetyVerdict::Pass {
            passed += 1;
        }
    }
    let pass = res.total == 100 && res.detected == 7 && res.false_activations == 0 && passed == SCENARIOS;
    verdict(
        7,
        "safety layer",
        pass,
        &format!(
            "corpus {} items, detected {}/{} (= 7), false activations {} (= 0); rule closure {passed}/{SCENARIOS} Pass",
            res.total, res.detected, res.erroneous, res.false_activations
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_8_care_scenarios() {
    let _g = serial();
    const MAX_FALL_MS: f64 = 1000.0;
    let cfg = cfg();
    let path = |name: &str| cfg.scenarios.iter().find(|p| p.ends_with(format!("{name}.toml"))).unwrap().clone();
    let run = |p: &std::path::Path| run_one_scenario(&cfg, p, DeviceMode::Loopback).unwrap().1;

    let ex = run(&path("exertion"));
    let exertion_ok = ex.dispatched()
        == vec![(K::PauseTraining, None), (K::Reminder, Some(HYDRATION_TEXT.into())), (K::DeviceCommand, Some("ac".into()))]
        && ex.device_logs["ac"].iter().any(|c| c.method == "set_power" && c.params[0]["power"] == "on" && c.ok);

    let fall = run(&path("fall"));
    let kinds = |l: &homecare::runner::LoopLogs| l.dispatched().into_iter().map(|x| x.0).collect::<Vec<_>>();
    let fall_ok = kinds(&fall) == vec![K::Reminder, K::CaregiverAlert]
        && fall.notifications[0].text.as_deref() == Some(CHECK_IN_TEXT)
        && fall.outcome.falls.len() == 1
        && fall.outcome.falls[0].status == FallStatus::Unresponsive;

    let dir = tempfile::tempdir().unwrap();
    let mut answered = ScenarioScript::load(&path("fall")).unwrap();
    answered.events.push(TimedEvent {
        t_s: 100.0,
        event: ScenarioEvent::VoiceUtterance { text: "I'm fine".into() },
    });
    let ap = dir.path().join("fall_answered.toml");
    std::fs::write(&ap, answered.to_toml()).unwrap();
    let ans = run(&ap);
    let answered_ok = kinds(&ans) == vec![K::Reminder] && ans.outcome.falls[0].status == FallStatus::Responded;

    let ev = run(&path("evening_light"));
    let evening_ok = ev.dispatched() == vec![(K::DeviceCommand, Some("lamp".into()))];

    let latencies: Vec<f64> = fall.outcome.falls.iter().chain(&ans.outcome.falls).map(|f| f.trigger_to_dispatch_ms).collect();
    let worst = latencies.iter().copied().fold(0.0, f64::max);
    let pass = exertion_ok && fall_ok && answered_ok && evening_ok && !latencies.is_empty() && worst < MAX_FALL_MS;
    verdict(
        8,
        "care scenarios",
        pass,
        &format!(
            "exertion {exertion_ok}; fall unanswered check-in + alert {fall_ok}; fall answered check-in only {answered_ok}; \
             evening lamp {evening_ok}; fall trigger-to-dispatch max {worst:.3} ms (< {MAX_FALL_MS})"
        ),
    );
    assert!(pass);
}

/// Per-minute means recomputed directly from the records.
fn brute_means(records: &[homecare::gateway::TimelineRecord], now: i64) -> Vec<[Option<f64>; 4]> {
    let start = now - WINDOW_MINUTES as i64 * MINUTE_MS;
    (0..WINDOW_MINUTES as i64)
        .map(|k| {
            let (a, b) = (start + k * MINUTE_MS, start + (k + 1) * MINUTE_MS);
            let mut sums = [(0.0, 0usize); 4];
            for r in records.iter().filter(|r| r.ts_ms >= a && r.ts_ms < b && r.ts_ms < now) {
                let vals: Vec<(usize, f64)> = match &r.payload {
                    Payload::Physio(p) => vec![(0, p.heart_rate), (1, p.hrv), (2, p.skin_temp)],
                    Payload::Ambient(x) => vec![(3, x.light_level)],
                    _ => vec![],
                };
                for (i, v) in vals {
                    sums[i].0 += v;
                    sums[i].1 += 1;
                }
            }
            sums.map(|(s, n)| (n > 0).then(|| s / n as f64))
        })
        .collect()
}

#[test]
fn criterion_9_context_builder() {
    let _g = serial();
    const TOL: f64 = 1e-9;
    let cfg = cfg();
    let mut rng = seed::rng(9, "context-acceptance");
    let (mut windows, mut worst, mut shape_ok, mut presence_ok) = (0, 0.0f64, true, true);
    for path in &cfg.scenarios {
        let (_, tl) = scenario_timeline(&cfg, path).unwrap();
        let recs = tl.records();
        let end = recs.last().unwrap().ts_ms;
        let mut times: Vec<i64> = (0..=end / MINUTE_MS + 1).map(|m| m * MINUTE_MS).collect();
        times.extend((0..100).map(|_| rng.gen_range(0..end + MINUTE_MS)));
        for now in times {
            let ctx = build_context(recs, now, "P");
            shape_ok &= ctx.minutes.len() == WINDOW_MINUTES;
            for (m, b) in ctx.minutes.iter().zip(brute_means(recs, now)) {
                for (got, want) in [m.hr_mean, m.hrv_mean, m.temp_mean, m.light_mean].into_iter().zip(b) {
                    match (got, want) {
                        (Some(g), Some(w)) => worst = worst.max((g - w).abs()),
                        (None, None) => {}
                        _ => presence_ok = false,
                    }
                }
            }
            windows += 1;
        }
    }
    let pass = shape_ok && presence_ok && worst < TOL;
    verdict(
        9,
        "context builder",
        pass,
        &format!("{windows} windows, all {WINDOW_MINUTES} entries: {shape_ok}; missing bins agree: {presence_ok}; max |mean - brute force| {worst:.2e} (< {TOL:e})"),
    );
    assert!(pass);
}

#[test]
fn criterion_10_determinism() {
    let _g = serial();
    let base = cfg();
    let text = format!(
        "seed = 11\nregistry = {:?}\nscenarios = [{}]\n\n[cohort]\nwalks_per_patient = 1\nwalk_s = 25.0\nrest_s = 5.0\npatients = [\"P01\", \"P08\", \"P15\"]\n\n\
         [model]\nmap_height = 16\nmap_width = 16\nconv_channels = [4, 4, 4]\nfeature_dim = 8\nhidden = [16]\nbatch_size = 4\nmax_epochs = 4\n",
        base.registry,
        base.scenarios.iter().map(|p| format!("{p:?}")).collect::<Vec<_>>().join(", ")
    );
    let cfg = RunConfig::parse(&text, std::path::Path::new(".")).unwrap();
    let digests: Vec<BTreeMap<String, String>> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().unwrap();
            cmd_simulate(&cfg, dir.path()).unwrap();
            cmd_train(&cfg, dir.path(), None).unwrap();
            digest_tree(dir.path()).unwrap()
        })
        .collect();
    let required = ["simulate/dataset.bin", "simulate/features.csv", "train/checkpoint.bin", "train/history.csv"];
    let covered = required.iter().all(|k| digests[0].contains_key(*k));
    let differing: Vec<&String> = digests[0].keys().filter(|k| digests[1].get(*k) != digests[0].get(*k)).collect();
    let pass = covered && digests[0] == digests[1];
    verdict(
        10,
        "determinism",
        pass,
        &format!("{} artifacts compared (timing files excluded); required present {covered}; differing {differing:?}", digests[0].len()),
    );
    assert!(pass);
}

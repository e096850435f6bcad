use std::path::{Path, PathBuf};

use quintsynth_core::adapter::{AdapterStatus, MockBuildCheck};
use quintsynth_core::iospec::{self, ExampleRole};
use quintsynth_core::llm::read_transcript;
use quintsynth_core::pipeline::*;

const LOCKUP: &str = "fixtures/mini_lockup";

fn tempdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("quintsynth-pipeline-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn replay_config(out: &Path) -> RunConfig {
    let mut cfg = RunConfig::new(LOCKUP, out);
    cfg.backend = BackendSpec::Replay { transcript: Path::new(LOCKUP).join("transcripts.jsonl") };
    cfg
}

fn replies() -> Vec<String> {
    serde_json::from_str(&std::fs::read_to_string(Path::new(LOCKUP).join("replies.json")).unwrap()).unwrap()
}

fn scripted(dir: &Path, replies: &[String]) -> BackendSpec {
    let path = dir.join("replies.json");
    std::fs::write(&path, serde_json::to_string(replies).unwrap()).unwrap();
    BackendSpec::Scripted { replies: path }
}

#[test]
fn generate_from_transcript() {
    let dir = tempdir("gen");
    let s = cmd_generate(&replay_config(&dir)).unwrap();
    assert!(s.all_succeeded());
    assert!(s.skipped.is_empty());
    let names: Vec<&str> = s.outcomes.iter().map(|o| o.stub_name.as_str()).collect();
    assert_eq!(names, ["instantiate", "deposit", "withdraw"]);
    let withdraw = &s.outcomes[2];
    assert_eq!(withdraw.rounds_used.static_rounds, 1);
    assert_eq!(withdraw.llm_calls, 2);
    assert_eq!(s.holdout.len(), 9);
    assert!(s.holdout.iter().all(|h| h.passed), "{:?}", s.holdout);
    let model = std::fs::read_to_string(dir.join(MODEL_OUT)).unwrap();
    assert!(model.contains("mapRemove(id)"));
    assert!(!model.contains("\"<missing-body>\""));
    // replayed exchanges are recorded again, one line each
    assert_eq!(read_transcript(&dir.join(TRANSCRIPT_OUT)).unwrap().len(), 4);
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn generate_is_reproducible() {
    let a = tempdir("det-a");
    let b = tempdir("det-b");
    let sa = cmd_generate(&replay_config(&a)).unwrap();
    let mut cfg = replay_config(&b);
    cfg.parallel = false;
    let sb = cmd_generate(&cfg).unwrap();
    assert_eq!(sa, sb);
    for f in [MODEL_OUT, OUTCOMES_OUT] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    std::fs::remove_dir_all(a).unwrap();
    std::fs::remove_dir_all(b).unwrap();
}

#[test]
fn replay_misses_on_a_different_seed() {
    let dir = tempdir("seed");
    let mut cfg = replay_config(&dir);
    cfg.seed = 43;
    let s = cmd_generate(&cfg).unwrap();
    assert!(!s.all_succeeded());
    for o in &s.outcomes {
        assert!(matches!(&o.residual, quintsynth_core::repair::Residual::Gateway(m) if m.contains("no recorded response")));
    }
    // failed stubs keep their placeholder body
    let model = std::fs::read_to_string(dir.join(MODEL_OUT)).unwrap();
    assert!(model.contains("keeps its stub body"));
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn holdout_examples_never_reach_the_llm() {
    let dir = tempdir("hygiene");
    cmd_generate(&replay_config(&dir)).unwrap();
    // few-shot demonstrations come from another contract; only the task's own message counts
    let sent: String = read_transcript(&dir.join(TRANSCRIPT_OUT))
        .unwrap()
        .iter()
        .map(|e| e.request.messages.last().unwrap().content.clone())
        .collect::<Vec<_>>()
        .join("\n");
    let all = iospec::load_io_spec(&Path::new(LOCKUP).join("io.json")).unwrap();
    let policy = HoldoutPolicy::default();
    for f in ["instantiate", "deposit", "withdraw"] {
        let (generation, held) = policy.split(&all, f);
        assert_eq!(generation.len(), 2);
        for h in held {
            assert_eq!(h.role, ExampleRole::Holdout);
            assert!(!sent.contains(&h.call_text()), "{} was sent", h.label);
            assert!(!sent.contains(&format!("{}\n", h.label)) && !sent.contains(&format!("{}:", h.label)), "{}", h.label);
            if all.iter().filter(|e| e.expected == h.expected).all(|e| held_label(&policy, &all, &e.label)) {
                assert!(!sent.contains(&h.expected), "expected value of {} was sent", h.label);
            }
        }
    }
    std::fs::remove_dir_all(dir).unwrap();
}

fn held_label(policy: &HoldoutPolicy, all: &[iospec::IoExample], label: &str) -> bool {
    let f = &all.iter().find(|e| e.label == label).unwrap().function;
    policy.split(all, f).1.iter().any(|e| e.label == label)
}

#[test]
fn holdout_policies() {
    let all = iospec::load_io_spec(&Path::new(LOCKUP).join("io.json")).unwrap();
    let (g, h) = HoldoutPolicy::First { generation: 1 }.split(&all, "deposit");
    assert_eq!((g.len(), h.len()), (1, 4));
    assert_eq!(g[0].label, "locks_funds");
    let (g, h) = HoldoutPolicy::First { generation: 9 }.split(&all, "deposit");
    assert_eq!((g.len(), h.len()), (5, 0));
    assert!(g.iter().all(|e| e.role == ExampleRole::Generation));
    let (g, h) = HoldoutPolicy::Roles.split(&all, "withdraw");
    assert_eq!((g.len(), h.len()), (2, 3));
    assert!(HoldoutPolicy::Roles.split(&all, "nope").0.is_empty());
}

#[test]
fn stubs_without_examples_are_skipped() {
    let dir = tempdir("skip");
    let all = iospec::load_io_spec(&Path::new(LOCKUP).join("io.json")).unwrap();
    let io = dir.join("io.json");
    let kept: Vec<_> = all.into_iter().filter(|e| e.function != "withdraw").collect();
    std::fs::write(&io, serde_json::to_string(&kept).unwrap()).unwrap();
    let r = replies();
    let mut cfg = RunConfig::new(LOCKUP, dir.join("out"));
    cfg.io_spec = Some(io);
    cfg.backend = scripted(&dir, &r[..2]);
    let s = cmd_generate(&cfg).unwrap();
    assert_eq!(s.skipped, ["withdraw"]);
    assert_eq!(s.outcomes.len(), 2);
    assert!(s.all_succeeded());
    let model = std::fs::read_to_string(dir.join("out").join(MODEL_OUT)).unwrap();
    assert!(model.contains("pure def withdraw"));
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn ablation_drops_descriptions() {
    let dir = tempdir("ablation");
    let mut with = RunConfig::new(LOCKUP, dir.join("with"));
    with.backend = scripted(&dir, &replies());
    let mut without = with.clone();
    without.out = dir.join("without");
    without.ablation = true;
    cmd_generate(&with).unwrap();
    cmd_generate(&without).unwrap();
    let first_user = |out: &Path| {
        let t = read_transcript(&out.join(TRANSCRIPT_OUT)).unwrap();
        t[0].request.messages.last().unwrap().content.clone()
    };
    let a = first_user(&with.out);
    let b = first_user(&without.out);
    let meta: toml::Value = toml::from_str(&std::fs::read_to_string(Path::new(LOCKUP).join("contract.toml")).unwrap()).unwrap();
    let description = meta["descriptions"]["instantiate"].as_str().unwrap();
    assert!(a.contains(description));
    assert!(!b.contains(description));
    assert_eq!(a.replacen(description, "", 1), b);
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn bench_with_correct_replies() {
    let dir = tempdir("bench");
    let r = replies();
    let once = [r[0].clone(), r[1].clone(), r[3].clone()];
    let mut cfg = RunConfig::new(LOCKUP, dir.join("out"));
    cfg.runs = 3;
    cfg.seed = 10;
    cfg.backend = scripted(&dir, &once.iter().cycle().take(9).cloned().collect::<Vec<_>>());
    let report = cmd_bench(&cfg).unwrap();
    assert_eq!(report.runs, 3);
    assert_eq!(report.provenance.seeds, [10, 11, 12]);
    assert_eq!(report.categories.total, 0);
    for f in &report.functions {
        assert_eq!((f.successes, f.runs), (3, 3));
        assert_eq!(f.avg_repair, 0.0);
        assert_eq!(f.pass_rate, Some(1.0));
        assert_eq!(f.holdout_total, 9);
    }
    for i in 0..3 {
        assert!(dir.join("out").join(format!("run-{i}")).join(MODEL_OUT).exists());
        assert!(dir.join("out").join(format!("run-{i}")).join(OUTCOMES_OUT).exists());
    }
    let text = std::fs::read_to_string(dir.join("out").join(REPORT_TEXT)).unwrap();
    assert!(text.contains("100%"));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("out").join(REPORT_JSON)).unwrap()).unwrap();
    assert_eq!(json["runs"], 3);
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn zero_runs_rejected() {
    let mut cfg = RunConfig::new(LOCKUP, "unused");
    cfg.runs = 0;
    assert!(matches!(cmd_bench(&cfg), Err(PipelineError::Config(_))));
}

#[test]
fn generate_needs_a_backend() {
    let dir = tempdir("nobackend");
    assert!(matches!(cmd_generate(&RunConfig::new(LOCKUP, &dir)), Err(PipelineError::Config(_))));
    std::fs::remove_dir_all(dir).unwrap();
}

const COMPARE: &str = "```rust\nfn compare_state(test_state: &TestState, app: &App, state: &State) {\n    let _ = (test_state, app, state);\n}\n```";

#[test]
fn adapter_repaired_once() {
    let dir = tempdir("adapter");
    let mut cfg = RunConfig::new(LOCKUP, dir.join("out"));
    cfg.backend = scripted(&dir, &[COMPARE.to_string(), COMPARE.replace("let _", "let _unused")]);
    let check = MockBuildCheck::new(vec![vec!["error[E0425]: cannot find value `x`".into()]]);
    let (doc, o) = cmd_adapter(&cfg, &check, 3).unwrap();
    assert_eq!(o.status, AdapterStatus::Success);
    assert_eq!((o.static_rounds, o.llm_calls), (1, 2));
    assert!(doc.compare_state().contains("let _unused"));
    let written = std::fs::read_to_string(dir.join("out").join(ADAPTER_OUT)).unwrap();
    assert_eq!(written, doc.test_source);
    let t = read_transcript(&dir.join("out").join(TRANSCRIPT_OUT)).unwrap();
    assert!(t[1].request.messages[1].content.contains("cannot find value `x`"));
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn adapter_budget_runs_out() {
    let dir = tempdir("adapter-fail");
    let mut cfg = RunConfig::new(LOCKUP, dir.join("out"));
    cfg.backend = scripted(&dir, &vec![COMPARE.to_string(); 5]);
    let check = MockBuildCheck::new(vec![vec!["error: a".into()]; 5]);
    let (_, o) = cmd_adapter(&cfg, &check, 2).unwrap();
    assert_eq!(o.status, AdapterStatus::Failed);
    assert_eq!((o.static_rounds, o.llm_calls), (2, 3));
    assert_eq!(o.residual, ["error: a"]);
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn adapter_without_backend_keeps_the_stub() {
    let dir = tempdir("adapter-stub");
    let (doc, o) = cmd_adapter(&RunConfig::new(LOCKUP, &dir), &MockBuildCheck::passing(), 3).unwrap();
    assert_eq!(o.status, AdapterStatus::StubOnly);
    assert_eq!(o.llm_calls, 0);
    let stub = cmd_stub(Path::new(LOCKUP), &dir.join("stub")).unwrap();
    assert_eq!(std::fs::read_to_string(stub.adapter).unwrap(), doc.test_source);
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn stub_command_is_idempotent() {
    let dir = tempdir("stub");
    let a = cmd_stub(Path::new(LOCKUP), &dir.join("a")).unwrap();
    let b = cmd_stub(Path::new(LOCKUP), &dir.join("b")).unwrap();
    for (x, y) in [(&a.model, &b.model), (&a.adapter, &b.adapter)] {
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
    }
    assert_eq!(a.model.file_name().unwrap(), MODEL_OUT);
    assert_eq!(a.adapter.file_name().unwrap(), ADAPTER_OUT);
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn simulate_and_replay_files() {
    let dir = tempdir("sim");
    cmd_generate(&replay_config(&dir)).unwrap();
    let model = dir.join(MODEL_OUT);
    let trace = cmd_simulate(&model, 20, 42, &dir).unwrap();
    assert_eq!(trace, dir.join(TRACES_DIR).join("trace-42.json"));
    let r = cmd_replay(&model, &trace).unwrap();
    assert_eq!(r.outcome, Ok(()));
    assert_eq!(r.steps, 21);
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn missing_project() {
    let dir = tempdir("missing");
    assert!(cmd_stub(&dir.join("nope"), &dir).is_err());
    std::fs::remove_dir_all(dir).unwrap();
}

use std::path::Path;

use quintsynth_core::frontend::*;
use quintsynth_core::llm::extract_code;
use quintsynth_core::repair::replace_def;
use quintsynth_core::stubber::*;
use quintsynth_core::trace::*;
use quintsynth_kernel::Program;
use serde_json::Value as Json;

/// The mini_lockup model with the scripted bodies filled in.
fn lockup_text() -> String {
    let dir = Path::new("fixtures/mini_lockup");
    let (name, units) = load_project(dir).unwrap();
    let ir = parse_project(units).unwrap();
    let mut model = emit_model(&ir, &name, &StubConfig::default()).unwrap();
    let replies: Vec<String> = serde_json::from_str(&std::fs::read_to_string(dir.join("replies.json")).unwrap()).unwrap();
    for (stub, i) in [("instantiate", 0), ("deposit", 1), ("withdraw", 3)] {
        model = replace_def(&model, stub, &extract_code(&replies[i]).unwrap()).unwrap().model;
    }
    model.render()
}

fn program() -> Program {
    Program::parse("model.qnt", &lockup_text()).unwrap()
}

fn replay_default(p: &Program, t: &Trace) -> ReplayReport {
    let c = StubConfig::default();
    replay(p, t, &c.contract_address, &c.denoms[0])
}

#[test]
fn simulate_then_replay() {
    let p = program();
    let t = simulate(&p, 20, 42).unwrap();
    assert_eq!(t.states.len(), 21);
    assert_eq!(t.states[0].action_taken, INIT_ACTION);
    let json = to_itf(&t, "model.qnt");
    let back = parse_itf(&p, &json).unwrap();
    assert_eq!(back, t);
    let r = replay_default(&p, &back);
    assert_eq!(r.outcome, Ok(()));
    assert_eq!(r.steps, 21);
}

#[test]
fn itf_layout() {
    let p = program();
    let json = to_itf(&simulate(&p, 3, 7).unwrap(), "m.qnt");
    assert_eq!(json["#meta"]["format"], "ITF");
    assert_eq!(json["#meta"]["seed"], 7);
    let vars: Vec<&str> = json["vars"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert_eq!(vars, ["contract_state", "bank", "time", "result", "action_taken", "nondet_picks"]);
    for (i, s) in json["states"].as_array().unwrap().iter().enumerate() {
        assert_eq!(s["#meta"]["index"], i);
        for v in &vars {
            assert!(s.get(*v).is_some(), "state {i} lacks {v}");
        }
        for pick in s["nondet_picks"].as_object().unwrap().values() {
            let tag = pick["tag"].as_str().unwrap();
            assert!(tag == "Some" || tag == "None");
        }
    }
    // every declared binding shows up in every state
    let names: Vec<String> = nondet_bindings(&p).into_keys().collect();
    let first: Vec<String> = json["states"][0]["nondet_picks"].as_object().unwrap().keys().cloned().collect();
    assert_eq!(first, names);
}

#[test]
fn simulation_is_seeded() {
    let p = program();
    assert_eq!(simulate(&p, 15, 3).unwrap(), simulate(&p, 15, 3).unwrap());
    let differs = (4..10).any(|s| simulate(&p, 15, s).unwrap() != simulate(&p, 15, 3).unwrap());
    assert!(differs);
}

fn bump_first_bigint(j: &mut Json) -> bool {
    match j {
        Json::Object(m) => {
            if let Some(Json::String(s)) = m.get_mut("#bigint") {
                let n: i128 = s.parse().unwrap();
                *s = (n + 1).to_string();
                return true;
            }
            m.values_mut().any(bump_first_bigint)
        }
        Json::Array(a) => a.iter_mut().any(bump_first_bigint),
        _ => false,
    }
}

#[test]
fn tampered_bank_is_caught_where_it_was_changed() {
    let p = program();
    let t = simulate(&p, 20, 42).unwrap();
    for step in [0, 1, 7, 20] {
        let mut json = to_itf(&t, "model.qnt");
        assert!(bump_first_bigint(&mut json["states"][step]["bank"]));
        let tampered = parse_itf(&p, &json).unwrap();
        let r = replay_default(&p, &tampered);
        match r.outcome {
            Err(TraceError::DivergenceAt { step: at, detail }) => {
                assert_eq!(at, step);
                assert!(detail.starts_with("bank"), "{detail}");
            }
            o => panic!("step {step}: {o:?}"),
        }
        assert_eq!(r.steps, step);
    }
}

#[test]
fn empty_trace_is_consistent() {
    let p = program();
    let json = serde_json::json!({ "vars": [], "states": [] });
    let t = parse_itf(&p, &json).unwrap();
    assert!(t.states.is_empty());
    let r = replay_default(&p, &t);
    assert_eq!(r.outcome, Ok(()));
    assert_eq!(r.steps, 0);
}

#[test]
fn trace_must_start_with_init() {
    let p = program();
    let mut t = simulate(&p, 2, 1).unwrap();
    t.states[0].action_taken = "step".into();
    assert!(matches!(replay_default(&p, &t).outcome, Err(TraceError::DivergenceAt { step: 0, .. })));
}

#[test]
fn schema_errors() {
    let p = program();
    assert!(matches!(parse_itf(&p, &serde_json::json!({})), Err(TraceError::Schema(_))));
    let mut json = to_itf(&simulate(&p, 1, 1).unwrap(), "m");
    json["states"][1].as_object_mut().unwrap().remove("time");
    match parse_itf(&p, &json) {
        Err(TraceError::Schema(m)) => assert!(m.contains("state 1 lacks time"), "{m}"),
        r => panic!("{r:?}"),
    }
    let mut json = to_itf(&simulate(&p, 1, 1).unwrap(), "m");
    let picks = json["states"][0]["nondet_picks"].as_object_mut().unwrap();
    let key = picks.keys().next().unwrap().clone();
    picks.insert(key, serde_json::json!({ "tag": "Maybe" }));
    assert!(matches!(parse_itf(&p, &json), Err(TraceError::Schema(_))));
}

#[test]
fn replay_log_shows_balances() {
    let p = program();
    let r = replay_default(&p, &simulate(&p, 2, 5).unwrap());
    let c = StubConfig::default();
    assert_eq!(r.log[0], "Step number: Some(0)");
    let prefix = format!("Contract balance ({}) for {}: ", c.contract_address, c.denoms[0]);
    assert_eq!(r.log.iter().filter(|l| l.starts_with(&prefix)).count(), 3);
}

#[test]
fn stub_model_still_simulates() {
    let dir = Path::new("fixtures/mini_lockup");
    let (name, units) = load_project(dir).unwrap();
    let model = emit_model(&parse_project(units).unwrap(), &name, &StubConfig::default()).unwrap();
    let p = Program::parse("model.qnt", &model.render()).unwrap();
    let t = simulate(&p, 5, 0).unwrap();
    assert_eq!(replay_default(&p, &t).outcome, Ok(()));
}

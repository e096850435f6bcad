//! Bounded random simulation of a generated model, ITF trace files, and
//! replaying a trace step by step against the model.

use std::collections::BTreeMap;

use quintsynth_kernel::syntax::ast::{Decl, Expr, ExprKind, LetKind, TypeExpr};
use quintsynth_kernel::types::{Ty, TypeEnv};
use quintsynth_kernel::value::values_equal;
use quintsynth_kernel::{Chooser, Evaluator, Program, Value};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map as JsonMap, Value as Json};

use crate::stubber::TRACE_SCHEMA_VERSION;

pub const STATE_VARS: &[&str] = &["contract_state", "bank", "time", "result"];
pub const ACTION_TAKEN: &str = "action_taken";
pub const NONDET_PICKS: &str = "nondet_picks";
pub const INIT_ACTION: &str = "init";
pub const STEP_ACTION: &str = "step";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TraceError {
    #[error("trace schema: {0}")]
    Schema(String),
    #[error("divergence at step {step}: {detail}")]
    DivergenceAt { step: usize, detail: String },
    #[error("step {step}: {message}")]
    Eval { step: usize, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceState {
    pub vars: BTreeMap<String, Value>,
    pub action_taken: String,
    /// Every nondeterministic binding of the model; `None` when not picked.
    pub picks: BTreeMap<String, Option<Value>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub seed: u64,
    pub states: Vec<TraceState>,
}

fn collect_nondets(e: &Expr, out: &mut BTreeMap<String, Option<TypeExpr>>) {
    match &e.kind {
        ExprKind::Let { kind, name, ty, value, body, .. } => {
            if *kind == LetKind::Nondet {
                out.entry(name.clone()).or_insert_with(|| ty.clone());
            }
            collect_nondets(value, out);
            collect_nondets(body, out);
        }
        ExprKind::App { args, .. } => args.iter().for_each(|a| collect_nondets(a, out)),
        ExprKind::Lambda { body, .. } => collect_nondets(body, out),
        ExprKind::If { cond, then, els } => {
            collect_nondets(cond, out);
            collect_nondets(then, out);
            collect_nondets(els, out);
        }
        ExprKind::Match { scrutinee, arms } => {
            collect_nondets(scrutinee, out);
            arms.iter().for_each(|a| collect_nondets(&a.body, out));
        }
        ExprKind::Record(fs) => fs.iter().for_each(|(_, v)| collect_nondets(v, out)),
        ExprKind::RecordUpdate { base, fields } => {
            collect_nondets(base, out);
            fields.iter().for_each(|(_, v)| collect_nondets(v, out));
        }
        ExprKind::Tuple(items) | ExprKind::List(items) | ExprKind::Block { items, .. } => {
            items.iter().for_each(|a| collect_nondets(a, out))
        }
        ExprKind::Field { base, .. } | ExprKind::Neg(base) => collect_nondets(base, out),
        ExprKind::Index { base, index } => {
            collect_nondets(base, out);
            collect_nondets(index, out);
        }
        ExprKind::Binary { lhs, rhs, .. } => {
            collect_nondets(lhs, out);
            collect_nondets(rhs, out);
        }
        ExprKind::Assign { value, .. } => collect_nondets(value, out),
        ExprKind::Int(_) | ExprKind::Bool(_) | ExprKind::Str(_) | ExprKind::Name(_) => {}
    }
}

/// Nondeterministic bindings declared in the model's definitions, with their
/// annotated types.
pub fn nondet_bindings(program: &Program) -> BTreeMap<String, Option<TypeExpr>> {
    let mut out = BTreeMap::new();
    for d in &program.main.decls {
        if let Decl::Op(op) = d {
            collect_nondets(&op.body, &mut out);
        }
    }
    out
}

fn var_types(program: &Program) -> Result<BTreeMap<String, Ty>, TraceError> {
    let env = TypeEnv::from_program(program);
    let mut out = BTreeMap::new();
    for d in &program.main.decls {
        if let Decl::Var(v) = d {
            let ty = env.resolve(&v.ty).map_err(TraceError::Schema)?;
            out.insert(v.name.clone(), ty);
        }
    }
    for v in STATE_VARS {
        if !out.contains_key(*v) {
            return Err(TraceError::Schema(format!("model has no state variable {v}")));
        }
    }
    Ok(out)
}

/// Seeded uniform choices and branch orders.
pub struct RandomChooser {
    rng: ChaCha8Rng,
}

impl RandomChooser {
    pub fn new(seed: u64) -> RandomChooser {
        RandomChooser { rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl Chooser for RandomChooser {
    fn choose(&mut self, _name: &str, options: &[Value]) -> Option<usize> {
        (!options.is_empty()).then(|| self.rng.gen_range(0..options.len()))
    }

    fn order(&mut self, labels: &[Option<String>], _depth: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..labels.len()).collect();
        idx.shuffle(&mut self.rng);
        idx
    }
}

/// Follows recorded picks and the recorded outermost branch.
struct ForcedChooser<'a> {
    action: &'a str,
    picks: &'a BTreeMap<String, Option<Value>>,
}

impl Chooser for ForcedChooser<'_> {
    fn choose(&mut self, name: &str, options: &[Value]) -> Option<usize> {
        let want = self.picks.get(name)?.as_ref()?;
        options.iter().position(|o| values_equal(o, want))
    }

    fn order(&mut self, labels: &[Option<String>], depth: usize) -> Vec<usize> {
        if depth == 0 {
            labels
                .iter()
                .position(|l| l.as_deref() == Some(self.action))
                .into_iter()
                .collect()
        } else {
            (0..labels.len()).collect()
        }
    }
}

fn to_state(
    vars: BTreeMap<String, Value>,
    action: String,
    picked: BTreeMap<String, Value>,
    names: &BTreeMap<String, Option<TypeExpr>>,
) -> TraceState {
    let mut picks: BTreeMap<String, Option<Value>> = names.keys().map(|n| (n.clone(), None)).collect();
    for (k, v) in picked {
        picks.insert(k, Some(v));
    }
    let vars = vars.into_iter().filter(|(k, _)| STATE_VARS.contains(&k.as_str())).collect();
    TraceState { vars, action_taken: action, picks }
}

/// Attempts per step before a state counts as a deadlock. Each attempt draws
/// fresh picks.
pub const STEP_ATTEMPTS: usize = 100;

/// Runs `init` and up to `steps` applications of `step`. Stops early when no
/// attempt finds an enabled step.
pub fn simulate(program: &Program, steps: usize, seed: u64) -> Result<Trace, TraceError> {
    var_types(program)?;
    let names = nondet_bindings(program);
    let ev = Evaluator::new(program);
    let mut chooser = RandomChooser::new(seed);
    let eval_err = |step: usize, d: quintsynth_kernel::Diagnostic| TraceError::Eval { step, message: d.to_string() };
    let init = ev
        .run_action(INIT_ACTION, &[], &BTreeMap::new(), &mut chooser)
        .map_err(|d| eval_err(0, d))?
        .ok_or_else(|| TraceError::Eval { step: 0, message: "init is disabled".into() })?;
    let mut states = vec![to_state(init.next, INIT_ACTION.into(), init.picks, &names)];
    for i in 1..=steps {
        let current = &states.last().expect("init state").vars;
        let mut taken = None;
        for _ in 0..STEP_ATTEMPTS {
            taken = ev.run_action(STEP_ACTION, &[], current, &mut chooser).map_err(|d| eval_err(i, d))?;
            if taken.is_some() {
                break;
            }
        }
        let Some(t) = taken else {
            break;
        };
        let action = t.taken.first().cloned().unwrap_or_else(|| STEP_ACTION.into());
        states.push(to_state(t.next, action, t.picks, &names));
    }
    Ok(Trace { seed, states })
}

fn option_itf(v: &Option<Value>) -> Json {
    match v {
        Some(v) => json!({ "tag": "Some", "value": v.to_itf() }),
        None => json!({ "tag": "None", "value": { "#tup": [] } }),
    }
}

pub fn to_itf(trace: &Trace, source: &str) -> Json {
    let mut vars: Vec<&str> = STATE_VARS.to_vec();
    vars.extend([ACTION_TAKEN, NONDET_PICKS]);
    let states: Vec<Json> = trace
        .states
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut m = JsonMap::new();
            m.insert("#meta".into(), json!({ "index": i }));
            for (k, v) in &s.vars {
                m.insert(k.clone(), v.to_itf());
            }
            m.insert(ACTION_TAKEN.into(), Json::String(s.action_taken.clone()));
            let picks: JsonMap<String, Json> = s.picks.iter().map(|(k, v)| (k.clone(), option_itf(v))).collect();
            m.insert(NONDET_PICKS.into(), Json::Object(picks));
            Json::Object(m)
        })
        .collect();
    json!({
        "#meta": {
            "format": "ITF",
            "source": source,
            "trace_schema_version": TRACE_SCHEMA_VERSION,
            "seed": trace.seed,
        },
        "vars": vars,
        "states": states,
    })
}

fn decode_option(j: &Json, ty: Option<&Ty>) -> Result<Option<Value>, String> {
    let tag = j.get("tag").and_then(Json::as_str).ok_or("pick is not an Option variant")?;
    match tag {
        "None" => Ok(None),
        "Some" => {
            let inner = j.get("value").ok_or("Some without value")?;
            let v = match ty {
                Some(ty) => Value::from_itf(inner, ty, &TypeEnv::default())
                    .or_else(|_| Value::from_itf_untyped(inner))?,
                None => Value::from_itf_untyped(inner)?,
            };
            Ok(Some(v))
        }
        other => Err(format!("unknown Option tag {other}")),
    }
}

/// Decodes and validates an ITF trace against the model's state variables.
pub fn parse_itf(program: &Program, j: &Json) -> Result<Trace, TraceError> {
    let schema = |m: String| TraceError::Schema(m);
    let types = var_types(program)?;
    let env = TypeEnv::from_program(program);
    let names = nondet_bindings(program);
    let pick_types: BTreeMap<String, Ty> = names
        .iter()
        .filter_map(|(n, t)| t.as_ref().and_then(|t| env.resolve(t).ok()).map(|ty| (n.clone(), ty)))
        .collect();
    let seed = j.pointer("/#meta/seed").and_then(Json::as_u64).unwrap_or(0);
    let states = j
        .get("states")
        .and_then(Json::as_array)
        .ok_or_else(|| schema("missing states array".into()))?;
    let mut out = Vec::new();
    for (i, s) in states.iter().enumerate() {
        let obj = s.as_object().ok_or_else(|| schema(format!("state {i} is not an object")))?;
        let mut vars = BTreeMap::new();
        for v in STATE_VARS {
            let raw = obj.get(*v).ok_or_else(|| schema(format!("state {i} lacks {v}")))?;
            let value = Value::from_itf(raw, &types[*v], &env).map_err(|e| schema(format!("state {i}, {v}: {e}")))?;
            vars.insert(v.to_string(), value);
        }
        let action_taken = obj
            .get(ACTION_TAKEN)
            .and_then(Json::as_str)
            .ok_or_else(|| schema(format!("state {i} lacks {ACTION_TAKEN}")))?
            .to_string();
        let raw_picks = obj
            .get(NONDET_PICKS)
            .and_then(Json::as_object)
            .ok_or_else(|| schema(format!("state {i} lacks {NONDET_PICKS}")))?;
        let mut picks = BTreeMap::new();
        for (k, v) in raw_picks {
            let p = decode_option(v, pick_types.get(k)).map_err(|e| schema(format!("state {i}, pick {k}: {e}")))?;
            picks.insert(k.clone(), p);
        }
        out.push(TraceState { vars, action_taken, picks });
    }
    Ok(Trace { seed, states: out })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayReport {
    pub log: Vec<String>,
    pub steps: usize,
    pub outcome: Result<(), TraceError>,
}

const RULE: &str = "-----------------------------------";

fn balance(bank: &Value, addr: &str, denom: &str) -> String {
    let Value::Map(m) = bank else {
        return "?".into();
    };
    let inner = m.iter().find(|(k, _)| matches!(k, Value::Str(s) if s == addr)).map(|(_, v)| v);
    match inner {
        Some(Value::Map(d)) => d
            .iter()
            .find(|(k, _)| matches!(k, Value::Str(s) if s == denom))
            .map(|(_, v)| v.to_string())
            .unwrap_or_else(|| "0".into()),
        _ => "0".into(),
    }
}

/// Re-executes every step from the previous recorded state with the recorded
/// picks and compares the resulting state with the next recorded one.
pub fn replay(program: &Program, trace: &Trace, contract_address: &str, denom: &str) -> ReplayReport {
    let ev = Evaluator::new(program);
    let mut log = Vec::new();
    let empty = BTreeMap::new();
    for (i, s) in trace.states.iter().enumerate() {
        log.push(format!("Step number: Some({i})"));
        log.push(format!("Result from trace: {}", s.vars.get("result").map(|v| v.to_string()).unwrap_or_default()));
        let action = if i == 0 { INIT_ACTION } else { STEP_ACTION };
        if i == 0 && s.action_taken != INIT_ACTION {
            let err = TraceError::DivergenceAt { step: 0, detail: format!("first action is {}, not init", s.action_taken) };
            log.push(err.to_string());
            return ReplayReport { log, steps: i, outcome: Err(err) };
        }
        log.push(format!("Action: {}", s.action_taken));
        let picked: Vec<String> = s
            .picks
            .iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| format!("{k} = {v}")))
            .collect();
        if !picked.is_empty() {
            log.push(format!("Picks: {}", picked.join(", ")));
        }
        let from = if i == 0 { &empty } else { &trace.states[i - 1].vars };
        let mut chooser = ForcedChooser { action: &s.action_taken, picks: &s.picks };
        let next = match ev.run_action(action, &[], from, &mut chooser) {
            Ok(Some(t)) => t.next,
            Ok(None) => {
                let err = TraceError::DivergenceAt {
                    step: i,
                    detail: format!("{} is not enabled with the recorded picks", s.action_taken),
                };
                log.push(err.to_string());
                return ReplayReport { log, steps: i, outcome: Err(err) };
            }
            Err(d) => {
                let err = TraceError::Eval { step: i, message: d.to_string() };
                log.push(err.to_string());
                return ReplayReport { log, steps: i, outcome: Err(err) };
            }
        };
        if let (Some(model_bank), Some(trace_bank)) = (next.get("bank"), s.vars.get("bank")) {
            log.push(format!(
                "Contract balance ({contract_address}) for {denom}: {} vs {}",
                balance(model_bank, contract_address, denom),
                balance(trace_bank, contract_address, denom)
            ));
        }
        for v in STATE_VARS {
            let (Some(model), Some(recorded)) = (next.get(*v), s.vars.get(*v)) else {
                continue;
            };
            if !values_equal(model, recorded) {
                let err = TraceError::DivergenceAt {
                    step: i,
                    detail: format!("{v}: model computes {model}, trace has {recorded}"),
                };
                log.push(err.to_string());
                return ReplayReport { log, steps: i, outcome: Err(err) };
            }
        }
        log.push(RULE.into());
    }
    ReplayReport { log, steps: trace.states.len(), outcome: Ok(()) }
}

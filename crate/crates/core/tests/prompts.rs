use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use proptest::prelude::*;
use quintsynth_core::frontend::*;
use quintsynth_core::iospec::{self, ExampleRole, IoExample};
use quintsynth_core::prompt::*;
use quintsynth_core::repair::render_with_raw;
use quintsynth_core::stubber::*;
use quintsynth_kernel::{BuiltinChecker, Checker};

struct Fixture {
    ir: ContractIR,
    model: ModelDocument,
    examples: Vec<IoExample>,
}

fn fixture(name: &str) -> Fixture {
    let dir = Path::new("fixtures").join(name);
    let (n, units) = load_project(&dir).unwrap();
    let ir = parse_project(units).unwrap();
    let model = emit_model(&ir, &n, &StubConfig::default()).unwrap();
    let io = dir.join("io.json");
    let examples = if io.exists() { iospec::load_io_spec(&io).unwrap() } else { Vec::new() };
    Fixture { ir, model, examples }
}

fn ctx(f: &Fixture, name: &str, description: Option<&str>) -> StubContext {
    let shown: Vec<&IoExample> = iospec::examples_for(&f.examples, name, ExampleRole::Generation).into_iter().take(2).collect();
    StubContext::new(&f.model, &f.ir, name, description, &shown).unwrap()
}

fn bind(pairs: &[(&str, &str)]) -> Bindings {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

// ---- templates ----

#[test]
fn generation_prompt_opening() {
    let f = fixture("mini_lockup");
    let text = generation_prompt(&PromptLibrary::builtin(), &ctx(&f, "withdraw", None)).unwrap();
    assert!(text.starts_with("Please complete this stub for my `withdraw` Quint function."), "{text}");
    assert!(!text.contains("@@@"));
}

#[test]
fn template_without_macros_is_identity() {
    let t = Template::new("plain", "nothing to see @@ here @@@lower@@@");
    assert!(t.required_macros.is_empty());
    assert_eq!(expand_template(&t, &Bindings::new()).unwrap(), t.body);
}

#[test]
fn missing_binding() {
    let t = Template::new("t", "a @@@NAME@@@ b @@@IO EXAMPLES@@@");
    match expand_template(&t, &bind(&[("NAME", "x")])) {
        Err(PromptError::UnboundMacro { name, .. }) => assert_eq!(name, "IO EXAMPLES"),
        r => panic!("{r:?}"),
    }
}

#[test]
fn extra_bindings_only_warn() {
    let t = Template::new("t", "@@@NAME@@@");
    let b = bind(&[("NAME", "x"), ("OTHER", "y")]);
    assert_eq!(unknown_macros(&t, &b), ["OTHER"]);
    assert_eq!(expand_template(&t, &b).unwrap(), "x");
}

/// Placeholder names found by a plain scan for `@@@NAME@@@`.
fn scan(body: &str) -> BTreeSet<String> {
    let parts: Vec<&str> = body.split("@@@").collect();
    let mut out = BTreeSet::new();
    let mut i = 1;
    while i + 1 < parts.len() {
        let p = parts[i];
        if !p.is_empty() && p.chars().all(|c| c.is_ascii_uppercase() || c == ' ' || c == '_' || c.is_ascii_digit()) && p.starts_with(|c: char| c.is_ascii_uppercase()) {
            out.insert(p.to_string());
            i += 2;
        } else {
            i += 1;
        }
    }
    out
}

#[test]
fn required_macros_match_placeholders() {
    let lib = PromptLibrary::builtin();
    for t in [&lib.generate, &lib.repair, &lib.semantic_repair, &lib.adapter_generate, &lib.adapter_repair] {
        assert_eq!(t.required_macros, scan(&t.body), "{}", t.name);
    }
    let generate: Vec<&str> = lib.generate.required_macros.iter().map(String::as_str).collect();
    for m in ["NAME", "DESCRIPTION", "STUB", "QUINT TYPE DEFINITIONS", "IO EXAMPLES", "CONSTANTS", "QUINT IMPORTS", "DEC"] {
        assert!(generate.contains(&m), "{m}");
    }
    assert!(lib.repair.required_macros.contains("QUINT ERRORS"));
}

#[test]
fn system_message_carries_cheatsheet() {
    let lib = PromptLibrary::builtin();
    let sys = lib.system_message();
    assert_eq!(sys.role, Role::System);
    assert!(sys.content.contains("Quint cheatsheet"));
    assert!(!sys.content.contains("@@@"));
}

fn plain_text() -> impl Strategy<Value = String> {
    "[a-zA-Z0-9 \n{}():,._-]{0,40}"
}

proptest! {
    #[test]
    fn expansion_is_idempotent(
        pre in plain_text(),
        mid in plain_text(),
        post in plain_text(),
        a in plain_text(),
        b in plain_text(),
    ) {
        let t = Template::new("t", format!("{pre}@@@NAME@@@{mid}@@@IO EXAMPLES@@@{post}@@@NAME@@@"));
        let bindings = bind(&[("NAME", &a), ("IO EXAMPLES", &b)]);
        let once = expand_template(&t, &bindings).unwrap();
        prop_assert_eq!(once.clone(), format!("{pre}{a}{mid}{b}{post}{a}"));
        let twice = expand_template(&Template::new("t", once.clone()), &bindings).unwrap();
        prop_assert_eq!(twice, once);
    }

    #[test]
    fn bound_text_is_not_reexpanded(a in plain_text()) {
        let t = Template::new("t", "@@@NAME@@@|@@@DESCRIPTION@@@");
        let out = expand_template(&t, &bind(&[("NAME", "@@@DESCRIPTION@@@"), ("DESCRIPTION", &a)])).unwrap();
        prop_assert_eq!(out, format!("@@@DESCRIPTION@@@|{a}"));
    }
}

// ---- chat messages ----

#[test]
fn empty_message_rejected() {
    assert!(matches!(ChatMessage::new(Role::User, ""), Err(PromptError::EmptyMessage)));
}

#[test]
fn fewshot_pairs_must_alternate() {
    let sys = ChatMessage::new(Role::System, "s").unwrap();
    let u = ChatMessage::new(Role::User, "u").unwrap();
    let a = ChatMessage::new(Role::Assistant, "a").unwrap();
    assert!(FewShotSet::new(sys.clone(), vec![(u.clone(), a.clone())]).is_ok());
    assert!(matches!(FewShotSet::new(sys.clone(), vec![(a.clone(), u.clone())]), Err(PromptError::BadDemonstration)));
    assert!(matches!(FewShotSet::new(u.clone(), vec![]), Err(PromptError::BadDemonstration)));
}

#[test]
fn generation_message_shape() {
    let lib = PromptLibrary::builtin();
    let fewshot = Reference::builtin().fewshot(&lib, &StubConfig::default(), 2).unwrap();
    let f = fixture("mini_lockup");
    let msgs = build_generation_messages(&lib, &fewshot, &ctx(&f, "withdraw", Some("Withdraws."))).unwrap();
    assert_eq!(msgs.len(), 8);
    assert_eq!(msgs[0].role, Role::System);
    for (i, m) in msgs.iter().enumerate().skip(1) {
        assert_eq!(m.role, if i % 2 == 1 { Role::User } else { Role::Assistant }, "message {i}");
    }
    assert_eq!(msgs.last().unwrap().role, Role::User);
    for answer in msgs.iter().filter(|m| m.role == Role::Assistant) {
        assert!(answer.content.starts_with("```quint\npure def "));
    }

    let bare = FewShotSet::new(lib.system_message(), vec![]).unwrap();
    let msgs = build_generation_messages(&lib, &bare, &ctx(&f, "withdraw", None)).unwrap();
    let roles: Vec<Role> = msgs.iter().map(|m| m.role).collect();
    assert_eq!(roles, [Role::System, Role::User]);
}

#[test]
fn ablation_changes_only_the_description() {
    let lib = PromptLibrary::builtin();
    let f = fixture("mini_lockup");
    let description = "Releases the given lockups of the sender.";
    let with = generation_prompt(&lib, &ctx(&f, "withdraw", Some(description))).unwrap();
    let without = generation_prompt(&lib, &ctx(&f, "withdraw", None)).unwrap();
    let prefix = with.bytes().zip(without.bytes()).take_while(|(a, b)| a == b).count();
    let suffix = with.bytes().rev().zip(without.bytes().rev()).take_while(|(a, b)| a == b).count();
    let suffix = suffix.min(with.len() - prefix).min(without.len() - prefix);
    assert_eq!(&with[prefix..with.len() - suffix], description);
    assert_eq!(&without[prefix..without.len() - suffix], "");
}

#[test]
fn examples_in_prompt_are_generation_only() {
    let f = fixture("mini_lockup");
    let c = ctx(&f, "withdraw", None);
    for e in f.examples.iter().filter(|e| e.function == "withdraw") {
        assert_eq!(c.io_examples.contains(&e.label), e.role == ExampleRole::Generation, "{}", e.label);
    }
}

#[test]
fn handler_source_is_embedded() {
    let f = fixture("voting_deposit");
    let c = ctx(&f, "deposit", None);
    let golden = std::fs::read_to_string("fixtures/golden/deposit_source.rs").unwrap();
    assert_eq!(c.handler_source, format!("```rust\n{}\n```", golden.trim_end()));
}

// ---- type closure ----

fn type_names(model: &ModelDocument) -> BTreeSet<String> {
    model.type_defs.iter().map(|t| t.name.clone()).collect()
}

fn idents(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
        .filter(|w| w.starts_with(|c: char| c.is_ascii_uppercase()))
        .map(String::from)
        .collect()
}

/// Model types reachable from a definition's signature, by repeated scanning.
fn reachable(model: &ModelDocument, def: &PureDef) -> BTreeSet<String> {
    let known = type_names(model);
    let texts: BTreeMap<&str, &str> = model.type_texts();
    let mut seen = BTreeSet::new();
    let mut todo: Vec<String> = idents(&def.signature()).into_iter().filter(|n| known.contains(n)).collect();
    while let Some(n) = todo.pop() {
        if !seen.insert(n.clone()) {
            continue;
        }
        let body = texts[n.as_str()];
        let body = body.split_once('=').map(|(_, b)| b).unwrap_or(body);
        todo.extend(idents(body).into_iter().filter(|m| known.contains(m) && !seen.contains(m)));
    }
    seen
}

fn closure_names(text: &str) -> Vec<String> {
    text.lines()
        .filter_map(|l| l.strip_prefix("type "))
        .map(|l| l.split(|c: char| !(c.is_ascii_alphanumeric() || c == '_')).next().unwrap().to_string())
        .collect()
}

fn check_closure(model: &ModelDocument, name: &str) {
    let def = model.pure_def(name).unwrap();
    let text = type_closure(model, def);
    let names = closure_names(&text);
    let unique: BTreeSet<String> = names.iter().cloned().collect();
    assert_eq!(unique.len(), names.len(), "duplicates in {names:?}");
    assert_eq!(unique, reachable(model, def), "{name}");
    // every block is needed: dropping one leaves a referenced name undefined
    let blocks: Vec<&str> = text.split("\n\n").collect();
    let sig_refs = idents(&def.signature());
    for (i, _) in blocks.iter().enumerate() {
        let rest: Vec<&str> = blocks.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, b)| *b).collect();
        let defined: BTreeSet<String> = rest.iter().flat_map(|b| closure_names(b)).collect();
        let used: BTreeSet<String> = rest
            .iter()
            .flat_map(|b| idents(b.split_once('=').map(|(_, r)| r).unwrap_or(b)))
            .chain(sig_refs.iter().cloned())
            .filter(|n| unique.contains(n))
            .collect();
        assert!(!used.is_subset(&defined), "block {i} of {name} is redundant");
    }
    // dependencies come before their users
    for (i, n) in names.iter().enumerate() {
        let body = model.type_texts()[n.as_str()];
        let body = body.split_once('=').map(|(_, b)| b).unwrap_or(body);
        for dep in idents(body).into_iter().filter(|d| unique.contains(d) && d != n) {
            let at = names.iter().position(|x| *x == dep).unwrap();
            let mutual = reachable_from(model, &dep).contains(n);
            assert!(at < i || mutual, "{dep} after {n}");
        }
    }
}

fn reachable_from(model: &ModelDocument, start: &str) -> BTreeSet<String> {
    let known = type_names(model);
    let texts = model.type_texts();
    let mut seen = BTreeSet::new();
    let mut todo = vec![start.to_string()];
    while let Some(n) = todo.pop() {
        let body = texts[n.as_str()];
        let body = body.split_once('=').map(|(_, b)| b).unwrap_or(body);
        for m in idents(body).into_iter().filter(|m| known.contains(m)) {
            if seen.insert(m.clone()) {
                todo.push(m);
            }
        }
    }
    seen
}

#[test]
fn closure_matches_reachability() {
    let f = fixture("mini_lockup");
    for name in ["instantiate", "deposit", "withdraw"] {
        check_closure(&f.model, name);
    }
    let text = type_closure(&f.model, f.model.pure_def("withdraw").unwrap());
    let names = closure_names(&text);
    assert!(names.contains(&"ContractState".to_string()) && names.contains(&"Lockup".to_string()) && names.contains(&"Addr".to_string()));
    for name in ["voting_deposit", "burn_vault"] {
        let f = fixture(name);
        for stub in f.model.stub_names() {
            check_closure(&f.model, &stub);
        }
    }
}

#[test]
fn closure_of_mutual_recursion() {
    let ir = parse_project(vec![SourceUnit::new(
        "c.rs",
        "use cw_storage_plus::Item;\n\
         pub struct Tree { pub label: u64, pub forest: Vec<Forest> }\n\
         pub struct Forest { pub trees: Vec<Tree> }\n\
         pub const ROOT: Item<u64> = Item::new(\"r\");\n\
         pub fn plant(deps: DepsMut, tree: Tree) {}\n",
    )])
    .unwrap();
    let model = emit_model(&ir, "m", &StubConfig::default()).unwrap();
    check_closure(&model, "plant");
    let text = type_closure(&model, model.pure_def("plant").unwrap());
    let names = closure_names(&text);
    assert_eq!(names.iter().filter(|n| *n == "Tree").count(), 1);
    assert_eq!(names.iter().filter(|n| *n == "Forest").count(), 1);
    assert_eq!(text, type_closure(&model, model.pure_def("plant").unwrap()));
}

#[test]
fn closure_of_int_signature_is_empty() {
    let f = fixture("mini_lockup");
    let def = PureDef {
        name: "double".into(),
        params: vec![("x".into(), ModelType::Int)],
        return_type: ModelType::Int,
        body: "x * 2".into(),
        is_stub: false,
    };
    assert_eq!(type_closure(&f.model, &def), "");
}

// ---- repair prompts ----

#[test]
fn static_repair_carries_diagnostics_verbatim() {
    let lib = PromptLibrary::builtin();
    let f = fixture("mini_lockup");
    let broken = "pure def withdraw(state: ContractState, deps: Deps, env: Env, info: MessageInfo, ids: List[int]): (Result[Response, ContractError], ContractState) = {\n  match Ok(true) {\n    | Ok(true) => (Err(\"no\"), state)\n    | _ => (Ok(Response_new), state)\n  }\n}";
    let text = render_with_raw(&f.model, "withdraw", broken);
    let diags = BuiltinChecker.check("model.qnt", &text).unwrap();
    assert!(!diags.is_empty());
    let rendered: Vec<String> = diags.iter().map(|d| d.render()).collect();
    assert!(rendered[0].contains("[QNT000] mismatched input 'true' expecting {'_', LOW_ID, CAP_ID}"), "{}", rendered[0]);
    let msgs = build_repair_messages(&lib, &RepairInput::Static(rendered.join("\n\n")), &ctx(&f, "withdraw", None), broken).unwrap();
    assert_eq!(msgs.len(), 2);
    assert_eq!(msgs[0].role, Role::System);
    let user = &msgs[1].content;
    assert!(user.starts_with("Please repair my `withdraw` Quint function"));
    for line in rendered.join("\n\n").lines() {
        assert!(user.contains(line), "missing {line}");
    }
    assert!(user.contains(broken));
    assert!(user.contains("bullet-point list"));
}

#[test]
fn runtime_repair_reuses_static_template() {
    let lib = PromptLibrary::builtin();
    let f = fixture("mini_lockup");
    let c = ctx(&f, "withdraw", None);
    let a = build_repair_messages(&lib, &RepairInput::Static("boom".into()), &c, "pure def withdraw = 1").unwrap();
    let b = build_repair_messages(&lib, &RepairInput::Runtime("boom".into()), &c, "pure def withdraw = 1").unwrap();
    assert_eq!(a, b);
}

#[test]
fn nothing_to_repair() {
    let lib = PromptLibrary::builtin();
    let f = fixture("mini_lockup");
    let c = ctx(&f, "withdraw", None);
    for input in [RepairInput::Static("  ".into()), RepairInput::Runtime(String::new()), RepairInput::Semantic(vec![])] {
        assert!(matches!(build_repair_messages(&lib, &input, &c, "x"), Err(PromptError::NothingToRepair)));
    }
}

#[test]
fn one_mismatch_snapshot() {
    let lib = PromptLibrary::builtin();
    let f = fixture("mini_lockup");
    let m = Mismatch {
        input: "withdraw(init_contract_state, d, e, i, [1])".into(),
        actual: "(Ok(Response_new), init_contract_state)".into(),
        expected: "(Err(\"Unauthorized\"), init_contract_state)".into(),
    };
    let msgs = build_repair_messages(&lib, &RepairInput::Semantic(vec![m]), &ctx(&f, "withdraw", None), "pure def withdraw = 1").unwrap();
    let user = &msgs[1].content;
    let block = "Input:\n```\nwithdraw(init_contract_state, d, e, i, [1])\n```\nActual output:\n```\n(Ok(Response_new), init_contract_state)\n```\nExpected output:\n```\n(Err(\"Unauthorized\"), init_contract_state)\n```";
    assert_eq!(user.matches("Input:\n").count(), 1);
    assert_eq!(user.matches("Actual output:\n").count(), 1);
    assert_eq!(user.matches("Expected output:\n").count(), 1);
    assert!(user.contains(block), "{user}");
    assert!(user.contains("Start by reasoning about the problem"));
}

// ---- reference set ----

#[test]
fn reference_model_typechecks() {
    let r = Reference::builtin();
    let diags = BuiltinChecker.check("model.qnt", &r.model_text).unwrap();
    assert!(diags.is_empty(), "{:?}", diags.iter().map(|d| d.render()).collect::<Vec<_>>());
    assert_eq!(r.demos, ["instantiate", "deposit", "release"]);
    for d in &r.demos {
        assert!(r.answer(d).unwrap().starts_with(&format!("pure def {d}(")));
    }
}

#[test]
fn reference_answers_pass_their_examples() {
    use quintsynth_core::repair::{check_semantics, evaluate_examples};
    let r = Reference::builtin();
    let ir = parse_project(r.units.clone()).unwrap();
    let stub = emit_model(&ir, &r.name, &StubConfig::default()).unwrap();
    let program = quintsynth_kernel::Program::parse("model.qnt", &r.model_text).unwrap();
    for d in &r.demos {
        let examples: Vec<IoExample> = r.examples.iter().filter(|e| &e.function == d).cloned().collect();
        assert!(!examples.is_empty());
        let ev = evaluate_examples(&stub, &examples).unwrap();
        assert!(check_semantics(&program, d, &ev).is_empty(), "{d}");
    }
}

#[test]
fn reference_loads_from_directory() {
    let dir = Path::new("prompts/reference/escrow");
    let loaded = Reference::load(dir).unwrap();
    let builtin = Reference::builtin();
    assert_eq!(loaded.model_text, builtin.model_text);
    assert_eq!(loaded.demos, builtin.demos);
    assert_eq!(loaded.examples, builtin.examples);
}

use std::path::Path;

use quintsynth_core::frontend::*;

fn fixture(name: &str) -> ContractIR {
    let (_, units) = load_project(&Path::new("fixtures").join(name)).unwrap();
    parse_project(units).unwrap()
}

fn single(text: &str) -> ContractIR {
    parse_project(vec![SourceUnit::new("src/contract.rs", text)]).unwrap()
}

#[test]
fn lockup_state_items() {
    let ir = fixture("mini_lockup");
    let items: Vec<(&str, StateKind, String, &str)> = ir
        .state_items
        .iter()
        .map(|s| (s.name.as_str(), s.kind, s.model_type().to_string(), s.storage_key.as_str()))
        .collect();
    assert_eq!(
        items,
        vec![
            ("last_id", StateKind::SingleItem, "int".to_string(), "lock_id"),
            ("lockups", StateKind::KeyedMap, "int -> Lockup".to_string(), "lockups"),
        ]
    );
    assert!(ir.state_items[0].key_type.is_none());
    assert_eq!(ir.state_items[1].key_type, Some(ModelType::Int));
}

#[test]
fn empty_file_gives_empty_ir() {
    let ir = single("");
    assert!(ir.state_items.is_empty());
    assert!(ir.handlers.is_empty());
    assert!(ir.type_decls.is_empty());
    assert!(ir.messages.is_empty());
}

#[test]
fn no_sources_is_an_error() {
    assert!(matches!(parse_project(vec![]), Err(FrontendError::NoSources)));
}

#[test]
fn split_files_match_concatenation() {
    let (_, units) = load_project(Path::new("fixtures/mini_lockup")).unwrap();
    let split = parse_project(units.clone()).unwrap();
    // One file needs the union of the imports; `crate::` paths still resolve.
    let joined: String = units.iter().map(|u| u.text.as_str()).collect::<Vec<_>>().join("\n");
    let whole = parse_project(vec![SourceUnit::new("src/all.rs", joined)]).unwrap();
    assert_eq!(split, whole);
    assert_eq!(split.state_items.len(), 2);
}

#[test]
fn parse_is_deterministic() {
    assert_eq!(fixture("mini_lockup"), fixture("mini_lockup"));
}

#[test]
fn declaration_order_is_kept() {
    let ir = single(
        "use cw_storage_plus::{Item, Map};\n\
         pub const ZED: Item<u64> = Item::new(\"z\");\n\
         pub const ALPHA: Map<u64, bool> = Map::new(\"a\");\n\
         pub const MID: Item<String> = Item::new(\"m\");\n\
         pub fn zz(deps: DepsMut) {}\npub fn aa(deps: DepsMut) {}\n",
    );
    let names: Vec<&str> = ir.state_items.iter().map(|s| s.name.as_str()).collect();
    assert_eq!(names, ["zed", "alpha", "mid"]);
    let handlers: Vec<&str> = ir.handlers.iter().map(|h| h.name.as_str()).collect();
    assert_eq!(handlers, ["zz", "aa"]);
}

// ---- storage conditions against a brute-force checker ----

const IMPORTS: &[&str] = &[
    "",
    "use cw_storage_plus::{Item, Map};",
    "use cw_storage_plus::Item;",
    "use other_store::{Item, Map};",
    "use cw_storage_plus::*;",
];

const INITS: &[&str] = &[
    "Item::new(\"k\")",
    "Map::new(\"k\")",
    "cw_storage_plus::Item::new(\"k\")",
    "cw_storage_plus::Map::new(\"k\")",
    "other_store::Map::new(\"k\")",
    "Item::default()",
    "Store::new(\"k\")",
    "5",
    "\"text\"",
];

/// Resolves the callee path of `init` under `import` by hand and applies the
/// three conditions: a call, defined in `cw_storage_plus`, named `Item::new`
/// or `Map::new`.
fn oracle(import: &str, init: &str) -> bool {
    let Some(paren) = init.find('(') else {
        return false;
    };
    let path: Vec<&str> = init[..paren].split("::").collect();
    let mut full: Vec<String> = Vec::new();
    let head = path[0];
    if head == "cw_storage_plus" {
        full = path.iter().map(|s| s.to_string()).collect();
    } else if let Some(rest) = import.strip_prefix("use ") {
        let rest = rest.trim_end_matches(';');
        let (krate, names) = rest.split_once("::").unwrap();
        let names = names.trim_matches(|c| c == '{' || c == '}');
        let imported = names == "*" || names.split(',').any(|n| n.trim() == head);
        if imported {
            full.push(krate.to_string());
            full.extend(path.iter().map(|s| s.to_string()));
        }
    }
    let n = full.len();
    n >= 3 && full[0] == "cw_storage_plus" && full[n - 1] == "new" && (full[n - 2] == "Item" || full[n - 2] == "Map")
}

#[test]
fn storage_conditions_match_brute_force() {
    let mut checked = 0;
    for import in IMPORTS {
        for init in INITS {
            let ty = if init.contains("Map::") { "Map<u64, u64>" } else if init.contains("Item::new") { "Item<u64>" } else { "u64" };
            let text = format!("{import}\npub const THING: {ty} = {init};\n");
            let ir = single(&text);
            let found = ir.state_items.iter().any(|s| s.name == "thing");
            assert_eq!(found, oracle(import, init), "{text}");
            checked += 1;
        }
    }
    assert_eq!(checked, IMPORTS.len() * INITS.len());
}

#[test]
fn corpus_constants_match_brute_force() {
    for name in ["mini_lockup", "voting_deposit", "burn_vault"] {
        let ir = fixture(name);
        for unit in &ir.sources {
            let imports: Vec<&str> = unit.text.lines().filter(|l| l.starts_with("use cw_storage_plus")).collect();
            for line in unit.text.lines().filter(|l| l.trim_start().starts_with("pub const ")) {
                let (decl, init) = line.split_once(" = ").unwrap();
                let cname = decl.trim_start_matches("pub const ").split(':').next().unwrap().trim().to_lowercase();
                let init = init.trim_end_matches(';');
                let expected = imports.iter().any(|i| oracle(i, init)) || oracle("", init);
                let found = ir.state_items.iter().any(|s| s.name == cname);
                assert_eq!(found, expected, "{name}: {line}");
            }
        }
    }
}

// ---- handlers ----

#[test]
fn handler_classification() {
    let ir = fixture("voting_deposit");
    let m = |n: &str| ir.handler(n).unwrap().mutability;
    assert_eq!(m("deposit"), Mutability::Mutating);
    assert_eq!(m("query_power"), Mutability::ReadOnly);
    assert_eq!(m("total"), Mutability::Pure);
    let deposit = ir.handler("deposit").unwrap();
    let params: Vec<String> = deposit.params.iter().map(|(n, t)| format!("{n}: {t}")).collect();
    assert_eq!(params, ["deps: DepsMut", "info: MessageInfo"]);
}

#[test]
fn extracts_full_handler_definition() {
    let ir = fixture("voting_deposit");
    let expected = std::fs::read_to_string("fixtures/golden/deposit_source.rs").unwrap();
    let got = extract_handler_source(&ir, "deposit").unwrap();
    assert_eq!(got, expected.trim_end());
    assert_eq!(got.lines().count(), 20);
}

#[test]
fn missing_handler() {
    let ir = fixture("voting_deposit");
    assert!(matches!(extract_handler_source(&ir, "nope"), Err(FrontendError::HandlerNotFound(n)) if n == "nope"));
}

#[test]
fn duplicate_handler_across_files() {
    let ir = parse_project(vec![
        SourceUnit::new("src/a.rs", "pub fn withdraw(deps: DepsMut) {}\n"),
        SourceUnit::new("src/b.rs", "pub fn withdraw(deps: DepsMut, x: u64) {}\n"),
    ])
    .unwrap();
    let stub_err = quintsynth_core::stubber::emit_model(&ir, "m", &Default::default()).unwrap_err();
    assert!(matches!(
        stub_err,
        quintsynth_core::stubber::StubError::Frontend(FrontendError::DuplicateHandler { .. })
    ));
    match extract_handler_source(&ir, "withdraw").unwrap_err() {
        FrontendError::DuplicateHandler { name, locations } => {
            assert_eq!(name, "withdraw");
            assert!(locations.contains("src/a.rs") && locations.contains("src/b.rs"), "{locations}");
        }
        e => panic!("unexpected {e}"),
    }
}

#[test]
fn declaration_spans_lie_within_text() {
    for name in ["mini_lockup", "voting_deposit"] {
        for unit in fixture(name).sources {
            for d in &unit.declarations {
                assert!(d.start <= d.end && d.end <= unit.text.len(), "{}", unit.path);
            }
        }
    }
}

#[test]
fn external_types_are_opaque() {
    let ir = single("use cw_storage_plus::Item;\nuse other::Config;\npub const CFG: Item<Config> = Item::new(\"c\");\n");
    assert!(ir.opaque_types.contains("Config"));
    assert_eq!(ir.state_items[0].value_type, ModelType::named("Config"));
}

//! Prompt templates, few-shot demonstrations and the context blocks that fill
//! them.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;
use std::sync::OnceLock;

use quintsynth_kernel::diag::MAIN_SOURCE;
use quintsynth_kernel::syntax::ast::{Decl, TypeDefBody, TypeExpr};
use quintsynth_kernel::syntax::{parse_decls, parse_module, parse_type};
use serde::{Deserialize, Serialize};

use crate::frontend::{self, ContractIR, FrontendError, SourceUnit};
use crate::iospec::{self, ExampleRole, IoExample};
use crate::stubber::{self, ModelDocument, PureDef, StubConfig, StubError, LIBRARY_IMPORT};

pub const MACRO_DELIM: &str = "@@@";

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("template {template}: no binding for macro {name}")]
    UnboundMacro { template: String, name: String },
    #[error("binding for unknown macro {0}")]
    UnknownMacro(String),
    #[error("chat message content is empty")]
    EmptyMessage,
    #[error("few-shot demonstrations must be (user, assistant) pairs")]
    BadDemonstration,
    #[error("a repair prompt needs at least one diagnostic or mismatch")]
    NothingToRepair,
    #[error("function {0} is not part of the model")]
    UnknownFunction(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("reference set: {0}")]
    Reference(String),
    #[error(transparent)]
    Frontend(#[from] FrontendError),
    #[error(transparent)]
    Stub(#[from] StubError),
}

// ---- templates ----

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pub name: String,
    pub body: String,
    pub required_macros: BTreeSet<String>,
}

fn valid_macro_name(name: &str) -> bool {
    !name.is_empty()
        && name.starts_with(|c: char| c.is_ascii_uppercase())
        && name
            .chars()
            .all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == ' ' || c == '_')
}

/// Placeholder occurrences as (start, end, name), end exclusive.
fn placeholders(body: &str) -> Vec<(usize, usize, &str)> {
    let mut out = Vec::new();
    let mut i = 0;
    while let Some(off) = body[i..].find(MACRO_DELIM) {
        let start = i + off;
        let inner = start + MACRO_DELIM.len();
        match body[inner..].find(MACRO_DELIM) {
            Some(len) if valid_macro_name(&body[inner..inner + len]) => {
                let end = inner + len + MACRO_DELIM.len();
                out.push((start, end, &body[inner..inner + len]));
                i = end;
            }
            Some(_) => i = start + 1,
            None => break,
        }
    }
    out
}

impl Template {
    pub fn new(name: impl Into<String>, body: impl Into<String>) -> Template {
        let body = body.into();
        let required_macros = placeholders(&body).into_iter().map(|(_, _, n)| n.to_string()).collect();
        Template { name: name.into(), body, required_macros }
    }
}

pub type Bindings = BTreeMap<String, String>;

pub fn unknown_macros(t: &Template, bindings: &Bindings) -> Vec<String> {
    bindings.keys().filter(|k| !t.required_macros.contains(*k)).cloned().collect()
}

/// Replaces every placeholder occurrence with its binding in one pass, so bound
/// text is never expanded again.
pub fn expand_template(t: &Template, bindings: &Bindings) -> Result<String, PromptError> {
    for name in unknown_macros(t, bindings) {
        log::warn!("{}", PromptError::UnknownMacro(name));
    }
    let mut out = String::with_capacity(t.body.len());
    let mut last = 0;
    for (start, end, name) in placeholders(&t.body) {
        let value = bindings.get(name).ok_or_else(|| PromptError::UnboundMacro {
            template: t.name.clone(),
            name: name.to_string(),
        })?;
        out.push_str(&t.body[last..start]);
        out.push_str(value);
        last = end;
    }
    out.push_str(&t.body[last..]);
    Ok(out)
}

/// Binds exactly the macros `t` uses, taking values from `all`.
fn select_bindings(t: &Template, all: &Bindings) -> Bindings {
    all.iter()
        .filter(|(k, _)| t.required_macros.contains(*k))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect()
}

// ---- messages ----

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Result<ChatMessage, PromptError> {
        let content = content.into();
        if content.trim().is_empty() {
            return Err(PromptError::EmptyMessage);
        }
        Ok(ChatMessage { role, content })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FewShotSet {
    pub system: ChatMessage,
    pub demonstrations: Vec<(ChatMessage, ChatMessage)>,
}

impl FewShotSet {
    pub fn new(system: ChatMessage, demonstrations: Vec<(ChatMessage, ChatMessage)>) -> Result<FewShotSet, PromptError> {
        if system.role != Role::System
            || demonstrations
                .iter()
                .any(|(q, a)| q.role != Role::User || a.role != Role::Assistant)
        {
            return Err(PromptError::BadDemonstration);
        }
        Ok(FewShotSet { system, demonstrations })
    }

    pub fn messages(&self) -> Vec<ChatMessage> {
        let mut out = vec![self.system.clone()];
        for (q, a) in &self.demonstrations {
            out.push(q.clone());
            out.push(a.clone());
        }
        out
    }
}

// ---- prompt library ----

const BUILTIN_GENERATE: &str = include_str!("../prompts/generate.txt");
const BUILTIN_REPAIR: &str = include_str!("../prompts/repair.txt");
const BUILTIN_SEMANTIC: &str = include_str!("../prompts/semantic_repair.txt");
const BUILTIN_SYSTEM: &str = include_str!("../prompts/system.txt");
const BUILTIN_CHEATSHEET: &str = include_str!("../prompts/cheatsheet.txt");
const BUILTIN_SHORT: &str = include_str!("../prompts/short_instructions.txt");
const BUILTIN_ADAPTER_GENERATE: &str = include_str!("../prompts/adapter_generate.txt");
const BUILTIN_ADAPTER_REPAIR: &str = include_str!("../prompts/adapter_repair.txt");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptLibrary {
    /// System message with the cheatsheet spliced in.
    pub system: String,
    pub generate: Template,
    pub repair: Template,
    pub semantic_repair: Template,
    pub short_instructions: String,
    pub adapter_generate: Template,
    pub adapter_repair: Template,
}

fn assemble(
    files: &dyn Fn(&str, &'static str) -> Result<String, PromptError>,
) -> Result<PromptLibrary, PromptError> {
    let system = Template::new("system", files("system.txt", BUILTIN_SYSTEM)?);
    let mut b = Bindings::new();
    if system.required_macros.contains("CHEATSHEET") {
        b.insert("CHEATSHEET".into(), files("cheatsheet.txt", BUILTIN_CHEATSHEET)?.trim_end().to_string());
    }
    let trim = |s: String| s.trim_end().to_string();
    Ok(PromptLibrary {
        system: expand_template(&system, &b)?.trim_end().to_string(),
        generate: Template::new("generate", trim(files("generate.txt", BUILTIN_GENERATE)?)),
        repair: Template::new("repair", trim(files("repair.txt", BUILTIN_REPAIR)?)),
        semantic_repair: Template::new("semantic_repair", trim(files("semantic_repair.txt", BUILTIN_SEMANTIC)?)),
        short_instructions: trim(files("short_instructions.txt", BUILTIN_SHORT)?),
        adapter_generate: Template::new(
            "adapter_generate",
            trim(files("adapter_generate.txt", BUILTIN_ADAPTER_GENERATE)?),
        ),
        adapter_repair: Template::new("adapter_repair", trim(files("adapter_repair.txt", BUILTIN_ADAPTER_REPAIR)?)),
    })
}

impl PromptLibrary {
    pub fn builtin() -> PromptLibrary {
        assemble(&|_, text| Ok(text.to_string())).expect("bundled prompts expand")
    }

    /// Loads templates from `dir`; files missing there fall back to the
    /// bundled copies.
    pub fn load(dir: &Path) -> Result<PromptLibrary, PromptError> {
        assemble(&|file, fallback| {
            let path = dir.join(file);
            if path.exists() {
                std::fs::read_to_string(&path).map_err(|e| PromptError::Io {
                    path: path.display().to_string(),
                    message: e.to_string(),
                })
            } else {
                Ok(fallback.to_string())
            }
        })
    }

    pub fn system_message(&self) -> ChatMessage {
        ChatMessage { role: Role::System, content: self.system.clone() }
    }
}

// ---- context extraction ----

fn library_type_names() -> &'static BTreeSet<String> {
    static NAMES: OnceLock<BTreeSet<String>> = OnceLock::new();
    NAMES.get_or_init(|| {
        let module = parse_module(MAIN_SOURCE, quintsynth_kernel::library::CW_TYPES).expect("library parses");
        module
            .decls
            .iter()
            .filter_map(|d| match d {
                Decl::Type(t) => Some(t.name.clone()),
                _ => None,
            })
            .collect()
    })
}

fn type_refs(t: &TypeExpr) -> Vec<String> {
    let mut out = Vec::new();
    t.named_refs(&mut out);
    out
}

/// Names referenced by each type definition of the model.
fn type_graph(model: &ModelDocument) -> HashMap<String, (String, Vec<String>)> {
    let mut graph = HashMap::new();
    for t in &model.type_defs {
        let mut refs = Vec::new();
        if let Ok(decls) = parse_decls(MAIN_SOURCE, &t.text) {
            for d in decls {
                if let Decl::Type(def) = d {
                    match &def.body {
                        TypeDefBody::Alias(e) => refs.extend(type_refs(e)),
                        TypeDefBody::Sum(vs) => {
                            for v in vs {
                                if let Some(p) = &v.payload {
                                    refs.extend(type_refs(p));
                                }
                            }
                        }
                    }
                    refs.retain(|r| !def.params.contains(r));
                }
            }
        }
        let mut seen = BTreeSet::new();
        refs.retain(|r| seen.insert(r.clone()));
        graph.insert(t.name.clone(), (t.text.clone(), refs));
    }
    graph
}

fn signature_refs(f: &PureDef) -> Vec<String> {
    let mut out = Vec::new();
    let types = f.params.iter().map(|(_, t)| t).chain(std::iter::once(&f.return_type));
    for t in types {
        if let Ok(e) = parse_type(MAIN_SOURCE, &t.to_string()) {
            e.named_refs(&mut out);
        }
    }
    out
}

/// Type definitions reachable from the signature of `f`, dependencies first.
/// Library types are left out since the prompt lists the import.
pub fn type_closure(model: &ModelDocument, f: &PureDef) -> String {
    let graph = type_graph(model);
    let library = library_type_names();
    let mut visited = BTreeSet::new();
    let mut blocks = Vec::new();

    fn visit(
        name: &str,
        graph: &HashMap<String, (String, Vec<String>)>,
        library: &BTreeSet<String>,
        visited: &mut BTreeSet<String>,
        blocks: &mut Vec<String>,
    ) {
        if !visited.insert(name.to_string()) {
            return;
        }
        match graph.get(name) {
            Some((text, refs)) => {
                for r in refs {
                    visit(r, graph, library, visited, blocks);
                }
                blocks.push(text.clone());
            }
            None if library.contains(name) => {}
            None => blocks.push(format!("// unresolved type: {name}")),
        }
    }

    for r in signature_refs(f) {
        visit(&r, &graph, library, &mut visited, &mut blocks);
    }
    blocks.join("\n\n")
}

/// Everything the generation and repair templates refer to, for one function.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StubContext {
    pub name: String,
    /// Empty when descriptions are left out.
    pub description: String,
    pub stub: String,
    pub type_definitions: String,
    pub constants: String,
    pub dec: String,
    pub imports: String,
    pub handler_source: String,
    pub io_examples: String,
}

/// Import line followed by the library source, so the names it provides are
/// visible in the prompt.
pub fn imports_block() -> String {
    format!("{LIBRARY_IMPORT}\n\n{}", quintsynth_kernel::library::CW_TYPES.trim_end())
}

impl StubContext {
    pub fn new(
        model: &ModelDocument,
        ir: &ContractIR,
        name: &str,
        description: Option<&str>,
        examples: &[&IoExample],
    ) -> Result<StubContext, PromptError> {
        let def = model.pure_def(name).ok_or_else(|| PromptError::UnknownFunction(name.to_string()))?;
        let constants: Vec<&str> = model.constants.iter().map(|c| c.text.as_str()).collect();
        let source = frontend::extract_handler_source(ir, name)?;
        Ok(StubContext {
            name: name.to_string(),
            description: description.unwrap_or_default().trim().to_string(),
            stub: def.text(),
            type_definitions: type_closure(model, def),
            constants: constants.join("\n"),
            dec: String::new(),
            imports: imports_block(),
            handler_source: format!("```rust\n{}\n```", source.trim_end()),
            io_examples: iospec::render_io_examples(examples),
        })
    }

    pub fn bindings(&self) -> Bindings {
        let pairs = [
            ("NAME", &self.name),
            ("DESCRIPTION", &self.description),
            ("STUB", &self.stub),
            ("QUINT TYPE DEFINITIONS", &self.type_definitions),
            ("CONSTANTS", &self.constants),
            ("DEC", &self.dec),
            ("QUINT IMPORTS", &self.imports),
            ("MESSAGE HANDLERS", &self.handler_source),
            ("MESSAGE HANDLER", &self.handler_source),
            ("IO EXAMPLES", &self.io_examples),
        ];
        pairs.into_iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
    }
}

pub fn generation_prompt(lib: &PromptLibrary, ctx: &StubContext) -> Result<String, PromptError> {
    expand_template(&lib.generate, &select_bindings(&lib.generate, &ctx.bindings()))
}

/// System message, demonstrations, then the filled generation template.
pub fn build_generation_messages(
    lib: &PromptLibrary,
    fewshot: &FewShotSet,
    ctx: &StubContext,
) -> Result<Vec<ChatMessage>, PromptError> {
    let mut out = fewshot.messages();
    out.push(ChatMessage::new(Role::User, generation_prompt(lib, ctx)?)?);
    Ok(out)
}

/// A model output that differs from the expected one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mismatch {
    pub input: String,
    pub actual: String,
    pub expected: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RepairInput {
    Static(String),
    Runtime(String),
    Semantic(Vec<Mismatch>),
}

pub fn render_mismatches(ms: &[Mismatch]) -> String {
    let blocks: Vec<String> = ms
        .iter()
        .map(|m| {
            format!(
                "Input:\n```\n{}\n```\nActual output:\n```\n{}\n```\nExpected output:\n```\n{}\n```",
                m.input, m.actual, m.expected
            )
        })
        .collect();
    blocks.join("\n\n")
}

pub fn build_repair_messages(
    lib: &PromptLibrary,
    input: &RepairInput,
    ctx: &StubContext,
    current: &str,
) -> Result<Vec<ChatMessage>, PromptError> {
    let mut all = ctx.bindings();
    all.insert("QUINT SHORT INSTRUCTIONS".into(), lib.short_instructions.clone());
    all.insert("ORIGINAL IMPLEMENTATION".into(), current.trim_end().to_string());
    let template = match input {
        RepairInput::Static(d) | RepairInput::Runtime(d) => {
            if d.trim().is_empty() {
                return Err(PromptError::NothingToRepair);
            }
            all.insert("QUINT ERRORS".into(), d.trim_end().to_string());
            &lib.repair
        }
        RepairInput::Semantic(ms) => {
            if ms.is_empty() {
                return Err(PromptError::NothingToRepair);
            }
            all.insert("MISMATCHES".into(), render_mismatches(ms));
            &lib.semantic_repair
        }
    };
    let user = expand_template(template, &select_bindings(template, &all))?;
    Ok(vec![lib.system_message(), ChatMessage::new(Role::User, user)?])
}

/// Removes up to `by` leading spaces from every line but the first.
pub fn dedent_tail(text: &str, by: usize) -> String {
    let lines: Vec<&str> = text
        .lines()
        .enumerate()
        .map(|(i, l)| {
            if i == 0 {
                return l;
            }
            let n = l.len() - l.trim_start_matches(' ').len();
            &l[n.min(by)..]
        })
        .collect();
    lines.join("\n")
}

// ---- reference contract for demonstrations ----

/// A contract with a hand-written model, used to build few-shot demonstrations.
#[derive(Debug, Clone)]
pub struct Reference {
    pub name: String,
    pub units: Vec<SourceUnit>,
    pub model_text: String,
    pub demos: Vec<String>,
    pub descriptions: BTreeMap<String, String>,
    pub examples: Vec<IoExample>,
}

/// Optional keys of `contract.toml` beyond name and sources.
#[derive(Debug, Clone, Default, PartialEq, Eq, Deserialize)]
pub struct ProjectMeta {
    #[serde(default)]
    pub demos: Vec<String>,
    #[serde(default)]
    pub descriptions: BTreeMap<String, String>,
}

pub fn project_meta(dir: &Path) -> Result<ProjectMeta, PromptError> {
    let path = dir.join("contract.toml");
    if !path.exists() {
        return Ok(ProjectMeta::default());
    }
    let text = std::fs::read_to_string(&path).map_err(|e| PromptError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    toml::from_str(&text).map_err(|e| PromptError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

macro_rules! bundled {
    ($($file:literal),*) => {
        &[$(($file, include_str!(concat!("../prompts/reference/escrow/", $file)))),*]
    };
}

const BUNDLED_ESCROW: &[(&str, &str)] = bundled!(
    "contract.toml",
    "io.json",
    "model.qnt",
    "src/contract.rs",
    "src/error.rs",
    "src/lib.rs",
    "src/msg.rs",
    "src/state.rs"
);

fn parse_reference_parts(
    manifest: &str,
    io: &str,
    model_text: String,
    units: Vec<SourceUnit>,
) -> Result<Reference, PromptError> {
    let table: toml::Table = manifest.parse().map_err(|e: toml::de::Error| PromptError::Reference(e.to_string()))?;
    let name = table
        .get("name")
        .and_then(|v| v.as_str())
        .unwrap_or("reference")
        .to_string();
    let meta: ProjectMeta = toml::from_str(manifest).map_err(|e| PromptError::Reference(e.to_string()))?;
    let examples = iospec::parse_io_spec(io).map_err(|e| PromptError::Reference(e.to_string()))?;
    Ok(Reference {
        name,
        units,
        model_text,
        demos: meta.demos,
        descriptions: meta.descriptions,
        examples,
    })
}

impl Reference {
    pub fn builtin() -> Reference {
        let get = |f: &str| BUNDLED_ESCROW.iter().find(|(n, _)| *n == f).map(|(_, t)| *t).unwrap();
        let units = BUNDLED_ESCROW
            .iter()
            .filter(|(n, _)| n.ends_with(".rs"))
            .map(|(n, t)| SourceUnit::new(*n, *t))
            .collect();
        parse_reference_parts(get("contract.toml"), get("io.json"), get("model.qnt").to_string(), units)
            .expect("bundled reference parses")
    }

    /// Loads a reference directory: `contract.toml` with `demos`, the
    /// contract sources, `model.qnt` and `io.json`.
    pub fn load(dir: &Path) -> Result<Reference, PromptError> {
        let read = |f: &str| {
            let p = dir.join(f);
            std::fs::read_to_string(&p).map_err(|e| PromptError::Io {
                path: p.display().to_string(),
                message: e.to_string(),
            })
        };
        let (_, units) = frontend::load_project(dir)?;
        parse_reference_parts(&read("contract.toml")?, &read("io.json")?, read("model.qnt")?, units)
    }

    /// Source text of a definition in the hand-written model.
    pub fn answer(&self, name: &str) -> Result<String, PromptError> {
        let module = parse_module(MAIN_SOURCE, &self.model_text)
            .map_err(|d| PromptError::Reference(format!("model.qnt: {}", d.message)))?;
        module
            .decls
            .iter()
            .find_map(|d| match d {
                Decl::Op(op) if op.name == name => Some(op.span),
                _ => None,
            })
            .map(|span| {
                let (start, end) = (span.start as usize, span.end as usize);
                let col = start - self.model_text[..start].rfind('\n').map_or(0, |i| i + 1);
                dedent_tail(&self.model_text[start..end], col)
            })
            .ok_or_else(|| PromptError::Reference(format!("model.qnt has no definition {name}")))
    }

    /// Demonstrations built with the same context extraction as real queries:
    /// the question is the filled generation template for the reference stub
    /// and the answer is the hand-written definition.
    pub fn fewshot(
        &self,
        lib: &PromptLibrary,
        config: &StubConfig,
        examples_per_prompt: usize,
    ) -> Result<FewShotSet, PromptError> {
        let ir = frontend::parse_project(self.units.clone())?;
        let model = stubber::emit_model(&ir, &self.name, config)?;
        let mut demos = Vec::new();
        for name in &self.demos {
            let examples: Vec<&IoExample> = iospec::examples_for(&self.examples, name, ExampleRole::Generation)
                .into_iter()
                .take(examples_per_prompt)
                .collect();
            let ctx = StubContext::new(
                &model,
                &ir,
                name,
                self.descriptions.get(name).map(String::as_str),
                &examples,
            )?;
            let question = ChatMessage::new(Role::User, generation_prompt(lib, &ctx)?)?;
            let answer = ChatMessage::new(Role::Assistant, format!("```quint\n{}\n```", self.answer(name)?))?;
            demos.push((question, answer));
        }
        FewShotSet::new(lib.system_message(), demos)
    }
}

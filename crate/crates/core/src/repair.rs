//! Per-stub synthesis followed by budgeted test and repair.

use std::fmt;

use chrono::{DateTime, Utc};
use quintsynth_kernel::diag::{codes, Severity, EXPR_SOURCE, MAIN_SOURCE};
use quintsynth_kernel::eval::parse_loose_expr;
use quintsynth_kernel::syntax::ast::{Decl, OpDef, Qualifier, TypeExpr};
use quintsynth_kernel::syntax::{parse_decls, parse_type};
use quintsynth_kernel::value::values_equal;
use quintsynth_kernel::{Checker, Diagnostic, Evaluator, Program, SourceMap, Value};
use serde::{Deserialize, Serialize};

use crate::frontend::ContractIR;
use crate::iospec::IoExample;
use crate::llm::{Gateway, GenerationResponse};
use crate::prompt::{
    build_generation_messages, build_repair_messages, dedent_tail, FewShotSet, Mismatch, PromptError,
    PromptLibrary, RepairInput, StubContext,
};
use crate::stubber::ModelDocument;

pub const MODEL_FILE: &str = "model.qnt";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budgets {
    pub static_rounds: u32,
    pub runtime_rounds: u32,
    pub semantic_rounds: u32,
}

impl Default for Budgets {
    fn default() -> Budgets {
        Budgets { static_rounds: 3, runtime_rounds: 3, semantic_rounds: 3 }
    }
}

impl Budgets {
    pub fn total(&self) -> u32 {
        self.static_rounds + self.runtime_rounds + self.semantic_rounds
    }

    fn get_mut(&mut self, c: ErrorCategory) -> &mut u32 {
        match c {
            ErrorCategory::Static => &mut self.static_rounds,
            ErrorCategory::Runtime => &mut self.runtime_rounds,
            ErrorCategory::Semantic => &mut self.semantic_rounds,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorCategory {
    Static,
    Runtime,
    Semantic,
}

impl fmt::Display for ErrorCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ErrorCategory::Static => "static",
            ErrorCategory::Runtime => "runtime",
            ErrorCategory::Semantic => "semantic",
        })
    }
}

/// Repair rounds spent, per category.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundCounts {
    pub static_rounds: u32,
    pub runtime_rounds: u32,
    pub semantic_rounds: u32,
}

impl RoundCounts {
    pub fn total(&self) -> u32 {
        self.static_rounds + self.runtime_rounds + self.semantic_rounds
    }

    fn bump(&mut self, c: ErrorCategory) {
        match c {
            ErrorCategory::Static => self.static_rounds += 1,
            ErrorCategory::Runtime => self.runtime_rounds += 1,
            ErrorCategory::Semantic => self.semantic_rounds += 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StubStatus {
    Success,
    FailedStatic,
    FailedRuntime,
    FailedSemantic,
}

impl StubStatus {
    fn failed(c: ErrorCategory) -> StubStatus {
        match c {
            ErrorCategory::Static => StubStatus::FailedStatic,
            ErrorCategory::Runtime => StubStatus::FailedRuntime,
            ErrorCategory::Semantic => StubStatus::FailedSemantic,
        }
    }
}

/// What was still wrong when the loop stopped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "items", rename_all = "lowercase")]
pub enum Residual {
    None,
    Diagnostics(Vec<String>),
    Mismatches(Vec<Mismatch>),
    Gateway(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseMeta {
    pub fingerprint: String,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StubOutcome {
    pub stub_name: String,
    pub final_code: String,
    pub rounds_used: RoundCounts,
    pub status: StubStatus,
    pub residual: Residual,
    /// Generation plus repair calls. Formatting re-asks are counted apart.
    pub llm_calls: u32,
    pub reask_calls: u32,
    /// Category of every repair round, in order.
    pub history: Vec<ErrorCategory>,
    pub responses: Vec<ResponseMeta>,
}

#[derive(Debug, thiserror::Error)]
pub enum RepairError {
    #[error("example {label}: {message}")]
    InvalidExample { label: String, message: String },
    #[error("no generation examples for {0}")]
    NoExamples(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

// ---- replacing definitions ----

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReplaceError {
    #[error("the model has no definition named {0}")]
    UnknownDef(String),
    #[error("code does not parse: {0}")]
    Parse(String),
    #[error("expected a definition named `{expected}`, found `{found}`")]
    NameMismatch { expected: String, found: String },
}

/// Result of replacing one definition. `warnings` reports signature rewrites.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Replaced {
    pub model: ModelDocument,
    pub warnings: Vec<String>,
}

fn parsed_type(t: &impl fmt::Display) -> Option<TypeExpr> {
    parse_type(MAIN_SOURCE, &t.to_string()).ok()
}

/// Replaces the body of `name` with the body of the single definition in
/// `code`. The signature always stays the one from the model.
pub fn replace_def(model: &ModelDocument, name: &str, code: &str) -> Result<Replaced, ReplaceError> {
    let stub = model.pure_def(name).ok_or_else(|| ReplaceError::UnknownDef(name.to_string()))?;
    let decls = parse_decls(MAIN_SOURCE, code).map_err(|e| ReplaceError::Parse(e.message))?;
    let ops: Vec<&OpDef> = decls
        .iter()
        .filter_map(|d| match d {
            Decl::Op(op) => Some(op),
            _ => None,
        })
        .collect();
    let op = match ops.iter().find(|op| op.name == name) {
        Some(op) => *op,
        None => {
            return Err(ReplaceError::NameMismatch {
                expected: name.to_string(),
                found: ops.first().map(|o| o.name.clone()).unwrap_or_default(),
            })
        }
    };
    let mut warnings = Vec::new();
    if ops.len() > 1 || decls.len() > ops.len() {
        warnings.push(format!("{name}: ignored extra declarations next to the definition"));
    }
    let same_params = op.params.as_ref().is_some_and(|ps| {
        ps.len() == stub.params.len()
            && ps
                .iter()
                .zip(&stub.params)
                .all(|(p, (n, t))| p.name == *n && p.ty.is_some() && p.ty == parsed_type(t))
    });
    let same_ret = op.ret.is_some() && op.ret == parsed_type(&stub.return_type);
    if op.qualifier != Qualifier::PureDef || !same_params || !same_ret {
        let found = &code[op.span.start as usize..op.body.span.start as usize];
        let found = found.trim_end().trim_end_matches('=').trim_end();
        let msg = format!(
            "{name}: signature `{}` rewritten to `{}`",
            found.split_whitespace().collect::<Vec<_>>().join(" "),
            stub.signature()
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let start = op.span.start as usize;
    let col = start - code[..start].rfind('\n').map_or(0, |i| i + 1);
    let body = dedent_tail(&code[op.body.span.start as usize..op.body.span.end as usize], col);
    let mut out = model.clone();
    let def = out.pure_def_mut(name).expect("checked above");
    def.body = body;
    def.is_stub = false;
    Ok(Replaced { model: out, warnings })
}

fn indent_tail(text: &str, by: &str) -> String {
    text.lines()
        .enumerate()
        .map(|(i, l)| if i == 0 || l.is_empty() { l.to_string() } else { format!("{by}{l}") })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Model text with the definition of `name` replaced by `code` verbatim.
pub fn render_with_raw(model: &ModelDocument, name: &str, code: &str) -> String {
    let text = model.render();
    let Some(def) = model.pure_def(name) else {
        return text;
    };
    let rendered = format!("  {}", indent_tail(&def.text(), "  "));
    let raw = format!("  {}", indent_tail(code.trim(), "  "));
    text.replacen(&rendered, &raw, 1)
}

// ---- checking ----

/// An example with its arguments and expected value evaluated.
#[derive(Debug, Clone)]
pub struct EvaluatedExample {
    pub example: IoExample,
    pub args: Vec<Value>,
    pub expected: Value,
}

fn eval_text(ev: &Evaluator, text: &str, id: u16, what: &str) -> Result<Value, Diagnostic> {
    let mut sources = SourceMap::default();
    let e = parse_loose_expr(text, &mut sources, id, what)?;
    ev.eval_expr(&e)
}

/// Evaluates the argument and expected expressions in the scope of `model`.
pub fn evaluate_examples(model: &ModelDocument, examples: &[IoExample]) -> Result<Vec<EvaluatedExample>, RepairError> {
    let text = model.render();
    let program = Program::parse(MODEL_FILE, &text).map_err(|d| RepairError::InvalidExample {
        label: "<model>".into(),
        message: d.to_string(),
    })?;
    let mut ev = Evaluator::new(&program);
    let mut out = Vec::new();
    for ex in examples {
        let bad = |d: Diagnostic| RepairError::InvalidExample { label: ex.label.clone(), message: d.to_string() };
        let mut args = Vec::new();
        for (i, a) in ex.args.iter().enumerate() {
            ev.add_source(EXPR_SOURCE, &ex.label, a);
            args.push(eval_text(&ev, a, EXPR_SOURCE, &format!("{}[{i}]", ex.label)).map_err(bad)?);
        }
        let expected = eval_text(&ev, &ex.expected, EXPR_SOURCE, &ex.label).map_err(bad)?;
        out.push(EvaluatedExample { example: ex.clone(), args, expected });
    }
    Ok(out)
}

fn call_text(name: &str, args: &[Value]) -> String {
    let args: Vec<String> = args.iter().map(|a| format!("  {a}")).collect();
    if args.is_empty() {
        format!("{name}()")
    } else {
        format!("{name}(\n{}\n)", args.join(",\n"))
    }
}

/// Examples whose actual value differs from the expected one. Assumes the
/// program typechecks and no example crashes; a crash counts as a mismatch.
pub fn check_semantics(program: &Program, name: &str, examples: &[EvaluatedExample]) -> Vec<Mismatch> {
    let ev = Evaluator::new(program);
    examples
        .iter()
        .filter_map(|ex| {
            let actual = match ev.eval_pure(name, &ex.args) {
                Ok(v) => v,
                Err(d) => return Some((ex, d.to_string())),
            };
            (!values_equal(&actual, &ex.expected)).then(|| (ex, actual.to_string()))
        })
        .map(|(ex, actual)| Mismatch {
            input: call_text(name, &ex.args),
            actual,
            expected: ex.expected.to_string(),
        })
        .collect()
}

/// Runtime failures on the examples, rendered for a repair prompt.
pub fn runtime_errors(program: &Program, name: &str, examples: &[EvaluatedExample]) -> Vec<String> {
    let ev = Evaluator::new(program);
    examples
        .iter()
        .filter_map(|ex| {
            ev.eval_pure(name, &ex.args)
                .err()
                .map(|d| format!("[{}] {}\n{}", ex.example.label, call_text(name, &ex.args), d.render_runtime()))
        })
        .collect()
}

/// Static diagnostics of the candidate: the checker's errors, or a name
/// mismatch if the returned code defines something else.
fn static_errors(checker: &dyn Checker, text: &str) -> Vec<String> {
    match checker.check(MODEL_FILE, text) {
        Ok(diags) => diags
            .iter()
            .filter(|d| d.severity == Severity::Error)
            .map(|d| d.to_string())
            .collect(),
        Err(e) => vec![format!("{MODEL_FILE} - error: [{}] checker failed: {e}", codes::PARSE)],
    }
}

// ---- the loop ----

/// Shared, read-only inputs of every stub task in one run.
pub struct RepairEnv<'a> {
    pub lib: &'a PromptLibrary,
    pub fewshot: &'a FewShotSet,
    pub gateway: &'a Gateway,
    pub checker: &'a dyn Checker,
    pub budgets: Budgets,
    pub seed: u64,
    pub examples_in_prompt: usize,
}

#[derive(Debug, Clone)]
pub struct StubTask {
    pub name: String,
    pub description: Option<String>,
    /// Generation examples only.
    pub examples: Vec<IoExample>,
}

struct Candidate {
    text: String,
    code: String,
    pre_static: Vec<String>,
}

fn candidate(model: &ModelDocument, name: &str, code: &str) -> Candidate {
    match replace_def(model, name, code) {
        Ok(r) => {
            let code = r.model.pure_def(name).map(|d| d.text()).unwrap_or_else(|| code.to_string());
            Candidate { text: r.model.render(), code, pre_static: Vec::new() }
        }
        Err(ReplaceError::NameMismatch { expected, found }) => Candidate {
            text: model.render(),
            code: code.trim().to_string(),
            pre_static: vec![format!(
                "{MODEL_FILE} - error: [{}] the repaired code must define `{expected}` but defines `{found}`",
                codes::NAME_NOT_FOUND
            )],
        },
        Err(_) => Candidate { text: render_with_raw(model, name, code), code: code.trim().to_string(), pre_static: Vec::new() },
    }
}

enum Verdict {
    Pass,
    Fail(ErrorCategory, RepairInput, Residual),
}

fn judge(env: &RepairEnv, name: &str, c: &Candidate, examples: &[EvaluatedExample]) -> Verdict {
    let mut errs = c.pre_static.clone();
    if errs.is_empty() {
        errs = static_errors(env.checker, &c.text);
    }
    let program = if errs.is_empty() {
        match Program::parse(MODEL_FILE, &c.text) {
            Ok(p) => Some(p),
            Err(d) => {
                errs.push(d.to_string());
                None
            }
        }
    } else {
        None
    };
    let Some(program) = program else {
        let text = errs.join("\n\n");
        return Verdict::Fail(ErrorCategory::Static, RepairInput::Static(text), Residual::Diagnostics(errs));
    };
    let crashes = runtime_errors(&program, name, examples);
    if !crashes.is_empty() {
        let text = crashes.join("\n\n");
        return Verdict::Fail(ErrorCategory::Runtime, RepairInput::Runtime(text), Residual::Diagnostics(crashes));
    }
    let mismatches = check_semantics(&program, name, examples);
    if !mismatches.is_empty() {
        return Verdict::Fail(
            ErrorCategory::Semantic,
            RepairInput::Semantic(mismatches.clone()),
            Residual::Mismatches(mismatches),
        );
    }
    Verdict::Pass
}

fn meta(r: &GenerationResponse) -> ResponseMeta {
    ResponseMeta { fingerprint: r.system_fingerprint.clone(), timestamp: r.timestamp }
}

/// Tests `code` against the examples and repairs it while the firing
/// category has budget left. `outcome` carries the counters of the
/// generation call.
pub fn test_and_repair(
    env: &RepairEnv,
    model: &ModelDocument,
    ctx: &StubContext,
    examples: &[EvaluatedExample],
    code: String,
    mut outcome: StubOutcome,
) -> StubOutcome {
    let name = ctx.name.as_str();
    let mut budgets = env.budgets;
    let mut current = candidate(model, name, &code);
    loop {
        outcome.final_code = current.code.clone();
        let (category, input, residual) = match judge(env, name, &current, examples) {
            Verdict::Pass => {
                outcome.status = StubStatus::Success;
                outcome.residual = Residual::None;
                return outcome;
            }
            Verdict::Fail(c, i, r) => (c, i, r),
        };
        outcome.status = StubStatus::failed(category);
        outcome.residual = residual;
        let left = budgets.get_mut(category);
        if *left == 0 {
            return outcome;
        }
        *left -= 1;
        outcome.rounds_used.bump(category);
        outcome.history.push(category);
        let messages = match build_repair_messages(env.lib, &input, ctx, &current.code) {
            Ok(m) => m,
            Err(e) => {
                outcome.residual = Residual::Gateway(e.to_string());
                return outcome;
            }
        };
        outcome.llm_calls += 1;
        match env.gateway.complete_code(messages, env.seed) {
            Ok(reply) => {
                outcome.reask_calls += u32::from(reply.reasked);
                outcome.responses.push(meta(&reply.response));
                current = candidate(model, name, &reply.code);
            }
            Err(e) => {
                outcome.residual = Residual::Gateway(e.to_string());
                return outcome;
            }
        }
    }
}

/// Generates one stub from its prompt, then tests and repairs it. Only the
/// definition of `task.name` differs between `model` and the checked text.
pub fn synthesize_stub(
    env: &RepairEnv,
    model: &ModelDocument,
    ir: &ContractIR,
    task: &StubTask,
) -> Result<StubOutcome, RepairError> {
    if task.examples.is_empty() {
        return Err(RepairError::NoExamples(task.name.clone()));
    }
    let examples = evaluate_examples(model, &task.examples)?;
    let shown: Vec<&IoExample> = task.examples.iter().take(env.examples_in_prompt).collect();
    let ctx = StubContext::new(model, ir, &task.name, task.description.as_deref(), &shown)?;
    let stub_text = model.pure_def(&task.name).map(|d| d.text()).unwrap_or_default();
    let mut outcome = StubOutcome {
        stub_name: task.name.clone(),
        final_code: stub_text,
        rounds_used: RoundCounts::default(),
        status: StubStatus::FailedStatic,
        residual: Residual::None,
        llm_calls: 1,
        reask_calls: 0,
        history: Vec::new(),
        responses: Vec::new(),
    };
    let messages = build_generation_messages(env.lib, env.fewshot, &ctx)?;
    match env.gateway.complete_code(messages, env.seed) {
        Ok(reply) => {
            outcome.reask_calls += u32::from(reply.reasked);
            outcome.responses.push(meta(&reply.response));
            Ok(test_and_repair(env, model, &ctx, &examples, reply.code, outcome))
        }
        Err(e) => {
            outcome.residual = Residual::Gateway(e.to_string());
            Ok(outcome)
        }
    }
}

/// Runs every task against its own copy of `model`. With `parallel` the
/// tasks run on scoped threads; results keep task order either way.
pub fn synthesize_all(
    env: &RepairEnv,
    model: &ModelDocument,
    ir: &ContractIR,
    tasks: &[StubTask],
    parallel: bool,
) -> Vec<Result<StubOutcome, RepairError>> {
    if !parallel {
        return tasks.iter().map(|t| synthesize_stub(env, model, ir, t)).collect();
    }
    std::thread::scope(|s| {
        let handles: Vec<_> = tasks
            .iter()
            .map(|t| s.spawn(move || synthesize_stub(env, model, ir, t)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("stub task panicked")).collect()
    })
}

/// Puts the final code of every outcome that parses into `model`. Outcomes
/// whose code does not parse keep the stub and get a note.
pub fn merge_outcomes(model: &ModelDocument, outcomes: &[StubOutcome]) -> ModelDocument {
    let mut out = model.clone();
    for o in outcomes {
        match replace_def(&out, &o.stub_name, &o.final_code) {
            Ok(r) if o.status != StubStatus::FailedStatic => out = r.model,
            _ => out
                .notes
                .push(format!("{} keeps its stub body, synthesis ended with {:?}", o.stub_name, o.status)),
        }
    }
    out
}

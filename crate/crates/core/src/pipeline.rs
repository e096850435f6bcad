//! End-to-end commands: stub, generate, adapter, bench, replay, simulate.
//! Each writes its artifacts under an output directory.

use std::path::{Path, PathBuf};

use quintsynth_kernel::{BuiltinChecker, Checker, ExternalChecker, Program};
use serde::{Deserialize, Serialize};

use crate::adapter::{self, AdapterOutcome, BuildCheck};
use crate::frontend::{self, ContractIR, FrontendError};
use crate::iospec::{self, ExampleRole, IoExample};
use crate::llm::{Gateway, LiveBackend, LiveConfig, LlmBackend, LlmError, Recorder, ReplayBackend, ScriptedBackend};
use crate::prompt::{self, PromptError, PromptLibrary, Reference};
use crate::repair::{self, Budgets, RepairEnv, RepairError, StubOutcome, StubStatus, StubTask};
use crate::report::{self, HoldoutResult, RunOutcomes, RunReport};
use crate::stubber::{self, AdapterDocument, ModelDocument, StubConfig, StubError};
use crate::trace::{self, ReplayReport, TraceError};

pub const API_KEY_VAR: &str = "QUINTSYNTH_API_KEY";
pub const MODEL_OUT: &str = "model.qnt";
pub const ADAPTER_OUT: &str = "adapter.txt";
pub const OUTCOMES_OUT: &str = "outcomes.json";
pub const TRANSCRIPT_OUT: &str = "transcripts.jsonl";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TEXT: &str = "report.txt";
pub const TRACES_DIR: &str = "traces";

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Frontend(#[from] FrontendError),
    #[error(transparent)]
    Stub(#[from] StubError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Repair(#[from] RepairError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("{0}")]
    Config(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{0}")]
    Model(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |e| PipelineError::Io { path: path.display().to_string(), message: e.to_string() }
}

fn write(path: &Path, text: &str) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    std::fs::write(path, text).map_err(io_err(path))
}

fn read(path: &Path) -> Result<String, PipelineError> {
    std::fs::read_to_string(path).map_err(io_err(path))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendSpec {
    None,
    /// Recorded transcript, JSON lines.
    Replay { transcript: PathBuf },
    /// JSON array of reply texts, served in order.
    Scripted { replies: PathBuf },
    /// Chat completions endpoint; the token comes from `QUINTSYNTH_API_KEY`.
    Live { endpoint: String },
}

/// Which examples drive generation and which are held out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum HoldoutPolicy {
    /// The first `generation` examples of each function in file order.
    First { generation: usize },
    /// The `role` field of each example.
    Roles,
}

impl Default for HoldoutPolicy {
    fn default() -> HoldoutPolicy {
        HoldoutPolicy::First { generation: 2 }
    }
}

impl HoldoutPolicy {
    pub fn split(&self, all: &[IoExample], function: &str) -> (Vec<IoExample>, Vec<IoExample>) {
        let mine: Vec<&IoExample> = all.iter().filter(|e| e.function == function).collect();
        let (generation, holdout): (Vec<_>, Vec<_>) = match self {
            HoldoutPolicy::First { generation } => {
                let (g, h) = mine.split_at((*generation).min(mine.len()));
                (g.to_vec(), h.to_vec())
            }
            HoldoutPolicy::Roles => mine.into_iter().partition(|e| e.role == ExampleRole::Generation),
        };
        let with = |v: Vec<&IoExample>, role| v.into_iter().map(|e| IoExample { role, ..e.clone() }).collect();
        (with(generation, ExampleRole::Generation), with(holdout, ExampleRole::Holdout))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunConfig {
    pub project: PathBuf,
    /// Defaults to `<project>/io.json`.
    pub io_spec: Option<PathBuf>,
    /// Prompt template overrides; missing files fall back to the builtin ones.
    pub prompts: Option<PathBuf>,
    /// Reference contract for few-shot demonstrations.
    pub reference: Option<PathBuf>,
    pub backend: BackendSpec,
    pub model_id: String,
    pub seed: u64,
    pub budgets: Budgets,
    pub runs: usize,
    pub holdout: HoldoutPolicy,
    pub examples_in_prompt: usize,
    pub out: PathBuf,
    /// Leaves function descriptions out of the prompts.
    pub ablation: bool,
    pub parallel: bool,
    /// External `quint` executable; the builtin kernel otherwise.
    pub quint: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(project: impl Into<PathBuf>, out: impl Into<PathBuf>) -> RunConfig {
        RunConfig {
            project: project.into(),
            io_spec: None,
            prompts: None,
            reference: None,
            backend: BackendSpec::None,
            model_id: "gpt-4o-2024-08-06".into(),
            seed: 42,
            budgets: Budgets::default(),
            runs: 5,
            holdout: HoldoutPolicy::default(),
            examples_in_prompt: 2,
            out: out.into(),
            ablation: false,
            parallel: true,
            quint: None,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.runs == 0 {
            return Err(PipelineError::Config("runs must be at least 1".into()));
        }
        Ok(())
    }

    fn io_spec_path(&self) -> PathBuf {
        self.io_spec.clone().unwrap_or_else(|| self.project.join("io.json"))
    }
}

/// A contract project turned into its model skeleton.
pub struct Project {
    pub name: String,
    pub ir: ContractIR,
    pub model: ModelDocument,
}

pub fn load(project: &Path) -> Result<Project, PipelineError> {
    let (name, units) = frontend::load_project(project)?;
    let ir = frontend::parse_project(units)?;
    let model = stubber::emit_model(&ir, &name, &StubConfig::default())?;
    Ok(Project { name, ir, model })
}

pub struct StubArtifacts {
    pub model: PathBuf,
    pub adapter: PathBuf,
}

/// Writes the model skeleton and the adapter skeleton.
pub fn cmd_stub(project: &Path, out: &Path) -> Result<StubArtifacts, PipelineError> {
    let p = load(project)?;
    let adapter = stubber::emit_adapter_stub(&p.ir, &p.name)?;
    let artifacts = StubArtifacts { model: out.join(MODEL_OUT), adapter: out.join(ADAPTER_OUT) };
    write(&artifacts.model, &p.model.render())?;
    write(&artifacts.adapter, &adapter.test_source)?;
    Ok(artifacts)
}

pub fn backend(spec: &BackendSpec) -> Result<Option<Box<dyn LlmBackend>>, PipelineError> {
    Ok(match spec {
        BackendSpec::None => None,
        BackendSpec::Replay { transcript } => Some(Box::new(ReplayBackend::from_file(transcript)?)),
        BackendSpec::Scripted { replies } => {
            let list: Vec<String> = serde_json::from_str(&read(replies)?)
                .map_err(|e| PipelineError::Config(format!("{}: {e}", replies.display())))?;
            Some(Box::new(ScriptedBackend::new(list)))
        }
        BackendSpec::Live { endpoint } => {
            let api_key = std::env::var(API_KEY_VAR).ok();
            if api_key.is_none() {
                log::warn!("{API_KEY_VAR} is not set; sending requests without a token");
            }
            Some(Box::new(LiveBackend::new(LiveConfig {
                endpoint: endpoint.clone(),
                api_key,
                timeout: std::time::Duration::from_secs(120),
            })?))
        }
    })
}

/// Gateway for `cfg`, recording every exchange to `transcript` (truncated
/// first).
pub fn gateway(cfg: &RunConfig, transcript: Option<&Path>) -> Result<Option<Gateway>, PipelineError> {
    let Some(b) = backend(&cfg.backend)? else {
        return Ok(None);
    };
    let mut g = Gateway::new(b, cfg.model_id.clone());
    if let Some(path) = transcript {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        if path.exists() {
            std::fs::remove_file(path).map_err(io_err(path))?;
        }
        g = g.with_recorder(Recorder::to_file(path)?);
    }
    Ok(Some(g))
}

fn checker(cfg: &RunConfig) -> Box<dyn Checker> {
    match &cfg.quint {
        Some(p) => Box::new(ExternalChecker::new(p)),
        None => Box::new(BuiltinChecker),
    }
}

/// Everything a run needs besides the gateway and the seed.
pub struct Session {
    pub project: Project,
    pub lib: PromptLibrary,
    pub fewshot: prompt::FewShotSet,
    pub examples: Vec<IoExample>,
    pub descriptions: std::collections::BTreeMap<String, String>,
    pub checker: Box<dyn Checker>,
}

impl Session {
    pub fn open(cfg: &RunConfig) -> Result<Session, PipelineError> {
        cfg.validate()?;
        let project = load(&cfg.project)?;
        let lib = match &cfg.prompts {
            Some(dir) => PromptLibrary::load(dir)?,
            None => PromptLibrary::builtin(),
        };
        let reference = match &cfg.reference {
            Some(dir) => Reference::load(dir)?,
            None => Reference::builtin(),
        };
        let fewshot = reference.fewshot(&lib, &StubConfig::default(), cfg.examples_in_prompt)?;
        let io_path = cfg.io_spec_path();
        let examples = if io_path.exists() {
            iospec::load_io_spec(&io_path).map_err(|e| PipelineError::Config(e.to_string()))?
        } else {
            log::warn!("no I/O examples at {}", io_path.display());
            Vec::new()
        };
        let descriptions = if cfg.ablation { Default::default() } else { prompt::project_meta(&cfg.project)?.descriptions };
        Ok(Session { project, lib, fewshot, examples, descriptions, checker: checker(cfg) })
    }

    /// One task per stub with generation examples; the rest are skipped with
    /// a warning.
    pub fn tasks(&self, policy: &HoldoutPolicy) -> (Vec<StubTask>, Vec<String>) {
        let mut tasks = Vec::new();
        let mut skipped = Vec::new();
        for name in self.project.model.stub_names() {
            let (generation, _) = policy.split(&self.examples, &name);
            if generation.is_empty() {
                log::warn!("skipping {name}: no generation examples");
                skipped.push(name);
                continue;
            }
            tasks.push(StubTask { description: self.descriptions.get(&name).cloned(), name, examples: generation });
        }
        (tasks, skipped)
    }

    /// Generates every stub once with `seed` and evaluates the holdout
    /// examples of the successful ones.
    pub fn run(
        &self,
        cfg: &RunConfig,
        gateway: &Gateway,
        run: usize,
        seed: u64,
    ) -> Result<(ModelDocument, RunOutcomes, Vec<String>), PipelineError> {
        let (tasks, skipped) = self.tasks(&cfg.holdout);
        let env = RepairEnv {
            lib: &self.lib,
            fewshot: &self.fewshot,
            gateway,
            checker: self.checker.as_ref(),
            budgets: cfg.budgets,
            seed,
            examples_in_prompt: cfg.examples_in_prompt,
        };
        // Scripted replies are consumed in order, so their tasks run one by one.
        let parallel = cfg.parallel && !matches!(cfg.backend, BackendSpec::Scripted { .. });
        let outcomes = repair::synthesize_all(&env, &self.project.model, &self.project.ir, &tasks, parallel)
            .into_iter()
            .collect::<Result<Vec<_>, _>>()?;
        let model = repair::merge_outcomes(&self.project.model, &outcomes);
        let holdout = self.holdout(cfg, &model, &outcomes)?;
        Ok((model, RunOutcomes { run, seed, outcomes, holdout }, skipped))
    }

    fn holdout(
        &self,
        cfg: &RunConfig,
        model: &ModelDocument,
        outcomes: &[StubOutcome],
    ) -> Result<Vec<HoldoutResult>, PipelineError> {
        let succeeded: Vec<&str> = outcomes
            .iter()
            .filter(|o| o.status == StubStatus::Success)
            .map(|o| o.stub_name.as_str())
            .collect();
        if succeeded.is_empty() {
            return Ok(Vec::new());
        }
        let program = Program::parse(repair::MODEL_FILE, &model.render())
            .map_err(|d| PipelineError::Model(d.to_string()))?;
        let mut results = Vec::new();
        for name in succeeded {
            let (_, held) = cfg.holdout.split(&self.examples, name);
            for ex in held {
                let passed = match repair::evaluate_examples(model, std::slice::from_ref(&ex)) {
                    Ok(ev) => repair::check_semantics(&program, name, &ev).is_empty(),
                    Err(e) => {
                        log::warn!("holdout example {} of {name}: {e}", ex.label);
                        false
                    }
                };
                results.push(HoldoutResult { function: name.to_string(), label: ex.label.clone(), passed });
            }
        }
        Ok(results)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateSummary {
    pub contract: String,
    pub seed: u64,
    pub skipped: Vec<String>,
    pub outcomes: Vec<StubOutcome>,
    pub holdout: Vec<HoldoutResult>,
}

impl GenerateSummary {
    pub fn all_succeeded(&self) -> bool {
        self.outcomes.iter().all(|o| o.status == StubStatus::Success)
    }
}

/// Synthesizes every stub once with `cfg.seed`; writes the model, the
/// outcomes and the transcript.
pub fn cmd_generate(cfg: &RunConfig) -> Result<GenerateSummary, PipelineError> {
    let session = Session::open(cfg)?;
    let gateway = gateway(cfg, Some(&cfg.out.join(TRANSCRIPT_OUT)))?
        .ok_or_else(|| PipelineError::Config("generate needs an LLM backend".into()))?;
    let (model, run, skipped) = session.run(cfg, &gateway, 0, cfg.seed)?;
    let summary = GenerateSummary {
        contract: session.project.name.clone(),
        seed: cfg.seed,
        skipped,
        outcomes: run.outcomes,
        holdout: run.holdout,
    };
    write(&cfg.out.join(MODEL_OUT), &model.render())?;
    write(&cfg.out.join(OUTCOMES_OUT), &to_json(&summary))?;
    Ok(summary)
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializes");
    s.push('\n');
    s
}

/// Runs the pipeline `cfg.runs` times with seeds `seed`, `seed + 1`, ... and
/// aggregates the outcomes.
pub fn cmd_bench(cfg: &RunConfig) -> Result<RunReport, PipelineError> {
    let session = Session::open(cfg)?;
    let gateway = gateway(cfg, Some(&cfg.out.join(TRANSCRIPT_OUT)))?
        .ok_or_else(|| PipelineError::Config("bench needs an LLM backend".into()))?;
    let mut runs = Vec::new();
    for i in 0..cfg.runs {
        let seed = cfg.seed.wrapping_add(i as u64);
        let (model, run, _) = session.run(cfg, &gateway, i, seed)?;
        write(&cfg.out.join(format!("run-{i}")).join(MODEL_OUT), &model.render())?;
        write(&cfg.out.join(format!("run-{i}")).join(OUTCOMES_OUT), &to_json(&run))?;
        runs.push(run);
    }
    let report = report::aggregate(&session.project.name, &runs);
    write(&cfg.out.join(REPORT_JSON), &to_json(&report))?;
    write(&cfg.out.join(REPORT_TEXT), &report::render_text(&report))?;
    Ok(report)
}

/// Synthesizes the adapter's state comparison. Without a backend the
/// adapter keeps its mechanical comparison.
pub fn cmd_adapter(
    cfg: &RunConfig,
    check: &dyn BuildCheck,
    budget: u32,
) -> Result<(AdapterDocument, AdapterOutcome), PipelineError> {
    let p = load(&cfg.project)?;
    let lib = match &cfg.prompts {
        Some(dir) => PromptLibrary::load(dir)?,
        None => PromptLibrary::builtin(),
    };
    let doc = stubber::emit_adapter_stub(&p.ir, &p.name)?;
    let gateway = gateway(cfg, Some(&cfg.out.join(TRANSCRIPT_OUT)))?;
    let (doc, outcome) = adapter::synthesize_adapter(&lib, gateway.as_ref(), check, &doc, &p.ir, &p.name, budget, cfg.seed)?;
    write(&cfg.out.join(ADAPTER_OUT), &doc.test_source)?;
    Ok((doc, outcome))
}

fn parse_model(path: &Path) -> Result<Program, PipelineError> {
    let text = read(path)?;
    Program::parse(&path.display().to_string(), &text).map_err(|d| PipelineError::Model(d.to_string()))
}

/// Simulates `steps` steps and writes `traces/trace-<seed>.json`.
pub fn cmd_simulate(model: &Path, steps: usize, seed: u64, out: &Path) -> Result<PathBuf, PipelineError> {
    let program = parse_model(model)?;
    let t = trace::simulate(&program, steps, seed)?;
    let path = out.join(TRACES_DIR).join(format!("trace-{seed}.json"));
    write(&path, &to_json(&trace::to_itf(&t, &model.display().to_string())))?;
    Ok(path)
}

/// Replays a trace file against a model.
pub fn cmd_replay(model: &Path, trace_file: &Path) -> Result<ReplayReport, PipelineError> {
    let program = parse_model(model)?;
    let json: serde_json::Value = serde_json::from_str(&read(trace_file)?)
        .map_err(|e| TraceError::Schema(format!("{}: {e}", trace_file.display())))?;
    let t = trace::parse_itf(&program, &json)?;
    let config = StubConfig::default();
    Ok(trace::replay(&program, &t, &config.contract_address, &config.denoms[0]))
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use quintsynth_core::adapter::{AdapterStatus, BuildCheck, CommandBuildCheck, MockBuildCheck};
use quintsynth_core::pipeline::{self, BackendSpec, HoldoutPolicy, RunConfig};
use serde::Deserialize;

#[derive(Parser)]
#[command(name = "quintsynth", version, about = "Turn a CosmWasm contract into a Quint model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the model skeleton and the adapter skeleton.
    Stub {
        project: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Fill every stub with an LLM and repair it against the I/O examples.
    Generate(RunArgs),
    /// Synthesize the adapter's state comparison.
    Adapter {
        #[command(flatten)]
        run: RunArgs,
        /// Build check command run in --build-dir after writing the adapter
        /// to --build-target. Without it the adapter is accepted as is.
        #[arg(long)]
        build_cmd: Option<String>,
        #[arg(long)]
        build_dir: Option<PathBuf>,
        #[arg(long)]
        build_target: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        budget: u32,
    },
    /// Repeat generation over several seeds and report repair rounds and holdout pass rates.
    Bench(RunArgs),
    /// Replay an ITF trace against a model.
    Replay { model: PathBuf, trace: PathBuf },
    /// Simulate a model and write the trace.
    Simulate {
        model: PathBuf,
        #[arg(long, default_value_t = 20)]
        steps: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
enum BackendKind {
    None,
    Replay,
    Scripted,
    Live,
}

#[derive(Args, Default)]
struct RunArgs {
    /// TOML file with any of the options below; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    project: Option<PathBuf>,
    #[arg(long)]
    io_spec: Option<PathBuf>,
    #[arg(long)]
    prompts: Option<PathBuf>,
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long, value_enum)]
    backend: Option<BackendKind>,
    /// Transcript to replay.
    #[arg(long)]
    transcript: Option<PathBuf>,
    /// JSON array of replies for the scripted backend.
    #[arg(long)]
    replies: Option<PathBuf>,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model_id: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    static_budget: Option<u32>,
    #[arg(long)]
    runtime_budget: Option<u32>,
    #[arg(long)]
    semantic_budget: Option<u32>,
    /// Number of examples per function used for generation; the rest are held out.
    #[arg(long)]
    generation_examples: Option<usize>,
    /// Split examples by their `role` field instead.
    #[arg(long)]
    use_roles: bool,
    #[arg(long)]
    examples_in_prompt: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Leave function descriptions out of the prompts.
    #[arg(long)]
    ablation: bool,
    #[arg(long)]
    sequential: bool,
    /// Typecheck with an external `quint` instead of the builtin kernel.
    #[arg(long)]
    quint: Option<PathBuf>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    project: Option<PathBuf>,
    io_spec: Option<PathBuf>,
    prompts: Option<PathBuf>,
    reference: Option<PathBuf>,
    backend: Option<BackendKind>,
    transcript: Option<PathBuf>,
    replies: Option<PathBuf>,
    endpoint: Option<String>,
    model_id: Option<String>,
    seed: Option<u64>,
    runs: Option<usize>,
    static_budget: Option<u32>,
    runtime_budget: Option<u32>,
    semantic_budget: Option<u32>,
    generation_examples: Option<usize>,
    use_roles: Option<bool>,
    examples_in_prompt: Option<usize>,
    out: Option<PathBuf>,
    ablation: Option<bool>,
    sequential: Option<bool>,
    quint: Option<PathBuf>,
}

/// Paths in a config file are relative to the file.
fn rel(base: &Path, p: Option<PathBuf>) -> Option<PathBuf> {
    p.map(|p| if p.is_absolute() { p } else { base.join(p) })
}

fn run_config(a: RunArgs) -> Result<RunConfig> {
    let mut f = FileConfig::default();
    if let Some(path) = &a.config {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        f = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut f.project, &mut f.io_spec, &mut f.prompts, &mut f.reference, &mut f.transcript, &mut f.replies, &mut f.out, &mut f.quint] {
            *p = rel(base, p.take());
        }
    }
    let Some(project) = a.project.or(f.project) else {
        bail!("no project given (--project or `project` in the config file)");
    };
    let out = a.out.or(f.out).unwrap_or_else(|| PathBuf::from("out"));
    let mut cfg = RunConfig::new(project, out);
    cfg.io_spec = a.io_spec.or(f.io_spec);
    cfg.prompts = a.prompts.or(f.prompts);
    cfg.reference = a.reference.or(f.reference);
    cfg.quint = a.quint.or(f.quint);
    if let Some(m) = a.model_id.or(f.model_id) {
        cfg.model_id = m;
    }
    if let Some(s) = a.seed.or(f.seed) {
        cfg.seed = s;
    }
    if let Some(r) = a.runs.or(f.runs) {
        cfg.runs = r;
    }
    if let Some(b) = a.static_budget.or(f.static_budget) {
        cfg.budgets.static_rounds = b;
    }
    if let Some(b) = a.runtime_budget.or(f.runtime_budget) {
        cfg.budgets.runtime_rounds = b;
    }
    if let Some(b) = a.semantic_budget.or(f.semantic_budget) {
        cfg.budgets.semantic_rounds = b;
    }
    if let Some(n) = a.examples_in_prompt.or(f.examples_in_prompt) {
        cfg.examples_in_prompt = n;
    }
    if a.use_roles || f.use_roles == Some(true) {
        cfg.holdout = HoldoutPolicy::Roles;
    } else if let Some(n) = a.generation_examples.or(f.generation_examples) {
        cfg.holdout = HoldoutPolicy::First { generation: n };
    }
    cfg.ablation = a.ablation || f.ablation == Some(true);
    cfg.parallel = !(a.sequential || f.sequential == Some(true));
    let transcript = a.transcript.or(f.transcript);
    let replies = a.replies.or(f.replies);
    let endpoint = a.endpoint.or(f.endpoint);
    let kind = a.backend.or(f.backend).unwrap_or(if transcript.is_some() {
        BackendKind::Replay
    } else if replies.is_some() {
        BackendKind::Scripted
    } else if endpoint.is_some() {
        BackendKind::Live
    } else {
        BackendKind::None
    });
    cfg.backend = match kind {
        BackendKind::None => BackendSpec::None,
        BackendKind::Replay => BackendSpec::Replay { transcript: transcript.context("replay backend needs --transcript")? },
        BackendKind::Scripted => BackendSpec::Scripted { replies: replies.context("scripted backend needs --replies")? },
        BackendKind::Live => BackendSpec::Live {
            endpoint: endpoint.unwrap_or_else(|| "https://api.openai.com/v1/chat/completions".into()),
        },
    };
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Stub { project, out } => {
            let a = pipeline::cmd_stub(&project, &out)?;
            println!("wrote {}", a.model.display());
            println!("wrote {}", a.adapter.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Generate(args) => {
            let cfg = run_config(args)?;
            let s = pipeline::cmd_generate(&cfg)?;
            for o in &s.outcomes {
                let r = o.rounds_used;
                println!(
                    "{:<24} {:?}  rounds static={} runtime={} semantic={}  llm calls={}",
                    o.stub_name, o.status, r.static_rounds, r.runtime_rounds, r.semantic_rounds, o.llm_calls
                );
            }
            for name in &s.skipped {
                println!("{name:<24} skipped (no I/O examples)");
            }
            let passed = s.holdout.iter().filter(|h| h.passed).count();
            println!("holdout: {passed}/{} passed", s.holdout.len());
            println!("wrote {}", cfg.out.display());
            Ok(if s.all_succeeded() { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
        Command::Adapter { run, build_cmd, build_dir, build_target, budget } => {
            let cfg = run_config(run)?;
            let check: Box<dyn BuildCheck> = match build_cmd {
                Some(cmd) => {
                    let mut words = cmd.split_whitespace().map(String::from);
                    let program = words.next().context("empty --build-cmd")?;
                    let workdir = build_dir.unwrap_or_else(|| cfg.project.clone());
                    Box::new(CommandBuildCheck {
                        target: build_target.unwrap_or_else(|| workdir.join("src").join("adapter_test.rs")),
                        program,
                        args: words.collect(),
                        workdir,
                    })
                }
                None => Box::new(MockBuildCheck::passing()),
            };
            let (_, o) = pipeline::cmd_adapter(&cfg, check.as_ref(), budget)?;
            println!("compare_state: {:?} after {} repair rounds, {} llm calls", o.status, o.static_rounds, o.llm_calls);
            for r in &o.residual {
                println!("  {r}");
            }
            println!("wrote {}", cfg.out.join(pipeline::ADAPTER_OUT).display());
            Ok(if o.status == AdapterStatus::Failed { ExitCode::from(2) } else { ExitCode::SUCCESS })
        }
        Command::Bench(args) => {
            let cfg = run_config(args)?;
            let report = pipeline::cmd_bench(&cfg)?;
            print!("{}", quintsynth_core::report::render_text(&report));
            Ok(ExitCode::SUCCESS)
        }
        Command::Replay { model, trace } => {
            let r = pipeline::cmd_replay(&model, &trace)?;
            for line in &r.log {
                println!("{line}");
            }
            match r.outcome {
                Ok(()) => {
                    println!("trace is consistent with the model ({} steps)", r.steps);
                    Ok(ExitCode::SUCCESS)
                }
                Err(e) => {
                    println!("{e}");
                    Ok(ExitCode::from(1))
                }
            }
        }
        Command::Simulate { model, steps, seed, out } => {
            let path = pipeline::cmd_simulate(&model, steps, seed, &out)?;
            println!("wrote {}", path.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

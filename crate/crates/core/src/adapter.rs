//! LLM synthesis of the adapter's `compare_state` function, repaired against
//! an external build check.

use std::collections::VecDeque;
use std::path::PathBuf;
use std::process::Command;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::frontend::ContractIR;
use crate::llm::Gateway;
use crate::prompt::{expand_template, Bindings, ChatMessage, PromptError, PromptLibrary, Role};
use crate::stubber::AdapterDocument;

/// Builds and runs an adapter. An empty list means it passed.
pub trait BuildCheck: Send + Sync {
    fn check(&self, adapter: &AdapterDocument) -> Result<Vec<String>, String>;
}

/// Returns scripted diagnostics in order, then passes.
pub struct MockBuildCheck {
    results: Mutex<VecDeque<Vec<String>>>,
}

impl MockBuildCheck {
    pub fn new(results: Vec<Vec<String>>) -> MockBuildCheck {
        MockBuildCheck { results: Mutex::new(results.into()) }
    }

    pub fn passing() -> MockBuildCheck {
        MockBuildCheck::new(Vec::new())
    }
}

impl BuildCheck for MockBuildCheck {
    fn check(&self, _adapter: &AdapterDocument) -> Result<Vec<String>, String> {
        Ok(self.results.lock().unwrap().pop_front().unwrap_or_default())
    }
}

/// Writes the adapter to `target` and runs `program args..` (for example
/// `cargo test` in the contract crate). A nonzero exit fails the check with
/// the lines of output that mention an error.
pub struct CommandBuildCheck {
    pub target: PathBuf,
    pub program: String,
    pub args: Vec<String>,
    pub workdir: PathBuf,
}

impl BuildCheck for CommandBuildCheck {
    fn check(&self, adapter: &AdapterDocument) -> Result<Vec<String>, String> {
        std::fs::write(&self.target, &adapter.test_source).map_err(|e| format!("{}: {e}", self.target.display()))?;
        let out = Command::new(&self.program)
            .args(&self.args)
            .current_dir(&self.workdir)
            .output()
            .map_err(|e| format!("{}: {e}", self.program))?;
        if out.status.success() {
            return Ok(Vec::new());
        }
        let text = format!("{}{}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr));
        let errors: Vec<String> = text
            .lines()
            .filter(|l| l.contains("error") || l.contains("panicked"))
            .map(str::to_string)
            .collect();
        Ok(if errors.is_empty() { vec![format!("{} exited with {}", self.program, out.status)] } else { errors })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AdapterStatus {
    Success,
    Failed,
    /// No backend configured; the mechanical comparison is kept.
    StubOnly,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdapterOutcome {
    pub compare_state: String,
    pub static_rounds: u32,
    pub llm_calls: u32,
    pub status: AdapterStatus,
    pub residual: Vec<String>,
}

/// The trace structs module of the adapter.
pub fn trace_structs(doc: &AdapterDocument) -> &str {
    let text = &doc.test_source;
    let start = text.find("pub mod state_structs").unwrap_or(0);
    let end = text[start..].find("#[cfg(test)]").map_or(text.len(), |i| start + i);
    text[start..end].trim_end()
}

pub fn contract_source(ir: &ContractIR) -> String {
    ir.sources
        .iter()
        .map(|u| format!("// {}\n{}", u.path, u.text.trim_end()))
        .collect::<Vec<_>>()
        .join("\n\n")
}

fn reindent(doc: &AdapterDocument, function: &str) -> String {
    let start = doc.compare_state_span.0;
    let col = start - doc.test_source[..start].rfind('\n').map_or(0, |i| i + 1);
    let pad = " ".repeat(col);
    function
        .trim()
        .lines()
        .enumerate()
        .map(|(i, l)| if i == 0 || l.is_empty() { l.to_string() } else { format!("{pad}{l}") })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Asks for a `compare_state` and repairs it with build errors for at most
/// `budget` rounds. Without a gateway the stub comparison is kept.
pub fn synthesize_adapter(
    lib: &PromptLibrary,
    gateway: Option<&Gateway>,
    check: &dyn BuildCheck,
    doc: &AdapterDocument,
    ir: &ContractIR,
    contract: &str,
    budget: u32,
    seed: u64,
) -> Result<(AdapterDocument, AdapterOutcome), PromptError> {
    let mut outcome = AdapterOutcome {
        compare_state: doc.compare_state().to_string(),
        static_rounds: 0,
        llm_calls: 0,
        status: AdapterStatus::StubOnly,
        residual: Vec::new(),
    };
    let Some(gateway) = gateway else {
        return Ok((doc.clone(), outcome));
    };
    let mut b = Bindings::new();
    b.insert("CONTRACT".into(), contract.to_string());
    b.insert("TRACE STRUCTS".into(), trace_structs(doc).to_string());
    b.insert("CONTRACT SOURCE".into(), contract_source(ir));
    b.insert("COMPARE STATE".into(), doc.compare_state().to_string());
    let pick = |t: &crate::prompt::Template, b: &Bindings| -> Bindings {
        b.iter().filter(|(k, _)| t.required_macros.contains(*k)).map(|(k, v)| (k.clone(), v.clone())).collect()
    };
    let mut user = expand_template(&lib.adapter_generate, &pick(&lib.adapter_generate, &b))?;
    let mut current = doc.clone();
    let mut rounds_left = budget;
    loop {
        let messages = vec![lib.system_message(), ChatMessage::new(Role::User, user)?];
        outcome.llm_calls += 1;
        let reply = match gateway.complete_code(messages, seed) {
            Ok(r) => r,
            Err(e) => {
                outcome.status = AdapterStatus::Failed;
                outcome.residual = vec![e.to_string()];
                return Ok((current, outcome));
            }
        };
        current = doc.with_compare_state(&reindent(doc, &reply.code));
        outcome.compare_state = current.compare_state().to_string();
        let errors = match check.check(&current) {
            Ok(e) => e,
            Err(e) => vec![e],
        };
        if errors.is_empty() {
            outcome.status = AdapterStatus::Success;
            outcome.residual.clear();
            return Ok((current, outcome));
        }
        outcome.status = AdapterStatus::Failed;
        outcome.residual = errors.clone();
        if rounds_left == 0 {
            return Ok((current, outcome));
        }
        rounds_left -= 1;
        outcome.static_rounds += 1;
        b.insert("COMPARE STATE".into(), current.compare_state().to_string());
        b.insert("BUILD ERRORS".into(), errors.join("\n"));
        user = expand_template(&lib.adapter_repair, &pick(&lib.adapter_repair, &b))?;
    }
}

//! Static checking front door: the builtin typechecker or an external tool.

use std::io;
use std::path::PathBuf;
use std::process::Command;

use crate::diag::{Diagnostic, Location};
use crate::program::Program;
use crate::types::typecheck;

pub trait Checker: Send + Sync {
    /// Parses and typechecks `text`. An empty list means the model is well formed.
    fn check(&self, file_name: &str, text: &str) -> io::Result<Vec<Diagnostic>>;
}

/// Parses and typechecks in process. Returns the parsed program when parsing succeeded.
pub fn analyze(file_name: &str, text: &str) -> (Option<Program>, Vec<Diagnostic>) {
    match Program::parse(file_name, text) {
        Err(d) => (None, vec![d]),
        Ok(p) => {
            let mut diags = p.missing_imports.clone();
            diags.extend(typecheck(&p).diagnostics);
            (Some(p), diags)
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BuiltinChecker;

impl Checker for BuiltinChecker {
    fn check(&self, file_name: &str, text: &str) -> io::Result<Vec<Diagnostic>> {
        Ok(analyze(file_name, text).1)
    }
}

/// Runs an external executable as `<program> <args..> <file>` and parses the
/// diagnostics it prints on stdout and stderr.
#[derive(Debug, Clone)]
pub struct ExternalChecker {
    pub program: PathBuf,
    pub args: Vec<String>,
}

impl ExternalChecker {
    pub fn new(program: impl Into<PathBuf>) -> ExternalChecker {
        ExternalChecker {
            program: program.into(),
            args: vec!["typecheck".to_string()],
        }
    }
}

impl Checker for ExternalChecker {
    fn check(&self, file_name: &str, text: &str) -> io::Result<Vec<Diagnostic>> {
        let dir = std::env::temp_dir().join(format!(
            "quintsynth-check-{}-{}",
            std::process::id(),
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_nanos())
                .unwrap_or(0)
        ));
        std::fs::create_dir_all(&dir)?;
        let base = std::path::Path::new(file_name)
            .file_name()
            .map(|n| n.to_owned())
            .unwrap_or_else(|| "model.qnt".into());
        let path = dir.join(base);
        std::fs::write(&path, text)?;
        let out = Command::new(&self.program).args(&self.args).arg(&path).output();
        let _ = std::fs::remove_dir_all(&dir);
        let out = out?;
        let mut combined = String::from_utf8_lossy(&out.stdout).into_owned();
        combined.push('\n');
        combined.push_str(&String::from_utf8_lossy(&out.stderr));
        let mut diags = parse_tool_output(&combined, file_name);
        if diags.is_empty() && !out.status.success() {
            let mut d = Diagnostic::error(crate::diag::codes::RUNTIME_INTERNAL, combined.trim().to_string());
            d.location.file = file_name.to_string();
            diags.push(d);
        }
        Ok(diags)
    }
}

/// Extracts diagnostics from checker output in either of the two rendered forms
/// (`file:line:col - error: [CODE] msg` and `runtime error: error: [CODE] msg`),
/// keeping the lines that follow each header as its excerpt.
pub fn parse_tool_output(output: &str, file_name: &str) -> Vec<Diagnostic> {
    let mut diags: Vec<Diagnostic> = Vec::new();
    for line in output.lines() {
        if let Some(d) = parse_header(line, file_name) {
            diags.push(d);
        } else if let Some(last) = diags.last_mut() {
            if line.trim().is_empty() || last.excerpt.lines().count() >= 2 {
                continue;
            }
            if !last.excerpt.is_empty() {
                last.excerpt.push('\n');
            }
            last.excerpt.push_str(line);
        }
    }
    diags
}

fn parse_header(line: &str, file_name: &str) -> Option<Diagnostic> {
    let (loc, rest) = if let Some(rest) = line.strip_prefix("runtime error: error: ") {
        (None, rest)
    } else {
        let idx = line.find(" - error: ")?;
        (Some(&line[..idx]), &line[idx + " - error: ".len()..])
    };
    let rest = rest.strip_prefix('[')?;
    let close = rest.find(']')?;
    let code = &rest[..close];
    if !code.starts_with("QNT") {
        return None;
    }
    let mut d = Diagnostic::error(code, rest[close + 1..].trim());
    d.location = match loc {
        Some(l) => parse_location(l).unwrap_or(Location {
            file: l.to_string(),
            line: 0,
            col: 0,
        }),
        None => Location {
            file: file_name.to_string(),
            line: 0,
            col: 0,
        },
    };
    Some(d)
}

fn parse_location(s: &str) -> Option<Location> {
    let mut parts = s.rsplitn(3, ':');
    let col = parts.next()?.trim().parse().ok()?;
    let line = parts.next()?.trim().parse().ok()?;
    let file = parts.next()?.trim().to_string();
    Some(Location { file, line, col })
}

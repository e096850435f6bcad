//! Source bookkeeping and diagnostics.
//!
//! Diagnostic codes follow a fixed taxonomy: `QNT000` for parse errors,
//! `QNT0xx` for name resolution and typing, `QNT5xx` for runtime failures.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

/// Identifies the text a span points into.
pub type SourceId = u16;

/// The main module being analyzed.
pub const MAIN_SOURCE: SourceId = 0;
/// Expressions parsed from I/O specifications and other loose inputs.
pub const EXPR_SOURCE: SourceId = 2000;
/// First id handed out to library modules.
pub const LIBRARY_SOURCE_BASE: SourceId = 1000;

#[derive(Debug, Clone, Copy, Default, Eq, Hash)]
pub struct Span {
    pub src: SourceId,
    pub start: u32,
    pub end: u32,
}

// Spans never participate in structural AST comparison.
impl PartialEq for Span {
    fn eq(&self, _other: &Span) -> bool {
        true
    }
}

impl Span {
    pub fn new(src: SourceId, start: usize, end: usize) -> Span {
        Span {
            src,
            start: start as u32,
            end: end as u32,
        }
    }

    pub fn to(self, other: Span) -> Span {
        Span {
            src: self.src,
            start: self.start.min(other.start),
            end: self.end.max(other.end),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SourceFile {
    pub name: String,
    pub text: String,
    line_starts: Vec<usize>,
}

impl SourceFile {
    pub fn new(name: impl Into<String>, text: impl Into<String>) -> SourceFile {
        let text = text.into();
        let mut line_starts = vec![0];
        for (i, b) in text.bytes().enumerate() {
            if b == b'\n' {
                line_starts.push(i + 1);
            }
        }
        SourceFile {
            name: name.into(),
            text,
            line_starts,
        }
    }

    /// 1-based line and column of a byte offset.
    pub fn line_col(&self, offset: usize) -> (usize, usize) {
        let offset = offset.min(self.text.len());
        let line = match self.line_starts.binary_search(&offset) {
            Ok(l) => l,
            Err(l) => l - 1,
        };
        let col = self.text[self.line_starts[line]..offset].chars().count() + 1;
        (line + 1, col)
    }

    pub fn line_text(&self, line: usize) -> &str {
        let start = self.line_starts[line - 1];
        let end = self
            .line_starts
            .get(line)
            .map(|e| e - 1)
            .unwrap_or(self.text.len());
        self.text[start..end].trim_end_matches('\r')
    }

    pub fn slice(&self, span: Span) -> &str {
        let s = (span.start as usize).min(self.text.len());
        let e = (span.end as usize).min(self.text.len()).max(s);
        &self.text[s..e]
    }
}

/// Maps source ids to their text so spans can be rendered.
#[derive(Debug, Clone, Default)]
pub struct SourceMap {
    files: BTreeMap<SourceId, Arc<SourceFile>>,
}

impl SourceMap {
    pub fn insert(&mut self, id: SourceId, file: Arc<SourceFile>) {
        self.files.insert(id, file);
    }

    pub fn get(&self, id: SourceId) -> Option<&Arc<SourceFile>> {
        self.files.get(&id)
    }

    pub fn locate(&self, span: Span) -> Location {
        match self.files.get(&span.src) {
            Some(file) => {
                let (line, col) = file.line_col(span.start as usize);
                Location {
                    file: file.name.clone(),
                    line,
                    col,
                }
            }
            None => Location::default(),
        }
    }

    /// The offending snippet: the source line plus a caret marker under the span.
    pub fn excerpt(&self, span: Span) -> String {
        let Some(file) = self.files.get(&span.src) else {
            return String::new();
        };
        let (line, col) = file.line_col(span.start as usize);
        let text = file.line_text(line);
        let (end_line, end_col) = file.line_col(span.end as usize);
        let width = if end_line == line {
            end_col.saturating_sub(col).max(1)
        } else {
            text.chars().count().saturating_sub(col - 1).max(1)
        };
        format!("{}\n{}{}", text, " ".repeat(col - 1), "^".repeat(width))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Location {
    pub file: String,
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.file, self.line, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub code: String,
    pub message: String,
    pub location: Location,
    /// Source line with a caret marker under the offending code.
    pub excerpt: String,
    pub severity: Severity,
}

impl Diagnostic {
    pub fn error(code: &str, message: impl Into<String>) -> Diagnostic {
        Diagnostic {
            code: code.to_string(),
            message: message.into(),
            location: Location::default(),
            excerpt: String::new(),
            severity: Severity::Error,
        }
    }

    pub fn at(mut self, span: Span, sources: &SourceMap) -> Diagnostic {
        self.location = sources.locate(span);
        self.excerpt = sources.excerpt(span);
        self
    }

    pub fn is_parse_error(&self) -> bool {
        self.code == codes::PARSE
    }

    pub fn is_runtime(&self) -> bool {
        self.code.starts_with("QNT5")
    }

    /// Type checker style rendering:
    ///
    /// ```text
    /// model.qnt:86:20 - error: [QNT000] mismatched input 'true' expecting {'_', LOW_ID, CAP_ID}
    /// 86:    | Ok(true) => ...
    ///             ^^^^
    /// ```
    pub fn render(&self) -> String {
        let mut out = format!(
            "{} - error: [{}] {}",
            self.location, self.code, self.message
        );
        if !self.excerpt.is_empty() {
            let prefix = format!("{}: ", self.location.line);
            let mut lines = self.excerpt.lines();
            if let Some(src) = lines.next() {
                out.push('\n');
                out.push_str(&prefix);
                out.push_str(src);
            }
            if let Some(marker) = lines.next() {
                out.push('\n');
                out.push_str(&" ".repeat(prefix.len()));
                out.push_str(marker);
            }
        }
        out
    }

    /// Simulator style rendering used for runtime failures:
    ///
    /// ```text
    /// runtime error: error: [QNT507] Called 'get' with a non-existing key
    ///  val user_balance = state.balances.get(info.sender).amount
    ///                     ^^^^^^^^^^^^^^^^
    /// ```
    pub fn render_runtime(&self) -> String {
        let mut out = format!("runtime error: error: [{}] {}", self.code, self.message);
        let mut lines = self.excerpt.lines();
        if let (Some(src), Some(marker)) = (lines.next(), lines.next()) {
            let indent = src.len() - src.trim_start().len();
            let trimmed_marker = marker.get(indent..).unwrap_or(marker.trim_start());
            out.push_str("\n ");
            out.push_str(src.trim_start());
            out.push_str("\n ");
            out.push_str(trimmed_marker);
        }
        out
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_runtime() {
            f.write_str(&self.render_runtime())
        } else {
            f.write_str(&self.render())
        }
    }
}

pub fn render_all(diags: &[Diagnostic]) -> String {
    diags
        .iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join("\n\n")
}

pub mod codes {
    pub const PARSE: &str = "QNT000";
    pub const NAME_NOT_FOUND: &str = "QNT001";
    pub const TYPE_MISMATCH: &str = "QNT002";
    pub const ARITY: &str = "QNT003";
    pub const FIELD: &str = "QNT004";
    pub const UNKNOWN_TYPE: &str = "QNT005";
    pub const DUPLICATE: &str = "QNT006";
    pub const PATTERN: &str = "QNT007";
    pub const NON_EXHAUSTIVE: &str = "QNT008";
    pub const AMBIGUOUS: &str = "QNT009";
    pub const MODE: &str = "QNT010";
    pub const RECURSION: &str = "QNT011";
    pub const IMPORT: &str = "QNT012";
    pub const SIGNATURE: &str = "QNT013";

    pub const RUNTIME_INTERNAL: &str = "QNT500";
    pub const INDEX_OUT_OF_RANGE: &str = "QNT501";
    pub const EMPTY_LIST: &str = "QNT502";
    pub const DIVISION_BY_ZERO: &str = "QNT503";
    pub const NEGATIVE_EXPONENT: &str = "QNT504";
    pub const EMPTY_CHOICE: &str = "QNT505";
    pub const NO_MATCH: &str = "QNT506";
    pub const MISSING_KEY: &str = "QNT507";
    pub const SET_MISSING_KEY: &str = "QNT508";
    pub const LIMIT: &str = "QNT509";
    pub const SLICE: &str = "QNT510";
}

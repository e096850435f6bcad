//! Input/output examples for handler functions, loaded from JSON.

use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExampleRole {
    Generation,
    Holdout,
}

/// One call of a model function with the value it must return. Arguments and
/// the expected value are expressions in the model language.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IoExample {
    pub function: String,
    pub label: String,
    pub args: Vec<String>,
    pub expected: String,
    pub role: ExampleRole,
}

impl IoExample {
    /// The call as an expression, one argument per line.
    pub fn call_text(&self) -> String {
        if self.args.is_empty() {
            return format!("{}()", self.function);
        }
        let args: Vec<String> = self.args.iter().map(|a| format!("  {a}")).collect();
        format!("{}(\n{}\n)", self.function, args.join(",\n"))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum IoSpecError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}: {message}")]
    Json { path: String, message: String },
}

pub fn parse_io_spec(text: &str) -> Result<Vec<IoExample>, serde_json::Error> {
    serde_json::from_str(text)
}

pub fn load_io_spec(path: &Path) -> Result<Vec<IoExample>, IoSpecError> {
    let text = std::fs::read_to_string(path).map_err(|e| IoSpecError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_io_spec(&text).map_err(|e| IoSpecError::Json {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Examples for `function` with the given role, in file order.
pub fn examples_for<'a>(all: &'a [IoExample], function: &str, role: ExampleRole) -> Vec<&'a IoExample> {
    all.iter().filter(|e| e.function == function && e.role == role).collect()
}

/// Text bound to the I/O examples macro of the generation prompt. Empty when
/// there are no examples.
pub fn render_io_examples(examples: &[&IoExample]) -> String {
    let Some(first) = examples.first() else {
        return String::new();
    };
    let mut out = format!(
        "\nHere are examples of how `{}` must behave. Each expression must evaluate to `true`:\n",
        first.function
    );
    for e in examples {
        out.push_str(&format!("\n```\n// {}\n{} == {}\n```\n", e.label, e.call_text(), e.expected));
    }
    out
}

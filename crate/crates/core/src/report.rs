//! Aggregation of benchmark runs into per-function and per-category tables.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::repair::{StubOutcome, StubStatus};

/// Holdout verdict for one example of one function in one run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HoldoutResult {
    pub function: String,
    pub label: String,
    pub passed: bool,
}

/// Everything one run produced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunOutcomes {
    pub run: usize,
    pub seed: u64,
    pub outcomes: Vec<StubOutcome>,
    pub holdout: Vec<HoldoutResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionRow {
    pub function: String,
    /// Mean over runs of the rounds spent on this function.
    pub avg_repair: f64,
    pub successes: usize,
    pub runs: usize,
    pub holdout_passed: usize,
    pub holdout_total: usize,
    /// Passed over total holdout evaluations of successful runs; `None`
    /// without any.
    pub pass_rate: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryTotals {
    pub static_rounds: u32,
    pub runtime_rounds: u32,
    pub semantic_rounds: u32,
    pub total: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub seeds: Vec<u64>,
    pub fingerprints: Vec<String>,
    pub first_response: Option<DateTime<Utc>>,
    pub last_response: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub contract: String,
    pub runs: usize,
    pub functions: Vec<FunctionRow>,
    pub categories: CategoryTotals,
    pub provenance: Provenance,
}

pub fn aggregate(contract: &str, runs: &[RunOutcomes]) -> RunReport {
    let mut names: Vec<String> = Vec::new();
    for r in runs {
        for o in &r.outcomes {
            if !names.contains(&o.stub_name) {
                names.push(o.stub_name.clone());
            }
        }
    }
    let mut functions = Vec::new();
    let mut categories = CategoryTotals::default();
    for name in &names {
        let mut rounds = 0u32;
        let mut present = 0usize;
        let mut successes = 0usize;
        let (mut passed, mut total) = (0usize, 0usize);
        for r in runs {
            let Some(o) = r.outcomes.iter().find(|o| &o.stub_name == name) else {
                continue;
            };
            present += 1;
            rounds += o.rounds_used.total();
            categories.static_rounds += o.rounds_used.static_rounds;
            categories.runtime_rounds += o.rounds_used.runtime_rounds;
            categories.semantic_rounds += o.rounds_used.semantic_rounds;
            if o.status == StubStatus::Success {
                successes += 1;
                for h in r.holdout.iter().filter(|h| &h.function == name) {
                    total += 1;
                    passed += usize::from(h.passed);
                }
            }
        }
        functions.push(FunctionRow {
            function: name.clone(),
            avg_repair: if present == 0 { 0.0 } else { f64::from(rounds) / present as f64 },
            successes,
            runs: present,
            holdout_passed: passed,
            holdout_total: total,
            pass_rate: (total > 0).then(|| passed as f64 / total as f64),
        });
    }
    categories.total = categories.static_rounds + categories.runtime_rounds + categories.semantic_rounds;

    let mut fingerprints = BTreeSet::new();
    let mut stamps = Vec::new();
    for r in runs {
        for o in &r.outcomes {
            for m in &o.responses {
                fingerprints.insert(m.fingerprint.clone());
                stamps.push(m.timestamp);
            }
        }
    }
    RunReport {
        contract: contract.to_string(),
        runs: runs.len(),
        functions,
        categories,
        provenance: Provenance {
            seeds: runs.iter().map(|r| r.seed).collect(),
            fingerprints: fingerprints.into_iter().collect(),
            first_response: stamps.iter().min().copied(),
            last_response: stamps.iter().max().copied(),
        },
    }
}

fn pct(p: Option<f64>) -> String {
    p.map(|p| format!("{:.0}%", p * 100.0)).unwrap_or_else(|| "-".into())
}

/// Aligned plain-text rendering of both tables.
pub fn render_text(report: &RunReport) -> String {
    let header = ["Contract", "Function", "Avg. Repair", "Pass Rate", "Success"];
    let rows: Vec<[String; 5]> = report
        .functions
        .iter()
        .map(|f| {
            [
                report.contract.clone(),
                f.function.clone(),
                format!("{:.2}", f.avg_repair),
                pct(f.pass_rate),
                format!("{}/{}", f.successes, f.runs),
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for r in &rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cells: &[String]| {
        cells
            .iter()
            .zip(widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let mut out = String::new();
    let _ = writeln!(out, "{}", line(&header.map(String::from)));
    let _ = writeln!(out, "{}", widths.map(|w| "-".repeat(w)).join("  "));
    for r in &rows {
        let _ = writeln!(out, "{}", line(r));
    }
    let c = &report.categories;
    let _ = writeln!(out);
    let _ = writeln!(out, "Repair rounds by category over {} runs", report.runs);
    let _ = writeln!(out, "static    {}", c.static_rounds);
    let _ = writeln!(out, "runtime   {}", c.runtime_rounds);
    let _ = writeln!(out, "semantic  {}", c.semantic_rounds);
    let _ = writeln!(out, "total     {}", c.total);
    let _ = writeln!(out);
    let seeds: Vec<String> = report.provenance.seeds.iter().map(u64::to_string).collect();
    let _ = writeln!(out, "seeds: {}", seeds.join(", "));
    let _ = writeln!(out, "fingerprints: {}", report.provenance.fingerprints.join(", "));
    out
}

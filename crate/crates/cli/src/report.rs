//! Report records: a JSON-lines stream for machines and a plain table for
//! people, both rendered from the same records.

use std::fmt::Write as _;

use conformal_jets::Check;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use serde_json::Value;

use crate::scenario::Scenario;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRecord {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub threshold: f64,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

impl From<&Check> for CheckRecord {
    fn from(c: &Check) -> Self {
        Self {
            name: c.name.clone(),
            passed: c.passed,
            measured: c.measured,
            threshold: c.threshold,
            detail: c.detail.clone(),
        }
    }
}

impl From<Check> for CheckRecord {
    fn from(c: Check) -> Self {
        (&c).into()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SuiteStatus {
    Pass,
    Fail,
    Inapplicable,
}

impl SuiteStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SuiteStatus::Pass => "pass",
            SuiteStatus::Fail => "fail",
            SuiteStatus::Inapplicable => "inapplicable",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteOutcome {
    pub theorem: String,
    pub status: SuiteStatus,
    pub fixture: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub checks: Vec<CheckRecord>,
    pub data: Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskStatus {
    Ok,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "record", rename_all = "kebab-case")]
pub enum Record {
    Environment {
        version: String,
        command: String,
        seed: u64,
        tol: f64,
    },
    Scenario {
        scenario: Scenario,
        /// The field parameters after constructors are expanded.
        resolved_field: Value,
    },
    Task {
        index: usize,
        kind: String,
        status: TaskStatus,
        #[serde(skip_serializing_if = "Option::is_none")]
        error: Option<String>,
        result: Value,
        checks: Vec<CheckRecord>,
    },
    Suite(SuiteOutcome),
    Summary {
        tasks: usize,
        task_errors: usize,
        suites: usize,
        suites_failed: usize,
        suites_inapplicable: usize,
        checks: usize,
        checks_failed: usize,
        status: String,
    },
}

/// The records of one run plus the rule deciding its exit status.
#[derive(Debug, Clone, Default)]
pub struct Report {
    pub records: Vec<Record>,
}

impl Report {
    pub fn push(&mut self, r: Record) {
        self.records.push(r);
    }

    fn suites(&self) -> impl Iterator<Item = &SuiteOutcome> {
        self.records.iter().filter_map(|r| match r {
            Record::Suite(s) => Some(s),
            _ => None,
        })
    }

    /// Whether every requested verification passed (inapplicable ones do
    /// not count as failures).
    pub fn passed(&self) -> bool {
        self.suites().all(|s| s.status != SuiteStatus::Fail) && self.verify_tasks_passed()
    }

    fn verify_tasks_passed(&self) -> bool {
        self.records.iter().all(|r| match r {
            Record::Task { kind, result, status, .. } if kind == "verify-theorem" => {
                *status == TaskStatus::Ok && result.get("status").and_then(Value::as_str) != Some("fail")
            }
            _ => true,
        })
    }

    /// Appends the summary record.
    pub fn finish(&mut self) {
        let mut tasks = 0;
        let mut task_errors = 0;
        let mut suites = 0;
        let mut suites_failed = 0;
        let mut suites_inapplicable = 0;
        let mut checks = 0;
        let mut checks_failed = 0;
        let mut count_suite = |status: &str| {
            suites += 1;
            match status {
                "fail" => suites_failed += 1,
                "inapplicable" => suites_inapplicable += 1,
                _ => {}
            }
        };
        for r in &self.records {
            match r {
                Record::Task {
                    kind,
                    status,
                    checks: c,
                    result,
                    ..
                } => {
                    tasks += 1;
                    if *status == TaskStatus::Error {
                        task_errors += 1;
                    }
                    if kind == "verify-theorem" {
                        if let Some(s) = result.get("status").and_then(Value::as_str) {
                            count_suite(s);
                        }
                    }
                    checks += c.len();
                    checks_failed += c.iter().filter(|c| !c.passed).count();
                }
                Record::Suite(s) => {
                    count_suite(s.status.as_str());
                    checks += s.checks.len();
                    checks_failed += s.checks.iter().filter(|c| !c.passed).count();
                }
                _ => {}
            }
        }
        let status = if self.passed() { "pass" } else { "fail" }.to_string();
        self.records.push(Record::Summary {
            tasks,
            task_errors,
            suites,
            suites_failed,
            suites_inapplicable,
            checks,
            checks_failed,
            status,
        });
    }

    pub fn to_machine(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("records serialize"));
            out.push('\n');
        }
        out
    }

    pub fn to_human(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            match r {
                Record::Environment {
                    version,
                    command,
                    seed,
                    tol,
                } => {
                    let _ = writeln!(out, "conformal-jets {version}  {command}  seed={seed}  tol={tol:e}");
                }
                Record::Scenario { scenario, .. } => {
                    let s = &scenario.space;
                    let f = scenario.field.constructor.as_deref().unwrap_or("explicit");
                    let _ = writeln!(
                        out,
                        "scenario: n={} signature=({}, {}) field={f} tasks={}",
                        s.n,
                        s.p,
                        s.q,
                        scenario.tasks.len()
                    );
                }
                Record::Task {
                    index,
                    kind,
                    status,
                    error,
                    result,
                    checks,
                } => {
                    let _ = writeln!(out, "\n[task {index}] {kind}");
                    match status {
                        TaskStatus::Error => {
                            let _ = writeln!(out, "  error: {}", error.as_deref().unwrap_or(""));
                        }
                        TaskStatus::Ok => {
                            write_value(&mut out, result, 1);
                            write_checks(&mut out, checks);
                        }
                    }
                }
                Record::Suite(s) => {
                    let _ = writeln!(out, "\n[verify {}] {}  ({})", s.theorem, s.status.as_str().to_uppercase(), s.fixture);
                    if let Some(reason) = &s.reason {
                        let _ = writeln!(out, "  {reason}");
                    }
                    write_checks(&mut out, &s.checks);
                    if !s.data.is_null() {
                        write_value(&mut out, &s.data, 1);
                    }
                }
                Record::Summary {
                    tasks,
                    task_errors,
                    suites,
                    suites_failed,
                    suites_inapplicable,
                    checks,
                    checks_failed,
                    status,
                } => {
                    let _ = writeln!(
                        out,
                        "\nsummary: {status}  tasks={tasks} (errors {task_errors})  suites={suites} (failed {suites_failed}, inapplicable {suites_inapplicable})  checks={checks} (failed {checks_failed})"
                    );
                }
            }
        }
        out
    }
}

fn write_checks(out: &mut String, checks: &[CheckRecord]) {
    if checks.is_empty() {
        return;
    }
    let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(0).max(5);
    let _ = writeln!(out, "  {:<width$}  {:<4}  {:>11}  {:>11}  detail", "check", "ok", "measured", "threshold");
    for c in checks {
        let _ = writeln!(
            out,
            "  {:<width$}  {:<4}  {:>11.3e}  {:>11.3e}  {}",
            c.name,
            if c.passed { "PASS" } else { "FAIL" },
            c.measured,
            c.threshold,
            c.detail
        );
    }
}

fn write_value(out: &mut String, v: &Value, depth: usize) {
    let pad = "  ".repeat(depth);
    match v {
        Value::Object(map) => {
            for (k, val) in map {
                if is_scalar_like(val) {
                    let _ = writeln!(out, "{pad}{k}: {}", compact(val));
                } else {
                    let _ = writeln!(out, "{pad}{k}:");
                    write_value(out, val, depth + 1);
                }
            }
        }
        Value::Array(items) if !is_scalar_like(v) => {
            for item in items {
                if is_scalar_like(item) {
                    let _ = writeln!(out, "{pad}- {}", compact(item));
                } else {
                    let _ = writeln!(out, "{pad}-");
                    write_value(out, item, depth + 1);
                }
            }
        }
        other => {
            let _ = writeln!(out, "{pad}{}", compact(other));
        }
    }
}

/// Scalars and arrays of numbers print on one line.
fn is_scalar_like(v: &Value) -> bool {
    match v {
        Value::Array(items) => items.iter().all(|i| !i.is_object() && !i.is_array()) && items.len() <= 12,
        Value::Object(m) => m.is_empty(),
        _ => true,
    }
}

fn compact(v: &Value) -> String {
    match v {
        Value::Number(n) => match n.as_f64() {
            Some(x) if n.is_f64() => format!("{x:.6e}"),
            _ => n.to_string(),
        },
        Value::Array(items) => format!("[{}]", items.iter().map(compact).collect::<Vec<_>>().join(", ")),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

pub fn vector_json(v: &DVector<f64>) -> Value {
    Value::from(v.iter().copied().collect::<Vec<_>>())
}

pub fn matrix_json(m: &DMatrix<f64>) -> Value {
    Value::from(
        m.row_iter()
            .map(|r| r.iter().copied().collect::<Vec<_>>())
            .collect::<Vec<_>>(),
    )
}

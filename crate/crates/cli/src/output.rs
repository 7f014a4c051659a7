use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};
use topeq_core::report::argument_hash;
use topeq_core::VerificationReport;

use crate::config::RunConfig;
use crate::{CliError, Command};

/// One line of `detail.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub check_name: String,
    pub n: i64,
    pub m: i64,
    pub argument_hash: String,
    /// Extra coordinate of the check, e.g. δ or α.
    pub parameter: Option<f64>,
    pub measured: f64,
    /// `None` for informational rows.
    pub bound: Option<f64>,
    pub passed: bool,
}

impl Row {
    /// `measured ≤ bound`
    pub fn upper(name: &str, n: i64, m: i64, args: &[f64], measured: f64, bound: f64) -> Self {
        Row::with(name, n, m, args, None, measured, Some(bound), measured <= bound)
    }

    /// Recorded without a pass criterion.
    pub fn info(name: &str, n: i64, m: i64, args: &[f64], measured: f64) -> Self {
        Row::with(name, n, m, args, None, measured, None, true)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn with(
        name: &str,
        n: i64,
        m: i64,
        args: &[f64],
        parameter: Option<f64>,
        measured: f64,
        bound: Option<f64>,
        passed: bool,
    ) -> Self {
        let mut hashed = args.to_vec();
        hashed.extend(parameter);
        Row {
            check_name: name.to_string(),
            n,
            m,
            argument_hash: argument_hash(n, m, &hashed),
            parameter,
            measured,
            bound,
            passed,
        }
    }

    pub fn param(mut self, p: f64) -> Self {
        self.parameter = Some(p);
        self
    }
}

#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub results: BTreeMap<String, Value>,
    pub rows: Vec<Row>,
    pub notes: Vec<String>,
    pub passed: bool,
    pub error: Option<Value>,
}

impl Outcome {
    pub fn new() -> Self {
        Outcome { passed: true, ..Default::default() }
    }

    pub fn from_error(err: &CliError) -> Self {
        Outcome {
            passed: false,
            error: Some(json!({"kind": err.kind(), "message": err.message()})),
            ..Default::default()
        }
    }

    pub fn result(&mut self, key: &str, value: impl Serialize) {
        self.results.insert(key.to_string(), serde_json::to_value(value).expect("serializable result"));
    }

    pub fn push(&mut self, row: Row) {
        self.passed &= row.passed;
        self.rows.push(row);
    }

    pub fn extend_report(&mut self, report: &VerificationReport) {
        for r in &report.records {
            self.push(Row {
                check_name: r.check_name.clone(),
                n: r.n,
                m: r.m,
                argument_hash: r.argument_hash.clone(),
                parameter: None,
                measured: r.measured,
                bound: Some(r.bound),
                passed: r.passed,
            });
        }
    }

    pub fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }

    fn check_summary(&self) -> BTreeMap<String, Value> {
        let mut out: BTreeMap<String, (usize, usize, f64)> = BTreeMap::new();
        for r in &self.rows {
            let e = out.entry(r.check_name.clone()).or_insert((0, 0, f64::NEG_INFINITY));
            e.0 += 1;
            e.1 += usize::from(!r.passed);
            e.2 = e.2.max(r.measured);
        }
        out.into_iter()
            .map(|(k, (count, failed, max))| {
                (k, json!({"count": count, "failed": failed, "max_measured": finite(max)}))
            })
            .collect()
    }
}

/// JSON has no NaN or infinity; those become strings.
pub fn finite(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        json!(format!("{v}"))
    }
}

fn number(v: f64) -> String {
    format!("{v:?}")
}

fn header(command: Command, cfg: Option<&RunConfig>) -> Value {
    match cfg {
        Some(c) => json!({
            "command": command.name(),
            "scenario": c.scenario.as_ref().map(|s| json!({"name": s.name, "params": s.params})),
            "inline_system": c.system.is_some(),
            "window": c.window,
            "seed": c.sampling.seed,
            "tolerances": c.tolerances,
        }),
        None => json!({ "command": command.name() }),
    }
}

pub fn summary_json(command: Command, cfg: Option<&RunConfig>, outcome: &Outcome, exit_code: i32) -> String {
    let summary = json!({
        "header": header(command, cfg),
        "results": outcome.results,
        "checks": outcome.check_summary(),
        "notes": outcome.notes,
        "error": outcome.error,
        "passed": outcome.passed,
        "exit_code": exit_code,
    });
    let mut s = serde_json::to_string_pretty(&summary).expect("summary serializes");
    s.push('\n');
    s
}

pub fn detail_csv(rows: &[Row]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record(["check_name", "n", "m", "argument_hash", "parameter", "measured", "bound", "passed"])
        .map_err(io)?;
    for r in rows {
        w.write_record([
            r.check_name.clone(),
            r.n.to_string(),
            r.m.to_string(),
            r.argument_hash.clone(),
            r.parameter.map(number).unwrap_or_default(),
            number(r.measured),
            r.bound.map(number).unwrap_or_default(),
            r.passed.to_string(),
        ])
        .map_err(io)?;
    }
    w.into_inner().map_err(|e| CliError::Io(e.to_string()))
}

pub fn write_outcome(
    dir: &Path,
    command: Command,
    cfg: Option<&RunConfig>,
    outcome: &Outcome,
    exit_code: i32,
) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", dir.display()));
    fs::create_dir_all(dir).map_err(io)?;
    fs::write(dir.join("summary.json"), summary_json(command, cfg, outcome, exit_code)).map_err(io)?;
    fs::write(dir.join("detail.csv"), detail_csv(&outcome.rows)?).map_err(io)?;
    Ok(())
}

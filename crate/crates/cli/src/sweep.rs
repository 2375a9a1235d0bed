//! `riqs sweep`: one run per parameter value, executed concurrently and
//! merged in parameter order.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::Value;

use crate::compare::{compare_reports, Comparison};
use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::report::{object, write_json};
use crate::run::{run, REPORT_FILE};

pub const SWEEP_FILE: &str = "sweep.json";
pub const THREADS_VAR: &str = "RIQS_THREADS";

#[derive(Debug)]
pub struct SweepRun {
    pub value: String,
    pub directory: PathBuf,
    /// `None` on success.
    pub error: Option<CliError>,
    pub report: Option<Value>,
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub output: PathBuf,
    pub runs: Vec<SweepRun>,
    pub comparison: Option<Comparison>,
}

impl SweepOutcome {
    /// Exit code of the first failed run in parameter order, else 0.
    pub fn exit_code(&self) -> i32 {
        self.runs
            .iter()
            .find_map(|r| r.error.as_ref().map(CliError::exit_code))
            .unwrap_or(0)
    }
}

/// Thread cap from `RIQS_THREADS`, if set.
pub fn thread_cap() -> Result<Option<usize>, CliError> {
    match std::env::var(THREADS_VAR) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Config(format!(
                "{THREADS_VAR} must be a positive integer, got `{v}`"
            ))),
        },
        Err(_) => Ok(None),
    }
}

fn directory_name(param: &str, value: &str) -> String {
    let safe: String = value
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || ".-+_".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{param}={safe}")
}

pub fn sweep(
    base: &ExperimentConfig,
    param: &str,
    values: &[String],
    output: Option<&Path>,
    threads: Option<usize>,
) -> Result<SweepOutcome, CliError> {
    if values.is_empty() {
        return Err(CliError::Config("sweep needs at least one value".into()));
    }
    let output = output.map_or_else(|| base.output.clone(), Path::to_path_buf);
    // every configuration is validated before any run starts
    let configs = values
        .iter()
        .map(|v| {
            let dir = output.join(directory_name(param, v));
            Ok((v.clone(), base.with_value(param, v)?.with_output(&dir)))
        })
        .collect::<Result<Vec<_>, CliError>>()?;

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::Other(e.to_string()))?;
    let runs: Vec<SweepRun> = pool.install(|| {
        configs
            .par_iter()
            .map(|(value, cfg)| match run(cfg) {
                Ok(o) => SweepRun {
                    value: value.clone(),
                    directory: cfg.output.clone(),
                    error: None,
                    report: Some(o.report),
                },
                Err(e) => SweepRun {
                    value: value.clone(),
                    directory: cfg.output.clone(),
                    report: crate::report::read_json(&cfg.output.join(REPORT_FILE)).ok(),
                    error: Some(e),
                },
            })
            .collect()
    });

    let reports: Vec<(PathBuf, Value)> = runs
        .iter()
        .filter_map(|r| Some((r.directory.join(REPORT_FILE), r.report.clone()?)))
        .collect();
    let comparison = if reports.is_empty() {
        None
    } else {
        compare_reports(&reports).ok()
    };

    let outcome = SweepOutcome {
        output,
        runs,
        comparison,
    };
    write_json(&outcome.output.join(SWEEP_FILE), &summary(param, &outcome))?;
    Ok(outcome)
}

fn summary(param: &str, outcome: &SweepOutcome) -> Value {
    let runs = outcome
        .runs
        .iter()
        .map(|r| {
            let dir = r
                .directory
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            object([
                ("value", Value::String(r.value.clone())),
                ("directory", Value::String(dir)),
                (
                    "exit_code",
                    Value::from(r.error.as_ref().map_or(0, CliError::exit_code)),
                ),
                (
                    "error",
                    r.error.as_ref().map_or(Value::Null, |e| Value::String(e.to_string())),
                ),
                ("report", r.report.clone().unwrap_or(Value::Null)),
            ])
        })
        .collect();
    object([
        ("param", Value::String(param.into())),
        ("runs", Value::Array(runs)),
        (
            "comparison",
            outcome.comparison.as_ref().map_or(Value::Null, Comparison::to_json),
        ),
    ])
}

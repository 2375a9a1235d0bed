//! `riqs compare`: measured-versus-predicted deltas across reports of one
//! model family, with log-log scaling exponents in `|λ|`.
//!
//! Reports are grouped by `(λ₁, λ₂)`. Within a group, measurements come
//! from any report that has them and predictions from any report that has
//! them, so a trajectory run can be paired with a `predictions` run.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use riqs_core::linalg::C64;
use serde_json::{Map, Value};

use crate::error::CliError;
use crate::report::{get_complex, get_f64, num, object, opt_num, read_json};

/// Configuration keys that define a model family (couplings excluded).
const FAMILY_KEYS: &[&str] = &[
    "system.E_S",
    "chain.E_E",
    "chain.beta",
    "step.tau",
    "bath.beta",
    "bath.form_factor",
    "bath.amplitude",
    "bath.cutoff",
    "bath.n_modes",
    "bath.s_max",
];

/// A report and the path it was read from.
type Entry = (PathBuf, Value);

pub const QUANTITIES: &[&str] = &[
    "fixed_point",
    "d_e_c",
    "d_e_r",
    "d_e_tot",
    "d_s",
    "e0",
    "e_plus",
    "e_minus",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Delta {
    pub abs: f64,
    pub rel: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Group {
    pub lambda1: f64,
    pub lambda2: f64,
    pub sources: Vec<PathBuf>,
    /// One entry per name in [`QUANTITIES`].
    pub deltas: Vec<Option<Delta>>,
}

impl Group {
    pub fn lambda(&self) -> f64 {
        self.lambda1.hypot(self.lambda2)
    }

    pub fn delta(&self, quantity: &str) -> Option<Delta> {
        let k = QUANTITIES.iter().position(|q| *q == quantity)?;
        self.deltas[k]
    }
}

#[derive(Debug, Clone)]
pub struct Comparison {
    /// Sorted by `|λ|`, then `λ₁`.
    pub groups: Vec<Group>,
    /// Least-squares slope of `ln|Δ|` against `ln|λ|`, per quantity.
    pub exponents: Vec<Option<f64>>,
}

impl Comparison {
    pub fn exponent(&self, quantity: &str) -> Option<f64> {
        let k = QUANTITIES.iter().position(|q| *q == quantity)?;
        self.exponents[k]
    }

    pub fn to_json(&self) -> Value {
        let groups = self
            .groups
            .iter()
            .map(|g| {
                let mut deltas = Map::new();
                for (q, d) in QUANTITIES.iter().zip(&g.deltas) {
                    let v = d.map_or(Value::Null, |d| object([("abs", num(d.abs)), ("rel", opt_num(d.rel))]));
                    deltas.insert(q.to_string(), v);
                }
                object([
                    ("lambda1", num(g.lambda1)),
                    ("lambda2", num(g.lambda2)),
                    ("lambda", num(g.lambda())),
                    (
                        "reports",
                        Value::Array(
                            g.sources
                                .iter()
                                .map(|p| Value::String(p.display().to_string()))
                                .collect(),
                        ),
                    ),
                    ("deltas", Value::Object(deltas)),
                ])
            })
            .collect();
        let mut exps = Map::new();
        for (q, e) in QUANTITIES.iter().zip(&self.exponents) {
            exps.insert(q.to_string(), opt_num(*e));
        }
        object([("groups", Value::Array(groups)), ("exponents", Value::Object(exps))])
    }

    /// Fixed-width text table of absolute deltas.
    pub fn to_table(&self) -> String {
        let mut out = format!("{:<12}", "|lambda|");
        for q in QUANTITIES {
            let _ = write!(out, " {q:>11}");
        }
        out.push('\n');
        let cell = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3e}"));
        for g in &self.groups {
            let _ = write!(out, "{:<12}", format!("{:.4e}", g.lambda()));
            for d in &g.deltas {
                let _ = write!(out, " {:>11}", cell(d.map(|d| d.abs)));
            }
            out.push('\n');
        }
        let _ = write!(out, "{:<12}", "exponent");
        for e in &self.exponents {
            let _ = write!(out, " {:>11}", e.map_or("-".to_string(), |x| format!("{x:.3}")));
        }
        out.push('\n');
        out
    }
}

pub fn compare_files(paths: &[PathBuf]) -> Result<Comparison, CliError> {
    let reports = paths
        .iter()
        .map(|p| Ok((p.clone(), read_json(p)?)))
        .collect::<Result<Vec<_>, CliError>>()?;
    compare_reports(&reports)
}

fn config_str<'a>(report: &'a Value, key: &str) -> Option<&'a str> {
    report.get("config")?.get(key)?.as_str()
}

fn coupling(report: &Value, path: &Path, key: &str) -> Result<f64, CliError> {
    config_str(report, key)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| CliError::Config(format!("{}: report lacks `{key}`", path.display())))
}

pub fn compare_reports(reports: &[Entry]) -> Result<Comparison, CliError> {
    let Some((first_path, first)) = reports.first() else {
        return Err(CliError::Config("compare needs at least one report".into()));
    };
    for (path, report) in &reports[1..] {
        for key in FAMILY_KEYS {
            let (a, b) = (config_str(first, key), config_str(report, key));
            if a != b {
                return Err(CliError::Config(format!(
                    "reports are from different model families: `{key}` is {} in {} but {} in {}",
                    a.unwrap_or("absent"),
                    first_path.display(),
                    b.unwrap_or("absent"),
                    path.display()
                )));
            }
        }
    }

    let mut groups: Vec<(f64, f64, Vec<&Entry>)> = Vec::new();
    for entry in reports {
        let l1 = coupling(&entry.1, &entry.0, "coupling.lambda1")?;
        let l2 = coupling(&entry.1, &entry.0, "coupling.lambda2")?;
        match groups.iter_mut().find(|(a, b, _)| *a == l1 && *b == l2) {
            Some(g) => g.2.push(entry),
            None => groups.push((l1, l2, vec![entry])),
        }
    }
    groups.sort_by(|a, b| a.0.hypot(a.1).total_cmp(&b.0.hypot(b.1)).then(a.0.total_cmp(&b.0)));

    let groups: Vec<Group> = groups
        .into_iter()
        .map(|(lambda1, lambda2, members)| {
            let reports: Vec<&Value> = members.iter().map(|(_, v)| v).collect();
            let lambda = lambda1.hypot(lambda2);
            let deltas = QUANTITIES.iter().map(|q| quantity_delta(q, &reports, lambda)).collect();
            Group {
                lambda1,
                lambda2,
                sources: members.iter().map(|(p, _)| p.clone()).collect(),
                deltas,
            }
        })
        .collect();

    let exponents = (0..QUANTITIES.len())
        .map(|k| {
            let points: Vec<(f64, f64)> = groups
                .iter()
                .filter_map(|g| Some((g.lambda(), g.deltas[k]?.abs)))
                .filter(|&(l, d)| l > 0.0 && d > 0.0)
                .map(|(l, d)| (l.ln(), d.ln()))
                .collect();
            loglog_slope(&points)
        })
        .collect();
    Ok(Comparison { groups, exponents })
}

fn first_some<T>(reports: &[&Value], f: impl Fn(&Value) -> Option<T>) -> Option<T> {
    reports.iter().find_map(|r| f(r))
}

fn qubit(v: &Value, path: &[&str]) -> Option<(f64, f64, C64)> {
    let mut cur = v;
    for key in path {
        cur = cur.get(key)?;
    }
    Some((
        cur.get("p0")?.as_f64()?,
        cur.get("p1")?.as_f64()?,
        get_complex(cur, &["rho01"])?,
    ))
}

fn quantity_delta(quantity: &str, reports: &[&Value], lambda: f64) -> Option<Delta> {
    let scalar = |measured: &[&str], predicted: &[&str]| {
        let m = first_some(reports, |r| get_f64(r, measured))?;
        let p = first_some(reports, |r| get_f64(r, predicted))?;
        Some(delta(m, p))
    };
    let eigen = |name: &str| {
        let m = first_some(reports, |r| get_complex(r, &["measured", "eigenvalues", name]))?;
        let p = first_some(reports, |r| get_complex(r, &["predictions", "eigenvalues", name]))?;
        Some(Delta {
            abs: (m - p).norm(),
            rel: (p.norm() > 0.0).then(|| (m - p).norm() / p.norm()),
        })
    };
    match quantity {
        "fixed_point" => {
            // the λ = 0 fixed point is not unique
            if lambda == 0.0 {
                return None;
            }
            let m = first_some(reports, |r| qubit(r, &["measured", "fixed_point"]))?;
            let p = first_some(reports, |r| qubit(r, &["predictions", "rho_plus"]))?;
            let half_gap = 0.5 * ((m.0 - m.1) - (p.0 - p.1));
            let abs = half_gap.hypot((m.2 - p.2).norm());
            Some(Delta { abs, rel: None })
        }
        "e0" | "e_plus" | "e_minus" => eigen(quantity),
        flux => scalar(
            &["fluxes", "per_unit_time", flux],
            &["predictions", "fluxes_per_unit_time", flux],
        ),
    }
}

fn delta(measured: f64, predicted: f64) -> Delta {
    let abs = (measured - predicted).abs();
    Delta {
        abs,
        rel: (predicted != 0.0).then(|| abs / predicted.abs()),
    }
}

/// Least-squares slope; `None` unless at least two distinct abscissae.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let n = points.len() as f64;
    if points.len() < 2 {
        return None;
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 1e-24).then(|| sxy / sxx)
}

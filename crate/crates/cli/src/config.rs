//! Flat `key = value` experiment configuration.
//!
//! Lines are `section.key = value`; `#` starts a comment. Unknown and
//! repeated keys are rejected. Keys without a value in the file take the
//! defaults listed in [`KEYS`].

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use riqs_core::models::{BathSpec, FormFactor, ModelSpec};

use crate::error::CliError;

/// Experiment modes of `riqs run`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Chain,
    Bath,
    Combined,
    Exact,
    Predictions,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Chain => "chain",
            Mode::Bath => "bath",
            Mode::Combined => "combined",
            Mode::Exact => "exact",
            Mode::Predictions => "predictions",
        }
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "chain" => Ok(Mode::Chain),
            "bath" => Ok(Mode::Bath),
            "combined" => Ok(Mode::Combined),
            "exact" => Ok(Mode::Exact),
            "predictions" => Ok(Mode::Predictions),
            _ => Err("expected one of chain, bath, combined, exact, predictions".into()),
        }
    }
}

/// Initial state of `S` for trajectory modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Initial {
    Ground,
    Excited,
    Mixed,
    /// Haar-random pure state drawn from `run.seed`.
    Random,
}

impl Initial {
    pub fn name(&self) -> &'static str {
        match self {
            Initial::Ground => "ground",
            Initial::Excited => "excited",
            Initial::Mixed => "mixed",
            Initial::Random => "random",
        }
    }
}

impl FromStr for Initial {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "ground" => Ok(Initial::Ground),
            "excited" => Ok(Initial::Excited),
            "mixed" => Ok(Initial::Mixed),
            "random" => Ok(Initial::Random),
            _ => Err("expected one of ground, excited, mixed, random".into()),
        }
    }
}

/// Thresholds of the internal invariant checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckTolerances {
    /// Trace- and Hermiticity-preservation residual of channels.
    pub channel: f64,
    /// Allowed negativity of Choi matrices and of states.
    pub positivity: f64,
    /// Per-step flux balance residual.
    pub balance: f64,
    /// Trace and Hermiticity residual of trajectory states.
    pub state: f64,
}

/// Every accepted key with its default (`None` means required).
pub const KEYS: &[(&str, Option<&str>)] = &[
    ("system.E_S", None),
    ("chain.E_E", None),
    ("chain.beta", None),
    ("step.tau", None),
    ("coupling.lambda1", Some("0")),
    ("coupling.lambda2", None),
    ("bath.beta", Some("1")),
    ("bath.form_factor", Some("gaussian")),
    ("bath.amplitude", Some("1")),
    ("bath.cutoff", Some("1")),
    ("bath.n_modes", Some("0")),
    ("bath.s_max", Some("auto")),
    ("run.mode", None),
    ("run.steps", Some("100")),
    ("run.burn_in", Some("auto")),
    ("run.seed", Some("0")),
    ("run.initial", Some("excited")),
    ("run.output", Some("riqs-out")),
    ("tolerance.channel", Some("1e-8")),
    ("tolerance.positivity", Some("1e-8")),
    ("tolerance.balance", Some("1e-9")),
    ("tolerance.state", Some("1e-8")),
];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub mode: Mode,
    pub steps: usize,
    pub burn_in: Option<usize>,
    pub seed: u64,
    pub initial: Initial,
    pub output: PathBuf,
    pub tolerances: CheckTolerances,
    /// Normalized value of every key, as used.
    values: BTreeMap<String, String>,
}

fn invalid(key: &str, reason: impl fmt::Display) -> CliError {
    CliError::Config(format!("invalid value for `{key}`: {reason}"))
}

fn parse_value<T: FromStr>(values: &BTreeMap<String, String>, key: &str) -> Result<T, CliError>
where
    T::Err: fmt::Display,
{
    let raw = &values[key];
    raw.parse::<T>().map_err(|e| invalid(key, format!("`{raw}`: {e}")))
}

/// Shortest text that parses back to the same `f64`.
pub fn normalize_float(x: f64) -> String {
    format!("{x:?}")
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut given = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.iter().any(|(k, _)| *k == key) {
                return Err(CliError::Config(format!("unknown key `{key}` (line {})", lineno + 1)));
            }
            if given.insert(key.to_string(), value.to_string()).is_some() {
                return Err(CliError::Config(format!("duplicate key `{key}` (line {})", lineno + 1)));
            }
        }
        Self::from_values(given)
    }

    /// Builds a configuration from explicit key/value pairs (missing keys
    /// take their defaults).
    pub fn from_values(mut given: BTreeMap<String, String>) -> Result<Self, CliError> {
        for (key, default) in KEYS {
            if !given.contains_key(*key) {
                match default {
                    Some(d) => {
                        given.insert(key.to_string(), d.to_string());
                    }
                    None => return Err(CliError::Config(format!("missing required key `{key}`"))),
                }
            }
        }
        if let Some(k) = given.keys().find(|k| !KEYS.iter().any(|(key, _)| key == k)) {
            return Err(CliError::Config(format!("unknown key `{k}`")));
        }

        let f = |key: &str| parse_value::<f64>(&given, key);
        let (e_s, e_e) = (f("system.E_S")?, f("chain.E_E")?);
        let form = given["bath.form_factor"].clone();
        let cutoff = f("bath.cutoff")?;
        let form_factor = FormFactor::from_name(&form, Some(cutoff))
            .map_err(|_| invalid("bath.form_factor", format!("`{form}`: expected gaussian or flat")))?
            .with_amplitude(f("bath.amplitude")?);
        let s_max = match given["bath.s_max"].as_str() {
            "auto" => BathSpec::default_cutoff(e_s, e_e),
            _ => f("bath.s_max")?,
        };
        let n_modes = parse_value::<usize>(&given, "bath.n_modes")?;
        let bath = BathSpec::new(form_factor, n_modes, s_max).map_err(config_error)?;
        let model = ModelSpec::new(
            e_s,
            e_e,
            f("chain.beta")?,
            f("bath.beta")?,
            f("step.tau")?,
            f("coupling.lambda1")?,
            f("coupling.lambda2")?,
            bath,
        )
        .map_err(config_error)?;

        let steps = parse_value::<usize>(&given, "run.steps")?;
        let burn_in = match given["run.burn_in"].as_str() {
            "auto" => None,
            _ => Some(parse_value::<usize>(&given, "run.burn_in")?),
        };
        if let Some(b) = burn_in {
            if steps > 0 && b >= steps {
                return Err(invalid("run.burn_in", format!("{b} leaves no steps out of {steps}")));
            }
        }
        let tolerances = CheckTolerances {
            channel: positive(&given, "tolerance.channel")?,
            positivity: positive(&given, "tolerance.positivity")?,
            balance: positive(&given, "tolerance.balance")?,
            state: positive(&given, "tolerance.state")?,
        };

        let mut cfg = Self {
            model,
            mode: parse_value(&given, "run.mode")?,
            steps,
            burn_in,
            seed: parse_value(&given, "run.seed")?,
            initial: parse_value(&given, "run.initial")?,
            output: PathBuf::from(&given["run.output"]),
            tolerances,
            values: BTreeMap::new(),
        };
        cfg.values = cfg.normalized_values(&given);
        Ok(cfg)
    }

    fn normalized_values(&self, given: &BTreeMap<String, String>) -> BTreeMap<String, String> {
        let m = &self.model;
        let nf = normalize_float;
        let mut v = BTreeMap::new();
        let mut put = |k: &str, s: String| {
            v.insert(k.to_string(), s);
        };
        put("system.E_S", nf(m.e_s));
        put("chain.E_E", nf(m.e_e));
        put("chain.beta", nf(m.beta_e));
        put("step.tau", nf(m.tau));
        put("coupling.lambda1", nf(m.lambda1));
        put("coupling.lambda2", nf(m.lambda2));
        put("bath.beta", nf(m.beta_r));
        put("bath.form_factor", m.bath.form_factor.name().to_string());
        put("bath.amplitude", nf(m.bath.form_factor.amplitude));
        put("bath.cutoff", nf(given["bath.cutoff"].parse::<f64>().unwrap_or(1.0)));
        put("bath.n_modes", m.bath.n_modes.to_string());
        put("bath.s_max", nf(m.bath.s_max));
        put("run.mode", self.mode.name().to_string());
        put("run.steps", self.steps.to_string());
        put(
            "run.burn_in",
            self.burn_in.map_or_else(|| "auto".to_string(), |b| b.to_string()),
        );
        put("run.seed", self.seed.to_string());
        put("run.initial", self.initial.name().to_string());
        put("run.output", self.output.display().to_string());
        put("tolerance.channel", nf(self.tolerances.channel));
        put("tolerance.positivity", nf(self.tolerances.positivity));
        put("tolerance.balance", nf(self.tolerances.balance));
        put("tolerance.state", nf(self.tolerances.state));
        v
    }

    /// Every key with its normalized value, sorted by key.
    pub fn values(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    /// Canonical text form; parsing it yields an equal configuration.
    pub fn to_normalized_string(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Copy with one key replaced (used by sweeps). The pseudo-key
    /// `coupling.lambda` sets both couplings.
    pub fn with_value(&self, key: &str, value: &str) -> Result<Self, CliError> {
        let mut values = self.values.clone();
        let keys: Vec<&str> = if key == "coupling.lambda" {
            vec!["coupling.lambda1", "coupling.lambda2"]
        } else if KEYS.iter().any(|(k, _)| *k == key) {
            vec![key]
        } else {
            return Err(CliError::Config(format!("unknown key `{key}`")));
        };
        for k in keys {
            values.insert(k.to_string(), value.to_string());
        }
        Self::from_values(values)
    }

    pub fn with_output(&self, output: &Path) -> Self {
        let mut cfg = self.clone();
        cfg.output = output.to_path_buf();
        cfg.values.insert("run.output".into(), output.display().to_string());
        cfg
    }

    pub fn effective_burn_in(&self) -> usize {
        self.burn_in.unwrap_or(self.steps / 2)
    }
}

fn positive(values: &BTreeMap<String, String>, key: &str) -> Result<f64, CliError> {
    let v = parse_value::<f64>(values, key)?;
    if !(v > 0.0 && v.is_finite()) {
        return Err(invalid(key, format!("must be positive, got {v}")));
    }
    Ok(v)
}

fn config_error(e: riqs_core::Error) -> CliError {
    match e {
        riqs_core::Error::InvalidParameter { name, reason } => invalid(name, reason),
        other => CliError::Config(other.to_string()),
    }
}

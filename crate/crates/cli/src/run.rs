//! `riqs run`: one experiment, three artifacts.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use riqs_core::dynamics::{Simulator, SimulatorOptions, Trajectory};
use riqs_core::linalg::{partial_trace, sort_eigenvalues, trace_distance, use_sequential_kernels, ComplexMatrix, C64};
use riqs_core::models::{discretize_bath, BathModes, DensityMatrix, ModelSpec, ResourceLimits, StateResiduals};
use riqs_core::perturbation::{closed_form_predictions, rdo_eigenvalues_2nd_order, ClosedFormPredictions};
use riqs_core::rdo::{
    bath_channel_effective, chain_channel, combined_channel, exact_srbath_channel, spectral_analysis,
    subspace_eigenvalues, Channel, ChannelKind, ChannelResiduals, SpectralData, UNIT_TOLERANCE,
};
use riqs_core::thermo::{asymptotic_rates, energy_ledger, FluxAverages, FluxReport};
use serde_json::{Map, Value};

use crate::config::{CheckTolerances, ExperimentConfig, Initial, Mode};
use crate::error::CliError;
use crate::report::{complex, fmt_f64, num, object, opt_num, qubit_state, write_json, write_text};

/// Leading eigenvalues computed for exact channels too large to densify.
const SUBSPACE_EIGENVALUES: usize = 5;
const SUBSPACE_MAX_ITERATIONS: usize = 60;
const SUBSPACE_TOLERANCE: f64 = 1e-10;

pub const SPECTRUM_FILE: &str = "spectrum.csv";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, PartialEq)]
pub struct InvariantCheck {
    pub name: &'static str,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl InvariantCheck {
    fn at_most(name: &'static str, value: f64, tolerance: f64) -> Self {
        Self {
            name,
            value,
            tolerance,
            passed: value <= tolerance,
        }
    }

    fn at_least(name: &'static str, value: f64, bound: f64) -> Self {
        Self {
            name,
            value,
            tolerance: bound,
            passed: value >= bound,
        }
    }
}

/// Everything a run produced, before and after writing.
#[derive(Debug)]
pub struct RunOutcome {
    pub output: PathBuf,
    pub artifacts: Vec<PathBuf>,
    pub report: Value,
    pub checks: Vec<InvariantCheck>,
    /// CSV artifacts by file name.
    pub tables: Vec<(&'static str, String)>,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&InvariantCheck> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

/// Runs the experiment and writes its artifacts; invariant failures are
/// reported after the artifacts are on disk.
pub fn run(config: &ExperimentConfig) -> Result<RunOutcome, CliError> {
    let outcome = execute(config)?;
    write_outcome(&outcome)?;
    if !outcome.passed() {
        let list: Vec<String> = outcome
            .failures()
            .iter()
            .map(|c| format!("{} = {:e} (limit {:e})", c.name, c.value, c.tolerance))
            .collect();
        return Err(CliError::Invariant(list.join("; ")));
    }
    Ok(outcome)
}

pub fn run_file(path: &Path) -> Result<RunOutcome, CliError> {
    run(&ExperimentConfig::from_file(path)?)
}

/// Couplings the mode actually uses.
pub fn mode_model(config: &ExperimentConfig) -> ModelSpec {
    let m = &config.model;
    match config.mode {
        Mode::Chain => m.with_couplings(0.0, m.lambda2),
        Mode::Bath => m.with_couplings(m.lambda1, 0.0),
        Mode::Combined | Mode::Exact | Mode::Predictions => m.clone(),
    }
}

pub fn initial_system_state(initial: Initial, seed: u64) -> DensityMatrix {
    match initial {
        Initial::Ground => DensityMatrix::ground(),
        Initial::Excited => DensityMatrix::excited(),
        Initial::Mixed => DensityMatrix::maximally_mixed(2),
        Initial::Random => {
            // uniform on the Bloch sphere
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let z: f64 = rng.gen_range(-1.0..=1.0);
            let phi: f64 = rng.gen_range(0.0..2.0 * PI);
            let psi = [
                C64::new(((1.0 + z) / 2.0).sqrt(), 0.0),
                C64::from_polar(((1.0 - z) / 2.0).sqrt(), phi),
            ];
            DensityMatrix::pure(&psi).expect("normalized qubit state")
        }
    }
}

struct Spectrum {
    eigenvalues: Vec<C64>,
    /// Full analysis when the channel is available densely.
    analysis: Option<SpectralData>,
    /// Fixed point reduced to `S`.
    fixed_point: Option<DensityMatrix>,
    /// Subspace-iteration diagnostics for matrix-free channels.
    subspace: Option<(Vec<f64>, usize, bool)>,
    residuals: Option<ChannelResiduals>,
    kraus_completeness: Option<f64>,
    kind: &'static str,
    dim: usize,
}

fn dense_spectrum(
    channel: &Channel,
    reduce: Option<&riqs_core::linalg::TensorFactorization>,
) -> Result<Spectrum, CliError> {
    let residuals = channel.residuals()?;
    let sd = spectral_analysis(channel)?;
    let fixed_point = match reduce {
        Some(f) => {
            let rho = partial_trace(sd.fixed_point.matrix(), f, &[0])?;
            DensityMatrix::from_matrix(rho)?
        }
        None => sd.fixed_point.clone(),
    };
    Ok(Spectrum {
        eigenvalues: sd.eigenvalues.clone(),
        fixed_point: sd.fixed_point_unique.then_some(fixed_point),
        analysis: Some(sd),
        subspace: None,
        residuals: Some(residuals),
        kraus_completeness: None,
        kind: channel.kind().label(),
        dim: channel.dim(),
    })
}

fn compute_spectrum(
    config: &ExperimentConfig,
    model: &ModelSpec,
    modes: &BathModes,
) -> Result<Option<Spectrum>, CliError> {
    let spectrum = match config.mode {
        Mode::Chain => dense_spectrum(&chain_channel(model)?, None)?,
        Mode::Bath => dense_spectrum(&bath_channel_effective(model)?, None)?,
        Mode::Combined => dense_spectrum(&combined_channel(model)?, None)?,
        Mode::Exact => {
            let exact = exact_srbath_channel(model, modes, &ResourceLimits::default())?;
            let completeness = kraus_completeness(&exact.kraus.operators);
            let mut spectrum = match &exact.dense {
                Some(dense) => dense_spectrum(dense, Some(&exact.factors))?,
                None => {
                    let dim = exact.factors.total();
                    let sub = subspace_eigenvalues(
                        |x| exact.apply(x),
                        dim,
                        SUBSPACE_EIGENVALUES,
                        SUBSPACE_MAX_ITERATIONS,
                        SUBSPACE_TOLERANCE,
                    )?;
                    Spectrum {
                        eigenvalues: sub.values,
                        analysis: None,
                        fixed_point: None,
                        subspace: Some((sub.residuals, sub.iterations, sub.converged)),
                        residuals: None,
                        kraus_completeness: None,
                        kind: ChannelKind::ExactSrBath.label(),
                        dim,
                    }
                }
            };
            spectrum.kraus_completeness = Some(completeness);
            spectrum
        }
        Mode::Predictions => return Ok(None),
    };
    Ok(Some(spectrum))
}

/// `max |Σ K†K − I|`.
fn kraus_completeness(ops: &[ComplexMatrix]) -> f64 {
    let Some(first) = ops.first() else { return 0.0 };
    let d = first.cols();
    let mut sum = ComplexMatrix::zeros(d, d);
    for k in ops {
        sum = &sum + &k.adjoint().matmul(k);
    }
    sum.max_abs_diff(&ComplexMatrix::identity(d))
}

fn simulate(config: &ExperimentConfig, model: &ModelSpec, modes: &BathModes) -> Result<Option<Trajectory>, CliError> {
    let options = SimulatorOptions {
        keep_full_states: false,
        check_states: true,
        ..SimulatorOptions::default()
    };
    let sim = match config.mode {
        Mode::Chain => Simulator::chain_only(model, options)?,
        Mode::Bath | Mode::Combined => Simulator::effective(model, options)?,
        Mode::Exact => Simulator::exact(model, modes, &ResourceLimits::default(), options)?,
        Mode::Predictions => return Ok(None),
    };
    let rho_s = initial_system_state(config.initial, config.seed);
    let init = sim.initial_state(&rho_s, modes)?;
    Ok(Some(sim.evolve(&init, config.steps, &[])?))
}

/// Measured `1, e₀, e₊, e₋` of a two-level channel: `e±` nearest the
/// free phases `e^{±iτE_S}`, then of the remaining pair the one nearest
/// 1 is the unit eigenvalue.
pub fn assign_eigenvalues(values: &[C64], tau_e_s: f64) -> Option<[C64; 4]> {
    if values.len() != 4 {
        return None;
    }
    let mut rest: Vec<C64> = values.to_vec();
    let mut take_nearest = |target: C64| {
        let (k, _) = rest
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - target).norm().total_cmp(&(b.1 - target).norm()))?;
        Some(rest.remove(k))
    };
    let e_plus = take_nearest(C64::from_polar(1.0, tau_e_s))?;
    let e_minus = take_nearest(C64::from_polar(1.0, -tau_e_s))?;
    let one = take_nearest(C64::new(1.0, 0.0))?;
    let e0 = take_nearest(C64::new(1.0, 0.0))?;
    Some([one, e0, e_plus, e_minus])
}

fn predictions_for(model: &ModelSpec) -> (Option<ClosedFormPredictions>, Option<String>) {
    match closed_form_predictions(model) {
        Ok(p) => (Some(p), None),
        Err(e) => (None, Some(e.to_string())),
    }
}

fn execute(config: &ExperimentConfig) -> Result<RunOutcome, CliError> {
    use_sequential_kernels();
    let model = mode_model(config);
    let tol = config.tolerances;

    if config.mode == Mode::Predictions {
        // refusal here is the point of the mode
        closed_form_predictions(&model)?;
    }
    let modes = match config.mode {
        Mode::Exact => discretize_bath(&model.bath, model.beta_r)?,
        _ => BathModes::empty(),
    };

    let spectrum = compute_spectrum(config, &model, &modes)?;
    let trajectory = simulate(config, &model, &modes)?;
    let fluxes = match &trajectory {
        Some(t) if config.steps > 0 => {
            let ledger = energy_ledger(t, &model)?;
            Some(asymptotic_rates(&ledger, Some(config.effective_burn_in()))?)
        }
        _ => None,
    };
    let (predictions, unavailable) = predictions_for(&model);
    let second_order = match config.mode {
        Mode::Predictions => Some(rdo_eigenvalues_2nd_order(&model)?),
        _ => predictions.as_ref().map(|p| p.eigenvalues),
    };

    let checks = invariant_checks(&tol, spectrum.as_ref(), trajectory.as_ref(), fluxes.as_ref());

    let mut report = Map::new();
    let mut config_values = Map::new();
    for (k, v) in config.values() {
        if k != "run.output" {
            config_values.insert(k.clone(), Value::String(v.clone()));
        }
    }
    report.insert("config".into(), Value::Object(config_values));
    report.insert("channel".into(), channel_json(spectrum.as_ref()));
    report.insert("spectral".into(), spectral_json(spectrum.as_ref()));
    report.insert("fluxes".into(), fluxes_json(fluxes.as_ref(), model.tau));
    report.insert(
        "predictions".into(),
        predictions.as_ref().map_or(Value::Null, predictions_json),
    );
    report.insert(
        "predictions_unavailable".into(),
        unavailable.map_or(Value::Null, Value::String),
    );

    let measured_eigs = spectrum
        .as_ref()
        .filter(|s| s.dim == 2)
        .and_then(|s| assign_eigenvalues(&s.eigenvalues, model.tau * model.e_s));
    let final_state = trajectory.as_ref().and_then(|t| t.system.last().cloned());
    let fixed_point = spectrum.as_ref().and_then(|s| s.fixed_point.clone());
    report.insert(
        "measured".into(),
        object([
            ("fixed_point", fixed_point.as_ref().map_or(Value::Null, qubit_state)),
            ("final_state", final_state.as_ref().map_or(Value::Null, qubit_state)),
            ("eigenvalues", eigen_quad_json(measured_eigs)),
        ]),
    );
    let comparison = comparison_json(
        predictions.as_ref(),
        fixed_point.as_ref(),
        fluxes
            .as_ref()
            .and_then(|f| f.averages)
            .map(|a| a.per_unit_time(model.tau)),
        measured_eigs,
    )?;
    report.insert("comparison".into(), comparison);
    if config.mode == Mode::Predictions {
        report.insert(
            "second_order_eigenvalues".into(),
            eigen_quad_json(second_order.map(|e| e.as_array())),
        );
    }
    report.insert("invariants".into(), invariants_json(&checks));

    let mut artifacts_text = Vec::new();
    let spectrum_values: Vec<C64> = match (&spectrum, second_order) {
        (Some(s), _) => s.eigenvalues.clone(),
        (None, Some(e)) => {
            let mut v = e.as_array().to_vec();
            sort_eigenvalues(&mut v);
            v
        }
        (None, None) => Vec::new(),
    };
    artifacts_text.push((SPECTRUM_FILE, spectrum_csv(&spectrum_values)));
    if let Some(t) = &trajectory {
        artifacts_text.push((TRAJECTORY_FILE, trajectory_csv(t, &model)?));
    }

    let output = config.output.clone();
    let mut artifacts: Vec<PathBuf> = artifacts_text.iter().map(|(n, _)| output.join(n)).collect();
    artifacts.push(output.join(REPORT_FILE));
    Ok(RunOutcome {
        output,
        artifacts,
        report: Value::Object(report),
        checks,
        tables: artifacts_text,
    })
}

fn write_outcome(outcome: &RunOutcome) -> Result<(), CliError> {
    std::fs::create_dir_all(&outcome.output).map_err(|e| CliError::io(&outcome.output, e))?;
    for (name, text) in &outcome.tables {
        write_text(&outcome.output.join(name), text)?;
    }
    write_json(&outcome.output.join(REPORT_FILE), &outcome.report)
}

fn invariant_checks(
    tol: &CheckTolerances,
    spectrum: Option<&Spectrum>,
    trajectory: Option<&Trajectory>,
    fluxes: Option<&FluxReport>,
) -> Vec<InvariantCheck> {
    let mut checks = Vec::new();
    if let Some(s) = spectrum {
        if let Some(r) = &s.residuals {
            checks.push(InvariantCheck::at_most(
                "channel.trace_preservation",
                r.trace_preservation,
                tol.channel,
            ));
            checks.push(InvariantCheck::at_most(
                "channel.hermiticity_preservation",
                r.hermiticity_preservation,
                tol.channel,
            ));
            checks.push(InvariantCheck::at_least(
                "channel.choi_min_eigenvalue",
                r.choi_min_eigenvalue,
                -tol.positivity,
            ));
        }
        if let Some(c) = s.kraus_completeness {
            checks.push(InvariantCheck::at_most("channel.kraus_completeness", c, tol.channel));
        }
        let spr = s.eigenvalues.iter().map(|z| z.norm()).fold(0.0, f64::max);
        checks.push(InvariantCheck::at_most("spectral.radius", spr, 1.0 + UNIT_TOLERANCE));
    }
    if let Some(t) = trajectory {
        if let Some(w) = worst_state(t) {
            checks.push(InvariantCheck::at_most("state.trace_error", w.trace_error, tol.state));
            checks.push(InvariantCheck::at_most("state.hermiticity", w.hermiticity, tol.state));
            checks.push(InvariantCheck::at_least(
                "state.min_eigenvalue",
                w.min_eigenvalue,
                -tol.positivity,
            ));
        }
    }
    if let Some(f) = fluxes {
        checks.push(InvariantCheck::at_most(
            "flux.balance_residual",
            f.balance_residual,
            tol.balance,
        ));
    }
    checks
}

fn worst_state(t: &Trajectory) -> Option<StateResiduals> {
    t.worst_residuals()
}

fn channel_json(spectrum: Option<&Spectrum>) -> Value {
    let Some(s) = spectrum else { return Value::Null };
    object([
        ("kind", Value::String(s.kind.into())),
        ("dim", Value::from(s.dim)),
        (
            "residuals",
            s.residuals.as_ref().map_or(Value::Null, |r| {
                object([
                    ("trace_preservation", num(r.trace_preservation)),
                    ("hermiticity_preservation", num(r.hermiticity_preservation)),
                    ("choi_min_eigenvalue", num(r.choi_min_eigenvalue)),
                ])
            }),
        ),
        ("kraus_completeness", opt_num(s.kraus_completeness)),
    ])
}

fn spectral_json(spectrum: Option<&Spectrum>) -> Value {
    let Some(s) = spectrum else { return Value::Null };
    let eigenvalues = Value::Array(s.eigenvalues.iter().map(|&z| complex(z)).collect());
    let mut map = Map::new();
    map.insert("eigenvalues".into(), eigenvalues);
    match &s.analysis {
        Some(a) => {
            map.insert("spectral_radius".into(), num(a.spectral_radius));
            map.insert("gap".into(), num(a.gap));
            map.insert("unit_multiplicity".into(), Value::from(a.unit_multiplicity));
            map.insert("fixed_point_unique".into(), Value::Bool(a.fixed_point_unique));
            map.insert("fgr_ok".into(), Value::Bool(a.fgr_ok));
            map.insert("peripheral_semisimple".into(), Value::Bool(a.peripheral_semisimple));
        }
        None => {
            let spr = s.eigenvalues.iter().map(|z| z.norm()).fold(0.0, f64::max);
            map.insert("spectral_radius".into(), num(spr));
        }
    }
    if let Some((residuals, iterations, converged)) = &s.subspace {
        map.insert(
            "subspace".into(),
            object([
                ("residuals", Value::Array(residuals.iter().map(|&r| num(r)).collect())),
                ("iterations", Value::from(*iterations)),
                ("converged", Value::Bool(*converged)),
            ]),
        );
    }
    Value::Object(map)
}

fn averages_json(a: &FluxAverages) -> Value {
    object([
        ("d_e_s", num(a.d_e_s)),
        ("d_e_r", num(a.d_e_r)),
        ("d_e_c", num(a.d_e_c)),
        ("d_e_tot", num(a.d_e_tot)),
        ("d_s", num(a.d_s)),
        ("d_s_second_law", num(a.d_s_second_law)),
    ])
}

fn fluxes_json(fluxes: Option<&FluxReport>, tau: f64) -> Value {
    let Some(f) = fluxes else { return Value::Null };
    let Some(a) = f.averages else { return Value::Null };
    object([
        ("burn_in", Value::from(a.burn_in)),
        ("samples", Value::from(a.samples)),
        ("balance_residual", num(f.balance_residual)),
        ("entropy_discrepancy", num(a.entropy_discrepancy())),
        ("per_step", averages_json(&a)),
        ("per_unit_time", averages_json(&a.per_unit_time(tau))),
    ])
}

fn eigen_quad_json(e: Option<[C64; 4]>) -> Value {
    let Some([one, e0, ep, em]) = e else { return Value::Null };
    object([
        ("one", complex(one)),
        ("e0", complex(e0)),
        ("e_plus", complex(ep)),
        ("e_minus", complex(em)),
    ])
}

fn predictions_json(p: &ClosedFormPredictions) -> Value {
    object([
        ("gamma_th2", num(p.gamma_th2)),
        ("gamma_ri2", num(p.gamma_ri2)),
        ("beta_prime", num(p.beta_prime)),
        ("gamma_mix", num(p.gamma_mix)),
        ("kappa", num(p.kappa)),
        ("rho_plus", qubit_state(&p.rho_plus_s)),
        (
            "fluxes_per_unit_time",
            object([
                ("d_e_c", num(p.d_e_c)),
                ("d_e_r", num(p.d_e_r)),
                ("d_e_tot", num(p.d_e_tot)),
                ("d_s", num(p.d_s)),
            ]),
        ),
        ("eigenvalues", eigen_quad_json(Some(p.eigenvalues.as_array()))),
        ("z_beta_r", num(p.z_beta_r)),
        ("z_beta_prime", num(p.z_beta_prime)),
    ])
}

fn delta(measured: f64, predicted: f64) -> Value {
    let abs = (measured - predicted).abs();
    let rel = if predicted != 0.0 {
        abs / predicted.abs()
    } else {
        f64::NAN
    };
    object([
        ("measured", num(measured)),
        ("predicted", num(predicted)),
        ("abs", num(abs)),
        ("rel", num(rel)),
    ])
}

fn comparison_json(
    predictions: Option<&ClosedFormPredictions>,
    fixed_point: Option<&DensityMatrix>,
    fluxes: Option<FluxAverages>,
    eigs: Option<[C64; 4]>,
) -> Result<Value, CliError> {
    let Some(p) = predictions else { return Ok(Value::Null) };
    let fp = match fixed_point {
        Some(fp) => num(trace_distance(fp.matrix(), p.rho_plus_s.matrix())?),
        None => Value::Null,
    };
    let fluxes = fluxes.map_or(Value::Null, |a| {
        object([
            ("d_e_c", delta(a.d_e_c, p.d_e_c)),
            ("d_e_r", delta(a.d_e_r, p.d_e_r)),
            ("d_e_tot", delta(a.d_e_tot, p.d_e_tot)),
            ("d_s", delta(a.d_s, p.d_s)),
        ])
    });
    let eig = eigs.map_or(Value::Null, |[_, e0, ep, em]| {
        let q = p.eigenvalues;
        object([
            ("e0", num((e0 - q.e0).norm())),
            ("e_plus", num((ep - q.e_plus).norm())),
            ("e_minus", num((em - q.e_minus).norm())),
        ])
    });
    Ok(object([
        ("fixed_point_trace_distance", fp),
        ("fluxes", fluxes),
        ("eigenvalues", eig),
    ]))
}

fn invariants_json(checks: &[InvariantCheck]) -> Value {
    let list = checks
        .iter()
        .map(|c| {
            object([
                ("name", Value::String(c.name.into())),
                ("value", num(c.value)),
                ("limit", num(c.tolerance)),
                ("passed", Value::Bool(c.passed)),
            ])
        })
        .collect();
    object([
        ("checks", Value::Array(list)),
        ("passed", Value::Bool(checks.iter().all(|c| c.passed))),
    ])
}

pub fn spectrum_csv(values: &[C64]) -> String {
    let mut out = String::from("index,re,im,modulus\n");
    for (k, z) in values.iter().enumerate() {
        let _ = writeln!(out, "{k},{},{},{}", fmt_f64(z.re), fmt_f64(z.im), fmt_f64(z.norm()));
    }
    out
}

pub fn trajectory_csv(t: &Trajectory, model: &ModelSpec) -> Result<String, CliError> {
    let ledger = energy_ledger(t, model)?;
    let mut out = String::from("step,p0,p1,coherence_abs,dE_S,dE_R,dE_C,dE_tot\n");
    for (m, rho) in t.system.iter().enumerate() {
        let r = rho.matrix();
        let _ = write!(
            out,
            "{m},{},{},{}",
            fmt_f64(r[(0, 0)].re),
            fmt_f64(r[(1, 1)].re),
            fmt_f64(r[(0, 1)].norm())
        );
        if m == 0 {
            out.push_str(",,,,\n");
        } else {
            let k = m - 1;
            let _ = writeln!(
                out,
                ",{},{},{},{}",
                fmt_f64(ledger.d_e_s[k]),
                fmt_f64(ledger.d_e_r[k]),
                fmt_f64(ledger.d_e_c[k]),
                fmt_f64(ledger.d_e_tot[k])
            );
        }
    }
    Ok(out)
}

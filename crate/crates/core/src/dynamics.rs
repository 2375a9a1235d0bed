//! Repeated-interaction trajectories.
//!
//! Each step adjoins a fresh chain element in `gibbs(E_E, β_E)`, evolves
//! for time `τ` and traces the element out. Elements never interact again,
//! so this contraction is exact. When windowed observables are needed the
//! last `retention` elements are kept untraced instead.
//!
//! Expectations of operators that involve the interacting element after a
//! step are evaluated in the Heisenberg picture: for `O` on `SB ⊗ E`,
//! `⟨O⟩_after = Tr[Õ ρ_before]` with `Õ = Σ_k p_k ⟨k|U†OU|k⟩_E`.

use crate::error::{Error, Result};
use crate::linalg::{expm_unitary, kron_all, partial_trace, ComplexMatrix, TensorFactorization, C64};
use crate::models::{
    build_step_operators, gibbs_populations, gibbs_state, BathModes, DensityMatrix, ModelSpec, ResourceLimits,
    StateResiduals,
};
use crate::rdo::{bath_channel_effective, Channel, KrausMap};

/// Which dynamics a [`Simulator`] runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EngineKind {
    /// Exact unitary steps on `S ⊗ bath ⊗ E`.
    Exact,
    /// `S` only: the effective reservoir step followed by the exact collision.
    Effective,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimulatorOptions {
    /// Number of most recent chain elements kept jointly with `S ⊗ bath`
    /// when windows are recorded.
    pub retention: usize,
    pub record_windows: bool,
    /// Keep every `S ⊗ bath` state, not only the `S` marginals.
    pub keep_full_states: bool,
    /// Compute trace/Hermiticity/positivity residuals of every state.
    pub check_states: bool,
}

impl Default for SimulatorOptions {
    fn default() -> Self {
        Self {
            retention: 1,
            record_windows: false,
            keep_full_states: true,
            check_states: true,
        }
    }
}

/// Raw energy expectations around one step. Fresh-element values refer to
/// the product state before the interaction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepEnergies {
    pub h_s_start: f64,
    pub h_s_end: f64,
    /// Energy change of the reservoir over the step.
    pub delta_reservoir: f64,
    pub h_e_fresh: f64,
    pub h_e_end: f64,
    pub v_se_fresh: f64,
    pub v_se_end: f64,
    pub v_sr_start: f64,
    pub v_sr_end: f64,
}

/// One collision `SB ⊗ E → SB` with its Heisenberg-picture bookkeeping.
#[derive(Debug, Clone)]
struct Collision {
    u: ComplexMatrix,
    kraus: KrausMap,
    populations: Vec<f64>,
    heis_h_e: ComplexMatrix,
    heis_v_se: ComplexMatrix,
    fresh_h_e: ComplexMatrix,
    fresh_v_se: ComplexMatrix,
}

/// `Σ_k p_k ⟨k|O|k⟩_E` for `O` on `SB ⊗ E`, environment last.
fn environment_average(o: &ComplexMatrix, p: &[f64]) -> ComplexMatrix {
    let de = p.len();
    let ds = o.rows() / de;
    ComplexMatrix::from_fn(ds, ds, |a, b| {
        p.iter()
            .enumerate()
            .map(|(k, &pk)| o[(a * de + k, b * de + k)] * pk)
            .sum()
    })
}

impl Collision {
    fn new(u: ComplexMatrix, populations: Vec<f64>, h_e: &ComplexMatrix, v_se: &ComplexMatrix) -> Result<Self> {
        let kraus = KrausMap::from_collision(&u, &populations)?;
        let heis = |o: &ComplexMatrix| environment_average(&u.adjoint().matmul(&o.matmul(&u)), &populations);
        Ok(Self {
            heis_h_e: heis(h_e),
            heis_v_se: heis(v_se),
            fresh_h_e: environment_average(h_e, &populations),
            fresh_v_se: environment_average(v_se, &populations),
            u,
            kraus,
            populations,
        })
    }

    fn chain_energies(&self, rho: &ComplexMatrix) -> [f64; 4] {
        let e = |o: &ComplexMatrix| o.trace_product(rho).re;
        [
            e(&self.fresh_h_e),
            e(&self.heis_h_e),
            e(&self.fresh_v_se),
            e(&self.heis_v_se),
        ]
    }
}

#[derive(Debug, Clone)]
enum Engine {
    Exact {
        collision: Collision,
        h_s: ComplexMatrix,
        h_bath: ComplexMatrix,
        v_sr: ComplexMatrix,
    },
    Effective {
        bath: Channel,
        collision: Collision,
        h_s: ComplexMatrix,
    },
}

/// Stepping engine for one model.
#[derive(Debug, Clone)]
pub struct Simulator {
    model: ModelSpec,
    engine: Engine,
    factors: TensorFactorization,
    options: SimulatorOptions,
}

impl Simulator {
    /// Exact dynamics on `S ⊗ bath` with the given modes.
    pub fn exact(
        model: &ModelSpec,
        modes: &BathModes,
        limits: &ResourceLimits,
        options: SimulatorOptions,
    ) -> Result<Self> {
        let ops = build_step_operators(model, modes, limits)?;
        let u = expm_unitary(&ops.hamiltonian, model.tau)?;
        let p = gibbs_populations(model.e_e, model.beta_e).to_vec();
        let collision = Collision::new(u, p, &ops.h_e, &ops.v_se)?;
        Self::with_engine(
            model,
            Engine::Exact {
                collision,
                h_s: ops.h_s_local,
                h_bath: ops.h_bath_local,
                v_sr: ops.v_sr_local,
            },
            TensorFactorization::new(vec![2, modes.dim()])?,
            options,
        )
    }

    /// `S` alone, chain only (no reservoir modes, `λ₁` ignored).
    pub fn chain_only(model: &ModelSpec, options: SimulatorOptions) -> Result<Self> {
        let chain = model.with_couplings(0.0, model.lambda2);
        Self::exact(&chain, &BathModes::empty(), &ResourceLimits::default(), options)
    }

    /// `S` alone, reservoir replaced by the effective weak-coupling step.
    pub fn effective(model: &ModelSpec, options: SimulatorOptions) -> Result<Self> {
        let bath = bath_channel_effective(model)?;
        let ops = build_step_operators(model, &BathModes::empty(), &ResourceLimits::default())?;
        let h = &(&ops.h_s + &ops.h_e) + &ops.v_se.scale_real(model.lambda2);
        let u = expm_unitary(&h, model.tau)?;
        let p = gibbs_populations(model.e_e, model.beta_e).to_vec();
        let collision = Collision::new(u, p, &ops.h_e, &ops.v_se)?;
        Self::with_engine(
            model,
            Engine::Effective {
                bath,
                collision,
                h_s: ops.h_s_local,
            },
            TensorFactorization::new(vec![2, 1])?,
            options,
        )
    }

    fn with_engine(
        model: &ModelSpec,
        engine: Engine,
        factors: TensorFactorization,
        options: SimulatorOptions,
    ) -> Result<Self> {
        if options.record_windows && options.retention == 0 {
            return Err(Error::InvalidParameter {
                name: "retention",
                reason: "window recording needs a retention depth of at least 1".into(),
            });
        }
        Ok(Self {
            model: model.clone(),
            engine,
            factors,
            options,
        })
    }

    pub fn kind(&self) -> EngineKind {
        match self.engine {
            Engine::Exact { .. } => EngineKind::Exact,
            Engine::Effective { .. } => EngineKind::Effective,
        }
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn options(&self) -> &SimulatorOptions {
        &self.options
    }

    /// Dimension of the carried state (`S ⊗ bath`, or `S`).
    pub fn state_dim(&self) -> usize {
        self.factors.total()
    }

    fn collision(&self) -> &Collision {
        match &self.engine {
            Engine::Exact { collision, .. } | Engine::Effective { collision, .. } => collision,
        }
    }

    /// Lifts a state of `S` to the carried space (tensoring the bath Gibbs
    /// state for the exact engine).
    pub fn initial_state(&self, rho_s: &DensityMatrix, modes: &BathModes) -> Result<DensityMatrix> {
        if rho_s.dim() != 2 {
            return Err(Error::DimensionMismatch(format!(
                "expected a state of S, got dimension {}",
                rho_s.dim()
            )));
        }
        let joint = match self.kind() {
            EngineKind::Exact => {
                if modes.dim() != self.factors.dims()[1] {
                    return Err(Error::DimensionMismatch(format!(
                        "bath of dimension {} given to a simulator built for {}",
                        modes.dim(),
                        self.factors.dims()[1]
                    )));
                }
                crate::linalg::kron(rho_s.matrix(), modes.gibbs_state().matrix())
            }
            EngineKind::Effective => rho_s.matrix().clone(),
        };
        Ok(DensityMatrix::new_unchecked(joint, self.factors.clone()))
    }

    fn check_dim(&self, state: &DensityMatrix) -> Result<()> {
        if state.dim() != self.state_dim() {
            return Err(Error::DimensionMismatch(format!(
                "state of dimension {} given to a simulator on dimension {}",
                state.dim(),
                self.state_dim()
            )));
        }
        Ok(())
    }

    /// One step with energy bookkeeping.
    pub fn step(&self, state: &DensityMatrix) -> Result<(DensityMatrix, StepEnergies)> {
        self.check_dim(state)?;
        let rho = state.matrix();
        let e = |o: &ComplexMatrix, r: &ComplexMatrix| o.trace_product(r).re;
        let (next, energies) = match &self.engine {
            Engine::Exact {
                collision,
                h_s,
                h_bath,
                v_sr,
            } => {
                let next = collision.kraus.apply(rho);
                let [h_e_fresh, h_e_end, v_se_fresh, v_se_end] = collision.chain_energies(rho);
                let energies = StepEnergies {
                    h_s_start: e(h_s, rho),
                    h_s_end: e(h_s, &next),
                    delta_reservoir: e(h_bath, &next) - e(h_bath, rho),
                    h_e_fresh,
                    h_e_end,
                    v_se_fresh,
                    v_se_end,
                    v_sr_start: e(v_sr, rho),
                    v_sr_end: e(v_sr, &next),
                };
                (next, energies)
            }
            Engine::Effective { bath, collision, h_s } => {
                let mid = bath.apply(rho);
                let next = collision.kraus.apply(&mid);
                let [h_e_fresh, h_e_end, v_se_fresh, v_se_end] = collision.chain_energies(&mid);
                let energies = StepEnergies {
                    h_s_start: e(h_s, rho),
                    h_s_end: e(h_s, &next),
                    delta_reservoir: -(e(h_s, &mid) - e(h_s, rho)),
                    h_e_fresh,
                    h_e_end,
                    v_se_fresh,
                    v_se_end,
                    v_sr_start: 0.0,
                    v_sr_end: 0.0,
                };
                (next, energies)
            }
        };
        Ok((DensityMatrix::new_unchecked(next, state.factors().clone()), energies))
    }

    /// `steps` steps from `initial`, recording the expectations of each
    /// operator in `observables` (acting on the carried space) at every
    /// step boundary.
    pub fn evolve(&self, initial: &DensityMatrix, steps: usize, observables: &[ComplexMatrix]) -> Result<Trajectory> {
        self.check_dim(initial)?;
        for o in observables {
            if o.rows() != self.state_dim() || !o.is_square() {
                return Err(Error::DimensionMismatch(format!(
                    "observable of shape {}x{} on a state of dimension {}",
                    o.rows(),
                    o.cols(),
                    self.state_dim()
                )));
            }
        }
        let mut traj = Trajectory {
            engine: self.kind(),
            lambda1: self.model.lambda1,
            lambda2: self.model.lambda2,
            system: Vec::with_capacity(steps + 1),
            full: self.options.keep_full_states.then(|| Vec::with_capacity(steps + 1)),
            energies: Vec::with_capacity(steps),
            observables: vec![Vec::with_capacity(steps + 1); observables.len()],
            residuals: Vec::new(),
            windows: self.options.record_windows.then(|| Vec::with_capacity(steps)),
            retention: self.options.retention,
            chain_state: gibbs_state(self.model.e_e, self.model.beta_e),
        };

        let mut window: Option<(ComplexMatrix, usize)> =
            self.options.record_windows.then(|| (initial.matrix().clone(), 0));
        let mut state = initial.clone();
        self.record(&mut traj, &state, observables)?;
        for _ in 0..steps {
            let (next, energies) = self.step(&state)?;
            if let Some((joint, held)) = window.take() {
                let (joint, held) = self.advance_window(&joint, held)?;
                if let Some(ws) = traj.windows.as_mut() {
                    let mut dims = vec![self.state_dim()];
                    dims.extend(std::iter::repeat_n(2, held));
                    ws.push(DensityMatrix::new_unchecked(
                        joint.clone(),
                        TensorFactorization::new(dims)?,
                    ));
                }
                window = Some((joint, held));
            }
            traj.energies.push(energies);
            state = next;
            self.record(&mut traj, &state, observables)?;
        }
        Ok(traj)
    }

    fn record(&self, traj: &mut Trajectory, state: &DensityMatrix, observables: &[ComplexMatrix]) -> Result<()> {
        let rho_s = partial_trace(state.matrix(), &self.factors, &[0])?;
        traj.system
            .push(DensityMatrix::new_unchecked(rho_s, TensorFactorization::single(2)));
        for (o, series) in observables.iter().zip(traj.observables.iter_mut()) {
            series.push(o.trace_product(state.matrix()));
        }
        if self.options.check_states {
            traj.residuals.push(state.residuals()?);
        }
        if let Some(full) = traj.full.as_mut() {
            full.push(state.clone());
        }
        Ok(())
    }

    /// One step of the retained joint state `SB ⊗ E_{oldest} ⊗ … ⊗ E_{newest}`.
    fn advance_window(&self, joint: &ComplexMatrix, held: usize) -> Result<(ComplexMatrix, usize)> {
        let collision = self.collision();
        let u = &collision.u;
        let ds = self.state_dim();
        let dr = 1usize << held;
        let fresh = ComplexMatrix::from_real_diag(&collision.populations);
        let extended = crate::linalg::kron(joint, &fresh);

        let pre = match &self.engine {
            // the reservoir substep acts on S only
            Engine::Effective { bath, .. } => bath_on_joint(bath, &extended, dr * 2),
            Engine::Exact { .. } => extended,
        };

        // V = U on (SB, E_new), identity on the retained block.
        let n = ds * dr * 2;
        let split = |idx: usize| (idx / (dr * 2), (idx / 2) % dr, idx % 2);
        let v = ComplexMatrix::from_fn(n, n, |r, c| {
            let (a, x, e) = split(r);
            let (b, y, f) = split(c);
            if x == y {
                u[(a * 2 + e, b * 2 + f)]
            } else {
                C64::new(0.0, 0.0)
            }
        });
        let evolved = v.conjugate(&pre);
        let held = held + 1;
        if held > self.options.retention {
            let mut dims = vec![ds];
            dims.extend(std::iter::repeat_n(2, held));
            let keep: Vec<usize> = std::iter::once(0).chain(2..=held).collect();
            let traced = partial_trace(&evolved, &TensorFactorization::new(dims)?, &keep)?;
            Ok((traced, held - 1))
        } else {
            Ok((evolved, held))
        }
    }
}

/// Applies a channel on `S` to the first factor of `S ⊗ rest`.
fn bath_on_joint(bath: &Channel, joint: &ComplexMatrix, rest: usize) -> ComplexMatrix {
    let mut out = ComplexMatrix::zeros(joint.rows(), joint.cols());
    for x in 0..rest {
        for y in 0..rest {
            let block = ComplexMatrix::from_fn(2, 2, |a, b| joint[(a * rest + x, b * rest + y)]);
            let image = bath.apply(&block);
            for a in 0..2 {
                for b in 0..2 {
                    out[(a * rest + x, b * rest + y)] = image[(a, b)];
                }
            }
        }
    }
    out
}

/// Recorded run: `steps + 1` states and `steps` energy records.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub engine: EngineKind,
    pub lambda1: f64,
    pub lambda2: f64,
    /// Marginal states of `S`, `ρ_0 … ρ_m`.
    pub system: Vec<DensityMatrix>,
    /// Carried states (`S ⊗ bath`), when kept.
    pub full: Option<Vec<DensityMatrix>>,
    pub energies: Vec<StepEnergies>,
    /// `observables[k][m]` is the expectation of observable `k` in state `m`.
    pub observables: Vec<Vec<C64>>,
    /// Residuals of every carried state, when checked.
    pub residuals: Vec<StateResiduals>,
    /// `windows[m − 1]`: joint post-interaction state of the carried space
    /// and the last `min(m, retention)` elements (oldest first) after step `m`.
    pub windows: Option<Vec<DensityMatrix>>,
    pub retention: usize,
    /// State of every fresh chain element.
    pub chain_state: DensityMatrix,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.energies.len()
    }

    pub fn len(&self) -> usize {
        self.system.len()
    }

    pub fn is_empty(&self) -> bool {
        self.system.is_empty()
    }

    /// Largest residuals over all checked states.
    pub fn worst_residuals(&self) -> Option<StateResiduals> {
        self.residuals.iter().copied().reduce(|a, b| StateResiduals {
            hermiticity: a.hermiticity.max(b.hermiticity),
            trace_error: a.trace_error.max(b.trace_error),
            min_eigenvalue: a.min_eigenvalue.min(b.min_eigenvalue),
        })
    }
}

/// Single step of the exact engine on `S ⊗ bath`.
pub fn step(state: &DensityMatrix, model: &ModelSpec, modes: &BathModes) -> Result<DensityMatrix> {
    let options = SimulatorOptions {
        keep_full_states: false,
        check_states: false,
        ..SimulatorOptions::default()
    };
    let sim = Simulator::exact(model, modes, &ResourceLimits::default(), options)?;
    Ok(sim.step(state)?.0)
}

/// `m` exact steps from `initial` on `S ⊗ bath`.
pub fn evolve(
    initial: &DensityMatrix,
    m: usize,
    model: &ModelSpec,
    modes: &BathModes,
    observables: &[ComplexMatrix],
) -> Result<Trajectory> {
    let sim = Simulator::exact(model, modes, &ResourceLimits::default(), SimulatorOptions::default())?;
    sim.evolve(initial, m, observables)
}

/// `A ⊗ B_{−l} ⊗ … ⊗ B_0 ⊗ B_1 ⊗ … ⊗ B_r` on the carried space and a
/// window of chain elements around the one interacting at the current step.
#[derive(Debug, Clone)]
pub struct InstantaneousObservable {
    pub a: ComplexMatrix,
    /// `B_{−l}, …, B_0`.
    pub past: Vec<ComplexMatrix>,
    /// `B_1, …, B_r`.
    pub future: Vec<ComplexMatrix>,
}

impl InstantaneousObservable {
    pub fn new(a: ComplexMatrix, past: Vec<ComplexMatrix>, future: Vec<ComplexMatrix>) -> Result<Self> {
        if past.is_empty() {
            return Err(Error::WindowOutOfRange(
                "the window must contain the current element B_0".into(),
            ));
        }
        if past.iter().chain(&future).any(|b| b.rows() != 2 || b.cols() != 2) {
            return Err(Error::DimensionMismatch(
                "window operators act on one chain element".into(),
            ));
        }
        Ok(Self { a, past, future })
    }

    pub fn l(&self) -> usize {
        self.past.len() - 1
    }

    pub fn r(&self) -> usize {
        self.future.len()
    }
}

/// Expectation of `obs` after step `m`: the joint term on the stored
/// window times `Π_j Tr[gibbs(E_E, β_E) B_j]` for the future elements,
/// which are fresh by construction.
pub fn instantaneous_expectation(traj: &Trajectory, obs: &InstantaneousObservable, m: usize) -> Result<C64> {
    let windows = traj
        .windows
        .as_ref()
        .ok_or(Error::MissingBookkeeping("recorded windows"))?;
    let l = obs.l();
    if m == 0 || m > windows.len() || m < l + 1 {
        return Err(Error::WindowOutOfRange(format!(
            "step {m} with l = {l} needs 1 ≤ m − l and m ≤ {}",
            windows.len()
        )));
    }
    if l + 1 > traj.retention {
        return Err(Error::WindowOutOfRange(format!(
            "l = {l} needs a retention depth of at least {}, trajectory has {}",
            l + 1,
            traj.retention
        )));
    }
    let joint = &windows[m - 1];
    let dims = joint.factors().dims();
    let held = dims.len() - 1;
    if obs.a.rows() != dims[0] {
        return Err(Error::DimensionMismatch(format!(
            "A acts on dimension {}, carried space has {}",
            obs.a.rows(),
            dims[0]
        )));
    }
    let keep: Vec<usize> = std::iter::once(0).chain(held - l..=held).collect();
    let reduced = partial_trace(joint.matrix(), joint.factors(), &keep)?;
    let mut factors: Vec<&ComplexMatrix> = vec![&obs.a];
    factors.extend(obs.past.iter());
    let operator = kron_all(&factors);
    let fresh: C64 = obs.future.iter().map(|b| traj.chain_state.expectation(b)).product();
    Ok(operator.trace_product(&reduced) * fresh)
}

/// Expectation of an operator on the carried space in state `m`.
pub fn expectation(traj: &Trajectory, o: &ComplexMatrix, m: usize) -> Result<C64> {
    let full = traj.full.as_ref().ok_or(Error::MissingBookkeeping("full states"))?;
    let state = full
        .get(m)
        .ok_or_else(|| Error::WindowOutOfRange(format!("state {m} of {}", full.len())))?;
    Ok(state.expectation(o))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{kron, trace_distance, vectorize, ONE};
    use crate::models::{discretize_bath, number, two_level_hamiltonian, BathSpec, FormFactor};
    use crate::perturbation::beta_prime;
    use crate::rdo::{chain_channel, spectral_analysis};
    use approx::assert_abs_diff_eq;

    fn model(e_s: f64, e_e: f64, beta_e: f64, beta_r: f64, tau: f64, l1: f64, l2: f64) -> ModelSpec {
        let bath = BathSpec::new(FormFactor::gaussian(), 0, 4.0 * e_s.max(e_e)).unwrap();
        ModelSpec::new(e_s, e_e, beta_e, beta_r, tau, l1, l2, bath).unwrap()
    }

    fn mixed_state() -> DensityMatrix {
        DensityMatrix::from_matrix(ComplexMatrix::from_fn(2, 2, |r, c| match (r, c) {
            (0, 0) => C64::new(0.25, 0.0),
            (1, 1) => C64::new(0.75, 0.0),
            (0, 1) => C64::new(0.2, 0.1),
            _ => C64::new(0.2, -0.1),
        }))
        .unwrap()
    }

    #[test]
    fn free_evolution_keeps_populations() {
        let m = model(1.0, 1.3, 1.0, 1.0, 0.7, 0.0, 0.0);
        let rho = mixed_state();
        let next = step(&rho, &m, &BathModes::empty()).unwrap();
        assert_abs_diff_eq!(next.matrix()[(1, 1)].re, 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(next.matrix()[(0, 0)].re, 0.25, epsilon = 1e-15);
    }

    #[test]
    fn step_equals_chain_channel() {
        let m = model(1.0, 1.4, 0.9, 1.0, 0.8, 0.0, 0.3);
        let rho = mixed_state();
        let direct = step(&rho, &m, &BathModes::empty()).unwrap();
        let via = chain_channel(&m).unwrap().apply(rho.matrix());
        assert!(direct.matrix().approx_eq(&via, 1e-12));
    }

    #[test]
    fn chain_only_follows_population_recursion() {
        let m = model(1.0, 1.5, 1.0, 1.0, 1.0, 0.0, 0.2);
        let sim = Simulator::chain_only(&m, SimulatorOptions::default()).unwrap();
        let traj = sim.evolve(&mixed_state(), 60, &[]).unwrap();
        let (lambda, delta): (f64, f64) = (0.2, 0.5);
        let omega = (delta * delta + 4.0 * lambda * lambda).sqrt();
        let p = 4.0 * lambda * lambda / (omega * omega) * (0.5 * omega).sin().powi(2);
        let q = gibbs_populations(1.5, 1.0)[1];
        let mut p1 = 0.75;
        for rho in &traj.system {
            assert_abs_diff_eq!(rho.matrix()[(1, 1)].re, p1, epsilon = 1e-12);
            p1 = p1 * (1.0 - p) + p * q;
        }
    }

    #[test]
    fn chain_only_converges_within_gap_bound() {
        let m = model(1.0, 1.5, 1.0, 1.0, 1.0, 0.0, 0.4);
        let sd = spectral_analysis(&chain_channel(&m).unwrap()).unwrap();
        let target = gibbs_state(1.0, beta_prime(&m));
        let sim = Simulator::chain_only(&m, SimulatorOptions::default()).unwrap();
        let traj = sim.evolve(&DensityMatrix::excited(), 150, &[]).unwrap();
        let d0 = trace_distance(traj.system[0].matrix(), target.matrix()).unwrap();
        for (n, rho) in traj.system.iter().enumerate() {
            let d = trace_distance(rho.matrix(), target.matrix()).unwrap();
            assert!(d <= 2.0 * d0 * (-(n as f64) * sd.gap).exp() + 1e-12, "n={n}");
        }
    }

    #[test]
    fn trajectory_shape_and_determinism() {
        let m = model(1.0, 1.2, 1.0, 0.7, 0.9, 0.1, 0.2);
        let sim = Simulator::effective(&m, SimulatorOptions::default()).unwrap();
        let rho = mixed_state();
        let t0 = sim.evolve(&rho, 0, &[number()]).unwrap();
        assert_eq!(t0.len(), 1);
        assert!(t0.energies.is_empty());
        let a = sim.evolve(&rho, 25, &[number(), two_level_hamiltonian(1.0)]).unwrap();
        let b = sim.evolve(&rho, 25, &[number(), two_level_hamiltonian(1.0)]).unwrap();
        assert_eq!(a.len(), 26);
        assert_eq!(a.observables, b.observables);
        assert_eq!(a.energies, b.energies);
        let worst = a.worst_residuals().unwrap();
        assert!(worst.within(1e-10));
    }

    #[test]
    fn effective_step_equals_combined_channel() {
        let m = model(1.0, 1.2, 1.0, 0.7, 0.9, 0.1, 0.2);
        let sim = Simulator::effective(&m, SimulatorOptions::default()).unwrap();
        let rho = mixed_state();
        let (next, _) = sim.step(&rho).unwrap();
        let c = crate::rdo::combined_channel(&m).unwrap();
        let expected = c.matrix().apply(&vectorize(rho.matrix()));
        assert!(vectorize(next.matrix())
            .iter()
            .zip(&expected)
            .all(|(a, b)| (a - b).norm() < 1e-13));
    }

    #[test]
    fn exact_engine_conserves_total_energy_per_step() {
        let mut m = model(1.0, 1.3, 1.0, 1.0, 0.5, 0.2, 0.15);
        m.bath.n_modes = 3;
        let modes = discretize_bath(&m.bath, m.beta_r).unwrap();
        let sim = Simulator::exact(&m, &modes, &ResourceLimits::default(), SimulatorOptions::default()).unwrap();
        let init = sim.initial_state(&DensityMatrix::excited(), &modes).unwrap();
        let traj = sim.evolve(&init, 10, &[]).unwrap();
        for e in &traj.energies {
            let ds = e.h_s_end - e.h_s_start;
            let dc = e.h_e_end - e.h_e_fresh;
            let tot = m.lambda2 * (e.v_se_fresh - e.v_se_end) + m.lambda1 * (e.v_sr_start - e.v_sr_end);
            assert!((tot - (ds + e.delta_reservoir + dc)).abs() < 1e-12);
        }
        assert!(traj.worst_residuals().unwrap().within(1e-10));
    }

    #[test]
    fn instantaneous_identity_window_is_plain_expectation() {
        let m = model(1.0, 1.3, 1.0, 1.0, 0.8, 0.0, 0.3);
        let options = SimulatorOptions {
            record_windows: true,
            ..SimulatorOptions::default()
        };
        let sim = Simulator::chain_only(&m, options).unwrap();
        let traj = sim.evolve(&mixed_state(), 5, &[number()]).unwrap();
        let id = ComplexMatrix::identity(2);
        let obs = InstantaneousObservable::new(number(), vec![id.clone()], vec![id.clone(), id]).unwrap();
        for step in 1..=5 {
            let v = instantaneous_expectation(&traj, &obs, step).unwrap();
            assert!((v - traj.observables[0][step]).norm() < 1e-14);
        }
        assert!(instantaneous_expectation(&traj, &obs, 0).is_err());
    }

    #[test]
    fn future_factor_is_fresh_gibbs_energy() {
        let m = model(1.0, 1.3, 0.8, 1.0, 0.8, 0.0, 0.3);
        let options = SimulatorOptions {
            record_windows: true,
            ..SimulatorOptions::default()
        };
        let sim = Simulator::chain_only(&m, options).unwrap();
        let traj = sim.evolve(&mixed_state(), 3, &[]).unwrap();
        let id = ComplexMatrix::identity(2);
        let h_e = two_level_hamiltonian(1.3);
        let plain = InstantaneousObservable::new(id.clone(), vec![id.clone()], vec![]).unwrap();
        let with_future = InstantaneousObservable::new(id.clone(), vec![id], vec![h_e.clone()]).unwrap();
        let a = instantaneous_expectation(&traj, &plain, 2).unwrap();
        let b = instantaneous_expectation(&traj, &with_future, 2).unwrap();
        let expected = gibbs_state(1.3, 0.8).matrix().trace_product(&h_e);
        assert!((b - a * expected).norm() < 1e-15);
    }

    #[test]
    fn retained_window_matches_untraced_brute_force() {
        let m = model(1.0, 1.3, 0.8, 1.0, 0.8, 0.0, 0.35);
        let options = SimulatorOptions {
            retention: 2,
            record_windows: true,
            ..SimulatorOptions::default()
        };
        let sim = Simulator::chain_only(&m, options).unwrap();
        let rho = mixed_state();
        let traj = sim.evolve(&rho, 2, &[]).unwrap();
        let h_e = two_level_hamiltonian(1.3);
        let obs = InstantaneousObservable::new(number(), vec![h_e.clone(), h_e.clone()], vec![]).unwrap();
        let measured = instantaneous_expectation(&traj, &obs, 2).unwrap();

        // Brute force on S ⊗ E₁ ⊗ E₂ without any tracing.
        let ops = build_step_operators(&m, &BathModes::empty(), &ResourceLimits::default()).unwrap();
        let h = &(&ops.h_s + &ops.h_e) + &ops.v_se.scale_real(m.lambda2);
        let u = expm_unitary(&h, m.tau).unwrap(); // on S ⊗ E
        let g = gibbs_state(1.3, 0.8);
        let id = ComplexMatrix::identity(2);
        let u1 = kron(&u, &id); // S ⊗ E₁ ⊗ E₂, acting on S, E₁
                                // U on S ⊗ E₂ with E₁ in between
        let u2 = ComplexMatrix::from_fn(8, 8, |r, c| {
            let (a, x, e) = (r / 4, (r / 2) % 2, r % 2);
            let (b, y, f) = (c / 4, (c / 2) % 2, c % 2);
            if x == y {
                u[(a * 2 + e, b * 2 + f)]
            } else {
                C64::new(0.0, 0.0)
            }
        });
        let joint = kron_all(&[rho.matrix(), g.matrix(), g.matrix()]);
        let joint = u2.conjugate(&u1.conjugate(&joint));
        let brute = kron_all(&[&number(), &h_e, &h_e]).trace_product(&joint);
        assert!((measured - brute).norm() < 1e-13, "{measured} vs {brute}");

        let deep = InstantaneousObservable::new(number(), vec![h_e.clone(), h_e.clone(), h_e], vec![]).unwrap();
        assert!(instantaneous_expectation(&traj, &deep, 2).is_err());
    }

    #[test]
    fn effective_window_agrees_with_states() {
        let m = model(1.0, 1.2, 1.0, 0.7, 0.9, 0.1, 0.2);
        let options = SimulatorOptions {
            retention: 2,
            record_windows: true,
            ..SimulatorOptions::default()
        };
        let sim = Simulator::effective(&m, options).unwrap();
        let traj = sim.evolve(&mixed_state(), 4, &[number()]).unwrap();
        let id = ComplexMatrix::identity(2);
        let obs = InstantaneousObservable::new(number(), vec![id.clone(), id], vec![]).unwrap();
        for step in 2..=4 {
            let v = instantaneous_expectation(&traj, &obs, step).unwrap();
            assert!((v - traj.observables[0][step]).norm() < 1e-13);
        }
        let tr = traj.windows.as_ref().unwrap()[3].matrix().trace();
        assert!((tr - ONE).norm() < 1e-13);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let mut m = model(1.0, 1.3, 1.0, 1.0, 0.5, 0.2, 0.15);
        m.bath.n_modes = 1;
        let modes = discretize_bath(&m.bath, m.beta_r).unwrap();
        assert!(matches!(
            step(&DensityMatrix::ground(), &m, &modes),
            Err(Error::DimensionMismatch(_))
        ));
    }
}

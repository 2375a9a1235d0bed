//! Physical ingredients of the model: the two-level system `S`, the chain
//! elements `E`, the fermionic reservoir `R` and their couplings.
//!
//! Two-level operators use the basis `{|0⟩ = ground, |1⟩ = excited}`. The
//! joint space of one step is ordered `S ⊗ bath ⊗ E`; the bath is a chain of
//! fermionic modes in the occupation basis (0 = empty, 1 = occupied) with
//! Jordan–Wigner parity strings.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{Assumption, Error, Result};
use crate::linalg::{
    hermitian_eigenvalues, kron, kron_all, partial_trace, ComplexMatrix, TensorFactorization, Tolerances, C64, ONE,
};

/// Tolerance for [`DensityMatrix`] invariants.
pub const STATE_TOLERANCE: f64 = 1e-10;

/// Radial profile of the reservoir form factor `f(k)`, `k ∈ ℝ³`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Profile {
    /// `f(k) = e^{−|k|²/2}`
    Gaussian,
    /// `f(k) = 1` for `|k| ≤ cutoff`, 0 beyond.
    Flat { cutoff: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FormFactor {
    pub profile: Profile,
    /// Overall scale `c` in `c·f`.
    pub amplitude: f64,
}

impl Default for FormFactor {
    fn default() -> Self {
        Self::gaussian()
    }
}

impl FormFactor {
    pub fn gaussian() -> Self {
        Self {
            profile: Profile::Gaussian,
            amplitude: 1.0,
        }
    }

    pub fn flat(cutoff: f64) -> Self {
        Self {
            profile: Profile::Flat { cutoff },
            amplitude: 1.0,
        }
    }

    pub fn with_amplitude(mut self, amplitude: f64) -> Self {
        self.amplitude = amplitude;
        self
    }

    /// Looks up a preset by its configuration name.
    pub fn from_name(name: &str, cutoff: Option<f64>) -> Result<Self> {
        match name {
            "gaussian" => Ok(Self::gaussian()),
            "flat" => {
                let cutoff = cutoff.unwrap_or(1.0);
                if !(cutoff > 0.0 && cutoff.is_finite()) {
                    return Err(Error::InvalidParameter {
                        name: "bath.cutoff",
                        reason: format!("must be positive, got {cutoff}"),
                    });
                }
                Ok(Self::flat(cutoff))
            }
            other => Err(Error::InvalidParameter {
                name: "bath.form_factor",
                reason: format!("unknown preset `{other}` (expected `gaussian` or `flat`)"),
            }),
        }
    }

    pub fn name(&self) -> &'static str {
        match self.profile {
            Profile::Gaussian => "gaussian",
            Profile::Flat { .. } => "flat",
        }
    }

    /// `f` as a function of `|k|`.
    pub fn radial(&self, k: f64) -> f64 {
        let shape = match self.profile {
            Profile::Gaussian => (-0.5 * k * k).exp(),
            Profile::Flat { cutoff } => {
                if k.abs() <= cutoff {
                    1.0
                } else {
                    0.0
                }
            }
        };
        self.amplitude * shape
    }

    /// `f(k)` at a point of momentum space.
    pub fn value(&self, k: [f64; 3]) -> f64 {
        self.radial((k[0] * k[0] + k[1] * k[1] + k[2] * k[2]).sqrt())
    }

    /// Energies `r = |k|²` at which the spectral weight is not smooth
    /// (besides the origin).
    pub fn kinks(&self) -> Vec<f64> {
        match self.profile {
            Profile::Gaussian => Vec::new(),
            Profile::Flat { cutoff } => vec![cutoff * cutoff],
        }
    }
}

/// `‖f(√E)‖²_𝔊 = ∫_{S²} |f(√E σ)|² dσ`; `4π|f(√E)|²` for radial profiles.
pub fn spectral_weight(f: &FormFactor, energy: f64) -> f64 {
    let r = f.radial(energy.max(0.0).sqrt());
    4.0 * PI * r * r
}

/// Coupling density `J(ε) = ½√ε ‖f(√ε)‖²_𝔊` of the reservoir field at
/// one-particle energy `ε ≥ 0`, from the radial measure `(√r/2) dr dσ`.
pub fn coupling_density(f: &FormFactor, energy: f64) -> f64 {
    if energy <= 0.0 {
        return 0.0;
    }
    0.5 * energy.sqrt() * spectral_weight(f, energy)
}

/// Squared fiber norm `‖f_β(s)‖²_𝔊 = ½ √|s| / (1 + e^{−βs}) · ‖f(√|s|)‖²_𝔊`
/// of the thermal form factor in the two-sided energy coordinate.
pub fn effective_form_factor(f: &FormFactor, beta_r: f64, s: f64) -> f64 {
    let a = s.abs();
    0.5 * a.sqrt() * logistic(beta_r * s) * spectral_weight(f, a)
}

/// `1 / (1 + e^{−x})`.
fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Fermi–Dirac occupation `1 / (e^{βε} + 1)`.
pub fn fermi_dirac(beta: f64, energy: f64) -> f64 {
    logistic(-beta * energy)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BathSpec {
    pub form_factor: FormFactor,
    pub n_modes: usize,
    /// Upper end of the one-particle energy window `[0, s_max]`.
    pub s_max: f64,
}

impl BathSpec {
    pub fn new(form_factor: FormFactor, n_modes: usize, s_max: f64) -> Result<Self> {
        let spec = Self {
            form_factor,
            n_modes,
            s_max,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// `s_max = 4·max(E_S, E_E)`.
    pub fn default_cutoff(e_s: f64, e_e: f64) -> f64 {
        4.0 * e_s.max(e_e)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s_max > 0.0 && self.s_max.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "bath.s_max",
                reason: format!("must be positive, got {}", self.s_max),
            });
        }
        if !self.form_factor.amplitude.is_finite() {
            return Err(Error::InvalidParameter {
                name: "bath.amplitude",
                reason: "must be finite".into(),
            });
        }
        if let Profile::Flat { cutoff } = self.form_factor.profile {
            if !(cutoff > 0.0 && cutoff.is_finite()) {
                return Err(Error::InvalidParameter {
                    name: "bath.cutoff",
                    reason: format!("must be positive, got {cutoff}"),
                });
            }
        }
        Ok(())
    }
}

/// Full physical configuration of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    /// Energy gap of `S`.
    pub e_s: f64,
    /// Energy gap of each chain element.
    pub e_e: f64,
    /// Inverse temperature of the chain elements.
    pub beta_e: f64,
    /// Inverse temperature of the reservoir.
    pub beta_r: f64,
    /// Duration of one interaction.
    pub tau: f64,
    /// `S`–reservoir coupling.
    pub lambda1: f64,
    /// `S`–chain coupling.
    pub lambda2: f64,
    pub bath: BathSpec,
}

/// Status of the non-degeneracy assumptions of the perturbative results.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Validity {
    pub detuning_ok: bool,
    pub phase_ok: bool,
}

impl Validity {
    pub fn all_ok(&self) -> bool {
        self.detuning_ok && self.phase_ok
    }
}

/// Relative tolerance used to decide that `x` is an integer multiple.
const LATTICE_TOLERANCE: f64 = 1e-9;

fn near_nonzero_integer(x: f64) -> bool {
    let k = x.round();
    k != 0.0 && (x - k).abs() <= LATTICE_TOLERANCE * k.abs().max(1.0)
}

impl ModelSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        e_s: f64,
        e_e: f64,
        beta_e: f64,
        beta_r: f64,
        tau: f64,
        lambda1: f64,
        lambda2: f64,
        bath: BathSpec,
    ) -> Result<Self> {
        let m = Self {
            e_s,
            e_e,
            beta_e,
            beta_r,
            tau,
            lambda1,
            lambda2,
            bath,
        };
        m.validate()?;
        Ok(m)
    }

    /// A chain-only model with no reservoir modes and `λ₁ = 0`.
    pub fn chain_only(e_s: f64, e_e: f64, beta_e: f64, tau: f64, lambda2: f64) -> Result<Self> {
        let bath = BathSpec::new(FormFactor::gaussian(), 0, BathSpec::default_cutoff(e_s, e_e))?;
        Self::new(e_s, e_e, beta_e, 0.0, tau, 0.0, lambda2, bath)
    }

    pub fn with_couplings(&self, lambda1: f64, lambda2: f64) -> Self {
        Self {
            lambda1,
            lambda2,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("system.E_S", self.e_s),
            ("chain.E_E", self.e_e),
            ("step.tau", self.tau),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be strictly positive, got {v}"),
                });
            }
        }
        let betas = [("chain.beta", self.beta_e), ("bath.beta", self.beta_r)];
        for (name, v) in betas {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be non-negative, got {v}"),
                });
            }
        }
        for (name, v) in [("coupling.lambda1", self.lambda1), ("coupling.lambda2", self.lambda2)] {
            if !v.is_finite() {
                return Err(Error::InvalidParameter {
                    name,
                    reason: "must be finite".into(),
                });
            }
        }
        self.bath.validate()
    }

    pub fn validity(&self) -> Validity {
        Validity {
            detuning_ok: !near_nonzero_integer(self.tau * (self.e_e - self.e_s) / (2.0 * PI)),
            phase_ok: !near_nonzero_integer(self.tau * self.e_s / PI),
        }
    }

    /// Fails with the first violated non-degeneracy assumption.
    pub fn require_admissible(&self) -> Result<()> {
        let v = self.validity();
        if !v.detuning_ok {
            return Err(Error::AssumptionViolated(Assumption::DetuningNotMultipleOfTwoPi));
        }
        if !v.phase_ok {
            return Err(Error::AssumptionViolated(Assumption::PhaseNotMultipleOfPi));
        }
        Ok(())
    }
}

/// A Hermitian, positive, unit-trace operator with its tensor structure.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: ComplexMatrix,
    factors: TensorFactorization,
}

/// Deviations of an operator from the density-matrix invariants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateResiduals {
    pub hermiticity: f64,
    pub trace_error: f64,
    pub min_eigenvalue: f64,
}

impl StateResiduals {
    pub fn within(&self, tol: f64) -> bool {
        self.hermiticity <= tol && self.trace_error <= tol && self.min_eigenvalue >= -tol
    }
}

impl DensityMatrix {
    /// Validates the invariants at [`STATE_TOLERANCE`].
    pub fn new(matrix: ComplexMatrix, factors: TensorFactorization) -> Result<Self> {
        factors.check(matrix.rows())?;
        if !matrix.is_square() {
            return Err(Error::InvalidState("not square".into()));
        }
        let state = Self { matrix, factors };
        let res = state.residuals()?;
        if !res.within(STATE_TOLERANCE) {
            return Err(Error::InvalidState(format!(
                "hermiticity {:.3e}, trace error {:.3e}, min eigenvalue {:.3e}",
                res.hermiticity, res.trace_error, res.min_eigenvalue
            )));
        }
        Ok(state)
    }

    /// Skips validation; for states produced by trace-preserving maps.
    pub(crate) fn new_unchecked(matrix: ComplexMatrix, factors: TensorFactorization) -> Self {
        debug_assert_eq!(factors.total(), matrix.rows());
        Self { matrix, factors }
    }

    /// A single-factor state.
    pub fn from_matrix(matrix: ComplexMatrix) -> Result<Self> {
        let n = matrix.rows();
        Self::new(matrix, TensorFactorization::single(n))
    }

    pub fn pure(psi: &[C64]) -> Result<Self> {
        let m = ComplexMatrix::from_fn(psi.len(), psi.len(), |r, c| psi[r] * psi[c].conj());
        Self::from_matrix(m)
    }

    pub fn ground() -> Self {
        Self::new_unchecked(
            ComplexMatrix::from_real_diag(&[1.0, 0.0]),
            TensorFactorization::single(2),
        )
    }

    pub fn excited() -> Self {
        Self::new_unchecked(
            ComplexMatrix::from_real_diag(&[0.0, 1.0]),
            TensorFactorization::single(2),
        )
    }

    pub fn maximally_mixed(n: usize) -> Self {
        Self::new_unchecked(
            ComplexMatrix::identity(n).scale_real(1.0 / n as f64),
            TensorFactorization::single(n),
        )
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    pub fn factors(&self) -> &TensorFactorization {
        &self.factors
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn residuals(&self) -> Result<StateResiduals> {
        let hermiticity = self.matrix.hermiticity_residual();
        let trace_error = (self.matrix.trace() - ONE).norm();
        let min_eigenvalue = hermitian_eigenvalues(&self.matrix.hermitian_part(), &Tolerances::default())?
            .first()
            .copied()
            .unwrap_or(0.0);
        Ok(StateResiduals {
            hermiticity,
            trace_error,
            min_eigenvalue,
        })
    }

    /// `Tr(ρ A)`.
    pub fn expectation(&self, op: &ComplexMatrix) -> C64 {
        self.matrix.trace_product(op)
    }

    pub fn tensor(&self, other: &DensityMatrix) -> DensityMatrix {
        DensityMatrix {
            matrix: kron(&self.matrix, &other.matrix),
            factors: self.factors.join(&other.factors),
        }
    }

    pub fn partial_trace(&self, keep: &[usize]) -> Result<DensityMatrix> {
        let matrix = partial_trace(&self.matrix, &self.factors, keep)?;
        let mut keep = keep.to_vec();
        keep.sort_unstable();
        let dims = keep.iter().map(|&k| self.factors.dims()[k]).collect();
        Ok(DensityMatrix {
            matrix,
            factors: TensorFactorization::new(dims)?,
        })
    }

    /// Attaches a tensor structure to the same matrix.
    pub fn with_factors(self, factors: TensorFactorization) -> Result<Self> {
        factors.check(self.matrix.rows())?;
        Ok(Self {
            matrix: self.matrix,
            factors,
        })
    }
}

/// `a = |0⟩⟨1|`.
pub fn lowering() -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(2, 2);
    m[(0, 1)] = ONE;
    m
}

/// `a* = |1⟩⟨0|`.
pub fn raising() -> ComplexMatrix {
    lowering().adjoint()
}

/// `a*a = |1⟩⟨1|`.
pub fn number() -> ComplexMatrix {
    ComplexMatrix::from_real_diag(&[0.0, 1.0])
}

pub fn sigma_x() -> ComplexMatrix {
    &lowering() + &raising()
}

pub fn sigma_z() -> ComplexMatrix {
    ComplexMatrix::from_real_diag(&[1.0, -1.0])
}

/// `E a*a`.
pub fn two_level_hamiltonian(energy: f64) -> ComplexMatrix {
    number().scale_real(energy)
}

/// Boltzmann weights `(1, e^{−βE}) / (1 + e^{−βE})` of a two-level system.
pub fn gibbs_populations(energy: f64, beta: f64) -> [f64; 2] {
    let w = (-beta * energy).exp();
    let z = 1.0 + w;
    [1.0 / z, w / z]
}

/// Partition function `Z = 1 + e^{−βE}` of a two-level system.
pub fn partition_function(energy: f64, beta: f64) -> f64 {
    1.0 + (-beta * energy).exp()
}

pub fn gibbs_state(energy: f64, beta: f64) -> DensityMatrix {
    let p = gibbs_populations(energy, beta);
    DensityMatrix::new_unchecked(ComplexMatrix::from_real_diag(&p), TensorFactorization::single(2))
}

/// `v_SE = a_S ⊗ a*_E + a*_S ⊗ a_E` on `S ⊗ E`.
pub fn spin_spin_interaction() -> ComplexMatrix {
    &kron(&lowering(), &raising()) + &kron(&raising(), &lowering())
}

/// Finite-mode reservoir: energies, couplings and thermal occupations.
#[derive(Debug, Clone, PartialEq)]
pub struct BathModes {
    pub energies: Vec<f64>,
    pub couplings: Vec<f64>,
    pub occupations: Vec<f64>,
}

impl BathModes {
    pub fn empty() -> Self {
        Self {
            energies: Vec::new(),
            couplings: Vec::new(),
            occupations: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    /// Hilbert-space dimension `2^n`.
    pub fn dim(&self) -> usize {
        1 << self.len()
    }

    /// `Σ_j g_j²`.
    pub fn total_weight(&self) -> f64 {
        self.couplings.iter().map(|g| g * g).sum()
    }

    /// Product Gibbs state `⊗_j diag(1 − n_j, n_j)`.
    pub fn gibbs_state(&self) -> DensityMatrix {
        let factors: Vec<ComplexMatrix> = self
            .occupations
            .iter()
            .map(|&n| ComplexMatrix::from_real_diag(&[1.0 - n, n]))
            .collect();
        let refs: Vec<&ComplexMatrix> = factors.iter().collect();
        DensityMatrix::new_unchecked(kron_all(&refs), TensorFactorization::single(self.dim()))
    }
}

/// Uniform midpoint grid over `[0, s_max]` with `g_j² = Δε·J(ε_j)` and
/// Fermi–Dirac occupations at `β_R`.
pub fn discretize_bath(spec: &BathSpec, beta_r: f64) -> Result<BathModes> {
    spec.validate()?;
    let n = spec.n_modes;
    if n == 0 {
        return Ok(BathModes::empty());
    }
    let width = spec.s_max / n as f64;
    let energies: Vec<f64> = (0..n).map(|j| (j as f64 + 0.5) * width).collect();
    let couplings = energies
        .iter()
        .map(|&e| (width * coupling_density(&spec.form_factor, e)).sqrt())
        .collect();
    let occupations = energies.iter().map(|&e| fermi_dirac(beta_r, e)).collect();
    Ok(BathModes {
        energies,
        couplings,
        occupations,
    })
}

/// Jordan–Wigner annihilators `c_j = Z^{⊗j} ⊗ a ⊗ I^{⊗(n−j−1)}` on `2^n`
/// dimensions.
pub fn fermion_annihilators(n: usize) -> Vec<ComplexMatrix> {
    let (z, a, id) = (sigma_z(), lowering(), ComplexMatrix::identity(2));
    (0..n)
        .map(|j| {
            let factors: Vec<&ComplexMatrix> = (0..n)
                .map(|k| match k.cmp(&j) {
                    std::cmp::Ordering::Less => &z,
                    std::cmp::Ordering::Equal => &a,
                    std::cmp::Ordering::Greater => &id,
                })
                .collect();
            kron_all(&factors)
        })
        .collect()
}

/// `Σ_j ε_j c*_j c_j`.
pub fn bath_hamiltonian(modes: &BathModes) -> ComplexMatrix {
    // Diagonal in the occupation basis; bit (n−1−j) of the index is mode j.
    let n = modes.len();
    let diag: Vec<f64> = (0..modes.dim())
        .map(|idx| {
            (0..n)
                .filter(|&j| idx >> (n - 1 - j) & 1 == 1)
                .map(|j| modes.energies[j])
                .sum()
        })
        .collect();
    ComplexMatrix::from_real_diag(&diag)
}

/// Field operator `φ(B) = (B + B*)/√2` with `B = Σ_j g_j c_j`.
pub fn bath_field(modes: &BathModes) -> ComplexMatrix {
    let cs = fermion_annihilators(modes.len());
    let mut b = ComplexMatrix::zeros(modes.dim(), modes.dim());
    for (c, &g) in cs.iter().zip(&modes.couplings) {
        b = &b + &c.scale_real(g);
    }
    (&b + &b.adjoint()).scale_real(FRAC_1_SQRT_2)
}

/// Dimension guards for the dense paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResourceLimits {
    /// Largest bath for which the step Hamiltonian is built densely.
    pub max_hamiltonian_modes: usize,
    /// Largest bath for which the `S ⊗ bath` channel matrix is formed.
    pub max_dense_channel_modes: usize,
}

impl Default for ResourceLimits {
    fn default() -> Self {
        Self {
            max_hamiltonian_modes: 10,
            max_dense_channel_modes: 4,
        }
    }
}

/// All operators of one interaction step, embedded in `S ⊗ bath ⊗ E`.
/// Coupling operators are stored without their coupling constants.
#[derive(Debug, Clone)]
pub struct StepOperators {
    pub factors: TensorFactorization,
    pub h_s: ComplexMatrix,
    pub h_bath: ComplexMatrix,
    pub h_e: ComplexMatrix,
    pub v_sr: ComplexMatrix,
    pub v_se: ComplexMatrix,
    pub hamiltonian: ComplexMatrix,
    /// `h_S`, `H_bath` and `v_SR` restricted to `S ⊗ bath`.
    pub h_s_local: ComplexMatrix,
    pub h_bath_local: ComplexMatrix,
    pub v_sr_local: ComplexMatrix,
}

impl StepOperators {
    /// Dimension of `S ⊗ bath`.
    pub fn system_dim(&self) -> usize {
        self.factors.dims()[0] * self.factors.dims()[1]
    }
}

pub fn build_step_operators(model: &ModelSpec, modes: &BathModes, limits: &ResourceLimits) -> Result<StepOperators> {
    if modes.len() > limits.max_hamiltonian_modes {
        return Err(Error::ResourceLimit {
            what: "bath mode count",
            requested: modes.len(),
            limit: limits.max_hamiltonian_modes,
            advice: "use the quadrature-only rate path or reduce bath.n_modes",
        });
    }
    let db = modes.dim();
    let (i2, ib) = (ComplexMatrix::identity(2), ComplexMatrix::identity(db));

    let h_s_local = kron(&two_level_hamiltonian(model.e_s), &ib);
    let h_bath_local = kron(&i2, &bath_hamiltonian(modes));
    let v_sr_local = kron(&sigma_x(), &bath_field(modes));

    let h_s = kron(&h_s_local, &i2);
    let h_bath = kron(&h_bath_local, &i2);
    let v_sr = kron(&v_sr_local, &i2);
    let h_e = kron_all(&[&i2, &ib, &two_level_hamiltonian(model.e_e)]);
    let v_se = kron_all(&[&lowering(), &ib, &raising()]);
    let v_se = &v_se + &v_se.adjoint();

    let mut hamiltonian = &(&h_s + &h_bath) + &h_e;
    hamiltonian = &hamiltonian + &v_sr.scale_real(model.lambda1);
    hamiltonian = &hamiltonian + &v_se.scale_real(model.lambda2);

    Ok(StepOperators {
        factors: TensorFactorization::new(vec![2, db, 2])?,
        h_s,
        h_bath,
        h_e,
        v_sr,
        v_se,
        hamiltonian,
        h_s_local,
        h_bath_local,
        v_sr_local,
    })
}

/// `H = h_S + H_bath + h_E + λ₁ v_SR + λ₂ v_SE` on `S ⊗ bath ⊗ E`.
pub fn build_step_hamiltonian(model: &ModelSpec, modes: &BathModes) -> Result<ComplexMatrix> {
    Ok(build_step_operators(model, modes, &ResourceLimits::default())?.hamiltonian)
}

/// Excited-state population `⟨1|ρ|1⟩` of a two-level state.
pub fn excited_population(rho: &ComplexMatrix) -> f64 {
    rho[(1, 1)].re
}

//! One-step reduced dynamics operators and their spectral analysis.
//!
//! A [`Channel`] stores the `d² × d²` matrix of a linear map on `d × d`
//! operators in the column-stacking basis, so composition is a matrix
//! product. Steps against a fresh chain element are built from the Kraus
//! operators `K_{lk} = √p_k ⟨l|U|k⟩_E` of the step propagator.

use std::fmt;

use crate::error::{Error, Result};
use crate::linalg::{
    devectorize, eig_general, expm_unitary, hermitian_eigenvalues, kron, numerical_rank, vectorize, ComplexMatrix,
    TensorFactorization, Tolerances, C64, ONE, ZERO,
};
use crate::models::{build_step_operators, gibbs_populations, BathModes, DensityMatrix, ModelSpec, ResourceLimits};
use crate::perturbation::{gamma_th2, lamb_integral};

/// Which construction produced a channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelKind {
    Chain,
    BathEffective,
    Combined,
    ExactSrBath,
    Custom,
}

impl ChannelKind {
    pub fn label(&self) -> &'static str {
        match self {
            ChannelKind::Chain => "chain",
            ChannelKind::BathEffective => "bath-effective",
            ChannelKind::Combined => "combined",
            ChannelKind::ExactSrBath => "exact-srbath",
            ChannelKind::Custom => "custom",
        }
    }
}

impl fmt::Display for ChannelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Linear map on `dim × dim` operators as a `dim² × dim²` matrix acting on
/// column-stacked vectors.
#[derive(Debug, Clone)]
pub struct Channel {
    matrix: ComplexMatrix,
    dim: usize,
    kind: ChannelKind,
}

/// Structural residuals of a channel; all should be near zero, except the
/// Choi eigenvalue which should be non-negative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelResiduals {
    /// `‖vec(I)ᵀ M − vec(I)ᵀ‖_max`.
    pub trace_preservation: f64,
    /// `max_ij ‖Φ(E_ji) − Φ(E_ij)†‖_max`.
    pub hermiticity_preservation: f64,
    /// Smallest eigenvalue of the (Hermitized) Choi matrix.
    pub choi_min_eigenvalue: f64,
}

impl ChannelResiduals {
    pub fn within(&self, tp_tol: f64, cp_tol: f64) -> bool {
        self.trace_preservation <= tp_tol
            && self.hermiticity_preservation <= tp_tol
            && self.choi_min_eigenvalue >= -cp_tol
    }
}

impl Channel {
    pub fn from_matrix(matrix: ComplexMatrix, kind: ChannelKind) -> Result<Self> {
        let n = matrix.rows();
        let dim = (n as f64).sqrt().round() as usize;
        if !matrix.is_square() || dim * dim != n {
            return Err(Error::DimensionMismatch(format!(
                "channel matrix must be d²×d², got {}x{}",
                matrix.rows(),
                matrix.cols()
            )));
        }
        Ok(Self { matrix, dim, kind })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: ComplexMatrix::identity(dim * dim),
            dim,
            kind: ChannelKind::Custom,
        }
    }

    /// `X ↦ U X U†`, with matrix `conj(U) ⊗ U`.
    pub fn unitary_conjugation(u: &ComplexMatrix) -> Self {
        Self {
            matrix: kron(&u.map(|z| z.conj()), u),
            dim: u.rows(),
            kind: ChannelKind::Custom,
        }
    }

    pub fn from_kraus(kraus: &KrausMap, kind: ChannelKind) -> Self {
        Self {
            matrix: kraus.to_matrix(),
            dim: kraus.dim,
            kind,
        }
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> ChannelKind {
        self.kind
    }

    pub fn with_kind(mut self, kind: ChannelKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn apply(&self, x: &ComplexMatrix) -> ComplexMatrix {
        devectorize(&self.matrix.apply(&vectorize(x)), self.dim)
    }

    pub fn apply_state(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        if rho.dim() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "state of dimension {} given to a channel on dimension {}",
                rho.dim(),
                self.dim
            )));
        }
        Ok(DensityMatrix::new_unchecked(
            self.apply(rho.matrix()),
            rho.factors().clone(),
        ))
    }

    /// `next ∘ self`: apply `self` first.
    pub fn then(&self, next: &Channel) -> Result<Channel> {
        if self.dim != next.dim {
            return Err(Error::DimensionMismatch(format!(
                "cannot compose channels on dimensions {} and {}",
                self.dim, next.dim
            )));
        }
        Ok(Channel {
            matrix: next.matrix.matmul(&self.matrix),
            dim: self.dim,
            kind: ChannelKind::Custom,
        })
    }

    pub fn power(&self, n: usize) -> Channel {
        let mut result = ComplexMatrix::identity(self.matrix.rows());
        let mut base = self.matrix.clone();
        let mut k = n;
        while k > 0 {
            if k & 1 == 1 {
                result = result.matmul(&base);
            }
            base = base.matmul(&base);
            k >>= 1;
        }
        Channel {
            matrix: result,
            dim: self.dim,
            kind: self.kind,
        }
    }

    /// `C = Σ_ij E_ij ⊗ Φ(E_ij)`.
    pub fn choi(&self) -> ComplexMatrix {
        let d = self.dim;
        ComplexMatrix::from_fn(d * d, d * d, |row, col| {
            let (i, k) = (row / d, row % d);
            let (j, l) = (col / d, col % d);
            self.matrix[(l * d + k, j * d + i)]
        })
    }

    pub fn residuals(&self) -> Result<ChannelResiduals> {
        let d = self.dim;
        let m = &self.matrix;
        let mut trace_preservation: f64 = 0.0;
        for col in 0..d * d {
            let s: C64 = (0..d).map(|c| m[(c * d + c, col)]).sum();
            let target = if col % (d + 1) == 0 { ONE } else { ZERO };
            trace_preservation = trace_preservation.max((s - target).norm());
        }
        let mut hermiticity_preservation: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    for l in 0..d {
                        // Φ(E_ij)[k,l] vs conj(Φ(E_ji)[l,k])
                        let a = m[(l * d + k, j * d + i)];
                        let b = m[(k * d + l, i * d + j)].conj();
                        hermiticity_preservation = hermiticity_preservation.max((a - b).norm());
                    }
                }
            }
        }
        let choi = self.choi().hermitian_part();
        let eig = hermitian_eigenvalues(&choi, &Tolerances::default())?;
        Ok(ChannelResiduals {
            trace_preservation,
            hermiticity_preservation,
            choi_min_eigenvalue: eig.first().copied().unwrap_or(0.0),
        })
    }
}

/// Kraus representation `X ↦ Σ_k K_k X K_k†`, usable without forming the
/// `d² × d²` matrix.
#[derive(Debug, Clone)]
pub struct KrausMap {
    pub operators: Vec<ComplexMatrix>,
    dim: usize,
}

impl KrausMap {
    pub fn new(operators: Vec<ComplexMatrix>) -> Result<Self> {
        let dim = operators.first().map(|k| k.rows()).unwrap_or(0);
        if operators.iter().any(|k| k.rows() != dim || k.cols() != dim) {
            return Err(Error::DimensionMismatch(
                "Kraus operators must share one square shape".into(),
            ));
        }
        Ok(Self { operators, dim })
    }

    /// Kraus operators of `X ↦ Tr_env[U (X ⊗ diag(p)) U†]`, where the
    /// environment is the last tensor factor of `u`.
    pub fn from_collision(u: &ComplexMatrix, env_populations: &[f64]) -> Result<Self> {
        let de = env_populations.len();
        if de == 0 || !u.rows().is_multiple_of(de) || !u.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "propagator of dimension {} does not factor over an environment of dimension {de}",
                u.rows()
            )));
        }
        let ds = u.rows() / de;
        let mut ops = Vec::with_capacity(de * de);
        for (k, &p) in env_populations.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let w = p.sqrt();
            for l in 0..de {
                ops.push(ComplexMatrix::from_fn(ds, ds, |a, b| u[(a * de + l, b * de + k)] * w));
            }
        }
        Self::new(ops)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn apply(&self, x: &ComplexMatrix) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(self.dim, self.dim);
        for k in &self.operators {
            out = &out + &k.matmul(x).matmul(&k.adjoint());
        }
        out
    }

    /// `Σ_k conj(K_k) ⊗ K_k`.
    pub fn to_matrix(&self) -> ComplexMatrix {
        let n = self.dim * self.dim;
        let mut m = ComplexMatrix::zeros(n, n);
        for k in &self.operators {
            m = &m + &kron(&k.map(|z| z.conj()), k);
        }
        m
    }
}

fn chain_populations(model: &ModelSpec) -> Vec<f64> {
    gibbs_populations(model.e_e, model.beta_e).to_vec()
}

/// Exact step of `S` against one chain element, `λ₁` ignored:
/// `X ↦ Tr_E[e^{−iτH}(X ⊗ gibbs(E_E, β_E))e^{iτH}]`, `H = h_S + h_E + λ₂ v_SE`.
pub fn chain_channel(model: &ModelSpec) -> Result<Channel> {
    let ops = build_step_operators(model, &BathModes::empty(), &ResourceLimits::default())?;
    let h = &(&ops.h_s + &ops.h_e) + &ops.v_se.scale_real(model.lambda2);
    let u = expm_unitary(&h, model.tau)?;
    let kraus = KrausMap::from_collision(&u, &chain_populations(model))?;
    Ok(Channel::from_kraus(&kraus, ChannelKind::Chain))
}

/// Weak-coupling reservoir step `exp(τλ₁²G)` for a two-level dissipator `G`
/// with detailed balance at `β_R`, total population rate `γ_th⁽²⁾`,
/// coherence decay `γ_th⁽²⁾/2` and coherence frequency shift `PV/4`.
///
/// In the basis `[ρ00, ρ10, ρ01, ρ11]`, `ρ01` (which rotates as `e^{iτE_S}`
/// under free evolution) picks up `exp(−τλ₁²(γ_th⁽²⁾/2 + i PV/4))`.
pub fn bath_channel_effective(model: &ModelSpec) -> Result<Channel> {
    model.require_admissible()?;
    let l1sq = model.lambda1 * model.lambda1;
    let mut m = ComplexMatrix::zeros(4, 4);
    if l1sq == 0.0 {
        return Ok(Channel {
            matrix: ComplexMatrix::identity(4),
            dim: 2,
            kind: ChannelKind::BathEffective,
        });
    }
    let gamma = gamma_th2(model);
    let q = gibbs_populations(model.e_s, model.beta_r)[1];
    let decay = (-model.tau * l1sq * gamma).exp();
    let relaxed = 1.0 - decay;

    m[(0, 0)] = C64::new(1.0 - q * relaxed, 0.0);
    m[(3, 0)] = C64::new(q * relaxed, 0.0);
    m[(0, 3)] = C64::new((1.0 - q) * relaxed, 0.0);
    m[(3, 3)] = C64::new(decay + q * relaxed, 0.0);

    let shift = if gamma > 0.0 { 0.25 * lamb_integral(model) } else { 0.0 };
    let coherence = (C64::new(-0.5 * gamma, -shift) * (model.tau * l1sq)).exp();
    m[(2, 2)] = coherence;
    m[(1, 1)] = coherence.conj();
    Ok(Channel {
        matrix: m,
        dim: 2,
        kind: ChannelKind::BathEffective,
    })
}

/// `chain_channel ∘ bath_channel_effective`: the reservoir acts first.
pub fn combined_channel(model: &ModelSpec) -> Result<Channel> {
    let bath = bath_channel_effective(model)?;
    let chain = chain_channel(model)?;
    Ok(bath.then(&chain)?.with_kind(ChannelKind::Combined))
}

/// `‖chain ∘ bath − bath ∘ chain‖_max`, a diagnostic of the arbitrary
/// composition order in [`combined_channel`].
pub fn composition_order_defect(model: &ModelSpec) -> Result<f64> {
    let bath = bath_channel_effective(model)?;
    let chain = chain_channel(model)?;
    let forward = bath.then(&chain)?;
    let backward = chain.then(&bath)?;
    Ok(forward.matrix.max_abs_diff(&backward.matrix))
}

/// Exact step of `S ⊗ bath` with the full three-body Hamiltonian.
#[derive(Debug, Clone)]
pub struct ExactChannel {
    pub kraus: KrausMap,
    /// Present when the bath is small enough for the dense matrix.
    pub dense: Option<Channel>,
    pub factors: TensorFactorization,
}

impl ExactChannel {
    pub fn apply(&self, x: &ComplexMatrix) -> ComplexMatrix {
        self.kraus.apply(x)
    }
}

pub fn exact_srbath_channel(model: &ModelSpec, modes: &BathModes, limits: &ResourceLimits) -> Result<ExactChannel> {
    let ops = build_step_operators(model, modes, limits)?;
    let u = expm_unitary(&ops.hamiltonian, model.tau)?;
    let kraus = KrausMap::from_collision(&u, &chain_populations(model))?;
    let dense =
        (modes.len() <= limits.max_dense_channel_modes).then(|| Channel::from_kraus(&kraus, ChannelKind::ExactSrBath));
    Ok(ExactChannel {
        kraus,
        dense,
        factors: TensorFactorization::new(vec![2, modes.dim()])?,
    })
}

/// Tolerance for treating an eigenvalue as equal to 1 or as peripheral.
pub const UNIT_TOLERANCE: f64 = 1e-9;
/// Relative singular-value threshold for the semisimplicity rank test.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct SpectralData {
    pub eigenvalues: Vec<C64>,
    pub spectral_radius: f64,
    /// `−ln |λ₂|`, with `λ₂` the second eigenvalue in the sorted list.
    pub gap: f64,
    /// Projection of the maximally mixed state onto the eigenvalue-1
    /// eigenspace, Hermitized and normalized to unit trace.
    pub fixed_point: DensityMatrix,
    pub unit_multiplicity: usize,
    pub fixed_point_unique: bool,
    pub fgr_ok: bool,
    pub peripheral_semisimple: bool,
}

pub fn spectral_analysis(c: &Channel) -> Result<SpectralData> {
    let eig = eig_general(c.matrix())?;
    let n = eig.values.len();
    let d = c.dim();
    let spectral_radius = eig.values.first().map(|z| z.norm()).unwrap_or(0.0);
    let unit: Vec<usize> = (0..n)
        .filter(|&k| (eig.values[k] - ONE).norm() <= UNIT_TOLERANCE)
        .collect();
    if unit.is_empty() {
        return Err(Error::InvalidState(format!(
            "channel has no eigenvalue 1 (spectral radius {spectral_radius:.3e})"
        )));
    }

    // P vec(I/d) with P = Σ_{λ_k = 1} r_k l_k†.
    let mixed = vectorize(&ComplexMatrix::identity(d).scale_real(1.0 / d as f64));
    let mut fixed = vec![ZERO; n];
    for &k in &unit {
        let weight: C64 = (0..n).map(|r| eig.left[(r, k)].conj() * mixed[r]).sum();
        for (r, f) in fixed.iter_mut().enumerate() {
            *f += eig.right[(r, k)] * weight;
        }
    }
    let fp = devectorize(&fixed, d).hermitian_part();
    let tr = fp.trace().re;
    let fixed_point = DensityMatrix::new_unchecked(fp.scale_real(1.0 / tr), TensorFactorization::single(d));

    let second = eig.values.get(1).map(|z| z.norm()).unwrap_or(0.0);
    let gap = if second > 0.0 {
        -second.ln().min(0.0)
    } else {
        f64::INFINITY
    };
    let others_inside = eig
        .values
        .iter()
        .enumerate()
        .filter(|(k, _)| !unit.contains(k))
        .all(|(_, z)| z.norm() <= 1.0 - UNIT_TOLERANCE);
    let fgr_ok = unit.len() == 1 && others_inside && gap > 0.0;
    let peripheral_semisimple = peripheral_semisimplicity(c.matrix(), &eig.values)?;

    Ok(SpectralData {
        eigenvalues: eig.values,
        spectral_radius,
        gap,
        fixed_point,
        unit_multiplicity: unit.len(),
        fixed_point_unique: unit.len() == 1,
        fgr_ok,
        peripheral_semisimple,
    })
}

/// Clusters of peripheral eigenvalues (`|λ| ≥ 1 − 1e-9`), each represented
/// by its mean.
fn peripheral_clusters(values: &[C64]) -> Vec<(C64, usize)> {
    let mut clusters: Vec<(C64, usize)> = Vec::new();
    for &z in values.iter().filter(|z| z.norm() >= 1.0 - UNIT_TOLERANCE) {
        match clusters.iter_mut().find(|(mu, _)| (*mu - z).norm() <= UNIT_TOLERANCE) {
            Some((mu, count)) => {
                *mu = (*mu * *count as f64 + z) / (*count + 1) as f64;
                *count += 1;
            }
            None => clusters.push((z, 1)),
        }
    }
    clusters
}

fn peripheral_semisimplicity(m: &ComplexMatrix, values: &[C64]) -> Result<bool> {
    for (mu, _) in peripheral_clusters(values) {
        let shifted = m - &ComplexMatrix::identity(m.rows()).scale(mu);
        let r1 = numerical_rank(&shifted, RANK_TOLERANCE)?;
        let r2 = numerical_rank(&shifted.matmul(&shifted), RANK_TOLERANCE)?;
        if r1 != r2 {
            return Ok(false);
        }
    }
    Ok(true)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionReport {
    pub spectral_radius: f64,
    pub spr_ok: bool,
    pub peripheral: Vec<C64>,
    pub semisimple: bool,
}

pub fn check_contraction(c: &Channel) -> Result<ContractionReport> {
    let values = crate::linalg::eigenvalues_general(c.matrix())?;
    let spectral_radius = values.first().map(|z| z.norm()).unwrap_or(0.0);
    let peripheral: Vec<C64> = values
        .iter()
        .copied()
        .filter(|z| z.norm() >= 1.0 - UNIT_TOLERANCE)
        .collect();
    Ok(ContractionReport {
        spectral_radius,
        spr_ok: spectral_radius <= 1.0 + UNIT_TOLERANCE,
        semisimple: peripheral_semisimplicity(c.matrix(), &values)?,
        peripheral,
    })
}

/// Result of [`subspace_eigenvalues`].
#[derive(Debug, Clone)]
pub struct SubspaceEigen {
    pub values: Vec<C64>,
    /// `‖A v − λ v‖₂` of each returned Ritz pair.
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Leading `k` eigenvalues of a linear operator on `dim × dim` matrices
/// given only by its action, via block subspace iteration with
/// Rayleigh–Ritz extraction. The block carries `k + oversample` vectors
/// seeded deterministically.
pub fn subspace_eigenvalues(
    apply: impl Fn(&ComplexMatrix) -> ComplexMatrix,
    dim: usize,
    k: usize,
    max_iterations: usize,
    tol: f64,
) -> Result<SubspaceEigen> {
    let n = dim * dim;
    let block = (k + 5).min(n);
    let op = |v: &[C64]| vectorize(&apply(&devectorize(v, dim)));

    // Deterministic, well-spread starting block.
    let mut q: Vec<Vec<C64>> = (0..block)
        .map(|j| {
            (0..n)
                .map(|i| {
                    let t = (i * (2 * j + 1) + j) as f64;
                    C64::new((0.37 * t + 0.11 * j as f64).sin(), (0.73 * t).cos() * 0.5)
                })
                .collect()
        })
        .collect();
    orthonormalize(&mut q);

    let mut values = Vec::new();
    let mut residuals = vec![f64::INFINITY; k];
    for it in 1..=max_iterations {
        let aq: Vec<Vec<C64>> = q.iter().map(|v| op(v)).collect();
        // Rayleigh–Ritz on span(q).
        let h = ComplexMatrix::from_fn(block, block, |r, c| dot(&q[r], &aq[c]));
        let small = eig_general(&h)?;
        values = small.values[..k.min(block)].to_vec();
        residuals = (0..values.len())
            .map(|j| {
                let y = small.right.column(j);
                let mut v = vec![ZERO; n];
                let mut av = vec![ZERO; n];
                for (b, &coef) in y.iter().enumerate() {
                    axpy(&mut v, coef, &q[b]);
                    axpy(&mut av, coef, &aq[b]);
                }
                let nv = norm(&v);
                axpy(&mut av, -values[j], &v);
                norm(&av) / nv.max(f64::MIN_POSITIVE)
            })
            .collect();
        if residuals.iter().all(|&r| r <= tol) {
            return Ok(SubspaceEigen {
                values,
                residuals,
                iterations: it,
                converged: true,
            });
        }
        q = aq;
        orthonormalize(&mut q);
    }
    Ok(SubspaceEigen {
        values,
        residuals,
        iterations: max_iterations,
        converged: false,
    })
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[C64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn axpy(y: &mut [C64], a: C64, x: &[C64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Modified Gram–Schmidt, applied twice for stability.
fn orthonormalize(vs: &mut [Vec<C64>]) {
    for _ in 0..2 {
        for j in 0..vs.len() {
            for i in 0..j {
                let p = dot(&vs[i], &vs[j]);
                let (head, tail) = vs.split_at_mut(j);
                axpy(&mut tail[0], -p, &head[i]);
            }
            let nv = norm(&vs[j]);
            if nv > 0.0 {
                vs[j].iter_mut().for_each(|z| *z /= nv);
            }
        }
    }
}

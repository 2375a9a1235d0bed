//! Closed-form weak-coupling predictions: relaxation rates, the
//! renormalized chain temperature, the asymptotic state of `S`, energy
//! fluxes, entropy production and the second-order eigenvalues of the
//! one-step reduced dynamics operator.
//!
//! All formulas are evaluated exactly as stated, including the Lamb term
//! `PV ∫ √|s| ‖f(√|s|)‖² / (s − E_S) ds`, which carries no thermal factor.
//! Rates are per unit time; fluxes are the per-unit-time leading-order
//! values (multiply by `τ` for per-step quantities).

use std::f64::consts::PI;

use crate::error::{Assumption, Error, Result};
use crate::linalg::{ComplexMatrix, TensorFactorization, C64, I, ONE};
use crate::models::{
    gibbs_populations, partition_function, spectral_weight, BathModes, DensityMatrix, FormFactor, ModelSpec,
};
use crate::quadrature::{gauss_legendre, integrate};

/// `sin(x)/x`, with `sinc(0) = 1`.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// `(1 − sinc(x)) / x`, continuous at 0.
fn one_minus_sinc_over_x(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        x / 6.0 - x.powi(3) / 120.0
    } else {
        (1.0 - sinc(x)) / x
    }
}

/// Reservoir relaxation rate `γ_th⁽²⁾ = (π/2) √E_S ‖f(√E_S)‖²`.
pub fn gamma_th2(model: &ModelSpec) -> f64 {
    0.5 * PI * model.e_s.sqrt() * spectral_weight(&model.bath.form_factor, model.e_s)
}

/// Chain relaxation rate `γ_ri⁽²⁾ = τ sinc²(τ(E_E − E_S)/2)`.
pub fn gamma_ri2(model: &ModelSpec) -> f64 {
    model.tau * sinc(0.5 * model.tau * (model.e_e - model.e_s)).powi(2)
}

/// Renormalized chain inverse temperature `β′_E = β_E E_E / E_S`.
pub fn beta_prime(model: &ModelSpec) -> f64 {
    model.beta_e * model.e_e / model.e_s
}

/// Quadrature layout for [`pv_integral`]: the window
/// `[center − half_width, center + half_width]` and the total node budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PvGrid {
    pub half_width: f64,
    pub nodes: usize,
}

impl Default for PvGrid {
    fn default() -> Self {
        Self {
            half_width: 20.0,
            nodes: 801,
        }
    }
}

const PANEL_ORDER: usize = 8;

/// Cauchy principal value `PV ∫ weight(s) / (s − center) ds` over the
/// symmetric window of `grid`, by singularity subtraction:
///
/// `∫ (weight(s) − weight(center)) / (s − center) ds + weight(center)·log(b/a)`
///
/// where the log term vanishes on a symmetric window. The window is split
/// at `center` and at every point of `breakpoints` inside it; each piece is
/// integrated by composite Gauss–Legendre after the endpoint-clustering
/// substitution `u = t²(3 − 2t)`, which absorbs square-root cusps at the
/// piece ends. No node ever falls on `center`.
pub fn pv_integral(weight: impl Fn(f64) -> f64, center: f64, grid: &PvGrid, breakpoints: &[f64]) -> f64 {
    let (lo, hi) = (center - grid.half_width, center + grid.half_width);
    let w_c = weight(center);
    let subtracted = |s: f64| (weight(s) - w_c) / (s - center);

    let mut cuts: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|&b| b > lo && b < hi)
        .chain([lo, center, hi])
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-14);

    let (x, w) = gauss_legendre(PANEL_ORDER);
    let total_panels = (grid.nodes / PANEL_ORDER).max(cuts.len());
    let span = hi - lo;
    let mut acc = 0.0;
    for piece in cuts.windows(2) {
        let (a, b) = (piece[0], piece[1]);
        let len = b - a;
        let panels = ((total_panels as f64 * len / span).round() as usize).max(1);
        let h = 1.0 / panels as f64;
        for p in 0..panels {
            let t0 = p as f64 * h;
            for (xi, wi) in x.iter().zip(&w) {
                let t = t0 + 0.5 * h * (1.0 + xi);
                let u = t * t * (3.0 - 2.0 * t);
                let du = 6.0 * t * (1.0 - t);
                acc += 0.5 * h * wi * du * len * subtracted(a + len * u);
            }
        }
    }
    acc
}

/// Doubles the node budget of `grid` until successive values agree to
/// `tol`, returning the finer value.
pub fn pv_integral_converged(
    weight: impl Fn(f64) -> f64,
    center: f64,
    grid: &PvGrid,
    breakpoints: &[f64],
    tol: f64,
) -> f64 {
    let mut g = *grid;
    let mut prev = pv_integral(&weight, center, &g, breakpoints);
    for _ in 0..12 {
        g.nodes = 2 * g.nodes - 1;
        let next = pv_integral(&weight, center, &g, breakpoints);
        if (next - prev).abs() <= tol {
            return next;
        }
        prev = next;
    }
    prev
}

/// `s ↦ √|s| ‖f(√|s|)‖²`, the weight of the reservoir Lamb term.
pub fn lamb_weight(f: &FormFactor) -> impl Fn(f64) -> f64 + '_ {
    move |s: f64| s.abs().sqrt() * spectral_weight(f, s.abs())
}

/// `PV ∫_ℝ √|s| ‖f(√|s|)‖² / (s − E_S) ds`.
pub fn lamb_integral(model: &ModelSpec) -> f64 {
    let f = &model.bath.form_factor;
    let mut breaks = vec![0.0];
    for k in f.kinks() {
        breaks.push(k);
        breaks.push(-k);
    }
    pv_integral_converged(lamb_weight(f), model.e_s, &PvGrid::default(), &breaks, 1e-10)
}

fn require_weight(model: &ModelSpec) -> Result<()> {
    if spectral_weight(&model.bath.form_factor, model.e_s) == 0.0 {
        return Err(Error::AssumptionViolated(Assumption::NonVanishingSpectralWeight));
    }
    Ok(())
}

/// Leading-order predictions for the coupled model.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedFormPredictions {
    pub gamma_th2: f64,
    pub gamma_ri2: f64,
    pub beta_prime: f64,
    /// Weight `γ` of the reservoir Gibbs state in the asymptotic state.
    pub gamma_mix: f64,
    pub kappa: f64,
    pub rho_plus_s: DensityMatrix,
    pub d_e_c: f64,
    pub d_e_r: f64,
    pub d_e_tot: f64,
    pub d_s: f64,
    pub eigenvalues: SecondOrderEigenvalues,
    pub z_beta_r: f64,
    pub z_beta_prime: f64,
}

pub fn closed_form_predictions(model: &ModelSpec) -> Result<ClosedFormPredictions> {
    model.require_admissible()?;
    require_weight(model)?;
    let (g_th, g_ri, bp) = (gamma_th2(model), gamma_ri2(model), beta_prime(model));
    let thermal = model.lambda1.powi(2) * g_th;
    let chain = model.lambda2.powi(2) * g_ri;
    let total = thermal + chain;
    // With both couplings off every diagonal state is stationary; the
    // midpoint is reported.
    let gamma_mix = if total > 0.0 { thermal / total } else { 0.5 };

    let e_s = model.e_s;
    let z_r = partition_function(e_s, model.beta_r);
    let z_p = partition_function(e_s, bp);
    let kappa = if total > 0.0 {
        thermal * chain / total / (z_r * z_p)
    } else {
        0.0
    };

    let pr = gibbs_populations(e_s, model.beta_r);
    let pp = gibbs_populations(e_s, bp);
    let rho = ComplexMatrix::from_real_diag(&[
        gamma_mix * pr[0] + (1.0 - gamma_mix) * pp[0],
        gamma_mix * pr[1] + (1.0 - gamma_mix) * pp[1],
    ]);

    let boltz_diff = (-model.beta_r * e_s).exp() - (-bp * e_s).exp();
    Ok(ClosedFormPredictions {
        gamma_th2: g_th,
        gamma_ri2: g_ri,
        beta_prime: bp,
        gamma_mix,
        kappa,
        rho_plus_s: DensityMatrix::new_unchecked(rho, TensorFactorization::single(2)),
        d_e_c: kappa * model.e_e * boltz_diff,
        d_e_r: -kappa * e_s * boltz_diff,
        d_e_tot: kappa * (model.e_e - e_s) * boltz_diff,
        d_s: kappa * (bp - model.beta_r) * e_s * boltz_diff,
        eigenvalues: eigenvalues_unchecked(model),
        z_beta_r: z_r,
        z_beta_prime: z_p,
    })
}

/// The four peripheral eigenvalues of the one-step operator to second order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecondOrderEigenvalues {
    pub one: C64,
    pub e0: C64,
    pub e_plus: C64,
    pub e_minus: C64,
}

impl SecondOrderEigenvalues {
    pub fn as_array(&self) -> [C64; 4] {
        [self.one, self.e0, self.e_plus, self.e_minus]
    }
}

pub fn rdo_eigenvalues_2nd_order(model: &ModelSpec) -> Result<SecondOrderEigenvalues> {
    model.require_admissible()?;
    require_weight(model)?;
    Ok(eigenvalues_unchecked(model))
}

fn eigenvalues_unchecked(model: &ModelSpec) -> SecondOrderEigenvalues {
    let tau = model.tau;
    let (l1sq, l2sq) = (model.lambda1.powi(2), model.lambda2.powi(2));
    let detune = tau * (model.e_e - model.e_s);
    let g_th = gamma_th2(model);
    let sinc_sq = sinc(0.5 * detune).powi(2);

    let e0 = 1.0 - l1sq * tau * g_th - l2sq * tau * tau * sinc_sq;
    let damping = 0.5 * l1sq * tau * g_th + 0.5 * l2sq * tau * tau * sinc_sq;
    let lamb = if l1sq != 0.0 {
        l1sq * 0.25 * tau * lamb_integral(model)
    } else {
        0.0
    } + l2sq * tau * tau * one_minus_sinc_over_x(detune);

    let phase = C64::from_polar(1.0, tau * model.e_s);
    let e_plus = phase * (ONE - damping - I * lamb);
    let e_minus = phase.conj() * (ONE - damping + I * lamb);
    SecondOrderEigenvalues {
        one: ONE,
        e0: C64::new(e0, 0.0),
        e_plus,
        e_minus,
    }
}

/// Invariant state of `S` from the leading-order invariant vector:
/// populations proportional to
/// `λ₁²γ_th Z_R⁻¹ (1, e^{−β_R E_S}) + λ₂²γ_ri Z′⁻¹ (1, e^{−β′ E_S})`.
pub fn psi_star_s(model: &ModelSpec) -> Result<DensityMatrix> {
    model.require_admissible()?;
    require_weight(model)?;
    let a = model.lambda1.powi(2) * gamma_th2(model);
    let b = model.lambda2.powi(2) * gamma_ri2(model);
    let bp = beta_prime(model);
    let (wr, wp) = ((-model.beta_r * model.e_s).exp(), (-bp * model.e_s).exp());
    let (zr, zp) = (1.0 + wr, 1.0 + wp);
    let (a, b) = if a + b > 0.0 { (a, b) } else { (1.0, 1.0) };
    let ground = a / zr + b / zp;
    let excited = a * wr / zr + b * wp / zp;
    let norm = ground + excited;
    Ok(DensityMatrix::new_unchecked(
        ComplexMatrix::from_real_diag(&[ground / norm, excited / norm]),
        TensorFactorization::single(2),
    ))
}

/// Golden-rule transition rates of `S` obtained from the discretized bath.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoldenRuleRates {
    /// Relaxation `|1⟩ → |0⟩`.
    pub down: f64,
    /// Excitation `|0⟩ → |1⟩`.
    pub up: f64,
}

impl GoldenRuleRates {
    pub fn total(&self) -> f64 {
        self.down + self.up
    }
}

/// Time-domain golden rule from the bath correlation function
/// `C(t) = ⟨φ(t)φ(0)⟩ = ½ Σ_j g_j² [(1 − n_j) e^{−iε_j t} + n_j e^{iε_j t}]`:
/// `Γ↓ = ∫ w(t) e^{iEt} C(t) dt` and `Γ↑ = ∫ w(t) e^{−iEt} C(t) dt`, with a
/// Gaussian window `w(t) = exp(−t²/2T²)` that resolves the discrete
/// spectrum into a density. `T` must stay well below the recurrence time
/// `2π/Δε` of the grid. The integral over `[0, 6T]` uses composite
/// Gauss–Legendre with `panels` eight-point panels.
pub fn golden_rule_rates(modes: &BathModes, energy: f64, window: f64, panels: usize) -> GoldenRuleRates {
    let weighted = |t: f64, sign: f64| -> f64 {
        let w = (-0.5 * (t / window).powi(2)).exp();
        let c: f64 = modes
            .energies
            .iter()
            .zip(&modes.couplings)
            .zip(&modes.occupations)
            .map(|((&eps, &g), &n)| {
                0.5 * g * g * ((1.0 - n) * ((sign * energy - eps) * t).cos() + n * ((sign * energy + eps) * t).cos())
            })
            .sum();
        2.0 * w * c
    };
    let t_max = 6.0 * window;
    GoldenRuleRates {
        down: integrate(|t| weighted(t, 1.0), 0.0, t_max, panels, 8),
        up: integrate(|t| weighted(t, -1.0), 0.0, t_max, panels, 8),
    }
}

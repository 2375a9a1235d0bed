//! Energy and entropy bookkeeping along trajectories.
//!
//! Per-step variations are expectation differences:
//!
//! * `ΔE^S = ⟨h_S⟩_end − ⟨h_S⟩_start`
//! * `ΔE^R`: reservoir energy change (for the effective engine, minus the
//!   energy `S` received during the reservoir substep)
//! * `ΔE^C = ⟨h_E⟩_end − ⟨h_E⟩_fresh`
//! * `ΔE^tot = λ₂(⟨v_SE⟩_fresh − ⟨v_SE⟩_end) + λ₁(⟨v_SR⟩_start − ⟨v_SR⟩_end)`
//!
//! Conservation of the step Hamiltonian makes `ΔE^tot = ΔE^S + ΔE^R + ΔE^C`
//! hold step by step. The `λ₁` term telescopes along the trajectory and
//! does not affect Cesàro averages.
//!
//! Averages are per step; divide by `τ` to compare with per-unit-time
//! rates.

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::linalg::{expm_unitary, ComplexMatrix, I};
use crate::models::ModelSpec;
use crate::quadrature::gauss_legendre;

/// Cesàro averages over the steps after `burn_in`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluxAverages {
    pub burn_in: usize,
    pub samples: usize,
    pub d_e_s: f64,
    pub d_e_r: f64,
    pub d_e_c: f64,
    pub d_e_tot: f64,
    /// Entropy formula `(β_R − β_E) dE^R + β_E dE^tot`.
    pub d_s: f64,
    /// Second-law form `β_E dE^C + β_R dE^R`.
    pub d_s_second_law: f64,
}

impl FluxAverages {
    pub fn entropy_discrepancy(&self) -> f64 {
        (self.d_s - self.d_s_second_law).abs()
    }

    /// Per-unit-time values (each average divided by `τ`).
    pub fn per_unit_time(&self, tau: f64) -> FluxAverages {
        FluxAverages {
            d_e_s: self.d_e_s / tau,
            d_e_r: self.d_e_r / tau,
            d_e_c: self.d_e_c / tau,
            d_e_tot: self.d_e_tot / tau,
            d_s: self.d_s / tau,
            d_s_second_law: self.d_s_second_law / tau,
            ..*self
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FluxReport {
    pub d_e_s: Vec<f64>,
    pub d_e_r: Vec<f64>,
    pub d_e_c: Vec<f64>,
    pub d_e_tot: Vec<f64>,
    /// Per-step entropy-formula increments `(β_R − β_E)ΔE^R + β_E ΔE^tot`.
    pub d_s: Vec<f64>,
    /// `max_m |ΔE^tot − (ΔE^S + ΔE^R + ΔE^C)|`.
    pub balance_residual: f64,
    pub beta_e: f64,
    pub beta_r: f64,
    pub averages: Option<FluxAverages>,
}

impl FluxReport {
    pub fn steps(&self) -> usize {
        self.d_e_s.len()
    }
}

pub fn energy_ledger(traj: &Trajectory, model: &ModelSpec) -> Result<FluxReport> {
    if traj.energies.len() + 1 != traj.len() {
        return Err(Error::MissingBookkeeping("per-step energy records"));
    }
    let n = traj.energies.len();
    let mut report = FluxReport {
        d_e_s: Vec::with_capacity(n),
        d_e_r: Vec::with_capacity(n),
        d_e_c: Vec::with_capacity(n),
        d_e_tot: Vec::with_capacity(n),
        d_s: Vec::with_capacity(n),
        balance_residual: 0.0,
        beta_e: model.beta_e,
        beta_r: model.beta_r,
        averages: None,
    };
    for e in &traj.energies {
        let ds = e.h_s_end - e.h_s_start;
        let dr = e.delta_reservoir;
        let dc = e.h_e_end - e.h_e_fresh;
        let dt = traj.lambda2 * (e.v_se_fresh - e.v_se_end) + traj.lambda1 * (e.v_sr_start - e.v_sr_end);
        report.balance_residual = report.balance_residual.max((dt - (ds + dr + dc)).abs());
        report.d_e_s.push(ds);
        report.d_e_r.push(dr);
        report.d_e_c.push(dc);
        report.d_e_tot.push(dt);
        report.d_s.push((model.beta_r - model.beta_e) * dr + model.beta_e * dt);
    }
    Ok(report)
}

/// Fills the averages over steps `burn_in..`; `None` uses half the
/// trajectory.
pub fn asymptotic_rates(report: &FluxReport, burn_in: Option<usize>) -> Result<FluxReport> {
    let n = report.steps();
    let burn_in = burn_in.unwrap_or(n / 2);
    if burn_in >= n {
        return Err(Error::WindowOutOfRange(format!(
            "burn-in {burn_in} leaves no steps out of {n}"
        )));
    }
    let samples = n - burn_in;
    let mean = |v: &[f64]| v[burn_in..].iter().sum::<f64>() / samples as f64;
    let (d_e_s, d_e_r, d_e_c, d_e_tot) = (
        mean(&report.d_e_s),
        mean(&report.d_e_r),
        mean(&report.d_e_c),
        mean(&report.d_e_tot),
    );
    let (be, br) = (report.beta_e, report.beta_r);
    let averages = FluxAverages {
        burn_in,
        samples,
        d_e_s,
        d_e_r,
        d_e_c,
        d_e_tot,
        d_s: (br - be) * d_e_r + be * d_e_tot,
        d_s_second_law: be * d_e_c + br * d_e_r,
    };
    Ok(FluxReport {
        averages: Some(averages),
        ..report.clone()
    })
}

/// `∫₀^τ Tr[ρ(t) i[H, O]] dt` with `ρ(t) = e^{−iHt} ρ₀ e^{iHt}`, by
/// Gauss–Legendre quadrature with `nodes` points. By the fundamental
/// theorem of calculus this equals `⟨O⟩_τ − ⟨O⟩_0`.
pub fn commutator_flux(
    h: &ComplexMatrix,
    rho0: &ComplexMatrix,
    o: &ComplexMatrix,
    tau: f64,
    nodes: usize,
) -> Result<f64> {
    let commutator = &h.matmul(o) - &o.matmul(h);
    let current = commutator.scale(I);
    let (x, w) = gauss_legendre(nodes);
    let mut acc = 0.0;
    for (xi, wi) in x.iter().zip(&w) {
        let t = 0.5 * tau * (1.0 + xi);
        let u = expm_unitary(h, t)?;
        acc += 0.5 * tau * wi * current.trace_product(&u.conjugate(rho0)).re;
    }
    Ok(acc)
}

use std::fmt;

use thiserror::Error;

/// Non-degeneracy assumptions under which the weak-coupling formulas hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assumption {
    /// τ(E_E − E_S) ∉ 2πℤ*: the chain is not at a non-trivial sinc zero.
    DetuningNotMultipleOfTwoPi,
    /// τE_S ∉ πℕ: the unperturbed eigenvalues 1 and e^{±iτE_S} are distinct.
    PhaseNotMultipleOfPi,
    /// ‖f(√E_S)‖ ≠ 0: the reservoir actually couples at the system frequency.
    NonVanishingSpectralWeight,
}

impl fmt::Display for Assumption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Assumption::DetuningNotMultipleOfTwoPi => {
                write!(
                    f,
                    "τ(E_E − E_S) ∉ 2πℤ* (tau*(E_E - E_S) must not be a nonzero multiple of 2π)"
                )
            }
            Assumption::PhaseNotMultipleOfPi => {
                write!(f, "τE_S ∉ πℕ (tau*E_S must not be a positive multiple of π)")
            }
            Assumption::NonVanishingSpectralWeight => {
                write!(f, "‖f(√E_S)‖ ≠ 0 (form factor must not vanish at the system frequency)")
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not Hermitian: residual {residual:.3e} exceeds tolerance {tolerance:.3e}")]
    NotHermitian { residual: f64, tolerance: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("tensor factorization {factors:?} does not match matrix dimension {dim}")]
    InvalidFactorization { factors: Vec<usize>, dim: usize },

    #[error("eigensolver did not converge (dimension {dim}, condition estimate {condition:.3e})")]
    EigenNotConverged { dim: usize, condition: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("assumption violated: {0}")]
    AssumptionViolated(Assumption),

    #[error("{what} exceeds the configured limit ({requested} > {limit}); {advice}")]
    ResourceLimit {
        what: &'static str,
        requested: usize,
        limit: usize,
        advice: &'static str,
    },

    #[error("trajectory was recorded without {0}")]
    MissingBookkeeping(&'static str),

    #[error("observable window out of range: {0}")]
    WindowOutOfRange(String),

    #[error("not a valid density matrix: {0}")]
    InvalidState(String),
}

pub type Result<T> = std::result::Result<T, Error>;

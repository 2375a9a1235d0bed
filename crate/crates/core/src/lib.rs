//! Simulation and spectral analysis of a two-level system driven at once by
//! a repeated-interaction chain of thermal spins and a fermionic thermal
//! reservoir.
//!
//! * [`linalg`]: dense complex kernels (tensor products, exponentials,
//!   eigendecompositions, partial traces, operator ↔ matrix conversion).
//! * [`models`]: Hamiltonians, Gibbs states, form factors, bath discretization.
//! * [`rdo`]: one-step reduced dynamics operators and their spectra.
//! * [`dynamics`]: stroboscopic trajectories and instantaneous observables.
//! * [`thermo`]: energy bookkeeping, asymptotic fluxes, entropy production.
//! * [`perturbation`]: closed-form weak-coupling predictions.

pub mod dynamics;
pub mod error;
pub mod linalg;
pub mod models;
pub mod perturbation;
pub mod quadrature;
pub mod rdo;
pub mod thermo;

pub use error::{Assumption, Error, Result};

//! Numerical toolkit for Lambda-Wright-Fisher processes with selection.
//!
//! The package is organised around the two sides of moment duality:
//!
//! * [`forward`] simulates the jump SDE for the type-1 frequency `X_t`
//!   driven by a finite measure Lambda on `[0, 1]` plus a logistic
//!   selection drift of strength `alpha`;
//! * [`dual`] simulates the block-counting chain `R_t` whose coalescence
//!   rates come from the same measure and whose linear branching rate is
//!   `alpha * n`.
//!
//! Supporting modules: [`measure`] holds the driving measures and the
//! integrals against `nu(dx) = x^{-2} Lambda(dx)`, [`rates`] the derived
//! rate functionals (`phi`, `psi`, `delta`, the selection threshold
//! `alpha_star`, Lyapunov diagnostics and the coming-down-from-infinity
//! classifier), [`duality`] the cross-checks between the two simulators,
//! and [`cli`] the command-line front end.

pub mod cli;
pub mod dual;
pub mod duality;
pub mod error;
pub mod forward;
pub mod measure;
pub mod rates;
pub mod stats;
pub mod streams;

mod quad;
mod tables;

pub use error::{Error, Result};
pub use measure::{EstimateKind, EstimateWithError, LambdaMeasure};
pub use rates::{CdiReport, CdiVerdict, RateTable};

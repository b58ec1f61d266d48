//! Quasi-exactly-solvable bound states of the Coulomb plus harmonic
//! oscillator on the complex contour `r = x - iε`.
//!
//! The crate is organized bottom-up:
//!
//! - [`model`]: parameters, QES energies and recurrence elements;
//! - [`secular`]: tridiagonal charge matrices and eigencharges;
//! - [`laurent`]: polynomials in half-integer powers of `ir`;
//! - [`wavefun`]: wavefunction coefficients and contour evaluation;
//! - [`verify`]: symbolic Hamiltonian residual and shooting oracle;
//! - [`basis`]: QES states as a non-orthogonal basis at arbitrary charge;
//! - [`io`]: CSV/JSON export formats;
//! - [`cli`]: the `qes` binary.

mod dd;
pub mod error;
pub mod model;
pub mod laurent;
pub mod secular;
pub mod wavefun;
pub mod verify;
pub mod basis;
pub mod io;
pub mod cli;

pub use error::{Error, Result};
pub use model::{ModelParams, QuasiParity};

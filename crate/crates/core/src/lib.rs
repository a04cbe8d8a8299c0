//! Hamiltonian identification for excitation-preserving bosonic lattices.
//!
//! The crate simulates quadrature time series `y[l] = ½ M exp(-i t_l h) S`
//! and recovers `h` from them: ESPRIT for the eigenfrequencies, then a
//! regularized conjugate-gradient search over the orthogonal group for the
//! eigenbasis. See the `examples/` directory for end-to-end usage.

pub mod bench;
pub mod cli;
pub mod eigensolve;
pub mod error;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod simulate;
pub mod spam;
pub mod spectral;
pub mod uncertainty;

pub use error::{Error, Result};

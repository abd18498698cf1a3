//! Numerical kernels for a two-dimensional, three-species memristor device
//! (electrons, holes, oxide vacancies and the electrostatic potential) coupled
//! to a lumped electric network written in modified nodal analysis form.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the coupled time
//! loop and the command line live in the `memristor-sim` companion crate.
//!
//! Module map:
//!
//! - [`grid`]: rectangular cell-centered mesh with terminal/insulator face tags.
//! - [`poisson`]: mixed Dirichlet/Neumann elliptic solves, harmonic weights,
//!   the Green operator and the potential superposition.
//! - [`transport`]: implicit Scharfetter-Gummel steps and the Gummel loop.
//! - [`network`]: MNA matrices, projectors and the index-1 decoupling.
//! - [`coupling`]: terminal currents, the matrix `M`, boundary potentials.
//! - [`diagnostics`]: free energy, dissipation, bounds and conservation.
#![cfg_attr(not(any(feature = "std", test)), no_std)]
// `!(x > 0.0)` is deliberate: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod coupling;
pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod linalg;
pub(crate) mod math;
pub mod network;
pub mod poisson;
pub mod transport;
pub mod waveform;

pub use error::{Error, Result};
pub use nalgebra;

/// Scalar field with one value per boundary or interior face, indexed like
/// [`grid::Mesh::faces`].
pub type FaceField = alloc::vec::Vec<f64>;

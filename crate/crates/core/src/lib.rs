//! Deterministic velocity-space solvers for the Boltzmann equation of rarefied
//! gas dynamics.
//!
//! The crate is organized around a shared velocity grid ([`grid`]) and three
//! families of machinery built on top of it:
//!
//! - [`dvm`]: discrete-velocity collision operators on integer lattices, with
//!   exact discrete conservation of mass, momentum and energy.
//! - [`spectral`]: Fourier spectral collision operators, both the direct
//!   `O(N^{2d})` sum over kernel modes and the rank-`A` separated evaluation
//!   through zero-padded FFT convolutions, plus a brute-force quadrature oracle.
//! - [`integrators`], [`transport`], [`euler`]: stiff time stepping in the
//!   Knudsen number (explicit, BGK-penalized IMEX, exponential), 1D upwind
//!   transport by Lie splitting, and a compressible Euler reference solver for
//!   the fluid limit.
//!
//! [`scenario`] wires everything into reproducible, config-driven runs.

pub mod bkw;
pub mod dvm;
pub mod error;
pub mod euler;
pub mod grid;
pub mod integrators;
pub mod scenario;
pub mod spectral;
pub mod transport;

pub use error::{Error, Result};
pub use grid::{Distribution, Moments, VelocityGrid};

//! Fourier spectral discretization of the truncated collision operator.

pub mod collision;
pub(crate) mod fft;
pub mod kernel;
pub mod oracle;
pub mod separated;
pub mod transform;

pub use collision::{
    collide_direct, collide_fast, spectral_collision_direct, spectral_collision_fast, FastCollision,
};
pub use kernel::{auto_level, compute_kernel_modes, compute_kernel_modes_cached, CollisionKernel, KernelModes};
pub use oracle::{collision_quadrature_oracle, collision_quadrature_oracle_with, Interpolation, ORACLE_MAX_N};
pub use separated::{decompose_kernel, rank_for_tolerance, SeparatedKernel};
pub use transform::{forward_transform, inverse_transform, ModeLayout, SpectralCoefficients};

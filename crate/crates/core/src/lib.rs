//! Lagrangian vortex-ring solver for the axisymmetric, swirl-free Euler-alpha
//! equations.
//!
//! The transported quantity is the potential vorticity `q^theta / r`, carried
//! unchanged by rings in the meridional half-plane. Velocities come from a
//! direct sum of the regularized Biot–Savart kernel ([`kernel`],
//! [`velocity`]); rings are advanced by RK4 or by Picard iteration on the
//! flow map ([`evolve`]). Measure-valued data enter through mollification
//! ([`measure`]) and every run can be audited with [`diagnostics`].

pub mod diagnostics;
pub mod error;
pub mod evolve;
pub mod io;
pub mod kernel;
pub mod measure;
pub mod state;
pub mod velocity;

pub use error::{Error, Result};
pub use kernel::{Alpha, KernelConstants};
pub use state::{
    Atom, Exponent, GaussianCore, GaussianRings, MeasureData, MeridionalBox, MeridionalGrid,
    ParticleCloud, Profile, VortexRing,
};
pub use velocity::{Mat3, Tensor3, Vec3, VelocitySample};

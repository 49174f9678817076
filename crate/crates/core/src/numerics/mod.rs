//! Small self-contained numerical kernels used by the physics modules.

pub mod quadrature;
pub mod rk;
pub mod unitary;

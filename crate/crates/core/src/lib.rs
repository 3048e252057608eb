//! Stationary Navier–Stokes flow in the unit square with a nonmonotone,
//! possibly discontinuous relation between the normal velocity and the total
//! head on the boundary.
//!
//! The boundary law is mollified, the velocity is expanded in a divergence-free
//! stream-function basis, and the resulting smooth finite-dimensional system is
//! solved by damped Newton with continuation in the mollifier width. On top of
//! the solver sit dependence experiments and a distributed optimal-control loop.

pub mod config;
pub mod control;
pub mod experiments;
pub mod galerkin;
pub mod quadrature;
pub mod report;
pub mod solver;
pub mod superpotential;

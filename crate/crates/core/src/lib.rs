//! Finite-element solver for dynamic gradient damage and phase-field
//! fracture in Kelvin-Voigt viscoelastic solids at small strains.
//!
//! Each time step is a bound-constrained minimization of an incremental
//! potential in `(u, alpha)`: midpoint rule for inertia, backward Euler for
//! the stored energy, and viscous moduli lagged one step. Below the critical
//! step `tau0` the potential is strictly convex and the projected Newton
//! solver converges globally.

pub mod fem;
pub mod integrator;
pub mod material;
pub mod potential;
pub mod scenario;
pub mod solver;

//! Two-grid mixed finite element solver for the transient incompressible
//! Navier-Stokes equations on the unit square.
//!
//! Velocity uses continuous P2 elements, pressure piecewise constants. Time
//! stepping is backward Euler with a three-step two-grid scheme: a nonlinear
//! solve on a coarse mesh, a linearized solve on a fine mesh and a correction
//! sharing the same fine operator. The [`mms`] and [`study`] modules provide
//! manufactured solutions and convergence studies.

pub mod assembly;
pub mod config;
pub mod linalg;
pub mod mesh;
pub mod mms;
pub mod par;
pub mod quadrature;
pub mod space;
pub mod study;
pub mod twogrid;

pub use mesh::Mesh;
pub use mms::{error_norms, convergence_rate, ErrorNorms, Example, ManufacturedCase};
pub use par::Execution;
pub use space::{FeSpace, PressureField, VelocityField};
pub use twogrid::{FlowProblem, Mode, RunOutcome, SimulationConfig, SolverError, TwoGridSolver};

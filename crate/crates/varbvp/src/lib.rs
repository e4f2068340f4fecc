//! Two-point boundary value problems of regular Lagrangian mechanics,
//! solved directly from the variational principle.
//!
//! Instead of integrating the Euler-Lagrange equations and shooting, the
//! solver discretizes the velocity curve of the connecting evolution on the
//! unit interval, enforces the displacement constraint with a multiplier,
//! and drives the stationarity system to zero with damped Newton iteration.
//! The problem is regular through zero duration, where the solution is known
//! in closed form, so arbitrary durations are reached by continuation in the
//! duration parameter.
//!
//! On top of the boundary value solver sit type-1 generating functions with
//! their endpoint derivatives, geodesic connection for the built-in metric
//! models, and an initial-value integrator that composes boundary value
//! solves through momentum matching instead of stepping an ODE. A separate
//! Runge-Kutta/shooting path provides an independent cross-check.

pub mod action;
pub mod builtins;
pub mod error;
pub mod flow;
pub mod grid;
pub mod linalg;
pub mod model;
pub mod shooting;
pub mod solver;

pub use action::{
    action, boundary_momenta, el_residual, generating_function, GeneratingFunction, Trajectory,
};
pub use builtins::{make_builtin, quartic_test_model, BUILTIN_NAMES};
pub use error::{Error, Result};
pub use flow::{integrate_ivp, step, DiscreteFlow, FlowConfig, PhasePoint, StepDiagnostics};
pub use grid::{Curve, Grid};
pub use model::{HessianBlocks, LagrangianJet, LagrangianModel};
pub use shooting::{el_acceleration, rk4_flow, shoot_bvp};
pub use solver::{
    jacobian, newton, reconstruct_positions, residual, solve_bvp, solve_regularized, BvpSolution,
    RegularizedProblem, SolverConfig,
};

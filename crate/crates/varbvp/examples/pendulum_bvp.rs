//! Solve a pendulum boundary value problem and print the solve summary.

use std::collections::BTreeMap;

use nalgebra::DVector;
use varbvp::{make_builtin, solve_bvp, SolverConfig};

fn main() -> varbvp::Result<()> {
    let pendulum = make_builtin("pendulum", &BTreeMap::new())?;
    let config = SolverConfig::default();
    let q1 = DVector::from_vec(vec![0.0]);
    let q2 = DVector::from_vec(vec![0.5]);
    let (solution, trajectory) = solve_bvp(&pendulum, &q1, &q2, 0.5, &config)?;
    println!(
        "v(0) = {}, {} Newton iterations, condition {:.2e}",
        trajectory.velocities()[0][0],
        solution.iterations,
        solution.condition_estimate,
    );
    Ok(())
}

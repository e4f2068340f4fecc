//! Action values, type-1 generating functions, and trajectory diagnostics.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::model::LagrangianModel;
use crate::solver::{solve_regularized, BvpSolution, SolverConfig};

/// A sampled evolution `(t, q, v)` on `[0, h]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    times: Vec<f64>,
    positions: Vec<DVector<f64>>,
    velocities: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn new(
        times: Vec<f64>,
        positions: Vec<DVector<f64>>,
        velocities: Vec<DVector<f64>>,
    ) -> Result<Self> {
        if times.len() != positions.len() || times.len() != velocities.len() {
            return Err(Error::InvalidConfig(format!(
                "trajectory arrays disagree in length: {} times, {} positions, {} velocities",
                times.len(),
                positions.len(),
                velocities.len()
            )));
        }
        if times.len() < 2 {
            return Err(Error::InvalidConfig(
                "a trajectory needs at least two samples".into(),
            ));
        }
        if times[0] != 0.0 || !times.windows(2).all(|w| w[1] > w[0]) {
            return Err(Error::InvalidConfig(
                "trajectory times must increase strictly from 0".into(),
            ));
        }
        Ok(Self {
            times,
            positions,
            velocities,
        })
    }

    /// Physical samples of a converged boundary value solution.
    ///
    /// Interior velocities are the solution's own nodes. The two endpoint
    /// velocities come from the discrete boundary momenta through the
    /// Legendre inverse: the raw end nodes of the velocity curve carry a
    /// first-order quadrature defect, while the discrete momenta are
    /// second-order accurate (see [`boundary_momenta`]).
    pub fn from_solution(model: &LagrangianModel, solution: &BvpSolution) -> Result<Self> {
        let h = solution.problem.h;
        if h <= 0.0 {
            return Err(Error::InvalidConfig(
                "trajectories require a positive duration".into(),
            ));
        }
        let grid = solution.v.grid();
        let times: Vec<f64> = (0..grid.node_count()).map(|i| h * grid.node(i)).collect();
        let positions: Vec<DVector<f64>> = solution.q.values().to_vec();
        let mut velocities: Vec<DVector<f64>> = solution.v.values().to_vec();

        let (p_start, p_end) = boundary_momenta(model, solution)?;
        let first = positions.first().expect("non-empty trajectory");
        let last = positions.last().expect("non-empty trajectory");
        let n = velocities.len();
        velocities[0] =
            model.legendre_inverse_from(first, &p_start, 1e-12, velocities[0].clone())?;
        velocities[n - 1] =
            model.legendre_inverse_from(last, &p_end, 1e-12, velocities[n - 1].clone())?;

        Self::new(times, positions, velocities)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn duration(&self) -> f64 {
        *self.times.last().expect("non-empty trajectory")
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn positions(&self) -> &[DVector<f64>] {
        &self.positions
    }

    pub fn velocities(&self) -> &[DVector<f64>] {
        &self.velocities
    }
}

/// Physical action along a converged solution: `h` times the trapezoid
/// integral of `L` over the unit-interval curve.
pub fn action(model: &LagrangianModel, solution: &BvpSolution) -> Result<f64> {
    let grid = solution.v.grid();
    let du = grid.du();
    let mut acc = 0.0;
    let mut prev = f64::NAN;
    for i in 0..grid.node_count() {
        let l = model.eval(solution.q.value(i), solution.v.value(i))?.l;
        if i > 0 {
            acc += (prev + l) * (0.5 * du);
        }
        prev = l;
    }
    Ok(solution.problem.h * acc)
}

/// Discrete boundary momenta `(p(0), p(h))` of a converged solution.
///
/// The multiplier is the momentum conjugate to the right endpoint of the
/// discrete action, and the left momentum follows from the impulse balance
/// `p(0) = lambda - h * integral(dL/dq)`. These are the exact partial
/// derivatives of the discrete generating function, unlike the raw momenta
/// at the boundary nodes.
pub fn boundary_momenta(
    model: &LagrangianModel,
    solution: &BvpSolution,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let grid = solution.v.grid();
    let du = grid.du();
    let h = solution.problem.h;
    let mut impulse = DVector::zeros(model.dim());
    let mut prev: Option<DVector<f64>> = None;
    for i in 0..grid.node_count() {
        let force = model.eval(solution.q.value(i), solution.v.value(i))?.dl_dq;
        if let Some(p) = prev {
            impulse += (p + &force) * (0.5 * du);
        }
        prev = Some(force);
    }
    let p_end = solution.lambda.clone();
    let p_start = &p_end - impulse * h;
    Ok((p_start, p_end))
}

/// Type-1 generating function of the connecting evolution and its boundary
/// derivatives with respect to the two endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratingFunction {
    pub s: f64,
    /// `dS/dq1 = -p(0)`.
    pub d1s: DVector<f64>,
    /// `dS/dq2 = p(h)`.
    pub d2s: DVector<f64>,
}

pub fn generating_function(
    model: &LagrangianModel,
    q1: &DVector<f64>,
    q2: &DVector<f64>,
    h: f64,
    config: &SolverConfig,
) -> Result<GeneratingFunction> {
    if !h.is_finite() || h <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "generating function requires a positive duration, got {h}"
        )));
    }
    let z = (q2 - q1) / h;
    let solution = solve_regularized(model, q1, &z, h, config)?;
    let s = action(model, &solution)?;
    let (p_start, p_end) = boundary_momenta(model, &solution)?;
    Ok(GeneratingFunction {
        s,
        d1s: -p_start,
        d2s: p_end,
    })
}

/// Largest violation of the momentum balance `d/dt(dL/dv) = dL/dq` over the
/// interior samples of a trajectory, with centered differences in `t`.
pub fn el_residual(model: &LagrangianModel, trajectory: &Trajectory) -> Result<f64> {
    if trajectory.len() < 3 {
        return Err(Error::InvalidConfig(
            "the Euler-Lagrange diagnostic needs at least 3 samples".into(),
        ));
    }
    let momenta: Vec<DVector<f64>> = trajectory
        .positions()
        .iter()
        .zip(trajectory.velocities())
        .map(|(q, v)| model.eval(q, v).map(|jet| jet.dl_dv))
        .collect::<Result<Vec<_>>>()?;
    let mut worst = 0.0f64;
    for i in 1..trajectory.len() - 1 {
        let dt = trajectory.times()[i + 1] - trajectory.times()[i - 1];
        let rate = (&momenta[i + 1] - &momenta[i - 1]) / dt;
        let force = model
            .eval(&trajectory.positions()[i], &trajectory.velocities()[i])?
            .dl_dq;
        worst = worst.max((rate - force).amax());
    }
    Ok(worst)
}

//! ODE-free initial-value integration by composing boundary value solves.
//!
//! One step advances `(q, p)` by finding the next position whose connecting
//! evolution departs with the given momentum: an outer Newton iteration on
//! `D1S(q_k, q_next) + p_k = 0`, where `D1S`/`D2S` are the boundary
//! derivatives of the discrete generating function. Because the update map is
//! generated by that function, the composed flow inherits its long-time
//! energy behavior; all error is quadrature error in the per-step solve.

use nalgebra::{DMatrix, DVector};

use crate::action::boundary_momenta;
use crate::error::{Error, Result};
use crate::grid::Curve;
use crate::linalg::LuFactors;
use crate::model::LagrangianModel;
use crate::solver::{newton, solve_regularized, BvpSolution, RegularizedProblem, SolverConfig};

/// A point of phase space: position and momentum `p = dL/dv`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    pub q: DVector<f64>,
    pub p: DVector<f64>,
}

/// Per-step convergence record.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    /// Outer (momentum-matching) Newton iterations.
    pub outer_iterations: usize,
    /// Final `|D1S + p|` infinity norm.
    pub momentum_residual: f64,
    /// Residual norm of the final inner boundary value solve.
    pub bvp_residual: f64,
    /// Newton iterations of the final inner solve.
    pub bvp_iterations: usize,
    /// Condition estimate of the final inner solve.
    pub condition_estimate: f64,
}

/// Where and why an integration stopped early.
#[derive(Debug, Clone)]
pub struct FlowFailure {
    /// Index of the step that failed (0-based).
    pub step: usize,
    pub error: Error,
}

/// A discrete flow: phase points after 0, 1, ..., k steps of size `h`.
#[derive(Debug, Clone)]
pub struct DiscreteFlow {
    pub h: f64,
    pub points: Vec<PhasePoint>,
    pub diagnostics: Vec<StepDiagnostics>,
    /// Present when the flow was truncated before completing all steps.
    pub failure: Option<FlowFailure>,
}

/// Configuration of the stepping integrator.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowConfig {
    pub solver: SolverConfig,
    /// Tolerance on the momentum-matching residual.
    pub outer_tol: f64,
    /// Outer Newton iteration cap.
    pub outer_max_iter: usize,
    /// Base step for the finite-difference outer sensitivity,
    /// scaled per component as `fd_step * (1 + |q|)`.
    pub fd_step: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            outer_tol: 1e-9,
            outer_max_iter: 30,
            fd_step: 1e-6,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        let tols_ok = self.outer_tol > 0.0 && self.fd_step > 0.0;
        if !tols_ok || self.outer_max_iter == 0 {
            return Err(Error::InvalidConfig(
                "outer tolerance, iteration cap, and fd step must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Advances one phase point by a single boundary value solve.
pub fn step(
    model: &LagrangianModel,
    point: &PhasePoint,
    h: f64,
    config: &FlowConfig,
) -> Result<(PhasePoint, StepDiagnostics)> {
    let mut stepper = Stepper::new(model, h, config)?;
    stepper.advance(point)
}

/// Integrates the initial value problem `q(0) = q0`, `v(0) = v0` with
/// `steps` boundary value solves of duration `h`. On a failing step the flow
/// is truncated there and the error recorded.
pub fn integrate_ivp(
    model: &LagrangianModel,
    q0: &DVector<f64>,
    v0: &DVector<f64>,
    h: f64,
    steps: usize,
    config: &FlowConfig,
) -> Result<DiscreteFlow> {
    if steps == 0 {
        return Err(Error::InvalidConfig(
            "integration needs at least one step".into(),
        ));
    }
    let p0 = model.eval(q0, v0)?.dl_dv;
    let mut stepper = Stepper::new(model, h, config)?;
    let mut flow = DiscreteFlow {
        h,
        points: vec![PhasePoint {
            q: q0.clone(),
            p: p0,
        }],
        diagnostics: Vec::with_capacity(steps),
        failure: None,
    };
    for k in 0..steps {
        let last = flow.points.last().expect("flow starts non-empty");
        match stepper.advance(last) {
            Ok((next, diag)) => {
                flow.points.push(next);
                flow.diagnostics.push(diag);
            }
            Err(error) => {
                flow.failure = Some(FlowFailure { step: k, error });
                break;
            }
        }
    }
    Ok(flow)
}

/// One-step engine carrying the warm start between boundary value solves.
struct Stepper<'m> {
    model: &'m LagrangianModel,
    h: f64,
    config: &'m FlowConfig,
    /// Converged `(V, lambda)` of the most recent inner solve; consecutive
    /// steps are nearby problems, so this is the natural starting iterate.
    warm: Option<(Curve, DVector<f64>)>,
}

impl<'m> Stepper<'m> {
    fn new(model: &'m LagrangianModel, h: f64, config: &'m FlowConfig) -> Result<Self> {
        config.validate()?;
        if !h.is_finite() || h <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "step size must be positive and finite, got {h}"
            )));
        }
        Ok(Self {
            model,
            h,
            config,
            warm: None,
        })
    }

    /// Solves the boundary value problem from `q1` to `q2`, preferring a
    /// warm-started Newton run over the full continuation.
    fn solve_inner(&mut self, q1: &DVector<f64>, q2: &DVector<f64>) -> Result<BvpSolution> {
        let z = (q2 - q1) / self.h;
        if let Some((v_prev, lambda_prev)) = &self.warm {
            // translate the previous curve so it satisfies the new constraint
            let shift = &z - v_prev.quad();
            let values = v_prev.values().iter().map(|v| v + &shift).collect();
            let guess = Curve::new(v_prev.grid(), values)?;
            let problem = RegularizedProblem::new(q1.clone(), z.clone(), self.h)?;
            match newton(
                self.model,
                &problem,
                guess,
                lambda_prev.clone(),
                &self.config.solver,
            ) {
                Ok(solution) => {
                    self.warm = Some((solution.v.clone(), solution.lambda.clone()));
                    return Ok(solution);
                }
                // fall back to continuation from h = 0
                Err(Error::NewtonDiverged(_) | Error::NonRegularLagrangian(_)) => {}
                Err(e) => return Err(e),
            }
        }
        let solution = solve_regularized(self.model, q1, &z, self.h, &self.config.solver)?;
        self.warm = Some((solution.v.clone(), solution.lambda.clone()));
        Ok(solution)
    }

    fn advance(&mut self, point: &PhasePoint) -> Result<(PhasePoint, StepDiagnostics)> {
        let n = self.model.dim();
        let v_start =
            self.model
                .legendre_inverse(&point.q, &point.p, self.config.outer_tol.min(1e-10))?;
        let mut q_next = &point.q + &v_start * self.h;

        for outer in 0..self.config.outer_max_iter {
            let solution = self.solve_inner(&point.q, &q_next)?;
            let (p_start, p_end) = boundary_momenta(self.model, &solution)?;
            // momentum matching: D1S + p = p_k - p(0)
            let defect = &point.p - &p_start;
            let defect_norm = defect.amax();
            if defect_norm <= self.config.outer_tol {
                let diagnostics = StepDiagnostics {
                    outer_iterations: outer,
                    momentum_residual: defect_norm,
                    bvp_residual: solution.residual_norm,
                    bvp_iterations: solution.iterations,
                    condition_estimate: solution.condition_estimate,
                };
                return Ok((
                    PhasePoint {
                        q: q_next,
                        p: p_end,
                    },
                    diagnostics,
                ));
            }

            // forward-difference sensitivity of p(0) with respect to q_next
            let mut sensitivity = DMatrix::zeros(n, n);
            for b in 0..n {
                let fd = self.config.fd_step * (1.0 + q_next[b].abs());
                let mut q_probe = q_next.clone();
                q_probe[b] += fd;
                let probe = self.solve_inner(&point.q, &q_probe)?;
                let (p_probe, _) = boundary_momenta(self.model, &probe)?;
                for a in 0..n {
                    // d(defect)/dq_next = -d p(0)/d q_next
                    sensitivity[(a, b)] = -(p_probe[a] - p_start[a]) / fd;
                }
            }
            let lu = LuFactors::factor(sensitivity).ok_or_else(|| {
                Error::NewtonDiverged("singular momentum-matching sensitivity".into())
            })?;
            let delta = lu.solve(&defect);
            q_next -= delta;
            if !q_next.iter().all(|x| x.is_finite()) {
                return Err(Error::NewtonDiverged(
                    "momentum matching produced a non-finite position".into(),
                ));
            }
        }
        Err(Error::NewtonDiverged(format!(
            "momentum matching did not reach {:.1e} in {} iterations",
            self.config.outer_tol, self.config.outer_max_iter
        )))
    }
}

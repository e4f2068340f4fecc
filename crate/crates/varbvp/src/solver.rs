//! Newton solver for the regularized two-point boundary value problem.
//!
//! The unknown is the velocity curve `V(u)` on the unit interval together
//! with a constant multiplier enforcing the displacement constraint
//! `integral(V) = z`. Positions are reconstructed from the curve by
//! `Q(u) = q1 + h * integral_0^u V`, which is smooth through `h = 0`, and the
//! stationarity system at `h = 0` has the closed-form solution `V = z` with
//! the multiplier equal to the momentum at `(q1, z)`. The solver walks from
//! that exact solution to the requested duration by continuation in `h`,
//! warm-starting a damped Newton iteration at each increment and bisecting
//! the increment when Newton fails.
//!
//! The assembled node equations are the exact gradient of the trapezoid
//! discretization of the action: the force coupling uses the adjoint of the
//! running-integral operator with respect to the weak inner product, which
//! differs from `tail` by a half-weight at the two boundary nodes. Without
//! that correction the discrete gradient and the discrete objective disagree
//! at first order in the mesh width.

use nalgebra::{DMatrix, DVector};

use crate::action::Trajectory;
use crate::error::{Error, Result};
use crate::grid::{Curve, Grid};
use crate::linalg::LuFactors;
use crate::model::{HessianBlocks, LagrangianJet, LagrangianModel, DEFAULT_FD_STEP};

/// Parameter triple of the regularized problem: left endpoint, scaled
/// displacement `z = (q2 - q1) / h`, and duration `h >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularizedProblem {
    pub q1: DVector<f64>,
    pub z: DVector<f64>,
    pub h: f64,
}

impl RegularizedProblem {
    pub fn new(q1: DVector<f64>, z: DVector<f64>, h: f64) -> Result<Self> {
        if q1.len() != z.len() {
            return Err(Error::InvalidConfig(format!(
                "endpoint dimension {} does not match displacement dimension {}",
                q1.len(),
                z.len()
            )));
        }
        if !q1.iter().chain(z.iter()).all(|x| x.is_finite()) {
            return Err(Error::InvalidConfig("non-finite problem data".into()));
        }
        if !h.is_finite() || h < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "duration must be finite and non-negative, got {h}"
            )));
        }
        Ok(Self { q1, z, h })
    }

    pub fn dim(&self) -> usize {
        self.q1.len()
    }
}

/// Knobs of the Newton/continuation solver.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Grid subintervals.
    pub n_sub: usize,
    /// Residual infinity-norm target.
    pub tol: f64,
    /// Newton iteration cap per continuation step.
    pub max_iter: usize,
    /// Number of equal increments used to reach the target duration.
    pub continuation_steps: usize,
    /// How many times a failing increment may be halved.
    pub max_bisections: usize,
    /// Backtracking shrink factor.
    pub damping_factor: f64,
    /// Backtracking cap per Newton step.
    pub max_backtracks: usize,
    /// Jacobian condition estimate above which the problem is declared
    /// non-regular.
    pub cond_threshold: f64,
    /// Bound on node velocities; an iterate beyond it counts as divergence.
    pub v_max: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            n_sub: 64,
            tol: 1e-10,
            max_iter: 50,
            continuation_steps: 8,
            max_bisections: 20,
            damping_factor: 0.5,
            max_backtracks: 30,
            cond_threshold: 1e12,
            v_max: 1e6,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_sub < 2 {
            return bad(format!("n_sub must be at least 2, got {}", self.n_sub));
        }
        let tol_ok = self.tol > 0.0 && self.tol < 1.0;
        if !tol_ok {
            return bad(format!("tol must lie in (0, 1), got {}", self.tol));
        }
        if self.max_iter == 0 || self.continuation_steps == 0 || self.max_backtracks == 0 {
            return bad("iteration counts must be positive".into());
        }
        let damping_ok = self.damping_factor > 0.0 && self.damping_factor < 1.0;
        if !damping_ok {
            return bad(format!(
                "damping_factor must lie in (0, 1), got {}",
                self.damping_factor
            ));
        }
        if self.cond_threshold.is_nan() || self.cond_threshold <= 1.0 {
            return bad(format!(
                "cond_threshold must exceed 1, got {}",
                self.cond_threshold
            ));
        }
        if self.v_max.is_nan() || self.v_max <= 0.0 {
            return bad(format!("v_max must be positive, got {}", self.v_max));
        }
        Ok(())
    }
}

/// A converged solution of the regularized problem.
#[derive(Debug, Clone)]
pub struct BvpSolution {
    pub problem: RegularizedProblem,
    /// Velocity curve on the unit interval.
    pub v: Curve,
    /// Constraint multiplier; equals the momentum at the right endpoint of
    /// the discrete solution.
    pub lambda: DVector<f64>,
    /// Reconstructed positions `Q(u) = q1 + h * integral_0^u V`.
    pub q: Curve,
    pub residual_norm: f64,
    pub iterations: usize,
    /// Infinity-norm condition estimate of the last factored Jacobian.
    pub condition_estimate: f64,
}

/// Positions from a velocity curve: `Q_i = q1 + h * cumulative(V)_i`.
/// Node 0 equals `q1` exactly, for any `h`.
pub fn reconstruct_positions(problem: &RegularizedProblem, v: &Curve) -> Curve {
    let cumulative = v.cumulative();
    let values = cumulative
        .values()
        .iter()
        .map(|c| &problem.q1 + c * problem.h)
        .collect();
    Curve::new(v.grid(), values).expect("cumulative preserves the grid")
}

/// Jets of the model along the reconstructed curve, plus the positions.
fn jets_along(
    model: &LagrangianModel,
    problem: &RegularizedProblem,
    v: &Curve,
) -> Result<(Curve, Vec<LagrangianJet>)> {
    let q = reconstruct_positions(problem, v);
    let jets = q
        .values()
        .iter()
        .zip(v.values())
        .map(|(qi, vi)| model.eval(qi, vi))
        .collect::<Result<Vec<_>>>()?;
    Ok((q, jets))
}

/// Adjoint of the running-integral operator applied to the node sequence `a`:
/// the tail quadrature with the boundary half-weights moved so that
/// `<<adjoint_tail(a), w>> = sum_i weight_i a_i . cumulative(w)_i` exactly.
fn adjoint_tail(grid: Grid, a: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let n_sub = grid.subintervals();
    let half = 0.5 * grid.du();
    let dim = a[0].len();
    let mut out = vec![DVector::zeros(dim); n_sub + 1];
    let mut suffix = DVector::zeros(dim);
    for k in (0..=n_sub).rev() {
        out[k] = if k > 0 {
            &suffix + &a[k] * half
        } else {
            suffix.clone()
        };
        suffix += &a[k] * grid.weight(k);
    }
    out
}

fn stack_state(v: &Curve, lambda: &DVector<f64>) -> DVector<f64> {
    let n = v.dim();
    let mut x = DVector::zeros(n * v.grid().node_count() + n);
    for (i, vi) in v.values().iter().enumerate() {
        x.rows_mut(i * n, n).copy_from(vi);
    }
    x.rows_mut(n * v.grid().node_count(), n).copy_from(lambda);
    x
}

fn unstack_state(grid: Grid, dim: usize, x: &DVector<f64>) -> (Curve, DVector<f64>) {
    let values = (0..grid.node_count())
        .map(|i| x.rows(i * dim, dim).into_owned())
        .collect();
    let lambda = x.rows(dim * grid.node_count(), dim).into_owned();
    let curve = Curve::new(grid, values).expect("state vector has grid shape");
    (curve, lambda)
}

/// Stationarity residual: per-node momentum balance followed by the
/// displacement constraint.
///
/// Node `i` carries `dL/dv(Q_i, V_i) + h * adjoint_tail(dL/dq)_i - lambda`;
/// the final block is `quad(V) - z`. A zero residual is stationarity of the
/// discrete action on the constraint level set.
pub fn residual(
    model: &LagrangianModel,
    problem: &RegularizedProblem,
    v: &Curve,
    lambda: &DVector<f64>,
) -> Result<DVector<f64>> {
    let n = model.dim();
    assert_eq!(problem.dim(), n, "problem dimension mismatch");
    assert_eq!(v.dim(), n, "curve dimension mismatch");
    let grid = v.grid();
    let (_, jets) = jets_along(model, problem, v)?;
    let forces: Vec<DVector<f64>> = jets.iter().map(|j| j.dl_dq.clone()).collect();
    let tail = adjoint_tail(grid, &forces);

    let mut r = DVector::zeros(n * grid.node_count() + n);
    for i in 0..grid.node_count() {
        let g = &jets[i].dl_dv + &tail[i] * problem.h - lambda;
        r.rows_mut(i * n, n).copy_from(&g);
    }
    let constraint = v.quad() - &problem.z;
    r.rows_mut(n * grid.node_count(), n).copy_from(&constraint);
    Ok(r)
}

// Coefficient of node k in cumulative(. )_i under the running trapezoid rule.
fn cumulative_coeff(i: usize, k: usize, du: f64) -> f64 {
    if i == 0 || k > i {
        0.0
    } else if k == 0 || k == i {
        0.5 * du
    } else {
        du
    }
}

/// Exact Jacobian of [`residual`] with respect to the stacked `(V, lambda)`.
///
/// At `h = 0` the velocity block is block-diagonal with `d2L/dv2(q1, V_i)`
/// and the multiplier coupling is minus the identity per node.
pub fn jacobian(
    model: &LagrangianModel,
    problem: &RegularizedProblem,
    v: &Curve,
    lambda: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let _ = lambda; // the system is linear in the multiplier
    let n = model.dim();
    let grid = v.grid();
    let nodes = grid.node_count();
    let du = grid.du();
    let h = problem.h;
    let m = n * nodes + n;

    let q = reconstruct_positions(problem, v);
    let blocks: Vec<HessianBlocks> = q
        .values()
        .iter()
        .zip(v.values())
        .map(|(qi, vi)| model.second_derivatives(qi, vi, DEFAULT_FD_STEP))
        .collect::<Result<Vec<_>>>()?;

    let mut jac = DMatrix::zeros(m, m);
    // Column-block sweep with a running suffix for the double-quadrature
    // term sum_j tstar[i][j] c[j][k] d2L/dq2_j.
    let mut suffix = DMatrix::zeros(n, n);
    for k in 0..nodes {
        suffix.fill(0.0);
        for i in (0..nodes).rev() {
            let c_ik = cumulative_coeff(i, k, du);
            // tstar[i][k]: weight for k > i, half-weight on the diagonal away
            // from node 0
            let t_ik = if k > i {
                grid.weight(k)
            } else if k == i && i > 0 {
                0.5 * du
            } else {
                0.0
            };
            for a in 0..n {
                for b in 0..n {
                    let mut val = if i == k {
                        blocks[i].d2l_dv2[(a, b)]
                    } else {
                        0.0
                    };
                    if h != 0.0 {
                        if c_ik != 0.0 {
                            val += h * c_ik * blocks[i].d2l_dqdv[(a, b)];
                        }
                        if t_ik != 0.0 {
                            // d(dL/dq)/dv is the transposed mixed block
                            val += h * t_ik * blocks[k].d2l_dqdv[(b, a)];
                        }
                        let mut dq2 = suffix[(a, b)];
                        if i > 0 && c_ik != 0.0 {
                            dq2 += 0.5 * du * c_ik * blocks[i].d2l_dq2[(a, b)];
                        }
                        val += h * h * dq2;
                    }
                    jac[(i * n + a, k * n + b)] = val;
                }
            }
            if h != 0.0 && c_ik != 0.0 {
                let w = grid.weight(i) * c_ik;
                for a in 0..n {
                    for b in 0..n {
                        suffix[(a, b)] += w * blocks[i].d2l_dq2[(a, b)];
                    }
                }
            }
        }
    }
    // multiplier column and constraint row
    for i in 0..nodes {
        for a in 0..n {
            jac[(i * n + a, nodes * n + a)] = -1.0;
        }
    }
    for k in 0..nodes {
        let w = grid.weight(k);
        for a in 0..n {
            jac[(nodes * n + a, k * n + a)] = w;
        }
    }
    Ok(jac)
}

const ARMIJO_SLOPE: f64 = 1e-4;

/// Damped Newton iteration on the stationarity system from a caller-supplied
/// guess. Backtracks on the residual infinity norm; records the condition
/// estimate of the last factorization (or of the Jacobian at the solution
/// when the guess is already converged).
pub fn newton(
    model: &LagrangianModel,
    problem: &RegularizedProblem,
    guess_v: Curve,
    guess_lambda: DVector<f64>,
    config: &SolverConfig,
) -> Result<BvpSolution> {
    config.validate()?;
    let grid = guess_v.grid();
    let n = model.dim();
    assert_eq!(guess_v.dim(), n, "guess dimension mismatch");
    assert_eq!(guess_lambda.len(), n, "multiplier dimension mismatch");

    let check_bound = |curve: &Curve| -> Result<()> {
        let worst = curve.max_norm();
        if worst > config.v_max {
            return Err(Error::NewtonDiverged(format!(
                "velocity iterate reached {worst:.3e}, beyond v_max = {:.3e}",
                config.v_max
            )));
        }
        Ok(())
    };

    let mut v = guess_v;
    let mut lambda = guess_lambda;
    check_bound(&v)?;
    let mut r = residual(model, problem, &v, &lambda)?;
    let mut r_norm = r.amax();
    let mut iterations = 0usize;
    let mut condition: Option<f64> = None;

    loop {
        if r_norm <= config.tol {
            let condition_estimate = match condition {
                Some(c) => c,
                // converged without a factorization: assess the Jacobian at
                // the solution so the diagnostic is always populated
                None => factor_with_condition(model, problem, &v, &lambda, config)?.1,
            };
            let q = reconstruct_positions(problem, &v);
            return Ok(BvpSolution {
                problem: problem.clone(),
                v,
                lambda,
                q,
                residual_norm: r_norm,
                iterations,
                condition_estimate,
            });
        }
        if iterations >= config.max_iter {
            return Err(Error::NewtonDiverged(format!(
                "residual {r_norm:.3e} after {iterations} iterations (tol {:.3e})",
                config.tol
            )));
        }

        let (lu, cond) = factor_with_condition(model, problem, &v, &lambda, config)?;
        condition = Some(cond);
        let step = lu.solve(&(-&r));

        // backtracking line search on the residual norm
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..config.max_backtracks {
            let candidate = stack_state(&v, &lambda) + &step * t;
            let (cand_v, cand_lambda) = unstack_state(grid, n, &candidate);
            if cand_v.max_norm() > config.v_max {
                t *= config.damping_factor;
                continue;
            }
            match residual(model, problem, &cand_v, &cand_lambda) {
                Ok(cand_r) => {
                    let cand_norm = cand_r.amax();
                    if cand_norm.is_finite() && cand_norm <= (1.0 - ARMIJO_SLOPE * t) * r_norm {
                        v = cand_v;
                        lambda = cand_lambda;
                        r = cand_r;
                        r_norm = cand_norm;
                        accepted = true;
                        break;
                    }
                }
                // a trial step may leave the chart; shrink and retry
                Err(Error::Domain(_)) => {}
                Err(e) => return Err(e),
            }
            t *= config.damping_factor;
        }
        if !accepted {
            return Err(Error::NewtonDiverged(format!(
                "backtracking stalled at residual {r_norm:.3e} after {iterations} iterations"
            )));
        }
        iterations += 1;
    }
}

fn factor_with_condition(
    model: &LagrangianModel,
    problem: &RegularizedProblem,
    v: &Curve,
    lambda: &DVector<f64>,
    config: &SolverConfig,
) -> Result<(LuFactors, f64)> {
    let jac = jacobian(model, problem, v, lambda)?;
    let lu = LuFactors::factor(jac).ok_or_else(|| {
        Error::NonRegularLagrangian("stationarity Jacobian factorization failed".into())
    })?;
    let cond = lu.condition_estimate();
    if !cond.is_finite() || cond > config.cond_threshold {
        return Err(Error::NonRegularLagrangian(format!(
            "stationarity Jacobian condition estimate {cond:.3e} exceeds threshold {:.3e}",
            config.cond_threshold
        )));
    }
    Ok((lu, cond))
}

/// Solves the regularized problem at duration `h_target` by continuation in
/// `h` from the exact solution at `h = 0` (the constant curve `z` with the
/// multiplier `dL/dv(q1, z)`). Failing increments are halved up to
/// `config.max_bisections` times.
pub fn solve_regularized(
    model: &LagrangianModel,
    q1: &DVector<f64>,
    z: &DVector<f64>,
    h_target: f64,
    config: &SolverConfig,
) -> Result<BvpSolution> {
    config.validate()?;
    if !h_target.is_finite() || h_target < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "target duration must be finite and non-negative, got {h_target}"
        )));
    }
    model.regularity_check(q1, z, config.cond_threshold)?;
    let grid = Grid::new(config.n_sub)?;

    let lambda0 = model.eval(q1, z)?.dl_dv;
    let start = RegularizedProblem::new(q1.clone(), z.clone(), 0.0)?;
    let mut current = newton(model, &start, Curve::constant(grid, z), lambda0, config)?;
    if h_target == 0.0 {
        return Ok(current);
    }

    let initial_dh = h_target / config.continuation_steps as f64;
    let mut dh = initial_dh;
    let mut h = 0.0f64;
    let mut bisections = 0usize;
    while h < h_target {
        let h_next = (h + dh).min(h_target);
        let problem = RegularizedProblem::new(q1.clone(), z.clone(), h_next)?;
        match newton(
            model,
            &problem,
            current.v.clone(),
            current.lambda.clone(),
            config,
        ) {
            Ok(solution) => {
                current = solution;
                h = h_next;
                dh = (2.0 * dh).min(initial_dh);
            }
            Err(e @ (Error::NewtonDiverged(_) | Error::NonRegularLagrangian(_))) => {
                bisections += 1;
                if bisections > config.max_bisections {
                    return Err(Error::NewtonDiverged(format!(
                        "continuation stalled at h = {h:.6} after {bisections} bisections \
                         (target {h_target}); last failure: {e}"
                    )));
                }
                dh *= 0.5;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(current)
}

/// Solves the physical boundary value problem `q(0) = q1`, `q(h) = q2` and
/// reports both the regularized solution and the sampled trajectory.
pub fn solve_bvp(
    model: &LagrangianModel,
    q1: &DVector<f64>,
    q2: &DVector<f64>,
    h: f64,
    config: &SolverConfig,
) -> Result<(BvpSolution, Trajectory)> {
    if !h.is_finite() || h <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "duration must be positive and finite, got {h}"
        )));
    }
    if q1.len() != q2.len() {
        return Err(Error::InvalidConfig(format!(
            "endpoint dimensions differ: {} vs {}",
            q1.len(),
            q2.len()
        )));
    }
    let z = (q2 - q1) / h;
    let solution = solve_regularized(model, q1, &z, h, config)?;
    let trajectory = Trajectory::from_solution(model, &solution)?;
    Ok((solution, trajectory))
}

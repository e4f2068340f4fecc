//! Subcommand implementations and CSV output.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use log::{debug, info};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use varbvp::{
    el_residual, generating_function, integrate_ivp, residual, rk4_flow, shoot_bvp, solve_bvp,
    Curve, Error, FlowConfig, Grid, RegularizedProblem, Result, Trajectory,
};

use crate::problem::ProblemSetup;
use crate::{CheckGradientArgs, ConvergenceArgs, GenfunArgs, IntegrateArgs, ShootArgs, SolveArgs};

/// 17 significant digits: doubles survive the round trip and reruns are
/// byte-identical.
fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_csv(path: Option<&Path>, header: &str, rows: &[Vec<f64>]) -> Result<()> {
    let render = |out: &mut dyn Write| -> std::io::Result<()> {
        writeln!(out, "{header}")?;
        for row in rows {
            let line: Vec<String> = row.iter().map(|&x| fmt(x)).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    };
    let io_err = |e: std::io::Error| Error::InvalidConfig(format!("cannot write output: {e}"));
    match path {
        Some(path) => {
            let file = File::create(path).map_err(|e| {
                Error::InvalidConfig(format!("cannot create {}: {e}", path.display()))
            })?;
            let mut out = BufWriter::new(file);
            render(&mut out).map_err(io_err)?;
            out.flush().map_err(io_err)
        }
        None => {
            let stdout = std::io::stdout();
            let mut out = stdout.lock();
            render(&mut out).map_err(io_err)
        }
    }
}

fn columns(prefix: &str, n: usize) -> String {
    (0..n)
        .map(|i| format!("{prefix}_{i}"))
        .collect::<Vec<_>>()
        .join(",")
}

fn trajectory_rows(
    model: &varbvp::LagrangianModel,
    trajectory: &Trajectory,
) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::with_capacity(trajectory.len());
    for ((t, q), v) in trajectory
        .times()
        .iter()
        .zip(trajectory.positions())
        .zip(trajectory.velocities())
    {
        let mut row = Vec::with_capacity(1 + 2 * q.len() + 1);
        row.push(*t);
        row.extend(q.iter());
        row.extend(v.iter());
        row.push(model.energy(q, v)?);
        rows.push(row);
    }
    Ok(rows)
}

pub fn solve(args: SolveArgs) -> Result<()> {
    let setup = ProblemSetup::build(&args.model, &args.solver)?;
    let q1 = setup.vector(&args.q1, "q1")?;
    let q2 = setup.vector(&args.q2, "q2")?;
    let h = setup.duration(args.h)?;
    let (solution, trajectory) = solve_bvp(&setup.model, &q1, &q2, h, &setup.config)?;
    info!(
        "solve: model={} n={} h={h} iterations={} residual={:.3e} condition={:.3e}",
        setup.model.name(),
        setup.config.n_sub,
        solution.iterations,
        solution.residual_norm,
        solution.condition_estimate
    );
    let n = setup.model.dim();
    let header = format!("t,{},{},E", columns("q", n), columns("v", n));
    let rows = trajectory_rows(&setup.model, &trajectory)?;
    write_csv(args.out.as_deref(), &header, &rows)
}

pub fn genfun(args: GenfunArgs) -> Result<()> {
    let setup = ProblemSetup::build(&args.model, &args.solver)?;
    let h = setup.duration(args.h)?;
    let n = setup.model.dim();
    let header = format!(
        "{},{},S,{},{}",
        columns("q1", n),
        columns("q2", n),
        columns("D1S", n),
        columns("D2S", n)
    );

    if let Some(spec) = &args.grid {
        if n != 1 {
            return Err(Error::InvalidConfig(
                "--grid tabulation is defined for one-dimensional models".into(),
            ));
        }
        let (q1_axis, q2_axis) = parse_grid_spec(spec)?;
        let cells: Vec<(f64, f64)> = q1_axis
            .iter()
            .flat_map(|&a| q2_axis.iter().map(move |&b| (a, b)))
            .collect();
        info!(
            "genfun: tabulating {} x {} endpoints at h={h}",
            q1_axis.len(),
            q2_axis.len()
        );
        // independent solves in parallel; row order is fixed by the cell
        // order, not by scheduling
        let results: Vec<Result<Vec<f64>>> = cells
            .par_iter()
            .map(|&(a, b)| {
                let g = generating_function(
                    &setup.model,
                    &DVector::from_vec(vec![a]),
                    &DVector::from_vec(vec![b]),
                    h,
                    &setup.config,
                )?;
                Ok(vec![a, b, g.s, g.d1s[0], g.d2s[0]])
            })
            .collect();
        let rows = results.into_iter().collect::<Result<Vec<_>>>()?;
        return write_csv(args.out.as_deref(), &header, &rows);
    }

    let q1 = setup.vector(&args.q1, "q1")?;
    let q2 = setup.vector(&args.q2, "q2")?;
    let g = generating_function(&setup.model, &q1, &q2, h, &setup.config)?;
    let join = |v: &DVector<f64>| v.iter().map(|&x| fmt(x)).collect::<Vec<_>>().join(" ");
    println!("S = {}", fmt(g.s));
    println!("D1S = {}", join(&g.d1s));
    println!("D2S = {}", join(&g.d2s));
    if args.out.is_some() {
        let mut row = Vec::new();
        row.extend(q1.iter());
        row.extend(q2.iter());
        row.push(g.s);
        row.extend(g.d1s.iter());
        row.extend(g.d2s.iter());
        write_csv(args.out.as_deref(), &header, &[row])?;
    }
    Ok(())
}

fn parse_grid_spec(spec: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let axes: Vec<&str> = spec.split(',').collect();
    if axes.len() != 2 {
        return Err(Error::InvalidConfig(format!(
            "--grid expects 'a:b:k,a:b:k', got '{spec}'"
        )));
    }
    let parse_axis = |axis: &str| -> Result<Vec<f64>> {
        let parts: Vec<&str> = axis.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::InvalidConfig(format!(
                "grid axis expects 'start:stop:count', got '{axis}'"
            )));
        }
        let start: f64 = parts[0]
            .trim()
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("bad grid start '{}'", parts[0])))?;
        let stop: f64 = parts[1]
            .trim()
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("bad grid stop '{}'", parts[1])))?;
        let count: usize = parts[2]
            .trim()
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("bad grid count '{}'", parts[2])))?;
        if count < 1 {
            return Err(Error::InvalidConfig("grid count must be positive".into()));
        }
        if count == 1 {
            return Ok(vec![start]);
        }
        let step = (stop - start) / (count - 1) as f64;
        Ok((0..count).map(|i| start + step * i as f64).collect())
    };
    Ok((parse_axis(axes[0])?, parse_axis(axes[1])?))
}

pub fn integrate(args: IntegrateArgs) -> Result<()> {
    let setup = ProblemSetup::build(&args.model, &args.solver)?;
    let q0 = setup.vector(&args.q0, "q0")?;
    let v0 = setup.vector(&args.v0, "v0")?;
    let h = setup.duration(args.h)?;
    let steps = setup.steps(args.steps)?;
    let mut flow_config = FlowConfig {
        solver: setup.config.clone(),
        ..FlowConfig::default()
    };
    if let Some(tol) = args.outer_tol {
        flow_config.outer_tol = tol;
    }

    let flow = integrate_ivp(&setup.model, &q0, &v0, h, steps, &flow_config)?;
    for (k, diag) in flow.diagnostics.iter().enumerate() {
        debug!(
            "step {k}: outer_iterations={} momentum_residual={:.3e} bvp_iterations={} condition={:.3e}",
            diag.outer_iterations, diag.momentum_residual, diag.bvp_iterations, diag.condition_estimate
        );
    }

    let n = setup.model.dim();
    let header = format!("step,t,{},{},E", columns("q", n), columns("p", n));
    let mut rows = Vec::with_capacity(flow.points.len());
    for (k, point) in flow.points.iter().enumerate() {
        let v = setup.model.legendre_inverse(&point.q, &point.p, 1e-12)?;
        let mut row = Vec::with_capacity(2 + 2 * n + 1);
        row.push(k as f64);
        row.push(k as f64 * h);
        row.extend(point.q.iter());
        row.extend(point.p.iter());
        row.push(setup.model.energy(&point.q, &v)?);
        rows.push(row);
    }
    write_csv(args.out.as_deref(), &header, &rows)?;

    match flow.failure {
        None => {
            info!(
                "integrate: model={} completed {} steps of h={h}",
                setup.model.name(),
                steps
            );
            Ok(())
        }
        Some(failure) => {
            info!(
                "integrate: truncated at step {} of {steps}; partial flow written",
                failure.step
            );
            Err(failure.error)
        }
    }
}

pub fn shoot(args: ShootArgs) -> Result<()> {
    let setup = ProblemSetup::build(&args.model, &crate::SolverArgs::default())?;
    let q1 = setup.vector(&args.q1, "q1")?;
    let q2 = setup.vector(&args.q2, "q2")?;
    let h = setup.duration(args.h)?;
    let v0 = shoot_bvp(&setup.model, &q1, &q2, h, args.tol)?;
    let rendered = v0.iter().map(|&x| fmt(x)).collect::<Vec<_>>().join(" ");
    println!("v0 = {rendered}");
    Ok(())
}

pub fn check_gradient(args: CheckGradientArgs) -> Result<()> {
    let setup = ProblemSetup::build(&args.model, &args.solver)?;
    let q1 = setup.vector(&args.q1, "q1")?;
    let h = setup.duration(args.h)?;
    if args.samples == 0 || args.fd_step.is_nan() || args.fd_step <= 0.0 {
        return Err(Error::InvalidConfig(
            "check-gradient needs positive samples and fd step".into(),
        ));
    }
    let n = setup.model.dim();
    let grid = Grid::new(setup.config.n_sub)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);

    let objective = |v: &Curve| -> Result<f64> {
        let problem = RegularizedProblem::new(q1.clone(), DVector::zeros(n), h)?;
        let q = varbvp::reconstruct_positions(&problem, v);
        let du = grid.du();
        let mut acc = 0.0;
        let mut prev = f64::NAN;
        for i in 0..grid.node_count() {
            let l = setup.model.eval(q.value(i), v.value(i))?.l;
            if i > 0 {
                acc += (prev + l) * (0.5 * du);
            }
            prev = l;
        }
        Ok(acc)
    };

    let mut worst = 0.0f64;
    for sample in 0..args.samples {
        let random_curve = |rng: &mut ChaCha8Rng| {
            Curve::new(
                grid,
                (0..grid.node_count())
                    .map(|_| DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)))
                    .collect(),
            )
            .expect("random curve has grid shape")
        };
        let v = random_curve(&mut rng);
        let direction = random_curve(&mut rng).mean_project();

        let shifted = |sign: f64| {
            Curve::new(
                grid,
                v.values()
                    .iter()
                    .zip(direction.values())
                    .map(|(a, d)| a + d * (sign * args.fd_step))
                    .collect(),
            )
            .expect("shifted curve has grid shape")
        };
        let derivative =
            (objective(&shifted(1.0))? - objective(&shifted(-1.0))?) / (2.0 * args.fd_step);

        let problem = RegularizedProblem::new(q1.clone(), DVector::zeros(n), h)?;
        let g = residual(&setup.model, &problem, &v, &DVector::zeros(n))?;
        let g_curve = Curve::new(
            grid,
            (0..grid.node_count())
                .map(|i| g.rows(i * n, n).into_owned())
                .collect(),
        )?;
        let pairing = g_curve.mean_project().inner_product(&direction)?;
        let rel = (derivative - pairing).abs() / derivative.abs().max(1e-12);
        worst = worst.max(rel);
        println!(
            "sample {sample}: directional = {}, assembled = {}, rel_error = {:.3e}",
            fmt(derivative),
            fmt(pairing),
            rel
        );
    }
    println!("max relative error = {worst:.3e}");
    Ok(())
}

pub fn convergence(args: ConvergenceArgs) -> Result<()> {
    let setup = ProblemSetup::build(&args.model, &args.solver)?;
    let q1 = setup.vector(&args.q1, "q1")?;
    let q2 = setup.vector(&args.q2, "q2")?;
    let h = setup.duration(args.h)?;
    let n_list = args
        .n_list
        .split(',')
        .map(|part| {
            part.trim().parse::<usize>().map_err(|_| {
                Error::InvalidConfig(format!("'{part}' is not a grid size in --n-list"))
            })
        })
        .collect::<Result<Vec<usize>>>()?;
    if n_list.is_empty() {
        return Err(Error::InvalidConfig("--n-list is empty".into()));
    }

    // reference trajectory from the independent oracle, four substeps per
    // reported sample so its own error stays far below the solver's
    let v0 = shoot_bvp(&setup.model, &q1, &q2, h, 1e-11)?;
    let error_at = |n_sub: usize| -> Result<f64> {
        let config = varbvp::SolverConfig {
            n_sub,
            ..setup.config.clone()
        };
        let (_, trajectory) = solve_bvp(&setup.model, &q1, &q2, h, &config)?;
        let reference = rk4_flow(&setup.model, &q1, &v0, h, 4 * n_sub)?;
        let mut worst = 0.0f64;
        for (i, q) in trajectory.positions().iter().enumerate() {
            let q_ref = &reference.positions()[4 * i];
            worst = worst.max((q - q_ref).amax());
        }
        Ok(worst)
    };

    let mut rows = Vec::with_capacity(n_list.len());
    let mut previous: Option<f64> = None;
    println!("{:>8} {:>24} {:>10}", "N", "max_error", "ratio");
    for &n_sub in &n_list {
        let err = error_at(n_sub)?;
        let ratio = previous.map_or(f64::NAN, |p| p / err);
        if previous.is_some() {
            println!("{n_sub:>8} {:>24} {ratio:>10.3}", fmt(err));
        } else {
            println!("{n_sub:>8} {:>24} {:>10}", fmt(err), "-");
        }
        rows.push(vec![n_sub as f64, err, ratio]);
        previous = Some(err);
    }
    if args.out.is_some() {
        write_csv(args.out.as_deref(), "N,max_error,ratio", &rows)?;
    }

    // trailing diagnostic: Euler-Lagrange residual at the finest grid
    let config = varbvp::SolverConfig {
        n_sub: *n_list.last().expect("n_list is non-empty"),
        ..setup.config.clone()
    };
    let (_, trajectory) = solve_bvp(&setup.model, &q1, &q2, h, &config)?;
    let residual = el_residual(&setup.model, &trajectory)?;
    info!("convergence: EL residual at finest grid = {residual:.3e}");
    Ok(())
}

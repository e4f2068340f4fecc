//! Acceptance suite: one test per criterion, each printing a pass line with
//! the measured quantity. Run with `cargo test --test acceptance -- --nocapture`
//! to see the lines.

use std::collections::BTreeMap;
use std::f64::consts::{E, FRAC_PI_2, PI};
use std::time::Instant;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use varbvp::{
    el_residual, generating_function, integrate_ivp, make_builtin, newton, residual, shoot_bvp,
    solve_bvp, solve_regularized, Curve, FlowConfig, LagrangianModel, SolverConfig, BUILTIN_NAMES,
};

fn builtin(name: &str) -> LagrangianModel {
    make_builtin(name, &BTreeMap::new()).unwrap()
}

fn vec1(x: f64) -> DVector<f64> {
    DVector::from_vec(vec![x])
}

/// Random point of the model's configuration domain, away from chart edges.
fn sample_q1(model: &LagrangianModel, rng: &mut ChaCha8Rng) -> DVector<f64> {
    let mut q = DVector::from_fn(model.dim(), |_, _| rng.random_range(-1.0..1.0));
    match model.name() {
        "halfplane_metric" => q[1] = rng.random_range(0.5..2.0),
        "sphere_chart_metric" => q[0] = rng.random_range(0.6..PI - 0.6),
        _ => {}
    }
    q
}

#[test]
fn criterion_1_h0_exactness() {
    let config = SolverConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for name in BUILTIN_NAMES {
        let model = builtin(name);
        for _ in 0..50 {
            let q1 = sample_q1(&model, &mut rng);
            let z = DVector::from_fn(model.dim(), |_, _| rng.random_range(-2.0..2.0));
            let sol = solve_regularized(&model, &q1, &z, 0.0, &config)
                .unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(sol.iterations, 0, "{name}: took Newton iterations at h=0");
            assert!(
                sol.residual_norm <= 1e-12,
                "{name}: residual {} at h=0",
                sol.residual_norm
            );
            for node in sol.v.values() {
                assert_eq!(node, &z, "{name}: solution is not the constant curve z");
            }
        }
    }
    println!(
        "criterion 1 (h=0 exactness): PASS — 7 models x 50 draws, residual <= 1e-12, 0 iterations"
    );
}

#[test]
fn criterion_2_gradient_fidelity() {
    // independent oracle: the discrete objective itself, differentiated by
    // central differences along mean-zero directions
    let pendulum = builtin("pendulum");
    let n_sub = 32usize;
    let h = 0.3;
    let grid = varbvp::Grid::new(n_sub).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;

    let objective = |q1: &DVector<f64>, v: &Curve| -> f64 {
        // trapezoid integral of L(Q(u), V(u)) with Q from the running integral
        let problem = varbvp::RegularizedProblem::new(q1.clone(), DVector::zeros(1), h).unwrap();
        let q = varbvp::reconstruct_positions(&problem, v);
        let du = grid.du();
        let mut acc = 0.0;
        let mut prev = f64::NAN;
        for i in 0..grid.node_count() {
            let l = pendulum.eval(q.value(i), v.value(i)).unwrap().l;
            if i > 0 {
                acc += (prev + l) * (0.5 * du);
            }
            prev = l;
        }
        acc
    };

    for _ in 0..20 {
        let q1 = vec1(rng.random_range(-1.0..1.0));
        let z = vec1(rng.random_range(-1.5..1.5));
        let v = Curve::new(
            grid,
            (0..grid.node_count())
                .map(|_| vec1(rng.random_range(-1.0..1.0)))
                .collect(),
        )
        .unwrap();
        let direction = Curve::new(
            grid,
            (0..grid.node_count())
                .map(|_| vec1(rng.random_range(-1.0..1.0)))
                .collect(),
        )
        .unwrap()
        .mean_project();

        let eps = 1e-5;
        let shift = |sign: f64| {
            let values = v
                .values()
                .iter()
                .zip(direction.values())
                .map(|(a, d)| a + d * (sign * eps))
                .collect();
            Curve::new(grid, values).unwrap()
        };
        let derivative = (objective(&q1, &shift(1.0)) - objective(&q1, &shift(-1.0))) / (2.0 * eps);

        let problem = varbvp::RegularizedProblem::new(q1, z, h).unwrap();
        let g = residual(&pendulum, &problem, &v, &DVector::zeros(1)).unwrap();
        let g_curve =
            Curve::new(grid, (0..grid.node_count()).map(|i| vec1(g[i])).collect()).unwrap();
        let pairing = g_curve.mean_project().inner_product(&direction).unwrap();

        let rel = (derivative - pairing).abs() / derivative.abs().max(1e-12);
        worst = worst.max(rel);
        assert!(
            rel <= 1e-6,
            "directional derivative {derivative} vs weak pairing {pairing} (rel {rel})"
        );
    }
    println!("criterion 2 (gradient fidelity): PASS — worst relative error {worst:.2e} <= 1e-6");
}

#[test]
fn criterion_3_closed_form_oscillator() {
    let harmonic = builtin("harmonic");
    let config = SolverConfig {
        n_sub: 256,
        ..SolverConfig::default()
    };
    let started = Instant::now();
    let (_, traj) = solve_bvp(&harmonic, &vec1(0.0), &vec1(1.0), FRAC_PI_2, &config).unwrap();
    let g = generating_function(&harmonic, &vec1(0.0), &vec1(1.0), FRAC_PI_2, &config).unwrap();
    let elapsed = started.elapsed();

    let mut worst = 0.0f64;
    for (t, q) in traj.times().iter().zip(traj.positions()) {
        worst = worst.max((q[0] - t.sin()).abs());
    }
    assert!(worst <= 1e-3, "trajectory error {worst}");
    assert!(g.s.abs() <= 1e-3, "S = {}", g.s);
    assert!((g.d1s[0] + 1.0).abs() <= 1e-2, "D1S = {}", g.d1s[0]);
    assert!(g.d2s[0].abs() <= 1e-2, "D2S = {}", g.d2s[0]);
    assert!(
        elapsed.as_secs_f64() <= 1.0,
        "solve + generating function took {elapsed:?}"
    );
    println!(
        "criterion 3 (closed-form oscillator): PASS — max |q - sin t| = {worst:.2e}, \
         (S, D1S, D2S) = ({:.2e}, {:.6}, {:.2e}), runtime {elapsed:?}",
        g.s, g.d1s[0], g.d2s[0]
    );
}

#[test]
fn criterion_4_order_two_convergence() {
    let harmonic = builtin("harmonic");
    let trajectory_error = |n_sub: usize| -> f64 {
        let config = SolverConfig {
            n_sub,
            ..SolverConfig::default()
        };
        let (_, traj) = solve_bvp(&harmonic, &vec1(0.0), &vec1(1.0), FRAC_PI_2, &config).unwrap();
        traj.times()
            .iter()
            .zip(traj.positions())
            .map(|(t, q)| (q[0] - t.sin()).abs())
            .fold(0.0, f64::max)
    };
    let errors: Vec<f64> = [32usize, 64, 128, 256]
        .iter()
        .map(|&n| trajectory_error(n))
        .collect();
    let mut ratios = Vec::new();
    for w in errors.windows(2) {
        let ratio = w[0] / w[1];
        assert!(
            (3.3..=4.7).contains(&ratio),
            "refinement ratio {ratio} outside [3.3, 4.7] (errors {errors:?})"
        );
        ratios.push(ratio);
    }
    println!(
        "criterion 4 (order-2 convergence): PASS — ratios {:?}",
        ratios
            .iter()
            .map(|r| (r * 100.0).round() / 100.0)
            .collect::<Vec<_>>()
    );
}

#[test]
fn criterion_5_oracle_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let config = SolverConfig::default();
    let mut worst = 0.0f64;
    for trial in 0..20 {
        let model = if trial % 2 == 0 {
            builtin("pendulum")
        } else {
            builtin("harmonic")
        };
        // draw a solvable instance by integrating from a random start
        let q1 = vec1(rng.random_range(-0.5..0.5));
        let v0 = vec1(rng.random_range(-1.5..1.5));
        let h = rng.random_range(0.2..0.8);
        let q2 = varbvp::rk4_flow(&model, &q1, &v0, h, 400)
            .unwrap()
            .positions()
            .last()
            .unwrap()
            .clone();

        let (_, traj) = solve_bvp(&model, &q1, &q2, h, &config).unwrap();
        let v_bvp = traj.velocities()[0][0];
        let v_shoot = shoot_bvp(&model, &q1, &q2, h, 1e-10).unwrap()[0];
        let gap = (v_bvp - v_shoot).abs();
        worst = worst.max(gap);
        assert!(gap <= 1e-4, "{}: v(0) gap {gap} (h = {h:.3})", model.name());
    }
    println!(
        "criterion 5 (oracle equivalence): PASS — worst initial-velocity gap {worst:.2e} <= 1e-4"
    );
}

#[test]
fn criterion_6_geodesic_check() {
    let halfplane = builtin("halfplane_metric");
    let config = SolverConfig {
        n_sub: 256,
        ..SolverConfig::default()
    };
    let q1 = DVector::from_vec(vec![0.0, 1.0]);
    let q2 = DVector::from_vec(vec![0.0, E]);
    let (sol, traj) = solve_bvp(&halfplane, &q1, &q2, 1.0, &config).unwrap();
    let s = varbvp::action(&halfplane, &sol).unwrap();
    let residual = el_residual(&halfplane, &traj).unwrap();
    assert!((s - 0.5).abs() <= 1e-3, "geodesic action {s}");
    assert!(residual <= 1e-3, "Euler-Lagrange residual {residual}");
    println!(
        "criterion 6 (half-plane geodesic): PASS — action {s:.6} (target 0.5 +/- 1e-3), \
         EL residual {residual:.2e} <= 1e-3"
    );
}

#[test]
fn criterion_7_locality_diagnostic() {
    let harmonic = builtin("harmonic");
    let config = SolverConfig::default();
    let z = vec1(0.0);
    let cond_at = |h: f64| {
        solve_regularized(&harmonic, &vec1(0.0), &z, h, &config)
            .unwrap()
            .condition_estimate
    };
    let cond_low = cond_at(1.0);
    let cond_near = cond_at(3.1);
    let factor = cond_near / cond_low;
    assert!(
        factor >= 50.0,
        "condition grew only {factor:.1}x ({cond_low:.3e} -> {cond_near:.3e})"
    );
    println!(
        "criterion 7 (locality diagnostic): PASS — condition {cond_low:.3e} at h=1.0 vs \
         {cond_near:.3e} at h=3.1 ({factor:.0}x >= 50x)"
    );
}

#[test]
fn criterion_8_ode_free_integration() {
    // pendulum: 200 steps of h = 0.1 with the default N = 64 inner grid
    let pendulum = builtin("pendulum");
    let config = FlowConfig::default();
    let q0 = vec1(1.0);
    let v0 = vec1(0.0);
    let e0 = pendulum.energy(&q0, &v0).unwrap();
    let flow = integrate_ivp(&pendulum, &q0, &v0, 0.1, 200, &config).unwrap();
    assert!(flow.failure.is_none(), "flow truncated: {:?}", flow.failure);
    let mut drift = 0.0f64;
    for point in &flow.points {
        let v = pendulum
            .legendre_inverse(&point.q, &point.p, 1e-12)
            .unwrap();
        drift = drift.max((pendulum.energy(&point.q, &v).unwrap() - e0).abs());
    }
    assert!(drift <= 1e-4, "energy drift {drift}");

    // free particle: exact to round-off
    let free = builtin("free");
    let flow = integrate_ivp(&free, &vec1(0.0), &vec1(1.0), 0.1, 10, &config).unwrap();
    assert!(flow.failure.is_none());
    let end = flow.points.last().unwrap();
    let q_err = (end.q[0] - 1.0).abs();
    let p_err = (end.p[0] - 1.0).abs();
    assert!(
        q_err <= 1e-12 && p_err <= 1e-12,
        "free flow error ({q_err}, {p_err})"
    );
    println!(
        "criterion 8 (ODE-free integration): PASS — pendulum energy drift {drift:.2e} <= 1e-4, \
         free-particle endpoint error {:.2e} <= 1e-12",
        q_err.max(p_err)
    );
}

#[test]
fn criterion_9_uniqueness_basin() {
    let harmonic = builtin("harmonic");
    let config = SolverConfig::default();
    let reference = solve_regularized(&harmonic, &vec1(0.0), &vec1(1.0), 1.0, &config).unwrap();
    let grid = reference.v.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let raw = Curve::new(
            grid,
            (0..grid.node_count())
                .map(|_| vec1(rng.random_range(-1.0..1.0)))
                .collect(),
        )
        .unwrap();
        let mean_zero = raw.mean_project();
        let scale = 0.1 / mean_zero.max_norm();
        let perturbed = Curve::new(
            grid,
            reference
                .v
                .values()
                .iter()
                .zip(mean_zero.values())
                .map(|(v, d)| v + d * scale)
                .collect(),
        )
        .unwrap();
        let resolved = newton(
            &harmonic,
            &reference.problem,
            perturbed,
            reference.lambda.clone(),
            &config,
        )
        .unwrap();
        let mut distance = 0.0f64;
        for (a, b) in resolved.v.values().iter().zip(reference.v.values()) {
            distance = distance.max((a - b).amax());
        }
        worst = worst.max(distance);
        assert!(
            distance <= 1e-8,
            "returned {distance} from the reference solution"
        );
    }
    println!("criterion 9 (uniqueness basin): PASS — worst return distance {worst:.2e} <= 1e-8 over 10 perturbations");
}

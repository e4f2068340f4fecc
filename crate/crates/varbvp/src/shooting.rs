//! Independent verification path: Runge-Kutta integration of the
//! Euler-Lagrange equations in chart form plus single shooting.
//!
//! Deliberately a different discretization family from the variational
//! solver, so agreement between the two is evidence rather than tautology.

use nalgebra::DVector;

use crate::action::Trajectory;
use crate::error::{Error, Result};
use crate::linalg::LuFactors;
use crate::model::{LagrangianModel, DEFAULT_FD_STEP};

/// Acceleration field of the Euler-Lagrange equations:
/// `d2L/dv2 a = dL/dq - d2L/dqdv v`.
pub fn el_acceleration(
    model: &LagrangianModel,
    q: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<DVector<f64>> {
    let jet = model.eval(q, v)?;
    let blocks = model.second_derivatives(q, v, DEFAULT_FD_STEP)?;
    let rhs = jet.dl_dq - &blocks.d2l_dqdv * v;
    let lu = LuFactors::factor(blocks.d2l_dv2).ok_or_else(|| {
        Error::NonRegularLagrangian(format!(
            "d2L/dv2 of model '{}' is singular along the flow",
            model.name()
        ))
    })?;
    Ok(lu.solve(&rhs))
}

/// Classical fourth-order Runge-Kutta on `(q, v)` with the Euler-Lagrange
/// acceleration, sampling every step.
pub fn rk4_flow(
    model: &LagrangianModel,
    q0: &DVector<f64>,
    v0: &DVector<f64>,
    t_end: f64,
    steps: usize,
) -> Result<Trajectory> {
    if steps == 0 {
        return Err(Error::InvalidConfig(
            "rk4_flow needs at least one step".into(),
        ));
    }
    if !t_end.is_finite() || t_end <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "integration time must be positive and finite, got {t_end}"
        )));
    }
    let dt = t_end / steps as f64;
    let mut q = q0.clone();
    let mut v = v0.clone();
    let mut times = Vec::with_capacity(steps + 1);
    let mut positions = Vec::with_capacity(steps + 1);
    let mut velocities = Vec::with_capacity(steps + 1);
    times.push(0.0);
    positions.push(q.clone());
    velocities.push(v.clone());
    for i in 0..steps {
        rk4_step(model, &mut q, &mut v, dt)?;
        times.push(dt * (i + 1) as f64);
        positions.push(q.clone());
        velocities.push(v.clone());
    }
    Trajectory::new(times, positions, velocities)
}

fn rk4_step(
    model: &LagrangianModel,
    q: &mut DVector<f64>,
    v: &mut DVector<f64>,
    dt: f64,
) -> Result<()> {
    let a1 = el_acceleration(model, q, v)?;
    let k1 = (v.clone(), a1);

    let q2 = &*q + &k1.0 * (0.5 * dt);
    let v2 = &*v + &k1.1 * (0.5 * dt);
    let k2 = (v2.clone(), el_acceleration(model, &q2, &v2)?);

    let q3 = &*q + &k2.0 * (0.5 * dt);
    let v3 = &*v + &k2.1 * (0.5 * dt);
    let k3 = (v3.clone(), el_acceleration(model, &q3, &v3)?);

    let q4 = &*q + &k3.0 * dt;
    let v4 = &*v + &k3.1 * dt;
    let k4 = (v4.clone(), el_acceleration(model, &q4, &v4)?);

    *q += (k1.0 + k2.0 * 2.0 + k3.0 * 2.0 + k4.0) * (dt / 6.0);
    *v += (k1.1 + k2.1 * 2.0 + k3.1 * 2.0 + k4.1) * (dt / 6.0);
    Ok(())
}

// Endpoint of the flow without recording the path.
fn endpoint(
    model: &LagrangianModel,
    q0: &DVector<f64>,
    v0: &DVector<f64>,
    t_end: f64,
    steps: usize,
) -> Result<DVector<f64>> {
    let dt = t_end / steps as f64;
    let mut q = q0.clone();
    let mut v = v0.clone();
    for _ in 0..steps {
        rk4_step(model, &mut q, &mut v, dt)?;
    }
    Ok(q)
}

fn shooting_steps(h: f64) -> usize {
    ((256.0 * h).ceil() as usize).max(400)
}

/// Solves the boundary value problem by single shooting: Newton on the
/// initial velocity with a finite-difference sensitivity of the RK4 endpoint
/// map. Returns the initial velocity.
pub fn shoot_bvp(
    model: &LagrangianModel,
    q1: &DVector<f64>,
    q2: &DVector<f64>,
    h: f64,
    tol: f64,
) -> Result<DVector<f64>> {
    if !h.is_finite() || h <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "shooting requires a positive duration, got {h}"
        )));
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let n = model.dim();
    let steps = shooting_steps(h);
    let mut v0 = (q2 - q1) / h;
    const MAX_ITER: usize = 50;
    for _ in 0..MAX_ITER {
        let miss = endpoint(model, q1, &v0, h, steps)? - q2;
        if miss.amax() <= tol {
            return Ok(v0);
        }
        // sensitivity of the endpoint map by central differences
        let mut sensitivity = nalgebra::DMatrix::zeros(n, n);
        for b in 0..n {
            let step = 1e-6 * (1.0 + v0[b].abs());
            let mut vp = v0.clone();
            let mut vm = v0.clone();
            vp[b] += step;
            vm[b] -= step;
            let ep = endpoint(model, q1, &vp, h, steps)?;
            let em = endpoint(model, q1, &vm, h, steps)?;
            for a in 0..n {
                sensitivity[(a, b)] = (ep[a] - em[a]) / (2.0 * step);
            }
        }
        let lu = LuFactors::factor(sensitivity)
            .ok_or_else(|| Error::NewtonDiverged("singular shooting sensitivity".into()))?;
        v0 -= lu.solve(&miss);
        if !v0.iter().all(|x| x.is_finite()) {
            return Err(Error::NewtonDiverged(
                "shooting produced a non-finite velocity".into(),
            ));
        }
    }
    Err(Error::NewtonDiverged(format!(
        "shooting did not reach tolerance {tol} in {MAX_ITER} iterations"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtins::make_builtin;
    use std::collections::BTreeMap;

    fn builtin(name: &str) -> LagrangianModel {
        make_builtin(name, &BTreeMap::new()).unwrap()
    }

    fn vec1(x: f64) -> DVector<f64> {
        DVector::from_vec(vec![x])
    }

    #[test]
    fn acceleration_examples() {
        let free = builtin("free");
        let a = el_acceleration(&free, &vec1(0.4), &vec1(-2.0)).unwrap();
        assert_eq!(a[0], 0.0);

        let harmonic = builtin("harmonic");
        let a = el_acceleration(&harmonic, &vec1(1.0), &vec1(0.0)).unwrap();
        assert_eq!(a[0], -1.0);

        // vertical geodesic of the half plane: y(t) = e^t has yddot = y
        let halfplane = builtin("halfplane_metric");
        let q = DVector::from_vec(vec![0.0, 1.0]);
        let v = DVector::from_vec(vec![0.0, 1.0]);
        let a = el_acceleration(&halfplane, &q, &v).unwrap();
        assert!((a[1] - 1.0).abs() <= 1e-12, "a_y = {}", a[1]);
        assert!(a[0].abs() <= 1e-12);
    }

    #[test]
    fn rk4_oscillator_quarter_period() {
        let harmonic = builtin("harmonic");
        let traj = rk4_flow(
            &harmonic,
            &vec1(0.0),
            &vec1(1.0),
            std::f64::consts::FRAC_PI_2,
            1000,
        )
        .unwrap();
        let q_end = traj.positions().last().unwrap()[0];
        let v_end = traj.velocities().last().unwrap()[0];
        assert!((q_end - 1.0).abs() <= 1e-10);
        assert!(v_end.abs() <= 1e-10);
    }

    #[test]
    fn rk4_free_particle_is_exact() {
        let free = builtin("free");
        let traj = rk4_flow(&free, &vec1(0.0), &vec1(1.0), 1.0, 17).unwrap();
        let q_end = traj.positions().last().unwrap()[0];
        let v_end = traj.velocities().last().unwrap()[0];
        assert!((q_end - 1.0).abs() <= 1e-15);
        assert_eq!(v_end, 1.0);
    }

    #[test]
    fn rk4_pendulum_conserves_energy() {
        let pendulum = builtin("pendulum");
        let e0 = pendulum.energy(&vec1(1.0), &vec1(0.0)).unwrap();
        let traj = rk4_flow(&pendulum, &vec1(1.0), &vec1(0.0), 10.0, 100_000).unwrap();
        let mut drift = 0.0f64;
        for (q, v) in traj.positions().iter().zip(traj.velocities()) {
            drift = drift.max((pendulum.energy(q, v).unwrap() - e0).abs());
        }
        assert!(drift <= 1e-9, "energy drift {drift}");
    }

    #[test]
    fn rk4_is_fourth_order() {
        // phase-space endpoint error: at t = pi/2 the position error alone is
        // superconvergent (sin is at an extremum there), the velocity is not
        let harmonic = builtin("harmonic");
        let h = std::f64::consts::FRAC_PI_2;
        let err = |steps: usize| {
            let traj = rk4_flow(&harmonic, &vec1(0.0), &vec1(1.0), h, steps).unwrap();
            let dq = (traj.positions().last().unwrap()[0] - 1.0).abs();
            let dv = traj.velocities().last().unwrap()[0].abs();
            dq.max(dv)
        };
        for steps in [16usize, 32, 64] {
            let ratio = err(steps) / err(2 * steps);
            assert!(
                (12.0..=20.0).contains(&ratio),
                "order-4 ratio {ratio} at {steps} steps"
            );
        }
    }

    #[test]
    fn shooting_examples() {
        let free = builtin("free");
        let v0 = shoot_bvp(&free, &vec1(0.0), &vec1(1.0), 1.0, 1e-10).unwrap();
        assert!((v0[0] - 1.0).abs() <= 1e-10);

        let harmonic = builtin("harmonic");
        let v0 = shoot_bvp(
            &harmonic,
            &vec1(0.0),
            &vec1(1.0),
            std::f64::consts::FRAC_PI_2,
            1e-10,
        )
        .unwrap();
        assert!((v0[0] - 1.0).abs() <= 1e-6, "v0 = {}", v0[0]);
    }
}

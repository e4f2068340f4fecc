//! Catalog of built-in test systems.
//!
//! Each family comes with analytic first and second derivatives. Parameter
//! keys are validated strictly: unknown keys are rejected so that typos
//! surface as configuration errors instead of silently-ignored physics.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{HessianBlocks, LagrangianJet, LagrangianModel};

/// Names accepted by [`make_builtin`].
pub const BUILTIN_NAMES: [&str; 7] = [
    "free",
    "harmonic",
    "pendulum",
    "double_well",
    "euclidean_metric",
    "halfplane_metric",
    "sphere_chart_metric",
];

/// Builds one of the built-in models.
///
/// Recognized parameters per family:
/// - `free`: `n` (dimension, default 1)
/// - `harmonic`: `n` (default 1), `omega` (frequency, default 1)
/// - `pendulum`: none
/// - `double_well`: `a` (well location, default 1)
/// - `euclidean_metric`: `n` (default 1), `scale` (metric factor, default 1)
/// - `halfplane_metric`: none (dimension 2, domain y > 0)
/// - `sphere_chart_metric`: `radius` (default 1; dimension 2, polar angle in (0, pi))
pub fn make_builtin(name: &str, parameters: &BTreeMap<String, f64>) -> Result<LagrangianModel> {
    let mut params = Params::new(name, parameters);
    let model = match name {
        "free" => {
            let n = params.dim("n", 1)?;
            free_particle(n)
        }
        "harmonic" => {
            let n = params.dim("n", 1)?;
            let omega = params.positive("omega", 1.0)?;
            harmonic_oscillator(n, omega)
        }
        "pendulum" => pendulum(),
        "double_well" => {
            let a = params.positive("a", 1.0)?;
            double_well(a)
        }
        "euclidean_metric" => {
            let n = params.dim("n", 1)?;
            let scale = params.positive("scale", 1.0)?;
            euclidean_metric(n, scale)
        }
        "halfplane_metric" => halfplane_metric(),
        "sphere_chart_metric" => {
            let radius = params.positive("radius", 1.0)?;
            sphere_chart_metric(radius)
        }
        other => {
            return Err(Error::InvalidConfig(format!(
                "unknown model '{other}'; built-ins are {BUILTIN_NAMES:?}"
            )))
        }
    };
    params.finish()?;
    Ok(model)
}

/// Degenerate `L = v^4 / 4` used to exercise non-regular error paths.
/// Deliberately not part of [`BUILTIN_NAMES`]: its velocity Hessian vanishes
/// at `v = 0`.
pub fn quartic_test_model() -> LagrangianModel {
    LagrangianModel::new("quartic", 1, |_q, v| LagrangianJet {
        l: 0.25 * v[0].powi(4),
        dl_dq: DVector::zeros(1),
        dl_dv: DVector::from_vec(vec![v[0].powi(3)]),
    })
    .with_hessian(|_q, v| HessianBlocks {
        d2l_dv2: DMatrix::from_element(1, 1, 3.0 * v[0] * v[0]),
        d2l_dqdv: DMatrix::zeros(1, 1),
        d2l_dq2: DMatrix::zeros(1, 1),
    })
}

/// Tracks which parameter keys were consumed so leftovers can be reported.
struct Params<'a> {
    model: &'a str,
    values: &'a BTreeMap<String, f64>,
    used: Vec<&'a str>,
}

impl<'a> Params<'a> {
    fn new(model: &'a str, values: &'a BTreeMap<String, f64>) -> Self {
        Self {
            model,
            values,
            used: Vec::new(),
        }
    }

    fn get(&mut self, key: &'static str) -> Option<f64> {
        self.used.push(key);
        self.values.get(key).copied()
    }

    fn dim(&mut self, key: &'static str, default: usize) -> Result<usize> {
        match self.get(key) {
            None => Ok(default),
            Some(x) => {
                if x.fract() != 0.0 || !(1.0..=64.0).contains(&x) {
                    return Err(Error::InvalidConfig(format!(
                        "model '{}': parameter '{key}' must be a positive integer dimension, got {x}",
                        self.model
                    )));
                }
                Ok(x as usize)
            }
        }
    }

    fn positive(&mut self, key: &'static str, default: f64) -> Result<f64> {
        match self.get(key) {
            None => Ok(default),
            Some(x) if x > 0.0 && x.is_finite() => Ok(x),
            Some(x) => Err(Error::InvalidConfig(format!(
                "model '{}': parameter '{key}' must be positive and finite, got {x}",
                self.model
            ))),
        }
    }

    fn finish(self) -> Result<()> {
        for key in self.values.keys() {
            if !self.used.contains(&key.as_str()) {
                return Err(Error::InvalidConfig(format!(
                    "model '{}': unknown parameter '{key}'",
                    self.model
                )));
            }
        }
        Ok(())
    }
}

fn free_particle(n: usize) -> LagrangianModel {
    LagrangianModel::new("free", n, |_q, v| LagrangianJet {
        l: 0.5 * v.dot(v),
        dl_dq: DVector::zeros(v.len()),
        dl_dv: v.clone(),
    })
    .with_hessian(move |_q, _v| HessianBlocks {
        d2l_dv2: DMatrix::identity(n, n),
        d2l_dqdv: DMatrix::zeros(n, n),
        d2l_dq2: DMatrix::zeros(n, n),
    })
    .with_parameter("n", n as f64)
}

fn harmonic_oscillator(n: usize, omega: f64) -> LagrangianModel {
    let w2 = omega * omega;
    LagrangianModel::new("harmonic", n, move |q, v| LagrangianJet {
        l: 0.5 * v.dot(v) - 0.5 * w2 * q.dot(q),
        dl_dq: q * (-w2),
        dl_dv: v.clone(),
    })
    .with_hessian(move |_q, _v| HessianBlocks {
        d2l_dv2: DMatrix::identity(n, n),
        d2l_dqdv: DMatrix::zeros(n, n),
        d2l_dq2: DMatrix::identity(n, n) * (-w2),
    })
    .with_parameter("n", n as f64)
    .with_parameter("omega", omega)
}

fn pendulum() -> LagrangianModel {
    LagrangianModel::new("pendulum", 1, |q, v| LagrangianJet {
        l: 0.5 * v[0] * v[0] + q[0].cos(),
        dl_dq: DVector::from_vec(vec![-q[0].sin()]),
        dl_dv: v.clone(),
    })
    .with_hessian(|q, _v| HessianBlocks {
        d2l_dv2: DMatrix::identity(1, 1),
        d2l_dqdv: DMatrix::zeros(1, 1),
        d2l_dq2: DMatrix::from_element(1, 1, -q[0].cos()),
    })
}

fn double_well(a: f64) -> LagrangianModel {
    let a2 = a * a;
    LagrangianModel::new("double_well", 1, move |q, v| {
        let s = q[0] * q[0] - a2;
        LagrangianJet {
            l: 0.5 * v[0] * v[0] - 0.25 * s * s,
            dl_dq: DVector::from_vec(vec![-q[0] * s]),
            dl_dv: v.clone(),
        }
    })
    .with_hessian(move |q, _v| HessianBlocks {
        d2l_dv2: DMatrix::identity(1, 1),
        d2l_dqdv: DMatrix::zeros(1, 1),
        d2l_dq2: DMatrix::from_element(1, 1, -(3.0 * q[0] * q[0] - a2)),
    })
    .with_parameter("a", a)
}

fn euclidean_metric(n: usize, scale: f64) -> LagrangianModel {
    LagrangianModel::new("euclidean_metric", n, move |_q, v| LagrangianJet {
        l: 0.5 * scale * v.dot(v),
        dl_dq: DVector::zeros(v.len()),
        dl_dv: v * scale,
    })
    .with_hessian(move |_q, _v| HessianBlocks {
        d2l_dv2: DMatrix::identity(n, n) * scale,
        d2l_dqdv: DMatrix::zeros(n, n),
        d2l_dq2: DMatrix::zeros(n, n),
    })
    .with_parameter("n", n as f64)
    .with_parameter("scale", scale)
}

/// Hyperbolic upper half plane: `L = (vx^2 + vy^2) / (2 y^2)`, domain `y > 0`.
fn halfplane_metric() -> LagrangianModel {
    LagrangianModel::new("halfplane_metric", 2, |q, v| {
        let y = q[1];
        let y2 = y * y;
        let speed2 = v.dot(v);
        LagrangianJet {
            l: 0.5 * speed2 / y2,
            dl_dq: DVector::from_vec(vec![0.0, -speed2 / (y2 * y)]),
            dl_dv: v / y2,
        }
    })
    .with_hessian(|q, v| {
        let y = q[1];
        let y2 = y * y;
        let y3 = y2 * y;
        let mut d2l_dqdv = DMatrix::zeros(2, 2);
        d2l_dqdv[(0, 1)] = -2.0 * v[0] / y3;
        d2l_dqdv[(1, 1)] = -2.0 * v[1] / y3;
        let mut d2l_dq2 = DMatrix::zeros(2, 2);
        d2l_dq2[(1, 1)] = 3.0 * v.dot(v) / (y2 * y2);
        HessianBlocks {
            d2l_dv2: DMatrix::identity(2, 2) / y2,
            d2l_dqdv,
            d2l_dq2,
        }
    })
    .with_domain(|q, _v| q[1] > 0.0)
}

/// Round sphere in polar coordinates `(theta, phi)`:
/// `L = R^2 (v_theta^2 + sin^2(theta) v_phi^2) / 2`, domain `0 < theta < pi`.
fn sphere_chart_metric(radius: f64) -> LagrangianModel {
    let r2 = radius * radius;
    LagrangianModel::new("sphere_chart_metric", 2, move |q, v| {
        let (sin_t, cos_t) = q[0].sin_cos();
        LagrangianJet {
            l: 0.5 * r2 * (v[0] * v[0] + sin_t * sin_t * v[1] * v[1]),
            dl_dq: DVector::from_vec(vec![r2 * sin_t * cos_t * v[1] * v[1], 0.0]),
            dl_dv: DVector::from_vec(vec![r2 * v[0], r2 * sin_t * sin_t * v[1]]),
        }
    })
    .with_hessian(move |q, v| {
        let (sin_t, cos_t) = q[0].sin_cos();
        let mut d2l_dv2 = DMatrix::zeros(2, 2);
        d2l_dv2[(0, 0)] = r2;
        d2l_dv2[(1, 1)] = r2 * sin_t * sin_t;
        let mut d2l_dqdv = DMatrix::zeros(2, 2);
        d2l_dqdv[(1, 0)] = 2.0 * r2 * sin_t * cos_t * v[1];
        let mut d2l_dq2 = DMatrix::zeros(2, 2);
        d2l_dq2[(0, 0)] = r2 * (cos_t * cos_t - sin_t * sin_t) * v[1] * v[1];
        HessianBlocks {
            d2l_dv2,
            d2l_dqdv,
            d2l_dq2,
        }
    })
    .with_domain(|q, _v| q[0] > 0.0 && q[0] < std::f64::consts::PI)
    .with_parameter("radius", radius)
}

//! Lagrangians on open subsets of R^n.
//!
//! A [`LagrangianModel`] packages the dimension, an evaluator for the value
//! and first derivatives of `L(q, v)`, optional analytic second derivatives
//! (with a central finite-difference fallback), and an optional domain
//! predicate. Evaluators must be pure; models are shared read-only across
//! concurrent solver runs.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::LuFactors;

/// Value and first derivatives of `L` at one tangent point.
#[derive(Debug, Clone, PartialEq)]
pub struct LagrangianJet {
    pub l: f64,
    pub dl_dq: DVector<f64>,
    /// The momentum `dL/dv`.
    pub dl_dv: DVector<f64>,
}

/// Second derivative blocks of `L` at one tangent point.
///
/// `d2l_dqdv` is the mixed block stored with the velocity index first:
/// entry `(a, b)` is the derivative of the momentum component `dL/dv_a`
/// with respect to `q_b`.
#[derive(Debug, Clone, PartialEq)]
pub struct HessianBlocks {
    pub d2l_dv2: DMatrix<f64>,
    pub d2l_dqdv: DMatrix<f64>,
    pub d2l_dq2: DMatrix<f64>,
}

pub type JetFn = dyn Fn(&DVector<f64>, &DVector<f64>) -> LagrangianJet + Send + Sync;
pub type HessianFn = dyn Fn(&DVector<f64>, &DVector<f64>) -> HessianBlocks + Send + Sync;
pub type DomainFn = dyn Fn(&DVector<f64>, &DVector<f64>) -> bool + Send + Sync;

/// Step used for finite-difference second derivatives when a model has no
/// analytic Hessian; scaled per component as `step * (1 + |x|)`.
pub const DEFAULT_FD_STEP: f64 = 1e-6;

/// Default bound on the condition of `d2L/dv2` before a model is declared
/// non-regular.
pub const DEFAULT_COND_THRESHOLD: f64 = 1e12;

/// A Lagrangian `L: R^n x R^n -> R` with its derivative evaluators.
#[derive(Clone)]
pub struct LagrangianModel {
    dim: usize,
    name: String,
    parameters: BTreeMap<String, f64>,
    jet: Arc<JetFn>,
    hessian: Option<Arc<HessianFn>>,
    domain: Option<Arc<DomainFn>>,
}

impl fmt::Debug for LagrangianModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LagrangianModel")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("parameters", &self.parameters)
            .field("analytic_hessian", &self.hessian.is_some())
            .finish()
    }
}

impl LagrangianModel {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        jet: impl Fn(&DVector<f64>, &DVector<f64>) -> LagrangianJet + Send + Sync + 'static,
    ) -> Self {
        assert!(dim >= 1, "model dimension must be positive");
        Self {
            dim,
            name: name.into(),
            parameters: BTreeMap::new(),
            jet: Arc::new(jet),
            hessian: None,
            domain: None,
        }
    }

    pub fn with_hessian(
        mut self,
        hessian: impl Fn(&DVector<f64>, &DVector<f64>) -> HessianBlocks + Send + Sync + 'static,
    ) -> Self {
        self.hessian = Some(Arc::new(hessian));
        self
    }

    pub fn with_domain(
        mut self,
        domain: impl Fn(&DVector<f64>, &DVector<f64>) -> bool + Send + Sync + 'static,
    ) -> Self {
        self.domain = Some(Arc::new(domain));
        self
    }

    pub fn with_parameter(mut self, key: impl Into<String>, value: f64) -> Self {
        self.parameters.insert(key.into(), value);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn parameter(&self, key: &str) -> Option<f64> {
        self.parameters.get(key).copied()
    }

    pub fn parameters(&self) -> &BTreeMap<String, f64> {
        &self.parameters
    }

    pub fn has_analytic_hessian(&self) -> bool {
        self.hessian.is_some()
    }

    /// Whether `(q, v)` lies in the model's declared domain (all of R^2n by
    /// default).
    pub fn contains(&self, q: &DVector<f64>, v: &DVector<f64>) -> bool {
        self.domain.as_ref().is_none_or(|d| d(q, v))
    }

    fn check_point(&self, q: &DVector<f64>, v: &DVector<f64>) -> Result<()> {
        assert_eq!(q.len(), self.dim, "position dimension mismatch");
        assert_eq!(v.len(), self.dim, "velocity dimension mismatch");
        if !q.iter().chain(v.iter()).all(|x| x.is_finite()) {
            return Err(Error::Domain(format!(
                "non-finite evaluation point for model '{}'",
                self.name
            )));
        }
        if !self.contains(q, v) {
            return Err(Error::Domain(format!(
                "({q:?}, {v:?}) outside domain of model '{}'",
                self.name
            )));
        }
        Ok(())
    }

    /// Evaluates `L` and its first derivatives at `(q, v)`.
    pub fn eval(&self, q: &DVector<f64>, v: &DVector<f64>) -> Result<LagrangianJet> {
        self.check_point(q, v)?;
        Ok((self.jet)(q, v))
    }

    /// Second derivative blocks at `(q, v)`: analytic when available,
    /// otherwise central finite differences of the first derivatives with the
    /// given base step.
    pub fn second_derivatives(
        &self,
        q: &DVector<f64>,
        v: &DVector<f64>,
        fd_step: f64,
    ) -> Result<HessianBlocks> {
        self.check_point(q, v)?;
        if let Some(h) = &self.hessian {
            return Ok(h(q, v));
        }
        if fd_step.is_nan() || fd_step <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "finite-difference step must be positive, got {fd_step}"
            )));
        }
        let n = self.dim;
        let mut d2l_dv2 = DMatrix::zeros(n, n);
        let mut d2l_dqdv = DMatrix::zeros(n, n);
        let mut d2l_dq2 = DMatrix::zeros(n, n);
        for b in 0..n {
            let sv = fd_step * (1.0 + v[b].abs());
            let mut vp = v.clone();
            let mut vm = v.clone();
            vp[b] += sv;
            vm[b] -= sv;
            let jp = self.eval(q, &vp)?;
            let jm = self.eval(q, &vm)?;
            for a in 0..n {
                d2l_dv2[(a, b)] = (jp.dl_dv[a] - jm.dl_dv[a]) / (2.0 * sv);
            }

            let sq = fd_step * (1.0 + q[b].abs());
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[b] += sq;
            qm[b] -= sq;
            let jp = self.eval(&qp, v)?;
            let jm = self.eval(&qm, v)?;
            for a in 0..n {
                d2l_dqdv[(a, b)] = (jp.dl_dv[a] - jm.dl_dv[a]) / (2.0 * sq);
                d2l_dq2[(a, b)] = (jp.dl_dq[a] - jm.dl_dq[a]) / (2.0 * sq);
            }
        }
        Ok(HessianBlocks {
            d2l_dv2,
            d2l_dqdv,
            d2l_dq2,
        })
    }

    /// Energy `E = dL/dv . v - L`.
    pub fn energy(&self, q: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
        let jet = self.eval(q, v)?;
        Ok(jet.dl_dv.dot(v) - jet.l)
    }

    /// Condition estimate of `d2L/dv2` at `(q, v)`.
    ///
    /// Fails with [`Error::NonRegularLagrangian`] when the block cannot be
    /// factored or the estimate exceeds `cond_threshold`.
    pub fn regularity_check(
        &self,
        q: &DVector<f64>,
        v: &DVector<f64>,
        cond_threshold: f64,
    ) -> Result<f64> {
        if cond_threshold.is_nan() || cond_threshold <= 1.0 {
            return Err(Error::InvalidConfig(format!(
                "condition threshold must exceed 1, got {cond_threshold}"
            )));
        }
        let blocks = self.second_derivatives(q, v, DEFAULT_FD_STEP)?;
        let lu = LuFactors::factor(blocks.d2l_dv2).ok_or_else(|| {
            Error::NonRegularLagrangian(format!(
                "d2L/dv2 of model '{}' is singular at the requested point",
                self.name
            ))
        })?;
        let cond = lu.condition_estimate();
        if !cond.is_finite() || cond > cond_threshold {
            return Err(Error::NonRegularLagrangian(format!(
                "d2L/dv2 of model '{}' has condition estimate {cond:.3e} (threshold {cond_threshold:.3e})",
                self.name
            )));
        }
        Ok(cond)
    }

    /// Inverts the Legendre transform: finds `v` with `dL/dv(q, v) = p`.
    ///
    /// Newton iteration on the momentum defect starting from `v = 0`.
    pub fn legendre_inverse(
        &self,
        q: &DVector<f64>,
        p: &DVector<f64>,
        tol: f64,
    ) -> Result<DVector<f64>> {
        self.legendre_inverse_from(q, p, tol, DVector::zeros(self.dim))
    }

    /// Legendre inversion from a caller-supplied starting velocity.
    pub(crate) fn legendre_inverse_from(
        &self,
        q: &DVector<f64>,
        p: &DVector<f64>,
        tol: f64,
        mut v: DVector<f64>,
    ) -> Result<DVector<f64>> {
        assert_eq!(p.len(), self.dim, "momentum dimension mismatch");
        if tol.is_nan() || tol <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "tolerance must be positive, got {tol}"
            )));
        }
        const MAX_ITER: usize = 50;
        for _ in 0..MAX_ITER {
            let jet = self.eval(q, &v)?;
            let defect = &jet.dl_dv - p;
            if defect.amax() <= tol {
                return Ok(v);
            }
            let blocks = self.second_derivatives(q, &v, DEFAULT_FD_STEP)?;
            let lu = LuFactors::factor(blocks.d2l_dv2).ok_or_else(|| {
                Error::NonRegularLagrangian(format!(
                    "d2L/dv2 of model '{}' is singular during Legendre inversion",
                    self.name
                ))
            })?;
            let step = lu.solve(&defect);
            v -= step;
            if !v.iter().all(|x| x.is_finite()) {
                return Err(Error::NewtonDiverged(
                    "Legendre inversion produced a non-finite iterate".into(),
                ));
            }
        }
        Err(Error::NewtonDiverged(format!(
            "Legendre inversion did not reach tolerance {tol} in {MAX_ITER} iterations"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtins::{make_builtin, quartic_test_model};
    use approx::assert_relative_eq;
    use std::collections::BTreeMap;

    fn builtin(name: &str) -> LagrangianModel {
        make_builtin(name, &BTreeMap::new()).unwrap()
    }

    fn vec1(x: f64) -> DVector<f64> {
        DVector::from_vec(vec![x])
    }

    #[test]
    fn eval_examples() {
        let free = builtin("free");
        let jet = free.eval(&vec1(2.0), &vec1(3.0)).unwrap();
        assert_eq!((jet.l, jet.dl_dq[0], jet.dl_dv[0]), (4.5, 0.0, 3.0));

        let harmonic = builtin("harmonic");
        let jet = harmonic.eval(&vec1(1.0), &vec1(0.0)).unwrap();
        assert_eq!((jet.l, jet.dl_dq[0], jet.dl_dv[0]), (-0.5, -1.0, 0.0));

        let pendulum = builtin("pendulum");
        let jet = pendulum.eval(&vec1(0.0), &vec1(1.0)).unwrap();
        assert_eq!((jet.l, jet.dl_dq[0], jet.dl_dv[0]), (1.5, 0.0, 1.0));
    }

    #[test]
    fn second_derivative_examples() {
        let mut params = BTreeMap::new();
        params.insert("n".to_string(), 2.0);
        let free = make_builtin("free", &params).unwrap();
        let blocks = free
            .second_derivatives(&DVector::zeros(2), &DVector::zeros(2), DEFAULT_FD_STEP)
            .unwrap();
        assert_eq!(blocks.d2l_dv2, DMatrix::identity(2, 2));
        assert_eq!(blocks.d2l_dqdv, DMatrix::zeros(2, 2));
        assert_eq!(blocks.d2l_dq2, DMatrix::zeros(2, 2));

        let harmonic = builtin("harmonic");
        let blocks = harmonic
            .second_derivatives(&vec1(0.3), &vec1(-0.7), DEFAULT_FD_STEP)
            .unwrap();
        assert_eq!(blocks.d2l_dv2[(0, 0)], 1.0);
        assert_eq!(blocks.d2l_dq2[(0, 0)], -1.0);
        assert_eq!(blocks.d2l_dqdv[(0, 0)], 0.0);
    }

    #[test]
    fn fd_fallback_matches_analytic_pendulum() {
        // same jets as the pendulum, but no analytic Hessian
        let fd_pendulum = LagrangianModel::new("pendulum-fd", 1, |q, v| LagrangianJet {
            l: 0.5 * v[0] * v[0] + q[0].cos(),
            dl_dq: DVector::from_vec(vec![-q[0].sin()]),
            dl_dv: v.clone(),
        });
        let blocks = fd_pendulum
            .second_derivatives(&vec1(0.0), &vec1(1.0), DEFAULT_FD_STEP)
            .unwrap();
        assert!((blocks.d2l_dv2[(0, 0)] - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn regularity_examples() {
        let harmonic = builtin("harmonic");
        let cond = harmonic
            .regularity_check(&vec1(0.4), &vec1(-1.1), DEFAULT_COND_THRESHOLD)
            .unwrap();
        assert_relative_eq!(cond, 1.0);

        let quartic = quartic_test_model();
        assert!(matches!(
            quartic.regularity_check(&vec1(0.0), &vec1(0.0), DEFAULT_COND_THRESHOLD),
            Err(Error::NonRegularLagrangian(_))
        ));

        let halfplane = builtin("halfplane_metric");
        let q = DVector::from_vec(vec![0.0, 1.0]);
        let v = DVector::from_vec(vec![0.3, -0.2]);
        let cond = halfplane
            .regularity_check(&q, &v, DEFAULT_COND_THRESHOLD)
            .unwrap();
        assert_relative_eq!(cond, 1.0);
    }

    #[test]
    fn energy_examples() {
        let free = builtin("free");
        assert_eq!(free.energy(&vec1(0.0), &vec1(3.0)).unwrap(), 4.5);

        let harmonic = builtin("harmonic");
        assert_eq!(harmonic.energy(&vec1(1.0), &vec1(2.0)).unwrap(), 2.5);

        let pendulum = builtin("pendulum");
        assert_eq!(pendulum.energy(&vec1(0.0), &vec1(0.0)).unwrap(), -1.0);
    }

    #[test]
    fn legendre_inverse_examples() {
        let free = builtin("free");
        let v = free
            .legendre_inverse(&vec1(0.0), &vec1(3.0), 1e-12)
            .unwrap();
        assert_relative_eq!(v[0], 3.0, epsilon = 1e-12);

        let mut params = BTreeMap::new();
        params.insert("n".to_string(), 1.0);
        params.insert("scale".to_string(), 4.0);
        let metric = make_builtin("euclidean_metric", &params).unwrap();
        let v = metric
            .legendre_inverse(&vec1(0.0), &vec1(2.0), 1e-12)
            .unwrap();
        assert_relative_eq!(v[0], 0.5, epsilon = 1e-12);

        let pendulum = builtin("pendulum");
        let v = pendulum
            .legendre_inverse(&vec1(0.2), &vec1(1.2), 1e-12)
            .unwrap();
        assert_relative_eq!(v[0], 1.2, epsilon = 1e-12);
    }

    #[test]
    fn models_are_shareable_across_threads() {
        fn assert_send_sync<T: Send + Sync>() {}
        assert_send_sync::<LagrangianModel>();

        let pendulum = std::sync::Arc::new(builtin("pendulum"));
        let handles: Vec<_> = (0..4)
            .map(|k| {
                let model = pendulum.clone();
                std::thread::spawn(move || {
                    let z = vec1(0.3 + 0.1 * k as f64);
                    crate::solver::solve_regularized(
                        &model,
                        &vec1(0.0),
                        &z,
                        0.5,
                        &crate::solver::SolverConfig::default(),
                    )
                    .unwrap()
                    .residual_norm
                })
            })
            .collect();
        for handle in handles {
            assert!(handle.join().unwrap() <= 1e-10);
        }
    }

    #[test]
    fn domain_is_enforced() {
        let halfplane = builtin("halfplane_metric");
        let q = DVector::from_vec(vec![0.0, -1.0]);
        let v = DVector::from_vec(vec![0.0, 0.0]);
        assert!(matches!(halfplane.eval(&q, &v), Err(Error::Domain(_))));
        assert!(matches!(halfplane.energy(&q, &v), Err(Error::Domain(_))));
    }
}

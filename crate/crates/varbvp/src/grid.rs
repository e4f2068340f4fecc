//! Discrete calculus on the unit interval.
//!
//! Curves are vector-valued node samples on a uniform grid over [0, 1].
//! Integration is the composite trapezoid rule throughout, and the running
//! integral is the primitive every other operator is defined from: `tail` is
//! total minus cumulative so the three agree bit-exactly, and `mean_project`
//! subtracts the trapezoid mean. Piecewise-linear node curves with trapezoid
//! sums keep all of these operators exact summation duals of one another.

use crate::error::{Error, Result};
use nalgebra::DVector;

/// Uniform grid on [0, 1] with `n_sub` subintervals (nodes `u_i = i / n_sub`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    n_sub: usize,
}

impl Grid {
    pub fn new(n_sub: usize) -> Result<Self> {
        if n_sub < 2 {
            return Err(Error::InvalidConfig(format!(
                "grid needs at least 2 subintervals, got {n_sub}"
            )));
        }
        Ok(Self { n_sub })
    }

    pub fn subintervals(&self) -> usize {
        self.n_sub
    }

    pub fn node_count(&self) -> usize {
        self.n_sub + 1
    }

    pub fn du(&self) -> f64 {
        1.0 / self.n_sub as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        debug_assert!(i <= self.n_sub);
        i as f64 / self.n_sub as f64
    }

    /// Trapezoid weight of node `i` (`du/2` at the ends, `du` inside).
    pub fn weight(&self, i: usize) -> f64 {
        debug_assert!(i <= self.n_sub);
        if i == 0 || i == self.n_sub {
            0.5 * self.du()
        } else {
            self.du()
        }
    }
}

/// Node values of a curve [0, 1] -> R^n.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    grid: Grid,
    values: Vec<DVector<f64>>,
}

impl Curve {
    pub fn new(grid: Grid, values: Vec<DVector<f64>>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::GridMismatch(format!(
                "expected {} node values, got {}",
                grid.node_count(),
                values.len()
            )));
        }
        let dim = values[0].len();
        for (i, v) in values.iter().enumerate() {
            if v.len() != dim {
                return Err(Error::GridMismatch(format!(
                    "node {i} has dimension {}, expected {dim}",
                    v.len()
                )));
            }
            if !v.iter().all(|x| x.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "non-finite value at node {i}"
                )));
            }
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: Grid, value: &DVector<f64>) -> Self {
        Self {
            grid,
            values: vec![value.clone(); grid.node_count()],
        }
    }

    pub fn zeros(grid: Grid, dim: usize) -> Self {
        Self::constant(grid, &DVector::zeros(dim))
    }

    /// Samples `f(u_i)` at every node.
    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> DVector<f64>) -> Self {
        let values = (0..grid.node_count()).map(|i| f(grid.node(i))).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn value(&self, i: usize) -> &DVector<f64> {
        &self.values[i]
    }

    pub fn values(&self) -> &[DVector<f64>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [DVector<f64>] {
        &mut self.values
    }

    pub fn max_norm(&self) -> f64 {
        self.values
            .iter()
            .flat_map(|v| v.iter())
            .fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Composite trapezoid integral over [0, 1].
    ///
    /// Same left-to-right summation as `cumulative`, so it equals the last
    /// cumulative node bit-for-bit.
    pub fn quad(&self) -> DVector<f64> {
        let du = self.grid.du();
        let mut acc = DVector::zeros(self.dim());
        for i in 1..self.values.len() {
            acc += (&self.values[i - 1] + &self.values[i]) * (0.5 * du);
        }
        acc
    }

    /// Node values of the running integral from 0.
    pub fn cumulative(&self) -> Curve {
        let du = self.grid.du();
        let mut out = Vec::with_capacity(self.values.len());
        let mut acc = DVector::zeros(self.dim());
        out.push(acc.clone());
        for i in 1..self.values.len() {
            acc += (&self.values[i - 1] + &self.values[i]) * (0.5 * du);
            out.push(acc.clone());
        }
        Curve {
            grid: self.grid,
            values: out,
        }
    }

    /// Node values of the integral from `u_i` to 1: total minus cumulative.
    pub fn tail(&self) -> Curve {
        let cumulative = self.cumulative();
        let total = cumulative
            .values
            .last()
            .expect("curve is non-empty")
            .clone();
        let values = cumulative.values.iter().map(|c| &total - c).collect();
        Curve {
            grid: self.grid,
            values,
        }
    }

    /// Weak inner product: trapezoid integral of the pointwise dot product.
    pub fn inner_product(&self, other: &Curve) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch(format!(
                "curves on {} vs {} subintervals",
                self.grid.subintervals(),
                other.grid.subintervals()
            )));
        }
        if self.dim() != other.dim() {
            return Err(Error::GridMismatch(format!(
                "curves of dimension {} vs {}",
                self.dim(),
                other.dim()
            )));
        }
        let du = self.grid.du();
        let mut acc = 0.0;
        let mut prev = self.values[0].dot(&other.values[0]);
        for i in 1..self.values.len() {
            let cur = self.values[i].dot(&other.values[i]);
            acc += (prev + cur) * (0.5 * du);
            prev = cur;
        }
        Ok(acc)
    }

    /// Orthogonal projection onto mean-zero curves: subtract the trapezoid mean.
    pub fn mean_project(&self) -> Curve {
        let mean = self.quad();
        let values = self.values.iter().map(|v| v - &mean).collect();
        Curve {
            grid: self.grid,
            values,
        }
    }
}

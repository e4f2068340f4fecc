//! Dense LU factorization with partial pivoting.
//!
//! The solver's linear systems are small (a few thousand unknowns at most), so
//! a plain dense factorization is the right tool. Rolling our own buys two
//! things the off-the-shelf decompositions do not expose: solves against the
//! transpose, and a Hager-style estimate of the infinity-norm condition number
//! from a single factorization. The condition estimate is how ill-posedness
//! (e.g. a conjugate point) is surfaced to callers.

use nalgebra::{DMatrix, DVector};

/// LU factors of a square matrix, `P A = L U` with unit-diagonal `L`.
#[derive(Debug, Clone)]
pub struct LuFactors {
    lu: DMatrix<f64>,
    // pivots[k] = row swapped with row k at elimination step k
    pivots: Vec<usize>,
    a_inf_norm: f64,
}

impl LuFactors {
    /// Factors `a`, returning `None` on a pivot too small to eliminate with.
    pub fn factor(a: DMatrix<f64>) -> Option<Self> {
        assert_eq!(a.nrows(), a.ncols(), "LU requires a square matrix");
        let m = a.nrows();
        let a_inf_norm = inf_norm(&a);
        let mut lu = a;
        let mut pivots = vec![0usize; m];

        for k in 0..m {
            let mut piv = k;
            let mut piv_abs = lu[(k, k)].abs();
            for r in (k + 1)..m {
                let v = lu[(r, k)].abs();
                if v > piv_abs {
                    piv = r;
                    piv_abs = v;
                }
            }
            if !piv_abs.is_finite() || piv_abs <= f64::MIN_POSITIVE {
                return None;
            }
            pivots[k] = piv;
            if piv != k {
                lu.swap_rows(k, piv);
            }
            let d = lu[(k, k)];
            for r in (k + 1)..m {
                let factor = lu[(r, k)] / d;
                lu[(r, k)] = factor;
                for c in (k + 1)..m {
                    let delta = factor * lu[(k, c)];
                    lu[(r, c)] -= delta;
                }
            }
        }

        Some(Self {
            lu,
            pivots,
            a_inf_norm,
        })
    }

    pub fn dim(&self) -> usize {
        self.lu.nrows()
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let m = self.dim();
        assert_eq!(b.len(), m);
        let mut x = b.clone();
        for k in 0..m {
            if self.pivots[k] != k {
                x.swap_rows(k, self.pivots[k]);
            }
        }
        // forward: L y = P b, unit diagonal
        for r in 1..m {
            let mut s = x[r];
            for c in 0..r {
                s -= self.lu[(r, c)] * x[c];
            }
            x[r] = s;
        }
        // backward: U x = y
        for r in (0..m).rev() {
            let mut s = x[r];
            for c in (r + 1)..m {
                s -= self.lu[(r, c)] * x[c];
            }
            x[r] = s / self.lu[(r, r)];
        }
        x
    }

    /// Solves `A^T x = b` using the same factors (`A^T = U^T L^T P`).
    pub fn solve_transpose(&self, b: &DVector<f64>) -> DVector<f64> {
        let m = self.dim();
        assert_eq!(b.len(), m);
        let mut x = b.clone();
        // forward: U^T z = b (U^T is lower triangular)
        for r in 0..m {
            let mut s = x[r];
            for c in 0..r {
                s -= self.lu[(c, r)] * x[c];
            }
            x[r] = s / self.lu[(r, r)];
        }
        // backward: L^T y = z, unit diagonal
        for r in (0..m).rev() {
            let mut s = x[r];
            for c in (r + 1)..m {
                s -= self.lu[(c, r)] * x[c];
            }
            x[r] = s;
        }
        // x = P^T y: undo the recorded swaps in reverse
        for k in (0..m).rev() {
            if self.pivots[k] != k {
                x.swap_rows(k, self.pivots[k]);
            }
        }
        x
    }

    /// Estimates `cond_inf(A) = |A|_inf * |A^-1|_inf`.
    ///
    /// Hager's 1-norm estimator applied to `A^-T`, since
    /// `|A^-1|_inf = |A^-T|_1`. Costs a handful of triangular solves.
    pub fn condition_estimate(&self) -> f64 {
        let m = self.dim();
        if m == 0 {
            return 0.0;
        }
        let mut x = DVector::from_element(m, 1.0 / m as f64);
        let mut est = 0.0f64;
        for iter in 0..6 {
            let y = self.solve_transpose(&x);
            let y_norm1: f64 = y.iter().map(|v| v.abs()).sum();
            est = est.max(y_norm1);
            let xi = y.map(|v| if v >= 0.0 { 1.0 } else { -1.0 });
            let z = self.solve(&xi);
            let (mut j, mut z_max) = (0usize, 0.0f64);
            for (i, v) in z.iter().enumerate() {
                if v.abs() > z_max {
                    z_max = v.abs();
                    j = i;
                }
            }
            if iter > 0 && z_max <= z.dot(&x) {
                break;
            }
            x = DVector::zeros(m);
            x[j] = 1.0;
        }
        self.a_inf_norm * est
    }
}

/// Maximum absolute row sum.
pub fn inf_norm(a: &DMatrix<f64>) -> f64 {
    (0..a.nrows())
        .map(|r| (0..a.ncols()).map(|c| a[(r, c)].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn random_matrix(m: usize, seed: u64) -> DMatrix<f64> {
        // small deterministic LCG; plenty for test fixtures
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
        DMatrix::from_fn(m, m, |_, _| {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
    }

    #[test]
    fn solve_recovers_known_solution() {
        let a = random_matrix(12, 7);
        let x_true = DVector::from_fn(12, |i, _| (i as f64 + 1.0) / 3.0);
        let b = &a * &x_true;
        let lu = LuFactors::factor(a).unwrap();
        let x = lu.solve(&b);
        assert_relative_eq!(x, x_true, epsilon = 1e-10);
    }

    #[test]
    fn transpose_solve_matches_explicit_transpose() {
        let a = random_matrix(9, 3);
        let b = DVector::from_fn(9, |i, _| (i as f64) - 4.0);
        let lu = LuFactors::factor(a.clone()).unwrap();
        let lu_t = LuFactors::factor(a.transpose()).unwrap();
        assert_relative_eq!(lu.solve_transpose(&b), lu_t.solve(&b), epsilon = 1e-10);
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let mut a = random_matrix(5, 11);
        let row = a.row(1).into_owned();
        a.set_row(3, &row);
        assert!(LuFactors::factor(a).is_none());
        assert!(LuFactors::factor(DMatrix::zeros(3, 3)).is_none());
    }

    #[test]
    fn condition_estimate_tracks_exact_condition() {
        // diag(1, 10, 1e4): cond_inf = 1e4
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 10.0, 1e4]));
        let lu = LuFactors::factor(a).unwrap();
        assert_relative_eq!(lu.condition_estimate(), 1e4, max_relative = 1e-12);

        // well-conditioned random: estimate within a small factor of the truth
        let a = random_matrix(20, 5);
        let exact = inf_norm(&a) * inf_norm(&a.clone().try_inverse().unwrap());
        let lu = LuFactors::factor(a).unwrap();
        let est = lu.condition_estimate();
        assert!(
            est <= exact * 1.0000001,
            "estimate {est} above exact {exact}"
        );
        assert!(
            est >= exact / 10.0,
            "estimate {est} far below exact {exact}"
        );
    }

    #[test]
    fn identity_has_condition_one() {
        let lu = LuFactors::factor(DMatrix::identity(7, 7)).unwrap();
        assert_relative_eq!(lu.condition_estimate(), 1.0);
    }
}

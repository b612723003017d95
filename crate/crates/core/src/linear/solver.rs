//! Dual coordinate descent for L2-regularized linear SVMs.
//!
//! Rows are augmented with a trailing constant-1 feature, so the bias is the
//! last weight and is regularized with the rest. No shrinking.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::SolverConfig;
use crate::features::{Row, SparseMatrix};

/// Dual variables and solver statistics of one fit.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    /// Outer passes over the data.
    pub iterations: usize,
    /// Largest projected-gradient violation seen in the final pass.
    pub max_violation: f64,
    pub converged: bool,
}

/// `row · w` over the augmented row (constant 1 in the last slot).
#[inline]
fn dot_aug(row: Row<'_>, w: &[f64]) -> f64 {
    row.dot(w) + w[w.len() - 1]
}

#[inline]
fn axpy_aug(row: Row<'_>, scale: f64, w: &mut [f64]) {
    row.axpy(scale, w);
    let last = w.len() - 1;
    w[last] += scale;
}

/// Epsilon-insensitive L1-loss SVR dual:
/// `min ½ βᵀQβ − yᵀβ + ε‖β‖₁` subject to `−C ≤ β ≤ C`.
///
/// Returns the augmented weights (bias last) and the dual solution.
pub(crate) fn svr_dual_cd(
    x: &SparseMatrix,
    y: &[f64],
    c: f64,
    epsilon: f64,
    cfg: &SolverConfig,
) -> (Vec<f64>, DualSolution) {
    let n = x.n_rows();
    let mut w = vec![0.0; x.n_cols() + 1];
    let mut beta = vec![0.0; n];
    let qd: Vec<f64> = x.rows().map(|r| r.squared_norm() + 1.0).collect();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut iterations = 0;
    let mut max_violation = 0.0;
    let mut converged = n == 0;
    while !converged && iterations < cfg.max_iterations {
        order.shuffle(&mut rng);
        max_violation = 0.0f64;
        for &i in &order {
            let row = x.row(i);
            let g = dot_aug(row, &w) - y[i];
            let gp = g + epsilon;
            let gn = g - epsilon;
            let b = beta[i];

            let violation = if b == 0.0 {
                if gp < 0.0 {
                    -gp
                } else if gn > 0.0 {
                    gn
                } else {
                    0.0
                }
            } else if b >= c {
                gp.max(0.0)
            } else if b <= -c {
                (-gn).max(0.0)
            } else if b > 0.0 {
                gp.abs()
            } else {
                gn.abs()
            };
            max_violation = max_violation.max(violation);

            let h = qd[i];
            let z = if gp < h * b {
                -gp / h
            } else if gn > h * b {
                -gn / h
            } else {
                -b
            };
            if z.abs() < 1e-15 {
                continue;
            }
            let nb = (b + z).clamp(-c, c);
            if nb != b {
                axpy_aug(row, nb - b, &mut w);
                beta[i] = nb;
            }
        }
        iterations += 1;
        converged = max_violation < cfg.tolerance;
    }
    (
        w,
        DualSolution {
            alpha: beta,
            iterations,
            max_violation,
            converged,
        },
    )
}

/// Squared-hinge SVC dual:
/// `min ½ αᵀ(Q + I/(2C))α − eᵀα` subject to `α ≥ 0`, `Q_ij = y_i y_j x_i·x_j`.
pub(crate) fn svc_dual_cd(
    x: &SparseMatrix,
    y: &[f64],
    c: f64,
    cfg: &SolverConfig,
) -> (Vec<f64>, DualSolution) {
    let n = x.n_rows();
    let diag = 0.5 / c;
    let mut w = vec![0.0; x.n_cols() + 1];
    let mut alpha = vec![0.0; n];
    let qd: Vec<f64> = x.rows().map(|r| r.squared_norm() + 1.0 + diag).collect();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut iterations = 0;
    let mut max_violation = 0.0;
    let mut converged = n == 0;
    while !converged && iterations < cfg.max_iterations {
        order.shuffle(&mut rng);
        max_violation = 0.0f64;
        for &i in &order {
            let row = x.row(i);
            let a = alpha[i];
            let g = y[i] * dot_aug(row, &w) - 1.0 + a * diag;
            let pg = if a == 0.0 { g.min(0.0) } else { g };
            max_violation = max_violation.max(pg.abs());
            if pg.abs() > 1e-15 {
                let na = (a - g / qd[i]).max(0.0);
                axpy_aug(row, (na - a) * y[i], &mut w);
                alpha[i] = na;
            }
        }
        iterations += 1;
        converged = max_violation < cfg.tolerance;
    }
    (
        w,
        DualSolution {
            alpha,
            iterations,
            max_violation,
            converged,
        },
    )
}

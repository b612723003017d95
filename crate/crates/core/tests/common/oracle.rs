//! Dense reference solvers used as test oracles.

use baitpress::features::SparseMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Minimizes `½βᵀQβ − linᵀβ + l1‖β‖₁` over `lo ≤ β ≤ hi` by accelerated
/// proximal gradient with restarts.
pub fn box_qp(q: &[Vec<f64>], lin: &[f64], l1: f64, lo: f64, hi: f64) -> Vec<f64> {
    let n = lin.len();
    let lipschitz = q
        .iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
        .max(1e-12);
    let step = 1.0 / lipschitz;
    let prox = |v: f64| {
        let s = v.signum() * (v.abs() - l1 * step).max(0.0);
        s.clamp(lo, hi)
    };
    let grad = |b: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| q[i].iter().zip(b).map(|(a, x)| a * x).sum::<f64>() - lin[i])
            .collect()
    };
    let mut x = vec![0.0; n];
    let mut z = x.clone();
    let mut t = 1.0f64;
    for _ in 0..2_000_000 {
        let g = grad(&z);
        let nx: Vec<f64> = (0..n).map(|i| prox(z[i] - step * g[i])).collect();
        let diff = nx.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        // restart when momentum points uphill
        let uphill: f64 = (0..n).map(|i| (z[i] - nx[i]) * (nx[i] - x[i])).sum();
        let nt = if uphill > 0.0 { 1.0 } else { (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0 };
        let m = if uphill > 0.0 { 0.0 } else { (t - 1.0) / nt };
        z = (0..n).map(|i| nx[i] + m * (nx[i] - x[i])).collect();
        x = nx;
        t = nt;
        if diff < 1e-15 {
            break;
        }
    }
    x
}

pub fn dense_rows(x: &SparseMatrix) -> Vec<Vec<f64>> {
    x.rows()
        .map(|r| {
            let mut d = vec![0.0; x.n_cols()];
            for (&j, &v) in r.indices.iter().zip(r.values) {
                d[j as usize] = v;
            }
            d
        })
        .collect()
}

/// Gram matrix of the rows augmented with a constant 1.
pub fn augmented_gram(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|a| {
            rows.iter()
                .map(|b| a.iter().zip(b).map(|(u, v)| u * v).sum::<f64>() + 1.0)
                .collect()
        })
        .collect()
}

/// Optimal dual value of the epsilon-insensitive SVR, in the solver's sign
/// convention (`−min`), for targets already centred by `offset`.
pub fn svr_dual_optimum(x: &SparseMatrix, y: &[f64], c: f64, eps: f64, offset: f64) -> (Vec<f64>, f64) {
    let q = augmented_gram(&dense_rows(x));
    let lin: Vec<f64> = y.iter().map(|v| v - offset).collect();
    let beta = box_qp(&q, &lin, eps, -c, c);
    (beta.clone(), -qp_value(&q, &lin, eps, &beta))
}

/// Optimal dual value of the squared-hinge SVC.
pub fn svc_dual_optimum(x: &SparseMatrix, y: &[f64], c: f64) -> (Vec<f64>, f64) {
    let mut q = augmented_gram(&dense_rows(x));
    for i in 0..y.len() {
        for j in 0..y.len() {
            q[i][j] *= y[i] * y[j];
        }
        q[i][i] += 0.5 / c;
    }
    let lin = vec![1.0; y.len()];
    let alpha = box_qp(&q, &lin, 0.0, 0.0, f64::INFINITY);
    (alpha.clone(), -qp_value(&q, &lin, 0.0, &alpha))
}

fn qp_value(q: &[Vec<f64>], lin: &[f64], l1: f64, b: &[f64]) -> f64 {
    let n = b.len();
    let mut v = 0.0;
    for i in 0..n {
        v += 0.5 * b[i] * q[i].iter().zip(b).map(|(a, x)| a * x).sum::<f64>();
        v -= lin[i] * b[i];
        v += l1 * b[i].abs();
    }
    v
}

/// A random small regression or classification problem.
pub struct Problem {
    pub x: SparseMatrix,
    pub y: Vec<f64>,
    pub labels: Vec<f64>,
    pub c: f64,
}

pub fn random_problem(seed: u64) -> Problem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(4..=20);
    let d = rng.random_range(1..=5);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            (0..d)
                .map(|_| if rng.random_bool(0.3) { 0.0 } else { rng.random_range(-1.0..1.0) })
                .collect()
        })
        .collect();
    let y: Vec<f64> = (0..n).map(|_| rng.random_range(0..4) as f64 / 3.0).collect();
    let mut labels: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
    labels[0] = 1.0;
    labels[1] = -1.0;
    let c = [0.01, 0.1, 1.0, 10.0][rng.random_range(0..4)];
    Problem {
        x: SparseMatrix::from_dense(&rows, d).unwrap(),
        y,
        labels,
        c,
    }
}

pub fn relative_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

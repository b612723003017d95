//! L2-regularized linear models on sparse features.
//!
//! [`train_svr`] fits an epsilon-insensitive (L1-loss) support vector
//! regressor and [`train_svc`] a squared-hinge classifier, both by dual
//! coordinate descent. The bias is an ordinary weight on a constant-1
//! feature. Regression targets are centred on their training mean first, so
//! the bias is shrunk toward that mean rather than toward zero.

mod solver;

use serde::{Deserialize, Serialize};

use crate::corpus::Target;
use crate::ensemble::{make_folds, FoldPlan};
use crate::error::{Error, Result};
use crate::eval::mse;
use crate::exec::Exec;
use crate::features::{SparseMatrix, Vocabulary};
use crate::textprep::FieldView;

pub use solver::DualSolution;

/// C values searched by default.
pub const DEFAULT_C_GRID: [f64; 7] = [0.001, 0.005, 0.01, 0.05, 0.1, 0.5, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Regression,
    Classification,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tolerance: 1e-4,
            max_iterations: 1000,
            seed: 1,
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidArgument("tolerance must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidArgument("max_iterations must be at least 1".into()));
        }
        Ok(())
    }
}

/// A trained linear base learner.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Training-target mean the bias was regularized toward (0 for classifiers).
    pub offset: f64,
    pub c: f64,
    pub epsilon: f64,
    pub task: Task,
    pub view: Option<FieldView>,
    pub target: Option<Target>,
}

impl LinearModel {
    pub fn zeros(n_features: usize, task: Task) -> Self {
        LinearModel {
            weights: vec![0.0; n_features],
            bias: 0.0,
            offset: 0.0,
            c: 1.0,
            epsilon: 0.0,
            task,
            view: None,
            target: None,
        }
    }

    pub fn tagged(mut self, view: FieldView, target: Target) -> Self {
        self.view = Some(view);
        self.target = Some(target);
        self
    }

    pub fn n_features(&self) -> usize {
        self.weights.len()
    }

    /// `w·xᵢ + b` for every row.
    pub fn predict(&self, x: &SparseMatrix) -> Result<Vec<f64>> {
        if x.n_cols() != self.weights.len() {
            return Err(Error::Dimension(format!(
                "model has {} features, matrix has {} columns",
                self.weights.len(),
                x.n_cols()
            )));
        }
        Ok(x.rows().map(|r| r.dot(&self.weights) + self.bias).collect())
    }

    /// Weights with the bias appended, in the solver's centred coordinates.
    fn augmented(&self) -> Vec<f64> {
        let mut w = self.weights.clone();
        w.push(self.bias - self.offset);
        w
    }
}

fn check_rows(x: &SparseMatrix, y: &[f64]) -> Result<()> {
    if x.n_rows() != y.len() {
        return Err(Error::Dimension(format!(
            "{} rows but {} targets",
            x.n_rows(),
            y.len()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("targets must be finite".into()));
    }
    Ok(())
}

fn check_c(c: f64) -> Result<()> {
    if c > 0.0 && c.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("C must be positive, got {c}")))
    }
}

pub fn train_svr(
    x: &SparseMatrix,
    y: &[f64],
    c: f64,
    epsilon: f64,
    cfg: &SolverConfig,
) -> Result<LinearModel> {
    Ok(train_svr_with_dual(x, y, c, epsilon, cfg)?.0)
}

/// [`train_svr`] that also returns the dual solution.
pub fn train_svr_with_dual(
    x: &SparseMatrix,
    y: &[f64],
    c: f64,
    epsilon: f64,
    cfg: &SolverConfig,
) -> Result<(LinearModel, DualSolution)> {
    check_rows(x, y)?;
    check_c(c)?;
    cfg.validate()?;
    if !(epsilon >= 0.0) {
        return Err(Error::InvalidArgument("epsilon must be non-negative".into()));
    }
    // anchored at y[0] so a constant target gives its value back exactly
    let offset = match y.first() {
        None => 0.0,
        Some(&y0) => y0 + y.iter().map(|v| v - y0).sum::<f64>() / y.len() as f64,
    };
    let centred: Vec<f64> = y.iter().map(|v| v - offset).collect();
    let (mut w, dual) = solver::svr_dual_cd(x, &centred, c, epsilon, cfg);
    let bias = w.pop().unwrap() + offset;
    let model = LinearModel {
        weights: w,
        bias,
        offset,
        c,
        epsilon,
        task: Task::Regression,
        view: None,
        target: None,
    };
    Ok((model, dual))
}

pub fn train_svc(x: &SparseMatrix, y: &[f64], c: f64, cfg: &SolverConfig) -> Result<LinearModel> {
    Ok(train_svc_with_dual(x, y, c, cfg)?.0)
}

/// [`train_svc`] that also returns the dual solution. Labels must be ±1.
pub fn train_svc_with_dual(
    x: &SparseMatrix,
    y: &[f64],
    c: f64,
    cfg: &SolverConfig,
) -> Result<(LinearModel, DualSolution)> {
    check_rows(x, y)?;
    check_c(c)?;
    cfg.validate()?;
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(Error::InvalidArgument("labels must be +1 or -1".into()));
    }
    if !(y.contains(&1.0) && y.contains(&-1.0)) {
        return Err(Error::InvalidArgument("both classes must be present".into()));
    }
    let (mut w, dual) = solver::svc_dual_cd(x, y, c, cfg);
    let bias = w.pop().unwrap();
    let model = LinearModel {
        weights: w,
        bias,
        offset: 0.0,
        c,
        epsilon: 0.0,
        task: Task::Classification,
        view: None,
        target: None,
    };
    Ok((model, dual))
}

/// `½‖w̃‖² + C Σ max(0, |w·xᵢ + b − yᵢ| − ε)` where `w̃` is the weights plus
/// the centred bias.
pub fn svr_primal_objective(model: &LinearModel, x: &SparseMatrix, y: &[f64]) -> Result<f64> {
    let w = model.augmented();
    let pred = model.predict(x)?;
    let loss: f64 = pred
        .iter()
        .zip(y)
        .map(|(p, t)| ((p - t).abs() - model.epsilon).max(0.0))
        .sum();
    Ok(0.5 * dot(&w, &w) + model.c * loss)
}

/// Dual value `−½‖Σβᵢx̃ᵢ‖² + Σβᵢ(yᵢ − offset) − ε‖β‖₁` of a regression fit.
pub fn svr_dual_objective(
    x: &SparseMatrix,
    y: &[f64],
    epsilon: f64,
    offset: f64,
    beta: &[f64],
) -> f64 {
    let w = combine(x, beta, None);
    let lin: f64 = beta.iter().zip(y).map(|(b, t)| b * (t - offset)).sum();
    let l1: f64 = beta.iter().map(|b| b.abs()).sum();
    -0.5 * dot(&w, &w) + lin - epsilon * l1
}

/// `½‖w̃‖² + C Σ max(0, 1 − yᵢ(w·xᵢ + b))²`
pub fn svc_primal_objective(model: &LinearModel, x: &SparseMatrix, y: &[f64]) -> Result<f64> {
    let w = model.augmented();
    let pred = model.predict(x)?;
    let loss: f64 = pred
        .iter()
        .zip(y)
        .map(|(p, t)| (1.0 - t * p).max(0.0).powi(2))
        .sum();
    Ok(0.5 * dot(&w, &w) + model.c * loss)
}

/// Dual value `−½‖Σαᵢyᵢx̃ᵢ‖² − ‖α‖²/(4C) + Σαᵢ` of a classification fit.
pub fn svc_dual_objective(x: &SparseMatrix, y: &[f64], c: f64, alpha: &[f64]) -> f64 {
    let w = combine(x, alpha, Some(y));
    let a2: f64 = alpha.iter().map(|a| a * a).sum();
    -0.5 * dot(&w, &w) - a2 / (4.0 * c) + alpha.iter().sum::<f64>()
}

fn combine(x: &SparseMatrix, coef: &[f64], labels: Option<&[f64]>) -> Vec<f64> {
    let mut w = vec![0.0; x.n_cols() + 1];
    for (i, row) in x.rows().enumerate() {
        let s = coef[i] * labels.map_or(1.0, |y| y[i]);
        row.axpy(s, &mut w);
        w[x.n_cols()] += s;
    }
    w
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightSign {
    Positive,
    Negative,
}

/// The `k` most positive (or most negative) weights with their n-grams.
/// Ties are broken by n-gram.
pub fn top_weights(
    model: &LinearModel,
    vocab: &Vocabulary,
    k: usize,
    sign: WeightSign,
) -> Result<Vec<(String, f64)>> {
    if vocab.n_features() != model.n_features() {
        return Err(Error::Dimension(format!(
            "vocabulary has {} entries, model {} weights",
            vocab.n_features(),
            model.n_features()
        )));
    }
    let mut idx: Vec<usize> = (0..model.n_features()).collect();
    let w = &model.weights;
    idx.sort_by(|&a, &b| {
        let ord = match sign {
            WeightSign::Positive => w[b].total_cmp(&w[a]),
            WeightSign::Negative => w[a].total_cmp(&w[b]),
        };
        ord.then_with(|| vocab.term(a).cmp(vocab.term(b)))
    });
    Ok(idx
        .into_iter()
        .take(k)
        .map(|j| (vocab.term(j).to_string(), w[j]))
        .collect())
}

/// Cross-validated C selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub best_c: f64,
    /// `(C, mean out-of-fold MSE)` in ascending C order.
    pub table: Vec<(f64, f64)>,
}

pub fn tune_c(
    x: &SparseMatrix,
    y: &[f64],
    grid: &[f64],
    folds: usize,
    cfg: &SolverConfig,
) -> Result<TuneResult> {
    tune_c_with(x, y, grid, folds, cfg, Exec::default())
}

/// Picks the C with the lowest mean per-fold MSE; ties go to the smaller C.
pub fn tune_c_with(
    x: &SparseMatrix,
    y: &[f64],
    grid: &[f64],
    folds: usize,
    cfg: &SolverConfig,
    exec: Exec,
) -> Result<TuneResult> {
    check_rows(x, y)?;
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty C grid".into()));
    }
    for &c in grid {
        check_c(c)?;
    }
    let plan = make_folds(x.n_rows(), folds, cfg.seed)?;
    tune_c_on_plan(x, y, grid, &plan, cfg, exec)
}

/// [`tune_c_with`] over a given fold plan.
pub fn tune_c_on_plan(
    x: &SparseMatrix,
    y: &[f64],
    grid: &[f64],
    plan: &FoldPlan,
    cfg: &SolverConfig,
    exec: Exec,
) -> Result<TuneResult> {
    check_rows(x, y)?;
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty C grid".into()));
    }
    for &c in grid {
        check_c(c)?;
    }
    if plan.n_rows() != x.n_rows() {
        return Err(Error::Dimension(format!(
            "fold plan covers {} rows, matrix has {}",
            plan.n_rows(),
            x.n_rows()
        )));
    }
    let mut grid = grid.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    let splits: Vec<(SparseMatrix, Vec<f64>, SparseMatrix, Vec<f64>)> = (0..plan.n_folds)
        .map(|f| {
            let (train, test) = plan.split(f);
            (
                x.select_rows(&train),
                train.iter().map(|&i| y[i]).collect(),
                x.select_rows(&test),
                test.iter().map(|&i| y[i]).collect(),
            )
        })
        .collect();
    let n_jobs = grid.len() * splits.len();
    let fold_mse = exec.try_map_range(n_jobs, |job| {
        let c = grid[job / splits.len()];
        let (xtr, ytr, xte, yte) = &splits[job % splits.len()];
        let model = train_svr(xtr, ytr, c, 0.0, cfg)?;
        mse(&model.predict(xte)?, yte)
    })?;

    let table: Vec<(f64, f64)> = grid
        .iter()
        .enumerate()
        .map(|(g, &c)| {
            let s = &fold_mse[g * splits.len()..(g + 1) * splits.len()];
            (c, s.iter().sum::<f64>() / s.len() as f64)
        })
        .collect();
    let mut best = table[0];
    for &(c, m) in &table[1..] {
        if m < best.1 - 1e-12 {
            best = (c, m);
        }
    }
    Ok(TuneResult {
        best_c: best.0,
        table,
    })
}

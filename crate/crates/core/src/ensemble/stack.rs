//! Out-of-fold stacking of per-view linear SVR models under an
//! extra-trees meta-regressor.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::folds::{make_folds, FoldPlan};
use super::trees::{train_extratrees_with, ExtraTreesModel, ForestParams, MetaFeatures};
use crate::corpus::{Dataset, DatasetStats, Post, Target};
use crate::error::{Error, Result};
use crate::eval::{mse, roc_auc};
use crate::exec::Exec;
use crate::features::{default_min_df, SparseMatrix, Vocabulary};
use crate::linear::{train_svc, train_svr, tune_c_with, LinearModel, SolverConfig, DEFAULT_C_GRID};
use crate::textprep::{FieldView, Preprocessor};

/// Which meta-feature columns feed the stacker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureSet {
    #[serde(rename = "mean")]
    Mean,
    #[serde(rename = "mean+std")]
    MeanStd,
    #[serde(rename = "mean+std+external")]
    MeanStdExternal,
}

impl FeatureSet {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mean" => Some(FeatureSet::Mean),
            "mean+std" => Some(FeatureSet::MeanStd),
            "mean+std+external" => Some(FeatureSet::MeanStdExternal),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureSet::Mean => "mean",
            FeatureSet::MeanStd => "mean+std",
            FeatureSet::MeanStdExternal => "mean+std+external",
        }
    }

    /// Regression targets with one base model per view.
    pub fn targets(self) -> &'static [Target] {
        match self {
            FeatureSet::Mean => &[Target::Mean],
            _ => &[Target::Mean, Target::Std],
        }
    }

    pub fn uses_external(self) -> bool {
        self == FeatureSet::MeanStdExternal
    }
}

/// Default C per view and target, from the reference per-field grid search.
pub fn default_c(view: FieldView, target: Target) -> f64 {
    use FieldView::*;
    match (target, view) {
        (Target::Std, PostText | TargetKeywords | TargetTitle) => 0.01,
        (Target::Std, TargetDescription) => 0.005,
        (Target::Std, _) => 0.001,
        (_, PostText) => 0.1,
        (_, TargetKeywords) => 0.5,
        (_, TargetDescription) => 0.005,
        (_, TargetTitle) => 0.01,
        (_, TargetCaptions | TargetParagraphs | AllConcatenated) => 0.001,
    }
}

/// Vocabulary and solver settings shared by every base model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseOptions {
    /// `None` picks [`default_min_df`] from the training-set size.
    pub min_df: Option<usize>,
    pub epsilon: f64,
    pub solver: SolverConfig,
}

impl Default for BaseOptions {
    fn default() -> Self {
        BaseOptions {
            min_df: None,
            epsilon: 0.0,
            solver: SolverConfig::default(),
        }
    }
}

impl BaseOptions {
    fn min_df_for(&self, n_docs: usize) -> usize {
        self.min_df.unwrap_or_else(|| default_min_df(n_docs))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairC {
    pub view: FieldView,
    pub target: Target,
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackConfig {
    pub feature_set: FeatureSet,
    pub n_folds: usize,
    /// Seeds the fold assignment.
    pub seed: u64,
    pub base: BaseOptions,
    pub forest: ForestParams,
    /// Explicit C for some pairs; the rest use [`default_c`] or tuning.
    pub c_overrides: Vec<PairC>,
    /// Grid-search C per pair instead of using the defaults.
    pub tune: bool,
    pub grid: Vec<f64>,
    /// C of the external-corpus classifier.
    pub external_c: f64,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for StackConfig {
    fn default() -> Self {
        StackConfig {
            feature_set: FeatureSet::MeanStd,
            n_folds: 5,
            seed: 42,
            base: BaseOptions::default(),
            forest: ForestParams::default(),
            c_overrides: Vec::new(),
            tune: false,
            grid: DEFAULT_C_GRID.to_vec(),
            external_c: 0.1,
            exec: Exec::default(),
        }
    }
}

impl StackConfig {
    fn fixed_c(&self, view: FieldView, target: Target) -> Option<f64> {
        self.c_overrides
            .iter()
            .find(|p| p.view == view && p.target == target)
            .map(|p| p.c)
    }
}

/// Normalized token sequences, `[view][row]`, for every view in
/// [`FieldView::ALL`] order.
pub fn preprocess_views(pp: &Preprocessor, posts: &[Post], exec: Exec) -> Vec<Vec<Vec<String>>> {
    let per_post: Vec<Vec<Vec<String>>> = exec.map(posts, |p| {
        FieldView::ALL
            .iter()
            .map(|&v| pp.preprocess_field(p, v))
            .collect()
    });
    let mut out: Vec<Vec<Vec<String>>> = vec![Vec::with_capacity(posts.len()); FieldView::ALL.len()];
    for views in per_post {
        for (slot, toks) in out.iter_mut().zip(views) {
            slot.push(toks);
        }
    }
    out
}

fn pick<T: Clone>(xs: &[T], rows: &[usize]) -> Vec<T> {
    rows.iter().map(|&i| xs[i].clone()).collect()
}

fn check_plan(plan: &FoldPlan, n: usize) -> Result<()> {
    if plan.n_rows() != n {
        return Err(Error::Dimension(format!(
            "fold plan covers {} rows, data has {n}",
            plan.n_rows()
        )));
    }
    if let Some(f) = plan.fold_sizes().iter().position(|&s| s < 2) {
        return Err(Error::InvalidArgument(format!("fold {f} has fewer than 2 rows")));
    }
    Ok(())
}

/// Fits a vocabulary and an SVR on `rows` of one view.
pub fn fit_base(
    tokens: &[Vec<String>],
    y: &[f64],
    rows: &[usize],
    c: f64,
    view: FieldView,
    target: Target,
    opts: &BaseOptions,
) -> Result<(Vocabulary, LinearModel)> {
    let docs = pick(tokens, rows);
    let vocab = Vocabulary::fit(&docs, opts.min_df_for(docs.len()), view)?;
    let x = vocab.transform_matrix(&docs);
    let model = train_svr(&x, &pick(y, rows), c, opts.epsilon, &opts.solver)?.tagged(view, target);
    Ok((vocab, model))
}

/// Out-of-fold predictions of one view for several targets at once.
///
/// For every fold the vocabulary and models are fitted on the other folds
/// only. Returns one column per `(y, c)` pair, in original row order.
fn oof_columns(
    tokens: &[Vec<String>],
    targets: &[(&[f64], f64)],
    plan: &FoldPlan,
    view: FieldView,
    opts: &BaseOptions,
    exec: Exec,
) -> Result<Vec<Vec<f64>>> {
    check_plan(plan, tokens.len())?;
    let per_fold = exec.try_map_range(plan.n_folds, |f| {
        let (train, test) = plan.split(f);
        let train_docs = pick(tokens, &train);
        let vocab = Vocabulary::fit(&train_docs, opts.min_df_for(train.len()), view)?;
        let xtr = vocab.transform_matrix(&train_docs);
        let xte = vocab.transform_matrix(&pick(tokens, &test));
        let mut preds = Vec::with_capacity(targets.len());
        for (y, c) in targets {
            let model = train_svr(&xtr, &pick(y, &train), *c, opts.epsilon, &opts.solver)?;
            preds.push(model.predict(&xte)?);
        }
        Ok::<_, Error>((test, preds))
    })?;
    let mut cols = vec![vec![0.0; tokens.len()]; targets.len()];
    for (test, preds) in per_fold {
        for (col, p) in cols.iter_mut().zip(preds) {
            for (&i, v) in test.iter().zip(p) {
                col[i] = v;
            }
        }
    }
    Ok(cols)
}

/// Out-of-fold predictions of the `(view, target)` SVR for every post.
///
/// No row is predicted by a model that saw its label.
pub fn oof_predictions(
    ds: &Dataset,
    view: FieldView,
    target: Target,
    c: f64,
    plan: &FoldPlan,
    pp: &Preprocessor,
    opts: &BaseOptions,
) -> Result<Vec<f64>> {
    let y = ds.targets(target)?;
    let tokens: Vec<Vec<String>> = ds.posts.iter().map(|p| pp.preprocess_field(p, view)).collect();
    let mut cols = oof_columns(&tokens, &[(&y, c)], plan, view, opts, Exec::Sequential)?;
    Ok(cols.pop().unwrap())
}

/// Mean per-fold MSE of the stacker, predictions clamped to `[0, 1]`.
pub fn stack_cv_mse(
    meta: &MetaFeatures,
    y: &[f64],
    plan: &FoldPlan,
    forest: &ForestParams,
    exec: Exec,
) -> Result<f64> {
    check_plan(plan, meta.n_rows())?;
    let per_fold = exec.try_map_range(plan.n_folds, |f| {
        let (train, test) = plan.split(f);
        let model = train_extratrees_with(&meta.select_rows(&train), &pick(y, &train), forest, Exec::Sequential)?;
        let pred: Vec<f64> = model
            .predict(&meta.select_rows(&test))?
            .into_iter()
            .map(|p| p.clamp(0.0, 1.0))
            .collect();
        mse(&pred, &pick(y, &test))
    })?;
    Ok(per_fold.iter().sum::<f64>() / per_fold.len() as f64)
}

/// One labeled document of an auxiliary classification corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalDoc {
    pub text: String,
    /// `true` for clickbait.
    pub label: bool,
}

/// Parses `{"text": …, "label": …}` lines; labels may be booleans, 0/1 or ±1.
pub fn parse_external<R: std::io::BufRead>(reader: R) -> Result<Vec<ExternalDoc>> {
    #[derive(Deserialize)]
    struct Raw {
        text: String,
        label: serde_json::Value,
    }
    let mut docs = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let bad = |message: String| Error::Parse { line: n + 1, message };
        let line = line.map_err(|e| bad(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: Raw = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        let label = match &raw.label {
            serde_json::Value::Bool(b) => *b,
            serde_json::Value::Number(x) => match x.as_f64() {
                Some(v) if v == 1.0 => true,
                Some(v) if v == 0.0 || v == -1.0 => false,
                _ => return Err(bad(format!("label {x} is not 0, 1 or -1"))),
            },
            other => return Err(bad(format!("bad label {other}"))),
        };
        docs.push(ExternalDoc { text: raw.text, label });
    }
    Ok(docs)
}

/// A linear classifier trained on an auxiliary labeled corpus and applied to
/// every view of the posts.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalClassifier {
    pub vocab: Vocabulary,
    pub model: LinearModel,
}

impl ExternalClassifier {
    pub fn train(
        docs: &[ExternalDoc],
        pp: &Preprocessor,
        c: f64,
        opts: &BaseOptions,
    ) -> Result<Self> {
        let tokens: Vec<Vec<String>> = docs.iter().map(|d| pp.process_texts(&[&d.text])).collect();
        let y: Vec<f64> = docs.iter().map(|d| if d.label { 1.0 } else { -1.0 }).collect();
        let vocab = Vocabulary::fit(&tokens, opts.min_df_for(tokens.len()), FieldView::PostText)?;
        let x = vocab.transform_matrix(&tokens);
        let model = train_svc(&x, &y, c, &opts.solver)?.tagged(FieldView::PostText, Target::Class);
        Ok(ExternalClassifier { vocab, model })
    }

    /// Margins for token sequences.
    pub fn margins(&self, tokens: &[Vec<String>]) -> Result<Vec<f64>> {
        self.model.predict(&self.vocab.transform_matrix(tokens))
    }
}

/// AUC of the external classifier on a held-out fifth of `docs`.
pub fn external_holdout_auc(
    docs: &[ExternalDoc],
    pp: &Preprocessor,
    c: f64,
    opts: &BaseOptions,
    seed: u64,
) -> Result<f64> {
    let plan = make_folds(docs.len(), 5, seed)?;
    let (train, test) = plan.split(0);
    let clf = ExternalClassifier::train(&pick(docs, &train), pp, c, opts)?;
    let test_docs = pick(docs, &test);
    let tokens: Vec<Vec<String>> = test_docs.iter().map(|d| pp.process_texts(&[&d.text])).collect();
    let labels: Vec<f64> = test_docs.iter().map(|d| if d.label { 1.0 } else { -1.0 }).collect();
    roc_auc(&clf.margins(&tokens)?, &labels)
}

/// Everything needed to score new posts.
#[derive(Debug, Clone)]
pub struct StackedModel {
    pub config: StackConfig,
    pub preprocessor: Preprocessor,
    /// One per view, in [`FieldView::ALL`] order.
    pub vocabularies: Vec<Vocabulary>,
    /// One per regression meta-column, in column order.
    pub models: Vec<LinearModel>,
    pub external: Option<ExternalClassifier>,
    pub forest: ExtraTreesModel,
    pub columns: Vec<String>,
}

/// Training diagnostics for one base pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseReport {
    pub view: FieldView,
    pub target: Target,
    pub c: f64,
    pub oof_mse: f64,
    pub time_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tune_table: Option<Vec<(f64, f64)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub stats: DatasetStats,
    pub base: Vec<BaseReport>,
    /// Stacker CV MSE for each nested feature set that could be formed.
    pub variants: Vec<(String, f64)>,
    pub stack_cv_mse: f64,
    pub importances: Vec<(String, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub external_auc: Option<f64>,
}

fn column_name(view: FieldView, target: &str) -> String {
    format!("{}/{}", view.as_str(), target)
}

/// Regression meta-columns of a feature set, in order.
pub fn regression_columns(fs: FeatureSet) -> Vec<(FieldView, Target)> {
    fs.targets()
        .iter()
        .flat_map(|&t| FieldView::ALL.iter().map(move |&v| (v, t)))
        .collect()
}

fn per_fold_mean_mse(pred: &[f64], y: &[f64], plan: &FoldPlan) -> Result<f64> {
    let mut total = 0.0;
    for f in 0..plan.n_folds {
        let rows = plan.test_rows(f);
        total += mse(&pick(pred, &rows), &pick(y, &rows))?;
    }
    Ok(total / plan.n_folds as f64)
}

/// Trains base models out-of-fold, fits the stacker on their predictions and
/// refits every base model on the full data.
pub fn train_stacked(
    ds: &Dataset,
    pp: &Preprocessor,
    config: &StackConfig,
    external_docs: Option<&[ExternalDoc]>,
) -> Result<(StackedModel, TrainReport)> {
    let exec = config.exec;
    let fs = config.feature_set;
    let n = ds.len();
    let plan = make_folds(n, config.n_folds, config.seed)?;
    check_plan(&plan, n)?;
    let ys: Vec<Vec<f64>> = fs
        .targets()
        .iter()
        .map(|&t| ds.targets(t))
        .collect::<Result<_>>()?;
    let y_mean = ds.targets(Target::Mean)?;
    let tokens = preprocess_views(pp, &ds.posts, exec);
    let all_rows: Vec<usize> = (0..n).collect();

    // C per (view, target)
    let pairs = regression_columns(fs);
    let chosen = exec.try_map_range(pairs.len(), |k| {
        let (view, target) = pairs[k];
        let ti = fs.targets().iter().position(|&t| t == target).unwrap();
        if let Some(c) = config.fixed_c(view, target) {
            return Ok((c, None));
        }
        if !config.tune {
            return Ok((default_c(view, target), None));
        }
        let docs = &tokens[view as usize];
        let vocab = Vocabulary::fit(docs, config.base.min_df_for(n), view)?;
        let x: SparseMatrix = vocab.transform_matrix(docs);
        let r = tune_c_with(&x, &ys[ti], &config.grid, config.n_folds, &config.base.solver, Exec::Sequential)?;
        Ok::<_, Error>((r.best_c, Some(r.table)))
    })?;

    // out-of-fold meta-columns, one job per view
    let oof = exec.try_map_range(FieldView::ALL.len(), |vi| {
        let view = FieldView::ALL[vi];
        let targets: Vec<(&[f64], f64)> = fs
            .targets()
            .iter()
            .enumerate()
            .map(|(ti, _)| (ys[ti].as_slice(), chosen[ti * FieldView::ALL.len() + vi].0))
            .collect();
        let start = Instant::now();
        let cols = oof_columns(&tokens[vi], &targets, &plan, view, &config.base, Exec::Sequential)?;
        Ok::<_, Error>((cols, start.elapsed().as_secs_f64()))
    })?;

    let mut names = Vec::new();
    let mut columns = Vec::new();
    let mut base = Vec::new();
    for (k, &(view, target)) in pairs.iter().enumerate() {
        let ti = k / FieldView::ALL.len();
        let vi = view as usize;
        let col = oof[vi].0[ti].clone();
        base.push(BaseReport {
            view,
            target,
            c: chosen[k].0,
            oof_mse: per_fold_mean_mse(&col, &ys[ti], &plan)?,
            time_s: oof[vi].1 / fs.targets().len() as f64,
            tune_table: chosen[k].1.clone(),
        });
        names.push(column_name(view, target.as_str()));
        columns.push(col);
    }

    let mut external = None;
    let mut external_auc = None;
    if fs.uses_external() {
        let docs = external_docs.ok_or_else(|| {
            Error::InvalidArgument("feature set mean+std+external needs an external corpus".into())
        })?;
        let clf = ExternalClassifier::train(docs, pp, config.external_c, &config.base)?;
        external_auc = external_holdout_auc(docs, pp, config.external_c, &config.base, config.seed).ok();
        for (vi, &view) in FieldView::ALL.iter().enumerate() {
            names.push(column_name(view, "external"));
            columns.push(clf.margins(&tokens[vi])?);
        }
        external = Some(clf);
    }
    let meta = MetaFeatures::from_columns(names.clone(), &columns)?;

    // nested feature-set comparison on the same folds
    let n_views = FieldView::ALL.len();
    let mut variants = Vec::new();
    for (label, k) in [("mean", n_views), ("mean+std", 2 * n_views), ("mean+std+external", 3 * n_views)] {
        if k <= meta.n_cols() {
            let sub = meta.truncate_columns(k);
            variants.push((label.to_string(), stack_cv_mse(&sub, &y_mean, &plan, &config.forest, exec)?));
        }
    }
    let stack_cv = variants.last().map(|v| v.1).unwrap_or(f64::NAN);

    let forest = train_extratrees_with(&meta, &y_mean, &config.forest, exec)?;
    let importances = names
        .iter()
        .cloned()
        .zip(forest.feature_importance())
        .collect();

    // refit on everything
    let vocabularies = exec.try_map_range(n_views, |vi| {
        let view = FieldView::ALL[vi];
        Vocabulary::fit(&tokens[vi], config.base.min_df_for(n), view)
    })?;
    let models = exec.try_map_range(pairs.len(), |k| {
        let (view, target) = pairs[k];
        let ti = k / n_views;
        let vi = view as usize;
        let x = vocabularies[vi].transform_matrix(&tokens[vi]);
        let _ = &all_rows;
        Ok::<_, Error>(
            train_svr(&x, &ys[ti], chosen[k].0, config.base.epsilon, &config.base.solver)?
                .tagged(view, target),
        )
    })?;

    let model = StackedModel {
        config: config.clone(),
        preprocessor: pp.clone(),
        vocabularies,
        models,
        external,
        forest,
        columns: names,
    };
    let report = TrainReport {
        stats: ds.stats(),
        base,
        variants,
        stack_cv_mse: stack_cv,
        importances,
        external_auc,
    };
    Ok((model, report))
}

impl StackedModel {
    /// Meta-feature matrix for `posts`.
    pub fn meta_features(&self, posts: &[Post]) -> Result<MetaFeatures> {
        let exec = self.config.exec;
        let tokens = preprocess_views(&self.preprocessor, posts, exec);
        let mut columns = exec.try_map_range(self.models.len(), |k| {
            let m = &self.models[k];
            let view = m
                .view
                .ok_or_else(|| Error::Incompatible("base model without a view tag".into()))?;
            let vi = view as usize;
            m.predict(&self.vocabularies[vi].transform_matrix(&tokens[vi]))
        })?;
        if let Some(ext) = &self.external {
            for toks in &tokens {
                columns.push(ext.margins(toks)?);
            }
        }
        if posts.is_empty() {
            return MetaFeatures::from_rows(self.columns.clone(), &[]);
        }
        MetaFeatures::from_columns(self.columns.clone(), &columns)
    }

    /// Clickbait score in `[0, 1]` for every post, in input order.
    pub fn score_posts(&self, posts: &[Post]) -> Result<Vec<(String, f64)>> {
        let meta = self.meta_features(posts)?;
        let scores = self.forest.predict(&meta)?;
        Ok(posts
            .iter()
            .zip(scores)
            .map(|(p, s)| (p.id.clone(), s.clamp(0.0, 1.0)))
            .collect())
    }

    /// Split-fraction importance of each meta-column.
    pub fn feature_importance(&self) -> Vec<(String, f64)> {
        self.columns
            .iter()
            .cloned()
            .zip(self.forest.feature_importance())
            .collect()
    }
}

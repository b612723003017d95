//! The `baitpress` command line: train, predict, evaluate, tune, inspect.
//!
//! [`run`] takes the argument list and output streams and returns the exit
//! code, so commands can be driven from tests.

pub mod config;

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use baitpress::corpus::{parse_instances, parse_truth, Class, Dataset, Post, Target};
use baitpress::ensemble::{
    make_folds, parse_external, regression_columns, train_stacked, ExternalDoc, FeatureSet,
    StackedModel, TrainReport,
};
use baitpress::eval::{render_jsonl, render_table, ClassificationReport, RegressionReport, ReportRow};
use baitpress::features::Vocabulary;
use baitpress::linear::{top_weights, tune_c_on_plan, WeightSign};
use baitpress::persist::{load_model, save_model};
use baitpress::textprep::{FieldView, Preprocessor, STOPWORDS_ENV};
use baitpress::{Error, Exec};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use config::{parse_features, FileConfig, FlagConfig};

/// Errors with their process exit codes.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad arguments or unreadable/malformed input. Exit 2.
    #[error("{0}")]
    Input(String),
    /// Model directory unusable with this build. Exit 3.
    #[error("{0}")]
    Incompatible(String),
    /// Files disagree on post ids. Exit 4.
    #[error("{0}")]
    Mismatch(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Incompatible(_) => 3,
            CliError::Mismatch(_) => 4,
        }
    }

    fn from_core(context: &Path, e: Error) -> Self {
        match e {
            Error::Incompatible(m) => CliError::Incompatible(format!("{}: incompatible model: {m}", context.display())),
            Error::IdMismatch(id) => CliError::Mismatch(format!("id mismatch: first offending id {id:?}")),
            Error::Io { .. } => CliError::Input(e.to_string()),
            e => CliError::Input(format!("{}: {e}", context.display())),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::from_core(Path::new("error"), e)
    }
}

#[derive(Debug, Parser)]
#[command(name = "baitpress", version, about = "Clickbait scoring with stacked linear models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a stacked model and write it to a directory.
    Train(TrainArgs),
    /// Score posts with a trained model.
    Predict(PredictArgs),
    /// Compare a results file against truth labels.
    Evaluate(EvaluateArgs),
    /// Grid-search C for every view and target.
    Tune(TuneArgs),
    /// List top-weighted n-grams and meta-feature importances.
    Inspect(InspectArgs),
}

#[derive(Debug, Args, Clone, Default)]
pub struct CommonTraining {
    #[arg(long)]
    pub instances: PathBuf,
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// mean, mean+std or mean+std+external
    #[arg(long, value_parser = parse_features)]
    pub features: Option<FeatureSet>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; 1 runs sequentially.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long = "min-df")]
    pub min_df: Option<usize>,
    /// Comma-separated C values.
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    /// JSON config file; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonTraining,
    /// Model directory to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Tune C per view and target instead of using the defaults.
    #[arg(long)]
    pub tune: bool,
    /// Labeled JSONL corpus for the external classifier.
    #[arg(long)]
    pub external: Option<PathBuf>,
    /// Also write the training report as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub instances: PathBuf,
    /// Results file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Results file of `{"id", "clickbaitScore"}` lines.
    #[arg(long)]
    pub results: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    /// Add per-class errors and thresholded classification metrics.
    #[arg(long = "by-class")]
    pub by_class: bool,
    /// Print JSON lines instead of a table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub common: CommonTraining,
    /// Write the table here as JSON lines.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// N-grams listed per sign and base model.
    #[arg(short, long, default_value_t = 10)]
    pub k: usize,
}

/// One line of a results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    #[serde(rename = "clickbaitScore")]
    pub clickbait_score: f64,
}

/// Runs the command line and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = if code == 0 { write!(out, "{e}") } else { write!(err, "{e}") };
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Train(a) => cmd_train(&a, out),
        Command::Predict(a) => cmd_predict(&a, out),
        Command::Evaluate(a) => cmd_evaluate(&a, out),
        Command::Tune(a) => cmd_tune(&a, out),
        Command::Inspect(a) => cmd_inspect(&a, out),
    }
}

fn write_out(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::Input(format!("writing output: {e}")))
}

/// Writes `bytes` to a temporary sibling of `path`, then renames it.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let fail = |e: std::io::Error| CliError::Input(format!("{}: {e}", path.display()));
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(fail)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(fail)?;
    std::fs::rename(&tmp, path).map_err(fail)
}

/// Runs `f` on a pool of `jobs` threads, or sequentially for `jobs == 1`.
fn with_jobs<R: Send>(jobs: Option<usize>, f: impl FnOnce(Exec) -> R + Send) -> Result<R, CliError> {
    match jobs {
        Some(0) => Err(CliError::Input("--jobs must be at least 1".into())),
        Some(1) => Ok(f(Exec::Sequential)),
        #[cfg(feature = "parallel")]
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Input(format!("thread pool: {e}")))?;
            Ok(pool.install(|| f(Exec::Parallel)))
        }
        _ => Ok(f(Exec::default())),
    }
}

fn load_dataset(instances: &Path, truth: Option<&Path>) -> Result<Dataset, CliError> {
    let posts = read_posts(instances)?;
    let Some(truth) = truth else {
        return Ok(Dataset::unlabeled(posts));
    };
    let labels = parse_truth(open(truth)?).map_err(|e| CliError::from_core(truth, e))?;
    Dataset::labeled(posts, labels).map_err(|e| CliError::from_core(truth, e))
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn read_posts(path: &Path) -> Result<Vec<Post>, CliError> {
    parse_instances(open(path)?).map_err(|e| CliError::from_core(path, e))
}

fn stack_config(common: &CommonTraining, tune: bool) -> Result<(baitpress::ensemble::StackConfig, Option<usize>), CliError> {
    let file = match &common.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let flags = FlagConfig {
        features: common.features,
        folds: common.folds,
        seed: common.seed,
        min_df: common.min_df,
        grid: common.grid.clone(),
        tune,
        jobs: common.jobs,
    };
    config::resolve(&file, &flags)
}

fn require_truth(common: &CommonTraining) -> Result<&Path, CliError> {
    common
        .truth
        .as_deref()
        .ok_or_else(|| CliError::Input("--truth is required".into()))
}

/// Training report as plain text.
pub fn render_train_report(report: &TrainReport) -> String {
    let mut s = String::new();
    let st = &report.stats;
    s.push_str(&format!(
        "posts {}  clickbait {}  no-clickbait {}\n\n",
        st.n_posts,
        st.n_clickbait.unwrap_or(0),
        st.n_no_clickbait.unwrap_or(0)
    ));
    let rows: Vec<ReportRow> = report
        .base
        .iter()
        .map(|b| {
            let r = RegressionReport {
                mse: b.oof_mse,
                rmse: b.oof_mse.sqrt(),
                n: st.n_posts,
                wall_time_seconds: b.time_s,
            };
            ReportRow::new(b.view.as_str(), b.target.as_str(), &r).with_c(b.c)
        })
        .collect();
    s.push_str("base models (out-of-fold)\n");
    s.push_str(&render_table(&rows));
    s.push_str("\nstacked (cross-validated)\n");
    for (name, m) in &report.variants {
        s.push_str(&format!("{name:<20} MSE {m:.4}  RMSE {:.4}\n", m.sqrt()));
    }
    if let Some(auc) = report.external_auc {
        s.push_str(&format!("\nexternal classifier hold-out AUC {auc:.4}\n"));
    }
    s.push_str("\nmeta-feature importances\n");
    let mut imp = report.importances.clone();
    imp.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    for (name, v) in imp {
        s.push_str(&format!("{name:<28} {v:.4}\n"));
    }
    s
}

fn read_external(path: &Path) -> Result<Vec<ExternalDoc>, CliError> {
    parse_external(open(path)?).map_err(|e| CliError::from_core(path, e))
}

pub fn cmd_train(a: &TrainArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let truth = require_truth(&a.common)?;
    let (mut config, jobs) = stack_config(&a.common, a.tune)?;
    let ds = load_dataset(&a.common.instances, Some(truth))?;
    let pp = Preprocessor::from_env().map_err(|e| CliError::from_core(Path::new(STOPWORDS_ENV), e))?;
    let external = match (&a.external, config.feature_set.uses_external()) {
        (Some(p), true) => Some(read_external(p)?),
        (None, true) => {
            return Err(CliError::Input(
                "--features mean+std+external needs --external <corpus.jsonl>".into(),
            ))
        }
        (Some(_), false) => {
            return Err(CliError::Input(
                "--external is only used with --features mean+std+external".into(),
            ))
        }
        (None, false) => None,
    };
    let (model, report) = with_jobs(jobs, |exec| {
        config.exec = exec;
        train_stacked(&ds, &pp, &config, external.as_deref())
    })?
    .map_err(|e| CliError::from_core(&a.common.instances, e))?;
    save_model(&model, &a.out).map_err(|e| CliError::from_core(&a.out, e))?;
    if let Some(p) = &a.report {
        let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
        json.push('\n');
        write_atomic(p, json.as_bytes())?;
    }
    write_out(out, &render_train_report(&report))
}

/// Loads a model and checks it against an overriding stopword list.
pub fn load_checked_model(dir: &Path) -> Result<StackedModel, CliError> {
    let model = load_model(dir).map_err(|e| CliError::from_core(dir, e))?;
    if std::env::var_os(STOPWORDS_ENV).is_some_and(|v| !v.is_empty()) {
        let pp = Preprocessor::from_env().map_err(|e| CliError::from_core(Path::new(STOPWORDS_ENV), e))?;
        if pp.digest() != model.preprocessor.digest() {
            return Err(CliError::Incompatible(format!(
                "{}: stopword list from {STOPWORDS_ENV} differs from the one the model was trained with",
                dir.display()
            )));
        }
    }
    Ok(model)
}

pub fn render_predictions(preds: &[Prediction]) -> String {
    let mut s = String::new();
    for p in preds {
        s.push_str(&serde_json::to_string(p).expect("prediction serializes"));
        s.push('\n');
    }
    s
}

pub fn cmd_predict(a: &PredictArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut model = load_checked_model(&a.model)?;
    let posts = read_posts(&a.instances)?;
    let scores = with_jobs(a.jobs, |exec| {
        model.config.exec = exec;
        model.score_posts(&posts)
    })?
    .map_err(|e| CliError::from_core(&a.model, e))?;
    let preds: Vec<Prediction> = scores
        .into_iter()
        .map(|(id, clickbait_score)| Prediction { id, clickbait_score })
        .collect();
    let text = render_predictions(&preds);
    match &a.out {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => write_out(out, &text),
    }
}

pub fn parse_predictions<R: BufRead>(reader: R) -> Result<Vec<Prediction>, Error> {
    let mut preds = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (n, line) in reader.lines().enumerate() {
        let bad = |message: String| Error::Parse { line: n + 1, message };
        let line = line.map_err(|e| bad(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let p: Prediction = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        if !p.clickbait_score.is_finite() {
            return Err(bad("score must be a finite number".into()));
        }
        if !seen.insert(p.id.clone()) {
            return Err(Error::DuplicateId(p.id));
        }
        preds.push(p);
    }
    Ok(preds)
}

pub fn cmd_evaluate(a: &EvaluateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let preds = parse_predictions(open(&a.results)?).map_err(|e| CliError::from_core(&a.results, e))?;
    let labels = parse_truth(open(&a.truth)?).map_err(|e| CliError::from_core(&a.truth, e))?;
    let posts: Vec<Post> = preds
        .iter()
        .map(|p| Post {
            id: p.id.clone(),
            ..Post::default()
        })
        .collect();
    let ds = Dataset::labeled(posts, labels).map_err(|e| CliError::from_core(&a.truth, e))?;
    let truth = ds.targets(Target::Mean)?;
    let scores: Vec<f64> = preds.iter().map(|p| p.clickbait_score).collect();
    if scores.is_empty() {
        return Err(CliError::Input("no predictions to evaluate".into()));
    }
    let start = Instant::now();
    let mut rows = vec![ReportRow::new(
        "all",
        "mean",
        &RegressionReport::new(&scores, &truth, start.elapsed().as_secs_f64())?,
    )];
    let mut extra = String::new();
    if a.by_class {
        let labels = ds.ordered_labels()?;
        for class in [Class::Clickbait, Class::NoClickbait] {
            let idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i].class == class).collect();
            if idx.is_empty() {
                continue;
            }
            let p: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
            let t: Vec<f64> = idx.iter().map(|&i| truth[i]).collect();
            rows.push(ReportRow::new(class.as_str(), "mean", &RegressionReport::new(&p, &t, 0.0)?));
        }
        let binary: Vec<f64> = labels
            .iter()
            .map(|l| if l.class == Class::Clickbait { 1.0 } else { -1.0 })
            .collect();
        match ClassificationReport::new(&scores, &binary, 0.5) {
            Ok(c) if a.json => {
                extra = serde_json::to_string(&c).expect("report serializes") + "\n";
            }
            Ok(c) => {
                extra = format!(
                    "\nthreshold 0.5: accuracy {:.4}  precision {:.4}  recall {:.4}  F1 {:.4}  AUC {:.4}\n",
                    c.accuracy, c.precision, c.recall, c.f1, c.auc
                );
            }
            Err(_) => {}
        }
    }
    let body = if a.json { render_jsonl(&rows) } else { render_table(&rows) };
    write_out(out, &(body + &extra))
}

pub fn cmd_tune(a: &TuneArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let truth = require_truth(&a.common)?;
    let (config, jobs) = stack_config(&a.common, true)?;
    let ds = load_dataset(&a.common.instances, Some(truth))?;
    let pp = Preprocessor::from_env().map_err(|e| CliError::from_core(Path::new(STOPWORDS_ENV), e))?;
    let fs = if config.feature_set == FeatureSet::Mean {
        FeatureSet::Mean
    } else {
        FeatureSet::MeanStd
    };
    let ctx = &a.common.instances;
    let plan = make_folds(ds.len(), config.n_folds, config.seed).map_err(|e| CliError::from_core(ctx, e))?;
    let rows = with_jobs(jobs, |exec| -> Result<Vec<ReportRow>, Error> {
        let tokens = baitpress::ensemble::preprocess_views(&pp, &ds.posts, exec);
        let pairs = regression_columns(fs);
        exec.try_map_range(pairs.len(), |k| {
            let (view, target) = pairs[k];
            let start = Instant::now();
            let docs = &tokens[view as usize];
            let min_df = config
                .base
                .min_df
                .unwrap_or_else(|| baitpress::features::default_min_df(docs.len()));
            let vocab = Vocabulary::fit(docs, min_df, view)?;
            let x = vocab.transform_matrix(docs);
            let y = ds.targets(target)?;
            let r = tune_c_on_plan(&x, &y, &config.grid, &plan, &config.base.solver, Exec::Sequential)?;
            let best = r.table.iter().find(|(c, _)| *c == r.best_c).map_or(f64::NAN, |t| t.1);
            let rep = RegressionReport {
                mse: best,
                rmse: best.sqrt(),
                n: ds.len(),
                wall_time_seconds: start.elapsed().as_secs_f64(),
            };
            Ok(ReportRow::new(view.as_str(), target.as_str(), &rep).with_c(r.best_c))
        })
    })?
    .map_err(|e| CliError::from_core(ctx, e))?;
    if let Some(p) = &a.out {
        write_atomic(p, render_jsonl(&rows).as_bytes())?;
    }
    write_out(out, &render_table(&rows))
}

pub fn cmd_inspect(a: &InspectArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let model = load_checked_model(&a.model)?;
    let mut s = String::new();
    if a.k > 0 {
        for m in &model.models {
            let view = m.view.unwrap_or(FieldView::PostText);
            let vocab = &model.vocabularies[view as usize];
            let name = format!("{}/{}", view.as_str(), m.target.map_or("?", Target::as_str));
            s.push_str(&format!("{name}  C={}  n_features={}\n", m.c, m.n_features()));
            for (label, sign) in [("+", WeightSign::Positive), ("-", WeightSign::Negative)] {
                for (ngram, w) in top_weights(m, vocab, a.k, sign)? {
                    s.push_str(&format!("  {label} {w:>10.6}  {ngram}\n"));
                }
            }
            s.push('\n');
        }
    }
    s.push_str("meta-feature importances\n");
    let mut imp = model.feature_importance();
    imp.sort_by(|x, y| y.1.total_cmp(&x.1).then_with(|| x.0.cmp(&y.0)));
    for (name, v) in imp {
        s.push_str(&format!("{name:<28} {v:.4}\n"));
    }
    write_out(out, &s)
}

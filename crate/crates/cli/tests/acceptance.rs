//! Acceptance criteria, one printed PASS/FAIL/SKIP line each.
//!
//! Criterion 7 needs the public 19,538-post corpus: point
//! `BAITPRESS_CORPUS_DIR` at a directory holding `instances.jsonl` and
//! `truth.jsonl`. Without it the criterion is skipped with a warning.
//!
//! Run with `cargo test --release -p baitpress-cli --test acceptance -- --nocapture`
//! to see the report.

#[path = "../../core/tests/common/oracle.rs"]
mod oracle;

use std::path::{Path, PathBuf};
use std::time::Instant;

use baitpress::corpus::{Dataset, Target, TruthLabel};
use baitpress::ensemble::{
    make_folds, oof_predictions, preprocess_views, train_extratrees, train_stacked, BaseOptions,
    ForestParams, MetaFeatures, StackConfig,
};
use baitpress::features::{default_min_df, Vocabulary};
use baitpress::linear::{
    svc_dual_objective, svc_primal_objective, svr_dual_objective, svr_primal_objective,
    top_weights, train_svc_with_dual, train_svr_with_dual, tune_c_on_plan, SolverConfig,
    WeightSign, DEFAULT_C_GRID,
};
use baitpress::textprep::{porter_stem, FieldView, Preprocessor};
use baitpress::Exec;
use oracle::{random_problem, relative_diff, svc_dual_optimum, svr_dual_optimum};

const PORTER_FIXTURE: &str = include_str!("../../core/tests/data/porter_vocabulary.tsv");

/// Criteria whose stated target contradicts its own definition. They are
/// evaluated as written and reported as FAIL; the harness only checks that
/// they fail for the recorded reason.
const UNATTAINABLE: &[u32] = &[3];

#[derive(Debug)]
enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
    Documented(String),
}

fn mini() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data/mini")
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let cfg = |seed| SolverConfig {
        tolerance: 1e-10,
        max_iterations: 1_000_000,
        seed,
    };
    let (mut worst_obj, mut worst_gap) = (0.0f64, 0.0f64);
    for seed in 0..50u64 {
        let p = random_problem(seed);
        let (m, d) = train_svr_with_dual(&p.x, &p.y, p.c, 0.0, &cfg(seed)).unwrap();
        let ours = svr_dual_objective(&p.x, &p.y, 0.0, m.offset, &d.alpha);
        let (_, best) = svr_dual_optimum(&p.x, &p.y, p.c, 0.0, m.offset);
        let primal = svr_primal_objective(&m, &p.x, &p.y).unwrap();
        worst_obj = worst_obj.max(relative_diff(ours, best));
        worst_gap = worst_gap.max((primal - ours) / primal.abs().max(1e-12));

        let (m, d) = train_svc_with_dual(&p.x, &p.labels, p.c, &cfg(seed)).unwrap();
        let ours = svc_dual_objective(&p.x, &p.labels, p.c, &d.alpha);
        let (_, best) = svc_dual_optimum(&p.x, &p.labels, p.c);
        let primal = svc_primal_objective(&m, &p.x, &p.labels).unwrap();
        worst_obj = worst_obj.max(relative_diff(ours, best));
        worst_gap = worst_gap.max((primal - ours) / primal.abs().max(1e-12));
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst_obj < 1e-6 && worst_gap < 1e-3 && secs < 10.0,
        format!("50 SVR + 50 SVC problems: max objective rel. diff {worst_obj:.2e}, max duality gap {worst_gap:.2e}, {secs:.2}s"),
    )
}

fn criterion_2() -> Outcome {
    let pairs: Vec<(&str, &str)> = PORTER_FIXTURE
        .lines()
        .filter_map(|l| l.split_once('\t'))
        .collect();
    let agree = pairs.iter().filter(|(w, s)| porter_stem(w) == *s).count();
    let examples = [("pictures", "pictur"), ("celebrities", "celebr"), ("things", "thing")];
    let examples_ok = examples.iter().all(|(w, s)| porter_stem(w) == *s);
    check(
        pairs.len() >= 500 && agree == pairs.len() && examples_ok,
        format!("{agree}/{} fixture pairs agree; pictures/celebrities/things: {examples_ok}", pairs.len()),
    )
}

fn criterion_3() -> Outcome {
    let l = TruthLabel::from_judgments("x", &[0.0, 0.0, 0.0, 1.0 / 3.0, 2.0 / 3.0]).unwrap();
    let mean_ok = (l.mean - 0.2).abs() <= 0.005;
    let std_ok = (l.std - 0.2494).abs() <= 1e-3;
    check(
        mean_ok && std_ok,
        format!("mean {:.4} (target 0.2 ± 0.005), population std {:.5} (target 0.2494 ± 1e-3)", l.mean, l.std),
    )
}

fn tree_bytes(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn cli(args: &[&str]) -> i32 {
    let mut argv = vec!["baitpress"];
    argv.extend_from_slice(args);
    baitpress_cli::run(argv, &mut std::io::sink(), &mut std::io::sink())
}

fn criterion_4() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let inst = mini().join("instances.jsonl").display().to_string();
    let truth = mini().join("truth.jsonl").display().to_string();
    let mut times = Vec::new();
    for run in ["a", "b"] {
        let model = tmp.path().join(format!("model_{run}")).display().to_string();
        let results = tmp.path().join(format!("results_{run}.jsonl")).display().to_string();
        let start = Instant::now();
        let code = cli(&["train", "--instances", &inst, "--truth", &truth, "--out", &model, "--features", "mean+std", "--seed", "42"]);
        times.push(start.elapsed().as_secs_f64());
        if code != 0 {
            return Outcome::Fail(format!("train exited with {code}"));
        }
        if cli(&["predict", "--model", &model, "--instances", &inst, "--out", &results]) != 0 {
            return Outcome::Fail("predict failed".into());
        }
    }
    let same_model = tree_bytes(&tmp.path().join("model_a")) == tree_bytes(&tmp.path().join("model_b"));
    let same_results = std::fs::read(tmp.path().join("results_a.jsonl")).unwrap()
        == std::fs::read(tmp.path().join("results_b.jsonl")).unwrap();
    let slowest = times.iter().cloned().fold(0.0, f64::max);
    check(
        same_model && same_results && slowest < 60.0,
        format!("model dirs identical: {same_model}, results identical: {same_results}, slowest train {slowest:.2}s"),
    )
}

fn criterion_5() -> Outcome {
    let ds = Dataset::load(&mini().join("instances.jsonl"), Some(&mini().join("truth.jsonl"))).unwrap();
    let pp = Preprocessor::default();
    let plan = make_folds(ds.len(), 5, 42).unwrap();
    let opts = BaseOptions::default();
    let mut checked = 0;
    for view in FieldView::ALL {
        for target in [Target::Mean, Target::Std] {
            let base = oof_predictions(&ds, view, target, 0.1, &plan, &pp, &opts).unwrap();
            for f in 0..plan.n_folds {
                let inside = plan.test_rows(f);
                let labels = ds
                    .posts
                    .iter()
                    .enumerate()
                    .map(|(i, p)| {
                        let l = &ds.labels.as_ref().unwrap()[&p.id];
                        let j: Vec<f64> = if inside.contains(&i) {
                            l.judgments.iter().map(|v| 1.0 - v).collect()
                        } else {
                            l.judgments.clone()
                        };
                        (p.id.clone(), TruthLabel::from_judgments(p.id.clone(), &j).unwrap())
                    })
                    .collect();
                let perturbed = Dataset::labeled(ds.posts.clone(), labels).unwrap();
                let after = oof_predictions(&perturbed, view, target, 0.1, &plan, &pp, &opts).unwrap();
                if inside.iter().any(|&i| after[i] != base[i]) {
                    return Outcome::Fail(format!("{view}/{} fold {f} changed", target.as_str()));
                }
                checked += inside.len();
            }
        }
    }
    Outcome::Pass(format!("{checked} OOF predictions unchanged across 14 (view, target) pairs x 5 folds"))
}

fn criterion_6() -> Outcome {
    let rows: Vec<Vec<f64>> = (0..60)
        .map(|i| vec![(i % 10) as f64 / 10.0, ((i * 7) % 13) as f64, (i as f64).sin()])
        .collect();
    let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
    let x = MetaFeatures::from_rows(names, &rows).unwrap();
    let constant = vec![0.7; rows.len()];
    let m = train_extratrees(&x, &constant, &ForestParams::default()).unwrap();
    let pred = m.predict(&x).unwrap();
    let mse: f64 = pred.iter().zip(&constant).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / pred.len() as f64;
    let y: Vec<f64> = rows.iter().map(|r| r[0] * 0.8 + r[2] * 0.1).collect();
    let m = train_extratrees(&x, &y, &ForestParams::default()).unwrap();
    let imp = m.feature_importance();
    let sum: f64 = imp.iter().sum();
    check(
        mse == 0.0 && imp.iter().all(|&v| v >= 0.0) && (sum - 1.0).abs() < 1e-9,
        format!("constant-target training MSE {mse}, importances {imp:.3?} sum {sum}"),
    )
}

const PUBLISHED_TOP_POSITIVE: [&str; 10] = [
    "[n] pictur", "[n] thing", "[n] artist", "[n] way", "[n] celebr", "here come", "shocker", "whoa", "[n] meme", "wat",
];

fn criterion_7() -> Outcome {
    let Some(dir) = std::env::var_os("BAITPRESS_CORPUS_DIR").map(PathBuf::from) else {
        return Outcome::Skip("BAITPRESS_CORPUS_DIR not set; the 19,538-post corpus is required".into());
    };
    let (inst, truth) = (dir.join("instances.jsonl"), dir.join("truth.jsonl"));
    if !inst.exists() || !truth.exists() {
        return Outcome::Skip(format!("{} lacks instances.jsonl/truth.jsonl", dir.display()));
    }
    let ds = Dataset::load(&inst, Some(&truth)).unwrap();
    let pp = Preprocessor::default();
    let config = StackConfig::default();
    let mut notes = Vec::new();
    let mut ok = true;

    // (a) postText/mean tuning
    let plan = make_folds(ds.len(), config.n_folds, config.seed).unwrap();
    let tokens = preprocess_views(&pp, &ds.posts, Exec::default());
    let docs = &tokens[FieldView::PostText as usize];
    let vocab = Vocabulary::fit(docs, default_min_df(docs.len()), FieldView::PostText).unwrap();
    let x = vocab.transform_matrix(docs);
    let y = ds.targets(Target::Mean).unwrap();
    let tuned = tune_c_on_plan(&x, &y, &DEFAULT_C_GRID, &plan, &SolverConfig::default(), Exec::default()).unwrap();
    let best_mse = tuned.table.iter().find(|t| t.0 == tuned.best_c).unwrap().1;
    let a = tuned.best_c == 0.1 && (best_mse - 0.039).abs() <= 0.006;
    ok &= a;
    notes.push(format!("(a) best C {} MSE {best_mse:.4} {}", tuned.best_c, if a { "ok" } else { "FAIL" }));

    // (b), (c), (d)
    let (model, report) = train_stacked(&ds, &pp, &config, None).unwrap();
    let get = |name: &str| report.variants.iter().find(|v| v.0 == name).map(|v| v.1).unwrap();
    let (mean_only, mean_std) = (get("mean"), get("mean+std"));
    let b = (mean_std - 0.0326).abs() <= 0.004;
    let c = mean_only > mean_std;
    let top = report
        .importances
        .iter()
        .max_by(|p, q| p.1.total_cmp(&q.1))
        .map(|p| p.0.clone())
        .unwrap();
    let d = top == "postText/mean";
    ok &= b && c && d;
    notes.push(format!("(b) mean+std CV MSE {mean_std:.4} {}", if b { "ok" } else { "FAIL" }));
    notes.push(format!("(c) mean-only {mean_only:.4} > mean+std {mean_std:.4} {}", if c { "ok" } else { "FAIL" }));
    notes.push(format!("(d) top importance {top} {}", if d { "ok" } else { "FAIL" }));

    // (e)
    let post_model = &model.models[0];
    let top50 = top_weights(post_model, &model.vocabularies[0], 50, WeightSign::Positive).unwrap();
    let hits = PUBLISHED_TOP_POSITIVE
        .iter()
        .filter(|g| top50.iter().any(|(t, _)| t == *g))
        .count();
    let e = hits >= 3;
    ok &= e;
    notes.push(format!("(e) {hits}/10 listed n-grams in top 50 {}", if e { "ok" } else { "FAIL" }));
    check(ok, notes.join("; "))
}

fn criterion_8() -> Outcome {
    Outcome::Documented("held-out leaderboard MSE 0.0362 needs the unreleased test set; not asserted".into())
}

#[test]
fn acceptance_criteria() {
    let criteria: [(u32, &str, fn() -> Outcome); 8] = [
        (1, "solver oracle equivalence", criterion_1),
        (2, "Porter stemmer conformance", criterion_2),
        (3, "truth math worked example", criterion_3),
        (4, "pipeline determinism", criterion_4),
        (5, "stacking leakage property", criterion_5),
        (6, "extra-trees properties", criterion_6),
        (7, "corpus-conditional reproduction", criterion_7),
        (8, "held-out leaderboard score", criterion_8),
    ];
    let mut unexpected = Vec::new();
    for (id, name, run) in criteria {
        let outcome = run();
        let (tag, detail) = match &outcome {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => ("FAIL", d),
            Outcome::Skip(d) => ("SKIP", d),
            Outcome::Documented(d) => ("DOC ", d),
        };
        println!("criterion {id} {tag} {name}: {detail}");
        if tag == "SKIP" {
            eprintln!("warning: criterion {id} skipped: {detail}");
        }
        let known = UNATTAINABLE.contains(&id);
        match outcome {
            Outcome::Fail(_) if !known => unexpected.push(id),
            Outcome::Pass(_) if known => unexpected.push(id),
            _ => {}
        }
    }

    // criterion 3 must fail only because its stated std disagrees with the
    // population std it defines
    let l = TruthLabel::from_judgments("x", &[0.0, 0.0, 0.0, 1.0 / 3.0, 2.0 / 3.0]).unwrap();
    let by_formula = ((0.2f64.powi(2) * 3.0 + (0.2 - 1.0 / 3.0f64).powi(2) + (0.2 - 2.0 / 3.0f64).powi(2)) / 5.0).sqrt();
    assert!((l.mean - 0.2).abs() <= 0.005);
    assert!((l.std - by_formula).abs() < 1e-12);

    assert!(unexpected.is_empty(), "criteria with unexpected outcomes: {unexpected:?}");
}

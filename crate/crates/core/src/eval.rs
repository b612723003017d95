//! Regression and classification metrics, and the experiment tables.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn mse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Dimension(format!(
            "{} predictions for {} targets",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::InvalidArgument("mse of an empty vector".into()));
    }
    let s: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum();
    Ok(s / pred.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub mse: f64,
    pub rmse: f64,
    pub n: usize,
    pub wall_time_seconds: f64,
}

impl RegressionReport {
    pub fn new(pred: &[f64], truth: &[f64], wall_time_seconds: f64) -> Result<Self> {
        let m = mse(pred, truth)?;
        Ok(RegressionReport {
            mse: m,
            rmse: m.sqrt(),
            n: pred.len(),
            wall_time_seconds,
        })
    }
}

/// Area under the ROC curve by the rank-sum statistic; ties count one half.
/// Labels are positive when `> 0`.
pub fn roc_auc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidArgument("NaN score".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l > 0.0).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::InvalidArgument("AUC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1 ..= j+1 share their average
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if labels[k] > 0.0 {
                pos_rank_sum += rank;
            }
        }
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((pos_rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl ClassificationReport {
    /// Scores above `threshold` count as positive predictions.
    pub fn new(scores: &[f64], labels: &[f64], threshold: f64) -> Result<Self> {
        let auc = roc_auc(scores, labels)?;
        let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
        for (&s, &l) in scores.iter().zip(labels) {
            match (s > threshold, l > 0.0) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, false) => tn += 1,
                (false, true) => fn_ += 1,
            }
        }
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Ok(ClassificationReport {
            accuracy: ratio(tp + tn, scores.len()),
            precision,
            recall,
            f1,
            auc,
            tp,
            fp,
            tn,
            fn_,
        })
    }
}

/// One line of an experiment table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub name: String,
    pub target: String,
    pub mse: f64,
    pub rmse: f64,
    pub n: usize,
    pub time_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub best_c: Option<f64>,
}

impl ReportRow {
    pub fn new(name: impl Into<String>, target: impl Into<String>, report: &RegressionReport) -> Self {
        ReportRow {
            name: name.into(),
            target: target.into(),
            mse: report.mse,
            rmse: report.rmse,
            n: report.n,
            time_s: report.wall_time_seconds,
            best_c: None,
        }
    }

    pub fn with_c(mut self, c: f64) -> Self {
        self.best_c = Some(c);
        self
    }
}

/// Aligned plain-text table. Always prints the header.
pub fn render_table(rows: &[ReportRow]) -> String {
    let header = ["name", "target", "MSE", "RMSE", "n", "time_s", "best_C"];
    let cells: Vec<[String; 7]> = rows
        .iter()
        .map(|r| {
            [
                r.name.clone(),
                r.target.clone(),
                format!("{:.4}", r.mse),
                format!("{:.4}", r.rmse),
                r.n.to_string(),
                format!("{:.2}", r.time_s),
                r.best_c.map_or_else(|| "-".to_string(), |c| c.to_string()),
            ]
        })
        .collect();
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, row: &[&str]| {
        let parts: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, &w))| {
                if i < 2 {
                    format!("{c:<w$}")
                } else {
                    format!("{c:>w$}")
                }
            })
            .collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(&mut out, &header);
    for row in &cells {
        let refs: Vec<&str> = row.iter().map(String::as_str).collect();
        line(&mut out, &refs);
    }
    out
}

/// One JSON object per row.
pub fn render_jsonl(rows: &[ReportRow]) -> String {
    let mut out = String::new();
    for r in rows {
        out.push_str(&serde_json::to_string(r).expect("report rows serialize"));
        out.push('\n');
    }
    out
}

//! Extremely randomized regression trees.
//!
//! Every tree sees the full training set. At each node one threshold is drawn
//! uniformly inside the observed range of every non-constant feature and the
//! candidate with the largest squared-error reduction wins.

use std::fmt::Write as _;
use std::io::BufRead;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;

/// Row-major dense matrix with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaFeatures {
    pub names: Vec<String>,
    data: Vec<f64>,
    n_rows: usize,
}

impl MetaFeatures {
    pub fn from_rows(names: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let d = names.len();
        let mut data = Vec::with_capacity(rows.len() * d);
        for r in rows {
            if r.len() != d {
                return Err(Error::Dimension(format!("row has {} values, expected {d}", r.len())));
            }
            data.extend_from_slice(r);
        }
        MetaFeatures::checked(names, data, rows.len())
    }

    /// Builds from columns of equal length.
    pub fn from_columns(names: Vec<String>, columns: &[Vec<f64>]) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::Dimension("one name per column required".into()));
        }
        let n_rows = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != n_rows) {
            return Err(Error::Dimension("columns differ in length".into()));
        }
        let mut data = Vec::with_capacity(n_rows * columns.len());
        for i in 0..n_rows {
            data.extend(columns.iter().map(|c| c[i]));
        }
        MetaFeatures::checked(names, data, n_rows)
    }

    fn checked(names: Vec<String>, data: Vec<f64>, n_rows: usize) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("meta-features must be finite".into()));
        }
        Ok(MetaFeatures {
            names,
            data,
            n_rows,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.n_cols();
        &self.data[i * d..(i + 1) * d]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols() + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.get(i, j)).collect()
    }

    pub fn select_rows(&self, rows: &[usize]) -> MetaFeatures {
        let mut data = Vec::with_capacity(rows.len() * self.n_cols());
        for &i in rows {
            data.extend_from_slice(self.row(i));
        }
        MetaFeatures {
            names: self.names.clone(),
            data,
            n_rows: rows.len(),
        }
    }

    /// Keeps the first `k` columns.
    pub fn truncate_columns(&self, k: usize) -> MetaFeatures {
        let mut data = Vec::with_capacity(self.n_rows * k);
        for i in 0..self.n_rows {
            data.extend_from_slice(&self.row(i)[..k]);
        }
        MetaFeatures {
            names: self.names[..k].to_vec(),
            data,
            n_rows: self.n_rows,
        }
    }
}

/// Mean as `v₀ + Σ(vᵢ − v₀)/n`, exact when all values are equal.
fn anchored_mean(values: impl Iterator<Item = f64>) -> f64 {
    let mut it = values;
    let Some(first) = it.next() else { return 0.0 };
    let (mut sum, mut n) = (0.0, 1usize);
    for v in it {
        sum += v - first;
        n += 1;
    }
    first + sum / n as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub min_samples_split: usize,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            min_samples_split: 5,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
        n_samples: usize,
    },
}

/// Nodes in preorder; the root is `nodes[0]`. Rows with `x <= threshold`
/// go left.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value, .. } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtraTreesModel {
    pub trees: Vec<Tree>,
    pub n_features: usize,
    pub params: ForestParams,
}

pub fn train_extratrees(x: &MetaFeatures, y: &[f64], params: &ForestParams) -> Result<ExtraTreesModel> {
    train_extratrees_with(x, y, params, Exec::default())
}

pub fn train_extratrees_with(
    x: &MetaFeatures,
    y: &[f64],
    params: &ForestParams,
    exec: Exec,
) -> Result<ExtraTreesModel> {
    if x.n_rows() == 0 {
        return Err(Error::InvalidArgument("cannot fit trees on no rows".into()));
    }
    if x.n_rows() != y.len() {
        return Err(Error::Dimension(format!("{} rows but {} targets", x.n_rows(), y.len())));
    }
    if params.n_trees == 0 {
        return Err(Error::InvalidArgument("n_trees must be at least 1".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("targets must be finite".into()));
    }
    let trees = exec.map_range(params.n_trees, |t| {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        rng.set_stream(t as u64);
        grow_tree(x, y, params.min_samples_split, &mut rng)
    });
    Ok(ExtraTreesModel {
        trees,
        n_features: x.n_cols(),
        params: *params,
    })
}

enum Slot {
    Root,
    Left(usize),
    Right(usize),
}

fn grow_tree(x: &MetaFeatures, y: &[f64], min_samples_split: usize, rng: &mut ChaCha8Rng) -> Tree {
    let mut nodes: Vec<Node> = Vec::new();
    let mut stack: Vec<(Vec<usize>, Slot)> = vec![((0..x.n_rows()).collect(), Slot::Root)];
    while let Some((rows, slot)) = stack.pop() {
        let id = nodes.len();
        match slot {
            Slot::Root => {}
            Slot::Left(p) | Slot::Right(p) => {
                if let Node::Split { left, right, .. } = &mut nodes[p] {
                    if matches!(slot, Slot::Left(_)) {
                        *left = id;
                    } else {
                        *right = id;
                    }
                }
            }
        }
        match choose_split(x, y, &rows, min_samples_split, rng) {
            None => {
                let value = anchored_mean(rows.iter().map(|&i| y[i]));
                nodes.push(Node::Leaf {
                    value,
                    n_samples: rows.len(),
                });
            }
            Some((feature, threshold)) => {
                let (l, r): (Vec<usize>, Vec<usize>) =
                    rows.iter().partition(|&&i| x.get(i, feature) <= threshold);
                nodes.push(Node::Split {
                    feature,
                    threshold,
                    left: 0,
                    right: 0,
                });
                // pushed right first so the left subtree is laid out next
                stack.push((r, Slot::Right(id)));
                stack.push((l, Slot::Left(id)));
            }
        }
    }
    Tree { nodes }
}

fn choose_split(
    x: &MetaFeatures,
    y: &[f64],
    rows: &[usize],
    min_samples_split: usize,
    rng: &mut ChaCha8Rng,
) -> Option<(usize, f64)> {
    if rows.len() < min_samples_split.max(2) {
        return None;
    }
    let y0 = y[rows[0]];
    if rows.iter().all(|&i| y[i] == y0) {
        return None;
    }
    let total: f64 = rows.iter().map(|&i| y[i]).sum();
    let n = rows.len() as f64;
    let parent = total * total / n;
    let mut best: Option<(usize, f64, f64)> = None;
    for j in 0..x.n_cols() {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &i in rows {
            let v = x.get(i, j);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !(hi > lo) {
            continue;
        }
        let mut t = rng.random_range(lo..hi);
        while t <= lo {
            t = rng.random_range(lo..hi);
        }
        let (mut sl, mut nl) = (0.0, 0usize);
        for &i in rows {
            if x.get(i, j) <= t {
                sl += y[i];
                nl += 1;
            }
        }
        let nr = rows.len() - nl;
        let sr = total - sl;
        let gain = sl * sl / nl as f64 + sr * sr / nr as f64 - parent;
        if best.is_none_or(|(_, _, g)| gain > g) {
            best = Some((j, t, gain));
        }
    }
    best.map(|(j, t, _)| (j, t))
}

impl ExtraTreesModel {
    /// Mean of the per-tree predictions. Not clamped.
    pub fn predict(&self, x: &MetaFeatures) -> Result<Vec<f64>> {
        if x.n_cols() != self.n_features {
            return Err(Error::Dimension(format!(
                "model expects {} meta-features, got {}",
                self.n_features,
                x.n_cols()
            )));
        }
        Ok((0..x.n_rows())
            .map(|i| {
                let row = x.row(i);
                anchored_mean(self.trees.iter().map(|t| t.predict_row(row)))
            })
            .collect())
    }

    /// Share of internal nodes, over all trees, that split on each feature.
    /// All zeros when no tree has a split.
    pub fn feature_importance(&self) -> Vec<f64> {
        let mut counts = vec![0usize; self.n_features];
        for tree in &self.trees {
            for node in &tree.nodes {
                if let Node::Split { feature, .. } = node {
                    counts[*feature] += 1;
                }
            }
        }
        let total: usize = counts.iter().sum();
        if total == 0 {
            return vec![0.0; self.n_features];
        }
        counts.into_iter().map(|c| c as f64 / total as f64).collect()
    }

    /// Text form: a header line, then per tree a `tree <n_nodes>` line and one
    /// line per node in preorder (`S feature threshold left right` or
    /// `L value n_samples`).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let p = &self.params;
        let _ = writeln!(
            out,
            "extratrees 1 n_trees {} n_features {} min_samples_split {} seed {}",
            self.trees.len(),
            self.n_features,
            p.min_samples_split,
            p.seed
        );
        for tree in &self.trees {
            let _ = writeln!(out, "tree {}", tree.nodes.len());
            for node in &tree.nodes {
                let _ = match node {
                    Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => writeln!(out, "S {feature} {threshold:?} {left} {right}"),
                    Node::Leaf { value, n_samples } => writeln!(out, "L {value:?} {n_samples}"),
                };
            }
        }
        out
    }

    pub fn from_text<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let mut next = || -> Result<(usize, Vec<String>)> {
            match lines.next() {
                Some((n, Ok(l))) => Ok((n + 1, l.split_whitespace().map(String::from).collect())),
                Some((n, Err(e))) => Err(Error::Parse {
                    line: n + 1,
                    message: e.to_string(),
                }),
                None => Err(Error::Parse {
                    line: 0,
                    message: "unexpected end of tree file".into(),
                }),
            }
        };
        fn num<T: std::str::FromStr>(line: usize, s: Option<&String>) -> Result<T> {
            s.and_then(|s| s.parse().ok()).ok_or_else(|| Error::Parse {
                line,
                message: "bad number".into(),
            })
        }
        let (ln, head) = next()?;
        if head.len() != 10 || head[0] != "extratrees" || head[1] != "1" {
            return Err(Error::Incompatible("unsupported tree file header".into()));
        }
        let n_trees: usize = num(ln, head.get(3))?;
        let n_features: usize = num(ln, head.get(5))?;
        let min_samples_split: usize = num(ln, head.get(7))?;
        let seed: u64 = num(ln, head.get(9))?;
        let mut trees = Vec::with_capacity(n_trees);
        for _ in 0..n_trees {
            let (ln, t) = next()?;
            if t.first().map(String::as_str) != Some("tree") {
                return Err(Error::Parse {
                    line: ln,
                    message: "expected tree".into(),
                });
            }
            let n_nodes: usize = num(ln, t.get(1))?;
            let mut nodes = Vec::with_capacity(n_nodes);
            for _ in 0..n_nodes {
                let (ln, f) = next()?;
                let node = match f.first().map(String::as_str) {
                    Some("S") => {
                        let feature: usize = num(ln, f.get(1))?;
                        let left: usize = num(ln, f.get(3))?;
                        let right: usize = num(ln, f.get(4))?;
                        if feature >= n_features || left >= n_nodes || right >= n_nodes {
                            return Err(Error::Parse {
                                line: ln,
                                message: "node reference out of range".into(),
                            });
                        }
                        Node::Split {
                            feature,
                            threshold: num(ln, f.get(2))?,
                            left,
                            right,
                        }
                    }
                    Some("L") => Node::Leaf {
                        value: num(ln, f.get(1))?,
                        n_samples: num(ln, f.get(2))?,
                    },
                    _ => {
                        return Err(Error::Parse {
                            line: ln,
                            message: "expected S or L node".into(),
                        })
                    }
                };
                nodes.push(node);
            }
            trees.push(Tree { nodes });
        }
        Ok(ExtraTreesModel {
            trees,
            n_features,
            params: ForestParams {
                n_trees,
                min_samples_split,
                seed,
            },
        })
    }
}

//! Run configuration: built-in defaults, overridden by a JSON config file,
//! overridden by command-line flags.

use std::collections::BTreeMap;
use std::path::Path;

use baitpress::corpus::Target;
use baitpress::ensemble::{FeatureSet, PairC, StackConfig};
use baitpress::textprep::FieldView;
use serde::Deserialize;

use crate::CliError;

/// Optional settings read from `--config`.
///
/// ```json
/// {"features": "mean+std", "folds": 5, "seed": 42, "min_df": 2,
///  "grid": [0.01, 0.1], "tune": false, "epsilon": 0.0,
///  "c": {"postText/mean": 0.1},
///  "forest": {"n_trees": 100, "min_samples_split": 5, "seed": 42},
///  "external_c": 0.1, "jobs": 4}
/// ```
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub features: Option<FeatureSet>,
    pub folds: Option<usize>,
    pub seed: Option<u64>,
    pub min_df: Option<usize>,
    pub grid: Option<Vec<f64>>,
    pub tune: Option<bool>,
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub c: BTreeMap<String, f64>,
    pub forest: Option<ForestFile>,
    pub external_c: Option<f64>,
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForestFile {
    pub n_trees: Option<usize>,
    pub min_samples_split: Option<usize>,
    pub seed: Option<u64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
    }
}

/// Flag values that take part in the precedence chain.
#[derive(Debug, Clone, Default)]
pub struct FlagConfig {
    pub features: Option<FeatureSet>,
    pub folds: Option<usize>,
    pub seed: Option<u64>,
    pub min_df: Option<usize>,
    pub grid: Option<Vec<f64>>,
    pub tune: bool,
    pub jobs: Option<usize>,
}

/// Parses `"view/target"` into a pair.
pub fn parse_pair(key: &str) -> Option<(FieldView, Target)> {
    let (v, t) = key.split_once('/')?;
    let target = Target::parse(t).filter(|t| *t != Target::Class)?;
    Some((FieldView::parse(v)?, target))
}

pub fn parse_features(s: &str) -> Result<FeatureSet, String> {
    FeatureSet::parse(s).ok_or_else(|| format!("unknown feature set {s:?}"))
}

/// Resolves the stack configuration and job count.
pub fn resolve(file: &FileConfig, flags: &FlagConfig) -> Result<(StackConfig, Option<usize>), CliError> {
    let mut cfg = StackConfig::default();
    if let Some(v) = flags.features.or(file.features) {
        cfg.feature_set = v;
    }
    if let Some(v) = flags.folds.or(file.folds) {
        cfg.n_folds = v;
    }
    if let Some(v) = flags.seed.or(file.seed) {
        cfg.seed = v;
    }
    cfg.base.min_df = flags.min_df.or(file.min_df);
    if let Some(v) = flags.grid.clone().or_else(|| file.grid.clone()) {
        cfg.grid = v;
    }
    cfg.tune = flags.tune || file.tune.unwrap_or(false);
    if let Some(v) = file.epsilon {
        cfg.base.epsilon = v;
    }
    if let Some(v) = file.external_c {
        cfg.external_c = v;
    }
    if let Some(f) = &file.forest {
        if let Some(v) = f.n_trees {
            cfg.forest.n_trees = v;
        }
        if let Some(v) = f.min_samples_split {
            cfg.forest.min_samples_split = v;
        }
        if let Some(v) = f.seed {
            cfg.forest.seed = v;
        }
    }
    for (key, &c) in &file.c {
        let (view, target) = parse_pair(key)
            .ok_or_else(|| CliError::Input(format!("config: bad C key {key:?}, expected view/mean or view/std")))?;
        if !(c > 0.0 && c.is_finite()) {
            return Err(CliError::Input(format!("config: C for {key} must be positive")));
        }
        cfg.c_overrides.push(PairC { view, target, c });
    }
    if cfg.grid.is_empty() || cfg.grid.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
        return Err(CliError::Input("grid values must be positive".into()));
    }
    if cfg.n_folds < 2 {
        return Err(CliError::Input("--folds must be at least 2".into()));
    }
    if cfg.base.min_df == Some(0) {
        return Err(CliError::Input("--min-df must be at least 1".into()));
    }
    Ok((cfg, flags.jobs.or(file.jobs)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_beat_file_beat_defaults() {
        let file: FileConfig =
            serde_json::from_str(r#"{"folds": 3, "seed": 9, "c": {"postText/std": 0.5}}"#).unwrap();
        let flags = FlagConfig {
            seed: Some(1),
            ..FlagConfig::default()
        };
        let (cfg, jobs) = resolve(&file, &flags).unwrap();
        assert_eq!(cfg.n_folds, 3);
        assert_eq!(cfg.seed, 1);
        assert_eq!(cfg.feature_set, FeatureSet::MeanStd);
        assert_eq!(cfg.c_overrides.len(), 1);
        assert_eq!(jobs, None);
    }

    #[test]
    fn bad_values() {
        let flags = FlagConfig {
            grid: Some(vec![0.1, -1.0]),
            ..FlagConfig::default()
        };
        assert!(resolve(&FileConfig::default(), &flags).is_err());
        assert!(serde_json::from_str::<FileConfig>(r#"{"fold": 3}"#).is_err());
        let file: FileConfig = serde_json::from_str(r#"{"c": {"postText/class": 1}}"#).unwrap();
        assert!(resolve(&file, &FlagConfig::default()).is_err());
    }
}

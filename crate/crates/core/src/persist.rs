//! On-disk model directories.
//!
//! ```text
//! <dir>/manifest.json
//! <dir>/stopwords.txt
//! <dir>/vocab/<view>.tsv
//! <dir>/linear/<view>.<target>.bin
//! <dir>/forest.txt
//! <dir>/external/vocab.tsv, external/model.bin   (optional)
//! ```
//!
//! Every file is written to a temporary sibling and renamed into place.

use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::Target;
use crate::ensemble::{ExternalClassifier, ExtraTreesModel, StackConfig, StackedModel};
use crate::error::{Error, Result};
use crate::features::Vocabulary;
use crate::linear::{LinearModel, Task};
use crate::textprep::{FieldView, Preprocessor};

pub const FORMAT_VERSION: u32 = 1;

const LINEAR_MAGIC: &[u8; 4] = b"BPLM";
const LINEAR_VERSION: u32 = 1;
const NONE_TAG: u8 = 255;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub config: StackConfig,
    /// SHA-256 of the serialized config.
    pub config_digest: String,
    pub stopwords_digest: String,
    pub columns: Vec<String>,
    /// Vocabulary size per view, in view order.
    pub n_features: Vec<(FieldView, usize)>,
    pub min_df: usize,
    pub has_external: bool,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<fs::File>> {
    fs::File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn task_tag(t: Task) -> u8 {
    match t {
        Task::Regression => 0,
        Task::Classification => 1,
    }
}

fn target_tag(t: Option<Target>) -> u8 {
    match t {
        Some(Target::Mean) => 0,
        Some(Target::Std) => 1,
        Some(Target::Class) => 2,
        None => NONE_TAG,
    }
}

/// Little-endian binary form of a [`LinearModel`].
///
/// `BPLM`, u32 version, u8 task, u8 view, u8 target, u8 padding, f64 c,
/// f64 epsilon, f64 offset, f64 bias, u64 n, then n f64 weights.
pub fn linear_to_bytes(m: &LinearModel) -> Vec<u8> {
    let mut b = Vec::with_capacity(48 + 8 * m.weights.len());
    b.extend_from_slice(LINEAR_MAGIC);
    b.extend_from_slice(&LINEAR_VERSION.to_le_bytes());
    b.push(task_tag(m.task));
    b.push(m.view.map_or(NONE_TAG, |v| v as u8));
    b.push(target_tag(m.target));
    b.push(0);
    for v in [m.c, m.epsilon, m.offset, m.bias] {
        b.extend_from_slice(&v.to_le_bytes());
    }
    b.extend_from_slice(&(m.weights.len() as u64).to_le_bytes());
    for w in &m.weights {
        b.extend_from_slice(&w.to_le_bytes());
    }
    b
}

pub fn linear_from_bytes(b: &[u8]) -> Result<LinearModel> {
    let bad = |m: &str| Error::Incompatible(format!("linear model: {m}"));
    if b.len() < 48 || &b[..4] != LINEAR_MAGIC {
        return Err(bad("not a model file"));
    }
    let version = u32::from_le_bytes(b[4..8].try_into().unwrap());
    if version != LINEAR_VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let task = match b[8] {
        0 => Task::Regression,
        1 => Task::Classification,
        t => return Err(bad(&format!("unknown task {t}"))),
    };
    let view = match b[9] {
        NONE_TAG => None,
        v => Some(*FieldView::ALL.get(v as usize).ok_or_else(|| bad("unknown view"))?),
    };
    let target = match b[10] {
        0 => Some(Target::Mean),
        1 => Some(Target::Std),
        2 => Some(Target::Class),
        NONE_TAG => None,
        _ => return Err(bad("unknown target")),
    };
    let f = |i: usize| f64::from_le_bytes(b[12 + 8 * i..20 + 8 * i].try_into().unwrap());
    let (c, epsilon, offset, bias) = (f(0), f(1), f(2), f(3));
    let n = u64::from_le_bytes(b[44..52.min(b.len())].try_into().map_err(|_| bad("truncated"))?) as usize;
    if b.len() != 52 + 8 * n {
        return Err(bad("length does not match weight count"));
    }
    let weights = b[52..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(LinearModel {
        weights,
        bias,
        offset,
        c,
        epsilon,
        task,
        view,
        target,
    })
}

fn vocab_bytes(v: &Vocabulary) -> Vec<u8> {
    let mut out = Vec::new();
    v.write_tsv(&mut out).expect("writing to memory");
    out
}

fn linear_path(dir: &Path, m: &LinearModel) -> Result<PathBuf> {
    let (Some(view), Some(target)) = (m.view, m.target) else {
        return Err(Error::InvalidArgument("base model lacks view/target tags".into()));
    };
    Ok(dir.join("linear").join(format!("{}.{}.bin", view.as_str(), target.as_str())))
}

fn config_digest(config: &StackConfig) -> String {
    let json = serde_json::to_string(config).expect("config serializes");
    hex::encode(Sha256::digest(json.as_bytes()))
}

/// Writes `model` under `dir`, creating it if needed.
pub fn save_model(model: &StackedModel, dir: &Path) -> Result<()> {
    for v in &model.vocabularies {
        write_atomic(&dir.join("vocab").join(format!("{}.tsv", v.view().as_str())), &vocab_bytes(v))?;
    }
    for m in &model.models {
        write_atomic(&linear_path(dir, m)?, &linear_to_bytes(m))?;
    }
    if let Some(ext) = &model.external {
        write_atomic(&dir.join("external").join("vocab.tsv"), &vocab_bytes(&ext.vocab))?;
        write_atomic(&dir.join("external").join("model.bin"), &linear_to_bytes(&ext.model))?;
    }
    write_atomic(&dir.join("forest.txt"), model.forest.to_text().as_bytes())?;
    let mut words = model.preprocessor.words().join("\n");
    words.push('\n');
    write_atomic(&dir.join("stopwords.txt"), words.as_bytes())?;
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        config: model.config.clone(),
        config_digest: config_digest(&model.config),
        stopwords_digest: model.preprocessor.digest().to_string(),
        columns: model.columns.clone(),
        n_features: model
            .vocabularies
            .iter()
            .map(|v| (v.view(), v.n_features()))
            .collect(),
        min_df: model.vocabularies.first().map_or(1, Vocabulary::min_df),
        has_external: model.external.is_some(),
    };
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    write_atomic(&dir.join("manifest.json"), json.as_bytes())
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join("manifest.json");
    let raw: serde_json::Value = serde_json::from_reader(open(&path)?)?;
    match raw.get("format_version").and_then(|v| v.as_u64()) {
        Some(v) if v == FORMAT_VERSION as u64 => {}
        Some(v) => {
            return Err(Error::Incompatible(format!(
                "model format version {v}, this build reads {FORMAT_VERSION}"
            )))
        }
        None => return Err(Error::Incompatible("manifest has no format_version".into())),
    }
    serde_json::from_value(raw).map_err(|e| Error::Incompatible(format!("manifest: {e}")))
}

fn read_linear(path: &Path) -> Result<LinearModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    linear_from_bytes(&bytes)
}

/// Loads a model directory and checks that its parts fit together.
pub fn load_model(dir: &Path) -> Result<StackedModel> {
    let manifest = read_manifest(dir)?;
    let preprocessor = Preprocessor::from_file(&dir.join("stopwords.txt"))?;
    if preprocessor.digest() != manifest.stopwords_digest {
        return Err(Error::Incompatible("stopword list does not match the manifest".into()));
    }
    if config_digest(&manifest.config) != manifest.config_digest {
        return Err(Error::Incompatible("config digest mismatch".into()));
    }
    let mut vocabularies = Vec::new();
    for &(view, n) in &manifest.n_features {
        let path = dir.join("vocab").join(format!("{}.tsv", view.as_str()));
        let v = Vocabulary::read_tsv(open(&path)?, manifest.min_df, view)?;
        if v.n_features() != n {
            return Err(Error::Incompatible(format!(
                "{}: {} n-grams, manifest says {n}",
                path.display(),
                v.n_features()
            )));
        }
        vocabularies.push(v);
    }
    if vocabularies.iter().map(|v| v.view()).ne(FieldView::ALL) {
        return Err(Error::Incompatible("manifest must list every view once, in order".into()));
    }
    let fs_ = manifest.config.feature_set;
    let mut models = Vec::new();
    for (view, target) in crate::ensemble::regression_columns(fs_) {
        let path = dir.join("linear").join(format!("{}.{}.bin", view.as_str(), target.as_str()));
        let m = read_linear(&path)?;
        if m.view != Some(view) || m.target != Some(target) {
            return Err(Error::Incompatible(format!("{} has the wrong tags", path.display())));
        }
        if m.n_features() != vocabularies[view as usize].n_features() {
            return Err(Error::Incompatible(format!(
                "{} has {} weights for a {}-term vocabulary",
                path.display(),
                m.n_features(),
                vocabularies[view as usize].n_features()
            )));
        }
        models.push(m);
    }
    let external = if manifest.has_external {
        let vocab = Vocabulary::read_tsv(
            open(&dir.join("external").join("vocab.tsv"))?,
            1,
            FieldView::PostText,
        )?;
        let model = read_linear(&dir.join("external").join("model.bin"))?;
        if model.n_features() != vocab.n_features() {
            return Err(Error::Incompatible("external model and vocabulary disagree".into()));
        }
        Some(ExternalClassifier { vocab, model })
    } else {
        None
    };
    let expected_cols = models.len() + if external.is_some() { FieldView::ALL.len() } else { 0 };
    if manifest.columns.len() != expected_cols {
        return Err(Error::Incompatible(format!(
            "manifest lists {} columns, models give {expected_cols}",
            manifest.columns.len()
        )));
    }
    let forest = ExtraTreesModel::from_text(open(&dir.join("forest.txt"))?)?;
    if forest.n_features != expected_cols {
        return Err(Error::Incompatible(format!(
            "forest expects {} meta-features, models give {expected_cols}",
            forest.n_features
        )));
    }
    Ok(StackedModel {
        config: manifest.config,
        preprocessor,
        vocabularies,
        models,
        external,
        forest,
        columns: manifest.columns,
    })
}

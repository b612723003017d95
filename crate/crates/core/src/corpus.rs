//! Line-delimited JSON instance and truth files.
//!
//! Instance lines use the challenge keys (`id`, `postText`, `targetTitle`, …);
//! absent keys default to empty. Truth lines carry `truthJudgments` and
//! optionally `truthMean` / `truthClass`.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};

/// One social-media post with the linked article's text fields.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Post {
    #[serde(deserialize_with = "de_id")]
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub post_timestamp: Option<String>,
    #[serde(default, deserialize_with = "de_list")]
    pub post_text: Vec<String>,
    /// Image file names. Never opened.
    #[serde(default, deserialize_with = "de_list")]
    pub post_media: Vec<String>,
    #[serde(default, deserialize_with = "de_text")]
    pub target_title: String,
    #[serde(default, deserialize_with = "de_text")]
    pub target_description: String,
    #[serde(default, deserialize_with = "de_text")]
    pub target_keywords: String,
    #[serde(default, deserialize_with = "de_list")]
    pub target_paragraphs: Vec<String>,
    #[serde(default, deserialize_with = "de_list")]
    pub target_captions: Vec<String>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum TextOrList {
    Null,
    Text(String),
    List(Vec<Option<String>>),
}

impl TextOrList {
    fn into_list(self) -> Vec<String> {
        match self {
            TextOrList::Null => Vec::new(),
            TextOrList::Text(s) => vec![s],
            TextOrList::List(v) => v.into_iter().flatten().collect(),
        }
    }
}

fn de_list<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<String>, D::Error> {
    Ok(TextOrList::deserialize(d)?.into_list())
}

// Some dumps store single-valued fields as one-element arrays.
fn de_text<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<String, D::Error> {
    Ok(TextOrList::deserialize(d)?.into_list().join(" "))
}

fn de_id<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<String, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Id {
        Text(String),
        Number(serde_json::Number),
    }
    Ok(match Id::deserialize(d)? {
        Id::Text(s) => s,
        Id::Number(n) => n.to_string(),
    })
}

/// Which target a regression model predicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Mean,
    Std,
    Class,
}

impl Target {
    pub fn as_str(self) -> &'static str {
        match self {
            Target::Mean => "mean",
            Target::Std => "std",
            Target::Class => "class",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mean" => Some(Target::Mean),
            "std" => Some(Target::Std),
            "class" => Some(Target::Class),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Class {
    Clickbait,
    NoClickbait,
}

impl Class {
    pub fn as_str(self) -> &'static str {
        match self {
            Class::Clickbait => "clickbait",
            Class::NoClickbait => "no-clickbait",
        }
    }
}

/// Annotator judgments for one post with the derived statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthLabel {
    pub id: String,
    /// Each judgment is one of 0, 1/3, 2/3, 1.
    pub judgments: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation of `judgments`.
    pub std: f64,
    pub class: Class,
}

const SCALE: [f64; 4] = [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0];
const SNAP_TOLERANCE: f64 = 0.01;

impl TruthLabel {
    /// Builds a label from raw judgments, snapping each onto the annotation
    /// scale.
    pub fn from_judgments(id: impl Into<String>, raw: &[f64]) -> Result<Self> {
        let id = id.into();
        if raw.is_empty() {
            return Err(Error::InvalidLabel {
                id,
                message: "empty judgment array".into(),
            });
        }
        let mut judgments = Vec::with_capacity(raw.len());
        for &j in raw {
            if !j.is_finite() || !(-SNAP_TOLERANCE..=1.0 + SNAP_TOLERANCE).contains(&j) {
                return Err(Error::InvalidLabel {
                    id,
                    message: format!("judgment {j} outside [0, 1]"),
                });
            }
            match SCALE.iter().find(|&&s| (s - j).abs() <= SNAP_TOLERANCE) {
                Some(&s) => judgments.push(s),
                None => {
                    return Err(Error::InvalidLabel {
                        id,
                        message: format!("judgment {j} is not on the 0, 1/3, 2/3, 1 scale"),
                    })
                }
            }
        }
        let n = judgments.len() as f64;
        let mean = judgments.iter().sum::<f64>() / n;
        let var = judgments.iter().map(|j| (j - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        Ok(TruthLabel {
            id,
            judgments,
            mean,
            std,
            class: derive_class(mean),
        })
    }

    pub fn target(&self, target: Target) -> f64 {
        match target {
            Target::Mean => self.mean,
            Target::Std => self.std,
            Target::Class => match self.class {
                Class::Clickbait => 1.0,
                Class::NoClickbait => 0.0,
            },
        }
    }
}

/// Clickbait iff the mean judgment is strictly above one half.
pub fn derive_class(mean: f64) -> Class {
    if mean > 0.5 {
        Class::Clickbait
    } else {
        Class::NoClickbait
    }
}

fn lines<R: BufRead>(reader: R) -> impl Iterator<Item = (usize, std::io::Result<String>)> {
    reader.lines().enumerate().map(|(i, l)| (i + 1, l))
}

/// Parses an instance stream, one post per non-empty line, in file order.
pub fn parse_instances<R: BufRead>(reader: R) -> Result<Vec<Post>> {
    let mut posts = Vec::new();
    let mut seen = HashSet::new();
    for (line_no, line) in lines(reader) {
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let post: Post = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if post.id.is_empty() {
            return Err(Error::Parse {
                line: line_no,
                message: "empty id".into(),
            });
        }
        if !seen.insert(post.id.clone()) {
            return Err(Error::DuplicateId(post.id));
        }
        posts.push(post);
    }
    Ok(posts)
}

/// Writes posts back out as line-delimited JSON.
pub fn write_instances<W: Write>(mut out: W, posts: &[Post]) -> std::io::Result<()> {
    for p in posts {
        serde_json::to_writer(&mut out, p)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct TruthLine {
    #[serde(deserialize_with = "de_id")]
    id: String,
    truth_judgments: Vec<f64>,
    truth_mean: Option<f64>,
    #[allow(dead_code)]
    truth_class: Option<String>,
}

/// Parses a truth stream into labels keyed by post id.
pub fn parse_truth<R: BufRead>(reader: R) -> Result<HashMap<String, TruthLabel>> {
    let mut labels = HashMap::new();
    for (line_no, line) in lines(reader) {
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: TruthLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let label = TruthLabel::from_judgments(raw.id, &raw.truth_judgments)?;
        if let Some(stated) = raw.truth_mean {
            if (stated - label.mean).abs() > SNAP_TOLERANCE {
                return Err(Error::InvalidLabel {
                    id: label.id,
                    message: format!(
                        "truthMean {stated} disagrees with judgment mean {:.5}",
                        label.mean
                    ),
                });
            }
        }
        if labels.contains_key(&label.id) {
            return Err(Error::DuplicateId(label.id));
        }
        labels.insert(label.id.clone(), label);
    }
    Ok(labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_posts: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_clickbait: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_no_clickbait: Option<usize>,
}

/// Posts plus optional labels paired one-to-one by id.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub posts: Vec<Post>,
    pub labels: Option<HashMap<String, TruthLabel>>,
}

impl Dataset {
    pub fn unlabeled(posts: Vec<Post>) -> Self {
        Dataset {
            posts,
            labels: None,
        }
    }

    /// Pairs posts with labels; fails on the first id without a partner.
    pub fn labeled(posts: Vec<Post>, labels: HashMap<String, TruthLabel>) -> Result<Self> {
        for p in &posts {
            if !labels.contains_key(&p.id) {
                return Err(Error::IdMismatch(p.id.clone()));
            }
        }
        if labels.len() != posts.len() {
            let ids: HashSet<&str> = posts.iter().map(|p| p.id.as_str()).collect();
            let mut extra: Vec<&String> =
                labels.keys().filter(|k| !ids.contains(k.as_str())).collect();
            extra.sort();
            if let Some(id) = extra.first() {
                return Err(Error::IdMismatch((*id).clone()));
            }
        }
        Ok(Dataset {
            posts,
            labels: Some(labels),
        })
    }

    pub fn load(instances: &Path, truth: Option<&Path>) -> Result<Self> {
        let f = File::open(instances).map_err(|e| Error::io(instances, e))?;
        let posts = parse_instances(BufReader::new(f))?;
        match truth {
            None => Ok(Dataset::unlabeled(posts)),
            Some(t) => {
                let f = File::open(t).map_err(|e| Error::io(t, e))?;
                let labels = parse_truth(BufReader::new(f))?;
                Dataset::labeled(posts, labels)
            }
        }
    }

    pub fn len(&self) -> usize {
        self.posts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posts.is_empty()
    }

    /// Labels in post order.
    pub fn ordered_labels(&self) -> Result<Vec<&TruthLabel>> {
        let labels = self
            .labels
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("dataset has no labels".into()))?;
        Ok(self.posts.iter().map(|p| &labels[&p.id]).collect())
    }

    /// Target values in post order.
    pub fn targets(&self, target: Target) -> Result<Vec<f64>> {
        Ok(self
            .ordered_labels()?
            .into_iter()
            .map(|l| l.target(target))
            .collect())
    }

    /// Returns a dataset restricted to `rows` (in the given order).
    pub fn subset(&self, rows: &[usize]) -> Dataset {
        let posts: Vec<Post> = rows.iter().map(|&i| self.posts[i].clone()).collect();
        let labels = self.labels.as_ref().map(|l| {
            posts
                .iter()
                .map(|p| (p.id.clone(), l[&p.id].clone()))
                .collect()
        });
        Dataset { posts, labels }
    }

    pub fn stats(&self) -> DatasetStats {
        let mut stats = DatasetStats {
            n_posts: self.posts.len(),
            ..Default::default()
        };
        if let Some(labels) = &self.labels {
            let n_cb = self
                .posts
                .iter()
                .filter(|p| labels[&p.id].class == Class::Clickbait)
                .count();
            stats.n_clickbait = Some(n_cb);
            stats.n_no_clickbait = Some(self.posts.len() - n_cb);
        }
        stats
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_example_post() {
        let line = r#"{"id": "608999590243741697", "postTimestamp": "Thu Jun 11 14:09:51 2015",
            "postText": ["Some people are such food snobs"], "postMedia": ["608999590243741697.png"],
            "targetTitle": "Some people are such food snobs", "targetDescription": "You'll never guess one...",
            "targetKeywords": "food, foodfront, food waste...", "targetParagraphs": ["What a drag it is, eating kale ...", "A new study, published this ..."],
            "targetCaptions": ["(Flikr/USDA)"], "somethingElse": 3}"#
            .replace('\n', " ");
        let posts = parse_instances(line.as_bytes()).unwrap();
        assert_eq!(posts.len(), 1);
        assert_eq!(posts[0].id, "608999590243741697");
        assert_eq!(posts[0].post_text, vec!["Some people are such food snobs"]);
        assert_eq!(posts[0].target_paragraphs.len(), 2);
        assert_eq!(posts[0].target_captions, vec!["(Flikr/USDA)"]);
    }

    #[test]
    fn absent_keys_default_to_empty() {
        let posts = parse_instances(&b"{\"id\":\"1\"}\n"[..]).unwrap();
        assert_eq!(
            posts[0],
            Post {
                id: "1".into(),
                ..Default::default()
            }
        );
    }

    #[test]
    fn empty_stream() {
        assert!(parse_instances(&b""[..]).unwrap().is_empty());
        assert!(parse_instances(&b"\n\n"[..]).unwrap().is_empty());
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let input = "{\"id\":\"1\"}\n\n{\"id\": oops}\n";
        match parse_instances(input.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        match parse_instances(&b"{\"postText\": []}"[..]) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_id_is_named() {
        let input = "{\"id\":\"7\"}\n{\"id\":\"7\"}\n";
        match parse_instances(input.as_bytes()) {
            Err(Error::DuplicateId(id)) => assert_eq!(id, "7"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn worked_example_mean_and_std() {
        let t = parse_truth(
            &br#"{"id":"a","truthJudgments":[0,0,0,0.33333,0.66667],"truthMean":0.2}"#[..],
        )
        .unwrap();
        let l = &t["a"];
        assert!((l.mean - 0.2).abs() < 0.005);
        let by_hand = ((0.2f64.powi(2) * 3.0 + (2.0f64 / 15.0).powi(2) + (7.0f64 / 15.0).powi(2)) / 5.0).sqrt();
        assert!((l.std - by_hand).abs() < 1e-12);
        assert!((l.std - 0.26667).abs() < 1e-4);
        assert_eq!(l.class, Class::NoClickbait);
        assert_eq!(l.judgments[3], 1.0 / 3.0);
    }

    #[test]
    fn unanimous_judgments() {
        let l = TruthLabel::from_judgments("x", &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(l.mean, 1.0);
        assert_eq!(l.std, 0.0);
        assert_eq!(l.class, Class::Clickbait);
    }

    #[test]
    fn truth_errors() {
        assert!(matches!(
            TruthLabel::from_judgments("x", &[]),
            Err(Error::InvalidLabel { .. })
        ));
        assert!(matches!(
            TruthLabel::from_judgments("x", &[1.2]),
            Err(Error::InvalidLabel { .. })
        ));
        assert!(matches!(
            TruthLabel::from_judgments("x", &[-0.5]),
            Err(Error::InvalidLabel { .. })
        ));
        let bad_mean = br#"{"id":"a","truthJudgments":[0,0,1],"truthMean":0.9}"#;
        assert!(matches!(
            parse_truth(&bad_mean[..]),
            Err(Error::InvalidLabel { .. })
        ));
    }

    #[test]
    fn class_threshold() {
        assert_eq!(derive_class(0.2), Class::NoClickbait);
        assert_eq!(derive_class(1.0), Class::Clickbait);
        assert_eq!(derive_class(0.5), Class::NoClickbait);
    }

    #[test]
    fn stats_of_empty_and_unlabeled() {
        let empty = Dataset::labeled(Vec::new(), HashMap::new()).unwrap();
        assert_eq!(
            empty.stats(),
            DatasetStats {
                n_posts: 0,
                n_clickbait: Some(0),
                n_no_clickbait: Some(0)
            }
        );
        let unl = Dataset::unlabeled(vec![Post {
            id: "1".into(),
            ..Default::default()
        }]);
        assert_eq!(unl.stats().n_posts, 1);
        assert_eq!(unl.stats().n_clickbait, None);
    }

    #[test]
    fn label_pairing_is_checked() {
        let posts = vec![Post {
            id: "1".into(),
            ..Default::default()
        }];
        let mut labels = HashMap::new();
        labels.insert(
            "2".to_string(),
            TruthLabel::from_judgments("2", &[0.0]).unwrap(),
        );
        match Dataset::labeled(posts, labels) {
            Err(Error::IdMismatch(id)) => assert_eq!(id, "1"),
            other => panic!("unexpected {other:?}"),
        }
    }
}

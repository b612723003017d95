//! Text normalization: sentence dedupe, HTML stripping, tokenization,
//! stopword removal and Porter stemming, applied per text field.

mod porter;

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::Post;
use crate::error::{Error, Result};

pub use porter::porter_stem;

/// Replaces every purely numeric token.
pub const NUMBER_TOKEN: &str = "[n]";

/// Environment variable naming an alternative stopword file.
pub const STOPWORDS_ENV: &str = "BAITPRESS_STOPWORDS";

const DEFAULT_STOPWORDS: &str = include_str!("../../data/stopwords_en.txt");

/// The seven text views a base model can be trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FieldView {
    #[serde(rename = "postText")]
    PostText,
    #[serde(rename = "targetTitle")]
    TargetTitle,
    #[serde(rename = "targetDescription")]
    TargetDescription,
    #[serde(rename = "targetKeywords")]
    TargetKeywords,
    #[serde(rename = "targetParagraphs")]
    TargetParagraphs,
    #[serde(rename = "targetCaptions")]
    TargetCaptions,
    #[serde(rename = "all")]
    AllConcatenated,
}

impl FieldView {
    pub const ALL: [FieldView; 7] = [
        FieldView::PostText,
        FieldView::TargetTitle,
        FieldView::TargetDescription,
        FieldView::TargetKeywords,
        FieldView::TargetParagraphs,
        FieldView::TargetCaptions,
        FieldView::AllConcatenated,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FieldView::PostText => "postText",
            FieldView::TargetTitle => "targetTitle",
            FieldView::TargetDescription => "targetDescription",
            FieldView::TargetKeywords => "targetKeywords",
            FieldView::TargetParagraphs => "targetParagraphs",
            FieldView::TargetCaptions => "targetCaptions",
            FieldView::AllConcatenated => "all",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        FieldView::ALL.into_iter().find(|v| v.as_str() == s)
    }

    /// Raw text items of this view, before any processing.
    pub fn texts(self, post: &Post) -> Vec<&str> {
        match self {
            FieldView::PostText => post.post_text.iter().map(String::as_str).collect(),
            FieldView::TargetTitle => vec![post.target_title.as_str()],
            FieldView::TargetDescription => vec![post.target_description.as_str()],
            FieldView::TargetKeywords => vec![post.target_keywords.as_str()],
            FieldView::TargetParagraphs => {
                post.target_paragraphs.iter().map(String::as_str).collect()
            }
            FieldView::TargetCaptions => post.target_captions.iter().map(String::as_str).collect(),
            FieldView::AllConcatenated => FieldView::ALL[..6]
                .iter()
                .flat_map(|v| v.texts(post))
                .collect(),
        }
    }
}

impl std::fmt::Display for FieldView {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Removes `<…>` tags, then unescapes the five basic entities.
///
/// A tag runs from a `<` to the last `>` before the next `<`; a `<` with no
/// such `>` is kept.
pub fn strip_html(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(open) = rest.find('<') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let segment_end = after.find('<').unwrap_or(after.len());
        match after[..segment_end].rfind('>') {
            Some(close) => rest = &after[close + 1..],
            None => {
                out.push('<');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    unescape_entities(&out)
}

fn unescape_entities(text: &str) -> String {
    const ENTITIES: [(&str, char); 5] = [
        ("&amp;", '&'),
        ("&lt;", '<'),
        ("&gt;", '>'),
        ("&quot;", '"'),
        ("&#39;", '\''),
    ];
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(amp) = rest.find('&') {
        out.push_str(&rest[..amp]);
        let tail = &rest[amp..];
        match ENTITIES.iter().find(|(e, _)| tail.starts_with(e)) {
            Some((e, c)) => {
                out.push(*c);
                rest = &tail[e.len()..];
            }
            None => {
                out.push('&');
                rest = &tail[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

/// Splits after `.`, `!` or `?` when followed by whitespace or end of text.
fn split_sentences(text: &str) -> Vec<&str> {
    let mut sentences = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') {
            let boundary = match chars.peek() {
                None => true,
                Some(&(_, next)) => next.is_whitespace(),
            };
            if boundary {
                let end = i + c.len_utf8();
                sentences.push(text[start..end].trim());
                start = end;
            }
        }
    }
    sentences.push(text[start..].trim());
    sentences.retain(|s| !s.is_empty());
    sentences
}

fn sentence_key(s: &str) -> String {
    s.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Drops sentences already seen earlier in the same list of texts.
///
/// Comparison is case-insensitive with whitespace collapsed. Kept sentences
/// of one text are re-joined with single spaces; texts left empty vanish.
pub fn dedupe_sentences<S: AsRef<str>>(texts: &[S]) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(texts.len());
    for text in texts {
        let kept: Vec<&str> = split_sentences(text.as_ref())
            .into_iter()
            .filter(|s| seen.insert(sentence_key(s)))
            .collect();
        if !kept.is_empty() {
            out.push(kept.join(" "));
        }
    }
    out
}

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

fn is_number(token: &str) -> bool {
    let b = token.as_bytes();
    !b.is_empty()
        && b[0].is_ascii_digit()
        && b[b.len() - 1].is_ascii_digit()
        && b.iter().all(|c| c.is_ascii_digit() || *c == b',' || *c == b'.')
        && !b.windows(2).any(|w| !w[0].is_ascii_digit() && !w[1].is_ascii_digit())
}

/// Casefolds and splits text into raw tokens.
///
/// Tokens are maximal runs of letters, digits and apostrophes, where a `,`
/// or `.` between two digits stays inside the run. Apostrophes are dropped
/// and purely numeric tokens become [`NUMBER_TOKEN`]. A literal `[n]` in the
/// input is kept as the number token.
pub fn tokenize(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut current = String::new();
    let flush = |current: &mut String, tokens: &mut Vec<String>| {
        if !current.is_empty() {
            let token = std::mem::take(current);
            if is_number(&token) {
                tokens.push(NUMBER_TOKEN.to_string());
            } else {
                tokens.push(token);
            }
        }
    };
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_alphanumeric() {
            current.extend(c.to_lowercase());
        } else if is_apostrophe(c) {
            // folded away, the run continues
        } else if (c == ',' || c == '.')
            && i > 0
            && chars[i - 1].is_ascii_digit()
            && chars.get(i + 1).is_some_and(|n| n.is_ascii_digit())
            && !current.is_empty()
            && current.chars().all(|d| d.is_ascii_digit() || d == ',' || d == '.')
        {
            current.push(c);
        } else if c == '['
            && current.is_empty()
            && matches!(chars.get(i + 1..i + 3), Some(['n' | 'N', ']']))
        {
            tokens.push(NUMBER_TOKEN.to_string());
            i += 3;
            continue;
        } else {
            flush(&mut current, &mut tokens);
        }
        i += 1;
    }
    flush(&mut current, &mut tokens);
    tokens
}

/// A stopword list plus the preprocessing chain that uses it.
#[derive(Debug, Clone)]
pub struct Preprocessor {
    stopwords: HashSet<String>,
    digest: String,
}

impl Default for Preprocessor {
    fn default() -> Self {
        Preprocessor::from_list(DEFAULT_STOPWORDS)
    }
}

impl Preprocessor {
    /// Parses a stopword list: one entry per line, `#` comments allowed.
    pub fn from_list(list: &str) -> Self {
        let mut words: Vec<String> = list
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_lowercase)
            .filter(|w| w != NUMBER_TOKEN)
            .collect();
        words.sort();
        words.dedup();
        let digest = hex::encode(Sha256::digest(words.join("\n").as_bytes()));
        Preprocessor {
            stopwords: words.into_iter().collect(),
            digest,
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Preprocessor::from_list(&text))
    }

    /// The bundled list, or the file named by `BAITPRESS_STOPWORDS`.
    pub fn from_env() -> Result<Self> {
        match std::env::var_os(STOPWORDS_ENV) {
            Some(p) if !p.is_empty() => Preprocessor::from_file(Path::new(&p)),
            _ => Ok(Preprocessor::default()),
        }
    }

    /// SHA-256 of the normalized stopword list.
    pub fn digest(&self) -> &str {
        &self.digest
    }

    /// The stopwords, sorted.
    pub fn words(&self) -> Vec<&str> {
        let mut w: Vec<&str> = self.stopwords.iter().map(String::as_str).collect();
        w.sort_unstable();
        w
    }

    pub fn is_stopword(&self, token: &str) -> bool {
        self.stopwords.contains(token)
    }

    pub fn remove_stopwords(&self, tokens: Vec<String>) -> Vec<String> {
        tokens
            .into_iter()
            .filter(|t| t == NUMBER_TOKEN || !self.stopwords.contains(t))
            .collect()
    }

    /// Full chain on a list of texts: dedupe, strip HTML, tokenize, drop
    /// stopwords, stem.
    pub fn process_texts<S: AsRef<str>>(&self, texts: &[S]) -> Vec<String> {
        let mut tokens = Vec::new();
        for text in dedupe_sentences(texts) {
            tokens.extend(tokenize(&strip_html(&text)));
        }
        self.remove_stopwords(tokens)
            .into_iter()
            .map(|t| porter_stem(&t))
            .collect()
    }

    pub fn preprocess_field(&self, post: &Post, view: FieldView) -> Vec<String> {
        self.process_texts(&view.texts(post))
    }
}

//! Bag-of-n-grams features: per-view vocabularies over 1-, 2- and 3-grams
//! and raw-count sparse encodings.

mod sparse;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::textprep::FieldView;

pub use sparse::{Row, SparseMatrix, SparseVector};

pub const MAX_NGRAM: usize = 3;

/// Every contiguous 1-, 2- and 3-gram, grouped by length, in sequence order.
pub fn extract_ngrams<S: AsRef<str>>(tokens: &[S]) -> Vec<String> {
    let mut out = Vec::new();
    for n in 1..=MAX_NGRAM {
        for window in tokens.windows(n) {
            out.push(join_tokens(window));
        }
    }
    out
}

fn join_tokens<S: AsRef<str>>(window: &[S]) -> String {
    let mut s = String::new();
    for (i, t) in window.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        s.push_str(t.as_ref());
    }
    s
}

/// Calls `f` on each n-gram, reusing one buffer.
fn for_each_ngram<S: AsRef<str>>(tokens: &[S], mut f: impl FnMut(&str)) {
    let mut buf = String::new();
    for n in 1..=MAX_NGRAM {
        for window in tokens.windows(n) {
            buf.clear();
            for (i, t) in window.iter().enumerate() {
                if i > 0 {
                    buf.push(' ');
                }
                buf.push_str(t.as_ref());
            }
            f(&buf);
        }
    }
}

/// Default document-frequency cutoff for a training set of `n_docs`.
pub fn default_min_df(n_docs: usize) -> usize {
    if n_docs > 5000 {
        2
    } else {
        1
    }
}

/// Column assignment for n-grams, in lexicographic order.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, u32>,
    min_df: usize,
    view: FieldView,
}

impl Vocabulary {
    pub fn fit<S: AsRef<str> + Sync>(
        corpus: &[Vec<S>],
        min_df: usize,
        view: FieldView,
    ) -> Result<Self> {
        Vocabulary::fit_with(corpus, min_df, view, Exec::Sequential)
    }

    /// Keeps n-grams that occur in at least `min_df` documents.
    pub fn fit_with<S: AsRef<str> + Sync>(
        corpus: &[Vec<S>],
        min_df: usize,
        view: FieldView,
        exec: Exec,
    ) -> Result<Self> {
        if min_df == 0 {
            return Err(Error::InvalidArgument("min_df must be at least 1".into()));
        }
        const CHUNK: usize = 512;
        let chunks: Vec<&[Vec<S>]> = corpus.chunks(CHUNK).collect();
        let partial = exec.map(&chunks, |docs| {
            let mut df: HashMap<String, usize> = HashMap::new();
            let mut seen: HashSet<String> = HashSet::new();
            for doc in docs.iter() {
                seen.clear();
                for_each_ngram(doc, |g| {
                    if !seen.contains(g) {
                        seen.insert(g.to_string());
                    }
                });
                for g in seen.drain() {
                    *df.entry(g).or_insert(0) += 1;
                }
            }
            df
        });
        let mut total: BTreeMap<String, usize> = BTreeMap::new();
        for df in partial {
            for (g, c) in df {
                *total.entry(g).or_insert(0) += c;
            }
        }
        let terms: Vec<String> = total
            .into_iter()
            .filter(|&(_, c)| c >= min_df)
            .map(|(g, _)| g)
            .collect();
        Ok(Vocabulary::from_terms(terms, min_df, view))
    }

    /// `terms` must already be sorted and unique.
    fn from_terms(terms: Vec<String>, min_df: usize, view: FieldView) -> Self {
        let index = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocabulary {
            terms,
            index,
            min_df,
            view,
        }
    }

    pub fn n_features(&self) -> usize {
        self.terms.len()
    }

    pub fn min_df(&self) -> usize {
        self.min_df
    }

    pub fn view(&self) -> FieldView {
        self.view
    }

    pub fn get(&self, ngram: &str) -> Option<u32> {
        self.index.get(ngram).copied()
    }

    pub fn term(&self, index: usize) -> &str {
        &self.terms[index]
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    /// Raw n-gram counts of one token sequence.
    pub fn transform<S: AsRef<str>>(&self, tokens: &[S]) -> SparseVector {
        let mut hits: Vec<u32> = Vec::new();
        for_each_ngram(tokens, |g| {
            if let Some(&j) = self.index.get(g) {
                hits.push(j);
            }
        });
        hits.sort_unstable();
        let mut v = SparseVector::default();
        for j in hits {
            if v.indices.last() == Some(&j) {
                *v.values.last_mut().unwrap() += 1.0;
            } else {
                v.indices.push(j);
                v.values.push(1.0);
            }
        }
        v
    }

    pub fn transform_matrix<S: AsRef<str> + Sync>(&self, corpus: &[Vec<S>]) -> SparseMatrix {
        self.transform_matrix_with(corpus, Exec::Sequential)
    }

    pub fn transform_matrix_with<S: AsRef<str> + Sync>(
        &self,
        corpus: &[Vec<S>],
        exec: Exec,
    ) -> SparseMatrix {
        let rows = exec.map(corpus, |doc| self.transform(doc));
        SparseMatrix::from_rows(self.n_features(), rows)
            .expect("vocabulary transform yields valid rows")
    }

    /// Writes `ngram<TAB>index` lines, sorted by n-gram.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (i, t) in self.terms.iter().enumerate() {
            writeln!(out, "{t}\t{i}")?;
        }
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(reader: R, min_df: usize, view: FieldView) -> Result<Self> {
        let mut terms = Vec::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::Parse {
                line: n + 1,
                message: e.to_string(),
            })?;
            let bad = |message: &str| Error::Parse {
                line: n + 1,
                message: message.to_string(),
            };
            let (term, idx) = line.rsplit_once('\t').ok_or_else(|| bad("missing tab"))?;
            let idx: usize = idx.parse().map_err(|_| bad("bad index"))?;
            if idx != terms.len() {
                return Err(bad("indices must be dense and in order"));
            }
            if terms.last().is_some_and(|prev: &String| prev.as_str() >= term) {
                return Err(bad("n-grams must be sorted"));
            }
            terms.push(term.to_string());
        }
        Ok(Vocabulary::from_terms(terms, min_df, view))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn ngram_examples() {
        assert_eq!(
            extract_ngrams(&["a", "b", "c"]),
            doc(&["a", "b", "c", "a b", "b c", "a b c"])
        );
        assert_eq!(extract_ngrams(&["[n]", "pictur"]), doc(&["[n]", "pictur", "[n] pictur"]));
        assert!(extract_ngrams::<&str>(&[]).is_empty());
    }

    #[test]
    fn fit_examples() {
        let v = Vocabulary::fit(&[doc(&["a", "b"]), doc(&["a", "c"])], 2, FieldView::PostText).unwrap();
        assert_eq!(v.terms(), &["a"]);
        let v = Vocabulary::fit(&[doc(&["a", "b"]), doc(&["a", "b"])], 1, FieldView::PostText).unwrap();
        assert_eq!(v.terms(), &["a", "a b", "b"]);
        assert_eq!(v.get("a b"), Some(1));
        let v = Vocabulary::fit(&[doc(&["a"])], 5, FieldView::PostText).unwrap();
        assert_eq!(v.n_features(), 0);
        let empty: Vec<Vec<String>> = Vec::new();
        assert_eq!(Vocabulary::fit(&empty, 1, FieldView::PostText).unwrap().n_features(), 0);
        assert!(Vocabulary::fit(&empty, 0, FieldView::PostText).is_err());
    }

    #[test]
    fn document_frequency_counts_documents_not_occurrences() {
        let v = Vocabulary::fit(&[doc(&["a", "a"]), doc(&["b"])], 2, FieldView::PostText).unwrap();
        assert_eq!(v.n_features(), 0);
    }

    #[test]
    fn transform_examples() {
        let v = Vocabulary::from_terms(doc(&["a", "b"]), 1, FieldView::PostText);
        let x = v.transform(&["a", "a", "c"]);
        assert_eq!(x.indices, vec![0]);
        assert_eq!(x.values, vec![2.0]);
        assert!(v.transform::<&str>(&[]).is_empty());

        let v = Vocabulary::fit(&[doc(&["a", "b"]), doc(&["a", "b"])], 1, FieldView::PostText).unwrap();
        let x = v.transform(&["a", "b"]);
        assert_eq!(x.indices, vec![0, 1, 2]);
        assert_eq!(x.values, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn matrix_rows_match_vectors() {
        let corpus = vec![doc(&["a", "b", "a"]), doc(&[]), doc(&["b", "c"])];
        let v = Vocabulary::fit(&corpus, 1, FieldView::PostText).unwrap();
        let m = v.transform_matrix(&corpus);
        assert_eq!(m.n_cols(), v.n_features());
        for (i, d) in corpus.iter().enumerate() {
            assert_eq!(m.row(i).to_vector(), v.transform(d));
        }
        let none: Vec<Vec<String>> = Vec::new();
        assert_eq!(v.transform_matrix(&none).n_rows(), 0);
    }

    #[test]
    fn tsv_round_trip() {
        let corpus = vec![doc(&["[n]", "pictur", "wow"]), doc(&["here", "come"])];
        let v = Vocabulary::fit(&corpus, 1, FieldView::PostText).unwrap();
        let mut buf = Vec::new();
        v.write_tsv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("[n]\t0\n[n] pictur\t1\n"));
        let back = Vocabulary::read_tsv(&buf[..], 1, FieldView::PostText).unwrap();
        assert_eq!(back, v);
        assert!(Vocabulary::read_tsv(&b"b\t0\na\t1\n"[..], 1, FieldView::PostText).is_err());
    }

    #[test]
    fn parallel_fit_matches_sequential() {
        let corpus: Vec<Vec<String>> = (0..2000)
            .map(|i| doc(&[["x", "y", "z"][i % 3], ["p", "q"][i % 2], "r"]))
            .collect();
        let a = Vocabulary::fit_with(&corpus, 2, FieldView::PostText, Exec::Sequential).unwrap();
        let b = Vocabulary::fit_with(&corpus, 2, FieldView::PostText, Exec::Parallel).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            a.transform_matrix_with(&corpus, Exec::Sequential),
            b.transform_matrix_with(&corpus, Exec::Parallel)
        );
    }
}

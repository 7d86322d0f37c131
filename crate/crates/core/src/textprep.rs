//! Description cleaning, length filtering and document-frequency vocabulary.

use std::collections::{BTreeMap, BTreeSet};

use rust_stemmers::{Algorithm, Stemmer};
use serde::Serialize;

use crate::{NicheError, Result};

/// Documents whose alphabetic characters are less than this share basic-Latin
/// letters are treated as non-English.
pub const MIN_LATIN_SHARE: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TokenizedDoc {
    pub app_id: String,
    pub tokens: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Exclusion {
    Empty,
    NonEnglish,
    TooShort,
    TooLong,
}

impl Exclusion {
    pub fn reason(self) -> &'static str {
        match self {
            Exclusion::Empty => "empty",
            Exclusion::NonEnglish => "non-english",
            Exclusion::TooShort => "too-short",
            Exclusion::TooLong => "too-long",
        }
    }
}

/// English stemmer applied to a fixpoint, so stemming a stem is the identity.
pub struct TextCleaner {
    stemmer: Stemmer,
}

impl Default for TextCleaner {
    fn default() -> Self {
        TextCleaner {
            stemmer: Stemmer::create(Algorithm::English),
        }
    }
}

impl TextCleaner {
    pub fn stem(&self, word: &str) -> String {
        let mut cur = word.to_string();
        // each pass can only shorten or keep the word
        for _ in 0..8 {
            let next = self.stemmer.stem(&cur).into_owned();
            if next == cur || next.is_empty() {
                break;
            }
            cur = next;
        }
        cur
    }

    /// Lowercase, drop punctuation and numerals, stem. Rejects empty and
    /// non-English text.
    pub fn clean(&self, app_id: &str, text: &str) -> std::result::Result<TokenizedDoc, Exclusion> {
        let (mut alpha, mut latin) = (0usize, 0usize);
        for ch in text.chars().filter(|c| c.is_alphabetic()) {
            alpha += 1;
            if ch.is_ascii_alphabetic() {
                latin += 1;
            }
        }
        if alpha == 0 {
            return Err(Exclusion::Empty);
        }
        if (latin as f64) < MIN_LATIN_SHARE * alpha as f64 {
            return Err(Exclusion::NonEnglish);
        }
        let tokens: Vec<String> = text
            .to_lowercase()
            .replace(['\'', '\u{2019}'], "")
            .split(|c: char| !c.is_ascii_alphabetic())
            .filter(|w| !w.is_empty())
            .map(|w| self.stem(w))
            .filter(|w| !w.is_empty())
            .collect();
        if tokens.is_empty() {
            return Err(Exclusion::Empty);
        }
        Ok(TokenizedDoc {
            app_id: app_id.to_string(),
            tokens,
        })
    }
}

/// Convenience wrapper around a throwaway [`TextCleaner`].
pub fn clean_description(app_id: &str, text: &str) -> std::result::Result<TokenizedDoc, Exclusion> {
    TextCleaner::default().clean(app_id, text)
}

/// Word-count histogram: `counts[i]` holds documents with length in
/// `[i * bin_width, (i + 1) * bin_width)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LengthHistogram {
    pub bin_width: usize,
    pub counts: Vec<usize>,
}

impl LengthHistogram {
    fn of(lengths: impl Iterator<Item = usize>, bin_width: usize) -> Self {
        let mut counts = Vec::new();
        for len in lengths {
            let bin = len / bin_width;
            if counts.len() <= bin {
                counts.resize(bin + 1, 0);
            }
            counts[bin] += 1;
        }
        LengthHistogram { bin_width, counts }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LengthFilter {
    pub kept: Vec<TokenizedDoc>,
    pub excluded: Vec<(String, Exclusion)>,
    pub before: LengthHistogram,
    pub after: LengthHistogram,
}

/// Keeps documents with `min_words <= len <= max_words`.
pub fn filter_by_length(
    docs: Vec<TokenizedDoc>,
    min_words: usize,
    max_words: usize,
    bin_width: usize,
) -> LengthFilter {
    let before = LengthHistogram::of(docs.iter().map(|d| d.tokens.len()), bin_width);
    let mut kept = Vec::new();
    let mut excluded = Vec::new();
    for d in docs {
        let n = d.tokens.len();
        if n < min_words {
            excluded.push((d.app_id, Exclusion::TooShort));
        } else if n > max_words {
            excluded.push((d.app_id, Exclusion::TooLong));
        } else {
            kept.push(d);
        }
    }
    let after = LengthHistogram::of(kept.iter().map(|d| d.tokens.len()), bin_width);
    LengthFilter {
        kept,
        excluded,
        before,
        after,
    }
}

/// Term dictionary with document frequencies. Terms iterate in lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Vocabulary {
    df: BTreeMap<String, usize>,
    n_docs: usize,
}

impl Vocabulary {
    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn len(&self) -> usize {
        self.df.len()
    }

    pub fn is_empty(&self) -> bool {
        self.df.is_empty()
    }

    pub fn df(&self, term: &str) -> Option<usize> {
        self.df.get(term).copied()
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.df.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, usize)> {
        self.df.iter().map(|(k, &v)| (k.as_str(), v))
    }

    /// Column index of every term, in term order.
    pub fn index(&self) -> BTreeMap<&str, usize> {
        self.terms().enumerate().map(|(i, t)| (t, i)).collect()
    }

    /// Merges the counts of two vocabularies built over disjoint document sets.
    pub fn merge(mut self, other: Vocabulary) -> Vocabulary {
        for (t, c) in other.df {
            *self.df.entry(t).or_insert(0) += c;
        }
        self.n_docs += other.n_docs;
        self
    }
}

pub fn build_vocabulary(docs: &[TokenizedDoc]) -> Vocabulary {
    let mut df = BTreeMap::new();
    for d in docs {
        let unique: BTreeSet<&str> = d.tokens.iter().map(String::as_str).collect();
        for t in unique {
            *df.entry(t.to_string()).or_insert(0) += 1;
        }
    }
    Vocabulary {
        df,
        n_docs: docs.len(),
    }
}

fn retained(df: usize, n_docs: usize, threshold_min: f64, threshold_max: f64) -> bool {
    let share = df as f64 / n_docs as f64;
    share >= threshold_min && share <= threshold_max
}

pub fn check_thresholds(threshold_min: f64, threshold_max: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&threshold_min)
        || !(0.0..=1.0).contains(&threshold_max)
        || threshold_min >= threshold_max
    {
        return Err(NicheError::Parameter(format!(
            "thresholds must satisfy 0 <= min < max <= 1, got ({threshold_min}, {threshold_max})"
        )));
    }
    Ok(())
}

/// Keeps terms with `threshold_min <= df/N <= threshold_max` (both bounds inclusive).
pub fn prune_vocabulary(
    vocab: &Vocabulary,
    threshold_min: f64,
    threshold_max: f64,
) -> Result<Vocabulary> {
    check_thresholds(threshold_min, threshold_max)?;
    let df: BTreeMap<String, usize> = vocab
        .df
        .iter()
        .filter(|(_, &c)| retained(c, vocab.n_docs, threshold_min, threshold_max))
        .map(|(t, &c)| (t.clone(), c))
        .collect();
    if df.is_empty() {
        return Err(NicheError::Data("vocabulary empty after pruning".into()));
    }
    Ok(Vocabulary {
        df,
        n_docs: vocab.n_docs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub threshold_min: f64,
    pub threshold_max: f64,
    pub columns: usize,
}

/// Retained column count at every (min, max) grid pair with min < max.
pub fn threshold_sweep(
    vocab: &Vocabulary,
    min_grid: &[f64],
    max_grid: &[f64],
) -> Result<Vec<SweepRow>> {
    if min_grid.is_empty() || max_grid.is_empty() {
        return Err(NicheError::Parameter(
            "threshold grids must be nonempty".into(),
        ));
    }
    let mut rows = Vec::new();
    for &tmax in max_grid {
        for &tmin in min_grid {
            if check_thresholds(tmin, tmax).is_err() {
                continue;
            }
            let columns = vocab
                .df
                .values()
                .filter(|&&c| retained(c, vocab.n_docs, tmin, tmax))
                .count();
            rows.push(SweepRow {
                threshold_min: tmin,
                threshold_max: tmax,
                columns,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: &str, toks: &[&str]) -> TokenizedDoc {
        TokenizedDoc {
            app_id: id.into(),
            tokens: toks.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn clean_example() {
        let d = clean_description("a", "Running, runs, ran 123!").unwrap();
        assert_eq!(d.tokens, vec!["run", "run", "ran"]);
    }

    #[test]
    fn clean_rejections() {
        assert_eq!(clean_description("a", ""), Err(Exclusion::Empty));
        assert_eq!(clean_description("a", "123 !!"), Err(Exclusion::Empty));
        assert_eq!(
            clean_description("a", "这是一个非常好的应用程序"),
            Err(Exclusion::NonEnglish)
        );
    }

    #[test]
    fn stemming_reaches_fixpoint() {
        let c = TextCleaner::default();
        let s = c.stem("agreed");
        assert_eq!(c.stem(&s), s);
    }

    #[test]
    fn length_bounds_inclusive() {
        let mk = |n: usize| doc(&n.to_string(), &vec!["w"; n]);
        let f = filter_by_length(vec![mk(19), mk(20), mk(400), mk(401)], 20, 400, 20);
        let kept: Vec<usize> = f.kept.iter().map(|d| d.tokens.len()).collect();
        assert_eq!(kept, vec![20, 400]);
        assert_eq!(f.excluded.len(), 2);
        assert_eq!(f.before.counts.iter().sum::<usize>(), 4);
        assert_eq!(f.after.counts.iter().sum::<usize>(), 2);
    }

    #[test]
    fn tiny_vocabulary() {
        let v = build_vocabulary(&[doc("1", &["a", "b"]), doc("2", &["b", "c"])]);
        assert_eq!(v.terms().collect::<Vec<_>>(), vec!["a", "b", "c"]);
        assert_eq!(
            (v.df("a"), v.df("b"), v.df("c")),
            (Some(1), Some(2), Some(1))
        );
    }

    #[test]
    fn duplicated_doc_doubles_df() {
        let d = doc("1", &["a", "a", "b"]);
        let v1 = build_vocabulary(std::slice::from_ref(&d));
        let v2 = build_vocabulary(&[d.clone(), d]);
        assert_eq!(
            v1.terms().collect::<Vec<_>>(),
            v2.terms().collect::<Vec<_>>()
        );
        for (t, c) in v1.iter() {
            assert_eq!(v2.df(t), Some(2 * c));
        }
    }

    #[test]
    fn prune_boundaries() {
        let mut docs: Vec<TokenizedDoc> = (0..1000).map(|i| doc(&i.to_string(), &["z"])).collect();
        for d in docs.iter_mut().take(700) {
            d.tokens.push("common".into());
        }
        docs[0].tokens.push("rare".into());
        let v = build_vocabulary(&docs);
        let p = prune_vocabulary(&v, 0.004, 0.7).unwrap();
        assert_eq!(p.df("common"), Some(700));
        assert_eq!(p.df("rare"), None);
        assert_eq!(p.df("z"), None);
        let all = prune_vocabulary(&v, 0.0, 1.0).unwrap();
        assert_eq!(all, v);
    }

    #[test]
    fn prune_to_nothing_errors() {
        let v = build_vocabulary(&[doc("1", &["a"])]);
        assert!(prune_vocabulary(&v, 0.0, 0.5).is_err());
        assert!(prune_vocabulary(&v, 0.5, 0.5).is_err());
    }

    #[test]
    fn merge_equals_joint_build() {
        let a = [doc("1", &["x", "y"]), doc("2", &["y"])];
        let b = [doc("3", &["y", "z"])];
        let joint: Vec<_> = a.iter().chain(b.iter()).cloned().collect();
        assert_eq!(
            build_vocabulary(&a).merge(build_vocabulary(&b)),
            build_vocabulary(&joint)
        );
    }
}

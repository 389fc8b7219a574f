use std::collections::{BTreeMap, HashMap};
use std::io::BufRead;

use super::TextprepError;

static ENGLISH_TSV: &str = include_str!("../../data/lexicon_en.tsv");

/// Unigram counts backing hashtag segmentation and spelling correction.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    counts: HashMap<String, u64>,
    total: u64,
    by_len: BTreeMap<usize, Vec<String>>,
}

impl Lexicon {
    pub fn from_counts<I, S>(entries: I) -> Result<Self, TextprepError>
    where
        I: IntoIterator<Item = (S, u64)>,
        S: Into<String>,
    {
        let mut counts: HashMap<String, u64> = HashMap::new();
        for (word, count) in entries {
            let word = word.into();
            if word.is_empty() {
                return Err(TextprepError::BadLexicon("empty word".into()));
            }
            if count == 0 {
                return Err(TextprepError::BadLexicon(format!("zero count for {word:?}")));
            }
            *counts.entry(word).or_default() += count;
        }
        let total = counts.values().sum();
        let mut by_len: BTreeMap<usize, Vec<String>> = BTreeMap::new();
        for w in counts.keys() {
            by_len.entry(w.chars().count()).or_default().push(w.clone());
        }
        for v in by_len.values_mut() {
            v.sort();
        }
        Ok(Self { counts, total, by_len })
    }

    /// Reads `word<TAB>count` lines. Blank lines are skipped; repeated words
    /// have their counts summed.
    pub fn from_tsv<R: BufRead>(reader: R) -> Result<Self, TextprepError> {
        let mut entries = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| TextprepError::Io(e.to_string()))?;
            let line = line.trim_end_matches(['\r', '\n']);
            if line.trim().is_empty() {
                continue;
            }
            let (word, count) = line
                .split_once('\t')
                .ok_or_else(|| TextprepError::BadLexicon(format!("line {}: missing tab", i + 1)))?;
            let count: u64 = count
                .trim()
                .parse()
                .map_err(|_| TextprepError::BadLexicon(format!("line {}: bad count", i + 1)))?;
            entries.push((word.to_string(), count));
        }
        Self::from_counts(entries)
    }

    /// The bundled English unigram list (25k words).
    pub fn english() -> Self {
        Self::from_tsv(ENGLISH_TSV.as_bytes()).expect("bundled lexicon parses")
    }

    pub fn count(&self, word: &str) -> u64 {
        self.counts.get(word).copied().unwrap_or(0)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.counts.contains_key(word)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Words whose length in chars lies in `lo..=hi`, grouped by length.
    pub(crate) fn words_with_len(&self, lo: usize, hi: usize) -> impl Iterator<Item = &String> {
        self.by_len.range(lo..=hi).flat_map(|(_, ws)| ws.iter())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.counts.iter().map(|(w, c)| (w.as_str(), *c))
    }
}

//! Informal-text preprocessing: tokenize, normalize, segment hashtags,
//! spell-correct and filter stopwords.

mod emoji;
mod lexicon;
mod normalize;
mod segment;
mod spell;
mod tokenize;

use std::collections::HashSet;
use std::io::BufRead;

pub use emoji::{emoticon_name, EmojiTable, UNKNOWN_EMOJI};
pub use lexicon::Lexicon;
pub use normalize::{
    is_tag, remove_stopwords, tag_for, NormalizePolicy, NormalizedDoc, NormalizedToken,
    Preprocessor, Provenance,
};
pub use segment::{segment_hashtag, segment_scored, ExactProb};
pub use spell::{correct_spelling, osa_distance_bounded};
pub use tokenize::{tokenize, Token, TokenKind};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TextprepError {
    #[error("empty input")]
    EmptyInput,
    #[error("malformed lexicon: {0}")]
    BadLexicon(String),
    #[error("malformed emoji table: {0}")]
    BadEmojiTable(String),
    #[error("i/o error: {0}")]
    Io(String),
}

static ENGLISH_STOPWORDS: &str = include_str!("../../data/stopwords_en.txt");

/// Reads a stoplist, one word per line.
pub fn load_stoplist<R: BufRead>(reader: R) -> Result<HashSet<String>, TextprepError> {
    let mut set = HashSet::new();
    for line in reader.lines() {
        let line = line.map_err(|e| TextprepError::Io(e.to_string()))?;
        let w = line.trim();
        if !w.is_empty() {
            set.insert(w.to_string());
        }
    }
    Ok(set)
}

/// The bundled English stoplist (function words plus punctuation).
pub fn english_stoplist() -> HashSet<String> {
    load_stoplist(ENGLISH_STOPWORDS.as_bytes()).expect("bundled stoplist parses")
}

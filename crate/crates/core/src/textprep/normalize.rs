use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::emoji::{emoticon_name, EmojiTable};
use super::tokenize::{tokenize, Token, TokenKind};
use super::{correct_spelling, segment_hashtag, Lexicon};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Verbatim,
    Lowercased,
    TagReplaced,
    Segmented,
    SpellCorrected,
    EmojiWorded,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizedToken {
    pub normal: String,
    /// Index into [`NormalizedDoc::source`].
    pub origin: usize,
    pub provenance: Provenance,
}

/// Normalized token stream of one post, aligned to its raw tokens.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct NormalizedDoc {
    pub post_id: String,
    pub source: Vec<Token>,
    pub tokens: Vec<NormalizedToken>,
}

impl NormalizedDoc {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.normal.as_str())
    }

    /// Byte span in the raw text covered by normalized tokens `range`.
    pub fn byte_span(&self, range: std::ops::Range<usize>) -> Option<(usize, usize)> {
        let first = self.tokens.get(range.start)?;
        let last = self.tokens.get(range.end.checked_sub(1)?)?;
        Some((self.source[first.origin].start, self.source[last.origin].end))
    }

    /// A sub-document holding tokens `range`; origins still index `source`.
    pub fn slice(&self, range: std::ops::Range<usize>) -> NormalizedDoc {
        NormalizedDoc {
            post_id: self.post_id.clone(),
            source: self.source.clone(),
            tokens: self.tokens[range].to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct NormalizePolicy {
    /// Replace emoji and emoticons with word names.
    pub emoji_words: bool,
    pub segment_hashtags: bool,
    /// Spell-correct alphabetic words of at least three characters.
    pub spell_correct: bool,
}

impl Default for NormalizePolicy {
    fn default() -> Self {
        Self { emoji_words: true, segment_hashtags: true, spell_correct: false }
    }
}

/// Replacement tag for volatile token kinds.
pub fn tag_for(kind: TokenKind) -> Option<&'static str> {
    Some(match kind {
        TokenKind::Mention => "<user>",
        TokenKind::Url => "<url>",
        TokenKind::Email => "<email>",
        TokenKind::Phone => "<phone>",
        TokenKind::Date => "<date>",
        TokenKind::Time => "<time>",
        TokenKind::Currency => "<money>",
        TokenKind::Number => "<number>",
        _ => return None,
    })
}

pub fn is_tag(s: &str) -> bool {
    s.len() > 2 && s.starts_with('<') && s.ends_with('>')
}

/// Tokenizer plus normalization resources. Immutable once built.
#[derive(Debug, Clone)]
pub struct Preprocessor {
    pub lexicon: Lexicon,
    pub emoji: EmojiTable,
    pub policy: NormalizePolicy,
}

impl Default for Preprocessor {
    fn default() -> Self {
        Self::english(NormalizePolicy::default())
    }
}

impl Preprocessor {
    pub fn english(policy: NormalizePolicy) -> Self {
        Self { lexicon: Lexicon::english(), emoji: EmojiTable::english(), policy }
    }

    pub fn process(&self, post_id: &str, raw: &str) -> NormalizedDoc {
        self.normalize(post_id, tokenize(raw))
    }

    pub fn normalize(&self, post_id: &str, tokens: Vec<Token>) -> NormalizedDoc {
        let mut out = Vec::with_capacity(tokens.len());
        for (origin, tok) in tokens.iter().enumerate() {
            let mut push = |normal: String, provenance| {
                if !normal.is_empty() {
                    out.push(NormalizedToken { normal, origin, provenance });
                }
            };
            if let Some(tag) = tag_for(tok.kind) {
                push(tag.to_string(), Provenance::TagReplaced);
                continue;
            }
            match tok.kind {
                TokenKind::Word => {
                    let (w, p) = self.word(&tok.surface);
                    push(w, p);
                }
                TokenKind::Emphasized => {
                    let (w, p) = self.word(tok.surface.trim_matches('*'));
                    push(w, p);
                }
                TokenKind::Hashtag => {
                    let body = tok.surface.trim_start_matches('#').to_lowercase();
                    if !self.policy.segment_hashtags {
                        push(body, Provenance::Lowercased);
                        continue;
                    }
                    for part in body.split('_').filter(|p| !p.is_empty()) {
                        for w in segment_hashtag(part, &self.lexicon).expect("non-empty part") {
                            push(w, Provenance::Segmented);
                        }
                    }
                }
                TokenKind::Emoji | TokenKind::Emoticon if self.policy.emoji_words => {
                    let name = match tok.kind {
                        TokenKind::Emoji => self.emoji.name(&tok.surface),
                        _ => emoticon_name(&tok.surface),
                    };
                    for w in name.split_whitespace() {
                        push(w.to_string(), Provenance::EmojiWorded);
                    }
                }
                _ => push(tok.surface.clone(), Provenance::Verbatim),
            }
        }
        NormalizedDoc { post_id: post_id.to_string(), source: tokens, tokens: out }
    }

    fn word(&self, surface: &str) -> (String, Provenance) {
        let lower = surface.to_lowercase();
        if self.policy.spell_correct
            && lower.chars().count() >= 3
            && lower.chars().all(char::is_alphabetic)
        {
            let fixed = correct_spelling(&lower, &self.lexicon);
            if fixed != lower {
                return (fixed, Provenance::SpellCorrected);
            }
        }
        (lower, Provenance::Lowercased)
    }
}

/// Drops stopwords and replacement tags, preserving order.
pub fn remove_stopwords(doc: &NormalizedDoc, stoplist: &HashSet<String>) -> NormalizedDoc {
    NormalizedDoc {
        post_id: doc.post_id.clone(),
        source: doc.source.clone(),
        tokens: doc
            .tokens
            .iter()
            .filter(|t| !is_tag(&t.normal) && !stoplist.contains(&t.normal))
            .cloned()
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textprep::english_stoplist;

    fn normals(p: &Preprocessor, raw: &str) -> Vec<String> {
        p.process("p", raw).tokens.into_iter().map(|t| t.normal).collect()
    }

    #[test]
    fn mention_becomes_user_tag() {
        let d = Preprocessor::default().process("p", "@user1");
        assert_eq!(d.tokens.len(), 1);
        assert_eq!(d.tokens[0].normal, "<user>");
        assert_eq!(d.tokens[0].provenance, Provenance::TagReplaced);
    }

    #[test]
    fn words_are_lowercased() {
        let d = Preprocessor::default().process("p", "HELLO");
        assert_eq!(d.tokens[0].normal, "hello");
        assert_eq!(d.tokens[0].provenance, Provenance::Lowercased);
    }

    #[test]
    fn hashtag_segments_share_origin() {
        let d = Preprocessor::default().process("p", "#makeitrain");
        let got: Vec<_> = d.tokens.iter().map(|t| (t.normal.as_str(), t.origin)).collect();
        assert_eq!(got, vec![("make", 0), ("it", 0), ("rain", 0)]);
        assert!(d.tokens.iter().all(|t| t.provenance == Provenance::Segmented));
    }

    #[test]
    fn censored_verbatim_emphasis_unwrapped_emoticons_worded() {
        let p = Preprocessor::default();
        assert_eq!(normals(&p, "s**t *VERY* :)"), vec!["s**t", "very", "smile"]);
        let raw = Preprocessor::english(NormalizePolicy { emoji_words: false, ..Default::default() });
        assert_eq!(normals(&raw, ":) 😂"), vec![":)", "😂"]);
    }

    #[test]
    fn spell_correction_only_when_enabled() {
        let on = Preprocessor::english(NormalizePolicy { spell_correct: true, ..Default::default() });
        assert_eq!(normals(&on, "teh restaurnt is ok"), vec!["the", "restaurant", "is", "ok"]);
        let off = Preprocessor::default();
        assert_eq!(normals(&off, "teh"), vec!["teh"]);
    }

    #[test]
    fn origins_are_monotone() {
        let d = Preprocessor::default().process("p", "@a #lovesrilanka :) http://x.y 😂 ok");
        assert!(d.tokens.windows(2).all(|w| w[0].origin <= w[1].origin));
        assert!(d.tokens.iter().all(|t| t.origin < d.source.len()));
    }

    #[test]
    fn stopword_removal() {
        let stop = english_stoplist();
        let p = Preprocessor::default();
        let d = p.process("p", "the food is great");
        let kept: Vec<_> = remove_stopwords(&d, &stop).words().map(String::from).collect();
        assert_eq!(kept, vec!["food", "great"]);
        assert!(remove_stopwords(&p.process("p", "the is a"), &stop).is_empty());
        assert!(remove_stopwords(&p.process("p", ""), &stop).is_empty());
        assert!(remove_stopwords(&p.process("p", "@bob 12"), &stop).is_empty());
    }
}

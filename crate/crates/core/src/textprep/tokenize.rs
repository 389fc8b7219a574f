//! Social-media aware tokenizer.
//!
//! At every non-whitespace position each rule is tried anchored; the longest
//! match wins and equal-length matches go to the rule listed first in
//! [`TokenKind::PRIORITY`]. Anything no rule covers becomes a one-character
//! punctuation token, so the tokenizer is total over UTF-8 input.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenKind {
    Word,
    Hashtag,
    Mention,
    Url,
    Email,
    Phone,
    Number,
    Currency,
    Date,
    Time,
    Emoji,
    Emoticon,
    Censored,
    Emphasized,
    Punct,
}

impl TokenKind {
    /// Rule order used to break ties between equally long matches.
    pub const PRIORITY: [TokenKind; 15] = [
        TokenKind::Url,
        TokenKind::Email,
        TokenKind::Phone,
        TokenKind::Mention,
        TokenKind::Hashtag,
        TokenKind::Emoticon,
        TokenKind::Emoji,
        TokenKind::Date,
        TokenKind::Time,
        TokenKind::Currency,
        TokenKind::Censored,
        TokenKind::Emphasized,
        TokenKind::Number,
        TokenKind::Word,
        TokenKind::Punct,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub kind: TokenKind,
    pub surface: String,
    /// Byte offset of the first byte in the raw text.
    pub start: usize,
    /// Byte offset one past the last byte.
    pub end: usize,
}

struct Rules {
    url: Regex,
    email: Regex,
    phone: Regex,
    mention: Regex,
    hashtag: Regex,
    emoticon: Regex,
    date: Regex,
    time: Regex,
    currency: Regex,
    censored: Regex,
    emphasized: Regex,
    number: Regex,
    word: Regex,
}

static RULES: LazyLock<Rules> = LazyLock::new(|| {
    let re = |p: &str| Regex::new(p).expect("tokenizer rule compiles");
    Rules {
        url: re(r"^(?:[A-Za-z][A-Za-z0-9+.\-]*://|www\.)\S+"),
        email: re(r"^[A-Za-z0-9._%+\-]+@[A-Za-z0-9\-]+(?:\.[A-Za-z0-9\-]+)*\.[A-Za-z]{2,}"),
        phone: re(concat!(
            r"^(?:\+\d{1,3}[\-.]?)?(?:\(\d{2,4}\)[\-.]?|\d{2,4}[\-.])\d{3,4}[\-.]\d{3,4}",
            r"|^\+\d{9,15}"
        )),
        mention: re(r"^@[A-Za-z0-9_]+"),
        hashtag: re(r"^#[\p{L}\p{M}\p{N}_]+"),
        emoticon: re(concat!(
            r#"^(?:[<>]?[:;=][\-o*'^]?[)\](\[dDpP/\\|oO3*@$]"#,
            r"|</3|<3|\^_*\^|-_+-|[xX]D\b|:'[()])"
        )),
        date: re(concat!(
            r"^(?:\d{4}-\d{1,2}-\d{1,2}|\d{4}/\d{1,2}/\d{1,2}",
            r"|\d{1,2}[/\-]\d{1,2}[/\-](?:\d{4}|\d{2}))\b"
        )),
        time: re(concat!(
            r"^(?:\d{1,2}:\d{2}(?::\d{2})?(?:[aApP]\.?[mM]\.?)?",
            r"|\d{1,2}[aApP]\.?[mM]\.?)\b"
        )),
        currency: re(concat!(
            r"^(?:[$€£¥₹]\d+(?:[.,]\d+)*[kKmM]?\b",
            r"|\d+(?:[.,]\d+)*[$€£¥₹]",
            r"|(?:USD|LKR|EUR|GBP|Rs\.?)\d+(?:[.,]\d+)*)"
        )),
        censored: re(r"^\p{L}\*{2,}\p{L}*"),
        emphasized: re(r"^\*[\p{L}\p{M}\p{N}'’]+\*"),
        number: re(r"^\d+(?:[.,]\d+)*"),
        word: re(concat!(
            r"^(?:(?:\p{L}\.){2,}",
            r"|[\p{L}\p{M}\p{N}_]+(?:['’\-][\p{L}\p{M}\p{N}_]+)*)"
        )),
    }
});

const URL_TRAILING: &[char] = &['.', ',', ';', ':', '!', '?', ')', ']', '}', '\'', '"'];

fn url_len(rest: &str) -> Option<usize> {
    let m = RULES.url.find(rest)?;
    let trimmed = m.as_str().trim_end_matches(URL_TRAILING);
    // "www." alone or a bare scheme is not a url
    let min = if trimmed.starts_with("www.") { 5 } else { trimmed.find("://")? + 4 };
    (trimmed.len() >= min).then_some(trimmed.len())
}

fn is_emoji_base(c: char) -> bool {
    matches!(c as u32,
        0x1F300..=0x1F5FF
        | 0x1F600..=0x1F64F
        | 0x1F680..=0x1F6FF
        | 0x1F900..=0x1F9FF
        | 0x1FA70..=0x1FAFF
        | 0x2600..=0x26FF
        | 0x2700..=0x27BF
        | 0x2B50 | 0x2B55 | 0x2B1B | 0x2B1C
        | 0x2190..=0x21FF
        | 0x2300..=0x23FF
        | 0x1F000..=0x1F02F
        | 0x1F0A0..=0x1F0FF
        | 0x3030 | 0x303D | 0x3297 | 0x3299)
}

fn is_regional_indicator(c: char) -> bool {
    (0x1F1E6..=0x1F1FF).contains(&(c as u32))
}

fn is_emoji_modifier(c: char) -> bool {
    matches!(c as u32, 0xFE0F | 0xFE0E | 0x1F3FB..=0x1F3FF | 0x20E3)
}

/// Length in bytes of one emoji sequence at the start of `rest`: a base
/// pictograph (or a regional-indicator pair) with trailing modifiers, joined
/// to further pictographs by zero-width joiners.
fn emoji_len(rest: &str) -> Option<usize> {
    let mut chars = rest.char_indices().peekable();
    let (_, first) = chars.next()?;
    let mut end = first.len_utf8();
    if is_regional_indicator(first) {
        if let Some(&(i, c)) = chars.peek() {
            if is_regional_indicator(c) {
                return Some(i + c.len_utf8());
            }
        }
        return Some(end);
    }
    if !is_emoji_base(first) {
        return None;
    }
    loop {
        while let Some(&(i, c)) = chars.peek() {
            if is_emoji_modifier(c) {
                end = i + c.len_utf8();
                chars.next();
            } else {
                break;
            }
        }
        match chars.peek() {
            Some(&(_, '\u{200D}')) => {
                chars.next();
                match chars.peek() {
                    Some(&(i, c)) if is_emoji_base(c) => {
                        end = i + c.len_utf8();
                        chars.next();
                    }
                    _ => break,
                }
            }
            _ => break,
        }
    }
    Some(end)
}

fn rule_len(kind: TokenKind, rest: &str) -> Option<usize> {
    let r = &*RULES;
    let by = |re: &Regex| re.find(rest).map(|m| m.end());
    match kind {
        TokenKind::Url => url_len(rest),
        TokenKind::Email => by(&r.email),
        TokenKind::Phone => by(&r.phone),
        TokenKind::Mention => by(&r.mention),
        TokenKind::Hashtag => by(&r.hashtag),
        TokenKind::Emoticon => by(&r.emoticon),
        TokenKind::Emoji => emoji_len(rest),
        TokenKind::Date => by(&r.date),
        TokenKind::Time => by(&r.time),
        TokenKind::Currency => by(&r.currency),
        TokenKind::Censored => by(&r.censored),
        TokenKind::Emphasized => by(&r.emphasized),
        TokenKind::Number => by(&r.number),
        TokenKind::Word => by(&r.word),
        TokenKind::Punct => rest.chars().next().map(char::len_utf8),
    }
    .filter(|&n| n > 0)
}

/// Splits `raw` into typed tokens with byte spans into `raw`.
pub fn tokenize(raw: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut pos = 0;
    while pos < raw.len() {
        let rest = &raw[pos..];
        let c = rest.chars().next().expect("pos is on a char boundary");
        if c.is_whitespace() {
            pos += c.len_utf8();
            continue;
        }
        let mut best: Option<(TokenKind, usize)> = None;
        for kind in TokenKind::PRIORITY {
            if let Some(len) = rule_len(kind, rest) {
                if best.is_none_or(|(_, b)| len > b) {
                    best = Some((kind, len));
                }
            }
        }
        let (kind, len) = best.expect("punct always matches");
        tokens.push(Token {
            kind,
            surface: rest[..len].to_string(),
            start: pos,
            end: pos + len,
        });
        pos += len;
    }
    tokens
}

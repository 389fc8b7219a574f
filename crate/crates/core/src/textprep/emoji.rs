use std::collections::HashMap;
use std::io::BufRead;

use super::TextprepError;

static ENGLISH_TSV: &str = include_str!("../../data/emoji_en.tsv");

/// Word names for emoji, keyed by codepoint sequence.
#[derive(Debug, Clone, Default)]
pub struct EmojiTable {
    names: HashMap<String, String>,
}

pub const UNKNOWN_EMOJI: &str = "<emoji>";

impl EmojiTable {
    /// Reads `codepoint-sequence<TAB>word` lines, codepoints written as
    /// space-separated hex (`1F602`, `2764 FE0F`).
    pub fn from_tsv<R: BufRead>(reader: R) -> Result<Self, TextprepError> {
        let mut names = HashMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| TextprepError::Io(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |why: &str| TextprepError::BadEmojiTable(format!("line {}: {why}", i + 1));
            let (cps, word) = line.split_once('\t').ok_or_else(|| bad("missing tab"))?;
            let mut seq = String::new();
            for hex in cps.split_whitespace() {
                let cp = u32::from_str_radix(hex, 16).map_err(|_| bad("bad hex"))?;
                seq.push(char::from_u32(cp).ok_or_else(|| bad("not a scalar value"))?);
            }
            let word = word.trim();
            if seq.is_empty() || word.is_empty() {
                return Err(bad("empty field"));
            }
            names.entry(seq).or_insert_with(|| word.to_string());
        }
        Ok(Self { names })
    }

    pub fn english() -> Self {
        Self::from_tsv(ENGLISH_TSV.as_bytes()).expect("bundled emoji table parses")
    }

    /// Name for an emoji sequence. Falls back to the sequence without
    /// presentation selectors and skin tones, then to its first codepoint,
    /// then to `<emoji>`.
    pub fn name(&self, emoji: &str) -> &str {
        if let Some(n) = self.names.get(emoji) {
            return n;
        }
        let stripped: String = emoji
            .chars()
            .filter(|c| !matches!(*c as u32, 0xFE0E | 0xFE0F | 0x1F3FB..=0x1F3FF))
            .collect();
        if let Some(n) = self.names.get(&stripped) {
            return n;
        }
        if let Some(first) = stripped.chars().next() {
            if let Some(n) = self.names.get(first.encode_utf8(&mut [0; 4]) as &str) {
                return n;
            }
        }
        UNKNOWN_EMOJI
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Word name for an ASCII emoticon.
pub fn emoticon_name(emoticon: &str) -> &'static str {
    match emoticon {
        "<3" => return "heart",
        "</3" => return "heartbreak",
        "xD" | "XD" => return "laugh",
        ":'(" => return "cry",
        ":')" => return "joy",
        s if s.starts_with('^') => return "happy",
        s if s.starts_with('-') => return "annoyed",
        _ => {}
    }
    let angry = emoticon.starts_with('>');
    let eyes = emoticon.trim_start_matches(['<', '>']);
    let wink = eyes.starts_with(';');
    let mouth = eyes.chars().last().unwrap_or(' ');
    if angry {
        return "angry";
    }
    match mouth {
        ')' | ']' if wink => "wink",
        ')' | ']' => "smile",
        'D' => "laugh",
        '(' | '[' => "sad",
        'p' | 'P' | 'd' => "tongue",
        'o' | 'O' => "surprise",
        '/' | '\\' => "annoyed",
        '|' => "neutral",
        '*' => "kiss",
        '@' => "angry",
        '3' => "cute",
        '$' => "embarrassed",
        _ => "<emoticon>",
    }
}

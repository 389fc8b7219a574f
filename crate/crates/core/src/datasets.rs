//! Readers for gold-labeled training and evaluation data, and their
//! conversion to token-level examples.

use std::collections::BTreeSet;
use std::io::BufRead;
use std::ops::Range;
use std::path::Path;

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use serde::{Deserialize, Serialize};

use crate::aspect::{encode_spans, Tag};
use crate::emotion::Emotion;
use crate::sentiment::{SentimentLabel, SentimentSample};
use crate::textprep::{NormalizedDoc, Preprocessor};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DatasetError {
    #[error("{path}:{line}: {why}")]
    Parse { path: String, line: usize, why: String },
    #[error("i/o error: {0}")]
    Io(String),
}

fn parse_err(path: &str, line: usize, why: impl ToString) -> DatasetError {
    DatasetError::Parse { path: path.to_string(), line, why: why.to_string() }
}

/// Character offsets `[start_char, end_char)` into a raw text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CharSpan {
    pub start_char: usize,
    pub end_char: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AspectGold {
    pub text: String,
    pub aspects: Vec<CharSpan>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentimentGold {
    pub text: String,
    pub aspect: CharSpan,
    pub label: SentimentLabel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmotionGold {
    pub id: String,
    pub text: String,
    pub labels: [bool; 11],
}

impl EmotionGold {
    pub fn label_set(&self) -> BTreeSet<Emotion> {
        Emotion::ALL.into_iter().filter(|e| self.labels[e.index()]).collect()
    }
}

fn read_jsonl<T: for<'de> Deserialize<'de>, R: BufRead>(reader: R, name: &str) -> Result<Vec<T>, DatasetError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| DatasetError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| parse_err(name, i + 1, e))?);
    }
    Ok(out)
}

pub fn read_aspect_jsonl<R: BufRead>(reader: R) -> Result<Vec<AspectGold>, DatasetError> {
    read_jsonl(reader, "<aspect jsonl>")
}

pub fn read_sentiment_jsonl<R: BufRead>(reader: R) -> Result<Vec<SentimentGold>, DatasetError> {
    read_jsonl(reader, "<sentiment jsonl>")
}

/// `id<TAB>text<TAB>` followed by one 0/1 column per emotion. A header row
/// naming the emotions, if present, fixes the column order.
pub fn read_emotion_tsv<R: BufRead>(reader: R) -> Result<Vec<EmotionGold>, DatasetError> {
    let name = "<emotion tsv>";
    let mut order: Vec<Option<Emotion>> = Emotion::ALL.into_iter().map(Some).collect();
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| DatasetError::Io(e.to_string()))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 3 {
            return Err(parse_err(name, i + 1, "expected id, text and label columns"));
        }
        let flags = &cols[2..];
        if i == 0 && flags.iter().any(|c| Emotion::parse(c).is_some()) {
            order = flags.iter().map(|c| Emotion::parse(c)).collect();
            continue;
        }
        if flags.len() != order.len() {
            return Err(parse_err(name, i + 1, format!("expected {} label columns, found {}", order.len(), flags.len())));
        }
        let mut labels = [false; 11];
        for (flag, e) in flags.iter().zip(&order) {
            let on = match flag.trim() {
                "1" => true,
                "0" => false,
                other => return Err(parse_err(name, i + 1, format!("label value {other:?}"))),
            };
            if let (true, Some(e)) = (on, e) {
                labels[e.index()] = true;
            }
        }
        out.push(EmotionGold { id: cols[0].to_string(), text: cols[1].to_string(), labels });
    }
    Ok(out)
}

fn attr(e: &BytesStart<'_>, key: &str) -> Option<String> {
    e.attributes()
        .flatten()
        .find(|a| a.key.as_ref() == key.as_bytes())
        .and_then(|a| a.unescape_value().ok().map(|v| v.into_owned()))
}

/// One annotated sentence of a review-site XML file.
#[derive(Debug, Clone, PartialEq)]
pub struct XmlSentence {
    pub text: String,
    /// `(span, polarity)`; polarity is absent when the file has none.
    pub opinions: Vec<(CharSpan, Option<SentimentLabel>)>,
}

/// Reads `<sentence><text/>` elements with `<Opinion target from to
/// polarity>` or `<aspectTerm from to polarity>` children. Opinions with a
/// `NULL` target are implicit and skipped.
pub fn read_review_xml(xml: &str) -> Result<Vec<XmlSentence>, DatasetError> {
    let mut reader = Reader::from_str(xml);
    let mut out = Vec::new();
    let mut current: Option<XmlSentence> = None;
    let mut in_text = false;
    loop {
        let ev = reader.read_event().map_err(|e| parse_err("<xml>", reader.buffer_position() as usize, e))?;
        match ev {
            Event::Start(e) if e.name().as_ref() == b"sentence" => {
                current = Some(XmlSentence { text: String::new(), opinions: Vec::new() });
            }
            Event::Start(e) if e.name().as_ref() == b"text" => in_text = true,
            Event::End(e) if e.name().as_ref() == b"text" => in_text = false,
            Event::Text(t) if in_text => {
                if let Some(s) = current.as_mut() {
                    let txt = t.unescape().map_err(|e| parse_err("<xml>", 0, e))?;
                    s.text.push_str(&txt);
                }
            }
            Event::Empty(e) | Event::Start(e)
                if matches!(e.name().as_ref(), b"Opinion" | b"aspectTerm") =>
            {
                let (Some(s), Some(from), Some(to)) = (current.as_mut(), attr(&e, "from"), attr(&e, "to")) else {
                    continue;
                };
                if attr(&e, "target").as_deref() == Some("NULL") {
                    continue;
                }
                let (Ok(from), Ok(to)) = (from.parse::<usize>(), to.parse::<usize>()) else { continue };
                if from >= to {
                    continue;
                }
                let pol = attr(&e, "polarity").and_then(|p| SentimentLabel::parse(&p));
                s.opinions.push((CharSpan { start_char: from, end_char: to }, pol));
            }
            Event::End(e) if e.name().as_ref() == b"sentence" => {
                if let Some(s) = current.take() {
                    out.push(s);
                }
            }
            Event::Eof => break,
            _ => {}
        }
    }
    Ok(out)
}

impl XmlSentence {
    pub fn aspect_gold(&self) -> AspectGold {
        let spans: BTreeSet<CharSpan> = self.opinions.iter().map(|(s, _)| *s).collect();
        AspectGold { text: self.text.clone(), aspects: spans.into_iter().collect() }
    }

    /// One sample per distinct span with a single agreed polarity.
    pub fn sentiment_gold(&self) -> Vec<SentimentGold> {
        let spans: BTreeSet<CharSpan> = self.opinions.iter().map(|(s, _)| *s).collect();
        spans
            .into_iter()
            .filter_map(|span| {
                let pols: BTreeSet<SentimentLabel> =
                    self.opinions.iter().filter(|(s, _)| *s == span).filter_map(|(_, p)| *p).collect();
                (pols.len() == 1).then(|| SentimentGold {
                    text: self.text.clone(),
                    aspect: span,
                    label: *pols.iter().next().expect("one"),
                })
            })
            .collect()
    }
}

fn is_xml(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("xml"))
}

fn read_file(path: &Path) -> Result<String, DatasetError> {
    std::fs::read_to_string(path).map_err(|e| DatasetError::Io(format!("{}: {e}", path.display())))
}

/// Aspect gold from JSONL or review XML, chosen by extension.
pub fn load_aspect_gold(path: &Path) -> Result<Vec<AspectGold>, DatasetError> {
    let s = read_file(path)?;
    if is_xml(path) {
        Ok(read_review_xml(&s)?.iter().map(XmlSentence::aspect_gold).collect())
    } else {
        read_aspect_jsonl(s.as_bytes())
    }
}

pub fn load_sentiment_gold(path: &Path) -> Result<Vec<SentimentGold>, DatasetError> {
    let s = read_file(path)?;
    if is_xml(path) {
        Ok(read_review_xml(&s)?.iter().flat_map(XmlSentence::sentiment_gold).collect())
    } else {
        read_sentiment_jsonl(s.as_bytes())
    }
}

pub fn load_emotion_gold(path: &Path) -> Result<Vec<EmotionGold>, DatasetError> {
    read_emotion_tsv(read_file(path)?.as_bytes())
}

fn char_to_byte(text: &str, c: usize) -> Option<usize> {
    if c == text.chars().count() {
        return Some(text.len());
    }
    text.char_indices().nth(c).map(|(b, _)| b)
}

/// Normalized-token range covering exactly the character span. `None` when
/// the span cuts through a token or covers none.
pub fn char_span_to_tokens(doc: &NormalizedDoc, text: &str, span: CharSpan) -> Option<Range<usize>> {
    let bs = char_to_byte(text, span.start_char)?;
    let be = char_to_byte(text, span.end_char)?;
    let mut first = None;
    let mut last = None;
    for (i, t) in doc.tokens.iter().enumerate() {
        let src = &doc.source[t.origin];
        let inside = src.start >= bs && src.end <= be;
        let overlaps = src.start < be && bs < src.end;
        if overlaps && !inside {
            return None;
        }
        if inside {
            first.get_or_insert(i);
            last = Some(i);
        }
    }
    Some(first?..last? + 1)
}

/// A preprocessed document with its gold aspect token ranges.
#[derive(Debug, Clone, PartialEq)]
pub struct AspectDoc {
    pub doc: NormalizedDoc,
    pub spans: Vec<Range<usize>>,
}

/// Aligns gold spans to tokens. Also returns the number of spans dropped
/// because they do not align with token boundaries or overlap another span.
/// Documents without tokens are skipped.
pub fn aspect_docs(golds: &[AspectGold], pre: &Preprocessor) -> (Vec<AspectDoc>, usize) {
    let mut dropped = 0;
    let mut out = Vec::with_capacity(golds.len());
    for g in golds {
        let doc = pre.process("", &g.text);
        if doc.is_empty() {
            dropped += g.aspects.len();
            continue;
        }
        let mut ranges: Vec<Range<usize>> = Vec::new();
        let mut spans = g.aspects.clone();
        spans.sort();
        spans.dedup();
        for s in spans {
            match char_span_to_tokens(&doc, &g.text, s) {
                Some(r) if ranges.last().is_none_or(|p| p.end <= r.start) => ranges.push(r),
                _ => dropped += 1,
            }
        }
        out.push(AspectDoc { doc, spans: ranges });
    }
    (out, dropped)
}

/// Normalized words with their gold tags.
pub type TaggedWords = (Vec<String>, Vec<Tag>);

/// Tagged sentences for training, with the dropped-span count.
pub fn aspect_examples(golds: &[AspectGold], pre: &Preprocessor) -> (Vec<TaggedWords>, usize) {
    let (docs, dropped) = aspect_docs(golds, pre);
    let out = docs
        .into_iter()
        .map(|d| {
            let tags = encode_spans(&d.spans, d.doc.len());
            (d.doc.words().map(String::from).collect(), tags)
        })
        .collect();
    (out, dropped)
}

pub fn sentiment_examples(golds: &[SentimentGold], pre: &Preprocessor) -> (Vec<SentimentSample>, usize) {
    let mut dropped = 0;
    let mut out = Vec::with_capacity(golds.len());
    for g in golds {
        let doc = pre.process("", &g.text);
        match char_span_to_tokens(&doc, &g.text, g.aspect) {
            Some(r) => out.push((doc.words().map(String::from).collect(), r, g.label)),
            None => dropped += 1,
        }
    }
    (out, dropped)
}

pub fn emotion_examples(golds: &[EmotionGold], pre: &Preprocessor) -> Vec<(Vec<String>, [bool; 11])> {
    golds
        .iter()
        .map(|g| (pre.process(&g.id, &g.text).words().map(String::from).collect::<Vec<_>>(), g.labels))
        .filter(|(w, _)| !w.is_empty())
        .collect()
}

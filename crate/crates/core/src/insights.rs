//! Entity-level aggregation of per-post analyses.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::emotion::{Emotion, EmotionVector};
use crate::sentiment::{AspectSentiment, SentimentLabel};

/// Everything the models say about one post.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostAnalysis {
    pub post_id: String,
    pub aspects: Vec<AspectSentiment>,
    pub emotions: EmotionVector,
    /// Majority over the aspect sentiments, neutral when there are none.
    pub sentiment: SentimentLabel,
}

impl PostAnalysis {
    pub fn new(post_id: String, aspects: Vec<AspectSentiment>, emotions: EmotionVector) -> Self {
        let sentiment = plurality(aspects.iter().map(|a| a.label));
        Self { post_id, aspects, emotions, sentiment }
    }
}

/// The most frequent label; any tie at the top gives neutral, as does an
/// empty input.
pub fn plurality<I: IntoIterator<Item = SentimentLabel>>(labels: I) -> SentimentLabel {
    let mut counts = [0usize; 3];
    for l in labels {
        counts[l.index()] += 1;
    }
    sentiment_from_counts(&counts)
}

pub(crate) fn sentiment_from_counts(counts: &[usize; 3]) -> SentimentLabel {
    let max = *counts.iter().max().expect("three classes");
    if max == 0 || counts.iter().filter(|&&c| c == max).count() > 1 {
        return SentimentLabel::Neutral;
    }
    SentimentLabel::ALL[counts.iter().position(|&c| c == max).expect("max present")]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AspectStat {
    pub term: String,
    pub positive_pct: f64,
    pub mentions: usize,
    pub positive: usize,
    pub negative: usize,
    pub neutral: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmotionCount {
    pub emotion: Emotion,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InsightReport {
    pub entity: String,
    pub aspects: Vec<AspectStat>,
    pub top_emotions: Vec<EmotionCount>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InsightConfig {
    pub top_k: usize,
    /// List aspects none of whose mentions is positive or negative.
    pub include_neutral_only: bool,
}

impl Default for InsightConfig {
    fn default() -> Self {
        Self { top_k: 3, include_neutral_only: true }
    }
}

/// Per-aspect mention counts. A post counts once per term: positive if any
/// of its mentions of the term is positive, otherwise negative if any is
/// negative, otherwise neutral. Sorted by mentions (descending), then term.
pub fn aspect_report(analyses: &[PostAnalysis], include_neutral_only: bool) -> Vec<AspectStat> {
    let mut per_term: BTreeMap<&str, [usize; 3]> = BTreeMap::new();
    for a in analyses {
        let mut in_post: BTreeMap<&str, BTreeSet<SentimentLabel>> = BTreeMap::new();
        for s in &a.aspects {
            in_post.entry(s.span.surface.as_str()).or_default().insert(s.label);
        }
        for (term, labels) in in_post {
            let label = if labels.contains(&SentimentLabel::Positive) {
                SentimentLabel::Positive
            } else if labels.contains(&SentimentLabel::Negative) {
                SentimentLabel::Negative
            } else {
                SentimentLabel::Neutral
            };
            per_term.entry(term).or_default()[label.index()] += 1;
        }
    }
    let mut out: Vec<AspectStat> = per_term
        .into_iter()
        .filter(|(_, c)| include_neutral_only || c[0] + c[1] > 0)
        .map(|(term, c)| {
            let mentions = c.iter().sum::<usize>();
            AspectStat {
                term: term.to_string(),
                positive_pct: 100.0 * c[0] as f64 / mentions as f64,
                mentions,
                positive: c[0],
                negative: c[1],
                neutral: c[2],
            }
        })
        .collect();
    out.sort_by(|a, b| b.mentions.cmp(&a.mentions).then_with(|| a.term.cmp(&b.term)));
    out
}

/// The `k` emotions labeled on the most posts, ties broken by name.
pub fn top_emotions(analyses: &[PostAnalysis], k: usize) -> Vec<EmotionCount> {
    let mut counts: BTreeMap<Emotion, usize> = BTreeMap::new();
    for a in analyses {
        for &e in &a.emotions.labels {
            *counts.entry(e).or_default() += 1;
        }
    }
    let mut v: Vec<EmotionCount> = counts.into_iter().map(|(emotion, count)| EmotionCount { emotion, count }).collect();
    v.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.emotion.as_str().cmp(b.emotion.as_str())));
    v.truncate(k);
    v
}

pub fn build_report(entity: &str, analyses: &[PostAnalysis], cfg: &InsightConfig) -> InsightReport {
    InsightReport {
        entity: entity.to_string(),
        aspects: aspect_report(analyses, cfg.include_neutral_only),
        top_emotions: top_emotions(analyses, cfg.top_k),
    }
}

/// Display token for a node's dominant sentiment.
pub fn node_color(sentiment: SentimentLabel) -> &'static str {
    match sentiment {
        SentimentLabel::Positive => "green",
        SentimentLabel::Negative => "red",
        SentimentLabel::Neutral => "gray",
    }
}

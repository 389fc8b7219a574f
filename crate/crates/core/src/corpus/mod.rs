//! Post records: source adapters, parsing and the on-disk store.

mod records;
mod store;

use std::collections::BTreeMap;

use chrono::{DateTime, NaiveDate, NaiveDateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::textprep::{tokenize, TokenKind};

pub use records::{read_review_csv, read_tweet_jsonl, read_records, Record};
pub use store::{CorpusStore, EntitySummary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Twitter,
    Tripadvisor,
    Booking,
    Generic,
}

impl SourceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SourceKind::Twitter => "twitter",
            SourceKind::Tripadvisor => "tripadvisor",
            SourceKind::Booking => "booking",
            SourceKind::Generic => "generic",
        }
    }

    fn is_review(self) -> bool {
        matches!(self, SourceKind::Tripadvisor | SourceKind::Booking)
    }
}

impl std::str::FromStr for SourceKind {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "twitter" => Ok(SourceKind::Twitter),
            "tripadvisor" => Ok(SourceKind::Tripadvisor),
            "booking" => Ok(SourceKind::Booking),
            "generic" => Ok(SourceKind::Generic),
            other => Err(CorpusError::UnknownSource(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Geo {
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Post {
    pub id: String,
    pub source: SourceKind,
    pub entity_id: String,
    pub timestamp: DateTime<Utc>,
    pub raw_text: String,
    #[serde(default)]
    pub hashtags: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geo: Option<Geo>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lang: Option<String>,
    /// Review star rating; kept for reference, unused by the analyses.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rating: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CorpusError {
    #[error("missing field {0:?}")]
    MissingField(&'static str),
    #[error("unparseable timestamp {0:?}")]
    BadTimestamp(String),
    #[error("invalid field {field:?}: {why}")]
    BadField { field: &'static str, why: String },
    #[error("post has neither text nor hashtags")]
    EmptyText,
    #[error("malformed record: {0}")]
    Malformed(String),
    #[error("unknown source {0:?}")]
    UnknownSource(String),
    #[error("store unavailable: {0}")]
    StoreUnavailable(String),
}

impl CorpusError {
    /// Key under which a rejection is tallied in [`IngestStats::rejected_by`].
    pub fn reason(&self) -> String {
        match self {
            CorpusError::MissingField(f) => format!("missing_{f}"),
            CorpusError::BadTimestamp(_) => "bad_timestamp".into(),
            CorpusError::BadField { field, .. } => format!("bad_{field}"),
            CorpusError::EmptyText => "empty_text".into(),
            CorpusError::Malformed(_) => "malformed".into(),
            CorpusError::UnknownSource(_) => "unknown_source".into(),
            CorpusError::StoreUnavailable(_) => "store_unavailable".into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub read: usize,
    pub accepted: usize,
    pub duplicates: usize,
    pub rejected: usize,
    pub rejected_by: BTreeMap<String, usize>,
}

fn string_field(record: &Record, key: &str) -> Option<String> {
    match record.get(key)? {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn first_field(record: &Record, keys: &[&str]) -> Option<String> {
    keys.iter().find_map(|k| string_field(record, k))
}

pub(crate) fn parse_timestamp(s: &str) -> Result<DateTime<Utc>, CorpusError> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Ok(t.with_timezone(&Utc));
    }
    if let Ok(t) = NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S") {
        return Ok(t.and_utc());
    }
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Ok(d.and_hms_opt(0, 0, 0).expect("midnight").and_utc());
    }
    Err(CorpusError::BadTimestamp(s.to_string()))
}

fn parse_geo(v: &Value) -> Result<Geo, CorpusError> {
    let bad = |why: &str| CorpusError::BadField { field: "geo", why: why.into() };
    let coord = |k: &str| -> Result<f64, CorpusError> {
        match v.get(k) {
            Some(Value::Number(n)) => n.as_f64().ok_or_else(|| bad("not a number")),
            Some(Value::String(s)) => s.trim().parse().map_err(|_| bad("not a number")),
            _ => Err(bad("missing coordinate")),
        }
    };
    let geo = Geo { lat: coord("lat")?, lon: coord("lon")? };
    if !(-90.0..=90.0).contains(&geo.lat) || !(-180.0..=180.0).contains(&geo.lon) {
        return Err(bad("out of range"));
    }
    Ok(geo)
}

/// Lowercased, de-duplicated hashtags from an explicit list plus inline
/// `#tags` in the text, in first-seen order.
fn collect_hashtags(listed: Option<&Value>, text: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let mut push = |tag: &str| {
        let t = tag.trim().trim_start_matches('#').to_lowercase();
        if !t.is_empty() && !out.contains(&t) {
            out.push(t);
        }
    };
    match listed {
        Some(Value::Array(items)) => {
            for item in items {
                if let Value::String(s) = item {
                    push(s);
                }
            }
        }
        Some(Value::String(s)) => s.split([',', ' ']).for_each(&mut push),
        _ => {}
    }
    for tok in tokenize(text) {
        if tok.kind == TokenKind::Hashtag {
            push(&tok.surface);
        }
    }
    out
}

/// Maps one source record onto a [`Post`].
///
/// Tweets use `id`, `created_at`, `text`; reviews use `review_id`, `date`,
/// `text`, `rating`; generic records use `id`, `timestamp`, `text`. A record's
/// own `entity` wins over `default_entity`.
pub fn parse_post_record(
    record: &Record,
    source: SourceKind,
    default_entity: Option<&str>,
) -> Result<Post, CorpusError> {
    let (id_keys, ts_keys): (&[&str], &[&str]) = match source {
        SourceKind::Twitter => (&["id", "id_str"], &["created_at"]),
        SourceKind::Tripadvisor | SourceKind::Booking => (&["review_id", "id"], &["date"]),
        SourceKind::Generic => (&["id"], &["timestamp", "created_at", "date"]),
    };
    let id = first_field(record, id_keys)
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .ok_or(CorpusError::MissingField("id"))?;
    let ts = first_field(record, ts_keys).ok_or(CorpusError::MissingField("timestamp"))?;
    let timestamp = parse_timestamp(&ts)?;
    let raw_text = match record.get("text") {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Null) | None => return Err(CorpusError::MissingField("text")),
        Some(other) => other.to_string(),
    };
    let entity_id = string_field(record, "entity")
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .or_else(|| default_entity.map(str::to_string))
        .ok_or(CorpusError::MissingField("entity"))?;
    let hashtags = collect_hashtags(record.get("hashtags"), &raw_text);
    if raw_text.trim().is_empty() && hashtags.is_empty() {
        return Err(CorpusError::EmptyText);
    }
    let geo = match record.get("geo") {
        None | Some(Value::Null) => None,
        Some(v) => Some(parse_geo(v)?),
    };
    let lang = string_field(record, "lang").filter(|s| !s.is_empty());
    let rating = if source.is_review() {
        match string_field(record, "rating") {
            None => None,
            Some(s) if s.trim().is_empty() => None,
            Some(s) => Some(s.trim().parse::<f64>().map_err(|_| CorpusError::BadField {
                field: "rating",
                why: format!("{s:?} is not a number"),
            })?),
        }
    } else {
        None
    };
    Ok(Post { id, source, entity_id, timestamp, raw_text, hashtags, geo, lang, rating })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn rec(v: Value) -> Record {
        v.as_object().unwrap().clone()
    }

    #[test]
    fn tweet_with_inline_hashtag() {
        let r = rec(json!({"id": "t1", "created_at": "2018-03-07T10:00:00Z", "text": "Riots in Kandy #lka"}));
        let p = parse_post_record(&r, SourceKind::Twitter, Some("srilanka")).unwrap();
        assert_eq!(p.id, "t1");
        assert_eq!(p.hashtags, vec!["lka"]);
        assert_eq!(p.entity_id, "srilanka");
        assert_eq!(p.timestamp.to_rfc3339(), "2018-03-07T10:00:00+00:00");
    }

    #[test]
    fn missing_timestamp() {
        let r = rec(json!({"id": "t1", "text": "hello"}));
        assert_eq!(
            parse_post_record(&r, SourceKind::Twitter, Some("e")),
            Err(CorpusError::MissingField("timestamp"))
        );
    }

    #[test]
    fn review_without_hashtags() {
        let r = rec(json!({"review_id": "r9", "entity": "hotel_a", "date": "2019-01-02",
                           "rating": "4", "text": "Lovely stay, great breakfast."}));
        let p = parse_post_record(&r, SourceKind::Tripadvisor, None).unwrap();
        assert!(p.hashtags.is_empty());
        assert_eq!(p.rating, Some(4.0));
        assert_eq!(p.timestamp.to_rfc3339(), "2019-01-02T00:00:00+00:00");
    }

    #[test]
    fn listed_and_inline_hashtags_merge() {
        let r = rec(json!({"id": 42, "created_at": "2018-03-07T15:30:00+05:30",
                           "text": "#Sigiriya at dawn #LKA", "hashtags": ["lka", "travel"]}));
        let p = parse_post_record(&r, SourceKind::Twitter, Some("e")).unwrap();
        assert_eq!(p.id, "42");
        assert_eq!(p.hashtags, vec!["lka", "travel", "sigiriya"]);
        assert_eq!(p.timestamp.to_rfc3339(), "2018-03-07T10:00:00+00:00");
    }

    #[test]
    fn rejections() {
        let bad_ts = rec(json!({"id": "a", "created_at": "yesterday", "text": "x"}));
        assert!(matches!(
            parse_post_record(&bad_ts, SourceKind::Twitter, Some("e")),
            Err(CorpusError::BadTimestamp(_))
        ));
        let empty = rec(json!({"id": "a", "created_at": "2018-03-07T10:00:00Z", "text": "  "}));
        assert_eq!(parse_post_record(&empty, SourceKind::Twitter, Some("e")), Err(CorpusError::EmptyText));
        let tag_only = rec(json!({"id": "a", "created_at": "2018-03-07T10:00:00Z", "text": "", "hashtags": ["lka"]}));
        assert!(parse_post_record(&tag_only, SourceKind::Twitter, Some("e")).is_ok());
        let no_entity = rec(json!({"id": "a", "created_at": "2018-03-07T10:00:00Z", "text": "x"}));
        assert_eq!(parse_post_record(&no_entity, SourceKind::Twitter, None), Err(CorpusError::MissingField("entity")));
        let geo = rec(json!({"id": "a", "created_at": "2018-03-07T10:00:00Z", "text": "x", "geo": {"lat": 100, "lon": 0}}));
        assert!(matches!(
            parse_post_record(&geo, SourceKind::Twitter, Some("e")),
            Err(CorpusError::BadField { field: "geo", .. })
        ));
    }
}

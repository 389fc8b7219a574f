use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde_json::{Map, Value};

use super::{CorpusError, SourceKind};

/// A parsed key-value document handed over by a source adapter.
pub type Record = Map<String, Value>;

/// One JSON object per line; blank lines are skipped, unparseable lines
/// come back as `Malformed` so the caller can tally them.
pub fn read_tweet_jsonl<R: BufRead>(reader: R) -> Vec<Result<Record, CorpusError>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = match line {
            Ok(l) => l,
            Err(e) => {
                out.push(Err(CorpusError::Malformed(format!("line {}: {e}", i + 1))));
                continue;
            }
        };
        if line.trim().is_empty() {
            continue;
        }
        out.push(match serde_json::from_str::<Value>(&line) {
            Ok(Value::Object(m)) => Ok(m),
            Ok(_) => Err(CorpusError::Malformed(format!("line {}: not an object", i + 1))),
            Err(e) => Err(CorpusError::Malformed(format!("line {}: {e}", i + 1))),
        });
    }
    out
}

/// CSV with a header row; every cell becomes a string value.
pub fn read_review_csv<R: Read>(reader: R) -> Vec<Result<Record, CorpusError>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = match rdr.headers() {
        Ok(h) => h.iter().map(|h| h.trim().to_string()).collect::<Vec<_>>(),
        Err(e) => return vec![Err(CorpusError::Malformed(format!("header: {e}")))],
    };
    rdr.records()
        .map(|row| {
            let row = row.map_err(|e| CorpusError::Malformed(e.to_string()))?;
            Ok(headers
                .iter()
                .zip(row.iter())
                .map(|(h, v)| (h.clone(), Value::String(v.to_string())))
                .collect())
        })
        .collect()
}

/// Reads an export file with the adapter for `source`: CSV for review sites,
/// JSON lines otherwise.
pub fn read_records(path: &Path, source: SourceKind) -> std::io::Result<Vec<Result<Record, CorpusError>>> {
    let file = File::open(path)?;
    Ok(if source.is_review() {
        read_review_csv(file)
    } else {
        read_tweet_jsonl(BufReader::new(file))
    })
}

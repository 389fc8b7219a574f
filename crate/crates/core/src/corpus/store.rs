use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{parse_post_record, CorpusError, IngestStats, Post, Record, SourceKind};

const LOG_FILE: &str = "posts.jsonl";

#[derive(Debug, Default)]
struct State {
    posts: Vec<Post>,
    ids: HashSet<String>,
}

/// Append-only post log with an in-memory id index.
///
/// Ingestion is serialized; a batch becomes visible to readers all at once
/// after it has been written to the log.
#[derive(Debug)]
pub struct CorpusStore {
    log_path: Option<PathBuf>,
    writer: Mutex<()>,
    state: RwLock<State>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntitySummary {
    pub id: String,
    pub posts: usize,
}

fn unavailable(e: impl std::fmt::Display) -> CorpusError {
    CorpusError::StoreUnavailable(e.to_string())
}

impl CorpusStore {
    pub fn in_memory() -> Self {
        Self { log_path: None, writer: Mutex::new(()), state: RwLock::new(State::default()) }
    }

    /// Opens (creating if needed) the store under `dir`, replaying its log.
    pub fn open(dir: &Path) -> Result<Self, CorpusError> {
        fs::create_dir_all(dir).map_err(unavailable)?;
        let log_path = dir.join(LOG_FILE);
        let mut state = State::default();
        if log_path.exists() {
            let reader = BufReader::new(File::open(&log_path).map_err(unavailable)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line.map_err(unavailable)?;
                if line.trim().is_empty() {
                    continue;
                }
                let post: Post = serde_json::from_str(&line)
                    .map_err(|e| unavailable(format!("{}:{}: {e}", log_path.display(), i + 1)))?;
                if state.ids.insert(post.id.clone()) {
                    state.posts.push(post);
                }
            }
        }
        Ok(Self { log_path: Some(log_path), writer: Mutex::new(()), state: RwLock::new(state) })
    }

    /// Parses, de-duplicates by id and persists a batch of records.
    pub fn ingest_batch<I>(
        &self,
        records: I,
        source: SourceKind,
        default_entity: Option<&str>,
    ) -> Result<IngestStats, CorpusError>
    where
        I: IntoIterator<Item = Result<Record, CorpusError>>,
    {
        let _guard = self.writer.lock().map_err(unavailable)?;
        let mut stats = IngestStats::default();
        let mut fresh: Vec<Post> = Vec::new();
        {
            let state = self.state.read().map_err(unavailable)?;
            let mut batch_ids = HashSet::new();
            for record in records {
                stats.read += 1;
                let parsed = record.and_then(|r| parse_post_record(&r, source, default_entity));
                match parsed {
                    Ok(post) => {
                        if state.ids.contains(&post.id) || !batch_ids.insert(post.id.clone()) {
                            stats.duplicates += 1;
                        } else {
                            fresh.push(post);
                        }
                    }
                    Err(e) => {
                        stats.rejected += 1;
                        *stats.rejected_by.entry(e.reason()).or_default() += 1;
                    }
                }
            }
        }
        if let Some(path) = &self.log_path {
            if !fresh.is_empty() {
                let mut buf = Vec::new();
                for p in &fresh {
                    serde_json::to_writer(&mut buf, p).map_err(unavailable)?;
                    buf.push(b'\n');
                }
                let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(unavailable)?;
                f.write_all(&buf).map_err(unavailable)?;
                f.sync_data().map_err(unavailable)?;
            }
        }
        stats.accepted = fresh.len();
        let mut state = self.state.write().map_err(unavailable)?;
        for p in fresh {
            state.ids.insert(p.id.clone());
            state.posts.push(p);
        }
        Ok(stats)
    }

    /// Posts of `entity_id` with timestamp in `[start, end)`, ordered by
    /// timestamp then id.
    pub fn query_posts(
        &self,
        entity_id: &str,
        window: Option<(DateTime<Utc>, DateTime<Utc>)>,
    ) -> Vec<Post> {
        let state = self.state.read().expect("store lock poisoned");
        let mut out: Vec<Post> = state
            .posts
            .iter()
            .filter(|p| p.entity_id == entity_id)
            .filter(|p| window.is_none_or(|(s, e)| p.timestamp >= s && p.timestamp < e))
            .cloned()
            .collect();
        out.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.id.cmp(&b.id)));
        out
    }

    pub fn get(&self, id: &str) -> Option<Post> {
        let state = self.state.read().expect("store lock poisoned");
        state.posts.iter().find(|p| p.id == id).cloned()
    }

    pub fn entities(&self) -> Vec<EntitySummary> {
        let state = self.state.read().expect("store lock poisoned");
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for p in &state.posts {
            *counts.entry(&p.entity_id).or_default() += 1;
        }
        counts.into_iter().map(|(id, posts)| EntitySummary { id: id.to_string(), posts }).collect()
    }

    pub fn len(&self) -> usize {
        self.state.read().expect("store lock poisoned").posts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

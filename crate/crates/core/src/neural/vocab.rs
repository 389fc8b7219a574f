use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Reserved out-of-vocabulary token, always id 0.
pub const UNK: &str = "<unk>";

/// Word ↔ id mapping for embedding lookup.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Words seen at least `min_count` times, ordered by count (descending)
    /// then lexicographically, after `<unk>`.
    pub fn build<'a, I>(tokens: I, min_count: usize) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for t in tokens {
            *counts.entry(t).or_default() += 1;
        }
        let mut ranked: Vec<(&str, usize)> =
            counts.into_iter().filter(|&(w, c)| c >= min_count.max(1) && w != UNK).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        Self::from_words(ranked.into_iter().map(|(w, _)| w.to_string()))
    }

    /// `<unk>` followed by `words` in order; repeats are ignored.
    pub fn from_words<I: IntoIterator<Item = String>>(words: I) -> Self {
        let mut v = Self { words: vec![UNK.to_string()], index: HashMap::from([(UNK.to_string(), 0)]) };
        for w in words {
            if !v.index.contains_key(&w) {
                v.index.insert(w.clone(), v.words.len());
                v.words.push(w);
            }
        }
        v
    }

    pub fn id(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(0)
    }

    pub fn encode<S: AsRef<str>>(&self, words: &[S]) -> Vec<usize> {
        words.iter().map(|w| self.id(w.as_ref())).collect()
    }

    pub fn word(&self, id: usize) -> Option<&str> {
        self.words.get(id).map(String::as_str)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl Serialize for Vocab {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.words.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Vocab {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let words = Vec::<String>::deserialize(d)?;
        if words.first().map(String::as_str) != Some(UNK) {
            return Err(serde::de::Error::custom("vocabulary must start with <unk>"));
        }
        Ok(Self::from_words(words.into_iter().skip(1)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn build_orders_by_count() {
        let v = Vocab::build("b a b c a b".split(' '), 2);
        assert_eq!(v.words(), &["<unk>", "b", "a"]);
        assert_eq!(v.encode(&["a", "zzz", "b"]), vec![2, 0, 1]);
        let j = serde_json::to_string(&v).unwrap();
        assert_eq!(serde_json::from_str::<Vocab>(&j).unwrap(), v);
        assert!(serde_json::from_str::<Vocab>("[\"a\"]").is_err());
    }
}

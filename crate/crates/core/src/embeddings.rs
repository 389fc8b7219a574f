//! Pretrained word vectors and document vectors built from them.

use std::collections::{HashMap, HashSet};
use std::io::BufRead;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::scalar::{norm, Scalar};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EmbeddingError {
    #[error("line {line}: expected {expected} components, found {found}")]
    DimensionMismatch { line: usize, expected: usize, found: usize },
    #[error("line {0}: unparseable component")]
    BadNumber(usize),
    #[error("vector file has no entries")]
    EmptyFile,
    #[error("i/o error: {0}")]
    Io(String),
}

/// Word vectors of one fixed dimension. Unknown words map to the mean of all
/// stored vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable<T> {
    dim: usize,
    words: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<T>,
    oov: Vec<T>,
}

impl<T: Scalar> EmbeddingTable<T> {
    /// Reads GloVe-style text: `word v1 ... vd` per line, no header. The
    /// first line fixes `d`; a repeated word keeps its first vector.
    pub fn load_vectors<R: BufRead>(reader: R) -> Result<Self, EmbeddingError> {
        let mut dim = 0;
        let mut words = Vec::new();
        let mut index = HashMap::new();
        let mut data = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|e| EmbeddingError::Io(e.to_string()))?;
            let mut parts = line.split_whitespace();
            let Some(word) = parts.next() else { continue };
            let mut vec = Vec::with_capacity(dim);
            for p in parts {
                let v: f64 = p.parse().map_err(|_| EmbeddingError::BadNumber(line_no))?;
                if !v.is_finite() {
                    return Err(EmbeddingError::BadNumber(line_no));
                }
                vec.push(T::lit(v));
            }
            if dim == 0 {
                if vec.is_empty() {
                    return Err(EmbeddingError::DimensionMismatch { line: line_no, expected: 1, found: 0 });
                }
                dim = vec.len();
            } else if vec.len() != dim {
                return Err(EmbeddingError::DimensionMismatch { line: line_no, expected: dim, found: vec.len() });
            }
            if index.contains_key(word) {
                continue;
            }
            index.insert(word.to_string(), words.len());
            words.push(word.to_string());
            data.extend(vec);
        }
        Self::from_parts(dim, words, index, data)
    }

    /// Builds a table from `(word, vector)` pairs; first occurrence wins.
    pub fn from_entries<I>(entries: I) -> Result<Self, EmbeddingError>
    where
        I: IntoIterator<Item = (String, Vec<T>)>,
    {
        let mut dim = 0;
        let mut words = Vec::new();
        let mut index = HashMap::new();
        let mut data = Vec::new();
        for (n, (word, vec)) in entries.into_iter().enumerate() {
            if dim == 0 {
                dim = vec.len();
            }
            if vec.len() != dim || dim == 0 {
                return Err(EmbeddingError::DimensionMismatch { line: n + 1, expected: dim.max(1), found: vec.len() });
            }
            if index.contains_key(&word) {
                continue;
            }
            index.insert(word.clone(), words.len());
            words.push(word);
            data.extend(vec);
        }
        Self::from_parts(dim, words, index, data)
    }

    fn from_parts(
        dim: usize,
        words: Vec<String>,
        index: HashMap<String, usize>,
        data: Vec<T>,
    ) -> Result<Self, EmbeddingError> {
        if words.is_empty() {
            return Err(EmbeddingError::EmptyFile);
        }
        let mut oov = vec![T::zero(); dim];
        for row in data.chunks_exact(dim) {
            for (o, v) in oov.iter_mut().zip(row) {
                *o += *v;
            }
        }
        let n = T::from_usize_lossy(words.len());
        oov.iter_mut().for_each(|o| *o /= n);
        Ok(Self { dim, words, index, data, oov })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn get(&self, word: &str) -> Option<&[T]> {
        self.index.get(word).map(|&i| &self.data[i * self.dim..(i + 1) * self.dim])
    }

    /// The stored vector, or the out-of-vocabulary mean vector.
    pub fn lookup(&self, word: &str) -> &[T] {
        self.get(word).unwrap_or(&self.oov)
    }

    pub fn oov_vector(&self) -> &[T] {
        &self.oov
    }

    /// Idf-weighted mean of the token vectors; the zero vector for an empty
    /// token list. Words without an idf entry weigh 1.
    pub fn doc_vector<'a, I>(&self, tokens: I, idf: &Idf<T>) -> DocVector<T>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut acc = vec![T::zero(); self.dim];
        let mut weight = T::zero();
        for tok in tokens {
            let w = idf.weight(tok);
            for (a, v) in acc.iter_mut().zip(self.lookup(tok)) {
                *a += w * *v;
            }
            weight += w;
        }
        if weight > T::zero() {
            acc.iter_mut().for_each(|a| *a /= weight);
        }
        DocVector::new(acc)
    }
}

/// Inverse document frequencies, `ln(N / df) + 1`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Idf<T> {
    weights: HashMap<String, T>,
}

impl<T: Scalar> Idf<T> {
    /// An empty table: every word weighs 1.
    pub fn uniform() -> Self {
        Self { weights: HashMap::new() }
    }

    pub fn from_weights(weights: HashMap<String, T>) -> Self {
        Self { weights }
    }

    /// Document frequencies over `docs`, each doc an iterator of words.
    pub fn fit<D, W, S>(docs: D) -> Self
    where
        D: IntoIterator<Item = W>,
        W: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut df: HashMap<String, usize> = HashMap::new();
        let mut n = 0usize;
        for doc in docs {
            n += 1;
            let uniq: HashSet<String> = doc.into_iter().map(|w| w.as_ref().to_string()).collect();
            for w in uniq {
                *df.entry(w).or_default() += 1;
            }
        }
        let nf = n as f64;
        let weights = df
            .into_iter()
            .map(|(w, d)| (w, T::lit((nf / d as f64).ln() + 1.0)))
            .collect();
        Self { weights }
    }

    pub fn weight(&self, word: &str) -> T {
        self.weights.get(word).copied().unwrap_or_else(T::one)
    }

    pub fn get(&self, word: &str) -> Option<T> {
        self.weights.get(word).copied()
    }
}

/// A document embedding together with its Euclidean norm.
#[derive(Debug, Clone, PartialEq)]
pub struct DocVector<T> {
    pub values: Vec<T>,
    pub norm: T,
}

impl<T: Scalar> DocVector<T> {
    pub fn new(values: Vec<T>) -> Self {
        let norm = norm(&values);
        Self { values, norm }
    }

    pub fn is_zero(&self) -> bool {
        self.norm == T::zero()
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

impl<T: Scalar> Serialize for DocVector<T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let v: Vec<f64> = self.values.iter().map(|x| x.to_f64_lossless()).collect();
        v.serialize(s)
    }
}

impl<'de, T: Scalar> Deserialize<'de> for DocVector<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        Ok(Self::new(v.into_iter().map(T::lit).collect()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const FIXTURE: &str = "food 1 0\nservice 0 1\n<user> 2 2\nfood 9 9\n";

    #[test]
    fn loads_and_keeps_first_duplicate() {
        let t = EmbeddingTable::<f64>::load_vectors(FIXTURE.as_bytes()).unwrap();
        assert_eq!(t.dim(), 2);
        assert_eq!(t.len(), 3);
        assert_eq!(t.lookup("food"), &[1.0, 0.0]);
        assert_eq!(t.oov_vector(), &[1.0, 1.0]);
        assert_eq!(t.lookup("unseen"), &[1.0, 1.0]);
        assert_eq!(t.lookup("<user>"), &[2.0, 2.0]);
    }

    #[test]
    fn dimension_mismatch_and_empty() {
        let e = EmbeddingTable::<f64>::load_vectors("a 1 2\nb 1 2 3\n".as_bytes()).unwrap_err();
        assert_eq!(e, EmbeddingError::DimensionMismatch { line: 2, expected: 2, found: 3 });
        assert_eq!(EmbeddingTable::<f32>::load_vectors("".as_bytes()).unwrap_err(), EmbeddingError::EmptyFile);
    }

    #[test]
    fn doc_vector_cases() {
        let t = EmbeddingTable::<f64>::load_vectors("a 1 0 0\nb 0 2 0\nc 0 0 4\n".as_bytes()).unwrap();
        let uniform = Idf::uniform();
        assert_eq!(t.doc_vector(["b"], &uniform).values, vec![0.0, 2.0, 0.0]);
        assert_eq!(t.doc_vector(["a", "b"], &uniform).values, vec![0.5, 1.0, 0.0]);
        // weights {a:2, b:1, c:1}: (2*(1,0,0) + (0,2,0) + (0,0,4)) / 4
        let idf = Idf::from_weights([("a".to_string(), 2.0)].into_iter().collect());
        assert_eq!(t.doc_vector(["a", "b", "c"], &idf).values, vec![0.5, 0.5, 1.0]);
        let empty = t.doc_vector(std::iter::empty(), &uniform);
        assert!(empty.is_zero());
        assert_eq!(empty.dim(), 3);
    }

    #[test]
    fn idf_formula() {
        let idf = Idf::<f64>::fit([vec!["a", "b"], vec!["a"], vec!["c"], vec!["a", "a"]]);
        assert!((idf.weight("a") - ((4.0f64 / 3.0).ln() + 1.0)).abs() < 1e-15);
        assert!((idf.weight("c") - (4.0f64.ln() + 1.0)).abs() < 1e-15);
        assert_eq!(idf.weight("zzz"), 1.0);
    }

    fn table() -> EmbeddingTable<f64> {
        EmbeddingTable::load_vectors("a 1 0.5\nb -0.2 2\nc 0.3 -4\nd 7 1\n".as_bytes()).unwrap()
    }

    proptest! {
        #[test]
        fn permutation_invariant(mut toks in proptest::collection::vec(prop::sample::select(vec!["a","b","c","d","x"]), 1..12),
                                 seed in any::<u64>()) {
            let t = table();
            let idf = Idf::from_weights([("a".to_string(), 2.5), ("c".to_string(), 0.7)].into_iter().collect());
            let base = t.doc_vector(toks.iter().copied(), &idf);
            let k = (seed as usize) % toks.len();
            toks.rotate_left(k);
            toks.reverse();
            let perm = t.doc_vector(toks.iter().copied(), &idf);
            for (x, y) in base.values.iter().zip(&perm.values) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn idf_scale_invariant(toks in proptest::collection::vec(prop::sample::select(vec!["a","b","c","d"]), 1..12),
                               c in 0.01f64..100.0) {
            let t = table();
            let w: HashMap<String, f64> = [("a", 2.5), ("b", 1.0), ("c", 0.7), ("d", 3.0)]
                .into_iter().map(|(k, v)| (k.to_string(), v)).collect();
            let scaled: HashMap<String, f64> = w.iter().map(|(k, v)| (k.clone(), v * c)).collect();
            let a = t.doc_vector(toks.iter().copied(), &Idf::from_weights(w));
            let b = t.doc_vector(toks.iter().copied(), &Idf::from_weights(scaled));
            for (x, y) in a.values.iter().zip(&b.values) {
                prop_assert!((x - y).abs() < 1e-9 * (1.0 + x.abs()));
            }
        }

        #[test]
        fn lookup_is_total(w in "\\PC{0,12}") {
            prop_assert_eq!(table().lookup(&w).len(), 2);
        }
    }
}

use super::Lexicon;

/// Restricted Damerau-Levenshtein (optimal string alignment) distance,
/// giving up early once every cell of a row exceeds `limit`.
pub fn osa_distance_bounded(a: &[char], b: &[char], limit: usize) -> Option<usize> {
    if a.len().abs_diff(b.len()) > limit {
        return None;
    }
    let w = b.len() + 1;
    let mut prev2 = vec![0usize; w];
    let mut prev: Vec<usize> = (0..w).collect();
    let mut cur = vec![0usize; w];
    for i in 1..=a.len() {
        cur[0] = i;
        let mut row_min = cur[0];
        for j in 1..=b.len() {
            let cost = usize::from(a[i - 1] != b[j - 1]);
            let mut v = (prev[j] + 1).min(cur[j - 1] + 1).min(prev[j - 1] + cost);
            if i > 1 && j > 1 && a[i - 1] == b[j - 2] && a[i - 2] == b[j - 1] {
                v = v.min(prev2[j - 2] + 1);
            }
            cur[j] = v;
            row_min = row_min.min(v);
        }
        if row_min > limit {
            return None;
        }
        std::mem::swap(&mut prev2, &mut prev);
        std::mem::swap(&mut prev, &mut cur);
    }
    let d = prev[b.len()];
    (d <= limit).then_some(d)
}

/// Returns `word` if the lexicon knows it, otherwise the most frequent
/// lexicon word at edit distance 1, then 2 (ties to the lexicographically
/// smaller word), otherwise `word` unchanged.
pub fn correct_spelling(word: &str, lexicon: &Lexicon) -> String {
    if lexicon.contains(word) || word.is_empty() {
        return word.to_string();
    }
    let chars: Vec<char> = word.chars().collect();
    let n = chars.len();
    // (distance, -count, word)
    let mut best: Option<(usize, u64, &str)> = None;
    for cand in lexicon.words_with_len(n.saturating_sub(2), n + 2) {
        let cc: Vec<char> = cand.chars().collect();
        let limit = best.map_or(2, |(d, _, _)| d);
        let Some(d) = osa_distance_bounded(&chars, &cc, limit) else {
            continue;
        };
        if d == 0 {
            continue;
        }
        let count = lexicon.count(cand);
        let better = match best {
            None => true,
            Some((bd, bc, bw)) => {
                d < bd || (d == bd && (count > bc || (count == bc && cand.as_str() < bw)))
            }
        };
        if better {
            best = Some((d, count, cand.as_str()));
        }
    }
    best.map_or_else(|| word.to_string(), |(_, _, w)| w.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lex(words: &[(&str, u64)]) -> Lexicon {
        Lexicon::from_counts(words.iter().map(|(w, c)| (w.to_string(), *c))).unwrap()
    }

    /// Every string one deletion, transposition, substitution or insertion
    /// away, over the lexicon's alphabet.
    fn edits1(word: &str, alphabet: &[char]) -> Vec<String> {
        let cs: Vec<char> = word.chars().collect();
        let mut out = Vec::new();
        for i in 0..=cs.len() {
            let (l, r) = cs.split_at(i);
            if !r.is_empty() {
                out.push(l.iter().chain(&r[1..]).collect());
            }
            if r.len() > 1 {
                out.push(l.iter().chain([&r[1], &r[0]]).chain(&r[2..]).collect());
            }
            for &c in alphabet {
                if !r.is_empty() {
                    out.push(l.iter().chain([&c]).chain(&r[1..]).collect());
                }
                out.push(l.iter().chain([&c]).chain(r).collect());
            }
        }
        out
    }

    #[test]
    fn teh_becomes_the() {
        let l = lex(&[("the", 1000), ("tea", 50), ("ten", 40)]);
        // oracle: rank the distance-1 neighbours present in the lexicon
        let alphabet: Vec<char> = ('a'..='z').collect();
        let mut found: Vec<(u64, String)> = edits1("teh", &alphabet)
            .into_iter()
            .filter(|w| l.contains(w))
            .map(|w| (l.count(&w), w))
            .collect();
        found.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        assert_eq!(found[0].1, "the");
        assert_eq!(correct_spelling("teh", &l), found[0].1);
    }

    #[test]
    fn known_word_is_identity() {
        let l = lex(&[("food", 3), ("good", 9)]);
        assert_eq!(correct_spelling("food", &l), "food");
    }

    #[test]
    fn nothing_within_two_edits() {
        let l = lex(&[("the", 1000), ("tea", 50), ("ten", 40)]);
        assert_eq!(correct_spelling("xqzv", &l), "xqzv");
    }

    #[test]
    fn distance_one_beats_more_frequent_distance_two() {
        let l = lex(&[("cat", 1), ("dog", 1000)]);
        assert_eq!(correct_spelling("cot", &l), "cat");
        let l = lex(&[("hotel", 5), ("hostel", 5)]);
        // hotel: one deletion; hostel: one transposition; equal counts
        assert_eq!(correct_spelling("hotsel", &l), "hostel");
    }

    #[test]
    fn osa_matches_known_distances() {
        let d = |a: &str, b: &str| {
            let a: Vec<char> = a.chars().collect();
            let b: Vec<char> = b.chars().collect();
            osa_distance_bounded(&a, &b, 10)
        };
        assert_eq!(d("kitten", "sitting"), Some(3));
        assert_eq!(d("teh", "the"), Some(1));
        assert_eq!(d("", "abc"), Some(3));
        assert_eq!(d("ca", "abc"), Some(3));
    }

    proptest::proptest! {
        #[test]
        fn correction_is_idempotent(w in "[a-z]{1,8}") {
            let l = lex(&[("the", 1000), ("tea", 50), ("ten", 40), ("food", 30), ("good", 60), ("place", 20)]);
            let once = correct_spelling(&w, &l);
            proptest::prop_assert_eq!(correct_spelling(&once, &l), once);
        }
    }
}

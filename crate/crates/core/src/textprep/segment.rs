//! Unigram word segmentation for hashtag bodies.
//!
//! A piece found in the lexicon has probability `count / total`; any other
//! piece gets `10 / (total * 10^len)`, which makes long unknown chunks
//! expensive. The best split maximizes the product of piece probabilities.
//! Products are kept as exact big-integer fractions so that genuinely equal
//! scores compare equal and the tie-break rules decide, independent of
//! floating-point summation order.

use std::cmp::Ordering;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};

use super::{Lexicon, TextprepError};

/// An exact probability `num / den`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExactProb {
    num: BigUint,
    den: BigUint,
}

impl ExactProb {
    pub fn one() -> Self {
        Self { num: BigUint::one(), den: BigUint::one() }
    }

    /// Probability of a single piece under the unigram model.
    pub fn of_piece(piece: &str, lexicon: &Lexicon) -> Self {
        let total = BigUint::from(lexicon.total().max(1));
        match lexicon.count(piece) {
            0 => {
                let len = piece.chars().count() as u32;
                Self { num: BigUint::from(10u32), den: total * BigUint::from(10u32).pow(len) }
            }
            c => Self { num: BigUint::from(c), den: total },
        }
    }

    pub fn times(&self, other: &Self) -> Self {
        Self { num: &self.num * &other.num, den: &self.den * &other.den }
    }

    pub fn ln(&self) -> f64 {
        big_ln(&self.num) - big_ln(&self.den)
    }
}

fn big_ln(x: &BigUint) -> f64 {
    let bits = x.bits();
    if bits < 1000 {
        return x.to_f64().unwrap_or(f64::INFINITY).ln();
    }
    let shift = bits - 64;
    let top = (x >> shift).to_f64().expect("64-bit value");
    top.ln() + shift as f64 * std::f64::consts::LN_2
}

impl PartialOrd for ExactProb {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ExactProb {
    fn cmp(&self, other: &Self) -> Ordering {
        (&self.num * &other.den).cmp(&(&other.num * &self.den))
    }
}

#[derive(Debug, Clone)]
struct Best {
    prob: ExactProb,
    /// Piece lengths in chars, left to right.
    lens: Vec<usize>,
}

impl Best {
    /// `Greater` when `self` is the preferred segmentation: higher
    /// probability, then fewer pieces, then the longer leading piece.
    fn preference(&self, other: &Self) -> Ordering {
        self.prob
            .cmp(&other.prob)
            .then_with(|| other.lens.len().cmp(&self.lens.len()))
            .then_with(|| self.lens.cmp(&other.lens))
    }
}

/// Segments a lowercase hashtag body into its most probable words.
pub fn segment_hashtag(body: &str, lexicon: &Lexicon) -> Result<Vec<String>, TextprepError> {
    Ok(segment_scored(body, lexicon)?.0)
}

/// Like [`segment_hashtag`], also returning the exact probability of the
/// chosen split.
pub fn segment_scored(
    body: &str,
    lexicon: &Lexicon,
) -> Result<(Vec<String>, ExactProb), TextprepError> {
    if body.is_empty() {
        return Err(TextprepError::EmptyInput);
    }
    let bounds: Vec<usize> = body
        .char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(body.len()))
        .collect();
    let n = bounds.len() - 1;

    // best[i] is the best segmentation of the suffix starting at char i
    let mut best: Vec<Option<Best>> = vec![None; n + 1];
    best[n] = Some(Best { prob: ExactProb::one(), lens: Vec::new() });
    for i in (0..n).rev() {
        let mut winner: Option<Best> = None;
        for j in (i + 1)..=n {
            let piece = &body[bounds[i]..bounds[j]];
            let rest = best[j].as_ref().expect("suffix solved");
            let mut lens = Vec::with_capacity(rest.lens.len() + 1);
            lens.push(j - i);
            lens.extend_from_slice(&rest.lens);
            let cand = Best { prob: ExactProb::of_piece(piece, lexicon).times(&rest.prob), lens };
            if winner.as_ref().is_none_or(|w| cand.preference(w) == Ordering::Greater) {
                winner = Some(cand);
            }
        }
        best[i] = winner;
    }

    let Best { prob, lens } = best[0].take().expect("prefix solved");
    let mut words = Vec::with_capacity(lens.len());
    let mut at = 0;
    for len in lens {
        words.push(body[bounds[at]..bounds[at + len]].to_string());
        at += len;
    }
    Ok((words, prob))
}

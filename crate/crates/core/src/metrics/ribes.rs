use std::collections::HashMap;

use super::bleu::check_corpus;
use crate::error::Result;

pub const RIBES_ALPHA: f64 = 0.25;
pub const RIBES_BETA: f64 = 0.10;

fn count<S: AsRef<str>>(tokens: &[S]) -> HashMap<&str, usize> {
    let mut m = HashMap::new();
    for t in tokens {
        *m.entry(t.as_ref()).or_insert(0) += 1;
    }
    m
}

/// Index of the only occurrence of `pattern` in `tokens`, if exactly one.
fn unique_position<S: AsRef<str>>(tokens: &[S], pattern: &[&str]) -> Option<usize> {
    if tokens.len() < pattern.len() {
        return None;
    }
    let mut found = None;
    for (i, w) in tokens.windows(pattern.len()).enumerate() {
        if w.iter().map(AsRef::as_ref).eq(pattern.iter().copied()) {
            if found.is_some() {
                return None;
            }
            found = Some(i);
        }
    }
    found
}

/// One-to-one word alignment as `(hyp index, ref index)` pairs, sorted by
/// hyp index.
///
/// A token occurring once in each side aligns directly. Otherwise it aligns
/// through a context that occurs exactly once in the reference: the bigram
/// with its right neighbour, then with its left neighbour, then the same for
/// windows of growing width. Each reference index is used once.
pub fn align_words<S: AsRef<str>>(hyp: &[S], reference: &[S]) -> Vec<(usize, usize)> {
    let hc = count(hyp);
    let rc = count(reference);
    let words: Vec<&str> = hyp.iter().map(AsRef::as_ref).collect();
    let mut used = vec![false; reference.len()];
    let mut out = Vec::new();
    for (i, &w) in words.iter().enumerate() {
        let Some(&in_ref) = rc.get(w) else { continue };
        let candidate = if hc[w] == 1 && in_ref == 1 {
            reference.iter().position(|r| r.as_ref() == w)
        } else {
            (1..words.len()).find_map(|width| {
                let right = (i + width < words.len())
                    .then(|| unique_position(reference, &words[i..=i + width]))
                    .flatten();
                right.or_else(|| {
                    (i >= width)
                        .then(|| unique_position(reference, &words[i - width..=i]).map(|j| j + width))
                        .flatten()
                })
            })
        };
        if let Some(j) = candidate {
            if !used[j] {
                used[j] = true;
                out.push((i, j));
            }
        }
    }
    out
}

/// Number of pairs `i < j` with `v[i] > v[j]`, by merge sort.
pub fn count_inversions(v: &[usize]) -> u64 {
    fn sort(v: &mut [usize], buf: &mut Vec<usize>) -> u64 {
        let n = v.len();
        if n < 2 {
            return 0;
        }
        let mid = n / 2;
        let mut inv = sort(&mut v[..mid], buf) + sort(&mut v[mid..], buf);
        buf.clear();
        let (mut i, mut j) = (0, mid);
        while i < mid && j < n {
            if v[j] < v[i] {
                inv += (mid - i) as u64;
                buf.push(v[j]);
                j += 1;
            } else {
                buf.push(v[i]);
                i += 1;
            }
        }
        buf.extend_from_slice(&v[i..mid]);
        buf.extend_from_slice(&v[j..]);
        v.copy_from_slice(buf);
        inv
    }
    let mut v = v.to_vec();
    let mut buf = Vec::with_capacity(v.len());
    sort(&mut v, &mut buf)
}

/// Kendall's τ of distinct ranks against their sorted order; `None` below two items.
pub fn kendall_tau(ranks: &[usize]) -> Option<f64> {
    let n = ranks.len() as u64;
    if n < 2 {
        return None;
    }
    let pairs = n * (n - 1) / 2;
    Some(1.0 - 2.0 * count_inversions(ranks) as f64 / pairs as f64)
}

pub fn ribes_sentence<S: AsRef<str>>(hyp: &[S], reference: &[S], alpha: f64, beta: f64) -> f64 {
    let align = align_words(hyp, reference);
    let ranks: Vec<usize> = align.iter().map(|&(_, j)| j).collect();
    let Some(tau) = kendall_tau(&ranks) else {
        return 0.0;
    };
    let nkt = (tau + 1.0) / 2.0;
    let precision = align.len() as f64 / hyp.len() as f64;
    let bp = (1.0 - reference.len() as f64 / hyp.len() as f64).exp().min(1.0);
    nkt * precision.powf(alpha) * bp.powf(beta)
}

/// Corpus RIBES: the mean sentence score.
pub fn ribes<S: AsRef<str>>(hyps: &[Vec<S>], refs: &[Vec<S>], alpha: f64, beta: f64) -> Result<f64> {
    check_corpus(hyps.len(), refs.len())?;
    let total: f64 = hyps
        .iter()
        .zip(refs)
        .map(|(h, r)| ribes_sentence(h, r, alpha, beta))
        .sum();
    Ok(total / hyps.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn alignment_examples() {
        assert_eq!(align_words(&t("a b c"), &t("a b c")), vec![(0, 0), (1, 1), (2, 2)]);
        assert_eq!(align_words(&t("c b a"), &t("a b c")), vec![(0, 2), (1, 1), (2, 0)]);
        assert_eq!(align_words(&t("a z"), &t("a b")), vec![(0, 0)]);
    }

    #[test]
    fn bigram_context_disambiguates() {
        // "the" twice on both sides: aligned through "the cat" and "the mat".
        let hyp = t("the cat on the mat");
        let r = t("the mat under the cat");
        assert_eq!(align_words(&hyp, &r), vec![(0, 3), (1, 4), (3, 0), (4, 1)]);
    }

    #[test]
    fn wider_context_when_bigrams_repeat() {
        let s = t("a c c c");
        assert_eq!(align_words(&s, &s), vec![(0, 0), (1, 1), (2, 2), (3, 3)]);
    }

    #[test]
    fn ribes_examples() {
        let r = t("a b c d");
        assert!((ribes_sentence(&r, &r, RIBES_ALPHA, RIBES_BETA) - 1.0).abs() < 1e-12);
        assert_eq!(ribes_sentence(&t("d c b a"), &r, RIBES_ALPHA, RIBES_BETA), 0.0);
        assert_eq!(ribes_sentence(&t("a x y"), &r, RIBES_ALPHA, RIBES_BETA), 0.0);
        assert_eq!(ribes_sentence(&Vec::<&str>::new(), &r, RIBES_ALPHA, RIBES_BETA), 0.0);
    }

    #[test]
    fn inversions() {
        assert_eq!(count_inversions(&[3, 2, 1, 0]), 6);
        assert_eq!(count_inversions(&[0, 1, 2]), 0);
        assert_eq!(count_inversions(&[1, 0, 3, 2]), 2);
        assert_eq!(kendall_tau(&[5]), None);
    }
}

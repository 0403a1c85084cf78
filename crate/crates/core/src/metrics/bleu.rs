use std::collections::HashMap;

use crate::error::{Error, Result};

/// Floor applied to each n-gram precision when smoothing is enabled.
pub const BLEU_SMOOTHING_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BleuOptions {
    pub max_n: usize,
    pub smoothing: bool,
}

impl Default for BleuOptions {
    fn default() -> Self {
        Self {
            max_n: 4,
            smoothing: false,
        }
    }
}

/// Pooled clipped n-gram statistics of a corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BleuStats {
    /// Clipped matches for n = 1..=max_n.
    pub matches: Vec<u64>,
    /// Hypothesis n-gram totals for n = 1..=max_n.
    pub totals: Vec<u64>,
    pub hyp_len: u64,
    pub ref_len: u64,
}

fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, u64> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w.iter().map(AsRef::as_ref).collect()).or_insert(0) += 1;
        }
    }
    m
}

pub(crate) fn check_corpus(hyps: usize, refs: usize) -> Result<()> {
    if hyps != refs {
        return Err(Error::LengthMismatch { hyps, refs });
    }
    if hyps == 0 {
        return Err(Error::EmptyCorpus);
    }
    Ok(())
}

pub fn bleu_stats<S: AsRef<str>>(hyps: &[Vec<S>], refs: &[Vec<S>], max_n: usize) -> Result<BleuStats> {
    check_corpus(hyps.len(), refs.len())?;
    if max_n == 0 {
        return Err(Error::InvalidArgument("max_n must be positive".into()));
    }
    let mut s = BleuStats {
        matches: vec![0; max_n],
        totals: vec![0; max_n],
        hyp_len: 0,
        ref_len: 0,
    };
    for (h, r) in hyps.iter().zip(refs) {
        s.hyp_len += h.len() as u64;
        s.ref_len += r.len() as u64;
        for n in 1..=max_n {
            let hc = ngram_counts(h, n);
            let rc = ngram_counts(r, n);
            s.totals[n - 1] += hc.values().sum::<u64>();
            s.matches[n - 1] += hc
                .iter()
                .map(|(g, &c)| c.min(rc.get(g).copied().unwrap_or(0)))
                .sum::<u64>();
        }
    }
    Ok(s)
}

impl BleuStats {
    /// Score in `[0, 100]`. Orders with no hypothesis n-grams are dropped and
    /// the geometric mean runs over the remaining `n`.
    pub fn score(&self, smoothing: bool) -> f64 {
        let usable: Vec<usize> = (0..self.totals.len()).filter(|&i| self.totals[i] > 0).collect();
        if usable.is_empty() || self.hyp_len == 0 {
            return 0.0;
        }
        let mut log_sum = 0.0;
        for &i in &usable {
            let mut p = self.matches[i] as f64 / self.totals[i] as f64;
            if smoothing {
                p = p.max(BLEU_SMOOTHING_FLOOR);
            }
            if p == 0.0 {
                return 0.0;
            }
            log_sum += p.ln();
        }
        let bp = (1.0 - self.ref_len as f64 / self.hyp_len as f64).exp().min(1.0);
        100.0 * bp * (log_sum / usable.len() as f64).exp()
    }
}

/// Corpus BLEU over tokenized sentences, one reference each.
pub fn bleu<S: AsRef<str>>(hyps: &[Vec<S>], refs: &[Vec<S>], opts: BleuOptions) -> Result<f64> {
    Ok(bleu_stats(hyps, refs, opts.max_n)?.score(opts.smoothing))
}

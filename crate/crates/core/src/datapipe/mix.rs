use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Per-corpus sample counts: `⌊cap / k⌋` each, with the remainder going to
/// the earliest corpora.
pub fn mix_quotas(k: usize, cap: usize) -> Vec<usize> {
    (0..k).map(|i| cap / k + usize::from(i < cap % k)).collect()
}

/// Draws an equal share of `cap` samples from each corpus.
///
/// A corpus at least as large as its quota is sampled without replacement.
/// A smaller one contributes every item once and is topped up by sampling
/// with replacement. Output keeps corpus order.
pub fn mix_samples<T: Clone>(corpora: &[(String, Vec<T>)], cap: usize, seed: u64) -> Result<Vec<T>> {
    if corpora.is_empty() {
        return Err(Error::InvalidArgument("no corpora to mix".into()));
    }
    if cap == 0 {
        return Err(Error::InvalidArgument("sample cap must be positive".into()));
    }
    if let Some((id, _)) = corpora.iter().find(|(_, items)| items.is_empty()) {
        return Err(Error::InvalidArgument(format!("corpus `{id}` is empty")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(cap);
    for ((_, items), quota) in corpora.iter().zip(mix_quotas(corpora.len(), cap)) {
        if quota <= items.len() {
            out.extend(items.choose_multiple(&mut rng, quota).cloned());
        } else {
            let mut all: Vec<&T> = items.iter().collect();
            all.shuffle(&mut rng);
            out.extend(all.into_iter().cloned());
            for _ in items.len()..quota {
                out.push(items[rng.random_range(0..items.len())].clone());
            }
        }
    }
    Ok(out)
}

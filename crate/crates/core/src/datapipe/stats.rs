use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::vg::{Lang, Split, VgRecord};

/// Counts and mean token lengths for one language and split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitStats {
    pub lang: Lang,
    pub split: Split,
    pub count: usize,
    /// Mean English tokens per record, rounded to 2 decimals.
    pub avg_english_tokens: f64,
    /// Mean target-language tokens per record, rounded to 2 decimals.
    pub avg_target_tokens: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CorpusStats {
    /// Non-empty `(lang, split)` groups in language then split order.
    pub splits: Vec<SplitStats>,
}

impl CorpusStats {
    pub fn get(&self, lang: Lang, split: Split) -> Option<&SplitStats> {
        self.splits.iter().find(|s| s.lang == lang && s.split == split)
    }

    pub fn to_table(&self) -> String {
        let mut out = String::from("lang\tsplit\tcount\tavg_en_tokens\tavg_target_tokens\n");
        for s in &self.splits {
            out.push_str(&format!(
                "{}\t{}\t{}\t{:.2}\t{:.2}\n",
                s.lang, s.split, s.count, s.avg_english_tokens, s.avg_target_tokens
            ));
        }
        out
    }
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

pub fn corpus_stats(records: &[VgRecord], tokenize: &dyn Fn(&str) -> Vec<String>) -> CorpusStats {
    let mut groups: BTreeMap<(Lang, Split), (usize, usize, usize)> = BTreeMap::new();
    for r in records {
        let g = groups.entry((r.target_lang, r.split)).or_default();
        g.0 += 1;
        g.1 += tokenize(&r.english).len();
        g.2 += tokenize(&r.target_text).len();
    }
    CorpusStats {
        splits: groups
            .into_iter()
            .map(|((lang, split), (n, en, tgt))| SplitStats {
                lang,
                split,
                count: n,
                avg_english_tokens: round2(en as f64 / n as f64),
                avg_target_tokens: round2(tgt as f64 / n as f64),
            })
            .collect(),
    }
}

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::bleu::{bleu, BleuOptions};
use super::ribes::{ribes, RIBES_ALPHA, RIBES_BETA};
use super::tokenize::tokenize;
use crate::datapipe::{Lang, Split};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricOptions {
    #[serde(default = "default_max_n")]
    pub bleu_max_n: usize,
    #[serde(default)]
    pub bleu_smoothing: bool,
    #[serde(default = "default_alpha")]
    pub ribes_alpha: f64,
    #[serde(default = "default_beta")]
    pub ribes_beta: f64,
}

fn default_max_n() -> usize {
    4
}

fn default_alpha() -> f64 {
    RIBES_ALPHA
}

fn default_beta() -> f64 {
    RIBES_BETA
}

impl Default for MetricOptions {
    fn default() -> Self {
        Self {
            bleu_max_n: default_max_n(),
            bleu_smoothing: false,
            ribes_alpha: RIBES_ALPHA,
            ribes_beta: RIBES_BETA,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub lang: Lang,
    pub split: Split,
    /// Corpus BLEU in `[0, 100]`.
    pub bleu: f64,
    /// Mean sentence RIBES in `[0, 1]`.
    pub ribes: f64,
    pub n_sentences: usize,
    pub hyp_tokens: usize,
    pub ref_tokens: usize,
}

/// Scores line-aligned hypothesis and reference sentences.
pub fn evaluate_lines(
    hyps: &[&str],
    refs: &[&str],
    lang: Lang,
    split: Split,
    opts: &MetricOptions,
) -> Result<MetricReport> {
    let h: Vec<Vec<String>> = hyps.iter().map(|s| tokenize(s)).collect();
    let r: Vec<Vec<String>> = refs.iter().map(|s| tokenize(s)).collect();
    let bleu = bleu(
        &h,
        &r,
        BleuOptions {
            max_n: opts.bleu_max_n,
            smoothing: opts.bleu_smoothing,
        },
    )?;
    let ribes = ribes(&h, &r, opts.ribes_alpha, opts.ribes_beta)?;
    Ok(MetricReport {
        lang,
        split,
        bleu,
        ribes,
        n_sentences: h.len(),
        hyp_tokens: h.iter().map(Vec::len).sum(),
        ref_tokens: r.iter().map(Vec::len).sum(),
    })
}

/// Scores two files with one sentence per line.
pub fn evaluate(hyp_path: &Path, ref_path: &Path, lang: Lang, split: Split, opts: &MetricOptions) -> Result<MetricReport> {
    let hyp = crate::io::read_to_string(hyp_path)?;
    let reference = crate::io::read_to_string(ref_path)?;
    let h: Vec<&str> = hyp.lines().collect();
    let r: Vec<&str> = reference.lines().collect();
    if h.len() != r.len() {
        return Err(Error::LengthMismatch {
            hyps: h.len(),
            refs: r.len(),
        });
    }
    evaluate_lines(&h, &r, lang, split, opts)
}

/// Leaderboard columns in display order.
pub const LEADERBOARD_COLUMNS: [(Lang, Split, &str); 6] = [
    (Lang::Hi, Split::Challenge, "Hi-Ch"),
    (Lang::Hi, Split::Test, "Hi-Test"),
    (Lang::Bn, Split::Challenge, "Bn-Ch"),
    (Lang::Bn, Split::Test, "Bn-Test"),
    (Lang::Ml, Split::Challenge, "Ml-Ch"),
    (Lang::Ml, Split::Test, "Ml-Test"),
];

/// Markdown table with one row per system and a BLEU / RIBES pair per
/// language and split. Absent cells show `-`.
pub fn render_leaderboard(rows: &[(String, Vec<MetricReport>)]) -> String {
    let mut out = String::from("| System |");
    for (_, _, name) in LEADERBOARD_COLUMNS {
        out.push_str(&format!(" {name} BLEU | {name} RIBES |"));
    }
    out.push_str("\n|---|");
    out.push_str(&"---:|".repeat(2 * LEADERBOARD_COLUMNS.len()));
    out.push('\n');
    for (system, reports) in rows {
        let cells: BTreeMap<(Lang, Split), &MetricReport> =
            reports.iter().map(|r| ((r.lang, r.split), r)).collect();
        out.push_str(&format!("| {system} |"));
        for (lang, split, _) in LEADERBOARD_COLUMNS {
            match cells.get(&(lang, split)) {
                Some(r) => out.push_str(&format!(" {:.1} | {:.3} |", r.bleu, r.ribes)),
                None => out.push_str(" - | - |"),
            }
        }
        out.push('\n');
    }
    out
}

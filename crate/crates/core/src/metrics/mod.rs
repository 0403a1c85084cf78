//! Translation metrics: a rule-based tokenizer, corpus BLEU, RIBES and
//! leaderboard reporting.

mod bleu;
mod report;
mod ribes;
mod tokenize;

pub use bleu::{bleu, bleu_stats, BleuOptions, BleuStats, BLEU_SMOOTHING_FLOOR};
pub use report::{evaluate, evaluate_lines, render_leaderboard, MetricOptions, MetricReport, LEADERBOARD_COLUMNS};
pub use ribes::{
    align_words, count_inversions, kendall_tau, ribes, ribes_sentence, RIBES_ALPHA, RIBES_BETA,
};
pub use tokenize::tokenize;

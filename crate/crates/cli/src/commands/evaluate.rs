use std::path::PathBuf;

use anyhow::Context;
use gmmt_core::datapipe::{Lang, Split};
use gmmt_core::metrics::{evaluate, render_leaderboard, MetricReport};

use super::write_json;
use crate::config::RunConfig;
use crate::Kind;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Hypotheses, one per line.
    #[arg(long)]
    pub hyp: PathBuf,
    /// References, line-aligned with the hypotheses.
    #[arg(long = "ref")]
    pub reference: PathBuf,
    /// Target language (hi, bn or ml).
    #[arg(long)]
    pub lang: Lang,
    /// Evaluation split (train, valid, test or challenge).
    #[arg(long)]
    pub split: Split,
    /// Report file to write; defaults to `{out_dir}/reports/{lang}.{split}.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cfg: &RunConfig, args: Args) -> anyhow::Result<()> {
    let report = evaluate(&args.hyp, &args.reference, args.lang, args.split, &cfg.metrics)
        .with_context(|| format!("scoring {} against {}", args.hyp.display(), args.reference.display()))?;
    let out = args
        .out
        .unwrap_or_else(|| cfg.out_dir().join("reports").join(format!("{}.{}.json", args.lang, args.split)));
    write_json(&out, &report)?;
    println!(
        "{}-{}: BLEU {:.1}  RIBES {:.3}  ({} sentences)",
        args.lang, args.split, report.bleu, report.ribes, report.n_sentences
    );
    Ok(())
}

#[derive(Debug, clap::Args)]
pub struct ReportArgs {
    /// `NAME=report.json[,report.json...]`, one per table row.
    #[arg(long = "row", required = true)]
    pub rows: Vec<String>,
    /// Markdown file to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn report(args: ReportArgs) -> anyhow::Result<()> {
    let mut rows = Vec::new();
    for spec in &args.rows {
        let (name, files) = spec
            .split_once('=')
            .ok_or_else(|| anyhow::anyhow!("row `{spec}` is not NAME=FILE[,FILE...]").context(Kind::Config))?;
        let mut reports = Vec::new();
        for f in files.split(',').filter(|f| !f.is_empty()) {
            let text = gmmt_core::io::read_to_string(f.as_ref())?;
            let r: MetricReport = serde_json::from_str(&text).with_context(|| format!("parsing {f}"))?;
            reports.push(r);
        }
        rows.push((name.to_string(), reports));
    }
    let table = render_leaderboard(&rows);
    if let Some(out) = &args.out {
        gmmt_core::io::write_atomic(out, table.as_bytes())?;
    }
    print!("{table}");
    Ok(())
}

use std::path::PathBuf;

use anyhow::{bail, Context};
use gmmt_core::metrics::{bleu, tokenize, BleuOptions};
use gmmt_core::training::{hyperparameter_sweep, load_checkpoint, validation_loss, SweepScore};

use super::generate::{decode, requests_from_instances};
use super::{load_corpus, to_examples, write_json};
use crate::config::RunConfig;
use crate::Kind;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Checkpoint to finetune from (typically after stage 2).
    #[arg(long)]
    pub checkpoint: PathBuf,
}

/// Trains the configured stage 3 once per grid cell and ranks the cells by
/// validation BLEU.
pub fn run(cfg: &RunConfig, args: Args) -> anyhow::Result<()> {
    let template = cfg
        .stage_configs(None)?
        .into_iter()
        .find(|s| s.stage == 3)
        .ok_or_else(|| anyhow::anyhow!("sweep needs a stage 3 entry in the config").context(Kind::Config))?;
    let val_id = cfg
        .sweep
        .validation
        .clone()
        .or_else(|| cfg.data.validation.clone())
        .ok_or_else(|| anyhow::anyhow!("set sweep.validation or data.validation").context(Kind::Config))?;
    let base = load_checkpoint(&args.checkpoint)
        .with_context(|| format!("loading {}", args.checkpoint.display()))?
        .model;
    let inst_dir = cfg.instances_dir();
    let mut train = Vec::new();
    for (id, _) in &template.data_mix {
        train.extend(to_examples(&base, &load_corpus(&inst_dir, id)?)?);
    }
    if train.is_empty() {
        bail!(anyhow::anyhow!("stage 3 data_mix is empty").context(Kind::Config));
    }
    let val_insts = load_corpus(&inst_dir, &val_id)?;
    let val_examples = to_examples(&base, &val_insts)?;
    let requests = requests_from_instances(&val_insts, false)?;
    let refs: Vec<Vec<String>> = val_insts.iter().map(|i| tokenize(&i.response)).collect();
    let max_new = cfg.generate.max_new_tokens;
    let smoothing = cfg.metrics.bleu_smoothing;

    let rows = hyperparameter_sweep(&base, &train, &template, &cfg.sweep.lrs, &cfg.sweep.epochs, |model| {
        let hyps = decode(model, &requests, max_new).map_err(|e| gmmt_core::Error::InvalidArgument(format!("{e:#}")))?;
        let hyps: Vec<Vec<String>> = hyps.iter().map(|h| tokenize(h)).collect();
        Ok(SweepScore {
            bleu: bleu(&hyps, &refs, BleuOptions { max_n: cfg.metrics.bleu_max_n, smoothing })?,
            val_loss: validation_loss(model, &val_examples)?,
        })
    })?;
    for r in &rows {
        match (&r.score, &r.error) {
            (Some(s), _) => println!("lr {:<8e} epochs {:<2} BLEU {:6.2}  val_loss {:.4}", r.lr, r.epochs, s.bleu, s.val_loss),
            (None, Some(e)) => println!("lr {:<8e} epochs {:<2} failed: {e}", r.lr, r.epochs),
            (None, None) => {}
        }
    }
    write_json(&cfg.out_dir().join("sweep.json"), &rows)?;
    Ok(())
}

use std::collections::{BTreeMap, BTreeSet};

use anyhow::{bail, Context};
use gmmt_core::datapipe::read_instances;
use gmmt_core::model::{MultimodalModel, Vocabulary};
use gmmt_core::training::{
    derive_stage_seed, load_checkpoint, run_pipeline, Checkpoint, Corpora, FinetuneMode, StageConfig,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{load_corpus, to_examples, write_json};
use crate::config::RunConfig;
use crate::Kind;

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum ModeArg {
    Full,
    Lora,
}

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Run only these configured stages, e.g. `1,3`.
    #[arg(long, value_delimiter = ',')]
    pub stages: Option<Vec<u8>>,
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long)]
    pub resume: Option<std::path::PathBuf>,
    /// Finetuning mode for stage 3.
    #[arg(long, value_enum)]
    pub stage3_mode: Option<ModeArg>,
}

#[derive(Serialize)]
struct StageSummary {
    stage: u8,
    config: StageConfig,
    steps: usize,
    first_loss: Option<f64>,
    final_loss: Option<f64>,
    epoch_val_losses: Vec<Option<f64>>,
    changed_components: Vec<String>,
    digests_before: BTreeMap<String, String>,
    digests_after: BTreeMap<String, String>,
}

#[derive(Serialize)]
struct TrainSummary {
    seed: u64,
    resumed_from_stages: Vec<u8>,
    model: gmmt_core::model::ModelConfig,
    stages: Vec<StageSummary>,
}

/// Alphabet of every instance file in the instances directory, so that
/// evaluation prompts encode with the training vocabulary.
fn harvest_vocabulary(dir: &std::path::Path) -> anyhow::Result<Vocabulary> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    files.sort();
    let mut chars = BTreeSet::new();
    for f in files {
        for inst in read_instances(&f)? {
            chars.extend(inst.prompt.chars());
            chars.extend(inst.response.chars());
        }
    }
    let text: String = chars.into_iter().collect();
    Ok(Vocabulary::from_texts([text.as_str()]))
}

pub fn run(cfg: &RunConfig, args: Args) -> anyhow::Result<()> {
    let mode = args.stage3_mode.map(|m| match m {
        ModeArg::Full => FinetuneMode::Full,
        ModeArg::Lora => FinetuneMode::Lora,
    });
    let mut stages = cfg.stage_configs(mode).map_err(|e| e.context(Kind::Config))?;
    if let Some(sel) = &args.stages {
        for s in sel {
            if !stages.iter().any(|c| c.stage == *s) {
                bail!(anyhow::anyhow!("stage {s} is not configured").context(Kind::Config));
            }
        }
        stages.retain(|c| sel.contains(&c.stage));
    }
    if stages.is_empty() {
        bail!(anyhow::anyhow!("no stages to run").context(Kind::Config));
    }
    let inst_dir = cfg.instances_dir();
    let out = cfg.out_dir();

    let start = match &args.resume {
        Some(p) => load_checkpoint(p).with_context(|| format!("loading {}", p.display()))?,
        None => {
            let vocab = harvest_vocabulary(&inst_dir)?;
            let model_cfg = cfg.model_config(vocab.len());
            let mut rng = ChaCha8Rng::seed_from_u64(derive_stage_seed(cfg.seed, 0));
            let model = MultimodalModel::new(model_cfg, vocab, &mut rng).map_err(|e| anyhow::Error::new(e).context(Kind::Config))?;
            Checkpoint::new(model, cfg.seed)
        }
    };
    let resumed_from_stages = start.stages();

    let ids: BTreeSet<&str> = stages
        .iter()
        .flat_map(|s| s.data_mix.iter().map(|(id, _)| id.as_str()))
        .collect();
    let mut corpora = Corpora::new();
    for id in ids {
        corpora.insert(id.to_string(), to_examples(&start.model, &load_corpus(&inst_dir, id)?)?);
    }
    let validation = match &cfg.data.validation {
        Some(id) => Some(to_examples(&start.model, &load_corpus(&inst_dir, id)?)?),
        None => None,
    };

    let model_cfg = start.model.config.clone();
    let outcome = run_pipeline(start, &stages, &corpora, validation.as_deref(), &out)?;

    let mut summaries = Vec::new();
    for (cfg_s, log) in stages.iter().zip(&outcome.logs) {
        println!(
            "stage {}: {} steps, loss {} -> {}, changed: [{}]",
            log.stage,
            log.steps.len(),
            log.steps.first().map_or("-".into(), |s| format!("{:.4}", s.loss)),
            log.final_loss().map_or("-".into(), |l| format!("{l:.4}")),
            log.changed_components().join(", ")
        );
        for (k, v) in &log.digests_after {
            println!("  {k:<8} {}", &v[..16]);
        }
        summaries.push(StageSummary {
            stage: log.stage,
            config: cfg_s.clone(),
            steps: log.steps.len(),
            first_loss: log.steps.first().map(|s| s.loss),
            final_loss: log.final_loss(),
            epoch_val_losses: log.epoch_val_losses.clone(),
            changed_components: log.changed_components(),
            digests_before: log.digests_before.clone(),
            digests_after: log.digests_after.clone(),
        });
    }
    write_json(
        &out.join("train_summary.json"),
        &TrainSummary {
            seed: cfg.seed,
            resumed_from_stages,
            model: model_cfg,
            stages: summaries,
        },
    )?;
    if let Some(last) = outcome.checkpoint_paths.last() {
        println!("final checkpoint: {}", last.display());
    }
    Ok(())
}

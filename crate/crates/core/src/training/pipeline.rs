use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::checkpoint::{save_checkpoint, Checkpoint};
use super::run::{run_stage, Example, TrainLog};
use super::stage::StageConfig;
use crate::error::{Error, Result};

/// Named corpora a stage's `data_mix` can draw from.
pub type Corpora = BTreeMap<String, Vec<Example>>;

#[derive(Debug)]
pub struct PipelineOutcome {
    pub checkpoint: Checkpoint,
    pub logs: Vec<TrainLog>,
    pub checkpoint_paths: Vec<PathBuf>,
}

/// Realizes a `data_mix`: each corpus contributes `round(weight · len)`
/// examples, cycling through it in order when the weight exceeds one.
pub fn build_stage_dataset(mix: &[(String, f64)], corpora: &Corpora) -> Result<Vec<Example>> {
    let mut out = Vec::new();
    for (id, weight) in mix {
        let corpus = corpora
            .get(id)
            .ok_or_else(|| Error::Stage(format!("unknown corpus `{id}` in data_mix")))?;
        if corpus.is_empty() {
            continue;
        }
        let n = (weight * corpus.len() as f64).round() as usize;
        out.extend(corpus.iter().cycle().take(n).cloned());
    }
    Ok(out)
}

/// Stage numbers must strictly increase, including across a resumed checkpoint.
pub fn check_stage_order(previous: &[u8], stages: &[StageConfig]) -> Result<()> {
    let mut last = previous.last().copied().unwrap_or(0);
    for s in stages {
        if s.stage <= last {
            return Err(Error::Stage(format!(
                "stage {} cannot follow stage {last}",
                s.stage
            )));
        }
        last = s.stage;
    }
    Ok(())
}

pub fn stage_checkpoint_path(out_dir: &Path, stage: u8) -> PathBuf {
    out_dir.join(format!("stage{stage}.ckpt"))
}

pub fn stage_log_path(out_dir: &Path, stage: u8) -> PathBuf {
    out_dir.join(format!("stage{stage}.train.jsonl"))
}

/// Runs `stages` in order starting from `start`, persisting a checkpoint and
/// a step log after each one. Resuming from any of those checkpoints with the
/// remaining stages reproduces the uninterrupted run bit for bit.
pub fn run_pipeline(
    start: Checkpoint,
    stages: &[StageConfig],
    corpora: &Corpora,
    validation: Option<&[Example]>,
    out_dir: &Path,
) -> Result<PipelineOutcome> {
    check_stage_order(&start.stages(), stages)?;
    for s in stages {
        s.validate()?;
    }
    let mut ckpt = start;
    let mut logs = Vec::with_capacity(stages.len());
    let mut paths = Vec::with_capacity(stages.len());
    for cfg in stages {
        let data = build_stage_dataset(&cfg.data_mix, corpora)?;
        let log = run_stage(&mut ckpt.model, &data, cfg, validation).map_err(|e| match e {
            Error::Stage(m) => Error::Stage(format!("stage {}: {m}", cfg.stage)),
            other => other,
        })?;
        ckpt.provenance.push(cfg.clone());
        let path = stage_checkpoint_path(out_dir, cfg.stage);
        save_checkpoint(&ckpt, &path)?;
        log.write_jsonl(&stage_log_path(out_dir, cfg.stage))?;
        paths.push(path);
        logs.push(log);
    }
    Ok(PipelineOutcome {
        checkpoint: ckpt,
        logs,
        checkpoint_paths: paths,
    })
}

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::stage::{freeze_plan, FinetuneMode, StageConfig};
use crate::error::{Error, Result};
use crate::model::{default_lora_targets, MultimodalModel, TokenId};
use crate::numerics::{AdamConfig, AdamState, Tape};

/// A tokenized training sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: String,
    pub prompt: Vec<TokenId>,
    pub image: Option<Vec<f64>>,
    pub response: Vec<TokenId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub stage: u8,
    pub step: usize,
    pub epoch: usize,
    pub loss: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct TrainLog {
    pub stage: u8,
    pub steps: Vec<StepRecord>,
    pub epoch_val_losses: Vec<Option<f64>>,
    pub wall_clock_secs: f64,
    pub digests_before: BTreeMap<String, String>,
    pub digests_after: BTreeMap<String, String>,
}

impl TrainLog {
    /// Component names whose parameter digest differs before/after the stage.
    pub fn changed_components(&self) -> Vec<String> {
        self.digests_before
            .iter()
            .filter(|(k, v)| self.digests_after.get(*k) != Some(*v))
            .map(|(k, _)| k.clone())
            .collect()
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.steps.last().map(|s| s.loss)
    }

    /// JSON lines, one record per optimizer step. Wall-clock time is left out
    /// so identical runs write identical logs.
    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        for s in &self.steps {
            serde_json::to_writer(&mut buf, s)?;
            buf.push(b'\n');
        }
        crate::io::write_atomic(path, &buf)
    }
}

fn check_fits(model: &MultimodalModel, data: &[Example]) -> Result<()> {
    for ex in data {
        let needed = model.sequence_len(ex.image.is_some(), ex.prompt.len(), ex.response.len(), true);
        if needed > model.config.c_total {
            return Err(Error::Sample {
                id: ex.id.clone(),
                source: Box::new(Error::ContextOverflow {
                    needed,
                    limit: model.config.c_total,
                }),
            });
        }
    }
    Ok(())
}

/// Token-weighted mean loss of a batch, recorded on `tape`.
fn batch_loss(model: &MultimodalModel, tape: &mut Tape, batch: &[&Example]) -> Result<crate::numerics::Var> {
    let mut parts = Vec::with_capacity(batch.len());
    let mut total = 0usize;
    for ex in batch {
        let (loss, n) = model
            .example_loss(tape, &ex.prompt, ex.image.as_deref(), &ex.response)
            .map_err(|e| Error::Sample {
                id: ex.id.clone(),
                source: Box::new(e),
            })?;
        parts.push((loss, n));
        total += n;
    }
    let mut acc = None;
    for (loss, n) in parts {
        let weighted = tape.scale(loss, n as f64 / total as f64);
        acc = Some(match acc {
            None => weighted,
            Some(a) => tape.add(a, weighted)?,
        });
    }
    acc.ok_or(Error::EmptyDataset)
}

/// Token-weighted mean loss over `data` without recording gradients.
pub fn validation_loss(model: &MultimodalModel, data: &[Example]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut frozen = model.clone();
    frozen.params.freeze_all();
    let mut sum = 0.0;
    let mut count = 0usize;
    for ex in data {
        let mut tape = Tape::new();
        let (loss, n) = frozen.example_loss(&mut tape, &ex.prompt, ex.image.as_deref(), &ex.response)?;
        sum += tape.value(loss).item() * n as f64;
        count += n;
    }
    Ok(sum / count as f64)
}

/// Trains `model` in place for one stage.
///
/// Exactly the parameters named by [`freeze_plan`] may change. The number of
/// optimizer steps is `epochs · ⌈N / batch_size⌉`, capped by `max_steps`.
pub fn run_stage(
    model: &mut MultimodalModel,
    data: &[Example],
    cfg: &StageConfig,
    validation: Option<&[Example]>,
) -> Result<TrainLog> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    check_fits(model, data)?;
    if let Some(v) = validation {
        check_fits(model, v)?;
    }

    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    if cfg.mode == FinetuneMode::Lora && model.lora_adapters().next().is_none() {
        let targets = default_lora_targets(model);
        model.lora_attach(&targets, cfg.lora_rank, cfg.lora_alpha, &mut rng)?;
    }
    let plan = freeze_plan(model, cfg)?;
    model.params.set_trainable(plan)?;
    model.params.clear_grads();

    let mut log = TrainLog {
        stage: cfg.stage,
        digests_before: model.component_digests(),
        ..TrainLog::default()
    };
    let mut adam = AdamState::new(AdamConfig::with_lr(cfg.lr));
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut step = 0usize;

    'epochs: for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            if cfg.max_steps.is_some_and(|m| step >= m) {
                break 'epochs;
            }
            let batch: Vec<&Example> = chunk.iter().map(|&i| &data[i]).collect();
            model.params.zero_grad();
            let mut tape = Tape::new();
            let loss = batch_loss(model, &mut tape, &batch)?;
            let value = tape.value(loss).item();
            if !value.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "non-finite loss at stage {} step {step}",
                    cfg.stage
                )));
            }
            tape.backward(loss)?;
            tape.write_param_grads(&mut model.params)?;
            adam.step(&mut model.params)?;
            log.steps.push(StepRecord {
                stage: cfg.stage,
                step,
                epoch,
                loss: value,
                val_loss: None,
            });
            step += 1;
        }
        let val = match validation {
            Some(v) if !v.is_empty() => Some(validation_loss(model, v)?),
            _ => None,
        };
        if let Some(last) = log.steps.last_mut() {
            last.val_loss = val;
        }
        log.epoch_val_losses.push(val);
    }

    model.params.clear_grads();
    log.digests_after = model.component_digests();
    log.wall_clock_secs = started.elapsed().as_secs_f64();
    Ok(log)
}

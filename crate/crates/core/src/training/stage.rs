use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{MultimodalModel, ADAPTER, DEFAULT_LORA_ALPHA, DEFAULT_LORA_RANK, LLM, LORA};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    VisionEncoder,
    Adapter,
    Llm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinetuneMode {
    Full,
    Lora,
}

/// One training stage: what is trained, how, and on which data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageConfig {
    pub stage: u8,
    pub trainable_components: Vec<Component>,
    pub mode: FinetuneMode,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// `(corpus id, weight)`; a weight of 1.0 uses the corpus once.
    pub data_mix: Vec<(String, f64)>,
    #[serde(default)]
    pub max_steps: Option<usize>,
    #[serde(default = "default_rank")]
    pub lora_rank: usize,
    #[serde(default = "default_alpha")]
    pub lora_alpha: f64,
}

fn default_rank() -> usize {
    DEFAULT_LORA_RANK
}

fn default_alpha() -> f64 {
    DEFAULT_LORA_ALPHA
}

/// Components a stage must train. The vision encoder is never among them.
pub fn required_components(stage: u8) -> Option<Vec<Component>> {
    match stage {
        1 => Some(vec![Component::Adapter]),
        2 | 3 => Some(vec![Component::Adapter, Component::Llm]),
        _ => None,
    }
}

/// Per-stage seed derived from the master seed (SplitMix64 finalizer), so
/// pipelines that share a stage index share its trajectory.
pub fn derive_stage_seed(master: u64, stage: u8) -> u64 {
    let mut z = master ^ (u64::from(stage)).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl StageConfig {
    /// Defaults for a stage: lr 1e-3 / 2e-4 / 1e-4 for stages 1 / 2 / 3, one epoch.
    pub fn for_stage(stage: u8, master_seed: u64) -> Result<Self> {
        let trainable_components = required_components(stage)
            .ok_or_else(|| Error::Stage(format!("unknown stage {stage}")))?;
        let lr = match stage {
            1 => 1e-3,
            2 => 2e-4,
            _ => 1e-4,
        };
        Ok(Self {
            stage,
            trainable_components,
            mode: FinetuneMode::Full,
            lr,
            epochs: 1,
            batch_size: 8,
            seed: derive_stage_seed(master_seed, stage),
            data_mix: Vec::new(),
            max_steps: None,
            lora_rank: DEFAULT_LORA_RANK,
            lora_alpha: DEFAULT_LORA_ALPHA,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let required = required_components(self.stage)
            .ok_or_else(|| Error::Stage(format!("unknown stage {}", self.stage)))?;
        let given: BTreeSet<_> = self.trainable_components.iter().copied().collect();
        let want: BTreeSet<_> = required.iter().copied().collect();
        if given.contains(&Component::VisionEncoder) {
            return Err(Error::Stage("the vision encoder is frozen in every stage".into()));
        }
        if given != want {
            return Err(Error::Stage(format!(
                "stage {} trains {:?}, got {:?}",
                self.stage, required, self.trainable_components
            )));
        }
        if self.mode == FinetuneMode::Lora && self.stage != 3 {
            return Err(Error::Stage(format!(
                "LoRA mode is only valid for stage 3, got stage {}",
                self.stage
            )));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Stage(format!("learning rate {} must be positive", self.lr)));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Stage("epochs and batch_size must be positive".into()));
        }
        if self.mode == FinetuneMode::Lora && self.lora_rank == 0 {
            return Err(Error::Stage("lora_rank must be positive".into()));
        }
        if self.data_mix.iter().any(|(_, w)| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Stage("data_mix weights must be non-negative".into()));
        }
        Ok(())
    }
}

/// Expands a stage's components into the concrete parameter names it updates.
///
/// In LoRA mode the decoder's base weights stay frozen and only the adapter
/// projector and the low-rank factors train.
pub fn freeze_plan(model: &MultimodalModel, cfg: &StageConfig) -> Result<BTreeSet<String>> {
    cfg.validate()?;
    let mut prefixes = Vec::new();
    for c in &cfg.trainable_components {
        match (c, cfg.mode) {
            (Component::Adapter, _) => prefixes.push(ADAPTER),
            (Component::Llm, FinetuneMode::Full) => prefixes.push(LLM),
            (Component::Llm, FinetuneMode::Lora) => prefixes.push(LORA),
            (Component::VisionEncoder, _) => unreachable!("rejected by validate"),
        }
    }
    if cfg.mode == FinetuneMode::Lora && model.lora_adapters().next().is_none() {
        return Err(Error::Stage("LoRA mode requires attached adapters".into()));
    }
    Ok(model
        .params
        .names()
        .filter(|n| prefixes.iter().any(|p| n.starts_with(p)))
        .map(String::from)
        .collect())
}

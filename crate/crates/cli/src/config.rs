//! TOML run configuration and its validation.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use gmmt_core::datapipe::{Lang, Split, TagPolicy, DEFAULT_IOU_THRESHOLD};
use gmmt_core::metrics::MetricOptions;
use gmmt_core::model::{AdapterMode, ModelConfig};
use gmmt_core::training::{check_stage_order, FinetuneMode, StageConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub stages: Vec<StageSection>,
    #[serde(default)]
    pub metrics: MetricOptions,
    #[serde(default)]
    pub generate: GenerateSection,
    #[serde(default)]
    pub sweep: SweepSection,
}

/// Model shape; unset fields take the desk-scale defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub d_vis: Option<usize>,
    pub d_model: Option<usize>,
    pub n_layers_vis: Option<usize>,
    pub n_layers_lm: Option<usize>,
    pub n_heads: Option<usize>,
    pub c_total: Option<usize>,
    pub patch_size: Option<usize>,
    pub image_size: Option<usize>,
    pub adapter_mode: Option<AdapterMode>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// Directory holding `{lang}_{split}.tsv` files.
    pub vg_dir: Option<PathBuf>,
    /// Directory holding `{image_id}.json` detector outputs.
    pub detections_dir: Option<PathBuf>,
    /// Where instance files are written and read; defaults to `{out_dir}/instances`.
    pub instances_dir: Option<PathBuf>,
    #[serde(default = "all_langs")]
    pub langs: Vec<Lang>,
    #[serde(default = "all_splits")]
    pub splits: Vec<Split>,
    #[serde(default = "default_threshold")]
    pub iou_threshold: f64,
    #[serde(default)]
    pub all_labels: bool,
    #[serde(default)]
    pub back_translation: bool,
    #[serde(default = "default_true")]
    pub strict: bool,
    #[serde(default = "default_cap")]
    pub stage1_cap: usize,
    pub stage2_cap: Option<usize>,
    /// Instance file id scored for validation loss during training.
    pub validation: Option<String>,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            vg_dir: None,
            detections_dir: None,
            instances_dir: None,
            langs: all_langs(),
            splits: all_splits(),
            iou_threshold: DEFAULT_IOU_THRESHOLD,
            all_labels: false,
            back_translation: false,
            strict: true,
            stage1_cap: default_cap(),
            stage2_cap: None,
            validation: None,
        }
    }
}

impl DataSection {
    pub fn tag_policy(&self) -> TagPolicy {
        if self.all_labels {
            TagPolicy::All
        } else {
            TagPolicy::Best {
                threshold: self.iou_threshold,
            }
        }
    }
}

fn all_langs() -> Vec<Lang> {
    Lang::ALL.to_vec()
}

fn all_splits() -> Vec<Split> {
    Split::ALL.to_vec()
}

fn default_threshold() -> f64 {
    DEFAULT_IOU_THRESHOLD
}

fn default_true() -> bool {
    true
}

fn default_cap() -> usize {
    1_200_000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSection {
    pub stage: u8,
    pub data_mix: Vec<(String, f64)>,
    pub lr: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub max_steps: Option<usize>,
    pub mode: Option<FinetuneMode>,
    pub lora_rank: Option<usize>,
    pub lora_alpha: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateSection {
    #[serde(default = "default_max_new")]
    pub max_new_tokens: usize,
}

impl Default for GenerateSection {
    fn default() -> Self {
        Self {
            max_new_tokens: default_max_new(),
        }
    }
}

fn default_max_new() -> usize {
    64
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default = "default_lrs")]
    pub lrs: Vec<f64>,
    #[serde(default = "default_epochs")]
    pub epochs: Vec<usize>,
    /// Instance file id used for validation BLEU.
    pub validation: Option<String>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            lrs: default_lrs(),
            epochs: default_epochs(),
            validation: None,
        }
    }
}

fn default_lrs() -> Vec<f64> {
    gmmt_core::training::DEFAULT_LR_GRID.to_vec()
}

fn default_epochs() -> Vec<usize> {
    gmmt_core::training::DEFAULT_EPOCH_GRID.to_vec()
}

impl RunConfig {
    /// Reads and validates a config file. Relative paths inside it resolve
    /// against the file's directory.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: RunConfig = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut Option<PathBuf>| {
            if let Some(v) = p {
                if v.is_relative() {
                    *v = base.join(&*v);
                }
            }
        };
        resolve(&mut cfg.out_dir);
        resolve(&mut cfg.data.vg_dir);
        resolve(&mut cfg.data.detections_dir);
        resolve(&mut cfg.data.instances_dir);
        cfg.validate()?;
        Ok(cfg)
    }

    /// Schema checks that need no data files.
    pub fn validate(&self) -> anyhow::Result<()> {
        self.model_config(1).validate()?;
        let stages = self.stage_configs(None)?;
        check_stage_order(&[], &stages)?;
        for s in &stages {
            s.validate()?;
        }
        let d = &self.data;
        if !(0.0..=1.0).contains(&d.iou_threshold) {
            bail!("data.iou_threshold must lie in [0, 1], got {}", d.iou_threshold);
        }
        if d.langs.is_empty() {
            bail!("data.langs is empty");
        }
        if d.stage1_cap == 0 || d.stage2_cap == Some(0) {
            bail!("data stage caps must be positive");
        }
        if self.sweep.lrs.iter().any(|&lr| !(lr.is_finite() && lr > 0.0)) || self.sweep.epochs.contains(&0) {
            bail!("sweep grid values must be positive");
        }
        Ok(())
    }

    /// Input directories named by the data section must exist.
    pub fn check_input_paths(&self) -> anyhow::Result<()> {
        let d = &self.data;
        for (name, p) in [("data.vg_dir", &d.vg_dir), ("data.detections_dir", &d.detections_dir)] {
            if let Some(p) = p {
                if !p.is_dir() {
                    bail!("{name} {} does not exist", p.display());
                }
            }
        }
        Ok(())
    }

    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        let m = &self.model;
        let mut c = ModelConfig::desk(vocab_size);
        c.d_vis = m.d_vis.unwrap_or(c.d_vis);
        c.d_model = m.d_model.unwrap_or(c.d_model);
        c.n_layers_vis = m.n_layers_vis.unwrap_or(c.n_layers_vis);
        c.n_layers_lm = m.n_layers_lm.unwrap_or(c.n_layers_lm);
        c.n_heads = m.n_heads.unwrap_or(c.n_heads);
        c.c_total = m.c_total.unwrap_or(c.c_total);
        c.patch_size = m.patch_size.unwrap_or(c.patch_size);
        c.image_size = m.image_size.unwrap_or(c.image_size);
        c.adapter_mode = m.adapter_mode.unwrap_or(c.adapter_mode);
        if c.patch_size > 0 && c.image_size.is_multiple_of(c.patch_size) {
            let g = c.image_size / c.patch_size;
            c.c_vis = g * g;
        }
        c
    }

    /// Resolved stage configs, with per-stage seeds derived from the master seed.
    pub fn stage_configs(&self, stage3_mode: Option<FinetuneMode>) -> anyhow::Result<Vec<StageConfig>> {
        self.stages
            .iter()
            .map(|s| {
                let mut c = StageConfig::for_stage(s.stage, self.seed)?;
                c.data_mix = s.data_mix.clone();
                c.lr = s.lr.unwrap_or(c.lr);
                c.epochs = s.epochs.unwrap_or(c.epochs);
                c.batch_size = s.batch_size.unwrap_or(c.batch_size);
                c.max_steps = s.max_steps.or(c.max_steps);
                c.mode = s.mode.unwrap_or(c.mode);
                if s.stage == 3 {
                    c.mode = stage3_mode.unwrap_or(c.mode);
                }
                c.lora_rank = s.lora_rank.unwrap_or(c.lora_rank);
                c.lora_alpha = s.lora_alpha.unwrap_or(c.lora_alpha);
                Ok(c)
            })
            .collect()
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn instances_dir(&self) -> PathBuf {
        self.data
            .instances_dir
            .clone()
            .unwrap_or_else(|| self.out_dir().join("instances"))
    }
}

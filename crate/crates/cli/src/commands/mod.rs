pub mod evaluate;
pub mod generate;
pub mod prepare;
pub mod sweep;
pub mod synth;
pub mod train;

use std::path::{Path, PathBuf};

use anyhow::Context;
use gmmt_core::datapipe::{instance_to_example, read_instances, PromptInstance, SyntheticImages};
use gmmt_core::model::MultimodalModel;
use gmmt_core::training::Example;
use serde::Serialize;

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    gmmt_core::io::write_atomic(path, text.as_bytes())?;
    Ok(())
}

pub fn instance_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.jsonl"))
}

pub fn load_corpus(dir: &Path, id: &str) -> anyhow::Result<Vec<PromptInstance>> {
    let path = instance_path(dir, id);
    read_instances(&path).with_context(|| format!("loading corpus `{id}`"))
}

pub fn to_examples(model: &MultimodalModel, insts: &[PromptInstance]) -> anyhow::Result<Vec<Example>> {
    insts
        .iter()
        .map(|i| instance_to_example(i, &model.vocab, &SyntheticImages, model.config.image_size))
        .collect::<Result<_, _>>()
        .map_err(Into::into)
}

//! Data preparation: Visual Genome TSV ingestion, detector-tag enrichment,
//! instruction prompt rendering, corpus mixing and statistics.

mod images;
mod iou;
mod mix;
mod prompt;
mod stats;
pub mod synth;
mod vg;

pub use images::{synthetic_image, ImageSource, SyntheticImages};
pub use iou::{
    iou, load_detections, overlap_1d, select_tag, tag_labels, DetectedObject, TagPolicy, DEFAULT_IOU_THRESHOLD,
};
pub use mix::{mix_quotas, mix_samples};
pub use prompt::{
    back_translation_augment, fill_template, instances_to_jsonl, parse_instances, read_instances, render_prompt, render_text_only,
    reverse_instance, write_instances, PromptInstance, Task, CAPTION_TEMPLATE, ENGLISH, LABELS_CLAUSE,
    MMT_TEMPLATE, TEXT_ONLY_TEMPLATE,
};
pub use stats::{corpus_stats, CorpusStats, SplitStats};
pub use vg::{parse_vg_str, parse_vg_tsv, BoundingBox, Lang, LineIssue, ParseMode, ParsedTsv, Split, VgRecord};

use crate::error::{Error, Result};
use crate::model::Vocabulary;
use crate::training::Example;

/// Tokenizes an instance for training, loading its image when it has one.
pub fn instance_to_example(
    inst: &PromptInstance,
    vocab: &Vocabulary,
    images: &dyn ImageSource,
    image_size: usize,
) -> Result<Example> {
    let wrap = |e: Error| Error::Sample {
        id: inst.source_id.clone(),
        source: Box::new(e),
    };
    let image = match &inst.image_id {
        Some(id) => Some(images.load(id, image_size).map_err(wrap)?),
        None => None,
    };
    Ok(Example {
        id: inst.source_id.clone(),
        prompt: vocab.encode(&inst.prompt).map_err(wrap)?,
        image,
        response: vocab.encode(&inst.response).map_err(wrap)?,
    })
}

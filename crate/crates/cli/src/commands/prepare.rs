use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context};
use gmmt_core::datapipe::{
    back_translation_augment, corpus_stats, load_detections, mix_samples, parse_vg_tsv, render_prompt, tag_labels,
    write_instances, DetectedObject, Lang, ParseMode, PromptInstance, Split, Task, VgRecord,
};
use gmmt_core::metrics::tokenize;
use gmmt_core::training::derive_stage_seed;

use super::{instance_path, write_json};
use crate::config::RunConfig;
use crate::Kind;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Render only this task (mmt, text_only or caption).
    #[arg(long)]
    pub task: Option<Task>,
}

/// Seed for the stage mixes, kept apart from the training stage seeds.
const MIX_SEED_SALT: u64 = 0x6d69_7865;

struct Detections<'a> {
    dir: Option<&'a Path>,
    cache: BTreeMap<String, Option<Vec<DetectedObject>>>,
    missing: Vec<String>,
}

impl Detections<'_> {
    fn get(&mut self, image_id: &str) -> anyhow::Result<Option<&[DetectedObject]>> {
        let Some(dir) = self.dir else { return Ok(None) };
        if !self.cache.contains_key(image_id) {
            let path = dir.join(format!("{image_id}.json"));
            let loaded = if path.exists() {
                Some(load_detections(&path)?)
            } else {
                self.missing.push(image_id.to_string());
                None
            };
            self.cache.insert(image_id.to_string(), loaded);
        }
        Ok(self.cache[image_id].as_deref())
    }
}

pub fn run(cfg: &RunConfig, args: Args) -> anyhow::Result<()> {
    cfg.check_input_paths().map_err(|e| e.context(Kind::Config))?;
    let vg_dir = cfg
        .data
        .vg_dir
        .as_deref()
        .ok_or_else(|| anyhow::anyhow!("data.vg_dir is not set").context(Kind::Config))?;
    let out = cfg.out_dir();
    let inst_dir = cfg.instances_dir();
    let tasks: Vec<Task> = match args.task {
        Some(t) => vec![t],
        None => vec![Task::Mmt, Task::TextOnly, Task::Caption],
    };
    let needs_tags = tasks.iter().any(|t| *t != Task::TextOnly);
    if needs_tags && cfg.data.detections_dir.is_none() {
        eprintln!("warning: no detections_dir configured; prompts are rendered without object labels");
    }
    let mut dets = Detections {
        dir: if needs_tags { cfg.data.detections_dir.as_deref() } else { None },
        cache: BTreeMap::new(),
        missing: Vec::new(),
    };
    let mode = if cfg.data.strict { ParseMode::Strict } else { ParseMode::Lenient };

    let mut all_records: Vec<VgRecord> = Vec::new();
    let mut corpora: BTreeMap<String, Vec<PromptInstance>> = BTreeMap::new();
    for &lang in &cfg.data.langs {
        for &split in &cfg.data.splits {
            let path = vg_dir.join(format!("{lang}_{split}.tsv"));
            if !path.exists() {
                eprintln!("warning: {} not found, skipping", path.display());
                continue;
            }
            let parsed = parse_vg_tsv(&path, lang, split, mode)?;
            for issue in &parsed.skipped {
                eprintln!("warning: {}:{}: skipped: {}", path.display(), issue.line, issue.message);
            }
            let records = parsed.records;
            for &task in &tasks {
                let mut insts = Vec::with_capacity(records.len());
                for r in &records {
                    let tag = if task == Task::TextOnly {
                        None
                    } else {
                        dets.get(&r.image_id)?
                            .and_then(|d| tag_labels(&r.bbox, d, cfg.data.tag_policy()))
                    };
                    insts.push(render_prompt(r, task, tag.as_deref())?);
                }
                if cfg.data.back_translation && task != Task::Caption && split == Split::Train {
                    corpora.insert(corpus_id(task, "_bt", lang, split), back_translation_augment(&insts)?);
                }
                corpora.insert(corpus_id(task, "", lang, split), insts);
            }
            let refs: String = records.iter().map(|r| format!("{}\n", r.target_text)).collect();
            gmmt_core::io::write_atomic(&out.join("refs").join(format!("{lang}.{split}.txt")), refs.as_bytes())?;
            all_records.extend(records);
        }
    }
    if all_records.is_empty() {
        bail!(anyhow::anyhow!("no TSV files found under {}", vg_dir.display()).context(Kind::Data));
    }
    if !dets.missing.is_empty() {
        eprintln!(
            "warning: {} images have no detector output (first: {}); their prompts omit object labels",
            dets.missing.len(),
            dets.missing[0]
        );
    }

    for (stage, tasks_in_mix, cap) in [
        (1u8, vec![Task::Caption], Some(cfg.data.stage1_cap)),
        (2u8, vec![Task::TextOnly, Task::Caption], cfg.data.stage2_cap),
    ] {
        let parts: Vec<(String, Vec<PromptInstance>)> = tasks_in_mix
            .iter()
            .flat_map(|&t| cfg.data.langs.iter().map(move |&l| corpus_id(t, "", l, Split::Train)))
            .filter_map(|id| corpora.get(&id).filter(|c| !c.is_empty()).map(|c| (id, c.clone())))
            .collect();
        if parts.is_empty() {
            continue;
        }
        let available: usize = parts.iter().map(|(_, c)| c.len()).sum();
        let cap = cap.unwrap_or(available).min(available);
        let mixed = mix_samples(&parts, cap, derive_stage_seed(cfg.seed ^ MIX_SEED_SALT, stage))?;
        corpora.insert(format!("stage{stage}"), mixed);
    }

    for (id, insts) in &corpora {
        write_instances(&instance_path(&inst_dir, id), insts).with_context(|| format!("writing corpus `{id}`"))?;
    }
    let stats = corpus_stats(&all_records, &tokenize);
    write_json(&out.join("stats.json"), &stats)?;
    gmmt_core::io::write_atomic(&out.join("stats.tsv"), stats.to_table().as_bytes())?;
    print!("{}", stats.to_table());
    println!("wrote {} instance files to {}", corpora.len(), inst_dir.display());
    Ok(())
}

pub fn corpus_id(task: Task, suffix: &str, lang: Lang, split: Split) -> String {
    let t = match task {
        Task::Mmt => "mmt",
        Task::TextOnly => "text_only",
        Task::Caption => "caption",
    };
    format!("{t}{suffix}.{lang}.{split}")
}

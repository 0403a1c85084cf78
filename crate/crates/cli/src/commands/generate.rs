use std::path::PathBuf;

use anyhow::{bail, Context};
use gmmt_core::datapipe::{read_instances, render_text_only, synthetic_image, Lang, PromptInstance, Task};
use gmmt_core::model::MultimodalModel;
use gmmt_core::training::load_checkpoint;

use crate::config::RunConfig;
use crate::Kind;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Checkpoint to decode with.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Instance file (JSON lines) to translate.
    #[arg(long, conflicts_with_all = ["input", "sentence"])]
    pub instances: Option<PathBuf>,
    /// Plain English sentences, one per line.
    #[arg(long, conflicts_with = "sentence")]
    pub input: Option<PathBuf>,
    /// A single English sentence.
    #[arg(long)]
    pub sentence: Option<String>,
    /// Target language for plain sentences.
    #[arg(long)]
    pub lang: Option<Lang>,
    /// Image id attached to plain sentences.
    #[arg(long)]
    pub image: Option<String>,
    /// Prompt with text-only translation requests and no image.
    #[arg(long)]
    pub text_only: bool,
    /// Hypothesis file to write; defaults to `{out_dir}/hyps.txt`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Decoding budget; defaults to the config's `generate.max_new_tokens`.
    #[arg(long)]
    pub max_new_tokens: Option<usize>,
}

/// One decoding request: prompt text plus an optional image id.
pub struct Request {
    pub prompt: String,
    pub image_id: Option<String>,
}

pub fn requests_from_instances(insts: &[PromptInstance], text_only: bool) -> anyhow::Result<Vec<Request>> {
    insts
        .iter()
        .map(|i| {
            if text_only && i.task != Task::TextOnly {
                if i.task == Task::Caption {
                    bail!("caption instance `{}` has no sentence to translate", i.source_id);
                }
                Ok(Request {
                    prompt: render_text_only(i.lang, &i.source)?,
                    image_id: None,
                })
            } else {
                Ok(Request {
                    prompt: i.prompt.clone(),
                    image_id: if text_only { None } else { i.image_id.clone() },
                })
            }
        })
        .collect()
}

/// Greedy hypotheses, one line each; newlines inside a hypothesis become spaces.
pub fn decode(model: &MultimodalModel, requests: &[Request], max_new: usize) -> anyhow::Result<Vec<String>> {
    let mut out = Vec::with_capacity(requests.len());
    for (n, r) in requests.iter().enumerate() {
        let ids = model
            .vocab
            .encode(&r.prompt)
            .with_context(|| format!("input {}", n + 1))?;
        let image = r
            .image_id
            .as_deref()
            .map(|id| synthetic_image(id, model.config.image_size));
        let open = model.sequence_len(image.is_some(), ids.len(), 0, false);
        let budget = model.config.c_total.saturating_sub(open).min(max_new);
        if open >= model.config.c_total {
            return Err(anyhow::Error::new(gmmt_core::Error::ContextOverflow {
                needed: open + 1,
                limit: model.config.c_total,
            })
            .context(format!("input {}", n + 1)));
        }
        let toks = model.generate(&ids, image.as_deref(), budget)?;
        out.push(model.vocab.decode(&toks).replace(['\n', '\r'], " "));
    }
    Ok(out)
}

pub fn run(cfg: &RunConfig, args: Args) -> anyhow::Result<()> {
    let ckpt = load_checkpoint(&args.checkpoint).with_context(|| format!("loading {}", args.checkpoint.display()))?;
    let plain = |lines: Vec<String>| -> anyhow::Result<Vec<Request>> {
        let lang = args
            .lang
            .ok_or_else(|| anyhow::anyhow!("--lang is required for plain sentences").context(Kind::Config))?;
        lines
            .iter()
            .map(|s| {
                Ok(Request {
                    prompt: render_text_only(lang, s)?,
                    image_id: if args.text_only { None } else { args.image.clone() },
                })
            })
            .collect()
    };
    let requests = if let Some(p) = &args.instances {
        requests_from_instances(&read_instances(p)?, args.text_only)?
    } else if let Some(p) = &args.input {
        let text = gmmt_core::io::read_to_string(p)?;
        plain(text.lines().map(String::from).collect())?
    } else if let Some(s) = &args.sentence {
        plain(vec![s.clone()])?
    } else {
        bail!(anyhow::anyhow!("give --instances, --input or --sentence").context(Kind::Config));
    };
    let max_new = args.max_new_tokens.unwrap_or(cfg.generate.max_new_tokens);
    let hyps = decode(&ckpt.model, &requests, max_new)?;
    let text: String = hyps.iter().map(|h| format!("{h}\n")).collect();
    let out = args.out.unwrap_or_else(|| cfg.out_dir().join("hyps.txt"));
    gmmt_core::io::write_atomic(&out, text.as_bytes())?;
    println!("wrote {} hypotheses to {}", hyps.len(), out.display());
    Ok(())
}

use anyhow::Context;
use gmmt_core::datapipe::synth::{synth_detections, synth_regions, synth_tsv};

use super::write_json;
use crate::config::RunConfig;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Records per split.
    #[arg(long, default_value_t = 16)]
    pub per_split: usize,
}

/// Writes `{out_dir}/vg/{lang}_{split}.tsv` and `{out_dir}/detections/{image_id}.json`.
pub fn run(cfg: &RunConfig, args: Args) -> anyhow::Result<()> {
    let out = cfg.out_dir();
    let mut n_images = 0;
    for &split in &cfg.data.splits {
        let regions = synth_regions(split, args.per_split, cfg.seed);
        for &lang in &cfg.data.langs {
            let path = out.join("vg").join(format!("{lang}_{split}.tsv"));
            gmmt_core::io::write_atomic(&path, synth_tsv(&regions, lang).as_bytes())
                .with_context(|| format!("writing {}", path.display()))?;
        }
        for (image_id, dets) in synth_detections(&regions, cfg.seed) {
            write_json(&out.join("detections").join(format!("{image_id}.json")), &dets)?;
            n_images += 1;
        }
    }
    println!(
        "wrote {} TSV files and {n_images} detector files under {}",
        cfg.data.splits.len() * cfg.data.langs.len(),
        out.display()
    );
    Ok(())
}

//! End-to-end acceptance checks. Runs without the libtest harness and prints
//! one PASS, FAIL or SKIP line per criterion; any FAIL makes the binary exit
//! with a non-zero status.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use common::{gmmt, ok, prepare, snapshot, write_config};
use gmmt_core::datapipe::{
    corpus_stats, instance_to_example, iou, overlap_1d, parse_vg_tsv, render_prompt, BoundingBox,
    Lang, ParseMode, PromptInstance, Split, SyntheticImages, Task, VgRecord,
};
use gmmt_core::datapipe::synth::{synth_regions, SynthRegion};
use gmmt_core::metrics::{
    bleu, bleu_stats, kendall_tau, ribes, ribes_sentence, tokenize, BleuOptions, RIBES_ALPHA, RIBES_BETA,
};
use gmmt_core::model::{
    check_model_gradients, default_lora_targets, ModelConfig, MultimodalModel, Vocabulary, LLM, VISION,
};
use gmmt_core::numerics::{Tape, Tensor};
use gmmt_core::training::{
    load_checkpoint, run_pipeline, run_stage, Checkpoint, Corpora, Example, FinetuneMode, StageConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

enum Verdict {
    Pass(String),
    Skip(String),
}

type Outcome = Result<Verdict, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(start: Instant, limit: Duration) -> Result<(), String> {
    let took = start.elapsed();
    ensure(took < limit, || format!("took {:.1}s, limit {}s", took.as_secs_f64(), limit.as_secs()))
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn logits(m: &MultimodalModel, prompt: &[u32], image: Option<&[f64]>, response: &[u32]) -> Tensor {
    let mut t = Tape::new();
    let vis = image.map(|i| m.visual_tokens(&mut t, i).unwrap());
    let seq = m.assemble_sequence(&mut t, prompt, vis, response).unwrap();
    let l = m.forward(&mut t, &seq).unwrap();
    t.value(l).clone()
}

fn record(region: &SynthRegion, lang: Lang, split: Split, line: usize) -> VgRecord {
    VgRecord {
        id: format!("{}.{}.{line}", lang.code(), split),
        image_id: region.image_id.clone(),
        bbox: region.bbox,
        english: region.english(),
        target_lang: lang,
        target_text: region.target(lang),
        split,
    }
}

/// Caption, text-only and MMT instances for Hindi over synthetic regions.
fn synthetic_instances(n: usize, seed: u64) -> BTreeMap<&'static str, Vec<PromptInstance>> {
    let regions = synth_regions(Split::Train, n, seed);
    let mut out = BTreeMap::new();
    for (name, task) in [("caption", Task::Caption), ("text_only", Task::TextOnly), ("mmt", Task::Mmt)] {
        let list = regions
            .iter()
            .enumerate()
            .map(|(i, r)| render_prompt(&record(r, Lang::Hi, Split::Train, i + 1), task, Some(r.label())).unwrap())
            .collect();
        out.insert(name, list);
    }
    out
}

fn vocabulary(instances: &BTreeMap<&'static str, Vec<PromptInstance>>) -> Vocabulary {
    Vocabulary::from_texts(
        instances
            .values()
            .flatten()
            .flat_map(|i| [i.prompt.as_str(), i.response.as_str()]),
    )
}

fn toy_config(vocab: &Vocabulary) -> ModelConfig {
    let mut cfg = ModelConfig::desk(vocab.len());
    cfg.d_model = 16;
    cfg.d_vis = 8;
    cfg.n_layers_vis = 1;
    cfg.n_layers_lm = 1;
    cfg.c_total = 448;
    cfg
}

fn synthetic_corpora(model: &MultimodalModel, instances: &BTreeMap<&'static str, Vec<PromptInstance>>) -> Corpora {
    instances
        .iter()
        .map(|(name, list)| {
            let examples = list
                .iter()
                .map(|i| instance_to_example(i, &model.vocab, &SyntheticImages, model.config.image_size).unwrap())
                .collect();
            (name.to_string(), examples)
        })
        .collect()
}

fn stage(n: u8, seed: u64, mode: FinetuneMode) -> StageConfig {
    let mut s = StageConfig::for_stage(n, seed).unwrap();
    s.batch_size = 4;
    s.max_steps = Some(3);
    s.mode = mode;
    s.data_mix = match n {
        1 => vec![("caption".into(), 1.0)],
        2 => vec![("text_only".into(), 1.0), ("caption".into(), 1.0)],
        _ => vec![("mmt".into(), 1.0)],
    };
    s
}

fn gradient_fidelity() -> Outcome {
    let start = Instant::now();
    let vocab = Vocabulary::from_texts(["abcdefghijklmnopqrstuvwxyz .कखगघङचछजझ"]);
    let mut worst = (0.0f64, String::new());
    let mut coords = 0;
    for seed in 0..5u64 {
        let cfg = ModelConfig::desk(vocab.len());
        ensure(cfg.d_model == 64, || format!("d_model {}", cfg.d_model))?;
        let m = MultimodalModel::new(cfg, vocab.clone(), &mut rng(seed)).map_err(err)?;
        let mut r = rng(100 + seed);
        let image: Vec<f64> = (0..144).map(|_| r.random_range(-1.0..1.0)).collect();
        let prompt = m.vocab.encode("a red cat").map_err(err)?;
        let response = m.vocab.encode("कख गघ").map_err(err)?;
        let report =
            check_model_gradients(&m, &prompt, Some(&image), &response, 1e-5, 4, &mut r).map_err(err)?;
        coords += report.coordinates_checked;
        if report.max_relative_error > worst.0 {
            worst = (report.max_relative_error, format!("seed {seed} {}", report.worst_parameter));
        }
    }
    ensure(worst.0 < 1e-3, || format!("max relative error {:.2e} at {}", worst.0, worst.1))?;
    within(start, Duration::from_secs(60))?;
    Ok(Verdict::Pass(format!("max rel err {:.1e} over {coords} coordinates", worst.0)))
}

fn freezing_contract() -> Outcome {
    let start = Instant::now();
    let instances = synthetic_instances(16, 11);
    let vocab = vocabulary(&instances);
    let model = MultimodalModel::new(toy_config(&vocab), vocab, &mut rng(1)).map_err(err)?;
    let corpora = synthetic_corpora(&model, &instances);
    let initial = model.component_digests();
    let dir = tempfile::tempdir().map_err(err)?;
    let stages: Vec<_> = (1..=3).map(|n| stage(n, 7, FinetuneMode::Full)).collect();
    let out = run_pipeline(Checkpoint::new(model, 7), &stages, &corpora, None, dir.path()).map_err(err)?;

    let mut prev = initial.clone();
    for (log, path) in out.logs.iter().zip(&out.checkpoint_paths) {
        let saved = load_checkpoint(path).map_err(err)?.model.component_digests();
        ensure(saved == log.digests_after, || format!("stage {} checkpoint digests differ from log", log.stage))?;
        ensure(log.digests_before == prev, || format!("stage {} did not start from previous state", log.stage))?;
        let changed = |c: &str| log.digests_before[c] != log.digests_after[c];
        ensure(!changed("vision"), || format!("vision changed in stage {}", log.stage))?;
        ensure(saved["vision"] == initial["vision"], || "vision digest drifted".into())?;
        ensure(changed("adapter"), || format!("adapter unchanged in stage {}", log.stage))?;
        ensure(changed("llm") == (log.stage >= 2), || format!("llm change wrong in stage {}", log.stage))?;
        prev = log.digests_after.clone();
    }
    within(start, Duration::from_secs(300))?;
    Ok(Verdict::Pass(format!("vision {}", &initial["vision"][..12])))
}

fn lora_contracts() -> Outcome {
    let instances = synthetic_instances(12, 5);
    let vocab = vocabulary(&instances);
    let mut model = MultimodalModel::new(toy_config(&vocab), vocab, &mut rng(3)).map_err(err)?;
    let corpora = synthetic_corpora(&model, &instances);
    let ex = &corpora["mmt"][0];
    let image = ex.image.as_deref();

    let base_gen = model.generate(&ex.prompt, image, 12).map_err(err)?;
    let base_logits = logits(&model, &ex.prompt, image, &[]);
    let targets = default_lora_targets(&model);
    let mut attached = model.clone();
    attached.lora_attach(&targets, 4, 16.0, &mut rng(4)).map_err(err)?;
    ensure(attached.generate(&ex.prompt, image, 12).map_err(err)? == base_gen, || "(a) generation changed".into())?;
    let same = logits(&attached, &ex.prompt, image, &[])
        .data()
        .iter()
        .zip(base_logits.data())
        .all(|(a, b)| a.to_bits() == b.to_bits());
    ensure(same, || "(a) logits changed".into())?;

    let mut r = rng(5);
    for t in &targets {
        for v in attached.params.get_mut(&format!("lora.{t}.b")).map_err(err)?.data_mut() {
            *v = r.random_range(-0.05..0.05);
        }
    }
    let adapted = logits(&attached, &ex.prompt, image, &ex.response);
    let mut merged = attached.clone();
    merged.lora_merge().map_err(err)?;
    let merged_logits = logits(&merged, &ex.prompt, image, &ex.response);
    let diff = adapted
        .data()
        .iter()
        .zip(merged_logits.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    ensure(diff < 1e-9, || format!("(b) merged logits differ by {diff:.2e}"))?;

    let dir = tempfile::tempdir().map_err(err)?;
    let s1 = stage(1, 9, FinetuneMode::Full);
    let s3 = stage(3, 9, FinetuneMode::Lora);
    let pre = run_pipeline(Checkpoint::new(model.clone(), 9), &[s1], &corpora, None, dir.path()).map_err(err)?;
    model = pre.checkpoint.model.clone();
    let llm_before = model.params.digest(LLM);
    let vision_before = model.params.digest(VISION);
    let post = run_pipeline(pre.checkpoint, &[s3], &corpora, None, dir.path()).map_err(err)?;
    let after = &post.checkpoint.model;
    ensure(after.params.digest(LLM) == llm_before, || "(c) base decoder weights changed".into())?;
    ensure(after.params.digest(VISION) == vision_before, || "(c) vision weights changed".into())?;
    ensure(post.logs[0].changed_components() == ["adapter", "lora"], || {
        format!("(c) changed {:?}", post.logs[0].changed_components())
    })?;
    Ok(Verdict::Pass(format!("merge diff {diff:.1e}, {} adapted matrices", targets.len())))
}

fn overfit_oracle() -> Outcome {
    let start = Instant::now();
    let mut seen = BTreeSet::new();
    let pairs: Vec<_> = synth_regions(Split::Train, 400, 21)
        .into_iter()
        .filter(|r| seen.insert(r.english()))
        .take(32)
        .map(|r| render_prompt(&record(&r, Lang::Hi, Split::Train, 1), Task::TextOnly, None).unwrap())
        .collect();
    ensure(pairs.len() == 32, || format!("only {} distinct pairs", pairs.len()))?;
    let vocab = Vocabulary::from_texts(pairs.iter().flat_map(|p| [p.prompt.as_str(), p.response.as_str()]));
    let mut cfg = ModelConfig::desk(vocab.len());
    cfg.d_model = 32;
    cfg.d_vis = 16;
    cfg.n_layers_vis = 1;
    cfg.n_layers_lm = 2;
    let mut model = MultimodalModel::new(cfg, vocab, &mut rng(2)).map_err(err)?;
    let data: Vec<Example> = pairs
        .iter()
        .map(|p| instance_to_example(p, &model.vocab, &SyntheticImages, model.config.image_size).unwrap())
        .collect();

    let mut s = StageConfig::for_stage(3, 2).map_err(err)?;
    s.lr = 1e-3;
    s.batch_size = 8;
    s.epochs = 100;
    s.max_steps = Some(2000);
    let log = run_stage(&mut model, &data, &s, None).map_err(err)?;
    ensure(log.steps.len() <= 2000, || format!("{} steps", log.steps.len()))?;

    let mut hyps = Vec::new();
    let mut refs = Vec::new();
    let mut exact = 0;
    for (p, ex) in pairs.iter().zip(&data) {
        let out = model.generate(&ex.prompt, None, 24).map_err(err)?;
        let text = model.vocab.decode(&out);
        exact += usize::from(text == p.response);
        hyps.push(tokenize(&text));
        refs.push(tokenize(&p.response));
    }
    let score = bleu(&hyps, &refs, BleuOptions::default()).map_err(err)?;
    let rate = exact as f64 / pairs.len() as f64;
    let detail = format!(
        "exact {exact}/32, BLEU {score:.1}, {} steps, final loss {:.4}",
        log.steps.len(),
        log.final_loss().unwrap_or(f64::NAN)
    );
    ensure(rate >= 0.9 && score >= 90.0, || detail.clone())?;
    within(start, Duration::from_secs(300))?;
    Ok(Verdict::Pass(detail))
}

fn summary_configs(path: &Path) -> Result<Vec<serde_json::Value>, String> {
    let text = std::fs::read_to_string(path).map_err(err)?;
    let json: serde_json::Value = serde_json::from_str(&text).map_err(err)?;
    Ok(json["stages"]
        .as_array()
        .ok_or("train summary has no stages")?
        .iter()
        .map(|s| s["config"].clone())
        .collect())
}

fn stage_skip_ablations() -> Outcome {
    let dir = tempfile::tempdir().map_err(err)?;
    let root = dir.path();
    let cfg = write_config(root, 13, "");
    let c = cfg.to_str().unwrap();
    prepare(root, &cfg);
    let mut logged = Vec::new();
    for (name, stages) in [("full", "1,2,3"), ("skip2", "1,3"), ("zeroshot", "1,2")] {
        let out = root.join(name);
        let o = out.to_str().unwrap();
        ok(&["--config", c, "--out-dir", o, "train", "--stages", stages]);
        let configs = summary_configs(&out.join("train_summary.json"))?;
        let numbers: Vec<u64> = configs.iter().filter_map(|s| s["stage"].as_u64()).collect();
        let want: Vec<u64> = stages.split(',').map(|s| s.parse().unwrap()).collect();
        ensure(numbers == want, || format!("{name}: logged stages {numbers:?}"))?;
        let last = *want.last().unwrap();
        let ckpt = load_checkpoint(&out.join(format!("stage{last}.ckpt"))).map_err(err)?;
        ensure(ckpt.stages().iter().map(|&s| u64::from(s)).eq(want.iter().copied()), || {
            format!("{name}: checkpoint provenance {:?}", ckpt.stages())
        })?;
        logged.push(configs);
    }
    let zeroshot = root.join("zeroshot");
    let hyps = zeroshot.join("hyps.txt");
    ok(&[
        "--config", c, "generate",
        "--checkpoint", zeroshot.join("stage2.ckpt").to_str().unwrap(),
        "--instances", root.join("instances/mmt.hi.test.jsonl").to_str().unwrap(),
        "--out", hyps.to_str().unwrap(),
    ]);
    let report = zeroshot.join("hi.test.json");
    ok(&[
        "--config", c, "evaluate",
        "--hyp", hyps.to_str().unwrap(),
        "--ref", root.join("run/refs/hi.test.txt").to_str().unwrap(),
        "--lang", "hi", "--split", "test",
        "--out", report.to_str().unwrap(),
    ]);
    ensure(report.exists(), || "zero-shot report missing".into())?;
    let distinct: BTreeSet<String> = logged.iter().map(|c| serde_json::to_string(c).unwrap()).collect();
    ensure(distinct.len() == 3, || "ablation configurations are not distinct".into())?;
    Ok(Verdict::Pass("[1,2,3], [1,3], [1,2]+evaluate".into()))
}

/// Pixel-membership count of the intersection of two boxes, row by row.
fn pixel_intersection(a: &BoundingBox, b: &BoundingBox) -> u64 {
    let mask = |bx: &BoundingBox| (((1u128 << bx.w) - 1) << bx.x) as u64;
    let (ma, mb) = (mask(a), mask(b));
    (0..64u32)
        .filter(|r| (a.y..a.y + a.h).contains(r) && (b.y..b.y + b.h).contains(r))
        .map(|_| u64::from((ma & mb).count_ones()))
        .sum()
}

fn pixel_iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = pixel_intersection(a, b);
    let union = u64::from(a.w * a.h) + u64::from(b.w * b.h) - inter;
    inter as f64 / union as f64
}

fn iou_oracle() -> Outcome {
    let mut checked = 0u64;
    for a0 in 0..32u32 {
        for aw in 1..32u32 {
            for b0 in 0..32u32 {
                for bw in 1..32u32 {
                    let cells = (0..64u32)
                        .filter(|i| (a0..a0 + aw).contains(i) && (b0..b0 + bw).contains(i))
                        .count() as u64;
                    ensure(overlap_1d(a0, aw, b0, bw) == cells, || {
                        format!("overlap ({a0},{aw}) ({b0},{bw})")
                    })?;
                    checked += 1;
                }
            }
        }
    }

    let mut classes = Vec::new();
    for aw in 1..32u32 {
        for bw in 1..32u32 {
            for ix in 0..=aw.min(bw) {
                classes.push((aw, bw, ix));
            }
        }
    }
    let mut pairs = 0u64;
    for &(aw, bw, ix) in &classes {
        for &(ah, bh, iy) in &classes {
            let a = BoundingBox::new(0, 0, aw, ah).map_err(err)?;
            let b = BoundingBox::new(aw - ix, ah - iy, bw, bh).map_err(err)?;
            let inter = u64::from(ix) * u64::from(iy);
            let union = u64::from(aw * ah) + u64::from(bw * bh) - inter;
            let want = inter as f64 / union as f64;
            ensure(iou(&a, &b) == want, || format!("{a:?} {b:?}"))?;
            pairs += 1;
        }
    }

    let mut r = rng(6);
    for _ in 0..200_000 {
        let mut bx = || {
            BoundingBox::new(r.random_range(0..32), r.random_range(0..32), r.random_range(1..32), r.random_range(1..32))
                .unwrap()
        };
        let (a, b) = (bx(), bx());
        ensure(iou(&a, &b) == pixel_iou(&a, &b), || format!("{a:?} {b:?}"))?;
    }
    Ok(Verdict::Pass(format!(
        "{checked} interval pairs, {pairs} overlap classes, 200000 sampled pixel checks"
    )))
}

fn golden_prompts() -> Outcome {
    let golden = |name: &str| {
        let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/golden").join(name);
        std::fs::read_to_string(&p).map_err(|e| format!("{}: {e}", p.display()))
    };
    let rec = |lang, bbox, english: &str| VgRecord {
        id: "hi.test.7".into(),
        image_id: "2345".into(),
        bbox,
        english: english.into(),
        target_lang: lang,
        target_text: "target".into(),
        split: Split::Test,
    };
    let hi = rec(Lang::Hi, BoundingBox::new(5, 10, 20, 30).map_err(err)?, "a cat sitting on a wall");
    let ml = rec(Lang::Ml, BoundingBox::new(0, 117, 333, 33).map_err(err)?, "the court is green");
    let cases = [
        ("mmt.txt", &hi, Task::Mmt, Some("cat")),
        ("mmt_no_tag.txt", &hi, Task::Mmt, None),
        ("text_only.txt", &hi, Task::TextOnly, Some("cat")),
        ("caption.txt", &hi, Task::Caption, Some("cat")),
        ("mmt_ml.txt", &ml, Task::Mmt, Some("tennis racket")),
    ];
    for (file, r, task, tag) in cases {
        let rendered = render_prompt(r, task, tag).map_err(err)?.prompt;
        ensure(rendered == golden(file)?, || format!("{file} differs"))?;
    }
    ensure(golden("mmt.txt")?.contains("x1=5, y1=10, x2=25, y2=40"), || "hi corners".into())?;
    ensure(golden("mmt_ml.txt")?.contains("x1=0, y1=117, x2=333, y2=150"), || "ml corners".into())?;
    ensure(!golden("caption.txt")?.contains("English sentence"), || "caption has sentence clause".into())?;
    Ok(Verdict::Pass(format!("{} golden files", cases.len())))
}

fn brute_tau(ranks: &[usize]) -> f64 {
    let n = ranks.len();
    let mut concordant = 0usize;
    let mut pairs = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            pairs += 1;
            concordant += usize::from(ranks[i] < ranks[j]);
        }
    }
    let discordant = pairs - concordant;
    (concordant as f64 - discordant as f64) / pairs as f64
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

fn metric_oracles() -> Outcome {
    let tok = |s: &str| tokenize(s);
    let corpus: Vec<Vec<String>> = ["एक लाल गाड़ी।", "the court is green", "दो कुत्ते घास पर"].map(tok).to_vec();
    let b = bleu(&corpus, &corpus, BleuOptions::default()).map_err(err)?;
    let r = ribes(&corpus, &corpus, RIBES_ALPHA, RIBES_BETA).map_err(err)?;
    ensure((b - 100.0).abs() < 1e-9, || format!("identical BLEU {b}"))?;
    ensure((r - 1.0).abs() < 1e-9, || format!("identical RIBES {r}"))?;

    let stats = bleu_stats(&[tok("the the the the")], &[tok("the cat")], 4).map_err(err)?;
    let p1 = stats.matches[0] as f64 / stats.totals[0] as f64;
    ensure((p1 - 0.25).abs() < 1e-9, || format!("p1 = {p1}"))?;
    ensure(stats.matches[1] == 0, || "p2 should be 0".into())?;
    let clipped = bleu(&[tok("the the the the")], &[tok("the cat")], BleuOptions::default()).map_err(err)?;
    ensure(clipped.abs() < 1e-9, || format!("clipped BLEU {clipped}"))?;

    for n in 2..=8 {
        let fwd: Vec<String> = (0..n).map(|i| format!("w{i}")).collect();
        let rev: Vec<String> = fwd.iter().rev().cloned().collect();
        let s = ribes_sentence(&rev, &fwd, RIBES_ALPHA, RIBES_BETA);
        ensure(s.abs() < 1e-9, || format!("reversed length {n} scored {s}"))?;
    }

    let mut perms = 0;
    for n in 2..=6 {
        for p in permutations(n) {
            let tau = kendall_tau(&p).ok_or("tau undefined")?;
            ensure((tau - brute_tau(&p)).abs() < 1e-9, || format!("tau {p:?}"))?;
            perms += 1;
        }
    }
    Ok(Verdict::Pass(format!("{perms} permutations checked")))
}

fn dataset_counts() -> Outcome {
    let Some(dir) = std::env::var_os("GMMT_VG_DIR").map(PathBuf::from) else {
        return Ok(Verdict::Skip("set GMMT_VG_DIR to the official TSV directory".into()));
    };
    let expected = [(Split::Train, 28930), (Split::Valid, 998), (Split::Test, 1595), (Split::Challenge, 1400)];
    let mut seen = Vec::new();
    let mut records = Vec::new();
    for lang in [Lang::Hi, Lang::Bn, Lang::Ml] {
        for (split, count) in expected {
            let path = dir.join(format!("{}_{split}.tsv", lang.code()));
            if !path.exists() {
                continue;
            }
            let parsed = parse_vg_tsv(&path, lang, split, ParseMode::Strict).map_err(|e| e.report())?;
            ensure(parsed.records.len() == count, || {
                format!("{}: {} records, expected {count}", path.display(), parsed.records.len())
            })?;
            seen.push(format!("{}-{split}", lang.code()));
            records.extend(parsed.records);
        }
    }
    ensure(!seen.is_empty(), || format!("no <lang>_<split>.tsv files in {}", dir.display()))?;
    let stats = corpus_stats(&records, &|s: &str| tokenize(s));
    for s in &stats.splits {
        eprintln!(
            "    {}-{}: avg tokens en {:.2}, target {:.2}",
            s.lang.code(),
            s.split,
            s.avg_english_tokens,
            s.avg_target_tokens
        );
    }
    Ok(Verdict::Pass(seen.join(", ")))
}

fn determinism() -> Outcome {
    let run = |root: &Path| {
        let cfg = write_config(root, 17, "");
        let c = cfg.to_str().unwrap();
        prepare(root, &cfg);
        ok(&["--config", c, "train"]);
        let hyps = root.join("run/hyps.txt");
        ok(&[
            "--config", c, "generate",
            "--checkpoint", root.join("run/stage3.ckpt").to_str().unwrap(),
            "--instances", root.join("instances/mmt.hi.test.jsonl").to_str().unwrap(),
            "--out", hyps.to_str().unwrap(),
        ]);
        ok(&[
            "--config", c, "evaluate",
            "--hyp", hyps.to_str().unwrap(),
            "--ref", root.join("run/refs/hi.test.txt").to_str().unwrap(),
            "--lang", "hi", "--split", "test",
        ]);
    };
    let (a, b) = (tempfile::tempdir().map_err(err)?, tempfile::tempdir().map_err(err)?);
    run(a.path());
    let first = snapshot(a.path());
    run(a.path());
    let again = snapshot(a.path());
    run(b.path());
    let other = snapshot(b.path());
    for (label, snap) in [("rerun in place", &again), ("fresh directory", &other)] {
        ensure(snap.len() == first.len(), || format!("{label}: {} vs {} files", snap.len(), first.len()))?;
        for ((pa, da), (pb, db)) in first.iter().zip(snap.iter()) {
            ensure(pa == pb && da == db, || format!("{label}: {} differs", pa.display()))?;
        }
    }
    let kinds = ["ckpt", "jsonl", "json", "txt"]
        .iter()
        .filter(|k| first.iter().any(|(p, _)| p.extension().is_some_and(|e| e == **k)))
        .count();
    ensure(kinds == 4, || "missing artifact kinds".into())?;
    ensure(gmmt(&["--version"]).status.success(), || "binary unusable".into())?;
    Ok(Verdict::Pass(format!("{} artifacts byte-identical", first.len())))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("gradient fidelity", gradient_fidelity),
        ("freezing contract", freezing_contract),
        ("LoRA contracts", lora_contracts),
        ("overfit oracle", overfit_oracle),
        ("stage-skip ablations", stage_skip_ablations),
        ("IoU oracle", iou_oracle),
        ("prompt byte-exactness", golden_prompts),
        ("metric oracles", metric_oracles),
        ("dataset counts", dataset_counts),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(Verdict::Pass(d)) => println!("PASS {:>2} {name}: {d} [{secs:.1}s]", i + 1),
            Ok(Verdict::Skip(d)) => println!("SKIP {:>2} {name}: {d}", i + 1),
            Err(d) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {d} [{secs:.1}s]", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

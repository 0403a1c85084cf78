#![allow(dead_code)]

use gmmt_core::model::{ModelConfig, MultimodalModel, Vocabulary};
use gmmt_core::training::{Corpora, Example, StageConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn vocab() -> Vocabulary {
    Vocabulary::from_texts(["abcdefghijklmnopqrstuvwxyz ", "कखगघङचछजझञटठडढणतथदधन"])
}

/// Toy model small enough for many training steps per test.
pub fn toy_model(seed: u64) -> MultimodalModel {
    let v = vocab();
    let mut cfg = ModelConfig::desk(v.len());
    cfg.d_model = 16;
    cfg.d_vis = 8;
    cfg.n_layers_lm = 1;
    cfg.n_layers_vis = 1;
    cfg.c_total = 48;
    MultimodalModel::new(cfg, v, &mut rng(seed)).unwrap()
}

pub fn image(model: &MultimodalModel, rng: &mut impl Rng) -> Vec<f64> {
    let n = model.config.image_size * model.config.image_size;
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn examples(model: &MultimodalModel, n: usize, with_image: bool, seed: u64) -> Vec<Example> {
    let mut r = rng(seed);
    let src: Vec<char> = "abcdefghij".chars().collect();
    let tgt: Vec<char> = "कखगघङचछजझञ".chars().collect();
    (0..n)
        .map(|i| {
            let len = r.random_range(2..5);
            let idx: Vec<usize> = (0..len).map(|_| r.random_range(0..src.len())).collect();
            let p: String = idx.iter().map(|&j| src[j]).collect();
            let t: String = idx.iter().map(|&j| tgt[j]).collect();
            Example {
                id: format!("ex{i}"),
                prompt: model.vocab.encode(&p).unwrap(),
                image: with_image.then(|| image(model, &mut r)),
                response: model.vocab.encode(&t).unwrap(),
            }
        })
        .collect()
}

pub fn corpora(model: &MultimodalModel) -> Corpora {
    let mut c = Corpora::new();
    c.insert("caption".into(), examples(model, 12, true, 1));
    c.insert("instruct".into(), examples(model, 12, true, 2));
    c.insert("mmt".into(), examples(model, 12, true, 3));
    c
}

pub fn stage(n: u8, seed: u64) -> StageConfig {
    let mut s = StageConfig::for_stage(n, seed).unwrap();
    s.batch_size = 4;
    s.max_steps = Some(3);
    s.data_mix = match n {
        1 => vec![("caption".into(), 1.0)],
        2 => vec![("instruct".into(), 1.0), ("caption".into(), 0.5)],
        _ => vec![("mmt".into(), 1.0)],
    };
    s
}

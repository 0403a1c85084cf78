//! Toy vision encoder, adapter projector and causal decoder.
//!
//! Parameter names are dotted and grouped by component prefix: `vision.`,
//! `adapter.`, `llm.` and, when adapters are attached, `lora.`. Freezing and
//! digests work on those prefixes.

mod check;
mod config;
mod lora;
mod vocab;

use std::collections::BTreeMap;

use rand::Rng;

pub use check::{check_model_gradients, GradCheckReport};
pub use config::{AdapterMode, ModelConfig, FULL_SCALE_CONTEXT, FULL_SCALE_VISUAL_TOKENS};
pub use lora::{default_lora_targets, LoraAdapter, DEFAULT_LORA_ALPHA, DEFAULT_LORA_RANK};
pub use vocab::{TokenId, Vocabulary, BOS, EOS, HUM, IMG, PAD, SYS};

use crate::error::{Error, Result};
use crate::numerics::{ParameterStore, Tape, Tensor, Var};

pub const VISION: &str = "vision.";
pub const ADAPTER: &str = "adapter.";
pub const LLM: &str = "llm.";
pub const LORA: &str = "lora.";

/// One item of a merged decoder sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Token(TokenId),
    Visual(usize),
}

/// Embedded decoder input plus its bookkeeping.
#[derive(Debug, Clone)]
pub struct AssembledSequence {
    pub embeddings: Var,
    pub slots: Vec<Slot>,
    /// True on response tokens and the closing EOS.
    pub loss_mask: Vec<bool>,
    pub positions: Vec<usize>,
}

impl AssembledSequence {
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn supervised_tokens(&self) -> usize {
        self.loss_mask.iter().filter(|&&m| m).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultimodalModel {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub params: ParameterStore,
    pub(crate) lora: BTreeMap<String, LoraAdapter>,
}

impl MultimodalModel {
    /// Randomly initialized model; `config.vocab_size` must match `vocab`.
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, vocab: Vocabulary, rng: &mut R) -> Result<Self> {
        check_vocab(&config, &vocab)?;
        let mut params = ParameterStore::new();
        for spec in parameter_layout(&config) {
            let t = match spec.init {
                Init::Normal(std) => Tensor::randn(&spec.shape, std, rng),
                Init::Zeros => Tensor::zeros(&spec.shape),
                Init::Ones => Tensor::filled(&spec.shape, 1.0),
            };
            params.insert(spec.name, t)?;
        }
        Ok(Self {
            config,
            vocab,
            params,
            lora: BTreeMap::new(),
        })
    }

    /// Reassembles a model from stored parts, checking every expected tensor is present.
    pub fn from_parts(
        config: ModelConfig,
        vocab: Vocabulary,
        params: ParameterStore,
        lora: Vec<LoraAdapter>,
    ) -> Result<Self> {
        check_vocab(&config, &vocab)?;
        let layout = parameter_layout(&config);
        for spec in &layout {
            let got = params
                .get(&spec.name)
                .map_err(|_| Error::Checkpoint(format!("missing tensor `{}`", spec.name)))?;
            if got.shape() != spec.shape.as_slice() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{}` has shape {:?}, config implies {:?}",
                    spec.name,
                    got.shape(),
                    spec.shape
                )));
            }
        }
        let lora: BTreeMap<_, _> = lora.into_iter().map(|a| (a.target.clone(), a)).collect();
        let expected = layout.len() + 2 * lora.len();
        if params.len() != expected {
            return Err(Error::Checkpoint(format!(
                "expected {expected} tensors, found {}",
                params.len()
            )));
        }
        let model = Self {
            config,
            vocab,
            params,
            lora,
        };
        for a in model.lora.values() {
            model.check_lora_shapes(a)?;
        }
        Ok(model)
    }

    pub fn lora_adapters(&self) -> impl Iterator<Item = &LoraAdapter> {
        self.lora.values()
    }

    /// Affine map `x·W (+ b)`, routed through a LoRA delta when one is attached to `w`.
    fn linear(&self, tape: &mut Tape, x: Var, w: &str, b: Option<&str>) -> Result<Var> {
        let wv = tape.param(&self.params, w)?;
        let mut y = tape.matmul(x, wv)?;
        if let Some(adapter) = self.lora.get(w) {
            let a = tape.param(&self.params, &adapter.a_name())?;
            let bm = tape.param(&self.params, &adapter.b_name())?;
            let xa = tape.matmul_bt(x, a)?;
            let delta = tape.matmul_bt(xa, bm)?;
            let delta = tape.scale(delta, adapter.scaling());
            y = tape.add(y, delta)?;
        }
        if let Some(b) = b {
            let bv = tape.param(&self.params, b)?;
            y = tape.add_row(y, bv)?;
        }
        Ok(y)
    }

    fn norm(&self, tape: &mut Tape, x: Var, prefix: &str) -> Result<Var> {
        let g = tape.param(&self.params, &format!("{prefix}.g"))?;
        let b = tape.param(&self.params, &format!("{prefix}.b"))?;
        tape.layer_norm(x, g, b)
    }

    fn attention(&self, tape: &mut Tape, x: Var, prefix: &str, causal: bool) -> Result<Var> {
        let q = self.linear(tape, x, &format!("{prefix}.wq"), None)?;
        let k = self.linear(tape, x, &format!("{prefix}.wk"), None)?;
        let v = self.linear(tape, x, &format!("{prefix}.wv"), None)?;
        let width = tape.shape(x)[1];
        let dh = width / self.config.n_heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut heads = Vec::with_capacity(self.config.n_heads);
        for h in 0..self.config.n_heads {
            let qh = tape.slice_cols(q, h * dh, dh)?;
            let kh = tape.slice_cols(k, h * dh, dh)?;
            let vh = tape.slice_cols(v, h * dh, dh)?;
            let scores = tape.matmul_bt(qh, kh)?;
            let scores = tape.scale(scores, scale);
            let probs = if causal {
                tape.causal_softmax(scores)?
            } else {
                tape.softmax(scores, 1)?
            };
            heads.push(tape.matmul(probs, vh)?);
        }
        let merged = tape.concat_cols(&heads)?;
        self.linear(tape, merged, &format!("{prefix}.wo"), None)
    }

    /// Pre-norm transformer block.
    fn block(&self, tape: &mut Tape, x: Var, prefix: &str, causal: bool) -> Result<Var> {
        let h = self.norm(tape, x, &format!("{prefix}.ln1"))?;
        let a = self.attention(tape, h, &format!("{prefix}.attn"), causal)?;
        let x = tape.add(x, a)?;
        let h = self.norm(tape, x, &format!("{prefix}.ln2"))?;
        let h = self.linear(tape, h, &format!("{prefix}.mlp.w1"), Some(&format!("{prefix}.mlp.b1")))?;
        let h = tape.gelu(h);
        let h = self.linear(tape, h, &format!("{prefix}.mlp.w2"), Some(&format!("{prefix}.mlp.b2")))?;
        tape.add(x, h)
    }

    /// Cuts the image into row-major patches and runs the vision transformer.
    pub fn encode_image(&self, tape: &mut Tape, image: &[f64]) -> Result<Var> {
        let c = &self.config;
        if image.len() != c.image_size * c.image_size {
            return Err(Error::shape(
                "encode_image",
                &[image.len()],
                &[c.image_size * c.image_size],
            ));
        }
        let (p, g) = (c.patch_size, c.grid());
        let mut patches = Vec::with_capacity(c.c_vis * p * p);
        for pr in 0..g {
            for pc in 0..g {
                for r in 0..p {
                    let start = (pr * p + r) * c.image_size + pc * p;
                    patches.extend_from_slice(&image[start..start + p]);
                }
            }
        }
        let patches = tape.constant(Tensor::new(vec![c.c_vis, p * p], patches)?);
        let x = self.linear(tape, patches, "vision.patch.w", Some("vision.patch.b"))?;
        let pos = tape.param(&self.params, "vision.pos")?;
        let mut x = tape.add(x, pos)?;
        for i in 0..c.n_layers_vis {
            x = self.block(tape, x, &format!("vision.blocks.{i}"), false)?;
        }
        self.norm(tape, x, "vision.ln_f")
    }

    /// Maps vision embeddings (`c_vis × d_vis`) into the decoder width.
    pub fn project(&self, tape: &mut Tape, vis: Var) -> Result<Var> {
        let shape = tape.shape(vis);
        if shape.len() != 2 || shape[1] != self.config.d_vis {
            return Err(Error::shape("project", shape, &[self.config.c_vis, self.config.d_vis]));
        }
        match self.config.adapter_mode {
            AdapterMode::Linear => self.linear(tape, vis, "adapter.w", Some("adapter.b")),
            AdapterMode::Mlp2 => {
                let h = self.linear(tape, vis, "adapter.w1", Some("adapter.b1"))?;
                let h = tape.gelu(h);
                self.linear(tape, h, "adapter.w2", Some("adapter.b2"))
            }
        }
    }

    /// Visual tokens for an image: `project(encode_image(image))`.
    pub fn visual_tokens(&self, tape: &mut Tape, image: &[f64]) -> Result<Var> {
        let vis = self.encode_image(tape, image)?;
        self.project(tape, vis)
    }

    /// Layout length for the given segment sizes.
    pub fn sequence_len(&self, has_image: bool, prompt: usize, response: usize, closed: bool) -> usize {
        let vis = if has_image { self.config.c_vis } else { 0 };
        1 + vis + 1 + prompt + 1 + response + usize::from(closed)
    }

    /// Builds `BOS [visual] HUM prompt SYS response EOS`.
    pub fn assemble_sequence(
        &self,
        tape: &mut Tape,
        prompt: &[TokenId],
        visual: Option<Var>,
        response: &[TokenId],
    ) -> Result<AssembledSequence> {
        self.assemble(tape, prompt, visual, response, true)
    }

    fn assemble(
        &self,
        tape: &mut Tape,
        prompt: &[TokenId],
        visual: Option<Var>,
        response: &[TokenId],
        closed: bool,
    ) -> Result<AssembledSequence> {
        let c = &self.config;
        let needed = self.sequence_len(visual.is_some(), prompt.len(), response.len(), closed);
        if needed > c.c_total {
            return Err(Error::ContextOverflow {
                needed,
                limit: c.c_total,
            });
        }
        if let Some(&bad) = prompt
            .iter()
            .chain(response)
            .find(|&&id| id as usize >= c.vocab_size)
        {
            return Err(Error::InvalidArgument(format!(
                "token id {bad} outside vocabulary of {}",
                c.vocab_size
            )));
        }
        if let Some(v) = visual {
            if tape.shape(v) != [c.c_vis, c.d_model] {
                return Err(Error::shape("assemble_sequence", tape.shape(v), &[c.c_vis, c.d_model]));
            }
        }

        let mut slots = Vec::with_capacity(needed);
        let mut loss_mask = Vec::with_capacity(needed);
        let mut push = |slot, supervised| {
            slots.push(slot);
            loss_mask.push(supervised);
        };
        push(Slot::Token(BOS), false);
        if visual.is_some() {
            for i in 0..c.c_vis {
                push(Slot::Visual(i), false);
            }
        }
        push(Slot::Token(HUM), false);
        for &id in prompt {
            push(Slot::Token(id), false);
        }
        push(Slot::Token(SYS), false);
        for &id in response {
            push(Slot::Token(id), true);
        }
        if closed {
            push(Slot::Token(EOS), true);
        }

        let tok_emb = tape.param(&self.params, "llm.tok_emb")?;
        let mut parts = Vec::new();
        let mut run: Vec<usize> = Vec::new();
        for slot in &slots {
            match slot {
                Slot::Token(id) => run.push(*id as usize),
                Slot::Visual(0) => {
                    if !run.is_empty() {
                        parts.push(tape.gather_rows(tok_emb, &run)?);
                        run.clear();
                    }
                    parts.push(visual.expect("visual slot implies tokens"));
                }
                Slot::Visual(_) => {}
            }
        }
        if !run.is_empty() {
            parts.push(tape.gather_rows(tok_emb, &run)?);
        }
        let merged = tape.concat_rows(&parts)?;
        let positions: Vec<usize> = (0..slots.len()).collect();
        let pos_table = tape.param(&self.params, "llm.pos_emb")?;
        let pos = tape.gather_rows(pos_table, &positions)?;
        let embeddings = tape.add(merged, pos)?;
        Ok(AssembledSequence {
            embeddings,
            slots,
            loss_mask,
            positions,
        })
    }

    /// Logits (`T × vocab_size`) with the output projection tied to the token embedding.
    pub fn forward(&self, tape: &mut Tape, seq: &AssembledSequence) -> Result<Var> {
        let mut x = seq.embeddings;
        for i in 0..self.config.n_layers_lm {
            x = self.block(tape, x, &format!("llm.blocks.{i}"), true)?;
        }
        let h = self.norm(tape, x, "llm.ln_f")?;
        let tok_emb = tape.param(&self.params, "llm.tok_emb")?;
        tape.matmul_bt(h, tok_emb)
    }

    /// Next-token loss over the supervised positions of `seq`.
    pub fn loss(&self, tape: &mut Tape, seq: &AssembledSequence) -> Result<Var> {
        let logits = self.forward(tape, seq)?;
        let t = seq.len();
        let mut targets = vec![0usize; t];
        let mut mask = vec![false; t];
        for i in 0..t.saturating_sub(1) {
            if let (true, Slot::Token(id)) = (seq.loss_mask[i + 1], seq.slots[i + 1]) {
                targets[i] = id as usize;
                mask[i] = true;
            }
        }
        tape.cross_entropy_masked(logits, &targets, &mask)
    }

    /// Loss for one (prompt, image?, response) example along with its number
    /// of supervised tokens.
    pub fn example_loss(
        &self,
        tape: &mut Tape,
        prompt: &[TokenId],
        image: Option<&[f64]>,
        response: &[TokenId],
    ) -> Result<(Var, usize)> {
        let visual = match image {
            Some(img) => Some(self.visual_tokens(tape, img)?),
            None => None,
        };
        let seq = self.assemble_sequence(tape, prompt, visual, response)?;
        let n = seq.supervised_tokens();
        Ok((self.loss(tape, &seq)?, n))
    }

    /// Greedy decoding until EOS or `max_new_tokens`.
    pub fn generate(
        &self,
        prompt: &[TokenId],
        image: Option<&[f64]>,
        max_new_tokens: usize,
    ) -> Result<Vec<TokenId>> {
        let needed = self.sequence_len(image.is_some(), prompt.len(), max_new_tokens, false);
        if needed > self.config.c_total {
            return Err(Error::ContextOverflow {
                needed,
                limit: self.config.c_total,
            });
        }
        if max_new_tokens == 0 {
            return Ok(Vec::new());
        }
        let visual = match image {
            Some(img) => {
                let mut tape = Tape::new();
                let v = self.visual_tokens(&mut tape, img)?;
                Some(tape.value(v).clone())
            }
            None => None,
        };
        let mut out = Vec::new();
        while out.len() < max_new_tokens {
            let mut tape = Tape::new();
            let vis = visual.clone().map(|t| tape.constant(t));
            let seq = self.assemble(&mut tape, prompt, vis, &out, false)?;
            let logits = self.forward(&mut tape, &seq)?;
            let l = tape.value(logits);
            let next = argmax(l.row(l.rows() - 1)) as TokenId;
            if next == EOS {
                break;
            }
            out.push(next);
        }
        Ok(out)
    }

    /// Total parameter digest per component prefix.
    pub fn component_digests(&self) -> BTreeMap<String, String> {
        [VISION, ADAPTER, LLM, LORA]
            .iter()
            .map(|p| (p.trim_end_matches('.').to_string(), self.params.digest(p)))
            .collect()
    }
}

/// Index of the first maximum.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn check_vocab(config: &ModelConfig, vocab: &Vocabulary) -> Result<()> {
    config.validate()?;
    if config.vocab_size != vocab.len() {
        return Err(Error::Config(format!(
            "vocab_size {} does not match vocabulary of {} symbols",
            config.vocab_size,
            vocab.len()
        )));
    }
    Ok(())
}

enum Init {
    Normal(f64),
    Zeros,
    Ones,
}

struct ParamSpec {
    name: String,
    shape: Vec<usize>,
    init: Init,
}

/// Every base parameter with its shape and initializer, in initialization order.
fn parameter_layout(c: &ModelConfig) -> Vec<ParamSpec> {
    let mut out = Vec::new();
    let mut add = |name: String, shape: Vec<usize>, init: Init| out.push(ParamSpec { name, shape, init });
    let linear = |din: usize| Init::Normal(1.0 / (din as f64).sqrt());

    let stack = |add: &mut dyn FnMut(String, Vec<usize>, Init), prefix: &str, width: usize, ff: usize| {
        add(format!("{prefix}.ln1.g"), vec![width], Init::Ones);
        add(format!("{prefix}.ln1.b"), vec![width], Init::Zeros);
        for w in ["wq", "wk", "wv", "wo"] {
            add(format!("{prefix}.attn.{w}"), vec![width, width], linear(width));
        }
        add(format!("{prefix}.ln2.g"), vec![width], Init::Ones);
        add(format!("{prefix}.ln2.b"), vec![width], Init::Zeros);
        add(format!("{prefix}.mlp.w1"), vec![width, ff], linear(width));
        add(format!("{prefix}.mlp.b1"), vec![ff], Init::Zeros);
        add(format!("{prefix}.mlp.w2"), vec![ff, width], linear(ff));
        add(format!("{prefix}.mlp.b2"), vec![width], Init::Zeros);
    };

    let p2 = c.patch_size * c.patch_size;
    add("vision.patch.w".into(), vec![p2, c.d_vis], linear(p2));
    add("vision.patch.b".into(), vec![c.d_vis], Init::Zeros);
    for i in 0..c.n_layers_vis {
        stack(&mut add, &format!("vision.blocks.{i}"), c.d_vis, c.d_ff(c.d_vis));
    }
    add("vision.ln_f.g".into(), vec![c.d_vis], Init::Ones);
    add("vision.ln_f.b".into(), vec![c.d_vis], Init::Zeros);
    add("vision.pos".into(), vec![c.c_vis, c.d_vis], Init::Normal(0.1));

    match c.adapter_mode {
        AdapterMode::Linear => {
            add("adapter.w".into(), vec![c.d_vis, c.d_model], linear(c.d_vis));
            add("adapter.b".into(), vec![c.d_model], Init::Zeros);
        }
        AdapterMode::Mlp2 => {
            add("adapter.w1".into(), vec![c.d_vis, c.d_model], linear(c.d_vis));
            add("adapter.b1".into(), vec![c.d_model], Init::Zeros);
            add("adapter.w2".into(), vec![c.d_model, c.d_model], linear(c.d_model));
            add("adapter.b2".into(), vec![c.d_model], Init::Zeros);
        }
    }

    for i in 0..c.n_layers_lm {
        stack(&mut add, &format!("llm.blocks.{i}"), c.d_model, c.d_ff(c.d_model));
    }
    add("llm.ln_f.g".into(), vec![c.d_model], Init::Ones);
    add("llm.ln_f.b".into(), vec![c.d_model], Init::Zeros);
    add("llm.tok_emb".into(), vec![c.vocab_size, c.d_model], Init::Normal(0.1));
    add("llm.pos_emb".into(), vec![c.c_total, c.d_model], Init::Normal(0.02));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny() -> MultimodalModel {
        let vocab = Vocabulary::from_texts(["abcdefgh "]);
        let mut cfg = ModelConfig::desk(vocab.len());
        cfg.d_model = 16;
        cfg.d_vis = 8;
        cfg.c_total = 48;
        MultimodalModel::new(cfg, vocab, &mut ChaCha8Rng::seed_from_u64(3)).unwrap()
    }

    fn image(seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..144).map(|_| rng.random::<f64>()).collect()
    }

    #[test]
    fn encode_image_rows() {
        let m = tiny();
        let mut t = Tape::new();
        let v = m.encode_image(&mut t, &image(1)).unwrap();
        assert_eq!(t.shape(v), &[9, 8]);
        assert!(m.encode_image(&mut t, &[0.0; 10]).is_err());
    }

    #[test]
    fn encode_image_deterministic() {
        let m = tiny();
        let run = || {
            let mut t = Tape::new();
            let v = m.encode_image(&mut t, &image(5)).unwrap();
            t.value(v).clone()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn project_width_checked() {
        let m = tiny();
        let mut t = Tape::new();
        let bad = t.constant(Tensor::zeros(&[9, 16]));
        assert!(matches!(m.project(&mut t, bad), Err(Error::Shape { .. })));
        let ok = t.constant(Tensor::zeros(&[9, 8]));
        let out = m.project(&mut t, ok).unwrap();
        assert_eq!(t.shape(out), &[9, 16]);
    }

    #[test]
    fn layout_and_mask() {
        let m = tiny();
        let mut t = Tape::new();
        let vis = m.visual_tokens(&mut t, &image(2)).unwrap();
        let prompt = m.vocab.encode("abc").unwrap();
        let resp = m.vocab.encode("de").unwrap();
        let s = m.assemble_sequence(&mut t, &prompt, Some(vis), &resp).unwrap();
        assert_eq!(s.len(), 1 + 9 + 1 + 3 + 1 + 2 + 1);
        assert_eq!(s.supervised_tokens(), 3);
        assert_eq!(s.slots.iter().filter(|s| matches!(s, Slot::Visual(_))).count(), 9);
        assert_eq!(s.slots.last(), Some(&Slot::Token(EOS)));
        let s = m.assemble_sequence(&mut t, &prompt, None, &resp).unwrap();
        assert_eq!(s.len(), 1 + 1 + 3 + 1 + 2 + 1);
        assert!(!s.slots.iter().any(|s| matches!(s, Slot::Visual(_))));
    }

    #[test]
    fn overflow_is_an_error() {
        let m = tiny();
        let mut t = Tape::new();
        let prompt = vec![6; 50];
        assert!(matches!(
            m.assemble_sequence(&mut t, &prompt, None, &[]),
            Err(Error::ContextOverflow { needed: 54, limit: 48 })
        ));
        assert!(matches!(
            m.generate(&prompt[..40], None, 10),
            Err(Error::ContextOverflow { .. })
        ));
    }

    #[test]
    fn zero_new_tokens() {
        let m = tiny();
        assert!(m.generate(&[6, 7], None, 0).unwrap().is_empty());
    }

    #[test]
    fn argmax_shift_invariant() {
        let row = [1.0, 5.0, -2.0, 5.0, 3.0];
        let shifted: Vec<f64> = row.iter().map(|v| v + 17.0).collect();
        assert_eq!(argmax(&row), 1);
        assert_eq!(argmax(&shifted), 1);
    }
}

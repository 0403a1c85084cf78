use rand::Rng;
use serde::{Deserialize, Serialize};

use super::MultimodalModel;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const DEFAULT_LORA_RANK: usize = 4;
pub const DEFAULT_LORA_ALPHA: f64 = 16.0;

/// Low-rank delta on one weight: `W' = W + (alpha / rank) · (B·A)ᵀ` in the
/// `x·W` convention, with `A: rank × d_in` and `B: d_out × rank`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoraAdapter {
    pub target: String,
    pub rank: usize,
    pub alpha: f64,
}

impl LoraAdapter {
    pub fn scaling(&self) -> f64 {
        self.alpha / self.rank as f64
    }

    pub fn a_name(&self) -> String {
        format!("lora.{}.a", self.target)
    }

    pub fn b_name(&self) -> String {
        format!("lora.{}.b", self.target)
    }
}

/// Every attention projection of the decoder.
pub fn default_lora_targets(model: &MultimodalModel) -> Vec<String> {
    (0..model.config.n_layers_lm)
        .flat_map(|i| ["wq", "wk", "wv", "wo"].map(|w| format!("llm.blocks.{i}.attn.{w}")))
        .collect()
}

impl MultimodalModel {
    /// Attaches adapters to `targets`. Base weights leave the trainable set;
    /// `A` is drawn from `rng`, `B` starts at zero so the model is unchanged.
    pub fn lora_attach<R: Rng + ?Sized>(
        &mut self,
        targets: &[String],
        rank: usize,
        alpha: f64,
        rng: &mut R,
    ) -> Result<()> {
        if rank == 0 {
            return Err(Error::InvalidArgument("LoRA rank must be positive".into()));
        }
        for t in targets {
            let w = self.params.get(t)?;
            if w.shape().len() != 2 {
                return Err(Error::InvalidArgument(format!(
                    "LoRA target `{t}` is not a matrix (shape {:?})",
                    w.shape()
                )));
            }
            if self.lora.contains_key(t) {
                return Err(Error::LoraAlreadyAttached(t.clone()));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        if let Some(dup) = targets.iter().find(|t| !seen.insert(*t)) {
            return Err(Error::LoraAlreadyAttached(dup.clone()));
        }

        let mut trainable = self.params.trainable().clone();
        for t in targets {
            let (din, dout) = {
                let s = self.params.get(t)?.shape();
                (s[0], s[1])
            };
            let adapter = LoraAdapter {
                target: t.clone(),
                rank,
                alpha,
            };
            let a = Tensor::randn(&[rank, din], 1.0 / (din as f64).sqrt(), rng);
            self.params.insert(adapter.a_name(), a)?;
            self.params.insert(adapter.b_name(), Tensor::zeros(&[dout, rank]))?;
            trainable.remove(t);
            trainable.insert(adapter.a_name());
            trainable.insert(adapter.b_name());
            self.lora.insert(t.clone(), adapter);
        }
        self.params.set_trainable(trainable)
    }

    /// Folds every adapter into its base weight and removes the adapters.
    pub fn lora_merge(&mut self) -> Result<()> {
        let adapters: Vec<LoraAdapter> = self.lora.values().cloned().collect();
        for adapter in adapters {
            let a = self.params.get(&adapter.a_name())?.clone();
            let b = self.params.get(&adapter.b_name())?.clone();
            // (B·A)ᵀ = Aᵀ·Bᵀ has the d_in × d_out layout of the base weight.
            let delta = a.transpose()?.matmul(&b.transpose()?)?;
            let s = adapter.scaling();
            let w = self.params.get_mut(&adapter.target)?;
            for (w, d) in w.data_mut().iter_mut().zip(delta.data()) {
                *w += s * d;
            }
            self.params.remove(&adapter.a_name());
            self.params.remove(&adapter.b_name());
            self.lora.remove(&adapter.target);
        }
        Ok(())
    }

    pub(crate) fn check_lora_shapes(&self, adapter: &LoraAdapter) -> Result<()> {
        let w = self.params.get(&adapter.target)?.shape().to_vec();
        let a = self.params.get(&adapter.a_name())?.shape().to_vec();
        let b = self.params.get(&adapter.b_name())?.shape().to_vec();
        if w.len() != 2 || a != [adapter.rank, w[0]] || b != [w[1], adapter.rank] {
            return Err(Error::Checkpoint(format!(
                "LoRA tensors for `{}` have shapes {a:?}/{b:?}, base weight {w:?}",
                adapter.target
            )));
        }
        Ok(())
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Visual-token budget of the full-size system this toy model mirrors.
pub const FULL_SCALE_CONTEXT: usize = 4096;
pub const FULL_SCALE_VISUAL_TOKENS: usize = 576;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdapterMode {
    /// Single affine projection.
    Linear,
    /// Two affine layers with a GELU between them.
    Mlp2,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_vis: usize,
    pub d_model: usize,
    pub n_layers_vis: usize,
    pub n_layers_lm: usize,
    pub n_heads: usize,
    pub vocab_size: usize,
    pub c_total: usize,
    pub c_vis: usize,
    pub patch_size: usize,
    pub image_size: usize,
    pub adapter_mode: AdapterMode,
}

impl ModelConfig {
    /// Desk-scale defaults: 12×12 single-channel images cut into 4×4 patches
    /// (9 visual tokens) inside a 256-token context.
    pub fn desk(vocab_size: usize) -> Self {
        Self {
            d_vis: 32,
            d_model: 64,
            n_layers_vis: 2,
            n_layers_lm: 2,
            n_heads: 2,
            vocab_size,
            c_total: 256,
            c_vis: 9,
            patch_size: 4,
            image_size: 12,
            adapter_mode: AdapterMode::Mlp2,
        }
    }

    pub fn grid(&self) -> usize {
        self.image_size / self.patch_size
    }

    pub fn d_ff(&self, width: usize) -> usize {
        4 * width
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("d_vis", self.d_vis),
            ("d_model", self.d_model),
            ("n_heads", self.n_heads),
            ("vocab_size", self.vocab_size),
            ("c_total", self.c_total),
            ("patch_size", self.patch_size),
            ("image_size", self.image_size),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if !self.image_size.is_multiple_of(self.patch_size) {
            return Err(Error::Config(format!(
                "patch_size {} does not divide image_size {}",
                self.patch_size, self.image_size
            )));
        }
        let g = self.grid();
        if self.c_vis != g * g {
            return Err(Error::Config(format!(
                "c_vis {} != (image_size / patch_size)^2 = {}",
                self.c_vis,
                g * g
            )));
        }
        if self.c_vis >= self.c_total {
            return Err(Error::Config(format!(
                "c_vis {} must be below c_total {}",
                self.c_vis, self.c_total
            )));
        }
        if !self.d_model.is_multiple_of(self.n_heads) || !self.d_vis.is_multiple_of(self.n_heads) {
            return Err(Error::Config(format!(
                "widths d_model={} and d_vis={} must be divisible by n_heads={}",
                self.d_model, self.d_vis, self.n_heads
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_config_is_valid() {
        let c = ModelConfig::desk(40);
        c.validate().unwrap();
        assert_eq!(c.c_vis, (12 / 4) * (12 / 4));
    }

    #[test]
    fn full_scale_budget() {
        // 336px images with 14px patches give the 576-token visual block.
        assert_eq!((336 / 14) * (336 / 14), FULL_SCALE_VISUAL_TOKENS);
        const { assert!(FULL_SCALE_VISUAL_TOKENS < FULL_SCALE_CONTEXT) };
    }

    #[test]
    fn rejects_inconsistent_budget() {
        let mut c = ModelConfig::desk(40);
        c.c_vis = 10;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::desk(40);
        c.patch_size = 5;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::desk(40);
        c.c_total = 9;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::desk(40);
        c.n_heads = 3;
        assert!(c.validate().is_err());
    }
}

//! The volumetric regressor: a strided 3-D convolution stem, patch tokens,
//! pre-norm transformer blocks and a small pooled regression head, plus the
//! convolution-only baseline sharing the same stem and head.

mod layers;
mod params;

use serde::{Deserialize, Serialize};

use crate::cohort::{DemographicsRecord, Target};
use crate::error::{Error, Result};

pub use layers::{
    assemble_sequence, cnn_stem, embed_demographics, forward, forward_tokens, linear, mae_loss,
    multi_head_attention, patchify, patchify_index, predict, regression_head, transformer_block,
    volume_input, AttentionOutput, LN_EPS,
};
pub use params::{
    AttentionVars, BlockVars, ConvVars, HeadVars, LinearVars, ModelParams, ModelVars,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[serde(rename = "beyondct")]
    BeyondCt,
    CnnBaseline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub input_cube: usize,
    pub stem_channels: Vec<usize>,
    pub patch: usize,
    pub embed_dim: usize,
    pub blocks: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    pub head_hidden: [usize; 2],
    pub use_demographics: bool,
    pub target: Target,
    /// Multiplier applied to the 0–255 voxel values before the stem.
    pub input_scale: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::BeyondCt,
            input_cube: 256,
            stem_channels: vec![4, 8, 8],
            patch: 4,
            embed_dim: 512,
            blocks: 4,
            heads: 8,
            mlp_ratio: 4,
            head_hidden: [128, 32],
            use_demographics: false,
            target: Target::Fvc,
            input_scale: 1.0 / 255.0,
        }
    }
}

impl ModelConfig {
    /// Desk-scale variant: 64³ input, 8 tokens of width 64.
    pub fn tiny() -> Self {
        Self {
            input_cube: 64,
            embed_dim: 64,
            blocks: 2,
            heads: 4,
            head_hidden: [32, 16],
            ..Self::default()
        }
    }

    /// Smallest configuration exercising every layer; used for gradient checks.
    pub fn micro() -> Self {
        Self {
            input_cube: 16,
            stem_channels: vec![2, 2, 2],
            patch: 1,
            embed_dim: 16,
            blocks: 1,
            heads: 2,
            mlp_ratio: 2,
            head_hidden: [8, 4],
            ..Self::default()
        }
    }

    pub fn cnn_baseline(mut self) -> Self {
        self.kind = ModelKind::CnnBaseline;
        self.use_demographics = false;
        self
    }

    pub fn violations(&self) -> Vec<String> {
        let mut bad = Vec::new();
        if self.stem_channels.is_empty() || self.stem_channels.contains(&0) {
            bad.push("model.stem_channels must be non-empty and positive".to_string());
        }
        let down = 1usize << self.stem_channels.len().min(30);
        if self.input_cube == 0 || self.input_cube % down != 0 {
            bad.push(format!(
                "model.input_cube {} must be a positive multiple of {down}",
                self.input_cube
            ));
        }
        if self.head_hidden.contains(&0) {
            bad.push("model.head_hidden widths must be positive".into());
        }
        if !(self.input_scale > 0.0 && self.input_scale.is_finite()) {
            bad.push(format!("model.input_scale {} must be positive", self.input_scale));
        }
        match self.kind {
            ModelKind::CnnBaseline => {
                if self.use_demographics {
                    bad.push("model.use_demographics is not supported by the CNN baseline".into());
                }
            }
            ModelKind::BeyondCt => {
                let m = self.feature_extent();
                if self.patch == 0 || m % self.patch != 0 {
                    bad.push(format!(
                        "feature extent {m} is not divisible by model.patch {}",
                        self.patch
                    ));
                }
                if self.heads == 0 || self.embed_dim == 0 || self.embed_dim % self.heads != 0 {
                    bad.push(format!(
                        "model.embed_dim {} must be a positive multiple of model.heads {}",
                        self.embed_dim, self.heads
                    ));
                }
                if self.mlp_ratio == 0 {
                    bad.push("model.mlp_ratio must be positive".into());
                }
            }
        }
        bad
    }

    pub fn validate(&self) -> Result<()> {
        let bad = self.violations();
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad))
        }
    }

    pub fn stem_out_channels(&self) -> usize {
        self.stem_channels.last().copied().unwrap_or(0)
    }

    /// Spatial extent of the stem output.
    pub fn feature_extent(&self) -> usize {
        self.input_cube >> self.stem_channels.len().min(30)
    }

    pub fn patch_len(&self) -> usize {
        self.stem_out_channels() * self.patch.pow(3)
    }

    pub fn patch_tokens(&self) -> usize {
        if self.patch == 0 {
            return 0;
        }
        (self.feature_extent() / self.patch).pow(3)
    }

    pub fn seq_len(&self) -> usize {
        self.patch_tokens() + usize::from(self.use_demographics)
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.heads.max(1)
    }

    /// Width seen by the regression head.
    pub fn pooled_dim(&self) -> usize {
        match self.kind {
            ModelKind::BeyondCt => self.embed_dim,
            ModelKind::CnnBaseline => self.stem_out_channels(),
        }
    }

    pub fn demographics_features(&self) -> usize {
        DemographicsRecord::FEATURES
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_arithmetic() {
        let c = ModelConfig::default();
        assert!(c.validate().is_ok());
        assert_eq!(c.feature_extent(), 32);
        assert_eq!(c.patch_tokens(), 512);
        assert_eq!(c.patch_len(), 512);
        assert_eq!(c.head_dim(), 64);
        let d = ModelConfig {
            use_demographics: true,
            ..c
        };
        assert_eq!(d.seq_len(), 513);
    }

    #[test]
    fn tiny_presets_are_valid() {
        let t = ModelConfig::tiny();
        assert_eq!(t.patch_tokens(), 8);
        assert!(t.validate().is_ok());
        assert!(ModelConfig::micro().validate().is_ok());
        assert!(ModelConfig::tiny().cnn_baseline().validate().is_ok());
    }

    #[test]
    fn all_violations_are_listed() {
        let c = ModelConfig {
            input_cube: 100,
            embed_dim: 30,
            heads: 8,
            ..ModelConfig::default()
        };
        let bad = c.violations();
        assert!(bad.len() >= 2, "{bad:?}");
    }
}

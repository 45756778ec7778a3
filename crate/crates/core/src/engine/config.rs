// SPDX-License-Identifier: MIT OR Apache-2.0

//! Model hyperparameters and the character vocabulary.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const BASE_CONV_DIMS: [usize; 7] = [512; 7];
const BASE_CONV_KERNELS: [usize; 7] = [10, 3, 3, 3, 3, 2, 2];
const BASE_CONV_STRIDES: [usize; 7] = [5, 2, 2, 2, 2, 2, 2];

/// Ordered character inventory of the CTC head.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    tokens: Vec<String>,
    blank: usize,
    delimiter: usize,
}

impl Vocab {
    pub fn new(tokens: Vec<String>, blank: usize, delimiter: usize) -> Result<Self> {
        if blank >= tokens.len() {
            return Err(Error::Config(format!(
                "blank index {blank} outside vocabulary of {}",
                tokens.len()
            )));
        }
        if delimiter >= tokens.len() || delimiter == blank {
            return Err(Error::Config("vocabulary lacks a word delimiter".into()));
        }
        Ok(Self {
            tokens,
            blank,
            delimiter,
        })
    }

    /// Parses a `vocab.json` mapping (token → index). `blank_hint` is the
    /// pad token id from `config.json`, if any.
    pub fn from_json_map(map: &BTreeMap<String, usize>, blank_hint: Option<usize>) -> Result<Self> {
        let mut tokens = vec![None; map.len()];
        for (tok, &idx) in map {
            let slot = tokens
                .get_mut(idx)
                .ok_or_else(|| Error::Config(format!("vocab index {idx} for `{tok}` is not contiguous")))?;
            if slot.is_some() {
                return Err(Error::Config(format!("duplicate vocab index {idx}")));
            }
            *slot = Some(tok.clone());
        }
        let tokens: Vec<String> = tokens.into_iter().map(Option::unwrap_or_default).collect();
        let blank = match blank_hint {
            Some(b) if b < tokens.len() => b,
            _ => tokens
                .iter()
                .position(|t| t == "<pad>")
                .ok_or_else(|| Error::Config("unknown vocab blank: no pad token".into()))?,
        };
        let delimiter = tokens
            .iter()
            .position(|t| t == "|")
            .ok_or_else(|| Error::Config("vocabulary lacks the `|` word delimiter".into()))?;
        Self::new(tokens, blank, delimiter)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn blank(&self) -> usize {
        self.blank
    }

    pub fn delimiter(&self) -> usize {
        self.delimiter
    }

    pub fn token(&self, idx: usize) -> Option<&str> {
        self.tokens.get(idx).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Index of a character token, case-insensitively for letters.
    pub fn index_of(&self, ch: &str) -> Option<usize> {
        let up = ch.to_uppercase();
        self.tokens.iter().position(|t| *t == up || t == ch)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureNorm {
    /// Per-channel group norm after the first conv layer only.
    Group,
}

/// Encoder hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub conv_dims: Vec<usize>,
    pub conv_kernels: Vec<usize>,
    pub conv_strides: Vec<usize>,
    pub conv_bias: bool,
    pub feature_norm: FeatureNorm,
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub ffn_dim: usize,
    pub pos_conv_kernel: usize,
    pub pos_conv_groups: usize,
    pub layer_norm_eps: f32,
    pub group_norm_eps: f32,
    pub sample_rate: u32,
    /// Zero-mean / unit-variance normalization of the waveform before the
    /// conv stack.
    pub normalize_input: bool,
    pub vocab: Vocab,
}

/// Subset of the Hugging Face `config.json` that the engine reads.
#[derive(Debug, Deserialize)]
struct HfConfig {
    conv_dim: Option<Vec<usize>>,
    conv_kernel: Option<Vec<usize>>,
    conv_stride: Option<Vec<usize>>,
    conv_bias: Option<bool>,
    feat_extract_norm: Option<String>,
    do_stable_layer_norm: Option<bool>,
    hidden_size: Option<usize>,
    num_hidden_layers: Option<usize>,
    num_attention_heads: Option<usize>,
    intermediate_size: Option<usize>,
    num_conv_pos_embeddings: Option<usize>,
    num_conv_pos_embedding_groups: Option<usize>,
    layer_norm_eps: Option<f32>,
    hidden_act: Option<String>,
    feat_extract_activation: Option<String>,
    pad_token_id: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
struct HfPreprocessor {
    sampling_rate: Option<u32>,
    do_normalize: Option<bool>,
}

impl ModelConfig {
    /// The base architecture with the given vocabulary.
    pub fn base(vocab: Vocab) -> Self {
        Self {
            conv_dims: BASE_CONV_DIMS.to_vec(),
            conv_kernels: BASE_CONV_KERNELS.to_vec(),
            conv_strides: BASE_CONV_STRIDES.to_vec(),
            conv_bias: false,
            feature_norm: FeatureNorm::Group,
            hidden_dim: 768,
            num_layers: 12,
            num_heads: 12,
            ffn_dim: 3072,
            pos_conv_kernel: 128,
            pos_conv_groups: 16,
            layer_norm_eps: 1e-5,
            group_norm_eps: 1e-5,
            sample_rate: 16_000,
            normalize_input: true,
            vocab,
        }
    }

    /// Reads `config.json`, `vocab.json` and (optionally)
    /// `preprocessor_config.json` from a checkpoint directory.
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let cfg_path = dir.join("config.json");
        let raw =
            std::fs::read_to_string(&cfg_path).map_err(|e| Error::Config(format!("{}: {e}", cfg_path.display())))?;
        let hf: HfConfig =
            serde_json::from_str(&raw).map_err(|e| Error::Config(format!("{}: {e}", cfg_path.display())))?;

        let vocab_path = dir.join("vocab.json");
        let raw = std::fs::read_to_string(&vocab_path)
            .map_err(|e| Error::Config(format!("{}: {e}", vocab_path.display())))?;
        let map: BTreeMap<String, usize> =
            serde_json::from_str(&raw).map_err(|e| Error::Config(format!("{}: {e}", vocab_path.display())))?;
        let vocab = Vocab::from_json_map(&map, hf.pad_token_id)?;

        let pre_path = dir.join("preprocessor_config.json");
        let pre: HfPreprocessor = if pre_path.exists() {
            serde_json::from_str(&std::fs::read_to_string(&pre_path)?)
                .map_err(|e| Error::Config(format!("{}: {e}", pre_path.display())))?
        } else {
            HfPreprocessor::default()
        };

        if hf.do_stable_layer_norm == Some(true) {
            return Err(Error::Config(
                "pre-norm (stable layer norm) encoders are not supported".into(),
            ));
        }
        if let Some(norm) = hf.feat_extract_norm.as_deref() {
            if norm != "group" {
                return Err(Error::Config(format!(
                    "feature extractor norm `{norm}` is not supported"
                )));
            }
        }
        for act in [hf.hidden_act.as_deref(), hf.feat_extract_activation.as_deref()]
            .into_iter()
            .flatten()
        {
            if act != "gelu" {
                return Err(Error::Config(format!("activation `{act}` is not supported")));
            }
        }

        let mut cfg = Self::base(vocab);
        if let Some(v) = hf.conv_dim {
            cfg.conv_dims = v;
        }
        if let Some(v) = hf.conv_kernel {
            cfg.conv_kernels = v;
        }
        if let Some(v) = hf.conv_stride {
            cfg.conv_strides = v;
        }
        cfg.conv_bias = hf.conv_bias.unwrap_or(cfg.conv_bias);
        cfg.hidden_dim = hf.hidden_size.unwrap_or(cfg.hidden_dim);
        cfg.num_layers = hf.num_hidden_layers.unwrap_or(cfg.num_layers);
        cfg.num_heads = hf.num_attention_heads.unwrap_or(cfg.num_heads);
        cfg.ffn_dim = hf.intermediate_size.unwrap_or(cfg.ffn_dim);
        cfg.pos_conv_kernel = hf.num_conv_pos_embeddings.unwrap_or(cfg.pos_conv_kernel);
        cfg.pos_conv_groups = hf.num_conv_pos_embedding_groups.unwrap_or(cfg.pos_conv_groups);
        cfg.layer_norm_eps = hf.layer_norm_eps.unwrap_or(cfg.layer_norm_eps);
        cfg.sample_rate = pre.sampling_rate.unwrap_or(cfg.sample_rate);
        cfg.normalize_input = pre.do_normalize.unwrap_or(cfg.normalize_input);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.conv_dims.len();
        if n == 0 || self.conv_kernels.len() != n || self.conv_strides.len() != n {
            return Err(Error::Config(format!(
                "conv stack lists disagree: dims {}, kernels {}, strides {}",
                n,
                self.conv_kernels.len(),
                self.conv_strides.len()
            )));
        }
        if self.conv_kernels.iter().chain(&self.conv_strides).any(|&v| v == 0) {
            return Err(Error::Config("conv kernels and strides must be positive".into()));
        }
        if self.num_heads == 0 || !self.hidden_dim.is_multiple_of(self.num_heads) {
            return Err(Error::Config(format!(
                "hidden_dim {} is not divisible by num_heads {}",
                self.hidden_dim, self.num_heads
            )));
        }
        if self.pos_conv_groups == 0 || !self.hidden_dim.is_multiple_of(self.pos_conv_groups) {
            return Err(Error::Config(format!(
                "hidden_dim {} is not divisible by {} positional conv groups",
                self.hidden_dim, self.pos_conv_groups
            )));
        }
        if self.num_layers == 0 || self.ffn_dim == 0 || self.pos_conv_kernel == 0 {
            return Err(Error::Config(
                "layer count, ffn width and positional kernel must be positive".into(),
            ));
        }
        if self.sample_rate == 0 {
            return Err(Error::Config("sample rate must be positive".into()));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_dim / self.num_heads
    }

    pub fn feature_dim(&self) -> usize {
        *self.conv_dims.last().expect("validated conv stack")
    }

    /// Samples spanned by one output frame of the conv stack.
    pub fn receptive_field(&self) -> usize {
        self.conv_kernels
            .iter()
            .zip(&self.conv_strides)
            .rev()
            .fold(1, |r, (&k, &s)| (r - 1) * s + k)
    }

    /// Samples between consecutive frames.
    pub fn hop(&self) -> usize {
        self.conv_strides.iter().product()
    }

    /// Number of encoder frames produced for `num_samples` input samples.
    pub fn frame_count(&self, num_samples: usize) -> Result<usize> {
        let mut len = num_samples;
        for (&k, &s) in self.conv_kernels.iter().zip(&self.conv_strides) {
            len = crate::tensor::conv_out_len(len, k, s).ok_or(Error::InputTooShort {
                needed: self.receptive_field(),
                got: num_samples,
            })?;
        }
        Ok(len)
    }
}

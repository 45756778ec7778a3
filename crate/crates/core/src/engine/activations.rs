// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Which intermediate activations a forward pass records.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptureSelector {
    /// Residual stream after every layer, plus layer 0 (feature projection)
    /// and the encoder input.
    pub hidden: bool,
    pub head_out: bool,
    pub values: bool,
    pub mlp_out: bool,
    pub attn_out: bool,
    /// Post-softmax attention weights (`frames × frames` per head).
    pub attn_weights: bool,
}

impl CaptureSelector {
    pub fn none() -> Self {
        Self::default()
    }

    /// Everything except attention weights.
    pub fn all() -> Self {
        Self {
            hidden: true,
            head_out: true,
            values: true,
            mlp_out: true,
            attn_out: true,
            attn_weights: false,
        }
    }

    pub fn hidden() -> Self {
        Self {
            hidden: true,
            ..Self::default()
        }
    }
}

/// Per-run record of layer outputs and component writes.
///
/// Layers are numbered from 1; `hidden[0]` is the feature-projection output,
/// before positional convolution. Heads are numbered from 0.
#[derive(Clone, Debug, Default)]
pub struct ActivationStore {
    pub encoder_input: Option<Tensor>,
    pub hidden: BTreeMap<usize, Tensor>,
    /// Each head's additive contribution to the residual stream.
    pub head_out: BTreeMap<(usize, usize), Tensor>,
    /// Each head's value vectors, `frames × head_dim`.
    pub value: BTreeMap<(usize, usize), Tensor>,
    pub mlp_out: BTreeMap<usize, Tensor>,
    /// Attention sublayer output (sum of head writes plus bias).
    pub attn_out: BTreeMap<usize, Tensor>,
    pub attn_weights: BTreeMap<(usize, usize), Tensor>,
    pub logits: Tensor,
}

impl ActivationStore {
    pub fn num_frames(&self) -> usize {
        self.logits.rows()
    }

    /// Residual stream entering layer `layer` (1-based).
    pub fn layer_input(&self, layer: usize) -> Result<&Tensor> {
        let found = if layer == 1 {
            self.encoder_input.as_ref()
        } else {
            self.hidden.get(&(layer - 1))
        };
        found.ok_or_else(|| {
            Error::Intervention(format!(
                "no captured residual stream entering layer {layer}; run with hidden capture"
            ))
        })
    }

    /// Softmax probabilities of frame `frame`.
    pub fn frame_probs(&self, frame: usize) -> Result<Vec<f32>> {
        if frame >= self.logits.rows() {
            return Err(Error::Alignment(format!(
                "frame {frame} outside 0..{}",
                self.logits.rows()
            )));
        }
        crate::tensor::softmax(self.logits.row(frame))
    }
}

/// Rows of one component activation to overwrite.
#[derive(Clone, Debug)]
pub struct RowPatch {
    pub head: Option<usize>,
    /// Target-run frame indices, one per row of `rows`.
    pub frames: Vec<usize>,
    pub rows: Tensor,
}

/// Replacements applied within one encoder layer.
#[derive(Clone, Debug, Default)]
pub struct LayerPatches {
    pub head_out: Vec<RowPatch>,
    pub values: Vec<RowPatch>,
    pub mlp_out: Vec<RowPatch>,
}

impl LayerPatches {
    pub fn is_empty(&self) -> bool {
        self.head_out.is_empty() && self.values.is_empty() && self.mlp_out.is_empty()
    }
}

/// Activation replacements for a patched forward pass, keyed by 1-based layer.
#[derive(Clone, Debug, Default)]
pub struct PatchPlan {
    pub layers: BTreeMap<usize, LayerPatches>,
}

impl PatchPlan {
    pub fn is_empty(&self) -> bool {
        self.layers.values().all(LayerPatches::is_empty)
    }

    /// Lowest layer touched by the plan.
    pub fn first_layer(&self) -> Option<usize> {
        self.layers.iter().find(|(_, p)| !p.is_empty()).map(|(&l, _)| l)
    }

    pub fn layer_mut(&mut self, layer: usize) -> &mut LayerPatches {
        self.layers.entry(layer).or_default()
    }
}

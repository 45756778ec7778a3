// SPDX-License-Identifier: MIT OR Apache-2.0

//! Wav2Vec2-CTC encoder: checkpoint loading and a forward pass that can
//! record and replace per-component activations.

mod activations;
mod checkpoint;
mod config;
mod forward;

pub use activations::{ActivationStore, CaptureSelector, LayerPatches, PatchPlan, RowPatch};
pub use checkpoint::{
    load_checkpoint, load_tensor_file, save_tensor_file, Checkpoint, ConvLayer, EncoderLayer, Linear, NormParams,
};
pub use config::{FeatureNorm, ModelConfig, Vocab};

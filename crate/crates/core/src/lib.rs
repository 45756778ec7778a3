// SPDX-License-Identifier: MIT OR Apache-2.0

//! Wav2Vec2-CTC workbench for studying compensation for place assimilation.

pub mod audio;
pub mod behavioral;
pub mod ctc;
pub mod engine;
pub mod error;
pub mod intervention;
pub mod probing;
pub mod tensor;

pub use audio::AudioBuffer;
pub use engine::{ActivationStore, CaptureSelector, Checkpoint, ModelConfig, PatchPlan, Vocab};
pub use error::{Error, Result};
pub use tensor::Tensor;

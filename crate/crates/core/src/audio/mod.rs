// SPDX-License-Identifier: MIT OR Apache-2.0

//! Audio ingestion, resampling and stimulus assembly.

mod assemble;
mod resample;
mod wav;

pub use assemble::{assemble, assemble_stimulus, AssembledStimulus, AssemblyPlan, Layout, SilenceSource};
pub use resample::resample;
pub use wav::{read_wav, write_wav};

use crate::error::{Error, Result};

/// Model input rate.
pub const MODEL_RATE: u32 = 16_000;

/// Mono floating-point audio.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Audio("sample rate must be positive".into()));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("audio samples".into()));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn silence(len: usize, sample_rate: u32) -> Self {
        Self {
            samples: vec![0.0; len],
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_ms(&self) -> f64 {
        self.samples.len() as f64 * 1000.0 / f64::from(self.sample_rate)
    }
}

/// Reads a WAV file and brings it to the model rate.
pub fn load_for_model(path: &std::path::Path) -> Result<AudioBuffer> {
    let a = read_wav(path)?;
    Ok(resample(&a, MODEL_RATE))
}

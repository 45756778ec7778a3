// SPDX-License-Identifier: MIT OR Apache-2.0

//! Shared inputs for the benchmarks.

use assimlab_core::{AudioBuffer, Tensor, Vocab};

/// The 32-token character vocabulary of the English CTC checkpoints.
pub fn letter_vocab() -> Vocab {
    let tokens: Vec<String> = [
        "<pad>", "<s>", "</s>", "<unk>", "|", "E", "T", "A", "O", "N", "I", "H", "S", "R", "D", "L", "U", "M", "W",
        "C", "F", "G", "Y", "P", "B", "V", "K", "'", "X", "J", "Q", "Z",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    Vocab::new(tokens, 0, 4).expect("fixed vocabulary is valid")
}

/// Deterministic speech-like test signal: two drifting partials.
pub fn chirp(seconds: f64) -> AudioBuffer {
    let n = (seconds * 16_000.0) as usize;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / 16_000.0;
            (0.3 * (std::f64::consts::TAU * (180.0 + 40.0 * t) * t).sin()
                + 0.1 * (std::f64::consts::TAU * 1200.0 * t).sin()) as f32
        })
        .collect();
    AudioBuffer::new(samples, 16_000).expect("finite samples")
}

/// A `[rows × cols]` matrix with values in roughly [-1, 1].
pub fn filled(rows: usize, cols: usize, salt: u32) -> Tensor {
    let data = (0..rows * cols)
        .map(|i| {
            (((i as u32).wrapping_mul(2_654_435_761).wrapping_add(salt) >> 8) as f32 / (1u32 << 24) as f32) * 2.0 - 1.0
        })
        .collect();
    Tensor::new(vec![rows, cols], data).expect("shape matches data")
}

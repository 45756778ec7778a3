// SPDX-License-Identifier: MIT OR Apache-2.0

#![allow(dead_code)]

pub mod reference;
pub mod spectrum;

use std::collections::BTreeMap;
use std::path::PathBuf;

use assimlab_core::audio::{read_wav, AudioBuffer};
use assimlab_core::engine::{load_checkpoint, load_tensor_file, Checkpoint};
use assimlab_core::Tensor;
use serde::Deserialize;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

#[derive(Deserialize)]
pub struct Index {
    pub logit_tolerance_max_abs: f32,
    pub clips: Vec<ClipEntry>,
    pub patched: Patched,
}

#[derive(Deserialize)]
pub struct ClipEntry {
    pub id: String,
    pub audio: String,
    pub audio_sha256: String,
    pub tensors: String,
    pub transcript: String,
    pub frames: usize,
}

#[derive(Deserialize)]
pub struct Patched {
    pub tensors: String,
    pub runs: Vec<PatchedRun>,
}

#[derive(Deserialize)]
pub struct PatchedRun {
    pub name: String,
    pub target: String,
    pub source: String,
    pub component: String,
    pub layer: usize,
    pub head: Option<usize>,
    pub frames: [usize; 2],
    pub source_frames: [usize; 2],
}

pub fn index() -> Index {
    let text = std::fs::read_to_string(fixtures().join("golden/index.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

pub fn model() -> Checkpoint {
    load_checkpoint(&fixtures().join("tiny_model")).unwrap()
}

pub fn clip_audio(id: &str) -> AudioBuffer {
    read_wav(&fixtures().join("golden").join(format!("{id}.wav"))).unwrap()
}

pub fn clip_tensors(id: &str) -> BTreeMap<String, Tensor> {
    load_tensor_file(&fixtures().join("golden").join(format!("{id}.safetensors"))).unwrap()
}

pub fn patched_tensors() -> BTreeMap<String, Tensor> {
    load_tensor_file(&fixtures().join("golden/patched.safetensors")).unwrap()
}

/// Columns `[head·hd, (head+1)·hd)` of a `frames × hidden` tensor.
pub fn head_cols(t: &Tensor, head: usize, hd: usize) -> Tensor {
    t.slice_cols(head * hd, (head + 1) * hd).unwrap()
}

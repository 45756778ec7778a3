// SPDX-License-Identifier: MIT OR Apache-2.0

//! The encoder forward pass.
//!
//! Attention output is always assembled as the sum of per-head writes
//! (`context_h · W_o[:, h]ᵀ`) in head order, plus the projection bias. The
//! same arithmetic runs with and without patches, so replacing a component
//! with its own recorded value reproduces the baseline bit for bit.

use rayon::prelude::*;

use super::activations::{ActivationStore, CaptureSelector, LayerPatches, PatchPlan, RowPatch};
use super::checkpoint::{Checkpoint, NormParams};
use crate::audio::AudioBuffer;
use crate::error::{Error, Result};
use crate::tensor::{self, conv1d, gelu_in_place, layer_norm_rows, linear, matmul, Tensor};

const INPUT_NORM_EPS: f64 = 1e-7;

impl Checkpoint {
    /// Runs the model on one utterance.
    pub fn forward(&self, audio: &AudioBuffer, capture: &CaptureSelector) -> Result<ActivationStore> {
        self.forward_patched(audio, capture, &PatchPlan::default())
    }

    /// Runs the model with component activations replaced per `patches`.
    pub fn forward_patched(
        &self,
        audio: &AudioBuffer,
        capture: &CaptureSelector,
        patches: &PatchPlan,
    ) -> Result<ActivationStore> {
        let features = self.encode_features(audio)?;
        let input = self.positional(&features)?;
        let mut store = ActivationStore::default();
        if capture.hidden {
            store.hidden.insert(0, features);
            store.encoder_input = Some(input.clone());
        }
        self.run_layers(1, input, capture, patches, &mut store)?;
        Ok(store)
    }

    /// Continues a forward pass from the residual stream entering `layer`.
    ///
    /// Equivalent to a full patched forward when every patch sits at or after
    /// `layer` and `input` is the unpatched stream entering it.
    pub fn resume(
        &self,
        layer: usize,
        input: &Tensor,
        capture: &CaptureSelector,
        patches: &PatchPlan,
    ) -> Result<ActivationStore> {
        if layer == 0 || layer > self.config.num_layers {
            return Err(Error::Invalid(format!(
                "layer {layer} outside 1..={}",
                self.config.num_layers
            )));
        }
        if let Some(first) = patches.first_layer() {
            if first < layer {
                return Err(Error::Intervention(format!(
                    "patch at layer {first} precedes resume layer {layer}"
                )));
            }
        }
        let mut store = ActivationStore::default();
        self.run_layers(layer, input.clone(), capture, patches, &mut store)?;
        Ok(store)
    }

    /// Waveform → feature-projection output (`frames × hidden_dim`).
    pub fn encode_features(&self, audio: &AudioBuffer) -> Result<Tensor> {
        let cfg = &self.config;
        if audio.sample_rate != cfg.sample_rate {
            return Err(Error::SampleRate {
                expected: cfg.sample_rate,
                got: audio.sample_rate,
            });
        }
        cfg.frame_count(audio.samples.len())?;
        if audio.samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("audio samples".into()));
        }
        let samples = if cfg.normalize_input {
            normalize_waveform(&audio.samples)
        } else {
            audio.samples.clone()
        };
        let mut x = Tensor::new(vec![1, samples.len()], samples)?;
        for layer in &self.conv {
            x = conv1d(&x, &layer.weight, layer.stride, layer.bias.as_deref(), 1)?;
            if let Some(norm) = &layer.norm {
                channel_norm(&mut x, norm, cfg.group_norm_eps);
            }
            gelu_in_place(&mut x);
        }
        let x = x.transpose()?;
        let x = layer_norm_rows(
            &x,
            &self.feature_norm.gamma,
            &self.feature_norm.beta,
            cfg.layer_norm_eps,
        )?;
        linear(&x, &self.projection.weight, Some(&self.projection.bias))
    }

    /// Adds the convolutional position embedding and normalizes, giving the
    /// residual stream entering layer 1.
    pub fn positional(&self, features: &Tensor) -> Result<Tensor> {
        let cfg = &self.config;
        let (t, h) = features.expect_2d("positional input")?;
        let k = cfg.pos_conv_kernel;
        let pad = k / 2;
        let xt = features.transpose()?;
        let width = t + 2 * pad;
        let mut padded = vec![0.0f32; h * width];
        for c in 0..h {
            padded[c * width + pad..c * width + pad + t].copy_from_slice(xt.row(c));
        }
        let padded = Tensor::new(vec![h, width], padded)?;
        let y = conv1d(
            &padded,
            &self.pos_conv,
            1,
            Some(&self.pos_conv_bias),
            cfg.pos_conv_groups,
        )?;
        // even kernels produce one extra step; drop the last
        let y = y.slice_cols(0, t)?;
        let mut y = y.transpose()?;
        gelu_in_place(&mut y);
        y.add_assign(features)?;
        layer_norm_rows(
            &y,
            &self.encoder_norm.gamma,
            &self.encoder_norm.beta,
            cfg.layer_norm_eps,
        )
    }

    fn run_layers(
        &self,
        first: usize,
        mut x: Tensor,
        capture: &CaptureSelector,
        patches: &PatchPlan,
        store: &mut ActivationStore,
    ) -> Result<()> {
        let empty = LayerPatches::default();
        for layer in first..=self.config.num_layers {
            let p = patches.layers.get(&layer).unwrap_or(&empty);
            x = self.run_layer(layer, &x, capture, p, store)?;
            if capture.hidden {
                store.hidden.insert(layer, x.clone());
            }
        }
        store.logits = linear(&x, &self.lm_head.weight, Some(&self.lm_head.bias))?;
        Ok(())
    }

    /// One post-norm transformer block.
    fn run_layer(
        &self,
        layer: usize,
        x: &Tensor,
        capture: &CaptureSelector,
        patches: &LayerPatches,
        store: &mut ActivationStore,
    ) -> Result<Tensor> {
        let cfg = &self.config;
        let w = &self.layers[layer - 1];
        let (frames, h) = x.expect_2d("layer input")?;
        let hd = cfg.head_dim();
        let scale = (hd as f32).powf(-0.5);

        let q = linear(x, &w.q.weight, Some(&w.q.bias))?;
        let k = linear(x, &w.k.weight, Some(&w.k.bias))?;
        let mut v = linear(x, &w.v.weight, Some(&w.v.bias))?;
        for p in &patches.values {
            let head = p
                .head
                .ok_or_else(|| Error::Intervention("value patch without head".into()))?;
            overwrite_rows(&mut v, p, head * hd, hd, frames)?;
        }

        let heads = (0..cfg.num_heads)
            .into_par_iter()
            .map(|head| {
                let cols = head * hd..(head + 1) * hd;
                let qh = q.slice_cols(cols.start, cols.end)?;
                let kh = k.slice_cols(cols.start, cols.end)?;
                let vh = v.slice_cols(cols.start, cols.end)?;
                let mut scores = linear(&qh, &kh, None)?;
                scores.data_mut().par_chunks_mut(frames).for_each(|row| {
                    row.iter_mut().for_each(|s| *s *= scale);
                    tensor::softmax_in_place(row);
                });
                let context = matmul(&scores, &vh)?;
                let write = matmul(&context, &w.out_blocks[head])?;
                Ok((vh, write, capture.attn_weights.then_some(scores)))
            })
            .collect::<Result<Vec<_>>>()?;

        let mut writes = Vec::with_capacity(heads.len());
        for (head, (vh, write, weights)) in heads.into_iter().enumerate() {
            if capture.values {
                store.value.insert((layer, head), vh);
            }
            if let Some(wts) = weights {
                store.attn_weights.insert((layer, head), wts);
            }
            writes.push(write);
        }
        for p in &patches.head_out {
            let head = p
                .head
                .ok_or_else(|| Error::Intervention("head patch without head".into()))?;
            let target = writes
                .get_mut(head)
                .ok_or_else(|| Error::Intervention(format!("head {head} outside 0..{}", cfg.num_heads)))?;
            overwrite_rows(target, p, 0, h, frames)?;
        }

        let mut attn = Tensor::zeros(vec![frames, h]);
        for write in &writes {
            attn.add_assign(write)?;
        }
        attn.data_mut()
            .par_chunks_mut(h)
            .for_each(|row| row.iter_mut().zip(&w.out.bias).for_each(|(a, b)| *a += b));
        if capture.head_out {
            for (head, write) in writes.into_iter().enumerate() {
                store.head_out.insert((layer, head), write);
            }
        }

        let mut resid = x.clone();
        resid.add_assign(&attn)?;
        if capture.attn_out {
            store.attn_out.insert(layer, attn);
        }
        let mid = layer_norm_rows(&resid, &w.attn_norm.gamma, &w.attn_norm.beta, cfg.layer_norm_eps)?;

        let mut inner = linear(&mid, &w.ff_in.weight, Some(&w.ff_in.bias))?;
        gelu_in_place(&mut inner);
        let mut mlp = linear(&inner, &w.ff_out.weight, Some(&w.ff_out.bias))?;
        for p in &patches.mlp_out {
            overwrite_rows(&mut mlp, p, 0, h, frames)?;
        }
        let mut out = mid;
        out.add_assign(&mlp)?;
        if capture.mlp_out {
            store.mlp_out.insert(layer, mlp);
        }
        layer_norm_rows(&out, &w.final_norm.gamma, &w.final_norm.beta, cfg.layer_norm_eps)
    }

    /// Monolithic attention sublayer output for layer `layer` given its
    /// input: `context · W_oᵀ + b` in one product. Used to check the per-head
    /// decomposition.
    pub fn attention_monolithic(&self, layer: usize, x: &Tensor) -> Result<Tensor> {
        let cfg = &self.config;
        let w = self
            .layers
            .get(layer.wrapping_sub(1))
            .ok_or_else(|| Error::Invalid(format!("layer {layer} outside 1..={}", cfg.num_layers)))?;
        let (frames, h) = x.expect_2d("layer input")?;
        let hd = cfg.head_dim();
        let scale = (hd as f32).powf(-0.5);
        let q = linear(x, &w.q.weight, Some(&w.q.bias))?;
        let k = linear(x, &w.k.weight, Some(&w.k.bias))?;
        let v = linear(x, &w.v.weight, Some(&w.v.bias))?;
        let mut context = vec![0.0f32; frames * h];
        for head in 0..cfg.num_heads {
            let qh = q.slice_cols(head * hd, (head + 1) * hd)?;
            let kh = k.slice_cols(head * hd, (head + 1) * hd)?;
            let vh = v.slice_cols(head * hd, (head + 1) * hd)?;
            let mut scores = linear(&qh, &kh, None)?;
            for r in 0..frames {
                let row = scores.row_mut(r);
                row.iter_mut().for_each(|s| *s *= scale);
                tensor::softmax_in_place(row);
            }
            let ctx = matmul(&scores, &vh)?;
            for r in 0..frames {
                context[r * h + head * hd..r * h + (head + 1) * hd].copy_from_slice(ctx.row(r));
            }
        }
        let context = Tensor::new(vec![frames, h], context)?;
        linear(&context, &w.out.weight, Some(&w.out.bias))
    }
}

/// Zero-mean, unit-variance waveform scaling.
fn normalize_waveform(x: &[f32]) -> Vec<f32> {
    let n = x.len() as f64;
    let mean = x.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
    let var = x.iter().map(|&v| (f64::from(v) - mean).powi(2)).sum::<f64>() / n;
    let inv = 1.0 / (var + INPUT_NORM_EPS).sqrt();
    x.iter().map(|&v| ((f64::from(v) - mean) * inv) as f32).collect()
}

/// Group norm with one group per channel over a `[channels × time]` tensor.
fn channel_norm(x: &mut Tensor, norm: &NormParams, eps: f32) {
    let t = x.cols();
    x.data_mut().par_chunks_mut(t).enumerate().for_each(|(c, row)| {
        let n = row.len() as f64;
        let mean = row.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
        let var = row.iter().map(|&v| (f64::from(v) - mean).powi(2)).sum::<f64>() / n;
        let inv = 1.0 / (var + f64::from(eps)).sqrt();
        let (g, b) = (norm.gamma[c], norm.beta[c]);
        row.iter_mut()
            .for_each(|v| *v = ((f64::from(*v) - mean) * inv) as f32 * g + b);
    });
}

fn overwrite_rows(t: &mut Tensor, p: &RowPatch, col0: usize, width: usize, frames: usize) -> Result<()> {
    if p.rows.rows() != p.frames.len() || p.rows.cols() != width {
        return Err(Error::Intervention(format!(
            "patch rows {:?} do not match {} frames × width {width}",
            p.rows.shape(),
            p.frames.len()
        )));
    }
    for (i, &f) in p.frames.iter().enumerate() {
        if f >= frames {
            return Err(Error::Intervention(format!("patch frame {f} outside 0..{frames}")));
        }
        t.row_mut(f)[col0..col0 + width].copy_from_slice(p.rows.row(i));
    }
    Ok(())
}

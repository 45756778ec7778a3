// SPDX-License-Identifier: MIT OR Apache-2.0

//! Checkpoint directory loading.
//!
//! A checkpoint directory holds `config.json`, `vocab.json`, an optional
//! `preprocessor_config.json` and `model.safetensors`. Parameter names follow
//! the Hugging Face Wav2Vec2-CTC layout, with or without the `wav2vec2.`
//! prefix. The positional convolution may be stored fused (`weight`) or as a
//! weight-norm pair (`weight_g`/`weight_v`, or the newer
//! `parametrizations.weight.original0/1`); pairs are fused at load time.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use safetensors::tensor::{Dtype, SafeTensors, TensorView};

use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Affine parameters of a layer or group norm.
#[derive(Clone, Debug)]
pub struct NormParams {
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
}

/// Dense layer computing `x · weightᵀ + bias`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Vec<f32>,
}

#[derive(Clone, Debug)]
pub struct ConvLayer {
    pub weight: Tensor,
    pub bias: Option<Vec<f32>>,
    pub norm: Option<NormParams>,
    pub stride: usize,
}

#[derive(Clone, Debug)]
pub struct EncoderLayer {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub out: Linear,
    /// Per-head blocks of the output projection, transposed to
    /// `[head_dim × hidden_dim]` so a head's write is `context_h · block`.
    pub out_blocks: Vec<Tensor>,
    pub attn_norm: NormParams,
    pub ff_in: Linear,
    pub ff_out: Linear,
    pub final_norm: NormParams,
}

/// Validated model weights. Immutable after load.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub conv: Vec<ConvLayer>,
    pub feature_norm: NormParams,
    pub projection: Linear,
    pub pos_conv: Tensor,
    pub pos_conv_bias: Vec<f32>,
    pub encoder_norm: NormParams,
    pub layers: Vec<EncoderLayer>,
    pub lm_head: Linear,
    names: Vec<String>,
}

/// Loads and validates a checkpoint directory.
pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let config = ModelConfig::from_dir(dir)?;
    let tensors = load_tensor_file(&dir.join("model.safetensors"))?;
    Checkpoint::from_tensors(config, tensors)
}

/// Reads every tensor of a safetensors container as `f32`.
pub fn load_tensor_file(path: &Path) -> Result<BTreeMap<String, Tensor>> {
    let bytes = std::fs::read(path).map_err(|e| Error::Load(format!("{}: {e}", path.display())))?;
    let st = SafeTensors::deserialize(&bytes).map_err(|e| Error::Load(format!("{}: {e}", path.display())))?;
    let mut out = BTreeMap::new();
    for (name, view) in st.tensors() {
        out.insert(name.clone(), view_to_tensor(&name, &view)?);
    }
    Ok(out)
}

fn view_to_tensor(name: &str, view: &TensorView<'_>) -> Result<Tensor> {
    let data: Vec<f32> = match view.dtype() {
        Dtype::F32 => view
            .data()
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect(),
        Dtype::F64 => view
            .data()
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes([b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7]]) as f32)
            .collect(),
        other => return Err(Error::Load(format!("tensor `{name}` has unsupported dtype {other:?}"))),
    };
    Tensor::new(view.shape().to_vec(), data)
}

/// Writes `f32` tensors to a safetensors container (names sorted).
pub fn save_tensor_file(path: &Path, tensors: &BTreeMap<String, Tensor>) -> Result<()> {
    let bytes: Vec<(String, Vec<u8>, Vec<usize>)> = tensors
        .iter()
        .map(|(k, t)| {
            let raw = t.data().iter().flat_map(|v| v.to_le_bytes()).collect();
            (k.clone(), raw, t.shape().to_vec())
        })
        .collect();
    let views = bytes
        .iter()
        .map(|(k, raw, shape)| {
            TensorView::new(Dtype::F32, shape.clone(), raw)
                .map(|v| (k.clone(), v))
                .map_err(|e| Error::Load(format!("tensor `{k}`: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    safetensors::serialize_to_file(views, &None, path).map_err(|e| Error::Load(format!("{}: {e}", path.display())))
}

struct Table {
    tensors: BTreeMap<String, Tensor>,
    used: Vec<String>,
}

impl Table {
    fn resolve(&self, name: &str) -> Option<String> {
        let prefixed = format!("wav2vec2.{name}");
        if self.tensors.contains_key(&prefixed) {
            Some(prefixed)
        } else if self.tensors.contains_key(name) {
            Some(name.to_string())
        } else {
            None
        }
    }

    fn take(&mut self, name: &str, shape: &[usize]) -> Result<Tensor> {
        let key = self
            .resolve(name)
            .ok_or_else(|| Error::MissingTensor(name.to_string()))?;
        let t = self.tensors.remove(&key).expect("resolved key");
        if t.shape() != shape {
            return Err(Error::TensorShape {
                name: key,
                expected: shape.to_vec(),
                actual: t.shape().to_vec(),
            });
        }
        if !t.all_finite() {
            return Err(Error::NonFinite(format!("checkpoint tensor `{key}`")));
        }
        self.used.push(key);
        Ok(t)
    }

    fn take_vec(&mut self, name: &str, len: usize) -> Result<Vec<f32>> {
        Ok(self.take(name, &[len])?.into_data())
    }

    fn norm(&mut self, prefix: &str, len: usize) -> Result<NormParams> {
        Ok(NormParams {
            gamma: self.take_vec(&format!("{prefix}.weight"), len)?,
            beta: self.take_vec(&format!("{prefix}.bias"), len)?,
        })
    }

    fn linear(&mut self, prefix: &str, out: usize, inp: usize) -> Result<Linear> {
        Ok(Linear {
            weight: self.take(&format!("{prefix}.weight"), &[out, inp])?,
            bias: self.take_vec(&format!("{prefix}.bias"), out)?,
        })
    }

    /// Positional conv weight, fusing a weight-norm pair when present.
    fn pos_conv_weight(&mut self, shape: &[usize]) -> Result<Tensor> {
        let base = "encoder.pos_conv_embed.conv";
        if self.resolve(&format!("{base}.weight")).is_some() {
            return self.take(&format!("{base}.weight"), shape);
        }
        let (g_name, v_name) = if self.resolve(&format!("{base}.weight_g")).is_some() {
            (format!("{base}.weight_g"), format!("{base}.weight_v"))
        } else {
            (
                format!("{base}.parametrizations.weight.original0"),
                format!("{base}.parametrizations.weight.original1"),
            )
        };
        let k = shape[2];
        let g_key = self
            .resolve(&g_name)
            .ok_or_else(|| Error::MissingTensor(format!("{base}.weight")))?;
        let g_shape = self.tensors[&g_key].shape().to_vec();
        if g_shape.iter().product::<usize>() != k {
            return Err(Error::TensorShape {
                name: g_key,
                expected: vec![1, 1, k],
                actual: g_shape,
            });
        }
        let g = self.take(&g_name, &g_shape)?;
        let v = self.take(&v_name, shape)?;
        // weight_norm over dim 2: one norm per kernel tap
        let (rows, k) = (shape[0] * shape[1], shape[2]);
        let vd = v.data();
        let mut norms = vec![0.0f64; k];
        for r in 0..rows {
            for (tap, n) in norms.iter_mut().enumerate() {
                let x = f64::from(vd[r * k + tap]);
                *n += x * x;
            }
        }
        let scale: Vec<f64> = norms
            .iter()
            .zip(g.data())
            .map(|(n, &gv)| f64::from(gv) / n.sqrt())
            .collect();
        let mut w = vd.to_vec();
        for r in 0..rows {
            for tap in 0..k {
                w[r * k + tap] = (f64::from(vd[r * k + tap]) * scale[tap]) as f32;
            }
        }
        let w = Tensor::new(shape.to_vec(), w)?;
        if !w.all_finite() {
            return Err(Error::NonFinite("fused positional conv weight".into()));
        }
        Ok(w)
    }
}

impl Checkpoint {
    /// Builds a checkpoint from a name → tensor table, checking every
    /// parameter the config requires.
    pub fn from_tensors(config: ModelConfig, tensors: BTreeMap<String, Tensor>) -> Result<Self> {
        config.validate()?;
        let mut t = Table {
            tensors,
            used: Vec::new(),
        };
        let h = config.hidden_dim;
        let mut conv = Vec::with_capacity(config.conv_dims.len());
        let mut c_in = 1;
        for (i, ((&c_out, &k), &stride)) in config
            .conv_dims
            .iter()
            .zip(&config.conv_kernels)
            .zip(&config.conv_strides)
            .enumerate()
        {
            let prefix = format!("feature_extractor.conv_layers.{i}");
            let weight = t.take(&format!("{prefix}.conv.weight"), &[c_out, c_in, k])?;
            let bias = if config.conv_bias {
                Some(t.take_vec(&format!("{prefix}.conv.bias"), c_out)?)
            } else {
                None
            };
            let norm = if i == 0 {
                Some(t.norm(&format!("{prefix}.layer_norm"), c_out)?)
            } else {
                None
            };
            conv.push(ConvLayer {
                weight,
                bias,
                norm,
                stride,
            });
            c_in = c_out;
        }
        let feat = config.feature_dim();
        let feature_norm = t.norm("feature_projection.layer_norm", feat)?;
        let projection = t.linear("feature_projection.projection", h, feat)?;
        let pos_conv = t.pos_conv_weight(&[h, h / config.pos_conv_groups, config.pos_conv_kernel])?;
        let pos_conv_bias = t.take_vec("encoder.pos_conv_embed.conv.bias", h)?;
        let encoder_norm = t.norm("encoder.layer_norm", h)?;
        let hd = config.head_dim();
        let mut layers = Vec::with_capacity(config.num_layers);
        for l in 0..config.num_layers {
            let p = format!("encoder.layers.{l}");
            let out = t.linear(&format!("{p}.attention.out_proj"), h, h)?;
            let out_blocks = (0..config.num_heads)
                .map(|head| out.weight.slice_cols(head * hd, (head + 1) * hd)?.transpose())
                .collect::<Result<Vec<_>>>()?;
            layers.push(EncoderLayer {
                q: t.linear(&format!("{p}.attention.q_proj"), h, h)?,
                k: t.linear(&format!("{p}.attention.k_proj"), h, h)?,
                v: t.linear(&format!("{p}.attention.v_proj"), h, h)?,
                out,
                out_blocks,
                attn_norm: t.norm(&format!("{p}.layer_norm"), h)?,
                ff_in: t.linear(&format!("{p}.feed_forward.intermediate_dense"), config.ffn_dim, h)?,
                ff_out: t.linear(&format!("{p}.feed_forward.output_dense"), h, config.ffn_dim)?,
                final_norm: t.norm(&format!("{p}.final_layer_norm"), h)?,
            });
        }
        let lm_head = t.linear("lm_head", config.vocab.len(), h)?;
        let mut names = t.used;
        names.sort();
        Ok(Self {
            config,
            conv,
            feature_norm,
            projection,
            pos_conv,
            pos_conv_bias,
            encoder_norm,
            layers,
            lm_head,
            names,
        })
    }

    /// Names of the container entries consumed by the loader.
    pub fn tensor_names(&self) -> &[String] {
        &self.names
    }

    /// A randomly initialised parameter table for `config`, in checkpoint
    /// naming. Useful for tests and benchmarks that need a model of a given
    /// shape without a published checkpoint.
    pub fn random_tensors(config: &ModelConfig, seed: u64) -> BTreeMap<String, Tensor> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = BTreeMap::new();
        let mut put = |name: String, shape: Vec<usize>, scale: f32, offset: f32, rng: &mut ChaCha8Rng| {
            let n = shape.iter().product();
            let data = (0..n)
                .map(|_| offset + scale * rng.random_range(-1.0f32..1.0))
                .collect();
            out.insert(format!("wav2vec2.{name}"), Tensor::new(shape, data).expect("shape"));
        };
        let h = config.hidden_dim;
        let mut c_in = 1;
        for (i, (&c_out, &k)) in config.conv_dims.iter().zip(&config.conv_kernels).enumerate() {
            let p = format!("feature_extractor.conv_layers.{i}");
            let fan = (c_in * k) as f32;
            put(
                format!("{p}.conv.weight"),
                vec![c_out, c_in, k],
                fan.sqrt().recip(),
                0.0,
                &mut rng,
            );
            if config.conv_bias {
                put(format!("{p}.conv.bias"), vec![c_out], 0.05, 0.0, &mut rng);
            }
            if i == 0 {
                put(format!("{p}.layer_norm.weight"), vec![c_out], 0.2, 1.0, &mut rng);
                put(format!("{p}.layer_norm.bias"), vec![c_out], 0.1, 0.0, &mut rng);
            }
            c_in = c_out;
        }
        let feat = config.feature_dim();
        let lin = |name: &str,
                   o: usize,
                   i: usize,
                   rng: &mut ChaCha8Rng,
                   put: &mut dyn FnMut(String, Vec<usize>, f32, f32, &mut ChaCha8Rng)| {
            put(
                format!("{name}.weight"),
                vec![o, i],
                (i as f32).sqrt().recip(),
                0.0,
                rng,
            );
            put(format!("{name}.bias"), vec![o], 0.05, 0.0, rng);
        };
        let norm = |name: &str,
                    n: usize,
                    rng: &mut ChaCha8Rng,
                    put: &mut dyn FnMut(String, Vec<usize>, f32, f32, &mut ChaCha8Rng)| {
            put(format!("{name}.weight"), vec![n], 0.2, 1.0, rng);
            put(format!("{name}.bias"), vec![n], 0.1, 0.0, rng);
        };
        norm("feature_projection.layer_norm", feat, &mut rng, &mut put);
        lin("feature_projection.projection", h, feat, &mut rng, &mut put);
        let per_group = h / config.pos_conv_groups;
        put(
            "encoder.pos_conv_embed.conv.weight".into(),
            vec![h, per_group, config.pos_conv_kernel],
            ((per_group * config.pos_conv_kernel) as f32).sqrt().recip(),
            0.0,
            &mut rng,
        );
        put("encoder.pos_conv_embed.conv.bias".into(), vec![h], 0.05, 0.0, &mut rng);
        norm("encoder.layer_norm", h, &mut rng, &mut put);
        for l in 0..config.num_layers {
            let p = format!("encoder.layers.{l}");
            for proj in ["q_proj", "k_proj", "v_proj", "out_proj"] {
                lin(&format!("{p}.attention.{proj}"), h, h, &mut rng, &mut put);
            }
            norm(&format!("{p}.layer_norm"), h, &mut rng, &mut put);
            lin(
                &format!("{p}.feed_forward.intermediate_dense"),
                config.ffn_dim,
                h,
                &mut rng,
                &mut put,
            );
            lin(
                &format!("{p}.feed_forward.output_dense"),
                h,
                config.ffn_dim,
                &mut rng,
                &mut put,
            );
            norm(&format!("{p}.final_layer_norm"), h, &mut rng, &mut put);
        }
        let v = config.vocab.len();
        let mut head = BTreeMap::new();
        let mut data = Vec::with_capacity(v * h);
        for _ in 0..v * h {
            data.push(3.0 * rng.random_range(-1.0f32..1.0) / (h as f32).sqrt());
        }
        head.insert(
            "lm_head.weight".to_string(),
            Tensor::new(vec![v, h], data).expect("shape"),
        );
        let bias = (0..v).map(|_| 0.1 * rng.random_range(-1.0f32..1.0)).collect();
        head.insert("lm_head.bias".to_string(), Tensor::new(vec![v], bias).expect("shape"));
        out.extend(head);
        out
    }

    /// Random checkpoint of the given shape.
    pub fn random(config: ModelConfig, seed: u64) -> Result<Self> {
        let tensors = Self::random_tensors(&config, seed);
        Self::from_tensors(config, tensors)
    }
}

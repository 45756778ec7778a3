// SPDX-License-Identifier: MIT OR Apache-2.0

//! Naive f64 recomputation of encoder layers, the oracle for patched runs.

use assimlab_core::engine::Checkpoint;
use assimlab_core::Tensor;

pub type Mat = Vec<Vec<f64>>;

pub fn to_mat(t: &Tensor) -> Mat {
    (0..t.rows())
        .map(|r| t.row(r).iter().map(|&v| f64::from(v)).collect())
        .collect()
}

/// `x · wᵀ + b` with `w` stored `[out × in]`.
pub fn lin(x: &Mat, w: &Tensor, b: &[f32]) -> Mat {
    x.iter()
        .map(|row| {
            (0..w.rows())
                .map(|o| {
                    let wr = w.row(o);
                    row.iter().zip(wr).map(|(a, &c)| a * f64::from(c)).sum::<f64>() + f64::from(b[o])
                })
                .collect()
        })
        .collect()
}

pub fn ln(x: &Mat, g: &[f32], b: &[f32], eps: f32) -> Mat {
    x.iter()
        .map(|row| {
            let n = row.len() as f64;
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let inv = 1.0 / (var + f64::from(eps)).sqrt();
            row.iter()
                .enumerate()
                .map(|(i, v)| (v - mean) * inv * f64::from(g[i]) + f64::from(b[i]))
                .collect()
        })
        .collect()
}

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

/// Naive f64 encoder layer; `value_patch` overwrites rows of the value
/// projection output for one head before attention mixing.
pub fn reference_layer(m: &Checkpoint, layer: usize, x: &Mat, value_patch: Option<(usize, &[usize], &Mat)>) -> Mat {
    let w = &m.layers[layer - 1];
    let cfg = &m.config;
    let hd = cfg.head_dim();
    let q = lin(x, &w.q.weight, &w.q.bias);
    let k = lin(x, &w.k.weight, &w.k.bias);
    let mut v = lin(x, &w.v.weight, &w.v.bias);
    if let Some((head, frames, rows)) = value_patch {
        for (i, &f) in frames.iter().enumerate() {
            v[f][head * hd..(head + 1) * hd].copy_from_slice(&rows[i]);
        }
    }
    let t = x.len();
    let scale = 1.0 / (hd as f64).sqrt();
    let mut ctx = vec![vec![0.0; cfg.hidden_dim]; t];
    for h in 0..cfg.num_heads {
        let c = h * hd..(h + 1) * hd;
        for i in 0..t {
            let scores: Vec<f64> = (0..t)
                .map(|j| {
                    q[i][c.clone()]
                        .iter()
                        .zip(&k[j][c.clone()])
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
                        * scale
                })
                .collect();
            let mx = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = scores.iter().map(|s| (s - mx).exp()).collect();
            let z: f64 = e.iter().sum();
            for (j, ej) in e.iter().enumerate() {
                for d in c.clone() {
                    ctx[i][d] += ej / z * v[j][d];
                }
            }
        }
    }
    let attn = lin(&ctx, &w.out.weight, &w.out.bias);
    let resid: Mat = x
        .iter()
        .zip(&attn)
        .map(|(a, b)| a.iter().zip(b).map(|(p, q)| p + q).collect())
        .collect();
    let mid = ln(&resid, &w.attn_norm.gamma, &w.attn_norm.beta, cfg.layer_norm_eps);
    let mut inner = lin(&mid, &w.ff_in.weight, &w.ff_in.bias);
    inner.iter_mut().flatten().for_each(|v| *v = gelu(*v));
    let ff = lin(&inner, &w.ff_out.weight, &w.ff_out.bias);
    let out: Mat = mid
        .iter()
        .zip(&ff)
        .map(|(a, b)| a.iter().zip(b).map(|(p, q)| p + q).collect())
        .collect();
    ln(&out, &w.final_norm.gamma, &w.final_norm.beta, cfg.layer_norm_eps)
}

// SPDX-License-Identifier: MIT OR Apache-2.0

//! L2-regularized binary logistic regression on z-scored features,
//! minimized with L-BFGS and a backtracking Armijo line search.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::dataset::Contrast;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    /// Weight of `½‖w‖²` added to the mean loss; the bias is not penalized.
    pub l2_strength: f64,
    /// Stop once the gradient's max-norm falls below this.
    pub tol: f64,
    pub max_iter: usize,
    /// L-BFGS memory.
    pub history: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            l2_strength: 1.0,
            tol: 1e-6,
            max_iter: 2000,
            history: 10,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub options: TrainOptions,
    pub iterations: usize,
    pub converged: bool,
    pub final_loss: f64,
    pub grad_max_norm: f64,
    pub n_train: usize,
    pub seed: u64,
    /// Corpus code to phoneme fold applied when labeling frames.
    pub fold: std::collections::BTreeMap<String, String>,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
}

/// A trained probe. `predict` gives the probability of label 1 (the surface
/// class).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeModel {
    pub layer: usize,
    pub contrast: Contrast,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub meta: TrainingMeta,
}

impl ProbeModel {
    pub fn logit(&self, x: &[f32]) -> Result<f64> {
        if x.len() != self.weights.len() {
            return Err(Error::Probe(format!(
                "feature width {} does not match probe width {}",
                x.len(),
                self.weights.len()
            )));
        }
        let mut z = self.bias;
        for i in 0..x.len() {
            z += self.weights[i] * (f64::from(x[i]) - self.mean[i]) / self.std[i];
        }
        Ok(z)
    }

    pub fn predict(&self, x: &[f32]) -> Result<f64> {
        Ok(sigmoid(self.logit(x)?))
    }

    pub fn prob_underlying(&self, x: &[f32]) -> Result<f64> {
        Ok(1.0 - self.predict(x)?)
    }

    pub fn accuracy(&self, x: &Tensor, y: &[u8]) -> Result<f64> {
        if x.rows() != y.len() || y.is_empty() {
            return Err(Error::Probe("feature/label count mismatch".into()));
        }
        let mut hit = 0usize;
        for (r, &l) in y.iter().enumerate() {
            if (self.logit(x.row(r))? > 0.0) == (l == 1) {
                hit += 1;
            }
        }
        Ok(hit as f64 / y.len() as f64)
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Standardized design matrix, row-major `n × d`.
pub struct Design {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub n: usize,
    pub d: usize,
}

/// Per-feature mean and standard deviation; constant features get std 1.
pub fn standardization(x: &Tensor) -> (Vec<f64>, Vec<f64>) {
    let (n, d) = (x.rows(), x.cols());
    let mut mean = vec![0.0; d];
    for r in 0..n {
        for (m, &v) in mean.iter_mut().zip(x.row(r)) {
            *m += f64::from(v);
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; d];
    for r in 0..n {
        for ((s, &v), m) in var.iter_mut().zip(x.row(r)).zip(&mean) {
            *s += (f64::from(v) - m).powi(2);
        }
    }
    let std = var
        .into_iter()
        .map(|s| {
            let sd = (s / n as f64).sqrt();
            if sd > 1e-12 {
                sd
            } else {
                1.0
            }
        })
        .collect();
    (mean, std)
}

impl Design {
    pub fn new(x: &Tensor, y: &[u8], mean: &[f64], std: &[f64]) -> Result<Self> {
        let (n, d) = (x.rows(), x.cols());
        if n != y.len() {
            return Err(Error::Probe(format!("{n} feature rows but {} labels", y.len())));
        }
        if let Some(&bad) = y.iter().find(|&&l| l > 1) {
            return Err(Error::Probe(format!("label {bad} is not binary")));
        }
        let mut out = Vec::with_capacity(n * d);
        for r in 0..n {
            out.extend(
                x.row(r)
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| (f64::from(v) - mean[i]) / std[i]),
            );
        }
        Ok(Self {
            x: out,
            y: y.iter().map(|&l| f64::from(l)).collect(),
            n,
            d,
        })
    }

    /// Objective and gradient at `theta = [w; b]`.
    pub fn loss_grad(&self, theta: &[f64], l2: f64) -> (f64, Vec<f64>) {
        let (w, b) = theta.split_at(self.d);
        let b = b[0];
        let mut g = vec![0.0; self.d + 1];
        let mut loss = 0.0;
        for r in 0..self.n {
            let row = &self.x[r * self.d..(r + 1) * self.d];
            let z = b + row.iter().zip(w).map(|(a, c)| a * c).sum::<f64>();
            let y = self.y[r];
            // −[y log σ(z) + (1−y) log(1−σ(z))] = softplus(z) − y·z
            loss += softplus(z) - y * z;
            let e = sigmoid(z) - y;
            for (gi, xi) in g[..self.d].iter_mut().zip(row) {
                *gi += e * xi;
            }
            g[self.d] += e;
        }
        let inv = 1.0 / self.n as f64;
        loss *= inv;
        g.iter_mut().for_each(|v| *v *= inv);
        loss += 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>();
        for (gi, wi) in g[..self.d].iter_mut().zip(w) {
            *gi += l2 * wi;
        }
        (loss, g)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

pub struct Trace {
    pub theta: Vec<f64>,
    pub losses: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub grad_max_norm: f64,
}

/// L-BFGS from zero. Each accepted step satisfies the Armijo condition, so
/// the recorded losses never increase.
pub fn minimize(design: &Design, opts: &TrainOptions) -> Trace {
    let dim = design.d + 1;
    let mut theta = vec![0.0; dim];
    let (mut f, mut g) = design.loss_grad(&theta, opts.l2_strength);
    let mut losses = vec![f];
    let mut mem: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut iterations = 0;
    while iterations < opts.max_iter && max_norm(&g) >= opts.tol {
        iterations += 1;
        // two-loop recursion
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(mem.len());
        for (s, y, rho) in mem.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        if let Some((s, y, _)) = mem.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in mem.iter().zip(alphas.into_iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut dir: Vec<f64> = q.into_iter().map(|v| -v).collect();
        let mut slope = dot(&g, &dir);
        if slope >= 0.0 {
            // not a descent direction; restart from steepest descent
            mem.clear();
            dir = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
        }
        let mut step = if mem.is_empty() {
            1.0 / max_norm(&g).max(1.0)
        } else {
            1.0
        };
        let mut accepted = None;
        for _ in 0..60 {
            let cand: Vec<f64> = theta.iter().zip(&dir).map(|(t, d)| t + step * d).collect();
            let (fc, gc) = design.loss_grad(&cand, opts.l2_strength);
            if fc <= f + 1e-4 * step * slope {
                accepted = Some((cand, fc, gc));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, fc, gc)) = accepted else {
            break;
        };
        let s: Vec<f64> = cand.iter().zip(&theta).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gc.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 {
            mem.push_back((s, y, 1.0 / sy));
            if mem.len() > opts.history {
                mem.pop_front();
            }
        }
        theta = cand;
        f = fc;
        g = gc;
        losses.push(f);
    }
    let gm = max_norm(&g);
    Trace {
        theta,
        losses,
        iterations,
        converged: gm < opts.tol,
        grad_max_norm: gm,
    }
}

/// Fits a probe on the train split.
pub fn train_probe(
    x: &Tensor,
    y: &[u8],
    layer: usize,
    contrast: Contrast,
    opts: &TrainOptions,
    seed: u64,
) -> Result<ProbeModel> {
    if !x.all_finite() {
        return Err(Error::NonFinite("probe features".into()));
    }
    if x.rows() == 0 {
        return Err(Error::Probe("empty training split".into()));
    }
    let (mean, std) = standardization(x);
    let design = Design::new(x, y, &mean, &std)?;
    let trace = minimize(&design, opts);
    if !trace.converged {
        log::warn!(
            "probe for layer {layer} stopped after {} iterations with gradient max-norm {:.3e}",
            trace.iterations,
            trace.grad_max_norm
        );
    }
    let d = design.d;
    let mut model = ProbeModel {
        layer,
        contrast,
        weights: trace.theta[..d].to_vec(),
        bias: trace.theta[d],
        mean,
        std,
        meta: TrainingMeta {
            options: opts.clone(),
            iterations: trace.iterations,
            converged: trace.converged,
            final_loss: *trace.losses.last().unwrap_or(&f64::NAN),
            grad_max_norm: trace.grad_max_norm,
            n_train: y.len(),
            seed,
            fold: Default::default(),
            train_accuracy: 0.0,
            test_accuracy: None,
        },
    };
    model.meta.train_accuracy = model.accuracy(x, y)?;
    if model.weights.iter().chain([&model.bias]).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("probe parameters".into()));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn nm() -> Contrast {
        Contrast::new("n", "m").unwrap()
    }

    fn blobs(n: usize, d: usize, sep: f32, seed: u64) -> (Tensor, Vec<u8>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let l = (i % 2) as u8;
            let c = if l == 1 { sep } else { -sep };
            rows.push(
                (0..d)
                    .map(|k| if k == 0 { c } else { 0.0 } + rng.random_range(-1.0f32..1.0))
                    .collect::<Vec<_>>(),
            );
            y.push(l);
        }
        (Tensor::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn separable_blobs() {
        let (x, y) = blobs(400, 2, 3.0, 1);
        let (xt, yt) = blobs(400, 2, 3.0, 2);
        let m = train_probe(&x, &y, 1, nm(), &TrainOptions::default(), 0).unwrap();
        assert!(m.meta.converged);
        assert!(m.accuracy(&xt, &yt).unwrap() >= 0.99);
    }

    #[test]
    fn chance_on_random_labels() {
        let (x, _) = blobs(2000, 5, 0.0, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let y: Vec<u8> = (0..2000).map(|_| rng.random_range(0..2)).collect();
        let (xt, _) = blobs(2000, 5, 0.0, 4);
        let yt: Vec<u8> = (0..2000).map(|_| rng.random_range(0..2)).collect();
        let m = train_probe(&x, &y, 1, nm(), &TrainOptions::default(), 0).unwrap();
        let acc = m.accuracy(&xt, &yt).unwrap();
        assert!((acc - 0.5).abs() <= 0.05, "{acc}");
    }

    #[test]
    fn symmetric_one_dimensional_boundary() {
        // points ±1 with labels 0/1: the optimum has b = 0 and w > 0
        let x = Tensor::from_rows(&[vec![-1.0], vec![1.0], vec![-2.0], vec![2.0]]).unwrap();
        let m = train_probe(&x, &[0, 1, 0, 1], 0, nm(), &TrainOptions::default(), 0).unwrap();
        assert!(m.bias.abs() < 1e-3);
        assert!(m.weights[0] > 0.0);
        assert!((m.predict(&[0.0]).unwrap() - 0.5).abs() < 1e-3);
    }

    #[test]
    fn zero_probe_is_half() {
        let m = ProbeModel {
            layer: 0,
            contrast: nm(),
            weights: vec![0.0; 3],
            bias: 0.0,
            mean: vec![0.0; 3],
            std: vec![1.0; 3],
            meta: TrainingMeta::default(),
        };
        assert_eq!(m.predict(&[5.0, -3.0, 2.0]).unwrap(), 0.5);
        assert!(m.predict(&[1.0]).is_err());
    }

    #[test]
    fn rejects_bad_input() {
        let x = Tensor::from_rows(&[vec![f32::NAN], vec![1.0]]).unwrap();
        assert!(train_probe(&x, &[0, 1], 0, nm(), &TrainOptions::default(), 0).is_err());
        let x = Tensor::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        assert!(train_probe(&x, &[0, 2], 0, nm(), &TrainOptions::default(), 0).is_err());
    }

    #[test]
    fn model_json_round_trip() {
        let (x, y) = blobs(50, 3, 2.0, 5);
        let m = train_probe(&x, &y, 4, nm(), &TrainOptions::default(), 0).unwrap();
        let back: ProbeModel = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.predict(x.row(0)).unwrap(), m.predict(x.row(0)).unwrap());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn gradient_matches_central_differences(seed: u64, n in 3usize..20, d in 1usize..6, l2 in 0.0f64..2.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rows: Vec<Vec<f32>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-2.0f32..2.0)).collect()).collect();
            let y: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
            let x = Tensor::from_rows(&rows).unwrap();
            let (mean, std) = standardization(&x);
            let design = Design::new(&x, &y, &mean, &std).unwrap();
            let theta: Vec<f64> = (0..=d).map(|_| rng.random_range(-1.5..1.5)).collect();
            let (_, g) = design.loss_grad(&theta, l2);
            let h = 1e-5;
            for i in 0..=d {
                let mut p = theta.clone();
                let mut m = theta.clone();
                p[i] += h;
                m[i] -= h;
                let num = (design.loss_grad(&p, l2).0 - design.loss_grad(&m, l2).0) / (2.0 * h);
                let rel = (num - g[i]).abs() / num.abs().max(g[i].abs()).max(1e-3);
                prop_assert!(rel < 1e-4, "coordinate {}: analytic {} numeric {}", i, g[i], num);
            }
        }

        #[test]
        fn loss_is_monotone_and_probs_in_range(seed: u64) {
            let (x, y) = blobs(60, 4, 0.7, seed);
            let (mean, std) = standardization(&x);
            let design = Design::new(&x, &y, &mean, &std).unwrap();
            let trace = minimize(&design, &TrainOptions { l2_strength: 0.01, ..TrainOptions::default() });
            prop_assert!(trace.losses.windows(2).all(|w| w[1] <= w[0]));
            let m = train_probe(&x, &y, 0, nm(), &TrainOptions::default(), 0).unwrap();
            for r in 0..x.rows() {
                let p = m.predict(x.row(r)).unwrap();
                prop_assert!(p > 0.0 && p < 1.0);
                prop_assert_eq!(p, m.predict(x.row(r)).unwrap());
            }
        }
    }
}

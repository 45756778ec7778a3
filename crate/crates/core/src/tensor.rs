// SPDX-License-Identifier: MIT OR Apache-2.0

//! Dense `f32` tensors and the handful of kernels the encoder needs.
//!
//! Every kernel is a pure function of its inputs. Reductions (softmax sums,
//! normalization moments) accumulate in `f64`; matrix products use the
//! `matrixmultiply` SGEMM microkernels over fixed row blocks so results do not
//! depend on the thread count.

use std::fmt;

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Row-major `f32` tensor.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}", self.shape)
    }
}

impl Default for Tensor {
    /// An empty `0 × 0` matrix.
    fn default() -> Self {
        Self {
            shape: vec![0, 0],
            data: Vec::new(),
        }
    }
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
        }
    }

    /// Builds a 2-D tensor from equally sized rows.
    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        let data = rows.iter().flatten().copied().collect();
        Self::new(vec![rows.len(), cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        Self::new(shape, self.data)
    }

    /// Number of rows of a 2-D tensor.
    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(0)
    }

    /// Number of columns of a 2-D tensor.
    pub fn cols(&self) -> usize {
        if self.shape.len() < 2 {
            return self.shape.first().copied().unwrap_or(0);
        }
        self.shape[1..].iter().product()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f32] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn expect_2d(&self, what: &str) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            [r, c] => Ok((*r, *c)),
            s => Err(Error::Shape(format!("{what}: expected 2-D tensor, got shape {s:?}"))),
        }
    }

    pub fn transpose(&self) -> Result<Tensor> {
        let (r, c) = self.expect_2d("transpose")?;
        let mut out = vec![0.0f32; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Tensor::new(vec![c, r], out)
    }

    /// Copies columns `start..end` of a 2-D tensor.
    pub fn slice_cols(&self, start: usize, end: usize) -> Result<Tensor> {
        let (r, c) = self.expect_2d("slice_cols")?;
        if start > end || end > c {
            return Err(Error::Shape(format!("column range {start}..{end} outside 0..{c}")));
        }
        let w = end - start;
        let mut out = Vec::with_capacity(r * w);
        for i in 0..r {
            out.extend_from_slice(&self.data[i * c + start..i * c + end]);
        }
        Tensor::new(vec![r, w], out)
    }

    /// Copies rows `start..end` of a 2-D tensor.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Tensor> {
        let (r, c) = self.expect_2d("slice_rows")?;
        if start > end || end > r {
            return Err(Error::Shape(format!("row range {start}..{end} outside 0..{r}")));
        }
        Tensor::new(vec![end - start, c], self.data[start * c..end * c].to_vec())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!("add: {:?} vs {:?}", self.shape, other.shape)));
        }
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += *b);
        Ok(())
    }

    /// Largest absolute elementwise difference; shapes must agree.
    pub fn max_abs_diff(&self, other: &Tensor) -> Result<f32> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!("compare: {:?} vs {:?}", self.shape, other.shape)));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max))
    }

    /// Applies numerically stable softmax along `axis`.
    pub fn softmax(&self, axis: usize) -> Result<Tensor> {
        if axis >= self.shape.len() {
            return Err(Error::Shape(format!(
                "softmax axis {axis} out of range for shape {:?}",
                self.shape
            )));
        }
        let n = self.shape[axis];
        if n == 0 {
            return Err(Error::EmptyAxis);
        }
        let outer: usize = self.shape[..axis].iter().product();
        let inner: usize = self.shape[axis + 1..].iter().product();
        let mut out = self.data.clone();
        let mut lane = vec![0.0f32; n];
        for o in 0..outer {
            for i in 0..inner {
                let base = o * n * inner + i;
                for (j, v) in lane.iter_mut().enumerate() {
                    *v = self.data[base + j * inner];
                }
                softmax_in_place(&mut lane);
                for (j, v) in lane.iter().enumerate() {
                    out[base + j * inner] = *v;
                }
            }
        }
        Tensor::new(self.shape.clone(), out)
    }
}

/// Softmax of a single vector.
pub fn softmax(x: &[f32]) -> Result<Vec<f32>> {
    if x.is_empty() {
        return Err(Error::EmptyAxis);
    }
    let mut out = x.to_vec();
    softmax_in_place(&mut out);
    Ok(out)
}

/// Max-subtracted softmax; the caller guarantees `x` is non-empty.
pub(crate) fn softmax_in_place(x: &mut [f32]) {
    let max = x.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut sum = 0.0f64;
    let exps: Vec<f64> = x
        .iter()
        .map(|&v| {
            let e = f64::from(v - max).exp();
            sum += e;
            e
        })
        .collect();
    for (o, e) in x.iter_mut().zip(exps) {
        *o = (e / sum) as f32;
    }
}

/// Normalizes `x` to zero mean and unit population variance, then applies
/// `gamma` and `beta`.
pub fn layer_norm(x: &[f32], gamma: &[f32], beta: &[f32], eps: f32) -> Result<Vec<f32>> {
    if x.is_empty() {
        return Err(Error::EmptyAxis);
    }
    if gamma.len() != x.len() || beta.len() != x.len() {
        return Err(Error::Shape(format!(
            "layer_norm: input {} vs gamma {} / beta {}",
            x.len(),
            gamma.len(),
            beta.len()
        )));
    }
    let mut out = vec![0.0; x.len()];
    layer_norm_into(x, gamma, beta, eps, &mut out);
    Ok(out)
}

fn layer_norm_into(x: &[f32], gamma: &[f32], beta: &[f32], eps: f32, out: &mut [f32]) {
    let n = x.len() as f64;
    let mean = x.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
    let var = x
        .iter()
        .map(|&v| {
            let d = f64::from(v) - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    let inv = 1.0 / (var + f64::from(eps)).sqrt();
    for (((o, &v), &g), &b) in out.iter_mut().zip(x).zip(gamma).zip(beta) {
        *o = ((f64::from(v) - mean) * inv) as f32 * g + b;
    }
}

/// Layer norm applied independently to every row of a 2-D tensor.
pub fn layer_norm_rows(x: &Tensor, gamma: &[f32], beta: &[f32], eps: f32) -> Result<Tensor> {
    let (r, c) = x.expect_2d("layer_norm_rows")?;
    if c == 0 {
        return Err(Error::EmptyAxis);
    }
    if gamma.len() != c || beta.len() != c {
        return Err(Error::Shape(format!(
            "layer_norm_rows: width {c} vs gamma {} / beta {}",
            gamma.len(),
            beta.len()
        )));
    }
    let mut out = vec![0.0f32; r * c];
    out.par_chunks_mut(c)
        .zip(x.data().par_chunks(c))
        .for_each(|(o, row)| layer_norm_into(row, gamma, beta, eps, o));
    Tensor::new(vec![r, c], out)
}

/// Exact (erf-based) GELU.
pub fn gelu(x: f32) -> f32 {
    let x = f64::from(x);
    (0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))) as f32
}

pub fn gelu_in_place(t: &mut Tensor) {
    t.data_mut().par_iter_mut().for_each(|v| *v = gelu(*v));
}

const ROW_BLOCK: usize = 64;

/// Strided view of a 2-D operand for [`gemm`].
#[derive(Clone, Copy)]
struct Operand<'a> {
    data: &'a [f32],
    row_stride: usize,
    col_stride: usize,
}

/// `c[m×n] = a[m×k] · b[k×n]`, blocked over rows of `a`.
fn gemm(m: usize, k: usize, n: usize, a: Operand<'_>, b: Operand<'_>) -> Vec<f32> {
    let mut c = vec![0.0f32; m * n];
    if m == 0 || n == 0 {
        return c;
    }
    if k == 0 {
        return c;
    }
    c.par_chunks_mut(ROW_BLOCK * n).enumerate().for_each(|(blk, c_blk)| {
        let rows = c_blk.len() / n;
        let a_off = blk * ROW_BLOCK * a.row_stride;
        let a_slice = &a.data[a_off..];
        // SAFETY: every index touched by the kernel lies inside the slices:
        // rows of `a` are `blk*ROW_BLOCK..blk*ROW_BLOCK+rows` (checked by the
        // public wrappers), `b` spans k×n, and `c_blk` is rows×n contiguous.
        unsafe {
            matrixmultiply::sgemm(
                rows,
                k,
                n,
                1.0,
                a_slice.as_ptr(),
                a.row_stride as isize,
                a.col_stride as isize,
                b.data.as_ptr(),
                b.row_stride as isize,
                b.col_stride as isize,
                0.0,
                c_blk.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    });
    c
}

/// Matrix product of two 2-D tensors.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = a.expect_2d("matmul lhs")?;
    let (k2, n) = b.expect_2d("matmul rhs")?;
    if k != k2 {
        return Err(Error::Shape(format!(
            "matmul inner dimensions disagree: {m}×{k} · {k2}×{n}"
        )));
    }
    let c = gemm(
        m,
        k,
        n,
        Operand {
            data: a.data(),
            row_stride: k,
            col_stride: 1,
        },
        Operand {
            data: b.data(),
            row_stride: n,
            col_stride: 1,
        },
    );
    Tensor::new(vec![m, n], c)
}

/// `x · wᵀ + bias` with `w` stored as `[out × in]`.
pub fn linear(x: &Tensor, w: &Tensor, bias: Option<&[f32]>) -> Result<Tensor> {
    let (m, k) = x.expect_2d("linear input")?;
    let (n, k2) = w.expect_2d("linear weight")?;
    if k != k2 {
        return Err(Error::Shape(format!(
            "linear: input width {k} vs weight in-features {k2}"
        )));
    }
    let mut c = gemm(
        m,
        k,
        n,
        Operand {
            data: x.data(),
            row_stride: k,
            col_stride: 1,
        },
        Operand {
            data: w.data(),
            row_stride: 1,
            col_stride: k,
        },
    );
    if let Some(b) = bias {
        if b.len() != n {
            return Err(Error::Shape(format!("linear: bias {} vs out {n}", b.len())));
        }
        c.par_chunks_mut(n.max(1)).for_each(|row| {
            row.iter_mut().zip(b).for_each(|(v, bb)| *v += bb);
        });
    }
    Tensor::new(vec![m, n], c)
}

/// Output length of a valid (unpadded) convolution.
pub fn conv_out_len(len: usize, kernel: usize, stride: usize) -> Option<usize> {
    if kernel == 0 || stride == 0 || len < kernel {
        return None;
    }
    Some((len - kernel) / stride + 1)
}

const CONV_TIME_BLOCK: usize = 2048;

/// Grouped 1-D cross-correlation without padding.
///
/// `x` is `[c_in × t]`, `w` is `[c_out × c_in/groups × k]`; the result is
/// `[c_out × t']` with `t' = (t − k)/stride + 1`.
pub fn conv1d(x: &Tensor, w: &Tensor, stride: usize, bias: Option<&[f32]>, groups: usize) -> Result<Tensor> {
    let (c_in, t) = x.expect_2d("conv1d input")?;
    let [c_out, c_in_g, k] = match w.shape() {
        [a, b, c] => [*a, *b, *c],
        s => return Err(Error::Shape(format!("conv1d weight must be 3-D, got {s:?}"))),
    };
    if groups == 0 || c_in % groups != 0 || c_out % groups != 0 || c_in / groups != c_in_g {
        return Err(Error::Shape(format!(
            "conv1d: {c_in} input channels, {c_out} output channels, weight expects {c_in_g} per group, groups={groups}"
        )));
    }
    if stride == 0 {
        return Err(Error::Invalid("conv1d stride must be positive".into()));
    }
    let t_out = conv_out_len(t, k, stride).ok_or(Error::InputTooShort { needed: k, got: t })?;
    if let Some(b) = bias {
        if b.len() != c_out {
            return Err(Error::Shape(format!("conv1d bias {} vs {c_out}", b.len())));
        }
    }
    let c_out_g = c_out / groups;
    let patch = c_in_g * k;
    let xd = x.data();
    let wd = w.data();
    let mut out = vec![0.0f32; c_out * t_out];
    for g in 0..groups {
        let w_g = &wd[g * c_out_g * patch..(g + 1) * c_out_g * patch];
        let mut start = 0;
        while start < t_out {
            let len = CONV_TIME_BLOCK.min(t_out - start);
            // im2col: rows are (channel, tap), columns are output steps
            let mut cols = vec![0.0f32; patch * len];
            cols.par_chunks_mut(len).enumerate().for_each(|(r, dst)| {
                let ci = g * c_in_g + r / k;
                let tap = r % k;
                let src = &xd[ci * t..(ci + 1) * t];
                for (j, d) in dst.iter_mut().enumerate() {
                    *d = src[(start + j) * stride + tap];
                }
            });
            let prod = gemm(
                c_out_g,
                patch,
                len,
                Operand {
                    data: w_g,
                    row_stride: patch,
                    col_stride: 1,
                },
                Operand {
                    data: &cols,
                    row_stride: len,
                    col_stride: 1,
                },
            );
            for co in 0..c_out_g {
                let ch = g * c_out_g + co;
                let dst = &mut out[ch * t_out + start..ch * t_out + start + len];
                dst.copy_from_slice(&prod[co * len..(co + 1) * len]);
                if let Some(b) = bias {
                    dst.iter_mut().for_each(|v| *v += b[ch]);
                }
            }
            start += len;
        }
    }
    Tensor::new(vec![c_out, t_out], out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn t2(rows: &[&[f32]]) -> Tensor {
        Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
        let data = (0..r * c).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        Tensor::new(vec![r, c], data).unwrap()
    }

    fn matmul_f64(a: &Tensor, b: &Tensor) -> Vec<f64> {
        let (m, k) = (a.rows(), a.cols());
        let n = b.cols();
        let mut c = vec![0.0f64; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0f64;
                for p in 0..k {
                    s += f64::from(a.data()[i * k + p]) * f64::from(b.data()[p * n + j]);
                }
                c[i * n + j] = s;
            }
        }
        c
    }

    #[test]
    fn matmul_identity_and_hand_case() {
        let eye = t2(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let b = t2(&[&[5.0], &[6.0]]);
        assert_eq!(matmul(&eye, &b).unwrap().data(), &[5.0, 6.0]);
        let a = t2(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(matmul(&a, &b).unwrap().data(), &[17.0, 39.0]);
    }

    #[test]
    fn matmul_shape_mismatch() {
        let a = Tensor::zeros(vec![2, 3]);
        let b = Tensor::zeros(vec![2, 3]);
        assert!(matches!(matmul(&a, &b), Err(Error::Shape(_))));
    }

    #[test]
    fn matmul_associativity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (a, b, c) = (random(&mut rng, 4, 4), random(&mut rng, 4, 4), random(&mut rng, 4, 4));
        let left = matmul(&a, &matmul(&b, &c).unwrap()).unwrap();
        let right = matmul(&matmul(&a, &b).unwrap(), &c).unwrap();
        assert!(left.max_abs_diff(&right).unwrap() < 1e-4);
    }

    #[test]
    fn linear_matches_matmul_with_transpose() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random(&mut rng, 70, 13);
        let w = random(&mut rng, 5, 13);
        let bias = [0.5f32, -1.0, 0.0, 2.0, 0.25];
        let y = linear(&x, &w, Some(&bias)).unwrap();
        let mut want = matmul(&x, &w.transpose().unwrap()).unwrap();
        for r in 0..want.rows() {
            want.row_mut(r).iter_mut().zip(&bias).for_each(|(v, b)| *v += b);
        }
        assert!(y.max_abs_diff(&want).unwrap() < 1e-5);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn matmul_agrees_with_f64_oracle(m in 1usize..65, k in 1usize..65, n in 1usize..65, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random(&mut rng, m, k);
            let b = random(&mut rng, k, n);
            let got = matmul(&a, &b).unwrap();
            let want = matmul_f64(&a, &b);
            let scale = want.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
            for (g, w) in got.data().iter().zip(&want) {
                prop_assert!((f64::from(*g) - w).abs() <= 1e-4 * scale);
            }
        }

        #[test]
        fn softmax_sums_to_one_and_is_shift_invariant(xs in prop::collection::vec(-50.0f32..50.0, 1..40), c in -64i32..64) {
            let p = softmax(&xs).unwrap();
            let s: f64 = p.iter().map(|&v| f64::from(v)).sum();
            prop_assert!((s - 1.0).abs() <= 1e-6);
            prop_assert!(p.iter().all(|&v| v >= 0.0));
            // integer shifts of values on a 1/4 grid are exact in f32
            let grid: Vec<f32> = xs.iter().map(|v| (v * 4.0).round() / 4.0).collect();
            let shifted: Vec<f32> = grid.iter().map(|v| v + c as f32).collect();
            prop_assert_eq!(softmax(&grid).unwrap(), softmax(&shifted).unwrap());
        }

        #[test]
        fn layer_norm_moments(xs in prop::collection::vec(-10.0f32..10.0, 8..64)) {
            let spread = xs.iter().cloned().fold(f32::MIN, f32::max) - xs.iter().cloned().fold(f32::MAX, f32::min);
            prop_assume!(spread > 1e-2);
            let ones = vec![1.0; xs.len()];
            let zeros = vec![0.0; xs.len()];
            let y = layer_norm(&xs, &ones, &zeros, 1e-12).unwrap();
            let n = y.len() as f64;
            let mean = y.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
            let var = y.iter().map(|&v| (f64::from(v) - mean).powi(2)).sum::<f64>() / n;
            prop_assert!(mean.abs() <= 1e-5);
            prop_assert!((var - 1.0).abs() <= 1e-3);
        }

        #[test]
        fn conv_length_formula(t in 1usize..600, k in 1usize..12, stride in 1usize..6) {
            prop_assume!(t >= k);
            let x = Tensor::zeros(vec![1, t]);
            let w = Tensor::new(vec![1, 1, k], vec![1.0; k]).unwrap();
            let y = conv1d(&x, &w, stride, None, 1).unwrap();
            prop_assert_eq!(y.shape()[1], (t - k) / stride + 1);
        }
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[0.0, 0.0]).unwrap(), vec![0.5, 0.5]);
        let p = softmax(&[1000.0, 1000.0, 1000.0]).unwrap();
        assert!(p.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-7));
        // exp(k)/sum evaluated directly in f64
        let e: Vec<f64> = [1.0f64, 2.0, 3.0].iter().map(|v| v.exp()).collect();
        let s: f64 = e.iter().sum();
        let p = softmax(&[1.0, 2.0, 3.0]).unwrap();
        for (got, want) in p.iter().zip(e.iter().map(|v| v / s)) {
            assert!((f64::from(*got) - want).abs() < 1e-4);
        }
        assert!((p[0] - 0.0900).abs() < 1e-4 && (p[1] - 0.2447).abs() < 1e-4 && (p[2] - 0.6652).abs() < 1e-4);
        assert!(matches!(softmax(&[]), Err(Error::EmptyAxis)));
    }

    #[test]
    fn tensor_softmax_along_axis() {
        let t = t2(&[&[0.0, 1.0], &[0.0, 1.0]]);
        let cols = t.softmax(0).unwrap();
        assert!(cols.data().iter().all(|v| (v - 0.5).abs() < 1e-7));
        let rows = t.softmax(1).unwrap();
        assert!((rows.data()[0] + rows.data()[1] - 1.0).abs() < 1e-6);
        assert!(Tensor::zeros(vec![2, 0]).softmax(1).is_err());
    }

    #[test]
    fn layer_norm_examples() {
        let y = layer_norm(&[2.0, 2.0, 2.0], &[1.0; 3], &[0.0; 3], 1e-5).unwrap();
        assert_eq!(y, vec![0.0, 0.0, 0.0]);
        let y = layer_norm(&[1.0, 3.0], &[1.0; 2], &[0.0; 2], 1e-12).unwrap();
        assert!((y[0] + 1.0).abs() < 1e-5 && (y[1] - 1.0).abs() < 1e-5);
        let y = layer_norm(&[1.0, 3.0], &[2.0; 2], &[1.0; 2], 1e-12).unwrap();
        assert!((y[0] + 1.0).abs() < 1e-5 && (y[1] - 3.0).abs() < 1e-5);
        assert!(layer_norm(&[1.0, 2.0], &[1.0], &[0.0, 0.0], 1e-5).is_err());
    }

    #[test]
    fn conv1d_examples() {
        let x = t2(&[&[1.0, 2.0, 3.0]]);
        let id = Tensor::new(vec![1, 1, 1], vec![1.0]).unwrap();
        assert_eq!(conv1d(&x, &id, 1, None, 1).unwrap().data(), x.data());
        let w = Tensor::new(vec![1, 1, 2], vec![1.0, 1.0]).unwrap();
        assert_eq!(conv1d(&x, &w, 1, None, 1).unwrap().data(), &[3.0, 5.0]);
        let long = Tensor::zeros(vec![1, 400]);
        let w10 = Tensor::zeros(vec![1, 1, 10]);
        assert_eq!(conv1d(&long, &w10, 5, None, 1).unwrap().shape(), &[1, 79]);
        let short = Tensor::zeros(vec![1, 9]);
        assert!(matches!(
            conv1d(&short, &w10, 5, None, 1),
            Err(Error::InputTooShort { needed: 10, got: 9 })
        ));
    }

    #[test]
    fn conv1d_grouped_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (c_in, c_out, k, t, groups, stride) = (4, 6, 3, 3000, 2, 2);
        let x = random(&mut rng, c_in, t);
        let w = Tensor::new(
            vec![c_out, c_in / groups, k],
            (0..c_out * (c_in / groups) * k)
                .map(|_| rng.random_range(-1.0f32..1.0))
                .collect(),
        )
        .unwrap();
        let bias: Vec<f32> = (0..c_out).map(|i| i as f32 * 0.1).collect();
        let y = conv1d(&x, &w, stride, Some(&bias), groups).unwrap();
        let t_out = (t - k) / stride + 1;
        for co in 0..c_out {
            let g = co / (c_out / groups);
            for j in (0..t_out).step_by(97) {
                let mut s = f64::from(bias[co]);
                for ci in 0..c_in / groups {
                    for tap in 0..k {
                        s += f64::from(w.data()[(co * (c_in / groups) + ci) * k + tap])
                            * f64::from(x.data()[(g * (c_in / groups) + ci) * t + j * stride + tap]);
                    }
                }
                assert!((f64::from(y.data()[co * t_out + j]) - s).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn gelu_reference_points() {
        assert_eq!(gelu(0.0), 0.0);
        // 0.5·x·(1+erf(x/√2)) at x=1 is 0.8413447460685429
        assert!((gelu(1.0) - 0.841_344_75).abs() < 1e-6);
        assert!((gelu(-1.0) + 0.158_655_25).abs() < 1e-6);
    }
}

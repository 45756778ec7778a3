// SPDX-License-Identifier: MIT OR Apache-2.0

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson_interval(k: usize, n: usize, z: f64) -> Result<(f64, f64)> {
    if n == 0 || k > n {
        return Err(Error::Stats(format!(
            "wilson interval needs 0 <= k <= n, n > 0 (k={k}, n={n})"
        )));
    }
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if k == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if k as f64 == n { 1.0 } else { (centre + half).min(1.0) };
    Ok((lo, hi))
}

/// Ranks starting at 1, ties sharing their average rank.
pub fn ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            r[o] = avg;
        }
        i = j + 1;
    }
    r
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        f64::NAN
    } else {
        sab / (saa * sbb).sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spearman {
    pub rho: f64,
    pub n: usize,
    pub df: usize,
}

/// Spearman's rho: Pearson correlation of average ranks.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<Spearman> {
    if x.len() != y.len() {
        return Err(Error::Stats(format!("length mismatch: {} vs {}", x.len(), y.len())));
    }
    if x.len() < 3 {
        return Err(Error::Stats(format!(
            "spearman needs at least 3 pairs, got {}",
            x.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Stats("non-finite input".into()));
    }
    let rho = pearson(&ranks(x), &ranks(y));
    if rho.is_nan() {
        return Err(Error::Stats("a variable is constant".into()));
    }
    Ok(Spearman {
        rho,
        n: x.len(),
        df: x.len() - 2,
    })
}

/// Two-sided permutation p-value for rho, shuffling `y` with a seeded RNG.
/// Uses the `(1 + hits) / (1 + permutations)` estimator.
pub fn permutation_p(x: &[f64], y: &[f64], permutations: usize, seed: u64) -> Result<f64> {
    let observed = spearman_rho(x, y)?.rho.abs();
    let rx = ranks(x);
    let mut ry = ranks(y);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    for _ in 0..permutations {
        ry.shuffle(&mut rng);
        if pearson(&rx, &ry).abs() >= observed - 1e-12 {
            hits += 1;
        }
    }
    Ok((1 + hits) as f64 / (1 + permutations) as f64)
}

/// Mean and sample standard deviation; the deviation is 0 for one value.
pub fn mean_sd(v: &[f64]) -> Option<(f64, f64)> {
    if v.is_empty() {
        return None;
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let sd = if v.len() > 1 {
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Some((m, sd))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn wilson_reference_values() {
        let (lo, hi) = wilson_interval(24, 48, 1.96).unwrap();
        assert_abs_diff_eq!(lo, 0.3639, epsilon = 5e-4);
        assert_abs_diff_eq!(hi, 0.6361, epsilon = 5e-4);
        let (lo, hi) = wilson_interval(0, 10, 1.96).unwrap();
        assert_eq!(lo, 0.0);
        assert_abs_diff_eq!(hi, 0.2775, epsilon = 5e-4);
        assert_eq!(wilson_interval(48, 48, 1.96).unwrap().1, 1.0);
        assert!(wilson_interval(1, 0, 1.96).is_err());
        assert!(wilson_interval(3, 2, 1.96).is_err());
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(ranks(&[10.0, 20.0, 20.0, 5.0]), vec![2.0, 3.5, 3.5, 1.0]);
    }

    #[test]
    fn spearman_known_cases() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_abs_diff_eq!(
            spearman_rho(&x, &[2.0, 4.0, 9.0, 16.0, 100.0]).unwrap().rho,
            1.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            spearman_rho(&x, &[5.0, 4.0, 3.0, 2.0, 1.0]).unwrap().rho,
            -1.0,
            epsilon = 1e-12
        );
        // textbook example with one tie
        let a = [106.0, 86.0, 100.0, 101.0, 99.0, 103.0, 97.0, 113.0, 112.0, 110.0];
        let b = [7.0, 0.0, 27.0, 50.0, 28.0, 29.0, 20.0, 12.0, 6.0, 17.0];
        assert_abs_diff_eq!(spearman_rho(&a, &b).unwrap().rho, -0.17575757575757575, epsilon = 1e-12);
        let s = spearman_rho(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert_abs_diff_eq!(s.rho, 0.8, epsilon = 1e-12);
        assert_eq!(s.df, 2);
        assert!(spearman_rho(&x, &[1.0; 5]).is_err());
        assert!(spearman_rho(&x[..2], &x[..2]).is_err());
    }

    #[test]
    fn permutation_p_behaves() {
        let x: Vec<f64> = (0..30).map(f64::from).collect();
        let p = permutation_p(&x, &x, 2000, 0).unwrap();
        assert!(p < 0.001);
        assert_eq!(p, permutation_p(&x, &x, 2000, 0).unwrap());
        let y: Vec<f64> = x.iter().map(|v| ((v * 7.3).sin() * 100.0).round()).collect();
        let p = permutation_p(&x, &y, 2000, 1).unwrap();
        assert!(p > 0.01 && p <= 1.0);
    }

    proptest! {
        #[test]
        fn invariant_under_monotone_maps(v in prop::collection::vec((0.0f64..100.0, 0.0f64..100.0), 3..40)) {
            let (x, y): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
            if let Ok(s) = spearman_rho(&x, &y) {
                let fx: Vec<f64> = x.iter().map(|v| (v + 1.0).ln() * 3.0 - 2.0).collect();
                let fy: Vec<f64> = y.iter().map(|v| v.powi(3)).collect();
                let t = spearman_rho(&fx, &fy).unwrap();
                prop_assert!((s.rho - t.rho).abs() < 1e-9);
                prop_assert!(s.rho.abs() <= 1.0 + 1e-12);
            }
        }

        #[test]
        fn wilson_brackets_the_proportion(n in 1usize..500, f in 0.0f64..=1.0) {
            let k = (n as f64 * f).floor() as usize;
            let (lo, hi) = wilson_interval(k, n, 1.96).unwrap();
            let p = k as f64 / n as f64;
            prop_assert!(lo <= p + 1e-12 && p <= hi + 1e-12);
            prop_assert!((0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi));
            let (lo2, hi2) = wilson_interval(4 * k, 4 * n, 1.96).unwrap();
            prop_assert!(hi2 - lo2 < hi - lo);
        }
    }
}

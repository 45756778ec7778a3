// SPDX-License-Identifier: MIT OR Apache-2.0

//! Hann-windowed power spectrum, the oracle for resampler aliasing.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// Power in bins `0..=n/2` of a Hann-windowed signal.
pub fn power_spectrum(x: &[f32]) -> Vec<f64> {
    let n = x.len();
    let mut buf: Vec<Complex<f64>> = x
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let w = 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / n as f64).cos();
            Complex::new(f64::from(v) * w, 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    buf[..=n / 2].iter().map(|c| c.norm_sqr()).collect()
}

/// Dominant frequency, and energy outside `±guard` bins of it relative to
/// the energy inside, in dB.
pub fn tone_and_alias_db(x: &[f32], rate: f64, guard: usize) -> (f64, f64) {
    let p = power_spectrum(x);
    let peak = p
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap();
    let lobe = peak.saturating_sub(guard)..=(peak + guard).min(p.len() - 1);
    let inside: f64 = p[lobe.clone()].iter().sum();
    let outside: f64 = p
        .iter()
        .enumerate()
        .filter(|(i, _)| !lobe.contains(i))
        .map(|(_, v)| v)
        .sum();
    (peak as f64 * rate / x.len() as f64, 10.0 * (outside / inside).log10())
}

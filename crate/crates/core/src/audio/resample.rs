// SPDX-License-Identifier: MIT OR Apache-2.0

//! Rational-ratio polyphase resampling with a Kaiser-windowed sinc.

use super::AudioBuffer;

/// Zero crossings of the sinc kept on each side, in output-band units.
const ZERO_CROSSINGS: usize = 48;
/// Passband edge as a fraction of the lower Nyquist frequency.
const ROLLOFF: f64 = 0.9;
const KAISER_BETA: f64 = 10.0;

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Zeroth-order modified Bessel function of the first kind.
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

struct Filter {
    /// Output rate / gcd.
    up: usize,
    /// Input rate / gcd.
    down: usize,
    /// Taps on each side of the interpolation point.
    half: usize,
    /// `up` phases of `2·half` taps; phase `p` is for fractional offset `p/up`.
    taps: Vec<f64>,
}

impl Filter {
    fn new(up: usize, down: usize) -> Self {
        let cutoff = (up as f64 / down as f64).min(1.0) * ROLLOFF;
        let half_width = ZERO_CROSSINGS as f64 / cutoff;
        let half = half_width.ceil() as usize + 1;
        let norm = bessel_i0(KAISER_BETA);
        let mut taps = vec![0.0; up * 2 * half];
        for p in 0..up {
            let frac = p as f64 / up as f64;
            let row = &mut taps[p * 2 * half..(p + 1) * 2 * half];
            for (j, tap) in row.iter_mut().enumerate() {
                // input sample at base + j + 1 − half, distance from t
                let d = (j as f64 + 1.0 - half as f64) - frac;
                let r = d / half_width;
                if r.abs() < 1.0 {
                    *tap = cutoff * sinc(cutoff * d) * bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / norm;
                }
            }
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= s);
        }
        Self { up, down, half, taps }
    }
}

/// Resamples to `target_rate`. Output length is `round(n·target/source)`;
/// equal rates return the input unchanged.
pub fn resample(a: &AudioBuffer, target_rate: u32) -> AudioBuffer {
    if a.sample_rate == target_rate || a.samples.is_empty() {
        return AudioBuffer {
            samples: if a.sample_rate == target_rate {
                a.samples.clone()
            } else {
                Vec::new()
            },
            sample_rate: target_rate,
        };
    }
    let g = gcd(u64::from(a.sample_rate), u64::from(target_rate));
    let up = (u64::from(target_rate) / g) as usize;
    let down = (u64::from(a.sample_rate) / g) as usize;
    let f = Filter::new(up, down);
    let n = a.samples.len();
    let out_len = ((n as u128 * up as u128 + down as u128 / 2) / down as u128) as usize;
    let x = &a.samples;

    let samples = (0..out_len)
        .map(|m| {
            let pos = m as u128 * f.down as u128;
            let base = (pos / f.up as u128) as isize;
            let phase = (pos % f.up as u128) as usize;
            let row = &f.taps[phase * 2 * f.half..(phase + 1) * 2 * f.half];
            let first = base + 1 - f.half as isize;
            let mut acc = 0.0;
            let mut weight = 0.0;
            for (j, &h) in row.iter().enumerate() {
                let i = first + j as isize;
                if i >= 0 && (i as usize) < n {
                    acc += h * f64::from(x[i as usize]);
                    weight += h;
                }
            }
            // renormalize where the kernel runs off either end
            (if (weight - 1.0).abs() > 1e-12 && weight.abs() > 1e-6 {
                acc / weight
            } else {
                acc
            }) as f32
        })
        .collect();
    AudioBuffer {
        samples,
        sample_rate: target_rate,
    }
}

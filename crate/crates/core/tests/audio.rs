// SPDX-License-Identifier: MIT OR Apache-2.0

mod common;

use assimlab_core::audio::{assemble, resample, AudioBuffer};
use assimlab_core::behavioral::{builtin_items, stimulus_plans};
use common::spectrum::tone_and_alias_db;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sine(hz: f64, rate: u32, seconds: f64) -> AudioBuffer {
    let n = (seconds * f64::from(rate)) as usize;
    let s = (0..n)
        .map(|i| (std::f64::consts::TAU * hz * i as f64 / f64::from(rate)).sin() as f32 * 0.5)
        .collect();
    AudioBuffer::new(s, rate).unwrap()
}

#[test]
fn sine_downsampling_has_no_audible_alias() {
    let out = resample(&sine(1000.0, 44_100, 3.0), 16_000);
    assert_eq!(out.len(), 48_000);
    // one whole second from the middle, away from edge effects
    let (hz, db) = tone_and_alias_db(&out.samples[16_000..32_000], 16_000.0, 3);
    assert_eq!(hz, 1000.0);
    assert!(db < -60.0, "alias {db:.1} dB");
}

#[test]
fn near_nyquist_tone_is_rejected() {
    // 12 kHz is above the 8 kHz output Nyquist; it must not fold to 4 kHz
    let tone = sine(12_000.0, 44_100, 2.0);
    let out = resample(&tone, 16_000);
    let energy = |x: &[f32]| x.iter().map(|v| f64::from(*v).powi(2)).sum::<f64>();
    let mid = &out.samples[8000..24_000];
    let ratio = 10.0 * (energy(mid) / energy(&tone.samples[22_050..66_150]) * (44_100.0 / 16_000.0)).log10();
    assert!(ratio < -60.0, "{ratio:.1} dB");
}

#[test]
fn every_planned_stimulus_is_eight_seconds() {
    let items = builtin_items();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut n = 0;
    for exp in [2u8, 3] {
        for (record, plan) in stimulus_plans(exp, &items, 0).unwrap() {
            let segs: Vec<AudioBuffer> = plan
                .segments
                .iter()
                .map(|_| {
                    let len = rng.random_range(8_000..56_000);
                    let s = (0..len).map(|_| rng.random_range(-0.5f32..0.5)).collect();
                    AudioBuffer::new(s, 16_000).unwrap()
                })
                .collect();
            let out = assemble(&plan, &segs, None).unwrap();
            assert_eq!(out.audio.len(), 128_000, "{}", record.id);
            for (seg, &off) in segs.iter().zip(&out.offsets) {
                assert_eq!(&out.audio.samples[off..off + seg.len()], &seg.samples[..]);
            }
            n += 1;
        }
    }
    assert_eq!(n, 76 + 228);
}

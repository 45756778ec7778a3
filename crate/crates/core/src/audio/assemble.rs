// SPDX-License-Identifier: MIT OR Apache-2.0

//! Fixed-length stimulus assembly.
//!
//! Layout: `[fill][lead][seg₀][gap][seg₁]…[tail]`, where the fill absorbs
//! whatever remains of the target duration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{load_for_model, AudioBuffer, MODEL_RATE};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// One sentence.
    Single,
    /// Context sentence followed by target sentence.
    Pair,
}

impl Layout {
    pub fn segments(self) -> usize {
        match self {
            Layout::Single => 1,
            Layout::Pair => 2,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "path")]
pub enum SilenceSource {
    #[default]
    DigitalZero,
    /// A recording of background silence, tiled as needed.
    SilenceFile(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssemblyPlan {
    pub layout: Layout,
    /// Sentence WAV paths in playback order.
    pub segments: Vec<PathBuf>,
    pub gap_ms: u32,
    pub lead_ms: u32,
    pub tail_ms: u32,
    pub total_duration_ms: u32,
    #[serde(default)]
    pub silence_source: SilenceSource,
}

impl AssemblyPlan {
    /// One sentence, 150 ms trailing silence, 8 s total.
    pub fn single(sentence: impl Into<PathBuf>) -> Self {
        Self {
            layout: Layout::Single,
            segments: vec![sentence.into()],
            gap_ms: 0,
            lead_ms: 0,
            tail_ms: 150,
            total_duration_ms: 8000,
            silence_source: SilenceSource::DigitalZero,
        }
    }

    /// Context then target, 150 ms before and after the pair and 250 ms
    /// between, 8 s total.
    pub fn pair(context: impl Into<PathBuf>, target: impl Into<PathBuf>) -> Self {
        Self {
            layout: Layout::Pair,
            segments: vec![context.into(), target.into()],
            gap_ms: 250,
            lead_ms: 150,
            tail_ms: 150,
            total_duration_ms: 8000,
            silence_source: SilenceSource::DigitalZero,
        }
    }

    /// Resolves relative paths against `base`.
    pub fn rebase(mut self, base: &Path) -> Self {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.segments.iter_mut().for_each(fix);
        if let SilenceSource::SilenceFile(p) = &mut self.silence_source {
            fix(p);
        }
        self
    }
}

#[derive(Clone, Debug)]
pub struct AssembledStimulus {
    pub audio: AudioBuffer,
    /// Start sample of each segment.
    pub offsets: Vec<usize>,
    pub fill_samples: usize,
}

fn ms_to_samples(ms: u32, rate: u32) -> usize {
    ((u64::from(ms) * u64::from(rate) + 500) / 1000) as usize
}

/// Loads the plan's audio (resampling to the model rate) and assembles it.
pub fn assemble_stimulus(plan: &AssemblyPlan) -> Result<AssembledStimulus> {
    let segments = plan
        .segments
        .iter()
        .map(|p| load_for_model(p))
        .collect::<Result<Vec<_>>>()?;
    let silence = match &plan.silence_source {
        SilenceSource::DigitalZero => None,
        SilenceSource::SilenceFile(p) => Some(load_for_model(p)?),
    };
    assemble(plan, &segments, silence.as_ref())
}

/// Assembles already-loaded segments. All audio must share one rate.
pub fn assemble(
    plan: &AssemblyPlan,
    segments: &[AudioBuffer],
    silence: Option<&AudioBuffer>,
) -> Result<AssembledStimulus> {
    let want = plan.layout.segments();
    if segments.len() != want {
        return Err(Error::Assembly(format!(
            "{:?} layout requires {want} segments, got {}",
            plan.layout,
            segments.len()
        )));
    }
    if let Some(i) = segments.iter().position(AudioBuffer::is_empty) {
        return Err(Error::Assembly(format!(
            "segment {i} is empty; layout requires {want} non-empty segments"
        )));
    }
    let rate = segments[0].sample_rate;
    if let Some(s) = segments.iter().chain(silence).find(|s| s.sample_rate != rate) {
        return Err(Error::SampleRate {
            expected: rate,
            got: s.sample_rate,
        });
    }
    if silence.is_some_and(AudioBuffer::is_empty) {
        return Err(Error::Assembly("silence file is empty".into()));
    }
    if rate != MODEL_RATE {
        log::warn!("assembling at {rate} Hz rather than {MODEL_RATE} Hz");
    }

    let total = ms_to_samples(plan.total_duration_ms, rate);
    let lead = ms_to_samples(plan.lead_ms, rate);
    let gap = ms_to_samples(plan.gap_ms, rate);
    let tail = ms_to_samples(plan.tail_ms, rate);
    let needed = lead + tail + gap * (want - 1) + segments.iter().map(AudioBuffer::len).sum::<usize>();
    if needed > total {
        let over = needed - total;
        return Err(Error::AssemblyOverflow {
            overflow_samples: over,
            overflow_ms: over as f64 * 1000.0 / f64::from(rate),
        });
    }
    let fill = total - needed;

    let mut out = Vec::with_capacity(total);
    let pad = |out: &mut Vec<f32>, n: usize| match silence {
        None => out.resize(out.len() + n, 0.0),
        Some(s) => out.extend(s.samples.iter().cycle().take(n)),
    };
    pad(&mut out, fill + lead);
    let mut offsets = Vec::with_capacity(want);
    for (i, seg) in segments.iter().enumerate() {
        if i > 0 {
            pad(&mut out, gap);
        }
        offsets.push(out.len());
        out.extend_from_slice(&seg.samples);
    }
    pad(&mut out, tail);
    debug_assert_eq!(out.len(), total);
    Ok(AssembledStimulus {
        audio: AudioBuffer::new(out, rate)?,
        offsets,
        fill_samples: fill,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tone(n: usize, seed: f32) -> AudioBuffer {
        AudioBuffer::new((0..n).map(|i| ((i as f32 + seed) * 0.37).sin() * 0.5).collect(), 16_000).unwrap()
    }

    #[test]
    fn five_second_single() {
        let s = tone(80_000, 1.0);
        let a = assemble(&AssemblyPlan::single("x"), &[s.clone()], None).unwrap();
        assert_eq!(a.audio.len(), 128_000);
        // 8 − 5 − 0.15 = 2.85 s of fill
        assert_eq!(a.fill_samples, 45_600);
        assert_eq!(a.offsets, vec![45_600]);
        assert_eq!(&a.audio.samples[45_600..125_600], &s.samples[..]);
        assert!(a.audio.samples[125_600..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pair_layout_offsets() {
        let c = tone(32_000, 2.0);
        let t = tone(24_000, 3.0);
        let a = assemble(&AssemblyPlan::pair("c", "t"), &[c.clone(), t.clone()], None).unwrap();
        let fill = 128_000 - (2400 + 32_000 + 4000 + 24_000 + 2400);
        assert_eq!(a.fill_samples, fill);
        assert_eq!(a.offsets, vec![fill + 2400, fill + 2400 + 32_000 + 4000]);
    }

    #[test]
    fn missing_or_empty_segment() {
        let plan = AssemblyPlan::pair("c", "t");
        assert!(matches!(
            assemble(&plan, &[tone(100, 0.0)], None),
            Err(Error::Assembly(_))
        ));
        let empty = AudioBuffer::silence(0, 16_000);
        assert!(matches!(
            assemble(&plan, &[empty, tone(100, 0.0)], None),
            Err(Error::Assembly(_))
        ));
    }

    #[test]
    fn overflow_reports_amount() {
        let err = assemble(&AssemblyPlan::single("x"), &[tone(127_000, 0.0)], None).unwrap_err();
        match err {
            Error::AssemblyOverflow {
                overflow_samples,
                overflow_ms,
            } => {
                assert_eq!(overflow_samples, 1400);
                assert!((overflow_ms - 87.5).abs() < 1e-9);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn silence_file_is_tiled() {
        let sil = AudioBuffer::new(vec![0.01, -0.01, 0.02], 16_000).unwrap();
        let a = assemble(&AssemblyPlan::single("x"), &[tone(1000, 0.0)], Some(&sil)).unwrap();
        assert_eq!(&a.audio.samples[..6], &[0.01, -0.01, 0.02, 0.01, -0.01, 0.02]);
    }

    #[test]
    fn plan_json_round_trip() {
        let mut p = AssemblyPlan::pair("a.wav", "b.wav");
        p.silence_source = SilenceSource::SilenceFile("room.wav".into());
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(serde_json::from_str::<AssemblyPlan>(&s).unwrap(), p);
    }

    proptest! {
        #[test]
        fn exact_length_and_verbatim_segments(a in 1usize..60_000, b in 1usize..60_000, pair: bool) {
            let s0 = tone(a, 0.5);
            let s1 = tone(b, 1.5);
            let (plan, segs) = if pair {
                (AssemblyPlan::pair("c", "t"), vec![s0, s1])
            } else {
                (AssemblyPlan::single("x"), vec![s0])
            };
            match assemble(&plan, &segs, None) {
                Ok(out) => {
                    prop_assert_eq!(out.audio.len(), 128_000);
                    for (seg, &off) in segs.iter().zip(&out.offsets) {
                        prop_assert_eq!(&out.audio.samples[off..off + seg.len()], &seg.samples[..]);
                    }
                }
                Err(Error::AssemblyOverflow { .. }) => {}
                Err(e) => prop_assert!(false, "{e}"),
            }
        }
    }
}

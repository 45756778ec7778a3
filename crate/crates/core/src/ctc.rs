// SPDX-License-Identifier: MIT OR Apache-2.0

//! Greedy CTC decoding and character-level frame alignment.

use serde::{Deserialize, Serialize};

use crate::engine::Vocab;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Samples per frame step and per receptive field of the base feature encoder.
pub const FRAME_HOP: usize = 320;
pub const FRAME_WIDTH: usize = 400;

/// One surviving character after collapse and blank removal.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Emission {
    pub token: usize,
    /// Token text; the word delimiter is rendered as a space.
    pub text: String,
    pub first_frame: usize,
    pub last_frame: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordSpan {
    pub word: String,
    pub first_frame: usize,
    pub last_frame: usize,
    /// Index range into the alignment's emissions.
    pub first_emission: usize,
    pub last_emission: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharAlignment {
    pub frame_chars: Vec<usize>,
    pub transcript: String,
    pub emissions: Vec<Emission>,
    pub word_spans: Vec<WordSpan>,
}

/// Inclusive frame range.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FrameSpan {
    pub first: usize,
    pub last: usize,
}

impl FrameSpan {
    pub fn new(first: usize, last: usize) -> Result<Self> {
        if first > last {
            return Err(Error::Alignment(format!("empty frame span {first}..{last}")));
        }
        Ok(Self { first, last })
    }

    pub fn single(frame: usize) -> Self {
        Self {
            first: frame,
            last: frame,
        }
    }

    pub fn len(&self) -> usize {
        self.last - self.first + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, frame: usize) -> bool {
        (self.first..=self.last).contains(&frame)
    }

    pub fn frames(&self) -> impl Iterator<Item = usize> {
        self.first..=self.last
    }

    pub fn is_subset_of(&self, other: &FrameSpan) -> bool {
        other.first <= self.first && self.last <= other.last
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    Frame,
    Phone,
    Word,
}

impl Granularity {
    pub const ALL: [Granularity; 3] = [Granularity::Frame, Granularity::Phone, Granularity::Word];

    pub fn name(self) -> &'static str {
        match self {
            Granularity::Frame => "frame",
            Granularity::Phone => "phone",
            Granularity::Word => "word",
        }
    }
}

/// Frames either side of the critical frame in a phone span.
pub const PHONE_RADIUS: usize = 3;

/// Index of the largest element; ties go to the lowest index.
pub fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Greedy CTC decoding with per-character frame runs.
///
/// Delimiter emissions at either end of the utterance are dropped, and
/// delimiters separated only by blanks are kept once, so words are never
/// empty.
pub fn greedy_decode(logits: &Tensor, vocab: &Vocab) -> Result<CharAlignment> {
    if logits.is_empty() {
        return Ok(CharAlignment::default());
    }
    let (frames, v) = logits.expect_2d("logits")?;
    if v != vocab.len() {
        return Err(Error::Shape(format!(
            "logits have {v} columns, vocab has {} tokens",
            vocab.len()
        )));
    }
    let frame_chars: Vec<usize> = (0..frames).map(|i| argmax(logits.row(i))).collect();
    Ok(align_ids(frame_chars, vocab))
}

/// Builds an alignment from per-frame token ids.
pub fn align_ids(frame_chars: Vec<usize>, vocab: &Vocab) -> CharAlignment {
    let blank = vocab.blank();
    let delim = vocab.delimiter();
    let mut emissions: Vec<Emission> = Vec::new();
    let mut i = 0;
    while i < frame_chars.len() {
        let tok = frame_chars[i];
        let mut j = i;
        while j + 1 < frame_chars.len() && frame_chars[j + 1] == tok {
            j += 1;
        }
        if tok != blank {
            let is_delim = tok == delim;
            let after_delim = emissions.last().is_none_or(|e| e.token == delim);
            if !(is_delim && after_delim) {
                let text = if is_delim {
                    " ".to_string()
                } else {
                    vocab.token(tok).unwrap_or("").to_string()
                };
                emissions.push(Emission {
                    token: tok,
                    text,
                    first_frame: i,
                    last_frame: j,
                });
            }
        }
        i = j + 1;
    }
    if emissions.last().is_some_and(|e| e.token == delim) {
        emissions.pop();
    }

    let transcript: String = emissions.iter().map(|e| e.text.as_str()).collect();
    let mut word_spans = Vec::new();
    let mut start: Option<usize> = None;
    for (k, e) in emissions.iter().enumerate() {
        if e.token == delim {
            if let Some(s) = start.take() {
                word_spans.push(word_span(&emissions, s, k - 1));
            }
        } else if start.is_none() {
            start = Some(k);
        }
    }
    if let Some(s) = start {
        word_spans.push(word_span(&emissions, s, emissions.len() - 1));
    }
    CharAlignment {
        frame_chars,
        transcript,
        emissions,
        word_spans,
    }
}

fn word_span(emissions: &[Emission], a: usize, b: usize) -> WordSpan {
    WordSpan {
        word: emissions[a..=b].iter().map(|e| e.text.as_str()).collect(),
        first_frame: emissions[a].first_frame,
        last_frame: emissions[b].last_frame,
        first_emission: a,
        last_emission: b,
    }
}

impl CharAlignment {
    pub fn num_frames(&self) -> usize {
        self.frame_chars.len()
    }

    pub fn words(&self) -> Vec<&str> {
        self.word_spans.iter().map(|w| w.word.as_str()).collect()
    }

    fn word(&self, word_index: usize) -> Result<&WordSpan> {
        self.word_spans.get(word_index).ok_or_else(|| {
            Error::Alignment(format!(
                "word index {word_index} outside 0..{} in {:?}",
                self.word_spans.len(),
                self.transcript
            ))
        })
    }

    /// Emission holding character `char_index` of word `word_index`.
    pub fn emission_of(&self, word_index: usize, char_index: usize) -> Result<usize> {
        let w = self.word(word_index)?;
        let mut offset = 0;
        for k in w.first_emission..=w.last_emission {
            let n = self.emissions[k].text.chars().count();
            if char_index < offset + n {
                return Ok(k);
            }
            offset += n;
        }
        Err(Error::Alignment(format!(
            "character {char_index} outside word {:?}",
            w.word
        )))
    }

    /// First frame of the emission of a word's character. A `G` directly after
    /// `N` resolves to the `N`, so the digraph is located at its onset.
    pub fn locate_char_frame(&self, word_index: usize, char_index: usize) -> Result<usize> {
        let w = self.word(word_index)?;
        let chars: Vec<char> = w.word.chars().collect();
        let mut idx = char_index;
        if idx > 0
            && chars.get(idx).is_some_and(|c| c.eq_ignore_ascii_case(&'G'))
            && chars[idx - 1].eq_ignore_ascii_case(&'N')
        {
            idx -= 1;
        }
        Ok(self.emissions[self.emission_of(word_index, idx)?].first_frame)
    }

    /// Frames covered by a word, from its first to its last emission frame.
    pub fn word_frames(&self, word_index: usize) -> Result<FrameSpan> {
        let w = self.word(word_index)?;
        FrameSpan::new(w.first_frame, w.last_frame)
    }

    pub fn span_from_granularity(&self, word_index: usize, char_index: usize, g: Granularity) -> Result<FrameSpan> {
        let frame = self.locate_char_frame(word_index, char_index)?;
        Ok(match g {
            Granularity::Frame => FrameSpan::single(frame),
            Granularity::Phone => phone_span(frame, self.num_frames()),
            Granularity::Word => self.word_frames(word_index)?,
        })
    }

    /// Word index of the first word equal to `word` (case-insensitive).
    pub fn find_word(&self, word: &str) -> Option<usize> {
        self.word_spans.iter().position(|w| w.word.eq_ignore_ascii_case(word))
    }
}

/// Critical frame ± [`PHONE_RADIUS`], clipped to `0..frames`.
pub fn phone_span(frame: usize, frames: usize) -> FrameSpan {
    FrameSpan {
        first: frame.saturating_sub(PHONE_RADIUS),
        last: (frame + PHONE_RADIUS).min(frames.saturating_sub(1)),
    }
}

/// Position of the critical consonant in a transcribed word: the last
/// character equal to either the underlying or the surface character.
pub fn critical_char_index(word: &str, underlying: char, surface: char) -> Option<usize> {
    word.chars()
        .enumerate()
        .filter(|(_, c)| c.eq_ignore_ascii_case(&underlying) || c.eq_ignore_ascii_case(&surface))
        .map(|(i, _)| i)
        .last()
}

/// Sample range `[start, end)` covered by a frame.
pub fn frame_samples(frame: usize) -> (usize, usize) {
    (frame * FRAME_HOP, frame * FRAME_HOP + FRAME_WIDTH)
}

#[derive(Serialize)]
struct AlignmentExport<'a> {
    transcript: &'a str,
    frame_hop_samples: usize,
    frame_width_samples: usize,
    sample_rate: u32,
    emissions: Vec<ExportEmission<'a>>,
    words: Vec<ExportWord<'a>>,
}

#[derive(Serialize)]
struct ExportEmission<'a> {
    char: &'a str,
    first_frame: usize,
    last_frame: usize,
    start_s: f64,
    end_s: f64,
}

#[derive(Serialize)]
struct ExportWord<'a> {
    word: &'a str,
    first_frame: usize,
    last_frame: usize,
    start_s: f64,
    end_s: f64,
}

/// Alignment as JSON with frame times at `sample_rate`.
pub fn alignment_json(a: &CharAlignment, sample_rate: u32) -> Result<String> {
    let secs = |first: usize, last: usize| {
        let r = f64::from(sample_rate);
        (frame_samples(first).0 as f64 / r, frame_samples(last).1 as f64 / r)
    };
    let export = AlignmentExport {
        transcript: &a.transcript,
        frame_hop_samples: FRAME_HOP,
        frame_width_samples: FRAME_WIDTH,
        sample_rate,
        emissions: a
            .emissions
            .iter()
            .map(|e| {
                let (start_s, end_s) = secs(e.first_frame, e.last_frame);
                ExportEmission {
                    char: &e.text,
                    first_frame: e.first_frame,
                    last_frame: e.last_frame,
                    start_s,
                    end_s,
                }
            })
            .collect(),
        words: a
            .word_spans
            .iter()
            .map(|w| {
                let (start_s, end_s) = secs(w.first_frame, w.last_frame);
                ExportWord {
                    word: &w.word,
                    first_frame: w.first_frame,
                    last_frame: w.last_frame,
                    start_s,
                    end_s,
                }
            })
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&export)?)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn vocab() -> Vocab {
        let toks = [
            "<pad>", "<s>", "</s>", "<unk>", "|", "E", "T", "A", "O", "N", "I", "H", "S", "R", "D", "L", "U", "M", "W",
            "C", "F", "G", "Y", "P", "B", "V", "K", "'", "X", "J", "Q", "Z",
        ];
        Vocab::new(toks.iter().map(|s| s.to_string()).collect(), 0, 4).unwrap()
    }

    fn ids(v: &Vocab, s: &str) -> Vec<usize> {
        s.chars()
            .map(|c| match c {
                '_' => v.blank(),
                ' ' => v.delimiter(),
                c => v.index_of(&c.to_string()).unwrap(),
            })
            .collect()
    }

    fn one_hot(ids: &[usize], n: usize) -> Tensor {
        let mut t = Tensor::zeros(vec![ids.len(), n]);
        for (r, &i) in ids.iter().enumerate() {
            t.row_mut(r)[i] = 5.0;
        }
        t
    }

    #[test]
    fn hello_collapse() {
        let v = vocab();
        let a = greedy_decode(&one_hot(&ids(&v, "_HHE_LL_LO"), v.len()), &v).unwrap();
        assert_eq!(a.transcript, "HELLO");
        assert_eq!(a.emissions.len(), 5);
        assert_eq!((a.emissions[1].first_frame, a.emissions[1].last_frame), (3, 3));
        assert_eq!((a.emissions[2].first_frame, a.emissions[2].last_frame), (5, 6));
    }

    #[test]
    fn all_blank_and_empty() {
        let v = vocab();
        assert_eq!(greedy_decode(&one_hot(&[0; 7], v.len()), &v).unwrap().transcript, "");
        let a = greedy_decode(&Tensor::zeros(vec![0, v.len()]), &v).unwrap();
        assert!(a.emissions.is_empty());
    }

    #[test]
    fn ties_go_to_lowest_index() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 2.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
    }

    #[test]
    fn delimiters_trimmed_and_merged() {
        let v = vocab();
        let a = align_ids(ids(&v, "  THIM_ _ LEAFLET_ "), &v);
        assert_eq!(a.transcript, "THIM LEAFLET");
        assert_eq!(a.words(), vec!["THIM", "LEAFLET"]);
        assert_eq!(a.word_spans[0].first_frame, 2);
        assert_eq!(a.word_spans[0].last_frame, 5);
        assert_eq!(a.word_spans[1].first_frame, 10);
    }

    #[test]
    fn critical_frames() {
        let v = vocab();
        let a = align_ids(ids(&v, "TTHHI_MMM_ LL"), &v);
        let k = critical_char_index("THIM", 'N', 'M').unwrap();
        assert_eq!(k, 3);
        assert_eq!(a.locate_char_frame(0, k).unwrap(), 6);
        let a = align_ids(ids(&v, "FU_NN_GG NIGHT"), &v);
        let k = critical_char_index("FUNG", 'N', 'G').unwrap();
        assert_eq!(a.locate_char_frame(0, k).unwrap(), 3);
        assert!(a.locate_char_frame(0, 9).is_err());
        assert!(a.locate_char_frame(5, 0).is_err());
    }

    #[test]
    fn granularity_spans() {
        assert_eq!(phone_span(120, 399), FrameSpan { first: 117, last: 123 });
        assert_eq!(phone_span(1, 399), FrameSpan { first: 0, last: 4 });
        assert_eq!(phone_span(398, 399), FrameSpan { first: 395, last: 398 });
        let v = vocab();
        let mut f = vec![v.blank(); 200];
        let word = ids(&v, "PACKET");
        for (k, &t) in word.iter().enumerate() {
            let at = 130 + k * 6;
            f[at] = t;
            if k == word.len() - 1 {
                f[at..=160].iter_mut().for_each(|x| *x = t);
            }
        }
        let a = align_ids(f, &v);
        assert_eq!(
            a.span_from_granularity(0, 0, Granularity::Word).unwrap(),
            FrameSpan { first: 130, last: 160 }
        );
    }

    #[test]
    fn export_has_times() {
        let v = vocab();
        let a = align_ids(ids(&v, "_AN_"), &v);
        let j: serde_json::Value = serde_json::from_str(&alignment_json(&a, 16_000).unwrap()).unwrap();
        assert_eq!(j["transcript"], "AN");
        assert_eq!(j["emissions"][0]["start_s"], 0.02);
        assert_eq!(j["emissions"][0]["end_s"], 0.045);
    }

    fn string_strategy() -> impl Strategy<Value = String> {
        let letters: Vec<char> = "ETAONIHSRDLUMWCFGYPBVK'XJQZ".chars().collect();
        prop::collection::vec(prop::collection::vec(prop::sample::select(letters), 1..8), 1..5).prop_map(|words| {
            words
                .into_iter()
                .map(|w| w.into_iter().collect::<String>())
                .collect::<Vec<_>>()
                .join(" ")
        })
    }

    proptest! {
        #[test]
        fn one_hot_round_trip(s in string_strategy(), reps in prop::collection::vec(1usize..4, 64)) {
            let v = vocab();
            let mut frames = vec![v.blank()];
            for (k, c) in s.chars().enumerate() {
                let id = if c == ' ' { v.delimiter() } else { v.index_of(&c.to_string()).unwrap() };
                frames.extend(std::iter::repeat_n(id, reps[k % reps.len()]));
                frames.push(v.blank());
            }
            let a = greedy_decode(&one_hot(&frames, v.len()), &v).unwrap();
            prop_assert_eq!(&a.transcript, &s);
            let cat: String = a.emissions.iter().map(|e| e.text.as_str()).collect();
            prop_assert_eq!(cat, s);
            for w in a.emissions.windows(2) {
                prop_assert!(w[0].last_frame < w[1].first_frame);
            }
            for e in &a.emissions {
                for f in e.first_frame..=e.last_frame {
                    prop_assert_eq!(a.frame_chars[f], e.token);
                }
            }
            for (wi, w) in a.word_spans.iter().enumerate() {
                for ci in 0..w.word.chars().count() {
                    let f = a.locate_char_frame(wi, ci).unwrap();
                    let fs = a.span_from_granularity(wi, ci, Granularity::Frame).unwrap();
                    let ps = a.span_from_granularity(wi, ci, Granularity::Phone).unwrap();
                    prop_assert!(fs.is_subset_of(&ps));
                    prop_assert!(ps.last < a.num_frames());
                    let c = w.word.chars().nth(ci).unwrap();
                    let digraph = ci > 0 && c == 'G' && w.word.chars().nth(ci - 1) == Some('N');
                    if !digraph {
                        prop_assert_eq!(v.token(a.frame_chars[f]).unwrap(), c.to_string());
                    }
                }
            }
            for w in a.word_spans.windows(2) {
                prop_assert!(w[0].last_frame < w[1].first_frame);
            }
        }
    }
}

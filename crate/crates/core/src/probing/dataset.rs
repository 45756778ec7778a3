// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::timit::{PhoneInterval, Utterance};
use crate::behavioral::StimulusRecord;
use crate::ctc::{FRAME_HOP, FRAME_WIDTH};
use crate::engine::{CaptureSelector, Checkpoint, ModelConfig};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Maps corpus phone codes to canonical phonemes; unknown codes map to
/// themselves.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhoneFold {
    pub table: BTreeMap<String, String>,
}

impl PhoneFold {
    pub fn builtin() -> Self {
        Self::from_csv(include_str!("../../data/timit_fold.csv")).expect("bundled fold table parses")
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let mut table = BTreeMap::new();
        for (i, r) in rdr.records().enumerate() {
            let r = r.map_err(|e| Error::Parse {
                path: "<fold table>".into(),
                line: i + 2,
                msg: e.to_string(),
            })?;
            if r.len() != 2 {
                return Err(Error::Parse {
                    path: "<fold table>".into(),
                    line: i + 2,
                    msg: "expected code,phoneme".into(),
                });
            }
            table.insert(r[0].trim().to_string(), r[1].trim().to_string());
        }
        Ok(Self { table })
    }

    pub fn fold<'a>(&'a self, code: &'a str) -> &'a str {
        self.table.get(code).map_or(code, String::as_str)
    }
}

/// Two phonemes to discriminate: label 0 is the underlying class, label 1
/// the surface class.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Contrast {
    pub underlying: String,
    pub surface: String,
}

impl Contrast {
    pub fn new(underlying: &str, surface: &str) -> Result<Self> {
        if underlying.is_empty() || surface.is_empty() || underlying == surface {
            return Err(Error::Invalid(format!("bad contrast {underlying:?} vs {surface:?}")));
        }
        Ok(Self {
            underlying: underlying.to_string(),
            surface: surface.to_string(),
        })
    }

    /// Parses `n-m` style names.
    pub fn parse(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once(['-', ':', '/'])
            .ok_or_else(|| Error::Invalid(format!("contrast {s:?} should look like n-m")))?;
        Self::new(a.trim(), b.trim())
    }

    pub fn name(&self) -> String {
        format!("{}-{}", self.underlying, self.surface)
    }

    /// The orthographic character standing for a phoneme in transcripts.
    fn letter(phoneme: &str) -> Option<char> {
        match phoneme {
            "ng" => Some('G'),
            p if p.chars().count() == 1 => p.chars().next().map(|c| c.to_ascii_uppercase()),
            _ => None,
        }
    }

    /// Whether a stimulus assimilates this contrast's underlying phoneme to
    /// its surface phoneme.
    pub fn matches(&self, r: &StimulusRecord) -> bool {
        Self::letter(&self.underlying) == Some(r.underlying_char.to_ascii_uppercase())
            && Self::letter(&self.surface) == Some(r.surface_char.to_ascii_uppercase())
    }
}

/// Class of every frame: `Some(0)` underlying, `Some(1)` surface, `None`
/// when neither or both classes overlap it.
pub fn frame_labels(phones: &[PhoneInterval], frames: usize, contrast: &Contrast, fold: &PhoneFold) -> Vec<Option<u8>> {
    let mut hits = vec![[false; 2]; frames];
    for p in phones {
        let class = match fold.fold(&p.phone_label) {
            x if x == contrast.underlying => 0,
            x if x == contrast.surface => 1,
            _ => continue,
        };
        // frame i covers [hop·i, hop·i + width)
        let first = (p.start_sample + 1).saturating_sub(FRAME_WIDTH).div_ceil(FRAME_HOP);
        let last = (p.end_sample - 1) / FRAME_HOP;
        for h in hits.iter_mut().take(frames.min(last + 1)).skip(first) {
            h[class] = true;
        }
    }
    hits.into_iter()
        .map(|h| match h {
            [true, false] => Some(0),
            [false, true] => Some(1),
            _ => None,
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub features: Tensor,
    pub labels: Vec<u8>,
    /// `(utterance id, frame)` of each row.
    pub frames: Vec<(String, usize)>,
}

impl Split {
    pub fn class_counts(&self) -> [usize; 2] {
        let ones = self.labels.iter().filter(|&&l| l == 1).count();
        [self.labels.len() - ones, ones]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeDataset {
    /// Hidden-state index: 0 is the feature projection, `l` the output of
    /// transformer layer `l`.
    pub layer: usize,
    pub contrast: Contrast,
    pub train: Split,
    pub test: Split,
}

struct Collected {
    /// Per layer, one row per labeled frame.
    rows: Vec<Vec<Vec<f32>>>,
    labels: Vec<u8>,
    frames: Vec<(String, usize)>,
}

fn collect(
    ckpt: &Checkpoint,
    utts: &[Utterance],
    contrast: &Contrast,
    layers: &[usize],
    fold: &PhoneFold,
) -> Result<Collected> {
    let per_utt = utts
        .par_iter()
        .map(|u| {
            let store = ckpt.forward(&u.audio, &CaptureSelector::hidden())?;
            let labels = frame_labels(&u.phones, store.num_frames(), contrast, fold);
            let mut rows = vec![Vec::new(); layers.len()];
            let mut ls = Vec::new();
            let mut fs = Vec::new();
            for (f, l) in labels.iter().enumerate() {
                if let Some(l) = l {
                    for (k, &layer) in layers.iter().enumerate() {
                        let h = store
                            .hidden
                            .get(&layer)
                            .ok_or_else(|| Error::Probe(format!("no hidden state for layer {layer}")))?;
                        rows[k].push(h.row(f).to_vec());
                    }
                    ls.push(*l);
                    fs.push((u.id.clone(), f));
                }
            }
            Ok((rows, ls, fs))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Collected {
        rows: vec![Vec::new(); layers.len()],
        labels: Vec::new(),
        frames: Vec::new(),
    };
    for (rows, ls, fs) in per_utt {
        for (acc, r) in out.rows.iter_mut().zip(rows) {
            acc.extend(r);
        }
        out.labels.extend(ls);
        out.frames.extend(fs);
    }
    Ok(out)
}

/// Row indices keeping every minority-class row and a seeded uniform sample
/// of the majority class of the same size, in ascending order.
pub fn balance_indices(labels: &[u8], seed: u64) -> Result<Vec<usize>> {
    let idx = |c: u8| {
        labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == c)
            .map(|(i, _)| i)
            .collect::<Vec<_>>()
    };
    let (zeros, ones) = (idx(0), idx(1));
    if zeros.is_empty() || ones.is_empty() {
        return Err(Error::Dataset(format!(
            "a class is empty ({} underlying, {} surface frames)",
            zeros.len(),
            ones.len()
        )));
    }
    let (minor, major) = if zeros.len() <= ones.len() {
        (zeros, ones)
    } else {
        (ones, zeros)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep: Vec<usize> = sample(&mut rng, major.len(), minor.len())
        .into_iter()
        .map(|i| major[i])
        .collect();
    keep.extend(minor);
    keep.sort_unstable();
    Ok(keep)
}

fn split_for(c: &Collected, k: usize, keep: &[usize]) -> Result<Split> {
    let rows: Vec<Vec<f32>> = keep.iter().map(|&i| c.rows[k][i].clone()).collect();
    Ok(Split {
        features: Tensor::from_rows(&rows)?,
        labels: keep.iter().map(|&i| c.labels[i]).collect(),
        frames: keep.iter().map(|&i| c.frames[i].clone()).collect(),
    })
}

/// Labeled frames per class before balancing. Needs only the model's frame
/// arithmetic, not a forward pass.
pub fn labeled_frame_counts(
    utts: &[Utterance],
    contrast: &Contrast,
    fold: &PhoneFold,
    config: &ModelConfig,
) -> Result<[usize; 2]> {
    let mut counts = [0; 2];
    for u in utts {
        let frames = config.frame_count(u.audio.len())?;
        for l in frame_labels(&u.phones, frames, contrast, fold).into_iter().flatten() {
            counts[usize::from(l)] += 1;
        }
    }
    Ok(counts)
}

/// Balanced frame datasets for each requested layer. The same frames are
/// kept for every layer.
pub fn build_frame_datasets(
    ckpt: &Checkpoint,
    train: &[Utterance],
    test: &[Utterance],
    contrast: &Contrast,
    layers: &[usize],
    fold: &PhoneFold,
    seed: u64,
) -> Result<Vec<ProbeDataset>> {
    if let Some(&l) = layers.iter().find(|&&l| l > ckpt.config.num_layers) {
        return Err(Error::Probe(format!(
            "layer {l} outside 0..={}",
            ckpt.config.num_layers
        )));
    }
    let tr = collect(ckpt, train, contrast, layers, fold)?;
    let te = collect(ckpt, test, contrast, layers, fold)?;
    let keep_tr = balance_indices(&tr.labels, seed)?;
    let keep_te = balance_indices(&te.labels, seed.wrapping_add(1))?;
    layers
        .iter()
        .enumerate()
        .map(|(k, &layer)| {
            Ok(ProbeDataset {
                layer,
                contrast: contrast.clone(),
                train: split_for(&tr, k, &keep_tr)?,
                test: split_for(&te, k, &keep_te)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn iv(label: &str, s: usize, e: usize) -> PhoneInterval {
        PhoneInterval {
            phone_label: label.into(),
            start_sample: s,
            end_sample: e,
        }
    }

    fn nm() -> Contrast {
        Contrast::new("n", "m").unwrap()
    }

    #[test]
    fn overlap_rule() {
        let fold = PhoneFold::builtin();
        // samples 640..960 touch frames 1 (320..720) and 2 (640..1040)
        let l = frame_labels(&[iv("n", 640, 960)], 6, &nm(), &fold);
        assert_eq!(l, vec![None, Some(0), Some(0), None, None, None]);
        // a single sample at 719 touches frames 1 and 2 only
        let l = frame_labels(&[iv("m", 719, 720)], 6, &nm(), &fold);
        assert_eq!(l, vec![None, Some(1), Some(1), None, None, None]);
        // one sample at 720 is past frame 1's last sample (719)
        let l = frame_labels(&[iv("m", 720, 721)], 6, &nm(), &fold);
        assert_eq!(l, vec![None, None, Some(1), None, None, None]);
    }

    #[test]
    fn mixed_frames_are_dropped_and_codes_folded() {
        let fold = PhoneFold::builtin();
        let l = frame_labels(
            &[iv("nx", 0, 700), iv("em", 700, 1400), iv("iy", 1400, 3000)],
            8,
            &nm(),
            &fold,
        );
        assert_eq!(l[0], Some(0));
        // frames 1 and 2 see both classes
        assert_eq!(&l[1..3], &[None, None]);
        assert_eq!(&l[3..5], &[Some(1), Some(1)]);
        assert!(l[5..].iter().all(Option::is_none));
        assert_eq!(fold.fold("tcl"), "t");
        assert_eq!(fold.fold("aa"), "aa");
    }

    #[test]
    fn balancing_is_seeded() {
        let labels: Vec<u8> = (0..100).map(|i| u8::from(i % 5 == 0)).collect();
        let a = balance_indices(&labels, 0).unwrap();
        assert_eq!(a, balance_indices(&labels, 0).unwrap());
        assert_ne!(a, balance_indices(&labels, 1).unwrap());
        assert_eq!(a.len(), 40);
        assert!(balance_indices(&[0, 0, 0], 0).is_err());
    }

    #[test]
    fn contrasts() {
        let c = Contrast::parse("n-ng").unwrap();
        let mut r = crate::behavioral::exp1_manifest()
            .into_iter()
            .find(|r| r.target_word == "FUN")
            .unwrap();
        assert!(c.matches(&r));
        assert!(!nm().matches(&r));
        r.surface_char = 'M';
        assert!(nm().matches(&r));
        assert!(Contrast::parse("nm").is_err());
    }

    proptest! {
        #[test]
        fn balanced_classes(labels in prop::collection::vec(0u8..2, 2..300), seed: u64) {
            if let Ok(keep) = balance_indices(&labels, seed) {
                let ones = keep.iter().filter(|&&i| labels[i] == 1).count();
                prop_assert_eq!(ones * 2, keep.len());
                prop_assert!(keep.windows(2).all(|w| w[0] < w[1]));
            }
        }

        #[test]
        fn labels_match_brute_force(start in 0usize..4000, len in 1usize..900, frames in 1usize..16) {
            let fold = PhoneFold::builtin();
            let l = frame_labels(&[iv("n", start, start + len)], frames, &nm(), &fold);
            for (i, lab) in l.iter().enumerate() {
                let (a, b) = (i * FRAME_HOP, i * FRAME_HOP + FRAME_WIDTH);
                let overlap = a < start + len && start < b;
                prop_assert_eq!(lab.is_some(), overlap);
            }
        }
    }
}

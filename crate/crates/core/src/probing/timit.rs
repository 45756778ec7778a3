// SPDX-License-Identifier: MIT OR Apache-2.0

//! TIMIT-style corpora: a `.PHN` file of `start end label` lines next to the
//! utterance audio (NIST SPHERE or RIFF), sample indices at 16 kHz.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use crate::audio::{read_wav, AudioBuffer, MODEL_RATE};
use crate::ctc::FRAME_WIDTH;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhoneInterval {
    pub phone_label: String,
    pub start_sample: usize,
    /// Exclusive.
    pub end_sample: usize,
}

#[derive(Clone, Debug)]
pub struct Utterance {
    pub id: String,
    pub audio: AudioBuffer,
    pub phones: Vec<PhoneInterval>,
}

pub fn parse_phn(text: &str, path: &Path) -> Result<Vec<PhoneInterval>> {
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut out: Vec<PhoneInterval> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let [start, end, label] = fields[..] else {
            return Err(err(line_no, format!("expected `start end label`, got {line:?}")));
        };
        let num = |s: &str| {
            s.parse::<usize>()
                .map_err(|e| err(line_no, format!("bad sample index {s:?}: {e}")))
        };
        let (start, end) = (num(start)?, num(end)?);
        if start >= end {
            return Err(err(line_no, format!("interval {start}..{end} is empty")));
        }
        if let Some(prev) = out.last() {
            if start < prev.end_sample {
                return Err(err(
                    line_no,
                    format!(
                        "interval starts at {start}, before the previous end {}",
                        prev.end_sample
                    ),
                ));
            }
        }
        out.push(PhoneInterval {
            phone_label: label.to_string(),
            start_sample: start,
            end_sample: end,
        });
    }
    Ok(out)
}

fn audio_for(phn: &Path) -> Option<PathBuf> {
    ["WAV", "wav", "WAV.wav", "wav.wav"]
        .iter()
        .map(|e| phn.with_extension(e))
        .find(|p| p.is_file())
}

/// Loads one utterance; `None` when it is shorter than one frame.
pub fn load_utterance(phn: &Path, root: &Path) -> Result<Option<Utterance>> {
    let wav = audio_for(phn).ok_or_else(|| Error::Dataset(format!("no audio next to {}", phn.display())))?;
    let audio = read_wav(&wav)?;
    if audio.sample_rate != MODEL_RATE {
        return Err(Error::SampleRate {
            expected: MODEL_RATE,
            got: audio.sample_rate,
        });
    }
    let id = phn
        .strip_prefix(root)
        .unwrap_or(phn)
        .with_extension("")
        .to_string_lossy()
        .replace('\\', "/");
    if audio.len() < FRAME_WIDTH {
        log::warn!("skipping {id}: {} samples is shorter than one frame", audio.len());
        return Ok(None);
    }
    let phones = parse_phn(&std::fs::read_to_string(phn)?, phn)?;
    Ok(Some(Utterance { id, audio, phones }))
}

fn split_dir(root: &Path, name: &str) -> Result<PathBuf> {
    std::fs::read_dir(root)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .find(|p| {
            p.is_dir()
                && p.file_name()
                    .is_some_and(|f| f.to_string_lossy().eq_ignore_ascii_case(name))
        })
        .ok_or_else(|| Error::Dataset(format!("{} has no {name} directory", root.display())))
}

/// `.PHN` files under a split, in sorted path order.
pub fn list_phn(split: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = WalkDir::new(split)
        .into_iter()
        .filter_map(|e| e.ok())
        .map(|e| e.into_path())
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("phn")))
        .collect();
    v.sort();
    v
}

fn take_split(root: &Path, name: &str, n: usize) -> Result<Vec<Utterance>> {
    let dir = split_dir(root, name)?;
    let mut out = Vec::with_capacity(n);
    for phn in list_phn(&dir) {
        if out.len() == n {
            break;
        }
        if let Some(u) = load_utterance(&phn, root)? {
            out.push(u);
        }
    }
    if out.len() < n {
        log::warn!(
            "{name} split holds only {} usable utterances of {n} requested",
            out.len()
        );
    }
    Ok(out)
}

/// The first `n_train` / `n_test` usable utterances of the train and test
/// splits, in sorted path order.
pub fn ingest_timit(root: &Path, n_train: usize, n_test: usize) -> Result<(Vec<Utterance>, Vec<Utterance>)> {
    Ok((take_split(root, "train", n_train)?, take_split(root, "test", n_test)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::write_wav;

    #[test]
    fn parses_lines() {
        let p = parse_phn("0 2360 h#\n2360 3270 n\n\n3270 4000 iy\n", Path::new("x.PHN")).unwrap();
        assert_eq!(
            p[1],
            PhoneInterval {
                phone_label: "n".into(),
                start_sample: 2360,
                end_sample: 3270
            }
        );
        assert_eq!(p.len(), 3);
    }

    #[test]
    fn malformed_lines_report_position() {
        for (text, line) in [
            ("0 10 a\n10 x b\n", 2),
            ("0 10 a b\n", 1),
            ("5 5 a\n", 1),
            ("0 10 a\n5 12 b\n", 2),
        ] {
            match parse_phn(text, Path::new("u.PHN")) {
                Err(Error::Parse { line: l, path, .. }) => {
                    assert_eq!(l, line, "{text:?}");
                    assert_eq!(path, Path::new("u.PHN"));
                }
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn ingest_orders_and_skips_short() {
        let dir = tempfile::tempdir().unwrap();
        for (split, spk, utt, len) in [
            ("TRAIN", "DR1/MABC0", "SI2", 4000),
            ("TRAIN", "DR1/FAAA0", "SX1", 4000),
            ("TRAIN", "DR1/FAAA0", "SA1", 300),
            ("TEST", "DR2/MZZZ0", "SI9", 2000),
        ] {
            let d = dir.path().join(split).join(spk);
            std::fs::create_dir_all(&d).unwrap();
            write_wav(
                &d.join(format!("{utt}.WAV")),
                &AudioBuffer::new(vec![0.1; len], 16_000).unwrap(),
            )
            .unwrap();
            std::fs::write(d.join(format!("{utt}.PHN")), format!("0 {len} h#\n")).unwrap();
        }
        let (train, test) = ingest_timit(dir.path(), 5, 1).unwrap();
        let ids: Vec<_> = train.iter().map(|u| u.id.as_str()).collect();
        assert_eq!(ids, ["TRAIN/DR1/FAAA0/SX1", "TRAIN/DR1/MABC0/SI2"]);
        assert_eq!(test.len(), 1);
        assert!(ingest_timit(&dir.path().join("TRAIN"), 1, 1).is_err());
    }
}

// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fs;
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::AudioBuffer;
use crate::error::{Error, Result};

const SPHERE_MAGIC: &[u8] = b"NIST_1A";

/// Reads a RIFF WAV (16-bit PCM or 32-bit float) or an uncompressed NIST
/// SPHERE file. Multichannel audio is averaged to mono.
pub fn read_wav(path: &Path) -> Result<AudioBuffer> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(SPHERE_MAGIC) {
        return read_sphere(&bytes).map_err(|e| annotate(path, e));
    }
    read_riff(&bytes).map_err(|e| annotate(path, e))
}

fn annotate(path: &Path, e: Error) -> Error {
    match e {
        Error::Audio(msg) => Error::Audio(format!("{}: {msg}", path.display())),
        other => other,
    }
}

fn read_riff(bytes: &[u8]) -> Result<AudioBuffer> {
    let reader = WavReader::new(bytes).map_err(|e| Error::Audio(format!("wav header: {e}")))?;
    let spec = reader.spec();
    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| f32::from(v) / 32768.0))
            .collect::<std::result::Result<_, _>>(),
        (SampleFormat::Float, 32) => reader.into_samples::<f32>().collect(),
        (fmt, bits) => {
            return Err(Error::Audio(format!(
                "unsupported codec: {bits}-bit {fmt:?}; expected 16-bit PCM or 32-bit float"
            )))
        }
    }
    .map_err(|e| Error::Audio(format!("wav data: {e}")))?;
    AudioBuffer::new(downmix(interleaved, usize::from(spec.channels)), spec.sample_rate)
}

fn downmix(interleaved: Vec<f32>, channels: usize) -> Vec<f32> {
    if channels <= 1 {
        return interleaved;
    }
    log::warn!("averaging {channels} channels to mono");
    interleaved
        .chunks_exact(channels)
        .map(|frame| (frame.iter().map(|&v| f64::from(v)).sum::<f64>() / channels as f64) as f32)
        .collect()
}

fn read_sphere(bytes: &[u8]) -> Result<AudioBuffer> {
    let bad = |m: &str| Error::Audio(format!("sphere header: {m}"));
    let head = bytes.get(..16).ok_or_else(|| bad("truncated"))?;
    let head = std::str::from_utf8(head).map_err(|_| bad("not text"))?;
    let header_len: usize = head
        .lines()
        .nth(1)
        .and_then(|l| l.trim().parse().ok())
        .ok_or_else(|| bad("missing header length"))?;
    let header = bytes.get(..header_len).ok_or_else(|| bad("truncated"))?;
    let header = String::from_utf8_lossy(header);

    let mut rate = None;
    let mut channels = 1usize;
    let mut width = 2usize;
    let mut count = None;
    let mut big_endian = false;
    let mut coding = String::from("pcm");
    for line in header.lines().skip(2) {
        let mut it = line.split_whitespace();
        let (Some(key), Some(_ty)) = (it.next(), it.next()) else {
            continue;
        };
        if key == "end_head" {
            break;
        }
        let value = it.collect::<Vec<_>>().join(" ");
        match key {
            "sample_rate" => rate = value.parse::<u32>().ok(),
            "channel_count" => channels = value.parse().map_err(|_| bad("channel_count"))?,
            "sample_n_bytes" => width = value.parse().map_err(|_| bad("sample_n_bytes"))?,
            "sample_count" => count = value.parse::<usize>().ok(),
            "sample_byte_format" => big_endian = value == "10",
            "sample_coding" => coding = value,
            _ => {}
        }
    }
    if coding != "pcm" {
        return Err(Error::Audio(format!(
            "unsupported codec: sphere sample_coding `{coding}`; decompress first"
        )));
    }
    if width != 2 {
        return Err(Error::Audio(format!(
            "unsupported codec: {}-bit sphere samples",
            width * 8
        )));
    }
    let rate = rate.ok_or_else(|| bad("missing sample_rate"))?;
    let body = &bytes[header_len..];
    let available = body.len() / (2 * channels.max(1));
    let frames = count.unwrap_or(available);
    if frames > available {
        return Err(Error::Audio(format!(
            "sphere data truncated: header declares {frames} samples, file holds {available}"
        )));
    }
    let interleaved = body[..frames * channels * 2]
        .chunks_exact(2)
        .map(|b| {
            let v = if big_endian {
                i16::from_be_bytes([b[0], b[1]])
            } else {
                i16::from_le_bytes([b[0], b[1]])
            };
            f32::from(v) / 32768.0
        })
        .collect();
    AudioBuffer::new(downmix(interleaved, channels), rate)
}

/// Writes 16-bit PCM mono.
pub fn write_wav(path: &Path, audio: &AudioBuffer) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: audio.sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let io = |e: hound::Error| Error::Audio(format!("writing {}: {e}", path.display()));
    let mut w = WavWriter::create(path, spec).map_err(io)?;
    for &s in &audio.samples {
        let v = (f64::from(s) * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        w.write_sample(v).map_err(io)?;
    }
    w.finalize().map_err(io)
}

// SPDX-License-Identifier: MIT OR Apache-2.0

//! Behavioral experiments: stimulus manifests, transcription judging,
//! compensation rates, bigram frequencies and rank correlation.

mod bigrams;
mod experiment;
mod items;
mod judge;
mod stats;

pub use bigrams::{bigram_count, count_pairs, normalize_line, BigramCounter, BigramMode, LooseConfig};
pub use experiment::{
    analyze_item, exp1_pair_counts, judge_transcripts, run_items, summarize, underlying_prob, write_conditions_csv,
    write_items_csv, CompensationReport, ConditionSummary, ItemResult, PairCounts, ProbSummary, SpearmanSummary,
    SummaryOptions,
};
pub use items::{builtin_items, exp2_records, exp3_records, random_pairing, stimulus_plans, SentenceItem};
pub use judge::{edit_distance, judge_compensation, AnchorRule, Judgement, Verdict};
pub use stats::{mean_sd, permutation_p, ranks, spearman_rho, wilson_interval, Spearman};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::Vocab;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Viable,
    Unviable,
    Control,
}

impl Condition {
    pub fn name(self) -> &'static str {
        match self {
            Condition::Viable => "viable",
            Condition::Unviable => "unviable",
            Condition::Control => "control",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ContextType {
    #[serde(rename = "neutral")]
    Neutral,
    #[serde(rename = "biasing")]
    Biasing,
    #[serde(rename = "random")]
    Random,
    #[serde(rename = "n/a")]
    NotApplicable,
}

impl ContextType {
    pub fn name(self) -> &'static str {
        match self {
            ContextType::Neutral => "neutral",
            ContextType::Biasing => "biasing",
            ContextType::Random => "random",
            ContextType::NotApplicable => "n/a",
        }
    }
}

/// One stimulus of a behavioral experiment.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StimulusRecord {
    pub id: String,
    pub audio_path: String,
    pub experiment: u8,
    pub condition: Condition,
    pub context_type: ContextType,
    pub target_word: String,
    pub surface_word: String,
    pub underlying_char: char,
    pub surface_char: char,
    pub context_word: String,
    pub carrier_id: String,
}

impl StimulusRecord {
    pub fn validate(&self, vocab: Option<&Vocab>) -> Result<()> {
        let bad = |m: String| Err(Error::Dataset(format!("stimulus {}: {m}", self.id)));
        if self.underlying_char.eq_ignore_ascii_case(&self.surface_char) {
            return bad("underlying and surface characters coincide".into());
        }
        if self.target_word.is_empty() || self.surface_word.is_empty() || self.context_word.is_empty() {
            return bad("empty word".into());
        }
        if !(1..=3).contains(&self.experiment) {
            return bad(format!("experiment {} outside 1..=3", self.experiment));
        }
        if let Some(v) = vocab {
            for c in [self.underlying_char, self.surface_char] {
                if v.index_of(&c.to_string()).is_none() {
                    return bad(format!("character {c:?} not in vocabulary"));
                }
            }
        }
        Ok(())
    }

    /// Assimilation from /n/ to a velar nasal, spelled with two characters.
    pub fn is_velar_nasal(&self) -> bool {
        self.underlying_char.eq_ignore_ascii_case(&'N') && self.surface_char.eq_ignore_ascii_case(&'G')
    }
}

/// Reads a manifest as CSV, or as a JSON list when the extension is `.json`.
pub fn load_manifest(path: &Path) -> Result<Vec<StimulusRecord>> {
    let text = std::fs::read_to_string(path)?;
    let records = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        serde_json::from_str(&text)?
    } else {
        parse_manifest_csv(&text).map_err(|e| match e {
            Error::Parse { line, msg, .. } => Error::Parse {
                path: path.to_path_buf(),
                line,
                msg,
            },
            other => other,
        })?
    };
    for r in &records {
        r.validate(None)?;
    }
    Ok(records)
}

pub fn parse_manifest_csv(text: &str) -> Result<Vec<StimulusRecord>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    rdr.deserialize()
        .map(|r| {
            r.map_err(|e| Error::Parse {
                path: "<manifest>".into(),
                line: e.position().map_or(0, |p| p.line() as usize),
                msg: e.to_string(),
            })
        })
        .collect()
}

pub fn write_manifest_csv<W: std::io::Write>(w: W, records: &[StimulusRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in records {
        out.serialize(r).map_err(crate::intervention::csv_err)?;
    }
    out.flush()?;
    Ok(())
}

/// Experiment 1 manifest: 16 target words × 3 conditions × 3 carriers.
pub fn exp1_manifest() -> Vec<StimulusRecord> {
    parse_manifest_csv(include_str!("../../data/exp1_manifest.csv")).expect("bundled manifest parses")
}

/// Transcriptions of the Experiment 1 word pairs as published, keyed by
/// stimulus id.
pub fn exp1_published_transcripts() -> std::collections::BTreeMap<String, String> {
    let mut rdr = csv::Reader::from_reader(include_str!("../../data/exp1_transcripts.csv").as_bytes());
    rdr.records()
        .map(|r| {
            let r = r.expect("bundled transcripts parse");
            (r[0].to_string(), r[1].to_string())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_exp1_manifest_shape() {
        let m = exp1_manifest();
        assert_eq!(m.len(), 144);
        for c in [Condition::Viable, Condition::Unviable, Condition::Control] {
            assert_eq!(m.iter().filter(|r| r.condition == c).count(), 48);
        }
        let targets: std::collections::BTreeSet<_> = m.iter().map(|r| r.target_word.as_str()).collect();
        assert_eq!(targets.len(), 16);
        let v = crate::ctc::tests::vocab();
        for r in &m {
            r.validate(Some(&v)).unwrap();
        }
        assert_eq!(
            m.iter()
                .filter(|r| r.is_velar_nasal() && r.condition == Condition::Viable)
                .count(),
            9
        );
        let t = exp1_published_transcripts();
        assert!(m.iter().all(|r| t.contains_key(&r.id)));
    }

    #[test]
    fn manifest_round_trips() {
        let m = exp1_manifest();
        let mut buf = Vec::new();
        write_manifest_csv(&mut buf, &m[..5]).unwrap();
        assert_eq!(parse_manifest_csv(std::str::from_utf8(&buf).unwrap()).unwrap(), m[..5]);
        let j = serde_json::to_string(&m[..2]).unwrap();
        assert!(j.contains("\"context_type\":\"n/a\""));
    }

    #[test]
    fn rejects_identical_characters() {
        let mut r = exp1_manifest().remove(0);
        r.surface_char = 'n';
        assert!(r.validate(None).is_err());
    }
}

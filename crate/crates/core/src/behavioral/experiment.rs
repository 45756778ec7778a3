// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::judge::{judge_compensation, AnchorRule, Judgement, Verdict};
use super::stats::{mean_sd, permutation_p, spearman_rho, wilson_interval};
use super::{BigramMode, Condition, ContextType, StimulusRecord};
use crate::audio::{load_for_model, AudioBuffer};
use crate::ctc::{critical_char_index, greedy_decode, CharAlignment};
use crate::engine::{ActivationStore, CaptureSelector, Checkpoint, Vocab};
use crate::error::{Error, Result};
use crate::intervention::csv_err;

/// Outcome for one stimulus. Failures are recorded in `error` rather than
/// aborting the batch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItemResult {
    pub id: String,
    pub experiment: u8,
    pub condition: Condition,
    pub context_type: ContextType,
    pub target_word: String,
    pub context_word: String,
    pub underlying_char: char,
    pub surface_char: char,
    pub transcript: Option<String>,
    pub verdict: Option<Verdict>,
    pub judged_token: Option<String>,
    pub anchor: Option<AnchorRule>,
    pub critical_frame: Option<usize>,
    pub underlying_prob: Option<f64>,
    pub error: Option<String>,
}

impl ItemResult {
    fn new(r: &StimulusRecord) -> Self {
        Self {
            id: r.id.clone(),
            experiment: r.experiment,
            condition: r.condition,
            context_type: r.context_type,
            target_word: r.target_word.clone(),
            context_word: r.context_word.clone(),
            underlying_char: r.underlying_char,
            surface_char: r.surface_char,
            transcript: None,
            verdict: None,
            judged_token: None,
            anchor: None,
            critical_frame: None,
            underlying_prob: None,
            error: None,
        }
    }

    fn fail(mut self, e: &Error) -> Self {
        self.error = Some(e.to_string());
        self
    }

    fn judged(r: &StimulusRecord, transcript: &str) -> (Self, Option<Judgement>) {
        let mut out = Self::new(r);
        out.transcript = Some(transcript.to_string());
        match judge_compensation(transcript, r) {
            Ok(j) => {
                out.verdict = Some(j.verdict);
                out.judged_token = Some(j.token.clone());
                out.anchor = Some(j.anchor);
                (out, Some(j))
            }
            Err(e) => (out.fail(&e), None),
        }
    }

    fn is_velar_nasal(&self) -> bool {
        self.underlying_char.eq_ignore_ascii_case(&'N') && self.surface_char.eq_ignore_ascii_case(&'G')
    }
}

/// Critical frame of the judged token and the probability of the underlying
/// character there.
pub fn underlying_prob(
    store: &ActivationStore,
    vocab: &Vocab,
    align: &CharAlignment,
    judgement: &Judgement,
    record: &StimulusRecord,
) -> Result<(usize, f64)> {
    let word = align
        .word_spans
        .get(judgement.token_index)
        .ok_or_else(|| Error::Alignment(format!("no word {} in {:?}", judgement.token_index, align.transcript)))?;
    let prefix: String = word.word.chars().take(judgement.token_chars).collect();
    let ci = critical_char_index(&prefix, record.underlying_char, record.surface_char).ok_or_else(|| {
        Error::Alignment(format!(
            "{prefix:?} holds neither {:?} nor {:?}",
            record.underlying_char, record.surface_char
        ))
    })?;
    let frame = align.locate_char_frame(judgement.token_index, ci)?;
    let idx = vocab
        .index_of(&record.underlying_char.to_ascii_uppercase().to_string())
        .ok_or_else(|| {
            Error::Invalid(format!(
                "character {:?} is not in the vocabulary",
                record.underlying_char
            ))
        })?;
    if frame >= store.logits.rows() {
        return Err(Error::Alignment(format!(
            "frame {frame} outside 0..{}",
            store.logits.rows()
        )));
    }
    let p = softmax_entry(store.logits.row(frame), idx)
        .ok_or_else(|| Error::Invalid(format!("vocabulary index {idx} outside the logits")))?;
    Ok((frame, p))
}

/// `softmax(row)[i]` in f64.
fn softmax_entry(row: &[f32], i: usize) -> Option<f64> {
    let max = row.iter().fold(f32::NEG_INFINITY, |m, &v| m.max(v));
    let z: f64 = row.iter().map(|&v| f64::from(v - max).exp()).sum();
    row.get(i).map(|&v| f64::from(v - max).exp() / z)
}

/// Transcribes, judges and scores one stimulus. The activation store is
/// returned when the forward pass succeeded.
pub fn analyze_item(
    ckpt: &Checkpoint,
    record: &StimulusRecord,
    audio: &AudioBuffer,
    capture: &CaptureSelector,
) -> (ItemResult, Option<ActivationStore>) {
    let store = match ckpt.forward(audio, capture) {
        Ok(s) => s,
        Err(e) => return (ItemResult::new(record).fail(&e), None),
    };
    let align = match greedy_decode(&store.logits, &ckpt.config.vocab) {
        Ok(a) => a,
        Err(e) => return (ItemResult::new(record).fail(&e), Some(store)),
    };
    let (mut out, j) = ItemResult::judged(record, &align.transcript);
    if let Some(j) = j {
        match underlying_prob(&store, &ckpt.config.vocab, &align, &j, record) {
            Ok((frame, p)) => {
                out.critical_frame = Some(frame);
                out.underlying_prob = Some(p);
            }
            Err(e) => out = out.fail(&e),
        }
    }
    (out, Some(store))
}

/// Runs every record through the model; audio paths resolve against `root`.
pub fn run_items(ckpt: &Checkpoint, records: &[StimulusRecord], root: &Path) -> Vec<ItemResult> {
    records
        .par_iter()
        .map(|r| match load_for_model(&root.join(&r.audio_path)) {
            Ok(audio) => analyze_item(ckpt, r, &audio, &CaptureSelector::none()).0,
            Err(e) => ItemResult::new(r).fail(&e),
        })
        .collect()
}

/// Judges externally supplied transcripts keyed by record id.
pub fn judge_transcripts(records: &[StimulusRecord], transcripts: &BTreeMap<String, String>) -> Vec<ItemResult> {
    records
        .iter()
        .map(|r| match transcripts.get(&r.id) {
            Some(t) => ItemResult::judged(r, t).0,
            None => ItemResult::new(r).fail(&Error::Dataset(format!("no transcript for {}", r.id))),
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub experiment: u8,
    pub condition: Condition,
    pub context_type: ContextType,
    /// Judged items.
    pub n: usize,
    /// Compensated items.
    pub k: usize,
    pub rate: Option<f64>,
    pub wilson_low: Option<f64>,
    pub wilson_high: Option<f64>,
    /// Items left out because they could not be judged.
    pub excluded: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbSummary {
    pub experiment: u8,
    pub condition: Condition,
    pub context_type: ContextType,
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpearmanSummary {
    pub counts: BigramMode,
    pub rho: f64,
    pub df: usize,
    pub n_viable: usize,
    pub n_unviable: usize,
    pub p_value: f64,
    pub permutations: usize,
    pub seed: u64,
}

/// Bigram frequency of a target + context pair.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairCounts {
    pub target_word: String,
    pub context_word: String,
    pub strict: u64,
    pub loose: u64,
}

/// Published corpus counts for the Experiment 1 word pairs.
pub fn exp1_pair_counts() -> Vec<PairCounts> {
    csv::Reader::from_reader(include_str!("../../data/exp1_pairs.csv").as_bytes())
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .expect("bundled pair counts parse")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryOptions {
    pub z: f64,
    pub permutations: usize,
    pub seed: u64,
    /// Bigram counts for the rank correlation; none skips it.
    pub pair_counts: Option<Vec<PairCounts>>,
}

impl Default for SummaryOptions {
    fn default() -> Self {
        Self {
            z: 1.96,
            permutations: 10_000,
            seed: 0,
            pair_counts: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompensationReport {
    pub conditions: Vec<ConditionSummary>,
    pub underlying_prob: Vec<ProbSummary>,
    pub spearman: Vec<SpearmanSummary>,
    /// Analyses that could not be computed, with the reason.
    pub notes: Vec<String>,
    pub items: Vec<ItemResult>,
}

type GroupKey = (u8, Condition, ContextType);

/// Aggregates per-item results into rates, intervals and correlations.
pub fn summarize(items: Vec<ItemResult>, opts: &SummaryOptions) -> Result<CompensationReport> {
    let mut groups: BTreeMap<GroupKey, Vec<&ItemResult>> = BTreeMap::new();
    for it in &items {
        groups
            .entry((it.experiment, it.condition, it.context_type))
            .or_default()
            .push(it);
    }
    let mut conditions = Vec::new();
    let mut probs = Vec::new();
    for (&(experiment, condition, context_type), members) in &groups {
        let n = members.iter().filter(|m| m.verdict.is_some()).count();
        let k = members
            .iter()
            .filter(|m| m.verdict == Some(Verdict::Compensated))
            .count();
        let (rate, lo, hi) = if n > 0 {
            let (lo, hi) = wilson_interval(k, n, opts.z)?;
            (Some(k as f64 / n as f64), Some(lo), Some(hi))
        } else {
            (None, None, None)
        };
        conditions.push(ConditionSummary {
            experiment,
            condition,
            context_type,
            n,
            k,
            rate,
            wilson_low: lo,
            wilson_high: hi,
            excluded: members.len() - n,
        });
        let p: Vec<f64> = members.iter().filter_map(|m| m.underlying_prob).collect();
        if let Some((mean, sd)) = mean_sd(&p) {
            probs.push(ProbSummary {
                experiment,
                condition,
                context_type,
                n: p.len(),
                mean,
                sd,
            });
        }
    }

    let mut spearman = Vec::new();
    let mut notes = Vec::new();
    if let Some(counts) = &opts.pair_counts {
        let lookup: BTreeMap<(String, String), &PairCounts> = counts
            .iter()
            .map(|c| ((c.target_word.to_uppercase(), c.context_word.to_uppercase()), c))
            .collect();
        let eligible: Vec<(&ItemResult, &PairCounts, f64)> = items
            .iter()
            .filter(|i| i.experiment == 1 && i.condition != Condition::Control && !i.is_velar_nasal())
            .filter_map(|i| {
                let c = lookup.get(&(i.target_word.to_uppercase(), i.context_word.to_uppercase()))?;
                Some((i, *c, i.underlying_prob?))
            })
            .collect();
        for mode in [BigramMode::Loose, BigramMode::Strict] {
            let x: Vec<f64> = eligible.iter().map(|e| e.2).collect();
            let y: Vec<f64> = eligible
                .iter()
                .map(|e| match mode {
                    BigramMode::Strict => e.1.strict as f64,
                    BigramMode::Loose => e.1.loose as f64,
                })
                .collect();
            let res = spearman_rho(&x, &y).and_then(|s| Ok((s, permutation_p(&x, &y, opts.permutations, opts.seed)?)));
            match res {
                Ok((s, p)) => spearman.push(SpearmanSummary {
                    counts: mode,
                    rho: s.rho,
                    df: s.df,
                    n_viable: eligible.iter().filter(|e| e.0.condition == Condition::Viable).count(),
                    n_unviable: eligible.iter().filter(|e| e.0.condition == Condition::Unviable).count(),
                    p_value: p,
                    permutations: opts.permutations,
                    seed: opts.seed,
                }),
                Err(e) => notes.push(format!("spearman ({mode:?} counts): {e}")),
            }
        }
    }
    Ok(CompensationReport {
        conditions,
        underlying_prob: probs,
        spearman,
        notes,
        items,
    })
}

pub fn write_items_csv<W: Write>(w: W, items: &[ItemResult]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for it in items {
        out.serialize(it).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_conditions_csv<W: Write>(w: W, conditions: &[ConditionSummary]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for c in conditions {
        out.serialize(c).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::behavioral::{exp1_manifest, exp1_published_transcripts};
    use crate::ctc::align_ids;
    use crate::tensor::Tensor;

    fn report() -> CompensationReport {
        let items = judge_transcripts(&exp1_manifest(), &exp1_published_transcripts());
        summarize(items, &SummaryOptions::default()).unwrap()
    }

    #[test]
    fn published_rates_and_intervals() {
        let r = report();
        assert_eq!(r.conditions.len(), 3);
        let by: BTreeMap<_, _> = r.conditions.iter().map(|c| (c.condition, c)).collect();
        assert_eq!((by[&Condition::Viable].k, by[&Condition::Viable].n), (36, 48));
        assert_eq!((by[&Condition::Unviable].k, by[&Condition::Unviable].n), (18, 48));
        assert_eq!((by[&Condition::Control].k, by[&Condition::Control].n), (46, 48));
        for c in &r.conditions {
            let rate = c.rate.unwrap();
            assert!(c.wilson_low.unwrap() <= rate && rate <= c.wilson_high.unwrap());
            let k = r
                .items
                .iter()
                .filter(|i| i.condition == c.condition && i.verdict == Some(Verdict::Compensated))
                .count();
            assert_eq!(k, c.k);
        }
        assert!(r.spearman.is_empty());
    }

    #[test]
    fn missing_transcripts_are_excluded_not_fatal() {
        let m = exp1_manifest();
        let mut t = exp1_published_transcripts();
        t.remove(&m[0].id);
        t.insert(m[1].id.clone(), "NO ANCHOR".into());
        let r = summarize(judge_transcripts(&m, &t), &SummaryOptions::default()).unwrap();
        let v = r.conditions.iter().find(|c| c.condition == Condition::Viable).unwrap();
        assert_eq!((v.n, v.excluded), (46, 2));
        assert!(r.items[0].error.as_deref().unwrap().contains("no transcript"));
    }

    #[test]
    fn spearman_uses_78_items() {
        let m = exp1_manifest();
        let mut items = judge_transcripts(&m, &exp1_published_transcripts());
        for (i, it) in items.iter_mut().enumerate() {
            it.underlying_prob = Some((i as f64 * 0.618).fract());
        }
        let opts = SummaryOptions {
            permutations: 200,
            pair_counts: Some(exp1_pair_counts()),
            ..SummaryOptions::default()
        };
        let r = summarize(items, &opts).unwrap();
        assert_eq!(r.spearman.len(), 2);
        for s in &r.spearman {
            assert_eq!((s.n_viable, s.n_unviable, s.df), (39, 39, 76));
        }
        assert_eq!(r.spearman[0].counts, BigramMode::Loose);
    }

    #[test]
    fn pair_counts_cover_manifest() {
        let counts = exp1_pair_counts();
        assert_eq!(counts.len(), 48);
        let gm = counts
            .iter()
            .find(|c| c.target_word == "GREAT" && c.context_word == "MATCH")
            .unwrap();
        assert_eq!((gm.strict, gm.loose), (40, 43));
        assert!(counts.iter().all(|c| c.strict <= c.loose));
    }

    #[test]
    fn underlying_prob_reads_the_critical_frame() {
        let v = crate::ctc::tests::vocab();
        let enc = |s: &str| -> Vec<usize> {
            s.chars()
                .map(|c| match c {
                    '_' => 0,
                    ' ' => 4,
                    c => v.index_of(&c.to_string()).unwrap(),
                })
                .collect()
        };
        let frames = enc("_TAAM__ _BELT_");
        let align = align_ids(frames.clone(), &v);
        let mut logits = Tensor::zeros(vec![frames.len(), v.len()]);
        let n = v.index_of("N").unwrap();
        logits.row_mut(4)[n] = 30.0;
        let store = ActivationStore {
            logits,
            ..Default::default()
        };
        let rec = exp1_manifest().into_iter().find(|r| r.id == "e1-tan-belt-c1").unwrap();
        let j = judge_compensation(&align.transcript, &rec).unwrap();
        assert_eq!(j.verdict, Verdict::Surface);
        let (frame, p) = underlying_prob(&store, &v, &align, &j, &rec).unwrap();
        assert_eq!(frame, 4);
        assert!(p > 0.999_999);
        // uniform row elsewhere
        let mut flat = store.clone();
        flat.logits.row_mut(4)[n] = 0.0;
        let (_, p) = underlying_prob(&flat, &v, &align, &j, &rec).unwrap();
        assert!((p - 1.0 / v.len() as f64).abs() < 1e-12);
    }
}

// SPDX-License-Identifier: MIT OR Apache-2.0

//! Sentence-level stimuli for the context experiments.
//!
//! Recordings are expected under a common root as
//! `sentences/{item:02}_{viable|unviable}.wav` (target sentence) and
//! `contexts/{item:02}.wav` (biasing context sentence). Assembled stimuli are
//! written to `exp{2,3}/{id}.wav`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Condition, ContextType, StimulusRecord};
use crate::audio::AssemblyPlan;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceItem {
    pub item: u32,
    pub target_word: String,
    pub surface_word: String,
    pub underlying_char: char,
    pub surface_char: char,
    pub context_sentence: String,
    /// Target sentence up to and including the assimilated word.
    pub target_prefix: String,
    pub viable_continuation: String,
    pub unviable_continuation: String,
}

impl SentenceItem {
    fn continuation(&self, c: Condition) -> &str {
        match c {
            Condition::Unviable => &self.unviable_continuation,
            _ => &self.viable_continuation,
        }
    }

    /// The word right after the assimilated one.
    pub fn context_word(&self, c: Condition) -> String {
        self.continuation(c)
            .split_whitespace()
            .next()
            .unwrap_or("")
            .chars()
            .filter(|ch| ch.is_alphanumeric() || *ch == '\'')
            .collect::<String>()
            .to_uppercase()
    }

    pub fn sentence(&self, c: Condition) -> String {
        format!("{} {}", self.target_prefix, self.continuation(c))
    }

    fn sentence_path(&self, c: Condition) -> String {
        format!("sentences/{:02}_{}.wav", self.item, c.name())
    }

    fn context_path(&self) -> String {
        format!("contexts/{:02}.wav", self.item)
    }
}

/// The 38 items of the context experiments.
pub fn builtin_items() -> Vec<SentenceItem> {
    serde_json::from_str(include_str!("../../data/exp23_items.json")).expect("bundled items parse")
}

/// A seeded permutation without fixed points: entry `i` is the item whose
/// context sentence precedes item `i`'s target in the random condition.
pub fn random_pairing(n: usize, seed: u64) -> Result<Vec<usize>> {
    if n < 2 {
        return Err(Error::Invalid(format!(
            "random pairing needs at least 2 items, got {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p: Vec<usize> = (0..n).collect();
    loop {
        p.shuffle(&mut rng);
        if p.iter().enumerate().all(|(i, &j)| i != j) {
            return Ok(p);
        }
    }
}

const CONDITIONS: [Condition; 2] = [Condition::Viable, Condition::Unviable];

fn record(experiment: u8, it: &SentenceItem, cond: Condition, ctx: ContextType, carrier: String) -> StimulusRecord {
    let target = it.target_word.to_lowercase();
    let id = match experiment {
        2 => format!("e2-{:02}-{target}-{}", it.item, cond.name()),
        _ => format!("e3-{:02}-{target}-{}-{}", it.item, cond.name(), ctx.name()),
    };
    StimulusRecord {
        audio_path: format!("exp{experiment}/{id}.wav"),
        id,
        experiment,
        condition: cond,
        context_type: ctx,
        target_word: it.target_word.clone(),
        surface_word: it.surface_word.clone(),
        underlying_char: it.underlying_char,
        surface_char: it.surface_char,
        context_word: it.context_word(cond),
        carrier_id: carrier,
    }
}

/// Records paired with the assembly plan that produces each one's audio.
/// Plan paths are relative to the recordings root.
pub fn stimulus_plans(
    experiment: u8,
    items: &[SentenceItem],
    seed: u64,
) -> Result<Vec<(StimulusRecord, AssemblyPlan)>> {
    let mut out = Vec::new();
    match experiment {
        2 => {
            for it in items {
                for c in CONDITIONS {
                    let r = record(2, it, c, ContextType::Neutral, it.item.to_string());
                    out.push((r, AssemblyPlan::single(it.sentence_path(c))));
                }
            }
        }
        3 => {
            let pairing = random_pairing(items.len(), seed)?;
            for (i, it) in items.iter().enumerate() {
                for c in CONDITIONS {
                    let target = it.sentence_path(c);
                    let other = &items[pairing[i]];
                    out.push((
                        record(3, it, c, ContextType::Neutral, it.item.to_string()),
                        AssemblyPlan::single(&target),
                    ));
                    out.push((
                        record(3, it, c, ContextType::Biasing, it.item.to_string()),
                        AssemblyPlan::pair(it.context_path(), &target),
                    ));
                    out.push((
                        record(3, it, c, ContextType::Random, format!("{}+ctx{}", it.item, other.item)),
                        AssemblyPlan::pair(other.context_path(), &target),
                    ));
                }
            }
        }
        e => {
            return Err(Error::Invalid(format!(
                "sentence stimuli exist for experiments 2 and 3, not {e}"
            )))
        }
    }
    Ok(out)
}

pub fn exp2_records(items: &[SentenceItem]) -> Result<Vec<StimulusRecord>> {
    Ok(stimulus_plans(2, items, 0)?.into_iter().map(|p| p.0).collect())
}

pub fn exp3_records(items: &[SentenceItem], seed: u64) -> Result<Vec<StimulusRecord>> {
    Ok(stimulus_plans(3, items, seed)?.into_iter().map(|p| p.0).collect())
}

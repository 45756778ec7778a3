// SPDX-License-Identifier: MIT OR Apache-2.0

//! Classify a transcription of a target + context pair as compensated,
//! surface or other.
//!
//! The context word is located first and the target is the token before it.
//! ASR output often splits or fuses words, so the anchor search widens in
//! three passes; the first pass with any hit wins.

use serde::{Deserialize, Serialize};

use super::StimulusRecord;
use crate::error::{Error, Result};

/// Inflectional endings tolerated on a judged token.
const SUFFIXES: [&str; 4] = ["S", "'S", "D", "ED"];
/// Shortest truncated context that still counts as a hit.
const MIN_PARTIAL: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Compensated,
    Surface,
    Other,
}

impl Verdict {
    pub fn name(self) -> &'static str {
        match self {
            Verdict::Compensated => "compensated",
            Verdict::Surface => "surface",
            Verdict::Other => "other",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorRule {
    Exact,
    EditDistance,
    Fuzzy,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgement {
    pub verdict: Verdict,
    /// The judged form of the target word, uppercased.
    pub token: String,
    /// Whitespace-token index of the judged word in the transcript.
    pub token_index: usize,
    /// Characters of that token belonging to the target; shorter than the
    /// token when the context is fused onto it.
    pub token_chars: usize,
    pub anchor: AnchorRule,
}

/// Levenshtein distance over chars.
pub fn edit_distance(a: &str, b: &str) -> usize {
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.chars().enumerate() {
        cur[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn matches_word(token: &str, word: &str) -> bool {
    token == word || SUFFIXES.iter().any(|s| token.strip_prefix(word) == Some(s))
}

struct Anchor {
    /// Token holding the target, or the fused target prefix.
    target_token: usize,
    target_chars: Option<usize>,
    rule: AnchorRule,
}

/// `rest` agrees with `context` up to the shorter of the two, within
/// `tolerance` edits; anything after a full context is ignored.
fn fuzzy_rest_matches(rest: &str, context: &str, tolerance: usize) -> bool {
    let r: Vec<char> = rest.chars().collect();
    let c: Vec<char> = context.chars().collect();
    let m = r.len().min(c.len());
    if m < MIN_PARTIAL.min(c.len()) {
        return false;
    }
    // an edit on a truncated context must still cover nearly all of it
    if tolerance > 0 && (m < MIN_PARTIAL + 1 || m + 1 < c.len()) {
        return false;
    }
    let a: String = r[..m].iter().collect();
    let b: String = c[..m].iter().collect();
    edit_distance(&a, &b) <= tolerance
}

fn find_anchor(tokens: &[String], context: &str) -> Option<Anchor> {
    let simple = |rule: AnchorRule, hit: &dyn Fn(&str) -> bool| {
        (1..tokens.len()).find(|&i| hit(&tokens[i])).map(|i| Anchor {
            target_token: i - 1,
            target_chars: None,
            rule,
        })
    };
    if let Some(a) = simple(AnchorRule::Exact, &|t| t == context) {
        return Some(a);
    }
    if let Some(a) = simple(AnchorRule::EditDistance, &|t| edit_distance(t, context) <= 1) {
        return Some(a);
    }
    for tolerance in 0..=1 {
        for i in 0..tokens.len() {
            for span in 1..=2.min(tokens.len() - i) {
                let joined: String = tokens[i..i + span].concat();
                let first_len = tokens[i].len();
                for (o, _) in joined.char_indices() {
                    // a split inside the first token fuses the target onto the context
                    if (o == 0 && i == 0) || o >= first_len {
                        continue;
                    }
                    if fuzzy_rest_matches(&joined[o..], context, tolerance) {
                        return Some(if o == 0 {
                            Anchor {
                                target_token: i - 1,
                                target_chars: None,
                                rule: AnchorRule::Fuzzy,
                            }
                        } else {
                            Anchor {
                                target_token: i,
                                target_chars: Some(o),
                                rule: AnchorRule::Fuzzy,
                            }
                        });
                    }
                }
            }
        }
    }
    None
}

/// Judges one transcription. Fails with [`Error::Alignment`] when the
/// context word cannot be found; such items are excluded from rates.
pub fn judge_compensation(transcript: &str, record: &StimulusRecord) -> Result<Judgement> {
    let tokens: Vec<String> = transcript.split_whitespace().map(str::to_uppercase).collect();
    let context = record.context_word.to_uppercase();
    let anchor = find_anchor(&tokens, &context).ok_or_else(|| {
        Error::Alignment(format!(
            "context word {context:?} not found in transcript {transcript:?}"
        ))
    })?;
    let full = &tokens[anchor.target_token];
    let chars = anchor.target_chars.unwrap_or(full.len());
    let token = full[..chars].to_string();
    let verdict = if matches_word(&token, &record.target_word.to_uppercase()) {
        Verdict::Compensated
    } else if matches_word(&token, &record.surface_word.to_uppercase()) {
        Verdict::Surface
    } else {
        Verdict::Other
    };
    Ok(Judgement {
        verdict,
        token,
        token_index: anchor.target_token,
        token_chars: chars,
        anchor: anchor.rule,
    })
}

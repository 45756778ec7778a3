// SPDX-License-Identifier: MIT OR Apache-2.0

//! Word-pair frequencies over a transcript corpus.
//!
//! Lines are normalized to uppercase tokens of `[A-Z0-9']`. Matching is per
//! line over adjacent tokens, so pairs never straddle two transcripts.
//!
//! Strict mode is the regex `\bW1 W2\b` over whole tokens. Loose mode is, with
//! the default [`LooseConfig`],
//!
//! ```text
//! \bW1(?:'S|S|'|ES)? W2[A-Z0-9']*
//! ```
//!
//! and with `left_unbounded` the leading `\b` is dropped, so `CLEAN LINEN`
//! also counts towards `LEAN LINE`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BigramMode {
    Strict,
    Loose,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LooseConfig {
    /// Endings allowed on the first word.
    pub first_suffixes: Vec<String>,
    /// Let the second word continue with further word characters.
    pub extend_second: bool,
    /// Let the first word be the tail of a longer token.
    pub left_unbounded: bool,
}

impl Default for LooseConfig {
    fn default() -> Self {
        Self {
            first_suffixes: ["'S", "S", "'", "ES"].map(String::from).to_vec(),
            extend_second: true,
            left_unbounded: false,
        }
    }
}

impl LooseConfig {
    /// The equivalent single-line regex, for reports.
    pub fn pattern(&self, w1: &str, w2: &str) -> String {
        let alts: Vec<String> = self.first_suffixes.iter().map(|s| regex_escape(s)).collect();
        format!(
            "{}{}(?:{})? {}{}",
            if self.left_unbounded { "" } else { r"\b" },
            regex_escape(w1),
            alts.join("|"),
            regex_escape(w2),
            if self.extend_second { "[A-Z0-9']*" } else { r"\b" },
        )
    }

    fn first_matches(&self, token: &str, w1: &str) -> bool {
        let stem_ok = |rest: &str| rest.is_empty() || self.first_suffixes.iter().any(|s| s == rest);
        if self.left_unbounded {
            // any occurrence of w1 whose remainder is an allowed ending
            token.match_indices(w1).any(|(i, _)| stem_ok(&token[i + w1.len()..]))
        } else {
            token.strip_prefix(w1).is_some_and(stem_ok)
        }
    }

    fn second_matches(&self, token: &str, w2: &str) -> bool {
        if self.extend_second {
            token.starts_with(w2)
        } else {
            token == w2
        }
    }
}

fn regex_escape(s: &str) -> String {
    regex::escape(s)
}

fn is_utterance_id(tok: &str) -> bool {
    tok.contains('-')
        && tok
            .split('-')
            .all(|p| !p.is_empty() && p.bytes().all(|b| b.is_ascii_digit()))
}

/// Uppercases, maps anything outside `[A-Z0-9']` to a space and drops a
/// leading LibriSpeech utterance id.
pub fn normalize_line(line: &str) -> String {
    let line = line.trim_start();
    let body = match line.split_once(char::is_whitespace) {
        Some((id, rest)) if is_utterance_id(id) => rest,
        None if is_utterance_id(line) => "",
        _ => line,
    };
    let mapped: String = body
        .chars()
        .flat_map(char::to_uppercase)
        .map(|c| if c.is_ascii_alphanumeric() || c == '\'' { c } else { ' ' })
        .collect();
    mapped.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn norm_word(w: &str) -> Result<String> {
    let n = normalize_line(w);
    if n.is_empty() || n.contains(' ') {
        return Err(Error::Invalid(format!(
            "bigram word {w:?} must be a single non-empty token"
        )));
    }
    Ok(n)
}

/// Counts word pairs over many lines in one pass.
pub struct BigramCounter {
    pairs: Vec<(String, String)>,
    loose: LooseConfig,
    counts: Vec<(u64, u64)>,
}

impl BigramCounter {
    pub fn new(pairs: &[(&str, &str)], loose: LooseConfig) -> Result<Self> {
        let pairs = pairs
            .iter()
            .map(|(a, b)| Ok((norm_word(a)?, norm_word(b)?)))
            .collect::<Result<Vec<_>>>()?;
        let counts = vec![(0, 0); pairs.len()];
        Ok(Self { pairs, loose, counts })
    }

    /// Adds one raw transcript line.
    pub fn feed(&mut self, line: &str) {
        let norm = normalize_line(line);
        let toks: Vec<&str> = norm.split(' ').filter(|t| !t.is_empty()).collect();
        for w in toks.windows(2) {
            for ((w1, w2), c) in self.pairs.iter().zip(self.counts.iter_mut()) {
                if w[0] == w1 && w[1] == w2 {
                    c.0 += 1;
                }
                if self.loose.second_matches(w[1], w2) && self.loose.first_matches(w[0], w1) {
                    c.1 += 1;
                }
            }
        }
    }

    /// `(strict, loose)` per pair, in construction order.
    pub fn counts(&self) -> &[(u64, u64)] {
        &self.counts
    }
}

/// Counts `(strict, loose)` for every pair over `corpus` (one transcript per line).
pub fn count_pairs(corpus: &str, pairs: &[(&str, &str)], loose: &LooseConfig) -> Result<Vec<(u64, u64)>> {
    let mut c = BigramCounter::new(pairs, loose.clone())?;
    corpus.lines().for_each(|l| c.feed(l));
    Ok(c.counts)
}

pub fn bigram_count(corpus: &str, w1: &str, w2: &str, mode: BigramMode) -> Result<u64> {
    let (s, l) = count_pairs(corpus, &[(w1, w2)], &LooseConfig::default())?[0];
    Ok(match mode {
        BigramMode::Strict => s,
        BigramMode::Loose => l,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use regex::Regex;

    const CORPUS: &str = "\
84-121123-0000 IT WAS HIS OWN PLAN AND HIS OWN PLANNING
84-121123-0001 THE OWN'S PLAN OWNS PLANS
1-2-3 A GREAT MATCH, A GREAT MATCHES, GREAT
MATCH ACROSS LINES DOES NOT COUNT
clean linen and a lean line
";

    #[test]
    fn normalization() {
        assert_eq!(
            normalize_line("84-121123-0000 Hello, world's end!"),
            "HELLO WORLD'S END"
        );
        assert_eq!(normalize_line("no-id here"), "NO ID HERE");
        assert_eq!(normalize_line("   "), "");
    }

    #[test]
    fn strict_and_loose() {
        assert_eq!(bigram_count(CORPUS, "own", "plan", BigramMode::Strict).unwrap(), 1);
        assert_eq!(bigram_count(CORPUS, "own", "plan", BigramMode::Loose).unwrap(), 4);
        assert_eq!(bigram_count(CORPUS, "great", "match", BigramMode::Strict).unwrap(), 1);
        assert_eq!(bigram_count(CORPUS, "great", "match", BigramMode::Loose).unwrap(), 2);
        assert_eq!(bigram_count(CORPUS, "lean", "line", BigramMode::Loose).unwrap(), 1);
        let unbounded = LooseConfig {
            left_unbounded: true,
            ..LooseConfig::default()
        };
        assert_eq!(
            count_pairs(CORPUS, &[("lean", "line")], &unbounded).unwrap(),
            vec![(1, 2)]
        );
        assert!(bigram_count(CORPUS, "", "x", BigramMode::Strict).is_err());
        assert!(bigram_count(CORPUS, "two words", "x", BigramMode::Strict).is_err());
    }

    /// Token matching agrees with the documented regexes (overlapping search).
    fn regex_count(text: &str, pattern: &str) -> u64 {
        let re = Regex::new(pattern).unwrap();
        let mut n = 0;
        for line in text.lines() {
            let line = normalize_line(line);
            let padded = format!(" {line} ");
            for start in 0..padded.len() {
                if let Some(m) = re.find_at(&padded, start) {
                    if m.start() == start {
                        let end_ok = padded[m.end()..].starts_with(' ');
                        if end_ok {
                            n += 1;
                        }
                    }
                }
            }
        }
        n
    }

    proptest! {
        #[test]
        fn strict_never_exceeds_loose(
            words in prop::collection::vec(prop::sample::select(vec!["A", "AS", "A'S", "B", "BB", "BA", "AB", "ES", "AES"]), 0..30),
            w1 in prop::sample::select(vec!["A", "B", "AB"]),
            w2 in prop::sample::select(vec!["A", "B", "BA"]),
            unbounded: bool,
        ) {
            let text = words.join(" ");
            let cfg = LooseConfig { left_unbounded: unbounded, ..LooseConfig::default() };
            let (s, l) = count_pairs(&text, &[(w1, w2)], &cfg).unwrap()[0];
            prop_assert!(s <= l);
            // the loose pattern must end on a token boundary
            let pat = cfg.pattern(w1, w2).replace(r"\b", " ");
            let pat = if unbounded { format!(r" [A-Z0-9']*{}", pat) } else { pat };
            prop_assert_eq!(regex_count(&text, &pat), l);
            prop_assert_eq!(regex_count(&text, &format!(" {w1} {w2}")), s);
        }
    }
}

// SPDX-License-Identifier: MIT OR Apache-2.0

//! Interchange interventions: replay a target run with component activations
//! taken from a source run, and measure the underlying-vs-surface probability
//! difference at the target's critical frame.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::AudioBuffer;
use crate::ctc::{critical_char_index, greedy_decode, CharAlignment, FrameSpan, Granularity};
use crate::engine::{ActivationStore, CaptureSelector, Checkpoint, PatchPlan, RowPatch, Vocab};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentKind {
    HeadOutput,
    HeadValue,
    MlpOutput,
}

impl ComponentKind {
    pub fn name(self) -> &'static str {
        match self {
            ComponentKind::HeadOutput => "head_output",
            ComponentKind::HeadValue => "head_value",
            ComponentKind::MlpOutput => "mlp_output",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterventionSpec {
    pub layer: usize,
    pub component: ComponentKind,
    #[serde(default)]
    pub head: Option<usize>,
    pub frames: FrameSpan,
    pub source_frames: FrameSpan,
}

impl InterventionSpec {
    pub fn validate(&self, ckpt: &Checkpoint, target_frames: usize, source_frames: usize) -> Result<()> {
        let cfg = &ckpt.config;
        let bad = |m: String| Err(Error::Intervention(m));
        if self.layer == 0 || self.layer > cfg.num_layers {
            return bad(format!("layer {} outside 1..={}", self.layer, cfg.num_layers));
        }
        match (self.component, self.head) {
            (ComponentKind::MlpOutput, Some(_)) => return bad("mlp_output takes no head".into()),
            (ComponentKind::MlpOutput, None) => {}
            (_, None) => return bad(format!("{} requires a head", self.component.name())),
            (_, Some(h)) if h >= cfg.num_heads => return bad(format!("head {h} outside 0..{}", cfg.num_heads)),
            _ => {}
        }
        if self.frames.first > self.frames.last || self.source_frames.first > self.source_frames.last {
            return bad("empty frame span".into());
        }
        if self.frames.len() != self.source_frames.len() {
            return bad(format!(
                "target span has {} frames, source span {}",
                self.frames.len(),
                self.source_frames.len()
            ));
        }
        if self.frames.last >= target_frames {
            return bad(format!(
                "target span ends at {} of {target_frames} frames",
                self.frames.last
            ));
        }
        if self.source_frames.last >= source_frames {
            return bad(format!(
                "source span ends at {} of {source_frames} frames",
                self.source_frames.last
            ));
        }
        Ok(())
    }
}

/// Reads a JSON list of specs.
pub fn parse_specs(json: &str) -> Result<Vec<InterventionSpec>> {
    Ok(serde_json::from_str(json)?)
}

fn source_rows(source: &ActivationStore, spec: &InterventionSpec) -> Result<Tensor> {
    let missing = |what: &str| {
        Error::Intervention(format!(
            "source run lacks captured {what} for layer {}; capture it first",
            spec.layer
        ))
    };
    let full = match (spec.component, spec.head) {
        (ComponentKind::HeadOutput, Some(h)) => source
            .head_out
            .get(&(spec.layer, h))
            .ok_or_else(|| missing("head outputs"))?,
        (ComponentKind::HeadValue, Some(h)) => source
            .value
            .get(&(spec.layer, h))
            .ok_or_else(|| missing("value vectors"))?,
        (ComponentKind::MlpOutput, None) => source.mlp_out.get(&spec.layer).ok_or_else(|| missing("MLP outputs"))?,
        _ => return Err(Error::Intervention("head/component mismatch".into())),
    };
    if spec.source_frames.last >= full.rows() {
        return Err(Error::Intervention(format!(
            "source span ends at {} of {} frames",
            spec.source_frames.last,
            full.rows()
        )));
    }
    full.slice_rows(spec.source_frames.first, spec.source_frames.last + 1)
}

/// Converts specs into row replacements drawn from `source`.
pub fn build_patch_plan(
    ckpt: &Checkpoint,
    source: &ActivationStore,
    specs: &[InterventionSpec],
    target_frames: usize,
) -> Result<PatchPlan> {
    let mut plan = PatchPlan::default();
    for spec in specs {
        spec.validate(ckpt, target_frames, source.num_frames())?;
        let patch = RowPatch {
            head: spec.head,
            frames: spec.frames.frames().collect(),
            rows: source_rows(source, spec)?,
        };
        let lp = plan.layer_mut(spec.layer);
        match spec.component {
            ComponentKind::HeadOutput => lp.head_out.push(patch),
            ComponentKind::HeadValue => lp.values.push(patch),
            ComponentKind::MlpOutput => lp.mlp_out.push(patch),
        }
    }
    Ok(plan)
}

/// Full forward pass on `target` with the listed components replaced.
pub fn run_with_interventions(
    ckpt: &Checkpoint,
    target: &AudioBuffer,
    source: &ActivationStore,
    specs: &[InterventionSpec],
    capture: &CaptureSelector,
) -> Result<ActivationStore> {
    let frames = ckpt.config.frame_count(target.samples.len())?;
    let plan = build_patch_plan(ckpt, source, specs, frames)?;
    ckpt.forward_patched(target, capture, &plan)
}

fn token_index(vocab: &Vocab, ch: char) -> Result<usize> {
    let c = if ch == ' ' { "|".to_string() } else { ch.to_string() };
    vocab
        .index_of(&c)
        .ok_or_else(|| Error::Invalid(format!("character {ch:?} is not in the vocabulary")))
}

/// `p(underlying) − p(surface)` at `frame`, with the softmax taken in f64.
pub fn delta_p(store: &ActivationStore, vocab: &Vocab, frame: usize, underlying: char, surface: char) -> Result<f64> {
    let u = token_index(vocab, underlying)?;
    let s = token_index(vocab, surface)?;
    if frame >= store.logits.rows() {
        return Err(Error::Alignment(format!(
            "frame {frame} outside 0..{}",
            store.logits.rows()
        )));
    }
    let row = store.logits.row(frame);
    let max = row.iter().fold(f32::NEG_INFINITY, |m, &v| m.max(v));
    let z: f64 = row.iter().map(|&v| f64::from(v - max).exp()).sum();
    let p = |i: usize| f64::from(row[i] - max).exp() / z;
    Ok(p(u) - p(s))
}

/// Equal-length target/source spans: the longer one is trimmed
/// symmetrically around its centre.
pub fn correspond(target: FrameSpan, source: FrameSpan) -> (FrameSpan, FrameSpan) {
    let n = target.len().min(source.len());
    let trim = |s: FrameSpan| {
        let first = s.first + (s.len() - n) / 2;
        FrameSpan {
            first,
            last: first + n - 1,
        }
    };
    (trim(target), trim(source))
}

/// One intervention position: where to patch in the target and where to
/// read from in the source.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SweepPosition {
    pub name: String,
    pub target: FrameSpan,
    pub source: FrameSpan,
}

/// Which words of a stimulus pair carry the assimilation and its context.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairSetup {
    pub word_index: usize,
    pub context_index: usize,
    /// Character within the context word whose onset marks the context phone.
    pub context_char: usize,
    pub underlying: char,
    pub surface: char,
}

impl PairSetup {
    pub fn new(word_index: usize, underlying: char, surface: char) -> Self {
        Self {
            word_index,
            context_index: word_index + 1,
            context_char: 0,
            underlying,
            surface,
        }
    }

    fn critical_char(&self, align: &CharAlignment, which: &str) -> Result<usize> {
        let word = align
            .word_spans
            .get(self.word_index)
            .map(|w| w.word.as_str())
            .ok_or_else(|| {
                Error::Alignment(format!(
                    "{which} transcript {:?} has no word {}",
                    align.transcript, self.word_index
                ))
            })?;
        critical_char_index(word, self.underlying, self.surface).ok_or_else(|| {
            Error::Alignment(format!(
                "{which} word {word:?} contains neither {:?} nor {:?}",
                self.underlying, self.surface
            ))
        })
    }

    /// Target-run frame at which the assimilated consonant is emitted.
    pub fn critical_frame(&self, target: &CharAlignment) -> Result<usize> {
        target.locate_char_frame(self.word_index, self.critical_char(target, "target")?)
    }

    /// The six canonical positions, {assimilated, context} × {frame, phone, word}.
    pub fn canonical_positions(&self, target: &CharAlignment, source: &CharAlignment) -> Result<Vec<SweepPosition>> {
        let anchors = [
            (
                "assimilated",
                self.word_index,
                self.critical_char(target, "target")?,
                self.critical_char(source, "source")?,
            ),
            ("context", self.context_index, self.context_char, self.context_char),
        ];
        let mut out = Vec::with_capacity(6);
        for (label, word, t_char, s_char) in anchors {
            for g in Granularity::ALL {
                let t = target.span_from_granularity(word, t_char, g)?;
                let s = source.span_from_granularity(word, s_char, g)?;
                let (t, s) = correspond(t, s);
                out.push(SweepPosition {
                    name: format!("{label}_{}", g.name()),
                    target: t,
                    source: s,
                });
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepCell {
    pub position: String,
    pub layer: usize,
    pub component: ComponentKind,
    pub head: Option<usize>,
    pub delta_p: f64,
    pub flipped: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepResult {
    pub position: SweepPosition,
    pub critical_frame: usize,
    pub baseline_dp: f64,
    pub cells: Vec<SweepCell>,
}

/// What a sweep patches in each layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepKind {
    /// Every head output plus the MLP output.
    Outputs,
    /// Every head's value vectors.
    Values,
}

impl SweepKind {
    fn cells(self, layers: usize, heads: usize) -> Vec<(usize, ComponentKind, Option<usize>)> {
        let mut v = Vec::new();
        for layer in 1..=layers {
            let comp = match self {
                SweepKind::Outputs => ComponentKind::HeadOutput,
                SweepKind::Values => ComponentKind::HeadValue,
            };
            v.extend((0..heads).map(|h| (layer, comp, Some(h))));
            if self == SweepKind::Outputs {
                v.push((layer, ComponentKind::MlpOutput, None));
            }
        }
        v
    }
}

/// A decoded run with everything a sweep reads from it.
pub struct PreparedRun {
    pub store: ActivationStore,
    pub alignment: CharAlignment,
}

impl PreparedRun {
    pub fn new(ckpt: &Checkpoint, audio: &AudioBuffer) -> Result<Self> {
        let store = ckpt.forward(audio, &CaptureSelector::all())?;
        let alignment = greedy_decode(&store.logits, &ckpt.config.vocab)?;
        Ok(Self { store, alignment })
    }
}

/// Where and between which characters Δp is read.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Measure {
    pub critical_frame: usize,
    pub underlying: char,
    pub surface: char,
}

impl Measure {
    pub fn read(&self, store: &ActivationStore, vocab: &Vocab) -> Result<f64> {
        delta_p(store, vocab, self.critical_frame, self.underlying, self.surface)
    }
}

/// Runs one single-component intervention per sweep cell and position.
///
/// `target` must hold the baseline hidden states; each cell resumes the
/// forward pass from the patched layer.
pub fn sweep_components(
    ckpt: &Checkpoint,
    target: &ActivationStore,
    source: &ActivationStore,
    positions: &[SweepPosition],
    measure: Measure,
    kind: SweepKind,
) -> Result<Vec<SweepResult>> {
    let vocab = &ckpt.config.vocab;
    let baseline_dp = measure.read(target, vocab)?;
    let cells = kind.cells(ckpt.config.num_layers, ckpt.config.num_heads);
    let frames = target.num_frames();
    positions
        .iter()
        .map(|pos| {
            let results = cells
                .par_iter()
                .map(|&(layer, component, head)| {
                    let spec = InterventionSpec {
                        layer,
                        component,
                        head,
                        frames: pos.target,
                        source_frames: pos.source,
                    };
                    let plan = build_patch_plan(ckpt, source, std::slice::from_ref(&spec), frames)?;
                    let run = ckpt.resume(layer, target.layer_input(layer)?, &CaptureSelector::none(), &plan)?;
                    let dp = measure.read(&run, vocab)?;
                    Ok(SweepCell {
                        position: pos.name.clone(),
                        layer,
                        component,
                        head,
                        delta_p: dp,
                        flipped: dp > 0.0,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(SweepResult {
                position: pos.clone(),
                critical_frame: measure.critical_frame,
                baseline_dp,
                cells: results,
            })
        })
        .collect()
}

/// Writes sweep cells as CSV: position, layer, component, head, delta_p, flipped.
pub fn write_sweep_csv<W: Write>(w: W, results: &[SweepResult]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["position", "layer", "component", "head", "delta_p", "flipped"])
        .map_err(csv_err)?;
    for r in results {
        for c in &r.cells {
            out.write_record([
                c.position.clone(),
                c.layer.to_string(),
                c.component.name().to_string(),
                c.head.map(|h| h.to_string()).unwrap_or_default(),
                format!("{:.9}", c.delta_p),
                c.flipped.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Invalid(format!("csv: {e}"))
}

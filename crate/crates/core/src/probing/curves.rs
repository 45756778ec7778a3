// SPDX-License-Identifier: MIT OR Apache-2.0

//! Layerwise probe preference for the underlying phoneme at each stimulus's
//! critical frame.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::logistic::ProbeModel;
use crate::audio::load_for_model;
use crate::behavioral::{analyze_item, Condition, ItemResult, StimulusRecord, Verdict};
use crate::engine::{CaptureSelector, Checkpoint};
use crate::error::{Error, Result};
use crate::intervention::csv_err;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveGroup {
    Compensation,
    NoCompensation,
    Control,
}

impl CurveGroup {
    pub fn name(self) -> &'static str {
        match self {
            CurveGroup::Compensation => "compensation",
            CurveGroup::NoCompensation => "no_compensation",
            CurveGroup::Control => "control",
        }
    }

    /// Groups by the model's own transcription; unjudged items have none.
    pub fn of(item: &ItemResult) -> Option<Self> {
        let v = item.verdict?;
        Some(match (item.condition, v) {
            (Condition::Control, _) => CurveGroup::Control,
            (_, Verdict::Compensated) => CurveGroup::Compensation,
            _ => CurveGroup::NoCompensation,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub layer: usize,
    pub group: CurveGroup,
    pub mean_prob_underlying: f64,
    pub sem: f64,
    pub n: usize,
}

/// Per-stimulus probe outputs behind the curve table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub id: String,
    pub group: CurveGroup,
    pub critical_frame: usize,
    /// Indexed like the probes passed in.
    pub prob_underlying: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveReport {
    pub rows: Vec<CurveRow>,
    pub points: Vec<CurvePoint>,
    /// `(stimulus id, reason)` for every excluded stimulus.
    pub excluded: Vec<(String, String)>,
}

/// Mean and standard error per layer and group.
pub fn aggregate(points: &[CurvePoint], layers: &[usize]) -> Vec<CurveRow> {
    let mut by: BTreeMap<(usize, CurveGroup), Vec<f64>> = BTreeMap::new();
    for p in points {
        for (k, &layer) in layers.iter().enumerate() {
            by.entry((layer, p.group)).or_default().push(p.prob_underlying[k]);
        }
    }
    by.into_iter()
        .map(|((layer, group), v)| {
            let (mean, sd) = crate::behavioral::mean_sd(&v).unwrap_or((f64::NAN, 0.0));
            CurveRow {
                layer,
                group,
                mean_prob_underlying: mean,
                sem: sd / (v.len() as f64).sqrt(),
                n: v.len(),
            }
        })
        .collect()
}

/// Runs each stimulus, reads the hidden state at its critical frame and
/// applies the probe for every layer.
pub fn layerwise_curves(
    ckpt: &Checkpoint,
    probes: &[ProbeModel],
    records: &[StimulusRecord],
    audio_root: &Path,
) -> Result<CurveReport> {
    if probes.is_empty() {
        return Err(Error::Probe("no probes given".into()));
    }
    let layers: Vec<usize> = probes.iter().map(|p| p.layer).collect();
    if let Some(&l) = layers.iter().find(|&&l| l > ckpt.config.num_layers) {
        return Err(Error::Probe(format!(
            "probe layer {l} outside 0..={}",
            ckpt.config.num_layers
        )));
    }
    let outcomes: Vec<std::result::Result<CurvePoint, (String, String)>> = records
        .par_iter()
        .map(|r| {
            let fail = |e: String| (r.id.clone(), e);
            let audio = load_for_model(&audio_root.join(&r.audio_path)).map_err(|e| fail(e.to_string()))?;
            let (item, store) = analyze_item(ckpt, r, &audio, &CaptureSelector::hidden());
            if let Some(e) = &item.error {
                return Err(fail(e.clone()));
            }
            let (Some(group), Some(frame), Some(store)) = (CurveGroup::of(&item), item.critical_frame, store) else {
                return Err(fail("target word not aligned".into()));
            };
            let probs = probes
                .iter()
                .map(|p| {
                    let h = store
                        .hidden
                        .get(&p.layer)
                        .ok_or_else(|| format!("no hidden state {}", p.layer))?;
                    p.prob_underlying(h.row(frame)).map_err(|e| e.to_string())
                })
                .collect::<std::result::Result<Vec<_>, String>>()
                .map_err(fail)?;
            Ok(CurvePoint {
                id: r.id.clone(),
                group,
                critical_frame: frame,
                prob_underlying: probs,
            })
        })
        .collect();
    let mut points = Vec::new();
    let mut excluded = Vec::new();
    for o in outcomes {
        match o {
            Ok(p) => points.push(p),
            Err(e) => {
                log::warn!("excluding {}: {}", e.0, e.1);
                excluded.push(e);
            }
        }
    }
    Ok(CurveReport {
        rows: aggregate(&points, &layers),
        points,
        excluded,
    })
}

pub fn write_curves_csv<W: Write>(w: W, rows: &[CurveRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["layer", "group", "mean_prob_underlying", "sem", "n"])
        .map_err(csv_err)?;
    for r in rows {
        out.write_record([
            r.layer.to_string(),
            r.group.name().to_string(),
            format!("{:.9}", r.mean_prob_underlying),
            format!("{:.9}", r.sem),
            r.n.to_string(),
        ])
        .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

// SPDX-License-Identifier: MIT OR Apache-2.0

//! Binary phoneme probes on frame representations.

mod curves;
mod dataset;
mod logistic;
mod timit;

pub use curves::{aggregate, layerwise_curves, write_curves_csv, CurveGroup, CurvePoint, CurveReport, CurveRow};
pub use dataset::{
    balance_indices, build_frame_datasets, frame_labels, labeled_frame_counts, Contrast, PhoneFold, ProbeDataset, Split,
};
pub use logistic::{
    minimize, sigmoid, standardization, train_probe, Design, ProbeModel, Trace, TrainOptions, TrainingMeta,
};
pub use timit::{ingest_timit, list_phn, load_utterance, parse_phn, PhoneInterval, Utterance};

/// Utterance counts drawn from the train and test splits.
pub const TRAIN_UTTERANCES: usize = 1000;
pub const TEST_UTTERANCES: usize = 200;

// SPDX-License-Identifier: MIT OR Apache-2.0

mod commands;
mod manifest;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "assimlab",
    version,
    about = "Wav2Vec2-CTC workbench for place-assimilation experiments"
)]
pub struct Cli {
    /// Worker threads for per-stimulus and per-cell parallelism (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Seed for every random choice (downsampling, permutations, pairings).
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Also render SVG figures from the written CSVs.
    #[arg(long, global = true)]
    pub svg: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct ModelArg {
    /// Checkpoint directory (config.json, vocab.json, model.safetensors).
    #[arg(long, env = "W2V2_MODEL_DIR")]
    pub model: PathBuf,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum SweepChoice {
    Outputs,
    Values,
    Both,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Greedy-decode one file and optionally write its character alignment.
    Transcribe {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        audio: PathBuf,
        #[arg(long)]
        alignment: Option<PathBuf>,
    },
    /// Patch components from a source run into a target run and record Δp.
    Intervene {
        #[command(flatten)]
        model: ModelArg,
        /// Run whose activations are copied in.
        #[arg(long)]
        source: PathBuf,
        /// Run that is patched and measured.
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        underlying: char,
        #[arg(long)]
        surface: char,
        /// Index of the assimilated word in both transcripts.
        #[arg(long, default_value_t = 0)]
        word_index: usize,
        /// Index of the context word (default: the next word).
        #[arg(long)]
        context_index: Option<usize>,
        #[arg(long, value_enum, default_value_t = SweepChoice::Outputs)]
        sweep: SweepChoice,
        /// JSON list of explicit interventions, applied together instead of a sweep.
        #[arg(long)]
        specs: Option<PathBuf>,
        /// Combined CSV; per-position files are written beside it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Transcribe and judge a stimulus manifest, or judge supplied transcripts.
    Behavioral {
        /// Manifest CSV/JSON, or builtin:exp1 / builtin:exp2 / builtin:exp3.
        #[arg(long)]
        manifest: String,
        #[arg(long, env = "W2V2_MODEL_DIR")]
        model: Option<PathBuf>,
        /// Root for the manifest's audio paths (default: the manifest's directory).
        #[arg(long)]
        audio_root: Option<PathBuf>,
        /// CSV of id,transcript to judge instead of running the model; builtin:exp1 for the published table.
        #[arg(long)]
        transcripts: Option<String>,
        /// CSV with target_word,context_word,strict,loose for the rank correlation
        /// (default for Experiment 1: the bundled published counts).
        #[arg(long)]
        pair_counts: Option<PathBuf>,
        #[arg(long, default_value_t = 10_000)]
        permutations: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train per-layer probes on a TIMIT-style corpus.
    Probe {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, env = "ASSIMLAB_TIMIT_DIR")]
        timit: PathBuf,
        /// Phoneme pair, underlying first (e.g. n-m, t-k).
        #[arg(long, default_value = "n-m")]
        contrast: String,
        /// Layers as a list or range (0 is the feature projection).
        #[arg(long, default_value = "0-12")]
        layers: String,
        #[arg(long, default_value_t = assimlab_core::probing::TRAIN_UTTERANCES)]
        train_utts: usize,
        #[arg(long, default_value_t = assimlab_core::probing::TEST_UTTERANCES)]
        test_utts: usize,
        #[arg(long, default_value_t = 1.0)]
        l2: f64,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        /// CSV code,phoneme replacing the bundled fold table.
        #[arg(long)]
        fold: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Apply trained probes at each stimulus's critical frame.
    ProbeApply {
        #[command(flatten)]
        model: ModelArg,
        /// Probe JSON files, or a directory of them.
        #[arg(long, num_args = 1.., required = true)]
        probes: Vec<PathBuf>,
        #[arg(long)]
        manifest: String,
        #[arg(long)]
        audio_root: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build fixed-length stimuli from recordings.
    Assemble {
        /// One assembly plan JSON (use with --output).
        #[arg(long, conflicts_with = "experiment")]
        plan: Option<PathBuf>,
        #[arg(long, requires = "plan")]
        output: Option<PathBuf>,
        /// Generate every stimulus of experiment 2 or 3.
        #[arg(long, requires = "recordings")]
        experiment: Option<u8>,
        /// Root holding sentences/ and contexts/.
        #[arg(long)]
        recordings: Option<PathBuf>,
        /// Background silence recording tiled into the padding.
        #[arg(long)]
        silence: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Count strict and loose word-pair frequencies in a transcript corpus.
    Bigrams {
        /// Transcript file, or a directory searched for *.txt.
        #[arg(long)]
        corpus: PathBuf,
        /// CSV with target_word,context_word columns (default: the Experiment 1 pairs).
        #[arg(long)]
        pairs: Option<PathBuf>,
        /// Also count the first word at the end of longer tokens.
        #[arg(long)]
        left_unbounded: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e
                .downcast_ref::<assimlab_core::Error>()
                .map(|c| c.kind())
                .or_else(|| e.downcast_ref::<std::io::Error>().map(|_| "io"))
                .unwrap_or("runtime");
            let body = serde_json::json!({
                "error": kind,
                "message": format!("{e:#}"),
            });
            eprintln!("{body}");
            ExitCode::from(1)
        }
    }
}

// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;

use assimlab_core::audio::{assemble_stimulus, load_for_model, write_wav, AssemblyPlan, SilenceSource, MODEL_RATE};
use assimlab_core::behavioral::{
    builtin_items, exp1_manifest, exp1_pair_counts, exp1_published_transcripts, exp2_records, exp3_records,
    judge_transcripts, load_manifest, run_items, stimulus_plans, summarize, write_conditions_csv, write_items_csv,
    write_manifest_csv, BigramCounter, LooseConfig, PairCounts, StimulusRecord, SummaryOptions,
};
use assimlab_core::ctc::{alignment_json, greedy_decode};
use assimlab_core::engine::load_checkpoint;
use assimlab_core::intervention::{
    parse_specs, run_with_interventions, sweep_components, write_sweep_csv, Measure, PairSetup, PreparedRun, SweepKind,
    SweepResult,
};
use assimlab_core::probing::{
    build_frame_datasets, ingest_timit, layerwise_curves, train_probe, write_curves_csv, Contrast, CurveReport,
    PhoneFold, ProbeModel, TrainOptions,
};
use assimlab_core::{CaptureSelector, Checkpoint, Error};

use crate::manifest::RunManifest;
use crate::{svg, Cli, Command, SweepChoice};

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Transcribe {
            model,
            audio,
            alignment,
        } => transcribe(&model.model, audio, alignment.as_deref()),
        Command::Intervene {
            model,
            source,
            target,
            underlying,
            surface,
            word_index,
            context_index,
            sweep,
            specs,
            out,
        } => {
            let mut setup = PairSetup::new(
                *word_index,
                underlying.to_ascii_uppercase(),
                surface.to_ascii_uppercase(),
            );
            if let Some(c) = context_index {
                setup.context_index = *c;
            }
            intervene(cli, &model.model, source, target, setup, *sweep, specs.as_deref(), out)
        }
        Command::Behavioral {
            manifest,
            model,
            audio_root,
            transcripts,
            pair_counts,
            permutations,
            out,
        } => behavioral(
            cli,
            manifest,
            model.as_deref(),
            audio_root.as_deref(),
            transcripts.as_deref(),
            pair_counts.as_deref(),
            *permutations,
            out,
        ),
        Command::Probe {
            model,
            timit,
            contrast,
            layers,
            train_utts,
            test_utts,
            l2,
            tol,
            fold,
            out_dir,
        } => {
            let opts = TrainOptions {
                l2_strength: *l2,
                tol: *tol,
                ..TrainOptions::default()
            };
            probe(
                cli,
                &model.model,
                timit,
                contrast,
                layers,
                *train_utts,
                *test_utts,
                opts,
                fold.as_deref(),
                out_dir,
            )
        }
        Command::ProbeApply {
            model,
            probes,
            manifest,
            audio_root,
            out,
        } => probe_apply(cli, &model.model, probes, manifest, audio_root.as_deref(), out),
        Command::Assemble {
            plan,
            output,
            experiment,
            recordings,
            silence,
            out_dir,
        } => match (plan, experiment) {
            (Some(plan), None) => {
                let output = output.as_ref().ok_or_else(|| invalid("--plan requires --output"))?;
                assemble_one(plan, output, silence.as_deref())
            }
            (None, Some(n)) => {
                let rec = recordings
                    .as_ref()
                    .ok_or_else(|| invalid("--experiment requires --recordings"))?;
                assemble_experiment(cli, *n, rec, silence.as_deref(), out_dir)
            }
            _ => Err(invalid("give either --plan or --experiment")),
        },
        Command::Bigrams {
            corpus,
            pairs,
            left_unbounded,
            out,
        } => bigrams(corpus, pairs.as_deref(), *left_unbounded, out),
    }
}

fn invalid(msg: &str) -> anyhow::Error {
    Error::Invalid(msg.into()).into()
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

/// `out.csv` → `out_{suffix}.{ext}`.
fn sibling(path: &Path, suffix: &str, ext: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}_{suffix}.{ext}"))
}

fn load_model(dir: &Path, m: &mut RunManifest) -> Result<Checkpoint> {
    let ckpt = load_checkpoint(dir).with_context(|| format!("loading checkpoint {}", dir.display()))?;
    m.input(&dir.join("config.json"))?;
    m.input(&dir.join("model.safetensors"))?;
    Ok(ckpt)
}

/// Parses `0-12`, `3,6,9` or a mix such as `0,4-6`.
pub fn parse_layers(spec: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let num = |s: &str| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| invalid(&format!("bad layer {s:?} in {spec:?}")))
        };
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b) = (num(a)?, num(b)?);
                if a > b {
                    return Err(invalid(&format!("empty layer range {part:?}")));
                }
                out.extend(a..=b);
            }
            None => out.push(num(part)?),
        }
    }
    out.sort_unstable();
    out.dedup();
    if out.is_empty() {
        return Err(invalid("no layers given"));
    }
    Ok(out)
}

fn transcribe(model: &Path, audio: &Path, alignment: Option<&Path>) -> Result<()> {
    let mut m = RunManifest::new("transcribe");
    let ckpt = load_model(model, &mut m)?;
    m.input(audio)?;
    let buf = load_for_model(audio)?;
    let store = ckpt.forward(&buf, &CaptureSelector::none())?;
    let align = greedy_decode(&store.logits, &ckpt.config.vocab)?;
    println!("{}", align.transcript);
    if let Some(path) = alignment {
        std::fs::write(path, alignment_json(&align, MODEL_RATE)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        m.output(path);
        m.write_beside(path)?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn intervene(
    cli: &Cli,
    model: &Path,
    source: &Path,
    target: &Path,
    setup: PairSetup,
    sweep: SweepChoice,
    specs: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let mut m = RunManifest::new("intervene");
    m.set("setup", setup).set("sweep", format!("{sweep:?}").to_lowercase());
    let ckpt = load_model(model, &mut m)?;
    m.input(source)?.input(target)?;
    let t = PreparedRun::new(&ckpt, &load_for_model(target)?)?;
    let s = PreparedRun::new(&ckpt, &load_for_model(source)?)?;
    log::info!(
        "target {:?}, source {:?}",
        t.alignment.transcript,
        s.alignment.transcript
    );
    let measure = Measure {
        critical_frame: setup.critical_frame(&t.alignment)?,
        underlying: setup.underlying,
        surface: setup.surface,
    };
    let vocab = &ckpt.config.vocab;
    let baseline_dp = measure.read(&t.store, vocab)?;

    if let Some(path) = specs {
        m.input(path)?;
        let specs = parse_specs(&std::fs::read_to_string(path)?)?;
        let run = run_with_interventions(
            &ckpt,
            &load_for_model(target)?,
            &s.store,
            &specs,
            &CaptureSelector::none(),
        )?;
        let dp = measure.read(&run, vocab)?;
        let mut w = csv::Writer::from_writer(create(out)?);
        w.write_record(["critical_frame", "baseline_dp", "delta_p", "flipped"])?;
        w.write_record([
            measure.critical_frame.to_string(),
            format!("{baseline_dp:.9}"),
            format!("{dp:.9}"),
            (dp > 0.0).to_string(),
        ])?;
        w.flush()?;
        m.set("specs", &specs);
        m.output(out);
        m.write_beside(out)?;
        return Ok(());
    }

    let positions = setup.canonical_positions(&t.alignment, &s.alignment)?;
    let kinds: &[SweepKind] = match sweep {
        SweepChoice::Outputs => &[SweepKind::Outputs],
        SweepChoice::Values => &[SweepKind::Values],
        SweepChoice::Both => &[SweepKind::Outputs, SweepKind::Values],
    };
    let mut results: Vec<SweepResult> = Vec::new();
    for &k in kinds {
        results.extend(sweep_components(&ckpt, &t.store, &s.store, &positions, measure, k)?);
    }
    write_sweep_csv(create(out)?, &results)?;
    m.output(out);
    for p in &positions {
        let mine: Vec<SweepResult> = results.iter().filter(|r| r.position.name == p.name).cloned().collect();
        let path = sibling(out, &p.name, "csv");
        write_sweep_csv(create(&path)?, &mine)?;
        m.output(&path);
        if cli.svg {
            let path = sibling(out, &p.name, "svg");
            std::fs::write(&path, sweep_heatmap(&ckpt, &p.name, &mine))?;
            m.output(&path);
        }
    }
    let sidecar = serde_json::json!({
        "target_transcript": t.alignment.transcript,
        "source_transcript": s.alignment.transcript,
        "critical_frame": measure.critical_frame,
        "baseline_dp": baseline_dp,
        "span_rule": "center_align_truncate",
        "positions": positions,
    });
    let path = out.with_extension("json");
    std::fs::write(&path, serde_json::to_string_pretty(&sidecar)? + "\n")?;
    m.output(&path);
    m.write_beside(out)?;
    Ok(())
}

/// Layers down, heads (then MLP) across, for one position.
fn sweep_heatmap(ckpt: &Checkpoint, position: &str, results: &[SweepResult]) -> String {
    let cfg = &ckpt.config;
    let has_mlp = results.iter().flat_map(|r| &r.cells).any(|c| c.head.is_none());
    let mut cols: Vec<String> = (0..cfg.num_heads).map(|h| h.to_string()).collect();
    if has_mlp {
        cols.push("mlp".into());
    }
    let rows: Vec<String> = (1..=cfg.num_layers).map(|l| l.to_string()).collect();
    let mut cells = vec![vec![None; cols.len()]; rows.len()];
    for c in results.iter().flat_map(|r| &r.cells) {
        let col = c.head.unwrap_or(cfg.num_heads);
        // values and outputs for the same head share a cell; keep the larger effect
        let slot = &mut cells[c.layer - 1][col];
        if slot.is_none_or(|v: f64| c.delta_p.abs() > v.abs()) {
            *slot = Some(c.delta_p);
        }
    }
    svg::heatmap(&format!("delta p, {position}"), &rows, &cols, &cells)
}

fn resolve_records(manifest: &str, seed: u64, m: &mut RunManifest) -> Result<(Vec<StimulusRecord>, Option<PathBuf>)> {
    let items = || builtin_items();
    Ok(match manifest {
        "builtin:exp1" => (exp1_manifest(), None),
        "builtin:exp2" => (exp2_records(&items())?, None),
        "builtin:exp3" => (exp3_records(&items(), seed)?, None),
        s if s.starts_with("builtin:") => bail!(invalid(&format!("unknown builtin manifest {s:?}"))),
        path => {
            let p = PathBuf::from(path);
            m.input(&p)?;
            let records = load_manifest(&p).with_context(|| format!("reading manifest {path}"))?;
            (records, p.parent().map(Path::to_path_buf))
        }
    })
}

fn read_transcripts(path: &Path) -> Result<BTreeMap<String, String>> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = BTreeMap::new();
    for row in rdr.deserialize::<(String, String)>() {
        let (id, t) = row.with_context(|| format!("parsing {}", path.display()))?;
        out.insert(id, t);
    }
    Ok(out)
}

fn read_pair_counts(path: &Path) -> Result<Vec<PairCounts>> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    rdr.deserialize()
        .collect::<std::result::Result<Vec<PairCounts>, _>>()
        .with_context(|| format!("parsing {}", path.display()))
}

#[allow(clippy::too_many_arguments)]
fn behavioral(
    cli: &Cli,
    manifest: &str,
    model: Option<&Path>,
    audio_root: Option<&Path>,
    transcripts: Option<&str>,
    pair_counts: Option<&Path>,
    permutations: usize,
    out: &Path,
) -> Result<()> {
    let mut m = RunManifest::new("behavioral");
    m.set("manifest", manifest)
        .set("permutations", permutations)
        .set("seed", cli.seed);
    let (records, manifest_dir) = resolve_records(manifest, cli.seed, &mut m)?;
    let items = match transcripts {
        Some("builtin:exp1") => judge_transcripts(&records, &exp1_published_transcripts()),
        Some(path) => {
            m.input(Path::new(path))?;
            judge_transcripts(&records, &read_transcripts(Path::new(path))?)
        }
        None => {
            let model = model.ok_or_else(|| invalid("give --model (or W2V2_MODEL_DIR) or --transcripts"))?;
            let ckpt = load_model(model, &mut m)?;
            let root = audio_root
                .map(Path::to_path_buf)
                .or(manifest_dir)
                .unwrap_or_else(|| PathBuf::from("."));
            m.set("audio_root", root.display().to_string());
            run_items(&ckpt, &records, &root)
        }
    };
    let counts = match pair_counts {
        Some(p) => {
            m.input(p)?;
            Some(read_pair_counts(p)?)
        }
        None if records.iter().any(|r| r.experiment == 1) => Some(exp1_pair_counts()),
        None => None,
    };
    let opts = SummaryOptions {
        permutations,
        seed: cli.seed,
        pair_counts: counts,
        ..SummaryOptions::default()
    };
    let report = summarize(items, &opts)?;
    for c in &report.conditions {
        let rate = c.rate.map_or("n/a".into(), |r| format!("{:.1}%", 100.0 * r));
        eprintln!(
            "exp{} {:<9} {:<7} {}/{} compensated ({rate}){}",
            c.experiment,
            c.condition.name(),
            c.context_type.name(),
            c.k,
            c.n,
            if c.excluded > 0 {
                format!(", {} excluded", c.excluded)
            } else {
                String::new()
            }
        );
    }
    serde_json::to_writer_pretty(create(out)?, &report)?;
    m.output(out);
    let items_path = sibling(out, "items", "csv");
    write_items_csv(create(&items_path)?, &report.items)?;
    m.output(&items_path);
    let cond_path = sibling(out, "conditions", "csv");
    write_conditions_csv(create(&cond_path)?, &report.conditions)?;
    m.output(&cond_path);
    m.write_beside(out)?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn probe(
    cli: &Cli,
    model: &Path,
    timit: &Path,
    contrast: &str,
    layers: &str,
    train_utts: usize,
    test_utts: usize,
    opts: TrainOptions,
    fold: Option<&Path>,
    out_dir: &Path,
) -> Result<()> {
    let mut m = RunManifest::new("probe");
    let contrast = Contrast::parse(contrast)?;
    let layers = parse_layers(layers)?;
    let fold = match fold {
        Some(p) => {
            m.input(p)?;
            PhoneFold::from_csv(&std::fs::read_to_string(p)?)?
        }
        None => PhoneFold::builtin(),
    };
    m.set("contrast", contrast.name())
        .set("layers", &layers)
        .set("train_utts", train_utts)
        .set("test_utts", test_utts)
        .set("options", &opts)
        .set("seed", cli.seed)
        .set("timit", timit.display().to_string());
    let ckpt = load_model(model, &mut m)?;
    let (train, test) = ingest_timit(timit, train_utts, test_utts)?;
    log::info!("{} train and {} test utterances", train.len(), test.len());
    let datasets = build_frame_datasets(&ckpt, &train, &test, &contrast, &layers, &fold, cli.seed)?;
    let probes = datasets
        .par_iter()
        .map(|ds| {
            let mut p = train_probe(
                &ds.train.features,
                &ds.train.labels,
                ds.layer,
                contrast.clone(),
                &opts,
                cli.seed,
            )?;
            p.meta.fold = fold.table.clone();
            p.meta.test_accuracy = Some(p.accuracy(&ds.test.features, &ds.test.labels)?);
            Ok((p, ds.test.labels.len()))
        })
        .collect::<assimlab_core::Result<Vec<_>>>()?;

    std::fs::create_dir_all(out_dir)?;
    let summary = out_dir.join(format!("probe_{}_summary.csv", contrast.name()));
    let mut w = csv::Writer::from_writer(create(&summary)?);
    w.write_record([
        "layer",
        "train_accuracy",
        "test_accuracy",
        "n_train",
        "n_test",
        "iterations",
        "converged",
    ])?;
    for (p, n_test) in &probes {
        let path = out_dir.join(format!("probe_{}_L{}.json", contrast.name(), p.layer));
        serde_json::to_writer_pretty(create(&path)?, p)?;
        m.output(&path);
        w.write_record([
            p.layer.to_string(),
            format!("{:.6}", p.meta.train_accuracy),
            format!("{:.6}", p.meta.test_accuracy.unwrap_or(f64::NAN)),
            p.meta.n_train.to_string(),
            n_test.to_string(),
            p.meta.iterations.to_string(),
            p.meta.converged.to_string(),
        ])?;
        eprintln!(
            "layer {:>2}: train {:.3} test {:.3}",
            p.layer,
            p.meta.train_accuracy,
            p.meta.test_accuracy.unwrap_or(f64::NAN)
        );
    }
    w.flush()?;
    m.output(&summary);
    m.write_beside(&summary)?;
    Ok(())
}

fn collect_probe_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| {
                    let name = f
                        .file_name()
                        .map(|n| n.to_string_lossy().into_owned())
                        .unwrap_or_default();
                    name.ends_with(".json") && !name.ends_with(".manifest.json")
                })
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    if files.is_empty() {
        bail!(Error::Probe("no probe files found".into()));
    }
    Ok(files)
}

fn probe_apply(
    cli: &Cli,
    model: &Path,
    probe_paths: &[PathBuf],
    manifest: &str,
    audio_root: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let mut m = RunManifest::new("probe-apply");
    m.set("manifest", manifest).set("seed", cli.seed);
    let mut probes = Vec::new();
    for f in collect_probe_files(probe_paths)? {
        m.input(&f)?;
        let text = std::fs::read_to_string(&f)?;
        let p: ProbeModel = serde_json::from_str(&text).with_context(|| format!("parsing probe {}", f.display()))?;
        probes.push(p);
    }
    probes.sort_by_key(|p| p.layer);
    let contrast = probes[0].contrast.clone();
    if let Some(p) = probes.iter().find(|p| p.contrast != contrast) {
        bail!(Error::Probe(format!(
            "probes mix contrasts {} and {}",
            contrast.name(),
            p.contrast.name()
        )));
    }
    if let Some(w) = probes.windows(2).find(|w| w[0].layer == w[1].layer) {
        bail!(Error::Probe(format!("two probes for layer {}", w[0].layer)));
    }
    let ckpt = load_model(model, &mut m)?;
    let (records, manifest_dir) = resolve_records(manifest, cli.seed, &mut m)?;
    let selected: Vec<StimulusRecord> = records.into_iter().filter(|r| contrast.matches(r)).collect();
    let root = audio_root
        .map(Path::to_path_buf)
        .or(manifest_dir)
        .unwrap_or_else(|| PathBuf::from("."));
    m.set("contrast", contrast.name())
        .set("audio_root", root.display().to_string());
    let report = layerwise_curves(&ckpt, &probes, &selected, &root)?;
    write_curves_csv(create(out)?, &report.rows)?;
    m.output(out);
    let points_path = sibling(out, "points", "csv");
    write_points_csv(&points_path, &probes, &report)?;
    m.output(&points_path);
    if cli.svg {
        let path = out.with_extension("svg");
        std::fs::write(&path, curve_chart(&contrast, &report))?;
        m.output(&path);
    }
    m.set("excluded", &report.excluded);
    m.write_beside(out)?;
    Ok(())
}

fn write_points_csv(path: &Path, probes: &[ProbeModel], report: &CurveReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header = vec!["id".to_string(), "group".into(), "critical_frame".into()];
    header.extend(probes.iter().map(|p| format!("L{}", p.layer)));
    w.write_record(&header)?;
    for pt in &report.points {
        let mut row = vec![pt.id.clone(), pt.group.name().into(), pt.critical_frame.to_string()];
        row.extend(pt.prob_underlying.iter().map(|v| format!("{v:.9}")));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn curve_chart(contrast: &Contrast, report: &CurveReport) -> String {
    let mut by_group: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for r in &report.rows {
        by_group
            .entry(r.group.name())
            .or_default()
            .push((r.layer as f64, r.mean_prob_underlying));
    }
    let series: Vec<(String, Vec<(f64, f64)>)> = by_group.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    svg::lines(
        &format!("P({}) at the critical frame", contrast.underlying),
        "layer",
        &series,
    )
}

fn assemble_one(plan_path: &Path, output: &Path, silence: Option<&Path>) -> Result<()> {
    let mut m = RunManifest::new("assemble");
    m.input(plan_path)?;
    let text = std::fs::read_to_string(plan_path).with_context(|| format!("reading {}", plan_path.display()))?;
    let mut plan: AssemblyPlan = serde_json::from_str(&text).map_err(Error::from)?;
    if let Some(s) = silence {
        plan.silence_source = SilenceSource::SilenceFile(s.to_path_buf());
    }
    let base = plan_path.parent().unwrap_or(Path::new("."));
    let plan = plan.rebase(base);
    for s in &plan.segments {
        m.input(s)?;
    }
    m.set("plan", &plan);
    let a = assemble_stimulus(&plan)?;
    if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_wav(output, &a.audio)?;
    m.set("offsets", &a.offsets).set("fill_samples", a.fill_samples);
    m.output(output);
    m.write_beside(output)?;
    Ok(())
}

fn assemble_experiment(
    cli: &Cli,
    experiment: u8,
    recordings: &Path,
    silence: Option<&Path>,
    out_dir: &Path,
) -> Result<()> {
    let mut m = RunManifest::new("assemble");
    m.set("experiment", experiment)
        .set("seed", cli.seed)
        .set("recordings", recordings.display().to_string());
    let plans = stimulus_plans(experiment, &builtin_items(), cli.seed)?;
    let silence = silence.map(|s| SilenceSource::SilenceFile(s.to_path_buf()));
    let written = plans
        .par_iter()
        .map(|(record, plan)| {
            let mut plan = plan.clone();
            if let Some(s) = &silence {
                plan.silence_source = s.clone();
            }
            let plan = plan.rebase(recordings);
            let a = assemble_stimulus(&plan).with_context(|| format!("assembling {}", record.id))?;
            let path = out_dir.join(&record.audio_path);
            if let Some(dir) = path.parent() {
                std::fs::create_dir_all(dir)?;
            }
            write_wav(&path, &a.audio).with_context(|| format!("writing {}", path.display()))?;
            Ok(path)
        })
        .collect::<Result<Vec<_>>>()?;
    for p in &written {
        m.output(p);
    }
    let records: Vec<StimulusRecord> = plans.into_iter().map(|(r, _)| r).collect();
    let manifest_path = out_dir.join(format!("exp{experiment}_manifest.csv"));
    write_manifest_csv(create(&manifest_path)?, &records)?;
    m.output(&manifest_path);
    m.write_beside(&manifest_path)?;
    eprintln!("wrote {} stimuli and {}", records.len(), manifest_path.display());
    Ok(())
}

fn bigrams(corpus: &Path, pairs: Option<&Path>, left_unbounded: bool, out: &Path) -> Result<()> {
    let mut m = RunManifest::new("bigrams");
    let pair_list: Vec<(String, String)> = match pairs {
        Some(p) => {
            m.input(p)?;
            let mut rdr = csv::Reader::from_path(p).with_context(|| format!("reading {}", p.display()))?;
            let headers = rdr.headers()?.clone();
            let col = |name: &str| {
                headers
                    .iter()
                    .position(|h| h == name)
                    .ok_or_else(|| anyhow!(Error::Invalid(format!("{} lacks a {name} column", p.display()))))
            };
            let (a, b) = (col("target_word")?, col("context_word")?);
            let mut v = Vec::new();
            for r in rdr.records() {
                let r = r?;
                v.push((r[a].to_string(), r[b].to_string()));
            }
            v
        }
        None => exp1_pair_counts()
            .into_iter()
            .map(|c| (c.target_word, c.context_word))
            .collect(),
    };
    let loose = LooseConfig {
        left_unbounded,
        ..LooseConfig::default()
    };
    m.set("loose", &loose).set("pairs", pair_list.len());
    let refs: Vec<(&str, &str)> = pair_list.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
    let mut counter = BigramCounter::new(&refs, loose)?;

    let files: Vec<PathBuf> = if corpus.is_dir() {
        let mut v: Vec<PathBuf> = walk_txt(corpus)?;
        v.sort();
        v
    } else {
        vec![corpus.to_path_buf()]
    };
    if files.is_empty() {
        bail!(invalid(&format!("no .txt files under {}", corpus.display())));
    }
    m.set("corpus", corpus.display().to_string())
        .set("corpus_files", files.len());
    for f in &files {
        let text = std::fs::read_to_string(f).with_context(|| format!("reading {}", f.display()))?;
        text.lines().for_each(|l| counter.feed(l));
    }
    let mut w = csv::Writer::from_writer(create(out)?);
    w.write_record(["target_word", "context_word", "strict", "loose"])?;
    for ((a, b), (s, l)) in pair_list.iter().zip(counter.counts()) {
        w.write_record([a.to_uppercase(), b.to_uppercase(), s.to_string(), l.to_string()])?;
    }
    w.flush()?;
    m.output(out);
    m.write_beside(out)?;
    Ok(())
}

fn walk_txt(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).with_context(|| format!("listing {}", d.display()))? {
            let p = e?.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|x| x == "txt") {
                out.push(p);
            }
        }
    }
    Ok(out)
}

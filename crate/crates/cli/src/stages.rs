//! One function per command. Each stage checks that its inputs exist in the
//! run directory before doing any work.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result, bail};
use lobspoof_core::config::{Injection, RunConfig};
use lobspoof_core::detect::{Detector, ScoreSeries, ThresholdChoice};
use lobspoof_core::eval::{ExperimentPlan, run_experiment};
use lobspoof_core::features::{InputMode, NormStats, read_frame_csv, write_frame_csv};
use lobspoof_core::lob::{LabeledSeries, read_labels, read_series_dir, write_labels, write_series_dir};
use lobspoof_core::pipeline::{self, Dataset, Detection};
use lobspoof_core::repr::{FrozenEmbedder, TrainReport, load_checkpoint, save_checkpoint};
use serde::{Deserialize, Serialize};
use serde_json::{Value, json};

pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    /// `<out>/<short hash>/` with the effective config written beside the
    /// artifacts.
    pub fn create(out: &Path, cfg: &RunConfig) -> Result<Self> {
        let root = out.join(cfg.short_hash());
        fs::create_dir_all(&root).with_context(|| format!("creating {}", root.display()))?;
        fs::write(root.join("config.toml"), cfg.to_toml()?)?;
        Ok(RunDir { root })
    }

    fn stage(&self, name: &str) -> Result<PathBuf> {
        let dir = self.root.join(name);
        fs::create_dir_all(&dir)?;
        Ok(dir)
    }

    /// Fails with a stage-order error unless `path` was produced earlier.
    fn require(&self, path: &str, producer: &str) -> Result<PathBuf> {
        let p = self.root.join(path);
        if !p.exists() {
            bail!("stage order: {} is missing; run `lobspoof {producer}` first", p.display());
        }
        Ok(p)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_reader(BufReader::new(file)).with_context(|| format!("parsing {}", path.display()))
}

fn replicate_config(cfg: &RunConfig) -> RunConfig {
    cfg.for_replicate(cfg.cell.replicate)
}

fn series_summary(series: &LabeledSeries, dir: &Path) -> Value {
    json!({
        "dir": dir,
        "steps": series.len(),
        "levels": series.levels(),
        "episodes": series.spans.len(),
        "anomalous_steps": series.labels.iter().filter(|l| l.is_anomaly()).count(),
    })
}

pub fn synth(run: &RunDir, cfg: &RunConfig) -> Result<Value> {
    let rcfg = replicate_config(cfg);
    let series = lobspoof_core::synth::generate(&rcfg.synth)?;
    let dir = run.stage("synth")?;
    write_series_dir(&series, &dir)?;
    Ok(json!({ "command": "synth", "series": series_summary(&series, &dir) }))
}

pub fn inject(run: &RunDir, cfg: &RunConfig) -> Result<Value> {
    let rcfg = replicate_config(cfg);
    let base_dir = run.require("synth/orderbook.csv", "synth")?;
    let base = read_series_dir(base_dir.parent().expect("file in a directory"), rcfg.synth.levels)?;
    let inject_cfg = match cfg.cell.injection {
        Injection::Configured => rcfg.inject.clone(),
        Injection::SingleLevel(level) => rcfg.inject.clone().single_level(level, rcfg.synth.levels),
    };
    let injected = lobspoof_core::inject::inject(&base, &inject_cfg)?;
    let dir = run.stage("injected")?;
    write_series_dir(&injected, &dir)?;
    Ok(json!({ "command": "inject", "series": series_summary(&injected, &dir) }))
}

pub fn features(run: &RunDir, cfg: &RunConfig) -> Result<Value> {
    let rcfg = replicate_config(cfg);
    run.require("injected/orderbook.csv", "inject")?;
    let series = read_series_dir(&run.root.join("injected"), rcfg.synth.levels)?;
    let ds = pipeline::dataset_from_series(series, &rcfg)?;
    let dir = run.stage("features")?;
    let mut w = BufWriter::new(File::create(dir.join("features.csv"))?);
    write_frame_csv(&ds.frame, &mut w)?;
    w.flush()?;
    write_json(&dir.join("norm_stats.json"), &ds.stats.to_json())?;
    let mut w = BufWriter::new(File::create(dir.join("labels_deep.txt"))?);
    write_labels(&ds.deep_labels, &mut w)?;
    w.flush()?;
    Ok(json!({
        "command": "features",
        "dir": dir,
        "rows": ds.frame.len(),
        "columns": ds.frame.column_names().len(),
    }))
}

fn load_dataset(run: &RunDir, rcfg: &RunConfig) -> Result<Dataset> {
    run.require("features/features.csv", "features")?;
    let series = read_series_dir(&run.root.join("injected"), rcfg.synth.levels)?;
    let frame = read_frame_csv(BufReader::new(File::open(run.root.join("features/features.csv"))?))?;
    let stats = NormStats::from_json(&read_json(&run.root.join("features/norm_stats.json"))?)?;
    let deep_labels = read_labels(BufReader::new(File::open(run.root.join("features/labels_deep.txt"))?))?;
    if frame.len() != series.len() || deep_labels.len() != series.len() {
        bail!("features and injected series disagree in length; rerun `lobspoof features`");
    }
    Ok(Dataset { series, frame, stats, deep_labels })
}

fn write_trace(report: &TrainReport, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    report.write_trace_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn pretrain_lob(run: &RunDir, cfg: &RunConfig) -> Result<Value> {
    let rcfg = replicate_config(cfg);
    let ds = load_dataset(run, &rcfg)?;
    let (embedder, report) = pipeline::pretrain_embedder(&ds, &rcfg)?;
    let dir = run.stage("models")?;
    save_checkpoint(embedder.model(), &dir.join("lob_embedder.json"))?;
    write_trace(&report, &dir.join("lob_embedder_loss.csv"))?;
    Ok(json!({
        "command": "pretrain-lob",
        "embedder_hash": embedder.hash(),
        "final_loss": report.trace.last().map(|e| e.total),
        "epochs": report.trace.len(),
    }))
}

fn load_embedder(run: &RunDir, cfg: &RunConfig) -> Result<Option<FrozenEmbedder>> {
    if cfg.cell.input != InputMode::EmbeddedLob {
        return Ok(None);
    }
    let path = run.require("models/lob_embedder.json", "pretrain-lob")?;
    Ok(Some(FrozenEmbedder::new(load_checkpoint(&path)?)?))
}

/// Written by `train` so that later stages know whether an encoder exists.
#[derive(Serialize, Deserialize)]
struct TrainRecord {
    representation: String,
    model_hash: Option<String>,
    train_windows: usize,
    train_positives: usize,
    report: Option<TrainReport>,
}

pub fn train(run: &RunDir, cfg: &RunConfig) -> Result<Value> {
    let rcfg = replicate_config(cfg);
    let ds = load_dataset(run, &rcfg)?;
    let embedder = load_embedder(run, cfg)?;
    let windows = pipeline::input_windows(&ds, &rcfg, &cfg.cell, embedder.as_ref())?;
    let trained = pipeline::train_model(&windows, &rcfg, &cfg.cell)?;
    let dir = run.stage("models")?;
    let encoder_path = dir.join("encoder.json");
    if let Some((model, report)) = &trained {
        save_checkpoint(model, &encoder_path)?;
        write_trace(report, &dir.join("encoder_loss.csv"))?;
    } else if encoder_path.exists() {
        fs::remove_file(&encoder_path)?;
    }
    let record = TrainRecord {
        representation: cfg.cell.representation.name().into(),
        model_hash: trained.as_ref().map(|(m, _)| m.param_hash()),
        train_windows: windows.train.len(),
        train_positives: windows.train.positives(),
        report: trained.map(|(_, r)| r),
    };
    write_json(&dir.join("train.json"), &record)?;
    Ok(json!({
        "command": "train",
        "representation": record.representation,
        "model_hash": record.model_hash,
        "train_windows": record.train_windows,
        "train_positives": record.train_positives,
        "final_loss": record.report.as_ref().and_then(|r| r.trace.last()).map(|e| e.total),
    }))
}

#[derive(Serialize, Deserialize)]
struct Scores {
    val: ScoreSeries,
    test: ScoreSeries,
}

pub fn detect(run: &RunDir, cfg: &RunConfig) -> Result<Value> {
    let rcfg = replicate_config(cfg);
    let record: TrainRecord = read_json(&run.require("models/train.json", "train")?)?;
    if record.representation != cfg.cell.representation.name() {
        bail!("stage order: models/train.json holds a {} model; rerun `lobspoof train`", record.representation);
    }
    let ds = load_dataset(run, &rcfg)?;
    let embedder = load_embedder(run, cfg)?;
    let windows = pipeline::input_windows(&ds, &rcfg, &cfg.cell, embedder.as_ref())?;
    let model = match record.model_hash {
        Some(_) => Some(load_checkpoint(&run.require("models/encoder.json", "train")?)?),
        None => None,
    };
    let det = pipeline::detect(model.as_ref(), &windows, &ds, &rcfg, &cfg.cell)?;
    let dir = run.stage("detect")?;
    det.detector.to_writer(BufWriter::new(File::create(dir.join("detector.json"))?))?;
    write_json(&dir.join("threshold.json"), &det.threshold)?;
    write_json(&dir.join("scores.json"), &Scores { val: det.val.clone(), test: det.test.clone() })?;
    for (name, series) in [("val", &det.val), ("test", &det.test)] {
        let labels = &ds.series.labels[series.start..series.start + series.point_scores.len()];
        let mut w = BufWriter::new(File::create(dir.join(format!("{name}_scores.csv")))?);
        series.write_csv(labels, &mut w)?;
        w.flush()?;
    }
    Ok(json!({
        "command": "detect",
        "detector": det.detector.kind().name(),
        "threshold": det.threshold,
        "test_steps": det.test.point_scores.len(),
        "flagged_test_steps": det.test.decisions.iter().filter(|&&d| d == 1).count(),
    }))
}

pub fn evaluate(run: &RunDir, cfg: &RunConfig) -> Result<Value> {
    let rcfg = replicate_config(cfg);
    let scores: Scores = read_json(&run.require("detect/scores.json", "detect")?)?;
    let threshold: ThresholdChoice = read_json(&run.root.join("detect/threshold.json"))?;
    let detector = Detector::from_reader(BufReader::new(File::open(run.root.join("detect/detector.json"))?))?;
    let ds = load_dataset(run, &rcfg)?;
    let det = Detection { detector, threshold, val: scores.val, test: scores.test };
    let metrics = pipeline::evaluate_detection(&det, &ds, &rcfg, cfg.cell.mode)?;
    let dir = run.stage("evaluate")?;
    write_json(&dir.join("metrics.json"), &metrics)?;
    Ok(json!({ "command": "evaluate", "cell": cfg.cell.id(), "metrics": metrics }))
}

pub fn experiment(run: &RunDir, cfg: &RunConfig, plan: Option<&str>, force: bool) -> Result<Value> {
    let name = plan.unwrap_or(&cfg.experiment.plan);
    let plan = ExperimentPlan::preset(name, cfg)?;
    let dir = run.root.join("experiment").join(&plan.name);
    let report = run_experiment(cfg, &plan, &dir, force)?;
    Ok(json!({
        "command": "experiment",
        "plan": plan.name,
        "cells": plan.cells.len(),
        "failed": report.failed(),
        "summary": dir.join("summary.csv"),
    }))
}

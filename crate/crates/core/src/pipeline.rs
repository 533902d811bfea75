//! End-to-end execution of one experiment cell.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::config::{CellSpec, Injection, RunConfig};
use crate::detect::{
    Detector, ScoreSeries, ThresholdChoice, aggregate_anchored, fit_detector, pick_threshold, score_windows,
};
use crate::error::{Error, Result};
use crate::eval::{MetricReport, Subset, evaluate};
use crate::features::{
    FeatureFrame, InputMode, NormStats, SplitMode, SplitSpec, SplitWindows, WindowBatch, build_manual_features, normalize,
    split,
};
use crate::inject::{inject, level_restricted_view};
use crate::lob::{Label, LabeledSeries};
use crate::par::{Execution, map_range};
use crate::repr::{Autoencoder, EncoderSpec, FrozenEmbedder, TrainConfig, TrainReport, encode_batch, fuse_batch, pretrain_lob_embedder, train};
use crate::synth::generate;

/// An injected series with its normalized features.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub series: LabeledSeries,
    pub frame: FeatureFrame,
    pub stats: NormStats,
    /// Labels of the evaluation view that keeps only spans in levels 2..=l.
    pub deep_labels: Vec<Label>,
}

/// Synthetic base series and its injected copy.
pub fn generate_series(cfg: &RunConfig, injection: Injection) -> Result<(LabeledSeries, LabeledSeries)> {
    let base = generate(&cfg.synth)?;
    let inject_cfg = match injection {
        Injection::Configured => cfg.inject.clone(),
        Injection::SingleLevel(level) => cfg.inject.clone().single_level(level, cfg.synth.levels),
    };
    let injected = inject(&base, &inject_cfg)?;
    Ok((base, injected))
}

pub fn split_spec(cfg: &RunConfig, n: usize, mode: SplitMode) -> Result<SplitSpec> {
    SplitSpec::by_ratio(n, cfg.split.ratios, mode)
}

pub fn dataset_from_series(series: LabeledSeries, cfg: &RunConfig) -> Result<Dataset> {
    let raw = build_manual_features(&series, &cfg.features)?;
    let ranges = split_spec(cfg, series.len(), SplitMode::Proposed)?;
    let (frame, stats) = normalize(&raw, &ranges)?;
    let deep: BTreeSet<usize> = (2..=series.levels()).collect();
    let deep_labels = if deep.is_empty() { vec![Label::Ignore; series.len()] } else { level_restricted_view(&series, &deep)?.labels };
    Ok(Dataset { series, frame, stats, deep_labels })
}

pub fn build_dataset(cfg: &RunConfig, injection: Injection) -> Result<Dataset> {
    let (_, injected) = generate_series(cfg, injection)?;
    dataset_from_series(injected, cfg)
}

/// Normal training windows of the raw LOB block, for embedder pretraining.
pub fn lob_pretrain_windows(ds: &Dataset, cfg: &RunConfig) -> Result<WindowBatch> {
    let rows = Arc::new(ds.frame.lob.clone());
    let spec = split_spec(cfg, ds.series.len(), SplitMode::Traditional)?;
    let w = split(rows, &ds.series.labels, &spec, &cfg.window)?;
    Ok(w.train)
}

pub fn pretrain_embedder(ds: &Dataset, cfg: &RunConfig) -> Result<(FrozenEmbedder, TrainReport)> {
    let windows = lob_pretrain_windows(ds, cfg)?;
    pretrain_lob_embedder(&windows, &cfg.cascade, &cfg.train, cfg.execution)
}

/// Train/validation/test windows of the cell's input.
pub fn input_windows(ds: &Dataset, cfg: &RunConfig, cell: &CellSpec, embedder: Option<&FrozenEmbedder>) -> Result<SplitWindows> {
    let spec = split_spec(cfg, ds.series.len(), cell.mode)?;
    let labels = &ds.series.labels;
    match cell.input {
        InputMode::NoLob | InputMode::RawLob => split(Arc::new(ds.frame.input_rows(cell.input)?), labels, &spec, &cfg.window),
        InputMode::EmbeddedLob => {
            let embedder = embedder.ok_or_else(|| Error::config("embedded LOB input needs a pretrained embedder"))?;
            let lob = split(Arc::new(ds.frame.lob.clone()), labels, &spec, &cfg.window)?;
            let manual = split(Arc::new(ds.frame.manual.clone()), labels, &spec, &cfg.window)?;
            let fusion = cfg.cascade.fusion;
            let exec = cfg.execution;
            Ok(SplitWindows {
                train: fuse_batch(embedder, &lob.train, &manual.train, fusion, exec)?,
                val: fuse_batch(embedder, &lob.val, &manual.val, fusion, exec)?,
                test: fuse_batch(embedder, &lob.test, &manual.test, fusion, exec)?,
            })
        }
    }
}

pub fn encoder_spec(cfg: &RunConfig, cell: &CellSpec, input_dim: usize) -> Option<EncoderSpec> {
    cell.representation.family().map(|family| EncoderSpec {
        family,
        input_dim,
        window: cfg.window.length,
        latent_dim: cfg.encoder.latent_dim,
        hidden: cfg.encoder.hidden,
        d_model: cfg.encoder.d_model,
        seed: cfg.encoder_seed(cell.replicate),
    })
}

pub fn cell_train_config(cfg: &RunConfig, cell: &CellSpec) -> TrainConfig {
    TrainConfig { alpha: cell.alpha, oversample_ratio: cell.oversample_ratio, ..cfg.train.clone() }
}

/// Trains the cell's representation model; `None` for the raw detector.
pub fn train_model(windows: &SplitWindows, cfg: &RunConfig, cell: &CellSpec) -> Result<Option<(Autoencoder, TrainReport)>> {
    let Some(spec) = encoder_spec(cfg, cell, windows.train.dim) else { return Ok(None) };
    let mut model = Autoencoder::new(spec)?;
    let report = train(&mut model, &windows.train, &cell_train_config(cfg, cell), cfg.execution)?;
    Ok(Some((model, report)))
}

/// Latent rows for every window; the flattened window without a model.
pub fn latents(model: Option<&Autoencoder>, windows: &WindowBatch, exec: Execution) -> Result<Array2<f64>> {
    match model {
        Some(m) => encode_batch(m, windows, exec),
        None => {
            let width = windows.length * windows.dim;
            let rows = map_range(exec, windows.len(), |i| windows.window(i).iter().copied().collect::<Vec<f64>>());
            Ok(Array2::from_shape_vec((windows.len(), width), rows.concat()).expect("rows of equal width"))
        }
    }
}

#[derive(Debug, Clone)]
pub struct Detection {
    pub detector: Detector,
    pub threshold: ThresholdChoice,
    pub val: ScoreSeries,
    pub test: ScoreSeries,
}

fn score_range(
    detector: &Detector,
    model: Option<&Autoencoder>,
    windows: &WindowBatch,
    range: std::ops::Range<usize>,
    cfg: &RunConfig,
) -> Result<(Vec<f64>, crate::detect::PointScores)> {
    let z = latents(model, windows, cfg.execution)?;
    let scores = score_windows(detector, &z, cfg.execution);
    let points = aggregate_anchored(&scores, &windows.anchors, windows.length, range, cfg.detector.aggregation)?;
    Ok((scores, points))
}

/// Fits the detector on normal training latents, picks the threshold on the
/// validation range and scores the test range.
pub fn detect(model: Option<&Autoencoder>, windows: &SplitWindows, ds: &Dataset, cfg: &RunConfig, cell: &CellSpec) -> Result<Detection> {
    let normal = windows.train.select(&windows.train.normal_indices());
    if normal.is_empty() {
        return Err(Error::shape("no normal training windows for the detector"));
    }
    let z = latents(model, &normal, cfg.execution)?;
    let detector = fit_detector(cell.detector, &z, &normal.labels, &cfg.detector, cfg.execution)?;
    let spec = split_spec(cfg, ds.series.len(), cell.mode)?;
    let (val_w, val_p) = score_range(&detector, model, &windows.val, spec.val.clone(), cfg)?;
    let threshold = pick_threshold(&val_p.scores, &ds.series.labels[spec.val.clone()])?;
    if threshold.degenerate {
        log::warn!("degenerate validation threshold for {}", cell.id());
    }
    let (test_w, test_p) = score_range(&detector, model, &windows.test, spec.test.clone(), cfg)?;
    Ok(Detection {
        val: ScoreSeries::new(spec.val.start, val_w, val_p, threshold.threshold),
        test: ScoreSeries::new(spec.test.start, test_w, test_p, threshold.threshold),
        detector,
        threshold,
    })
}

/// Test-range metrics on both evaluation subsets. A subset without
/// positives in the test range is skipped.
pub fn evaluate_detection(det: &Detection, ds: &Dataset, cfg: &RunConfig, mode: SplitMode) -> Result<Vec<MetricReport>> {
    let test = split_spec(cfg, ds.series.len(), mode)?.test;
    let mut out = Vec::new();
    for (subset, labels) in [(Subset::AllLevels, &ds.series.labels), (Subset::Levels2To5, &ds.deep_labels)] {
        let view = &labels[test.clone()];
        if !view.iter().any(|l| l.is_anomaly()) {
            log::warn!("no {} positives in the test range", subset.tag());
            continue;
        }
        out.push(evaluate(&det.test.point_scores, view, det.threshold.threshold, subset)?);
    }
    Ok(out)
}

/// Everything a cell run reports; contains no timings or paths so reruns
/// serialize identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub cell: CellSpec,
    pub train_windows: usize,
    pub train_positives: usize,
    pub embedder_hash: Option<String>,
    pub model_hash: Option<String>,
    pub train: Option<TrainReport>,
    pub threshold: ThresholdChoice,
    pub inherited_steps: usize,
    pub metrics: Vec<MetricReport>,
}

/// Datasets and frozen embedders shared between cells of one run.
#[derive(Default)]
pub struct Cache {
    datasets: HashMap<(u64, Injection), Arc<Dataset>>,
    embedders: HashMap<(u64, Injection), Arc<FrozenEmbedder>>,
}

impl Cache {
    pub fn dataset(&mut self, cfg: &RunConfig, replicate: u64, injection: Injection) -> Result<Arc<Dataset>> {
        if let Some(ds) = self.datasets.get(&(replicate, injection)) {
            return Ok(ds.clone());
        }
        let ds = Arc::new(build_dataset(&cfg.for_replicate(replicate), injection)?);
        self.datasets.insert((replicate, injection), ds.clone());
        Ok(ds)
    }

    pub fn embedder(&mut self, cfg: &RunConfig, replicate: u64, injection: Injection) -> Result<Arc<FrozenEmbedder>> {
        if let Some(e) = self.embedders.get(&(replicate, injection)) {
            return Ok(e.clone());
        }
        let ds = self.dataset(cfg, replicate, injection)?;
        let (embedder, report) = pretrain_embedder(&ds, &cfg.for_replicate(replicate))?;
        log::info!(
            "pretrained LOB embedder for replicate {replicate} ({}): final loss {:.5}",
            injection.tag(),
            report.trace.last().map_or(f64::NAN, |e| e.total)
        );
        let embedder = Arc::new(embedder);
        self.embedders.insert((replicate, injection), embedder.clone());
        Ok(embedder)
    }
}

pub fn run_cell(cfg: &RunConfig, cell: &CellSpec, cache: &mut Cache) -> Result<CellResult> {
    run_cell_full(cfg, cell, cache).map(|(r, _)| r)
}

/// [`run_cell`] that also hands back the detector and its score series.
pub fn run_cell_full(cfg: &RunConfig, cell: &CellSpec, cache: &mut Cache) -> Result<(CellResult, Detection)> {
    let rcfg = cfg.for_replicate(cell.replicate);
    let ds = cache.dataset(cfg, cell.replicate, cell.injection)?;
    let embedder = match cell.input {
        InputMode::EmbeddedLob => Some(cache.embedder(cfg, cell.replicate, cell.injection)?),
        _ => None,
    };
    let windows = input_windows(&ds, &rcfg, cell, embedder.as_deref())?;
    let trained = train_model(&windows, &rcfg, cell)?;
    let model = trained.as_ref().map(|(m, _)| m);
    let det = detect(model, &windows, &ds, &rcfg, cell)?;
    let metrics = evaluate_detection(&det, &ds, &rcfg, cell.mode)?;
    if let Some(e) = &embedder {
        e.verify()?;
    }
    let result = CellResult {
        cell: cell.clone(),
        train_windows: windows.train.len(),
        train_positives: windows.train.positives(),
        embedder_hash: embedder.map(|e| e.hash().to_string()),
        model_hash: model.map(Autoencoder::param_hash),
        train: trained.map(|(_, r)| r),
        threshold: det.threshold,
        inherited_steps: det.test.inherited.iter().filter(|&&b| b).count(),
        metrics,
    };
    Ok((result, det))
}

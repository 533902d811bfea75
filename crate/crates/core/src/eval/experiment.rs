use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::plot::{pr_curve_svg, score_timeline_svg};
use crate::config::{CellSpec, Injection, Representation, RunConfig, input_name, mode_name};
use crate::detect::DetectorKind;
use crate::error::{Error, Result};
use crate::features::{InputMode, SplitMode};
use crate::pipeline::{Cache, run_cell_full, split_spec};

pub const PRESETS: [&str; 8] = ["cell", "table1", "table2", "table3", "figure2", "figure3", "figure4", "grid"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub name: String,
    pub cells: Vec<CellSpec>,
}

impl ExperimentPlan {
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        Self::preset(&cfg.experiment.plan, cfg)
    }

    pub fn preset(name: &str, cfg: &RunConfig) -> Result<Self> {
        let hybrid = CellSpec {
            representation: Representation::Attention,
            detector: DetectorKind::OcSvm,
            mode: SplitMode::Proposed,
            input: InputMode::EmbeddedLob,
            alpha: cfg.train.alpha,
            oversample_ratio: cfg.train.oversample_ratio,
            injection: Injection::Configured,
            replicate: 0,
        };
        let original = |representation, detector| CellSpec {
            representation,
            detector,
            mode: SplitMode::Traditional,
            input: InputMode::RawLob,
            alpha: 0.0,
            oversample_ratio: 0.0,
            ..hybrid.clone()
        };
        let families = [Representation::Feedforward, Representation::Recurrent, Representation::Attention];
        let mut base: Vec<CellSpec> = Vec::new();
        match name {
            "cell" => base.push(cfg.cell.clone()),
            "table1" => {
                for detector in [DetectorKind::OcSvm, DetectorKind::IsolationForest] {
                    base.push(original(Representation::None, detector));
                    for rep in families {
                        base.push(original(rep, detector));
                        base.push(CellSpec { representation: rep, detector, ..hybrid.clone() });
                    }
                }
            }
            "table2" => {
                for beta in [0.0, 0.1, 0.3, 0.5] {
                    base.push(CellSpec { oversample_ratio: beta, ..hybrid.clone() });
                }
            }
            "table3" => {
                for alpha in [0.0, 0.2, 0.5, 0.8, 1.0] {
                    base.push(CellSpec { alpha, ..hybrid.clone() });
                }
            }
            "figure2" => {
                base.push(CellSpec { input: InputMode::NoLob, ..hybrid.clone() });
                for level in 1..=cfg.synth.levels {
                    base.push(CellSpec { input: InputMode::NoLob, injection: Injection::SingleLevel(level), ..hybrid.clone() });
                }
            }
            "figure3" => {
                for rep in families {
                    for alpha in [0.0, cfg.train.alpha] {
                        for input in [InputMode::NoLob, InputMode::RawLob, InputMode::EmbeddedLob] {
                            base.push(CellSpec { representation: rep, input, alpha, ..hybrid.clone() });
                        }
                    }
                }
            }
            "figure4" => {
                for input in [InputMode::RawLob, InputMode::EmbeddedLob] {
                    base.push(CellSpec { input, ..hybrid.clone() });
                }
            }
            "grid" => {
                let g = &cfg.experiment.grid;
                for &representation in &g.representations {
                    for &detector in &g.detectors {
                        for &mode in &g.modes {
                            for &input in &g.inputs {
                                for &alpha in &g.alphas {
                                    for &oversample_ratio in &g.oversample_ratios {
                                        for &injection in &g.injections {
                                            base.push(CellSpec {
                                                representation,
                                                detector,
                                                mode,
                                                input,
                                                alpha,
                                                oversample_ratio,
                                                injection,
                                                replicate: 0,
                                            });
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
            other => return Err(Error::config(format!("unknown plan {other:?}; expected one of {}", PRESETS.join(", ")))),
        }
        let cells = cfg
            .experiment
            .replicates
            .iter()
            .flat_map(|&r| base.iter().map(move |c| CellSpec { replicate: r, ..c.clone() }))
            .collect();
        Ok(ExperimentPlan { name: name.to_string(), cells })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellOutcome {
    pub cell: CellSpec,
    pub result: Option<crate::pipeline::CellResult>,
    pub error: Option<String>,
}

impl CellOutcome {
    pub fn is_ok(&self) -> bool {
        self.result.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub plan: String,
    pub outcomes: Vec<CellOutcome>,
}

impl ExperimentReport {
    pub fn failed(&self) -> usize {
        self.outcomes.iter().filter(|o| !o.is_ok()).count()
    }

    /// One row per cell and evaluation subset, Table 1 column order after
    /// the cell description.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from(
            "detection,representation,mode,input,alpha,beta,injection,replicate,subset,auc_pr,auroc,f4,precision,recall,status\n",
        );
        for o in &self.outcomes {
            let c = &o.cell;
            let prefix = format!(
                "{},{},{},{},{},{},{},{}",
                c.detector.name(),
                c.representation.name(),
                mode_name(c.mode),
                input_name(c.input),
                c.alpha,
                c.oversample_ratio,
                c.injection.tag(),
                c.replicate
            );
            match &o.result {
                Some(r) => {
                    for m in &r.metrics {
                        let _ = writeln!(
                            out,
                            "{prefix},{},{:.6},{:.6},{:.6},{:.6},{:.6},ok",
                            m.subset.tag(),
                            m.auc_pr,
                            m.auroc,
                            m.f4,
                            m.precision,
                            m.recall
                        );
                    }
                }
                None => {
                    let _ = writeln!(out, "{prefix},,,,,,,failed");
                }
            }
        }
        out
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Runs every cell of `plan` under `out_dir`.
///
/// The plan is written first. Each cell writes `cells/<id>.json`; a cell
/// whose file holds a successful result is loaded instead of rerun unless
/// `force` is set. Failures are recorded and the remaining cells continue.
pub fn run_experiment(cfg: &RunConfig, plan: &ExperimentPlan, out_dir: &Path, force: bool) -> Result<ExperimentReport> {
    let cells_dir = out_dir.join("cells");
    fs::create_dir_all(&cells_dir)?;
    write_json(&out_dir.join("plan.json"), plan)?;
    let mut cache = Cache::default();
    let mut outcomes = Vec::with_capacity(plan.cells.len());
    for cell in &plan.cells {
        let path = cells_dir.join(format!("{}.json", cell.id()));
        if !force && path.exists() {
            if let Ok(prev) = serde_json::from_str::<CellOutcome>(&fs::read_to_string(&path)?) {
                if prev.is_ok() && &prev.cell == cell {
                    log::info!("cell {} already complete", cell.id());
                    outcomes.push(prev);
                    continue;
                }
            }
        }
        log::info!("running cell {}", cell.id());
        let outcome = match run_cell_full(cfg, cell, &mut cache) {
            Ok((result, detection)) => {
                if cfg.experiment.plots {
                    let ds = cache.dataset(cfg, cell.replicate, cell.injection)?;
                    let test = split_spec(cfg, ds.series.len(), cell.mode)?.test;
                    let labels = &ds.series.labels[test];
                    fs::write(cells_dir.join(format!("{}.scores.svg", cell.id())), score_timeline_svg(&detection.test, labels))?;
                    if let Some(svg) = pr_curve_svg(&detection.test.point_scores, labels) {
                        fs::write(cells_dir.join(format!("{}.pr.svg", cell.id())), svg)?;
                    }
                }
                CellOutcome { cell: cell.clone(), result: Some(result), error: None }
            }
            Err(e) => {
                log::warn!("cell {} failed: {e}", cell.id());
                CellOutcome { cell: cell.clone(), result: None, error: Some(e.to_string()) }
            }
        };
        write_json(&path, &outcome)?;
        outcomes.push(outcome);
    }
    let report = ExperimentReport { plan: plan.name.clone(), outcomes };
    fs::write(out_dir.join("summary.csv"), report.summary_csv())?;
    Ok(report)
}

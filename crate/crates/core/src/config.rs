//! The run configuration: one document holding every stage's settings.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::detect::{DetectorConfig, DetectorKind};
use crate::error::{Error, Result};
use crate::features::{FeatureConfig, InputMode, SplitMode, WindowConfig};
use crate::inject::InjectConfig;
use crate::par::Execution;
use crate::repr::{CascadeSpec, Family, TrainConfig};
use crate::rng::derive_seed;
use crate::synth::SynthConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub ratios: [f64; 3],
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { ratios: [0.6, 0.2, 0.2] }
    }
}

/// Sizes of the main representation model; the family comes from the cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub latent_dim: usize,
    pub hidden: usize,
    pub d_model: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig { latent_dim: 64, hidden: 64, d_model: 64 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    /// The detector sees the flattened input window.
    None,
    Feedforward,
    Recurrent,
    Attention,
}

impl Representation {
    pub fn family(self) -> Option<Family> {
        match self {
            Representation::None => None,
            Representation::Feedforward => Some(Family::Feedforward),
            Representation::Recurrent => Some(Family::Recurrent),
            Representation::Attention => Some(Family::Attention),
        }
    }

    pub fn name(self) -> &'static str {
        self.family().map_or("none", Family::name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Injection {
    /// Starting levels follow the configured level distribution.
    Configured,
    /// Every episode starts at this 1-based level.
    SingleLevel(usize),
}

impl Injection {
    pub fn tag(self) -> String {
        match self {
            Injection::Configured => "configured".into(),
            Injection::SingleLevel(l) => format!("level{l}"),
        }
    }
}

/// One fully specified experiment cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSpec {
    pub representation: Representation,
    pub detector: DetectorKind,
    pub mode: SplitMode,
    pub input: InputMode,
    pub alpha: f64,
    pub oversample_ratio: f64,
    pub injection: Injection,
    pub replicate: u64,
}

impl Default for CellSpec {
    fn default() -> Self {
        CellSpec {
            representation: Representation::Attention,
            detector: DetectorKind::OcSvm,
            mode: SplitMode::Proposed,
            input: InputMode::EmbeddedLob,
            alpha: 0.8,
            oversample_ratio: 0.1,
            injection: Injection::Configured,
            replicate: 0,
        }
    }
}

impl CellSpec {
    /// File-name-safe identifier, unique within a plan.
    pub fn id(&self) -> String {
        format!(
            "{}-{}-{}-{}-a{}-b{}-{}-r{}",
            self.representation.name(),
            self.detector.name(),
            mode_name(self.mode),
            input_name(self.input),
            self.alpha,
            self.oversample_ratio,
            self.injection.tag(),
            self.replicate
        )
    }
}

pub fn mode_name(mode: SplitMode) -> &'static str {
    match mode {
        SplitMode::Traditional => "original",
        SplitMode::Proposed => "proposed",
    }
}

pub fn input_name(input: InputMode) -> &'static str {
    match input {
        InputMode::NoLob => "no_lob",
        InputMode::RawLob => "raw_lob",
        InputMode::EmbeddedLob => "embedded_lob",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Preset name (`table1`, `table2`, `table3`, `figure2`, `figure3`,
    /// `figure4`, `cell`) or `grid`.
    pub plan: String,
    pub replicates: Vec<u64>,
    /// Also write SVG score timelines and PR curves per cell.
    pub plots: bool,
    pub grid: GridConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig { plan: "table1".into(), replicates: vec![0], plots: false, grid: GridConfig::default() }
    }
}

/// Cartesian grid used by the `grid` plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub representations: Vec<Representation>,
    pub detectors: Vec<DetectorKind>,
    pub modes: Vec<SplitMode>,
    pub inputs: Vec<InputMode>,
    pub alphas: Vec<f64>,
    pub oversample_ratios: Vec<f64>,
    pub injections: Vec<Injection>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            representations: vec![Representation::Attention],
            detectors: vec![DetectorKind::OcSvm],
            modes: vec![SplitMode::Proposed],
            inputs: vec![InputMode::EmbeddedLob],
            alphas: vec![0.8],
            oversample_ratios: vec![0.1],
            injections: vec![Injection::Configured],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; every stage seed is derived from it per replicate.
    pub seed: u64,
    pub execution: Execution,
    pub synth: SynthConfig,
    pub inject: InjectConfig,
    pub features: FeatureConfig,
    pub split: SplitConfig,
    pub window: WindowConfig,
    pub encoder: EncoderConfig,
    pub cascade: CascadeSpec,
    pub train: TrainConfig,
    pub detector: DetectorConfig,
    /// The cell run by the single-stage commands.
    pub cell: CellSpec,
    pub experiment: ExperimentConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 2024,
            execution: Execution::Parallel,
            synth: SynthConfig::default(),
            inject: InjectConfig::default(),
            features: FeatureConfig::default(),
            split: SplitConfig::default(),
            window: WindowConfig { length: 32, stride: 4, train_stride: 8 },
            encoder: EncoderConfig::default(),
            cascade: CascadeSpec { pretrain_epochs: 6, ..CascadeSpec::default() },
            train: TrainConfig { epochs: 8, ..TrainConfig::default() },
            detector: DetectorConfig::default(),
            cell: CellSpec::default(),
            experiment: ExperimentConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads TOML, or JSON when the extension is `.json`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e == "json") { Self::from_json(&text) } else { Self::from_toml(&text) }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// SHA-256 of the canonical JSON form, hex-encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// First 16 hex digits of [`RunConfig::hash`], used as the run directory.
    pub fn short_hash(&self) -> String {
        self.hash()[..16].to_string()
    }

    pub fn validate(&self) -> Result<()> {
        let field = |name: &str, r: Result<()>| r.map_err(|e| Error::Config(format!("[{name}] {e}")));
        field("synth", self.synth.validate())?;
        field("inject", self.inject.validate())?;
        field("train", self.train.validate())?;
        let ratios_ok = self.split.ratios.iter().all(|&r| r > 0.0) && (self.split.ratios.iter().sum::<f64>() - 1.0).abs() < 1e-9;
        if !ratios_ok {
            return Err(Error::config("[split] ratios must be positive and sum to 1"));
        }
        if self.window.length < 2 || self.window.stride == 0 || self.window.train_stride == 0 {
            return Err(Error::config("[window] length must be >= 2 and strides >= 1"));
        }
        if self.encoder.latent_dim < 2 {
            return Err(Error::config("[encoder] latent_dim must be at least 2"));
        }
        if !(self.detector.nu > 0.0 && self.detector.nu <= 1.0) {
            return Err(Error::config("[detector] nu must lie in (0, 1]"));
        }
        if self.features.rolling_window == 0 {
            return Err(Error::config("[features] rolling_window must be positive"));
        }
        if self.experiment.replicates.is_empty() {
            return Err(Error::config("[experiment] replicates must not be empty"));
        }
        Ok(())
    }

    /// Copy with stage seeds derived from the master seed for `replicate`.
    pub fn for_replicate(&self, replicate: u64) -> RunConfig {
        let mut c = self.clone();
        c.synth.seed = derive_seed(self.seed, "synth", replicate);
        c.inject.seed = derive_seed(self.seed, "inject", replicate);
        c.cascade.seed = derive_seed(self.seed, "cascade", replicate);
        c.train.seed = derive_seed(self.seed, "train", replicate);
        c.detector.seed = derive_seed(self.seed, "detector", replicate);
        c
    }

    /// Seed of the main encoder's initialization.
    pub fn encoder_seed(&self, replicate: u64) -> u64 {
        derive_seed(self.seed, "encoder", replicate)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let cfg = RunConfig::default();
        let text = cfg.to_toml().unwrap();
        let back = RunConfig::from_toml(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn unknown_and_bad_fields_are_named() {
        let err = RunConfig::from_toml("[train]\nalpah = 0.5\n").unwrap_err().to_string();
        assert!(err.contains("alpah"), "{err}");
        let err = RunConfig::from_toml("[train]\nalpha = 1.5\n").unwrap_err().to_string();
        assert!(err.contains("[train]"), "{err}");
    }

    #[test]
    fn replicate_seeds_differ() {
        let cfg = RunConfig::default();
        assert_ne!(cfg.for_replicate(0).synth.seed, cfg.for_replicate(1).synth.seed);
        assert_eq!(cfg.for_replicate(2), cfg.for_replicate(2));
    }

    #[test]
    fn cell_ids() {
        assert_eq!(CellSpec::default().id(), "attention-ocsvm-proposed-embedded_lob-a0.8-b0.1-configured-r0");
        let c = CellSpec { injection: Injection::SingleLevel(1), representation: Representation::None, ..CellSpec::default() };
        assert_eq!(c.id(), "none-ocsvm-proposed-embedded_lob-a0.8-b0.1-level1-r0");
    }
}

use ndarray::{Array2, ArrayView2, Axis, concatenate};
use serde::{Deserialize, Serialize};

use super::model::{Autoencoder, EncoderSpec, Family};
use super::train::{TrainConfig, TrainReport, train};
use crate::error::{Error, Result};
use crate::features::WindowBatch;
use crate::par::{Execution, map_range};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fusion {
    /// Step `s` of the embedding is concatenated with step `s` of the manual
    /// features.
    #[default]
    PerStep,
    /// The mean embedding over the window is concatenated with every step.
    SingleVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CascadeSpec {
    pub lob_embed_dim: usize,
    pub d_model: usize,
    pub fusion: Fusion,
    /// Epochs of the standalone reconstruction pretraining.
    pub pretrain_epochs: usize,
    pub seed: u64,
}

impl Default for CascadeSpec {
    fn default() -> Self {
        CascadeSpec { lob_embed_dim: 32, d_model: 64, fusion: Fusion::PerStep, pretrain_epochs: 30, seed: 17 }
    }
}

/// A pretrained LOB encoder whose parameters can no longer change.
#[derive(Debug, Clone)]
pub struct FrozenEmbedder {
    model: Autoencoder,
    hash: String,
}

impl FrozenEmbedder {
    pub fn new(mut model: Autoencoder) -> Result<Self> {
        if model.spec().family != Family::Attention {
            return Err(Error::config("the LOB embedder must use the attention family"));
        }
        model.freeze();
        let hash = model.param_hash();
        Ok(FrozenEmbedder { model, hash })
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn model(&self) -> &Autoencoder {
        &self.model
    }

    pub fn embed_dim(&self) -> usize {
        self.model.spec().latent_dim
    }

    /// Fails if the parameters no longer match the hash taken at freezing.
    pub fn verify(&self) -> Result<()> {
        let now = self.model.param_hash();
        if now != self.hash {
            return Err(Error::Frozen(format!("parameter hash changed from {} to {now}", self.hash)));
        }
        Ok(())
    }

    /// Per-step embeddings (T×F_lob) for one LOB window.
    pub fn embed(&self, window: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.model.step_embeddings(window)
    }

    pub fn embed_batch(&self, windows: &WindowBatch, exec: Execution) -> Result<Vec<Array2<f64>>> {
        self.verify()?;
        map_range(exec, windows.len(), |i| self.embed(windows.window(i))).into_iter().collect()
    }
}

/// Pretrains an attention autoencoder on raw LOB windows with pure
/// reconstruction loss and freezes it.
pub fn pretrain_lob_embedder(
    lob_windows: &WindowBatch,
    spec: &CascadeSpec,
    config: &TrainConfig,
    exec: Execution,
) -> Result<(FrozenEmbedder, TrainReport)> {
    let enc = EncoderSpec {
        family: Family::Attention,
        input_dim: lob_windows.dim,
        window: lob_windows.length,
        latent_dim: spec.lob_embed_dim,
        hidden: spec.d_model,
        d_model: spec.d_model,
        seed: spec.seed,
    };
    let mut model = Autoencoder::new(enc)?;
    let config = TrainConfig { epochs: spec.pretrain_epochs, ..config.reconstruction_only() };
    let report = train(&mut model, lob_windows, &config, exec)?;
    Ok((FrozenEmbedder::new(model)?, report))
}

/// Per-step concatenation `[lob | manual]`.
pub fn fuse(lob_embedding: ArrayView2<f64>, manual: ArrayView2<f64>) -> Result<Array2<f64>> {
    if lob_embedding.nrows() != manual.nrows() {
        return Err(Error::shape(format!(
            "embedding has {} steps, manual features have {}",
            lob_embedding.nrows(),
            manual.nrows()
        )));
    }
    concatenate(Axis(1), &[lob_embedding, manual]).map_err(|e| Error::shape(e.to_string()))
}

/// Composite windows for the main model: embeddings of `lob` fused with the
/// matching windows of `manual`.
pub fn fuse_batch(
    embedder: &FrozenEmbedder,
    lob: &WindowBatch,
    manual: &WindowBatch,
    fusion: Fusion,
    exec: Execution,
) -> Result<WindowBatch> {
    if lob.anchors != manual.anchors || lob.length != manual.length {
        return Err(Error::shape("LOB and manual windows must share anchors and length"));
    }
    let embedded = embedder.embed_batch(lob, exec)?;
    let fused = map_range(exec, embedded.len(), |i| {
        let e = &embedded[i];
        match fusion {
            Fusion::PerStep => fuse(e.view(), manual.window(i)),
            Fusion::SingleVector => {
                let mean = e.mean_axis(Axis(0)).expect("non-empty window");
                let tiled = mean.broadcast(e.dim()).expect("row broadcast").to_owned();
                fuse(tiled.view(), manual.window(i))
            }
        }
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    manual.with_windows(fused)
}

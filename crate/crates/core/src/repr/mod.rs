//! Window autoencoders, the hybrid reconstruction/contrastive objective and
//! the cascaded LOB embedder.

mod batch;
mod cascade;
mod checkpoint;
mod loss;
mod model;
mod tape;
mod train;

pub use batch::{make_oversampled_batches, positives_per_batch};
pub use cascade::{CascadeSpec, FrozenEmbedder, Fusion, fuse, fuse_batch, pretrain_lob_embedder};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use loss::{SclOutcome, SclVariant, hybrid, hybrid_loss, loss_mse, loss_scl, scl_gradient};
pub use model::{Autoencoder, EncoderSpec, Family, Forward, sinusoidal};
pub use tape::{Tape, Var};
pub use train::{Adam, BatchGradient, EpochLoss, TrainConfig, TrainReport, batch_gradient, train};

use ndarray::Array2;

use crate::error::Result;
use crate::features::WindowBatch;
use crate::par::{Execution, map_range};

/// Latent vectors for every window in `windows`, one row each.
pub fn encode_batch(model: &Autoencoder, windows: &WindowBatch, exec: Execution) -> Result<Array2<f64>> {
    let rows = map_range(exec, windows.len(), |i| model.encode(windows.window(i)))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let f = model.spec().latent_dim;
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(Array2::from_shape_vec((windows.len(), f), flat).expect("one row per window"))
}

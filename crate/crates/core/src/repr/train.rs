use std::io::Write;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::batch::make_oversampled_batches;
use super::loss::{SclOutcome, SclVariant, hybrid, scl_gradient};
use super::model::Autoencoder;
use super::tape::Tape;
use crate::error::{Error, Result};
use crate::features::WindowBatch;
use crate::par::{Execution, map_range};
use crate::rng;

/// Windows per gradient partial sum. Fixed so the reduction order does not
/// depend on the thread count.
const REDUCE_CHUNK: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub alpha: f64,
    pub tau: f64,
    pub oversample_ratio: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub scl_variant: SclVariant,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha: 0.8,
            tau: 0.1,
            oversample_ratio: 0.1,
            batch_size: 256,
            epochs: 30,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 13,
            scl_variant: SclVariant::SumInside,
        }
    }
}

impl TrainConfig {
    /// Plain reconstruction training: no contrastive term, no oversampling.
    pub fn reconstruction_only(&self) -> TrainConfig {
        TrainConfig { alpha: 0.0, oversample_ratio: 0.0, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::config(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if !(self.tau > 0.0) {
            return Err(Error::config(format!("tau must be positive, got {}", self.tau)));
        }
        if !(0.0..1.0).contains(&self.oversample_ratio) {
            return Err(Error::config(format!("oversample_ratio must lie in [0, 1), got {}", self.oversample_ratio)));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be positive"));
        }
        if !(self.learning_rate >= 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::config("optimizer parameters out of range"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::config("epsilon must be positive"));
        }
        Ok(())
    }
}

/// Loss values and parameter gradients for one batch.
#[derive(Debug, Clone)]
pub struct BatchGradient {
    pub mse: f64,
    pub scl: Option<SclOutcome>,
    pub total: f64,
    pub grads: Vec<Array2<f64>>,
}

/// Hybrid loss and its exact gradient over `windows`.
///
/// Each window gets its own tape. The contrastive gradient with respect to
/// every latent is computed once for the whole batch and then seeded into the
/// per-window tapes alongside the reconstruction term.
pub fn batch_gradient(
    model: &Autoencoder,
    windows: &[ArrayView2<f64>],
    labels: &[u8],
    config: &TrainConfig,
    exec: Execution,
) -> Result<BatchGradient> {
    let n = windows.len();
    if n == 0 || labels.len() != n {
        return Err(Error::shape("batch needs windows with one label each"));
    }
    let params = model.params();
    let tapes = map_range(exec, n, |i| {
        let mut tape = Tape::new(params);
        model.forward(&mut tape, windows[i]).map(|f| (tape, f))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let mse = tapes.iter().map(|(t, f)| t.scalar(f.mse)).sum::<f64>() / n as f64;
    let alpha = config.alpha;
    let (scl, latent_grad) = if alpha > 0.0 && n >= 2 {
        let f = model.spec().latent_dim;
        let mut z = Array2::zeros((n, f));
        for (i, (t, fw)) in tapes.iter().enumerate() {
            z.row_mut(i).assign(&t.value(fw.latent).row(0));
        }
        let (outcome, g) = scl_gradient(&z, labels, config.tau, config.scl_variant)?;
        (Some(outcome), Some(g))
    } else {
        (None, None)
    };
    let total = hybrid(mse, scl.map_or(0.0, |s| s.value), alpha);

    let mse_seed = Array2::from_elem((1, 1), (1.0 - alpha) / n as f64);
    let chunks = n.div_ceil(REDUCE_CHUNK);
    let partials = map_range(exec, chunks, |c| {
        let mut acc: Vec<Array2<f64>> = params.iter().map(|p| Array2::zeros(p.dim())).collect();
        for i in c * REDUCE_CHUNK..((c + 1) * REDUCE_CHUNK).min(n) {
            let (tape, fw) = &tapes[i];
            let mut seeds = vec![(fw.mse, mse_seed.clone())];
            if let Some(g) = &latent_grad {
                seeds.push((fw.latent, g.row(i).insert_axis(ndarray::Axis(0)).to_owned() * alpha));
            }
            tape.backward_into(&seeds, &mut acc);
        }
        acc
    });
    let mut grads = partials.into_iter();
    let mut total_grads = grads.next().expect("at least one chunk");
    for part in grads {
        for (a, b) in total_grads.iter_mut().zip(part) {
            *a += &b;
        }
    }
    Ok(BatchGradient { mse, scl, total, grads: total_grads })
}

/// Adaptive-moment optimizer state.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

impl Adam {
    pub fn new(params: &[Array2<f64>], config: &TrainConfig) -> Self {
        let zeros = || params.iter().map(|p| Array2::zeros(p.dim())).collect::<Vec<_>>();
        Adam {
            lr: config.learning_rate,
            beta1: config.beta1,
            beta2: config.beta2,
            eps: config.epsilon,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn update(&mut self, params: &mut [Array2<f64>], grads: &[Array2<f64>]) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            ndarray::Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            });
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub mse: f64,
    pub scl: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub trace: Vec<EpochLoss>,
    pub batches: usize,
    /// Batches whose contrastive term had no anchor with a positive.
    pub inert_batches: usize,
}

impl TrainReport {
    pub fn write_trace_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "epoch,mse,scl,loss")?;
        for e in &self.trace {
            writeln!(out, "{},{},{},{}", e.epoch, e.mse, e.scl, e.total)?;
        }
        Ok(())
    }
}

/// Trains `model` on `data` for `config.epochs` epochs.
///
/// A positive contrastive weight needs labeled anomalies in every batch, so
/// it also needs a positive oversampling ratio; without one training stops
/// with [`Error::NoPositives`].
pub fn train(model: &mut Autoencoder, data: &WindowBatch, config: &TrainConfig, exec: Execution) -> Result<TrainReport> {
    config.validate()?;
    if model.is_frozen() {
        return Err(Error::Frozen(model.param_hash()));
    }
    if data.is_empty() {
        return Err(Error::shape("no training windows"));
    }
    if config.alpha > 0.0 && config.oversample_ratio == 0.0 {
        return Err(Error::NoPositives(format!(
            "contrastive weight {} needs a positive oversampling ratio",
            config.alpha
        )));
    }
    let mut adam = Adam::new(model.params(), config);
    let mut report = TrainReport::default();
    for epoch in 0..config.epochs {
        let seed = rng::derive_seed(config.seed, "epoch", epoch as u64);
        let batches = make_oversampled_batches(data, config.oversample_ratio, config.batch_size, seed)?;
        let (mut mse, mut scl, mut total) = (0.0, 0.0, 0.0);
        for (b, idx) in batches.iter().enumerate() {
            let windows: Vec<ArrayView2<f64>> = idx.iter().map(|&i| data.window(i)).collect();
            let labels: Vec<u8> = idx.iter().map(|&i| data.labels[i]).collect();
            let g = batch_gradient(model, &windows, &labels, config, exec)?;
            let scl_value = g.scl.map_or(0.0, |s| s.value);
            if !g.total.is_finite() || g.grads.iter().any(|a| a.iter().any(|v| !v.is_finite())) {
                let positives = labels.iter().filter(|&&l| l == 1).count();
                return Err(Error::NonFinite {
                    epoch,
                    batch: b,
                    diagnostics: format!(
                        "{} windows ({positives} anomalous), mse {}, scl {scl_value}, loss {}",
                        idx.len(),
                        g.mse,
                        g.total
                    ),
                });
            }
            if g.scl.is_some_and(|s| s.inert) {
                report.inert_batches += 1;
            }
            adam.update(model.params_mut()?, &g.grads);
            mse += g.mse;
            scl += scl_value;
            total += g.total;
        }
        let k = batches.len() as f64;
        report.batches += batches.len();
        report.trace.push(EpochLoss { epoch, mse: mse / k, scl: scl / k, total: total / k });
        log::debug!("epoch {epoch}: loss {:.6}", total / k);
    }
    if report.inert_batches > 0 {
        log::warn!("{} of {} batches had an inert contrastive term", report.inert_batches, report.batches);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::repr::model::{EncoderSpec, Family};
    use rand::Rng as _;

    fn tiny(family: Family, seed: u64) -> Autoencoder {
        let mut spec = EncoderSpec::new(family, 3, 4, 3);
        spec.hidden = 4;
        spec.d_model = 4;
        spec.seed = seed;
        Autoencoder::new(spec).unwrap()
    }

    fn windows(n: usize, t: usize, d: usize, seed: u64) -> Vec<Array2<f64>> {
        let mut r = rng::seeded(seed);
        (0..n).map(|_| Array2::from_shape_simple_fn((t, d), || r.random_range(-1.0..1.0))).collect()
    }

    /// Offsets the latent bias so latents sit near unit norm; near the origin
    /// the normalization is too curved for a 1e-4 central difference.
    fn unit_scale_latents(mut model: Autoencoder) -> Autoencoder {
        let idx = model
            .param_names()
            .iter()
            .position(|n| ["enc.b2", "enc.out.b", "enc.proj.b"].contains(&n.as_str()))
            .unwrap();
        model.params_mut().unwrap()[idx] += &ndarray::array![[1.0, -0.8, 0.6]];
        model
    }

    fn objective(model: &Autoencoder, ws: &[Array2<f64>], labels: &[u8], config: &TrainConfig) -> f64 {
        let views: Vec<_> = ws.iter().map(|w| w.view()).collect();
        batch_gradient(model, &views, labels, config, Execution::Sequential).unwrap().total
    }

    #[test]
    fn gradients_match_central_differences() {
        let ws = windows(5, 4, 3, 8);
        let labels = [0u8, 1, 0, 1, 0];
        for family in Family::ALL {
            for alpha in [0.0, 0.5, 1.0] {
                for variant in [SclVariant::SumInside, SclVariant::AveragedLog] {
                    let config = TrainConfig { alpha, tau: 0.5, scl_variant: variant, ..TrainConfig::default() };
                    let model = unit_scale_latents(tiny(family, 3));
                    let views: Vec<_> = ws.iter().map(|w| w.view()).collect();
                    let analytic = batch_gradient(&model, &views, &labels, &config, Execution::Sequential).unwrap().grads;
                    let eps = 1e-4;
                    for (pi, p) in model.params().iter().enumerate() {
                        for idx in ndarray::indices(p.dim()) {
                            let mut plus = model.clone();
                            plus.params_mut().unwrap()[pi][idx] += eps;
                            let mut minus = model.clone();
                            minus.params_mut().unwrap()[pi][idx] -= eps;
                            let num = (objective(&plus, &ws, &labels, &config) - objective(&minus, &ws, &labels, &config)) / (2.0 * eps);
                            let a = analytic[pi][idx];
                            let rel = (a - num).abs() / a.abs().max(num.abs()).max(1e-3);
                            assert!(
                                rel < 1e-5,
                                "{} {} alpha={alpha} {variant:?}: {a} vs {num}",
                                family.name(),
                                model.param_names()[pi]
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn zero_learning_rate_leaves_parameters() {
        let ws = windows(8, 4, 3, 1);
        let data = WindowBatch::from_windows(ws, vec![0, 1, 0, 0, 1, 0, 0, 0]).unwrap();
        let mut model = tiny(Family::Recurrent, 1);
        let before = model.param_hash();
        let config = TrainConfig { learning_rate: 0.0, batch_size: 4, epochs: 2, oversample_ratio: 0.25, ..TrainConfig::default() };
        train(&mut model, &data, &config, Execution::Sequential).unwrap();
        assert_eq!(before, model.param_hash());
    }

    #[test]
    fn contrastive_weight_without_oversampling_aborts() {
        let data = WindowBatch::from_windows(windows(4, 4, 3, 1), vec![0, 1, 0, 0]).unwrap();
        let mut model = tiny(Family::Feedforward, 1);
        let config = TrainConfig { oversample_ratio: 0.0, epochs: 1, ..TrainConfig::default() };
        assert!(matches!(train(&mut model, &data, &config, Execution::Sequential), Err(Error::NoPositives(_))));
    }

    #[test]
    fn frozen_model_cannot_train() {
        let data = WindowBatch::from_windows(windows(4, 4, 3, 1), vec![0; 4]).unwrap();
        let mut model = tiny(Family::Feedforward, 1);
        model.freeze();
        let config = TrainConfig::default().reconstruction_only();
        assert!(matches!(train(&mut model, &data, &config, Execution::Sequential), Err(Error::Frozen(_))));
    }

    #[test]
    fn overfits_one_window() {
        let w = windows(1, 4, 3, 6).remove(0);
        let data = WindowBatch::from_windows(vec![w.clone()], vec![0]).unwrap();
        for family in Family::ALL {
            let mut spec = EncoderSpec::new(family, 3, 4, 4);
            spec.hidden = 16;
            spec.d_model = 16;
            let mut model = Autoencoder::new(spec).unwrap();
            let config = TrainConfig { learning_rate: 1e-2, batch_size: 1, epochs: 3000, ..TrainConfig::default() }.reconstruction_only();
            train(&mut model, &data, &config, Execution::Sequential).unwrap();
            let recon = model.reconstruct(w.view()).unwrap();
            let mse = crate::repr::loss_mse(w.view(), recon.view()).unwrap();
            assert!(mse < 1e-4, "{}: {mse}", family.name());
        }
    }

    #[test]
    fn fixed_batch_loss_decreases_early() {
        let data = WindowBatch::from_windows(windows(8, 4, 3, 12), vec![0; 8]).unwrap();
        for family in Family::ALL {
            let mut model = tiny(family, 2);
            let config = TrainConfig { batch_size: 8, epochs: 12, ..TrainConfig::default() }.reconstruction_only();
            let report = train(&mut model, &data, &config, Execution::Sequential).unwrap();
            assert!(report.trace.windows(2).all(|p| p[1].total < p[0].total), "{}", family.name());
        }
    }

    #[test]
    fn training_is_reproducible_and_thread_independent() {
        let ws = windows(40, 4, 3, 2);
        let labels: Vec<u8> = (0..40).map(|i| (i % 7 == 0) as u8).collect();
        let data = WindowBatch::from_windows(ws, labels).unwrap();
        let config = TrainConfig { batch_size: 20, epochs: 3, oversample_ratio: 0.2, ..TrainConfig::default() };
        let run = |exec| {
            let mut m = tiny(Family::Attention, 4);
            let r = train(&mut m, &data, &config, exec).unwrap();
            (m.param_hash(), r.trace)
        };
        let a = run(Execution::Sequential);
        assert_eq!(a, run(Execution::Sequential));
        assert_eq!(a, run(Execution::Parallel));
    }

    #[test]
    fn trace_csv_layout() {
        let report = TrainReport {
            trace: vec![EpochLoss { epoch: 0, mse: 0.5, scl: 0.25, total: 0.3 }],
            batches: 1,
            inert_batches: 0,
        };
        let mut out = Vec::new();
        report.write_trace_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "epoch,mse,scl,loss\n0,0.5,0.25,0.3\n");
    }
}

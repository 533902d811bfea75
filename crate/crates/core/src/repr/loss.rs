use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const NORM_FLOOR: f64 = 1e-12;

/// Placement of the positive-pair sum in the contrastive term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SclVariant {
    /// `-log(Σ_p exp(s_ip/τ) / Σ_a exp(s_ia/τ))`
    #[default]
    SumInside,
    /// `-(1/|P|) Σ_p log(exp(s_ip/τ) / Σ_a exp(s_ia/τ))`
    AveragedLog,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SclOutcome {
    pub value: f64,
    /// Number of anchors with at least one positive.
    pub anchors: usize,
    /// True when no anchor had a positive, so the term contributes nothing.
    pub inert: bool,
}

pub fn loss_mse(window: ArrayView2<f64>, reconstruction: ArrayView2<f64>) -> Result<f64> {
    if window.dim() != reconstruction.dim() {
        return Err(Error::shape(format!("window {:?} vs reconstruction {:?}", window.dim(), reconstruction.dim())));
    }
    let n = window.len();
    if n == 0 {
        return Ok(0.0);
    }
    Ok(window.iter().zip(reconstruction.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n as f64)
}

pub fn hybrid(mse: f64, scl: f64, alpha: f64) -> f64 {
    (1.0 - alpha) * mse + alpha * scl
}

/// Hybrid objective over a batch: the window MSEs are averaged, the
/// contrastive term runs over the stacked latents.
pub fn hybrid_loss(
    windows: &[ArrayView2<f64>],
    reconstructions: &[ArrayView2<f64>],
    latents: &Array2<f64>,
    labels: &[u8],
    alpha: f64,
    tau: f64,
    variant: SclVariant,
) -> Result<f64> {
    if windows.len() != reconstructions.len() || windows.is_empty() {
        return Err(Error::shape("windows and reconstructions must be non-empty and paired"));
    }
    let mut mse = 0.0;
    for (w, r) in windows.iter().zip(reconstructions) {
        mse += loss_mse(w.view(), r.view())?;
    }
    mse /= windows.len() as f64;
    let scl = loss_scl(latents, labels, tau, variant)?.value;
    Ok(hybrid(mse, scl, alpha))
}

pub fn loss_scl(latents: &Array2<f64>, labels: &[u8], tau: f64, variant: SclVariant) -> Result<SclOutcome> {
    scl_with_grad(latents, labels, tau, variant, false).map(|(o, _)| o)
}

/// Contrastive loss and its gradient with respect to the raw (unnormalized)
/// latents, one row per sample.
pub fn scl_gradient(latents: &Array2<f64>, labels: &[u8], tau: f64, variant: SclVariant) -> Result<(SclOutcome, Array2<f64>)> {
    scl_with_grad(latents, labels, tau, variant, true).map(|(o, g)| (o, g.expect("requested")))
}

fn scl_with_grad(
    latents: &Array2<f64>,
    labels: &[u8],
    tau: f64,
    variant: SclVariant,
    want_grad: bool,
) -> Result<(SclOutcome, Option<Array2<f64>>)> {
    if !(tau > 0.0) {
        return Err(Error::config(format!("temperature must be positive, got {tau}")));
    }
    let b = latents.nrows();
    if labels.len() != b {
        return Err(Error::shape(format!("{} latents but {} labels", b, labels.len())));
    }
    if b < 2 {
        return Err(Error::shape("contrastive loss needs a batch of at least two"));
    }
    let norms: Vec<f64> = latents.rows().into_iter().map(|r| r.dot(&r).sqrt().max(NORM_FLOOR)).collect();
    let mut u = latents.clone();
    for (mut row, n) in u.rows_mut().into_iter().zip(&norms) {
        row /= *n;
    }
    let logits = u.dot(&u.t()) / tau;

    let anchors: Vec<usize> = (0..b).filter(|&i| (0..b).any(|j| j != i && labels[j] == labels[i])).collect();
    if anchors.is_empty() {
        let grad = want_grad.then(|| Array2::zeros(latents.dim()));
        return Ok((SclOutcome { value: 0.0, anchors: 0, inert: true }, grad));
    }
    let scale = 1.0 / anchors.len() as f64;
    let mut total = 0.0;
    let mut w = Array2::<f64>::zeros((b, b));
    for &i in &anchors {
        let row = logits.row(i);
        let shift = (0..b).filter(|&j| j != i).map(|j| row[j]).fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        let mut numer = 0.0;
        let mut pos_count = 0usize;
        let mut pos_logit_sum = 0.0;
        for j in (0..b).filter(|&j| j != i) {
            let e = (row[j] - shift).exp();
            denom += e;
            if labels[j] == labels[i] {
                numer += e;
                pos_count += 1;
                pos_logit_sum += row[j];
            }
        }
        let log_denom = denom.ln() + shift;
        let term = match variant {
            SclVariant::SumInside => log_denom - (numer.ln() + shift),
            SclVariant::AveragedLog => log_denom - pos_logit_sum / pos_count as f64,
        };
        total += term;
        if want_grad {
            for j in (0..b).filter(|&j| j != i) {
                let e = (row[j] - shift).exp();
                let positive = labels[j] == labels[i];
                let pull = match variant {
                    SclVariant::SumInside if positive => e / numer,
                    SclVariant::AveragedLog if positive => 1.0 / pos_count as f64,
                    _ => 0.0,
                };
                w[[i, j]] = scale * (e / denom - pull) / tau;
            }
        }
    }
    let outcome = SclOutcome { value: total * scale, anchors: anchors.len(), inert: false };
    if !want_grad {
        return Ok((outcome, None));
    }
    let sym = &w + &w.t();
    let gu = sym.dot(&u);
    let mut gz = Array2::zeros(latents.dim());
    for i in 0..b {
        let ui = u.row(i);
        let gi = gu.row(i);
        let radial = ui.dot(&gi);
        let mut out = gz.row_mut(i);
        out.assign(&((&gi - &(&ui * radial)) / norms[i]));
    }
    Ok((outcome, Some(gz)))
}

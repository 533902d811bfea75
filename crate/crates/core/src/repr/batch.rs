use rand::Rng as _;
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::features::WindowBatch;
use crate::rng;

/// Number of positives placed in every oversampled batch.
pub fn positives_per_batch(ratio: f64, batch_size: usize) -> usize {
    (ratio * batch_size as f64).round() as usize
}

/// Index batches over `train`.
///
/// With `ratio = 0` the batches partition a seeded permutation of all
/// windows. Otherwise every batch holds exactly `round(ratio·batch_size)`
/// positives drawn with replacement, topped up with negatives taken in order
/// from a seeded permutation of the negative pool; the epoch ends when the
/// negative pool is exhausted.
pub fn make_oversampled_batches(train: &WindowBatch, ratio: f64, batch_size: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::config("batch size must be positive"));
    }
    if !(0.0..1.0).contains(&ratio) {
        return Err(Error::config(format!("oversampling ratio must lie in [0, 1), got {ratio}")));
    }
    let mut rng = rng::derived(seed, "batches", 0);
    if ratio == 0.0 {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng);
        return Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect());
    }
    let (positives, mut negatives): (Vec<usize>, Vec<usize>) = (0..train.len()).partition(|&i| train.labels[i] == 1);
    if positives.is_empty() {
        return Err(Error::NoPositives("the training split has no anomalous windows to oversample".into()));
    }
    let k = positives_per_batch(ratio, batch_size);
    if k >= batch_size {
        return Err(Error::config(format!("ratio {ratio} leaves no room for negatives in a batch of {batch_size}")));
    }
    negatives.shuffle(&mut rng);
    let per_batch = batch_size - k;
    let count = negatives.len().div_ceil(per_batch).max(1);
    let mut batches = Vec::with_capacity(count);
    for b in 0..count {
        let mut batch: Vec<usize> = (0..k).map(|_| positives[rng.random_range(0..positives.len())]).collect();
        let lo = (b * per_batch).min(negatives.len());
        let hi = ((b + 1) * per_batch).min(negatives.len());
        batch.extend_from_slice(&negatives[lo..hi]);
        batches.push(batch);
    }
    Ok(batches)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use std::collections::BTreeMap;

    fn batch_with(labels: Vec<u8>) -> WindowBatch {
        let windows = labels.iter().map(|_| Array2::zeros((2, 1))).collect();
        WindowBatch::from_windows(windows, labels).unwrap()
    }

    #[test]
    fn fixed_positive_count() {
        let labels: Vec<u8> = (0..3000).map(|i| (i % 37 == 0) as u8).collect();
        let train = batch_with(labels);
        let batches = make_oversampled_batches(&train, 0.1, 256, 3).unwrap();
        assert!(!batches.is_empty());
        for b in &batches {
            assert_eq!(b.iter().filter(|&&i| train.labels[i] == 1).count(), 26);
        }
        let negatives: usize = batches.iter().map(|b| b.len() - 26).sum();
        assert_eq!(negatives, train.len() - train.positives());
    }

    #[test]
    fn zero_ratio_is_a_permutation() {
        let train = batch_with((0..1000).map(|i| (i % 10 == 0) as u8).collect());
        let batches = make_oversampled_batches(&train, 0.0, 64, 9).unwrap();
        let mut all: Vec<usize> = batches.concat();
        assert_ne!(all, (0..1000).collect::<Vec<_>>());
        all.sort_unstable();
        assert_eq!(all, (0..1000).collect::<Vec<_>>());
        assert_eq!(batches, make_oversampled_batches(&train, 0.0, 64, 9).unwrap());
    }

    #[test]
    fn empty_pool_is_an_error() {
        let train = batch_with(vec![0; 50]);
        let err = make_oversampled_batches(&train, 0.1, 16, 1).unwrap_err();
        assert!(err.to_string().contains("SCL requires labeled anomalies"));
    }

    #[test]
    fn small_pool_repeats_like_replacement_sampling() {
        let mut labels = vec![0u8; 200];
        for i in [5, 70, 150] {
            labels[i] = 1;
        }
        let train = batch_with(labels);
        let batches = make_oversampled_batches(&train, 0.5, 64, 21).unwrap();

        // Replay the draw sequence independently: shuffle of the negative
        // pool, then 32 uniform positive picks per batch.
        let mut rng = rng::derived(21, "batches", 0);
        let mut negatives: Vec<usize> = (0..200).filter(|i| ![5, 70, 150].contains(i)).collect();
        negatives.shuffle(&mut rng);
        let mut expect: BTreeMap<usize, usize> = BTreeMap::new();
        for _ in 0..negatives.len().div_ceil(32) {
            for _ in 0..32 {
                *expect.entry([5, 70, 150][rng.random_range(0..3)]).or_default() += 1;
            }
        }
        let mut got: BTreeMap<usize, usize> = BTreeMap::new();
        for b in &batches {
            for &i in b.iter().filter(|&&i| train.labels[i] == 1) {
                *got.entry(i).or_default() += 1;
            }
        }
        assert_eq!(got, expect);
        assert!(got.values().all(|&c| c > 32));
    }

    #[test]
    fn bad_ratio_rejected() {
        let train = batch_with(vec![0, 1, 0, 1]);
        assert!(make_oversampled_batches(&train, 1.0, 4, 0).is_err());
        assert!(make_oversampled_batches(&train, 0.9, 4, 0).is_err());
    }
}

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use super::LabeledDataset;
use crate::{math, seed, Error, Result};

/// Draws `n` samples from `num_classes` isotropic unit-variance Gaussian
/// blobs in `num_features` dimensions. Class means are random unit
/// directions scaled by `class_separation`. Labels are balanced (dealt
/// round-robin, then shuffled) and features are min-max normalized.
pub fn generate_synthetic(
    n: usize,
    num_features: usize,
    num_classes: usize,
    class_separation: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if num_features == 0 {
        return Err(Error::invalid("num_features", "must be at least 1"));
    }
    if num_classes < 2 {
        return Err(Error::invalid("num_classes", "must be at least 2"));
    }
    if n < num_classes {
        return Err(Error::invalid("n", "must be at least the number of classes"));
    }
    if !(class_separation.is_finite() && class_separation >= 0.0) {
        return Err(Error::invalid("class_separation", "must be finite and non-negative"));
    }

    let mut rng = seed::rng(seed);
    let mut means = Vec::with_capacity(num_classes * num_features);
    for _ in 0..num_classes {
        let dir: Vec<f64> = (0..num_features)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let norm = math::norm(&dir).max(f64::MIN_POSITIVE);
        means.extend(dir.iter().map(|v| v / norm * class_separation));
    }

    let mut labels: Vec<u32> = (0..n).map(|i| (i % num_classes) as u32).collect();
    labels.shuffle(&mut rng);

    let mut features = Vec::with_capacity(n * num_features);
    for &y in &labels {
        let mean = &means[y as usize * num_features..(y as usize + 1) * num_features];
        features.extend(
            mean.iter()
                .map(|&m| m + rng.sample::<f64, _>(StandardNormal)),
        );
    }
    LabeledDataset::from_raw(features, labels, num_features, num_classes)
}

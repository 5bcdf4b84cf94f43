//! Performance and fairness measures.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::{ClientShard, LabeledDataset};
use crate::model::{self, ModelParams};
use crate::{math, ClientId, Error, Result};

/// Top-1 accuracy of `w` on each client's held-out samples.
pub fn accuracy_per_client(
    w: &ModelParams,
    test_shards: &[ClientShard],
    ds: &LabeledDataset,
) -> Result<Vec<f64>> {
    if test_shards.is_empty() {
        return Err(Error::Empty { what: "test shard list" });
    }
    test_shards
        .iter()
        .map(|s| {
            if s.is_empty() {
                return Err(Error::Empty { what: "test shard" });
            }
            model::accuracy(w, ds, &s.indices)
        })
        .collect()
}

/// Population variance (divides by `N`).
pub fn variance_uniformity(perf: &[f64]) -> Result<f64> {
    if perf.is_empty() {
        return Err(Error::Empty { what: "performance vector" });
    }
    let mean = math::mean(perf);
    Ok(perf.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / perf.len() as f64)
}

/// `mean(perf) / sqrt(mean(perf^2))`: the cosine between `perf` and the
/// all-ones vector.
pub fn cosine_uniformity(perf: &[f64]) -> Result<f64> {
    if perf.is_empty() {
        return Err(Error::Empty { what: "performance vector" });
    }
    if perf.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::invalid("perf", "entries must be finite and non-negative"));
    }
    let mean_sq = perf.iter().map(|p| p * p).sum::<f64>() / perf.len() as f64;
    if mean_sq == 0.0 {
        return Err(Error::invalid("perf", "all-zero vector has no direction"));
    }
    Ok((math::mean(perf) / math::sqrt(mean_sq)).min(1.0))
}

/// Jain's index `(sum c)^2 / (N sum c^2)` over participation counts.
pub fn participation_fairness(counts: &[u32]) -> Result<f64> {
    if counts.is_empty() {
        return Err(Error::Empty { what: "participation counts" });
    }
    let sum: f64 = counts.iter().map(|&c| f64::from(c)).sum();
    let sum_sq: f64 = counts.iter().map(|&c| f64::from(c) * f64::from(c)).sum();
    if sum_sq == 0.0 {
        return Err(Error::invalid("counts", "no client has participated"));
    }
    Ok(sum * sum / (counts.len() as f64 * sum_sq))
}

/// Mean and sample standard deviation (`n - 1`). The deviation is `None`
/// for fewer than two values.
pub fn mean_and_sample_std(values: &[f64]) -> Result<(f64, Option<f64>)> {
    if values.is_empty() {
        return Err(Error::Empty { what: "value list" });
    }
    let mean = math::mean(values);
    if values.len() < 2 {
        return Ok((mean, None));
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    Ok((mean, Some(math::sqrt(ss / (values.len() - 1) as f64))))
}

/// Metrics of one completed round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// 1-based round index.
    pub round: u32,
    pub policy: String,
    pub seed: u64,
    pub global_accuracy: f64,
    pub per_client_accuracy: Vec<f64>,
    pub accuracy_variance: f64,
    /// `None` when every client scores zero.
    pub cosine_uniformity: Option<f64>,
    pub participation_counts: Vec<u32>,
    pub jain_participation: f64,
    /// Simulated wall clock at the end of the round, seconds.
    pub sim_clock_s: f64,
    /// Selected ids in draw order.
    pub selected: Vec<ClientId>,
    /// Mean of the selected clients' final-batch losses.
    pub mean_batch_loss: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn variance_examples() {
        assert_eq!(variance_uniformity(&[0.9, 0.9, 0.9]).unwrap(), 0.0);
        assert_eq!(variance_uniformity(&[0.0, 1.0]).unwrap(), 0.25);
        assert!(variance_uniformity(&[]).is_err());
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_uniformity(&[0.7; 5]).unwrap(), 1.0);
        let v = cosine_uniformity(&[3.0, 4.0]).unwrap();
        assert!((v - 0.9899494936611666).abs() < 1e-15);
        assert!((cosine_uniformity(&[6.0, 8.0]).unwrap() - v).abs() < 1e-15);
        assert!(cosine_uniformity(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn jain_examples() {
        assert_eq!(participation_fairness(&[4, 4, 4]).unwrap(), 1.0);
        assert_eq!(participation_fairness(&[1, 0]).unwrap(), 0.5);
        assert!(participation_fairness(&[0, 0]).is_err());
    }

    #[test]
    fn sample_std_over_three_seeds() {
        let (mean, std) = mean_and_sample_std(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(mean, 2.0);
        assert_eq!(std, Some(1.0));
        assert_eq!(mean_and_sample_std(&[5.0]).unwrap(), (5.0, None));
    }

    #[test]
    fn perfect_classifier_scores_one_everywhere() {
        // One feature; class 1 iff x > 0.5.
        let ds = LabeledDataset::new(vec![0.1, 0.2, 0.8, 0.9], vec![0, 0, 1, 1], 1, 2).unwrap();
        let w = ModelParams::from_values(2, 1, vec![-10.0, 10.0, 5.0, -5.0]).unwrap();
        let shards = vec![
            ClientShard::new(ClientId(0), vec![0, 3]),
            ClientShard::new(ClientId(1), vec![1, 2]),
        ];
        assert_eq!(accuracy_per_client(&w, &shards, &ds).unwrap(), vec![1.0, 1.0]);
        let empty = vec![ClientShard::new(ClientId(0), vec![])];
        assert!(accuracy_per_client(&w, &empty, &ds).is_err());
    }
}

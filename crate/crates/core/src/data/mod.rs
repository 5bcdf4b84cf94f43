//! Labeled datasets and their division across simulated clients.

mod partition;
mod synthetic;

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::{seed, ClientId, Error, Result};

pub use partition::{
    partition_dirichlet, partition_iid, partition_label_shard, PartitionSpec,
    DIRICHLET_RESAMPLE_CAP,
};
pub use synthetic::generate_synthetic;

/// Row-major feature matrix with integer class labels. Features are always
/// normalized into `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Vec<f64>,
    labels: Vec<u32>,
    num_features: usize,
    num_classes: usize,
}

impl LabeledDataset {
    /// Builds a dataset from already-normalized features.
    pub fn new(
        features: Vec<f64>,
        labels: Vec<u32>,
        num_features: usize,
        num_classes: usize,
    ) -> Result<Self> {
        if num_features == 0 {
            return Err(Error::invalid("num_features", "must be at least 1"));
        }
        if num_classes < 2 {
            return Err(Error::invalid("num_classes", "must be at least 2"));
        }
        if features.len() != labels.len() * num_features {
            return Err(Error::ShapeMismatch {
                expected: format!("{} feature values", labels.len() * num_features),
                found: format!("{}", features.len()),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&y| y as usize >= num_classes) {
            return Err(Error::invalid(
                "labels",
                format!("label {bad} outside [0, {num_classes})"),
            ));
        }
        if let Some(bad) = features
            .iter()
            .find(|v| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::invalid(
                "features",
                format!("value {bad} outside [0, 1]"),
            ));
        }
        Ok(Self {
            features,
            labels,
            num_features,
            num_classes,
        })
    }

    /// Builds a dataset from raw features, rescaling every column to `[0, 1]`
    /// by its observed minimum and maximum. Constant columns map to 0.
    pub fn from_raw(
        mut features: Vec<f64>,
        labels: Vec<u32>,
        num_features: usize,
        num_classes: usize,
    ) -> Result<Self> {
        if num_features == 0 {
            return Err(Error::invalid("num_features", "must be at least 1"));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("features", "non-finite value"));
        }
        let rows = features.len() / num_features;
        for col in 0..num_features {
            let column = (0..rows).map(|r| features[r * num_features + col]);
            let (lo, hi) = column.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            });
            let span = hi - lo;
            for r in 0..rows {
                let v = &mut features[r * num_features + col];
                *v = if span > 0.0 {
                    ((*v - lo) / span).clamp(0.0, 1.0)
                } else {
                    0.0
                };
            }
        }
        Self::new(features, labels, num_features, num_classes)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.num_features..(i + 1) * self.num_features]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i] as usize
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    /// Fails with [`Error::IndexOutOfRange`] on the first invalid index.
    pub fn check_indices(&self, indices: &[usize]) -> Result<()> {
        match indices.iter().find(|&&i| i >= self.len()) {
            Some(&index) => Err(Error::IndexOutOfRange {
                index,
                len: self.len(),
            }),
            None => Ok(()),
        }
    }

    /// Per-class sample counts over `indices`.
    pub fn class_histogram(&self, indices: &[usize]) -> Vec<usize> {
        let mut hist = alloc::vec![0; self.num_classes];
        for &i in indices {
            hist[self.label(i)] += 1;
        }
        hist
    }
}

/// The samples owned by one client, as indices into the parent dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientShard {
    pub owner: ClientId,
    pub indices: Vec<usize>,
}

impl ClientShard {
    pub fn new(owner: ClientId, indices: Vec<usize>) -> Self {
        Self { owner, indices }
    }

    /// Sample count `n_i`.
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Splits the shard into `(train, test)`, holding out `floor(fraction * n)`
    /// samples clamped to `[1, n - 1]`. Requires at least two samples.
    pub fn split_holdout(&self, fraction: f64, seed: u64) -> Result<(ClientShard, ClientShard)> {
        if !(0.0..1.0).contains(&fraction) || fraction <= 0.0 {
            return Err(Error::invalid("holdout_fraction", "must lie in (0, 1)"));
        }
        let n = self.len();
        if n < 2 {
            return Err(Error::invalid(
                "shard",
                format!("client {} needs at least 2 samples for a held-out split, has {n}", self.owner),
            ));
        }
        let n_test = ((fraction * n as f64) as usize).clamp(1, n - 1);
        let mut shuffled = self.indices.clone();
        shuffled.shuffle(&mut seed::rng(seed));
        let mut test = shuffled.split_off(n - n_test);
        let mut train = shuffled;
        train.sort_unstable();
        test.sort_unstable();
        Ok((
            ClientShard::new(self.owner, train),
            ClientShard::new(self.owner, test),
        ))
    }
}

/// Checks the partition invariants: pairwise disjoint, covering `0..n`, no
/// empty shard. Returns the first violation found.
pub fn validate_partition(shards: &[ClientShard], n: usize) -> Result<()> {
    let mut seen = alloc::vec![false; n];
    for shard in shards {
        if shard.is_empty() {
            return Err(Error::Empty { what: "client shard" });
        }
        for &i in &shard.indices {
            if i >= n {
                return Err(Error::IndexOutOfRange { index: i, len: n });
            }
            if core::mem::replace(&mut seen[i], true) {
                return Err(Error::invalid(
                    "partition",
                    format!("sample {i} assigned twice"),
                ));
            }
        }
    }
    let covered = seen.iter().filter(|&&s| s).count();
    if covered != n {
        return Err(Error::CountMismatch {
            what: "partition coverage",
            expected: n,
            found: covered,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn rejects_out_of_range_labels_and_features() {
        assert!(LabeledDataset::new(vec![0.5, 0.5], vec![2], 2, 2).is_err());
        assert!(LabeledDataset::new(vec![1.5, 0.5], vec![0], 2, 2).is_err());
        assert!(LabeledDataset::new(vec![0.5], vec![0], 2, 2).is_err());
        assert!(LabeledDataset::new(vec![0.5, 0.5], vec![1], 2, 2).is_ok());
    }

    #[test]
    fn raw_features_are_rescaled_per_column() {
        let ds = LabeledDataset::from_raw(vec![-1.0, 5.0, 3.0, 5.0], vec![0, 1], 2, 2).unwrap();
        assert_eq!(ds.row(0), &[0.0, 0.0]);
        assert_eq!(ds.row(1), &[1.0, 0.0]);
    }

    #[test]
    fn holdout_split_is_disjoint_and_clamped() {
        let shard = ClientShard::new(ClientId(3), (0..10).collect());
        let (train, test) = shard.split_holdout(0.2, 9).unwrap();
        assert_eq!(test.len(), 2);
        assert_eq!(train.len(), 8);
        assert!(test.indices.iter().all(|i| !train.indices.contains(i)));

        let tiny = ClientShard::new(ClientId(0), vec![4, 5]);
        let (train, test) = tiny.split_holdout(0.2, 1).unwrap();
        assert_eq!((train.len(), test.len()), (1, 1));

        let single = ClientShard::new(ClientId(0), vec![4]);
        assert!(single.split_holdout(0.2, 1).is_err());
    }
}

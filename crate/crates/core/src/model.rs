//! Multinomial logistic regression.
//!
//! The loss is the mean softmax cross-entropy, which is convex in the
//! parameters and Lipschitz on bounded inputs. Parameters are stored flat:
//! the `classes x features` weight matrix row by row, followed by one bias
//! per class.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{ClientShard, LabeledDataset};
use crate::{math, seed, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    classes: usize,
    features: usize,
    values: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(classes: usize, features: usize) -> Self {
        Self {
            classes,
            features,
            values: vec![0.0; classes * features + classes],
        }
    }

    pub fn for_dataset(ds: &LabeledDataset) -> Self {
        Self::zeros(ds.num_classes(), ds.num_features())
    }

    pub fn from_values(classes: usize, features: usize, values: Vec<f64>) -> Result<Self> {
        let expected = classes * features + classes;
        if values.len() != expected {
            return Err(Error::ShapeMismatch {
                expected: format!("{expected} parameters"),
                found: format!("{}", values.len()),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("values", "parameters must be finite"));
        }
        Ok(Self {
            classes,
            features,
            values,
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn check_dataset(&self, ds: &LabeledDataset) -> Result<()> {
        if self.classes != ds.num_classes() || self.features != ds.num_features() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} classes x {} features", ds.num_classes(), ds.num_features()),
                found: format!("{} classes x {} features", self.classes, self.features),
            });
        }
        Ok(())
    }

    pub fn check_same_shape(&self, other: &ModelParams) -> Result<()> {
        if self.classes != other.classes || self.features != other.features {
            return Err(Error::ShapeMismatch {
                expected: format!("{} x {}", self.classes, self.features),
                found: format!("{} x {}", other.classes, other.features),
            });
        }
        Ok(())
    }

    /// `self - step * direction`. Fails on length mismatch or a non-finite
    /// result.
    pub fn descend(&self, step: f64, direction: &[f64]) -> Result<ModelParams> {
        if direction.len() != self.values.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} gradient entries", self.values.len()),
                found: format!("{}", direction.len()),
            });
        }
        let values: Vec<f64> = self
            .values
            .iter()
            .zip(direction)
            .map(|(w, g)| w - step * g)
            .collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("model", "update produced a non-finite parameter"));
        }
        Ok(Self {
            classes: self.classes,
            features: self.features,
            values,
        })
    }

    fn weights(&self) -> &[f64] {
        &self.values[..self.classes * self.features]
    }

    fn bias(&self) -> &[f64] {
        &self.values[self.classes * self.features..]
    }

    /// Class scores `W x + b` written into `out`.
    pub fn logits_into(&self, x: &[f64], out: &mut [f64]) {
        let (w, b) = (self.weights(), self.bias());
        for (k, slot) in out.iter_mut().enumerate() {
            *slot = math::dot(&w[k * self.features..(k + 1) * self.features], x) + b[k];
        }
    }

    /// Top-1 class. Ties go to the lowest class id.
    pub fn predict(&self, x: &[f64]) -> usize {
        let mut z = vec![0.0; self.classes];
        self.logits_into(x, &mut z);
        argmax(&z)
    }
}

fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in z.iter().enumerate().skip(1) {
        if v > z[best] {
            best = k;
        }
    }
    best
}

/// Mean loss together with the per-sample values it was computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub mean_loss: f64,
    pub per_sample: Vec<f64>,
}

fn check_batch(w: &ModelParams, ds: &LabeledDataset, indices: &[usize]) -> Result<()> {
    w.check_dataset(ds)?;
    if indices.is_empty() {
        return Err(Error::Empty { what: "index list" });
    }
    ds.check_indices(indices)
}

/// Cross-entropy for one sample, optionally accumulating `(p - onehot) ⊗ [x, 1]`
/// into `grad`. `z` is scratch space of length `classes`.
fn sample_loss(
    w: &ModelParams,
    x: &[f64],
    y: usize,
    z: &mut [f64],
    grad: Option<&mut [f64]>,
) -> f64 {
    w.logits_into(x, z);
    let lse = math::log_sum_exp(z);
    let loss = (lse - z[y]).max(0.0);
    if let Some(grad) = grad {
        let f = w.features;
        let (gw, gb) = grad.split_at_mut(w.classes * f);
        for k in 0..w.classes {
            let p = math::exp(z[k] - lse);
            let coeff = if k == y { p - 1.0 } else { p };
            for (g, &xj) in gw[k * f..(k + 1) * f].iter_mut().zip(x) {
                *g += coeff * xj;
            }
            gb[k] += coeff;
        }
    }
    loss
}

/// Per-sample cross-entropy of `w` on `indices`.
pub fn per_sample_losses(w: &ModelParams, ds: &LabeledDataset, indices: &[usize]) -> Result<LossReport> {
    check_batch(w, ds, indices)?;
    let mut z = vec![0.0; w.classes];
    let per_sample: Vec<f64> = indices
        .iter()
        .map(|&i| sample_loss(w, ds.row(i), ds.label(i), &mut z, None))
        .collect();
    Ok(LossReport {
        mean_loss: math::mean(&per_sample),
        per_sample,
    })
}

/// Mean loss `F_i(w)` over `indices` and its exact gradient.
pub fn loss_and_grad(w: &ModelParams, ds: &LabeledDataset, indices: &[usize]) -> Result<(f64, Vec<f64>)> {
    let (report, grad) = loss_report_and_grad(w, ds, indices)?;
    Ok((report.mean_loss, grad))
}

fn loss_report_and_grad(
    w: &ModelParams,
    ds: &LabeledDataset,
    indices: &[usize],
) -> Result<(LossReport, Vec<f64>)> {
    check_batch(w, ds, indices)?;
    let mut z = vec![0.0; w.classes];
    let mut grad = vec![0.0; w.len()];
    let per_sample: Vec<f64> = indices
        .iter()
        .map(|&i| sample_loss(w, ds.row(i), ds.label(i), &mut z, Some(&mut grad)))
        .collect();
    let scale = 1.0 / indices.len() as f64;
    grad.iter_mut().for_each(|g| *g *= scale);
    Ok((
        LossReport {
            mean_loss: math::mean(&per_sample),
            per_sample,
        },
        grad,
    ))
}

/// Runs `tau` mini-batch SGD steps on the shard.
///
/// Batches are drawn without replacement from a shuffled pass over the
/// shard; when fewer than `batch_size` unused samples remain the pass is
/// reshuffled. Indices within a batch are sorted, so a batch covering the
/// whole shard reproduces [`loss_and_grad`] on the sorted shard exactly.
/// The returned losses are those of the final batch, evaluated at the
/// parameters that step started from.
pub fn sgd_local_update(
    w: &ModelParams,
    shard: &ClientShard,
    ds: &LabeledDataset,
    eta: f64,
    tau: u32,
    batch_size: usize,
    seed: u64,
) -> Result<(ModelParams, LossReport)> {
    if !(eta.is_finite() && eta > 0.0) {
        return Err(Error::invalid("eta", "must be finite and positive"));
    }
    if tau == 0 {
        return Err(Error::invalid("tau", "must be at least 1"));
    }
    if batch_size == 0 {
        return Err(Error::invalid("batch_size", "must be at least 1"));
    }
    if shard.is_empty() {
        return Err(Error::Empty { what: "client shard" });
    }
    check_batch(w, ds, &shard.indices)?;

    let batch = batch_size.min(shard.len());
    let mut rng = seed::rng(seed);
    let mut order = shard.indices.clone();
    let mut cursor = order.len();
    let mut current = w.clone();
    let mut last = None;
    for _ in 0..tau {
        if cursor + batch > order.len() {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let mut idx = order[cursor..cursor + batch].to_vec();
        cursor += batch;
        idx.sort_unstable();
        let (report, grad) = loss_report_and_grad(&current, ds, &idx)?;
        current = current.descend(eta, &grad)?;
        last = Some(report);
    }
    Ok((current, last.expect("tau >= 1")))
}

/// Top-1 accuracy of `w` over `indices`.
pub fn accuracy(w: &ModelParams, ds: &LabeledDataset, indices: &[usize]) -> Result<f64> {
    check_batch(w, ds, indices)?;
    let correct = indices
        .iter()
        .filter(|&&i| w.predict(ds.row(i)) == ds.label(i))
        .count();
    Ok(correct as f64 / indices.len() as f64)
}

/// Empirical Lipschitz constant of the full-dataset loss.
///
/// Draws `trials` pairs of parameter vectors, each uniform in direction with
/// a norm uniform in `[0, radius]`, and returns the largest
/// `|F(w) - F(w')| / ||w - w'||`. Pairs closer than `1e-12` are skipped.
/// The draws for `trials = k` are a prefix of those for `trials = k + 1`.
pub fn estimate_lipschitz(ds: &LabeledDataset, trials: usize, radius: f64, seed: u64) -> Result<f64> {
    if trials == 0 {
        return Err(Error::invalid("trials", "must be at least 1"));
    }
    if !(radius.is_finite() && radius >= 0.0) {
        return Err(Error::invalid("radius", "must be finite and non-negative"));
    }
    if ds.is_empty() {
        return Err(Error::Empty { what: "dataset" });
    }
    let all: Vec<usize> = (0..ds.len()).collect();
    let (c, f) = (ds.num_classes(), ds.num_features());
    let dim = c * f + c;
    let mut rng = seed::rng(seed);
    let draw = |rng: &mut seed::SimRng| -> Vec<f64> {
        let dir: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let scale = rng.random::<f64>() * radius / math::norm(&dir).max(f64::MIN_POSITIVE);
        dir.into_iter().map(|v| v * scale).collect()
    };
    let mut best: f64 = 0.0;
    for _ in 0..trials {
        let a = ModelParams::from_values(c, f, draw(&mut rng))?;
        let b = ModelParams::from_values(c, f, draw(&mut rng))?;
        let diff: Vec<f64> = a.values.iter().zip(&b.values).map(|(x, y)| x - y).collect();
        let dist = math::norm(&diff);
        if dist < 1e-12 {
            continue;
        }
        let fa = per_sample_losses(&a, ds, &all)?.mean_loss;
        let fb = per_sample_losses(&b, ds, &all)?.mean_loss;
        best = best.max((fa - fb).abs() / dist);
    }
    Ok(best)
}

/// Upper bound on the per-sample gradient norm: `sqrt(2) * max ||[x, 1]||`.
/// The mean loss is Lipschitz with at most this constant.
pub fn lipschitz_bound(ds: &LabeledDataset) -> f64 {
    let max_sq = (0..ds.len())
        .map(|i| math::dot(ds.row(i), ds.row(i)) + 1.0)
        .fold(0.0, f64::max);
    math::sqrt(2.0) * math::sqrt(max_sq)
}

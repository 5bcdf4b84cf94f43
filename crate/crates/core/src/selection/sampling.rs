use alloc::vec::Vec;

use rand::Rng;

use crate::{seed, ClientId, Error, Result};

/// Weighted sampling without replacement by sequential draws.
///
/// Each pick draws one client with probability proportional to its weight
/// among those not yet picked, i.e. the remaining weights are renormalized
/// after every draw. Zero-weight clients are only picked once every
/// positive-weight client is exhausted, and then uniformly. Returns
/// `min(m, N)` ids in draw order.
pub fn sample_by_priority(weights: &[f64], m: usize, seed: u64) -> Result<Vec<ClientId>> {
    if m == 0 {
        return Err(Error::invalid("m", "must select at least one client"));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::invalid("weights", "must be finite and non-negative"));
    }
    let mut rng = seed::rng(seed);
    let mut remaining: Vec<usize> = (0..weights.len()).collect();
    let mut picked = Vec::with_capacity(m.min(weights.len()));
    while picked.len() < m && !remaining.is_empty() {
        let total: f64 = remaining.iter().map(|&i| weights[i]).sum();
        let pos = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (pos, &i) in remaining.iter().enumerate() {
                if weights[i] <= 0.0 {
                    continue;
                }
                acc += weights[i];
                chosen = Some(pos);
                if target < acc {
                    break;
                }
            }
            chosen.expect("positive total implies a positive weight")
        } else {
            rng.random_range(0..remaining.len())
        };
        picked.push(ClientId(remaining.remove(pos)));
    }
    Ok(picked)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exhaustive_draw_returns_every_client_once() {
        let mut ids = sample_by_priority(&[0.1, 0.2, 0.3, 0.4], 4, 5).unwrap();
        ids.sort();
        assert_eq!(ids, [ClientId(0), ClientId(1), ClientId(2), ClientId(3)]);
        assert_eq!(sample_by_priority(&[0.5, 0.5], 9, 5).unwrap().len(), 2);
    }

    #[test]
    fn zero_probability_client_is_never_first() {
        for seed in 0..200 {
            assert_eq!(sample_by_priority(&[1.0, 0.0], 1, seed).unwrap(), [ClientId(0)]);
        }
        // After the positive client is exhausted the zero-weight one fills in.
        assert_eq!(
            sample_by_priority(&[1.0, 0.0], 2, 1).unwrap(),
            [ClientId(0), ClientId(1)]
        );
    }

    #[test]
    fn rejects_zero_m() {
        assert!(sample_by_priority(&[1.0], 0, 1).is_err());
    }
}

use alloc::format;
use alloc::vec::Vec;

use super::PolicyParams;
use crate::client::ClientProfile;
use crate::{math, Error, Result};

/// Loss-importance term: `|k| * sqrt(mean(loss^2))` over a batch of `k`
/// per-sample losses.
pub fn statistical_utility(losses: &[f64]) -> Result<f64> {
    if losses.is_empty() {
        return Err(Error::Empty { what: "loss vector" });
    }
    if losses.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
        return Err(Error::invalid("losses", "must be finite and non-negative"));
    }
    let k = losses.len() as f64;
    let mean_sq = losses.iter().map(|l| l * l).sum::<f64>() / k;
    Ok(k * math::sqrt(mean_sq))
}

/// `(T / t)^beta` when the client is slower than the preferred round
/// duration (`T < t`), otherwise 1.
pub fn time_penalty(preferred_s: f64, round_time_s: f64, beta: f64) -> Result<f64> {
    if !(preferred_s.is_finite() && preferred_s > 0.0) {
        return Err(Error::invalid("preferred_round_s", "must be positive"));
    }
    if !(round_time_s.is_finite() && round_time_s > 0.0) {
        return Err(Error::invalid("round_time_s", "must be positive"));
    }
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(Error::invalid("beta", "must be finite and non-negative"));
    }
    Ok(if preferred_s < round_time_s {
        math::powf(preferred_s / round_time_s, beta)
    } else {
        1.0
    })
}

/// Resource priority `lambda = c_i d_i / (q_i r_i)`.
pub fn resource_priority(p: &ClientProfile) -> f64 {
    p.compute * p.data_size as f64 / (p.energy_rate * p.round_overhead)
}

/// Per-client inputs to the system part of the utility.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClientTerms {
    pub round_time_s: f64,
    /// `lambda`, possibly normalized by the population maximum.
    pub priority: f64,
    /// `gamma_i`: selected in the immediately preceding round.
    pub previously_selected: bool,
    pub participation: u32,
}

/// Every factor of the utility except the statistical one: time penalty,
/// resource boost `lambda^gamma` (only for clients strictly faster than `T`)
/// and participation decay `decay^max(0, count - round_cap)`.
pub fn system_factor(terms: &ClientTerms, params: &PolicyParams) -> Result<f64> {
    let t = terms.round_time_s;
    let penalty = time_penalty(params.preferred_round_s, t, params.beta)?;
    let boost = if params.preferred_round_s > t && terms.previously_selected {
        terms.priority
    } else {
        1.0
    };
    let excess = terms.participation.saturating_sub(params.round_cap);
    let decay = math::powf(params.decay, f64::from(excess));
    Ok(penalty * boost * decay)
}

/// Full client utility `U_i`.
pub fn fedfair3_utility(losses: &[f64], terms: &ClientTerms, params: &PolicyParams) -> Result<f64> {
    Ok(statistical_utility(losses)? * system_factor(terms, params)?)
}

/// Normalizes utilities to selection probabilities. All-zero utilities fall
/// back to uniform.
pub fn probabilities(utilities: &[f64]) -> Result<Vec<f64>> {
    if utilities.is_empty() {
        return Err(Error::Empty { what: "utility map" });
    }
    if let Some(bad) = utilities.iter().find(|u| !(u.is_finite() && **u >= 0.0)) {
        return Err(Error::invalid(
            "utilities",
            format!("{bad} is not a finite non-negative utility"),
        ));
    }
    let total: f64 = utilities.iter().sum();
    if total <= 0.0 {
        let uniform = 1.0 / utilities.len() as f64;
        return Ok(utilities.iter().map(|_| uniform).collect());
    }
    if !total.is_finite() {
        return Err(Error::invalid("utilities", "sum overflows"));
    }
    Ok(utilities.iter().map(|u| u / total).collect())
}

/// Client weight `alpha_i = p_i^q / (N (q + 1))`.
pub fn client_weight(p: f64, q: f64, n: usize) -> f64 {
    math::powf(p, q) / (n as f64 * (q + 1.0))
}

/// Checks that `sum p_i alpha_i F_i` and `sum p_i F_i^(q+1) / (N (q+1))` are
/// proportional term by term when `p_i ∝ F_i`. Returns the relative spread
/// `(max - min) / mean` of the per-client ratios, which is zero (up to
/// rounding) exactly when the two objectives agree up to a constant.
pub fn qfairness_proportionality_check(p: &[f64], losses: &[f64], q: f64, n: usize) -> Result<f64> {
    if p.len() != losses.len() {
        return Err(Error::CountMismatch {
            what: "probabilities vs losses",
            expected: losses.len(),
            found: p.len(),
        });
    }
    if p.is_empty() {
        return Err(Error::Empty { what: "probability vector" });
    }
    if losses.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
        return Err(Error::invalid("losses", "every loss must be positive"));
    }
    if p.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
        return Err(Error::invalid("probabilities", "every probability must be positive"));
    }
    let denom = n as f64 * (q + 1.0);
    let ratios: Vec<f64> = p
        .iter()
        .zip(losses)
        .map(|(&pi, &fi)| {
            let weighted = pi * client_weight(pi, q, n) * fi;
            let qfair = pi * math::powf(fi, q + 1.0) / denom;
            weighted / qfair
        })
        .collect();
    let max = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((max - min) / math::mean(&ratios))
}

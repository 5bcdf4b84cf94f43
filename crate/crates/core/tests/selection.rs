use fedfair_core::client::ClientProfile;
use fedfair_core::selection::{
    build_policy, client_weight, fedfair3_utility, probabilities, qfairness_proportionality_check,
    sample_by_priority, time_penalty, ClientTerms, PolicyKind, PolicyParams, PopulationView, SelectionState,
};
use fedfair_core::ClientId;
use proptest::prelude::*;

fn profile(i: usize, compute: f64, data: usize) -> ClientProfile {
    ClientProfile {
        id: ClientId(i),
        compute,
        data_size: data,
        energy_rate: 1.0,
        round_overhead: 0.5,
        bandwidth: 0.2,
    }
}

fn terms(t: f64) -> ClientTerms {
    ClientTerms {
        round_time_s: t,
        priority: 3.0,
        previously_selected: false,
        participation: 0,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn probabilities_lie_on_the_simplex(u in prop::collection::vec(0.0f64..1e6, 1..200)) {
        let p = probabilities(&u).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(p.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn q_zero_weights_are_exactly_one_over_n(p in 0.0f64..=1.0, n in 1usize..=100) {
        prop_assert_eq!(client_weight(p, 0.0, n), 1.0 / n as f64);
    }
}

proptest! {
    #[test]
    fn proportional_probabilities_match_qfair_objective(
        losses in prop::collection::vec(0.01f64..50.0, 2..100),
        q in prop::sample::select(vec![0.0, 1.0, 2.0, 5.0]),
    ) {
        let total: f64 = losses.iter().sum();
        let p: Vec<f64> = losses.iter().map(|f| f / total).collect();
        let spread = qfairness_proportionality_check(&p, &losses, q, losses.len()).unwrap();
        prop_assert!(spread <= 1e-9, "spread {spread}");
    }

    #[test]
    fn penalty_decreases_past_the_preferred_time(t_pref in 0.5f64..50.0, beta in 0.1f64..5.0, a in 1.0f64..10.0, b in 1.0f64..10.0) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assume!(hi - lo > 1e-6);
        let p_lo = time_penalty(t_pref, t_pref * (1.0 + lo), beta).unwrap();
        let p_hi = time_penalty(t_pref, t_pref * (1.0 + hi), beta).unwrap();
        prop_assert!(p_hi < p_lo);
        prop_assert_eq!(time_penalty(t_pref, t_pref / a, beta).unwrap(), 1.0);
        prop_assert_eq!(time_penalty(t_pref, t_pref * (1.0 + hi), 0.0).unwrap(), 1.0);
    }

    #[test]
    fn utility_grows_with_every_loss(losses in prop::collection::vec(0.0f64..10.0, 1..20), idx in any::<prop::sample::Index>(), bump in 0.01f64..5.0) {
        let params = PolicyParams::default();
        let before = fedfair3_utility(&losses, &terms(2.0), &params).unwrap();
        let mut more = losses.clone();
        more[idx.index(losses.len())] += bump;
        prop_assert!(fedfair3_utility(&more, &terms(2.0), &params).unwrap() > before);
    }

    #[test]
    fn scaling_utilities_changes_nothing(u in prop::collection::vec(0.01f64..100.0, 2..60), k in 0.01f64..100.0, seed in any::<u64>()) {
        let scaled: Vec<f64> = u.iter().map(|x| x * k).collect();
        let (p, ps) = (probabilities(&u).unwrap(), probabilities(&scaled).unwrap());
        for (a, b) in p.iter().zip(&ps) {
            prop_assert!((a - b).abs() <= 1e-12);
            prop_assert!((client_weight(*a, 2.0, u.len()) - client_weight(*b, 2.0, u.len())).abs() <= 1e-12);
        }
        let m = u.len() / 2;
        prop_assert_eq!(sample_by_priority(&u, m, seed).unwrap(), sample_by_priority(&scaled, m, seed).unwrap());
    }

    #[test]
    fn sampling_returns_distinct_ids(w in prop::collection::vec(0.0f64..5.0, 1..80), m in 1usize..100, seed in any::<u64>()) {
        let picked = sample_by_priority(&w, m, seed).unwrap();
        prop_assert_eq!(picked.len(), m.min(w.len()));
        let mut ids: Vec<usize> = picked.iter().map(|c| c.0).collect();
        ids.sort_unstable();
        ids.dedup();
        prop_assert_eq!(ids.len(), picked.len());
    }
}

#[test]
fn perturbing_one_probability_is_detected() {
    // Per-client ratios are (p_i / F_i)^q, so at q = 0 any p agrees.
    for q in [1.0, 2.0, 5.0] {
        let losses = [0.5, 1.0, 2.0, 4.0];
        let total: f64 = losses.iter().sum();
        let mut p: Vec<f64> = losses.iter().map(|f| f / total).collect();
        p[2] *= 1.1;
        assert!(qfairness_proportionality_check(&p, &losses, q, 4).unwrap() > 1e-3);
    }
}

#[test]
fn monte_carlo_frequency_matches_probability() {
    let hits = (0..100_000u64)
        .filter(|&s| sample_by_priority(&[0.75, 0.25], 1, s).unwrap()[0] == ClientId(0))
        .count();
    let freq = hits as f64 / 100_000.0;
    assert!((0.74..=0.76).contains(&freq), "{freq}");
}

#[test]
fn zero_probability_client_loses_to_any_positive_one() {
    for s in 0..500 {
        assert_eq!(sample_by_priority(&[1.0, 0.0], 1, s).unwrap(), vec![ClientId(0)]);
    }
}

#[test]
fn gamma_tracks_only_the_previous_round() {
    let mut state = SelectionState::new(3);
    state.record_round(&[(ClientId(0), vec![1.0]), (ClientId(1), vec![1.0])]).unwrap();
    state.record_round(&[(ClientId(1), vec![1.0]), (ClientId(2), vec![1.0])]).unwrap();
    let gamma: Vec<bool> = (0..3).map(|i| state.previously_selected(ClientId(i))).collect();
    assert_eq!(gamma, [false, true, true]);
    assert_eq!(state.participation_counts(), &[1, 2, 1]);
    assert!(state.record_round(&[(ClientId(0), vec![1.0]), (ClientId(0), vec![2.0])]).is_err());
    assert_eq!(state.completed_rounds(), 2, "failed record leaves state untouched");
}

#[test]
fn every_policy_emits_a_consistent_outcome() {
    let profiles: Vec<ClientProfile> = (0..12).map(|i| profile(i, 50.0 + 10.0 * i as f64, 20 + i)).collect();
    let times: Vec<f64> = (0..12).map(|i| 1.0 + i as f64).collect();
    let mut state = SelectionState::new(12);
    state
        .record_round(&(0..6).map(|i| (ClientId(i), vec![0.1 * (i + 1) as f64; 4])).collect::<Vec<_>>())
        .unwrap();
    let params = PolicyParams::default();
    for kind in PolicyKind::ALL {
        let view = PopulationView {
            profiles: &profiles,
            round_times: &times,
            state: &state,
        };
        let out = build_policy(kind, &params).select(&view, 5, 9).unwrap();
        assert!((out.probabilities.iter().sum::<f64>() - 1.0).abs() <= 1e-12, "{kind}");
        assert_eq!(out.selected.len(), 5);
        let q = match kind {
            PolicyKind::FedFair3 => params.q,
            PolicyKind::QFfl => params.q_large,
            _ => 0.0,
        };
        for (p, a) in out.probabilities.iter().zip(&out.weights) {
            assert!((client_weight(*p, q, 12) - a).abs() <= 1e-12, "{kind}");
        }
    }
}

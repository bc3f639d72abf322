use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use speckle_core::estimators::{
    count_net_candidates, mle_grid_ascent, mle_net_search, mle_net_search_with_cap, mle_projected_ascent,
    sufficient_statistic, sufficient_statistic_estimate, NetSpec, OptimizerConfig,
};
use speckle_core::likelihood::log_likelihood;
use speckle_core::model::{
    draw_operators, generate_instance, generate_trial_instance, make_signal, mse, observe, sample_signal_class,
    InstanceSpec,
};
use speckle_core::{ModelInstance, ObservationSet, RandomStream, Role, Signal};

/// Every grid signal with at most `k` pieces, by recursion over positions.
fn enumerate(n: usize, k: usize, grid: &[f64]) -> Vec<Vec<f64>> {
    fn rec(prefix: &mut Vec<f64>, pieces: usize, n: usize, k: usize, grid: &[f64], out: &mut Vec<Vec<f64>>) {
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        for &g in grid {
            let new_piece = prefix.last().is_some_and(|&l| l != g);
            let p = if prefix.is_empty() { 1 } else { pieces + usize::from(new_piece) };
            if p <= k {
                prefix.push(g);
                rec(prefix, p, n, k, grid, out);
                prefix.pop();
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), 0, n, k, grid, &mut out);
    out
}

fn tiny_instance(seed: u64, n: usize) -> (ModelInstance, ObservationSet) {
    let stream = RandomStream::new(seed, 0, 0, Role::Signal);
    let truth = sample_signal_class(&stream, n, 2.min(n), 1.0, 2.0).unwrap();
    generate_instance(seed, &InstanceSpec::new(3, n, 2, 0.5, false), &truth).unwrap()
}

#[test]
fn net_candidate_counts() {
    let (inst, obs) = tiny_instance(1, 2);
    let net = NetSpec::new(vec![1.0, 2.0], 1).unwrap();
    assert_eq!(mle_net_search(&inst, &obs, &net).unwrap().candidates_evaluated, 2);
    for g in 1..5 {
        let count = count_net_candidates(3, 2, g) as usize;
        assert_eq!(count, g + 2 * g * g);
        // Stars and bars with duplicates: each partition times g^pieces.
        let grid: Vec<f64> = (0..g).map(|i| 1.0 + i as f64).collect();
        let distinct = enumerate(3, 2, &grid).len();
        assert_eq!(count - distinct, 2 * g, "duplicates are the 2 split points of constant sequences");
    }
}

#[test]
fn net_search_beats_independent_enumerator() {
    let grid = vec![1.0, 1.25, 1.5, 1.75, 2.0];
    for seed in 0..8 {
        let n = 3 + (seed as usize % 3);
        let (inst, obs) = tiny_instance(100 + seed, n);
        let net = NetSpec::new(grid.clone(), 2).unwrap();
        let out = mle_net_search(&inst, &obs, &net).unwrap();
        let best = enumerate(n, 2, &grid)
            .into_iter()
            .map(|v| log_likelihood(&Signal::unchecked(v), &inst, &obs).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(out.log_likelihood >= best);
        assert!(out.log_likelihood - best < 1e-9);
    }
}

#[test]
fn net_search_cap() {
    let (inst, obs) = tiny_instance(3, 5);
    let net = NetSpec::uniform(1.0, 2.0, 9, 2).unwrap();
    let err = mle_net_search_with_cap(&inst, &obs, &net, 10).unwrap_err();
    assert_eq!(err.kind(), "SearchSpaceTooLarge");
}

#[test]
fn grid_ascent_matches_net_search() {
    let net = NetSpec::uniform(1.0, 2.0, 9, 2).unwrap();
    let cfg = OptimizerConfig::default();
    let mut hits = 0;
    for seed in 0..20 {
        let (inst, obs) = tiny_instance(200 + seed, 3 + seed as usize % 3);
        let exact = mle_net_search(&inst, &obs, &net).unwrap();
        let approx = mle_grid_ascent(&inst, &obs, &net, &cfg).unwrap();
        assert!(approx.log_likelihood <= exact.log_likelihood + 1e-9);
        if approx.log_likelihood >= exact.log_likelihood - 1e-6 {
            hits += 1;
        }
    }
    assert!(hits >= 18, "{hits}/20");
}

#[test]
fn duplicated_looks_give_identical_estimates() {
    let truth = make_signal(vec![1.2, 1.2, 1.2, 1.8, 1.8, 1.8], 1.0, 2.0, Some(2)).unwrap();
    let (one, obs1) = generate_instance(7, &InstanceSpec::new(4, 6, 1, 0.2, false), &truth).unwrap();
    let two = ModelInstance::from_operators(vec![one.operators[0].clone(); 2], 0.2, 7).unwrap();
    let obs2 = ObservationSet::new(vec![obs1.looks[0].clone(); 2]);
    let cfg = OptimizerConfig::default();
    let a = mle_projected_ascent(&one, &obs1, 2, 1.0, 2.0, &cfg).unwrap();
    let b = mle_projected_ascent(&two, &obs2, 2, 1.0, 2.0, &cfg).unwrap();
    assert_eq!(a.signal, b.signal);
    assert_eq!(b.log_likelihood, 2.0 * a.log_likelihood);
}

#[test]
fn many_looks_recover_signal() {
    let truth = make_signal(vec![1.2, 1.2, 1.8, 1.8], 1.0, 2.0, Some(2)).unwrap();
    let spec = InstanceSpec::new(4, 4, 512, 0.01, false);
    let cfg = OptimizerConfig::default();
    let good = (0..50u64)
        .filter(|&t| {
            let (inst, obs) = generate_trial_instance(5, t, &spec, &truth).unwrap();
            let out = mle_projected_ascent(&inst, &obs, 2, 1.0, 2.0, &cfg).unwrap();
            mse(&out.signal, &truth).unwrap() < 0.05
        })
        .count();
    assert!(good >= 45, "{good}/50");
}

#[test]
fn sufficient_statistic_is_exact_with_unit_speckle_energy() {
    let (n, m, looks) = (4, 8, 2);
    let truth = make_signal(vec![1.0, 1.0, 2.5, 2.5], 0.5, 3.0, Some(2)).unwrap();
    let spec = InstanceSpec::new(m, n, looks, 0.0, false);
    let inst = ModelInstance::from_operators(draw_operators(9, 0, &spec), 0.0, 9).unwrap();
    // Per coordinate (1/L) Σ w² = 1 with L = 2.
    let w1 = DVector::from_vec(vec![1.0, -1.0, 0.6, 1.2]);
    let w2 = w1.map(|w: f64| (2.0 - w * w).sqrt());
    let obs = observe(&inst, &truth, vec![w1, w2], vec![DVector::zeros(m); looks]).unwrap();
    let raw = sufficient_statistic(&inst, &obs).unwrap();
    for (r, x) in raw.iter().zip(truth.values()) {
        assert!((r - x).abs() < 1e-10, "{raw:?}");
    }
    let est = sufficient_statistic_estimate(&inst, &obs, 2, 0.5, 3.0).unwrap();
    assert!(mse(&est, &truth).unwrap() < 1e-18);
}

#[test]
fn sufficient_statistic_orthogonal_invariance() {
    let (n, m, looks) = (3, 6, 3);
    let truth = make_signal(vec![1.0, 2.0, 2.0], 0.5, 3.0, Some(2)).unwrap();
    let (inst, obs) = generate_instance(4, &InstanceSpec::new(m, n, looks, 0.0, false), &truth).unwrap();
    let g = DMatrix::from_row_slice(m, m, &RandomStream::new(5, 0, 0, Role::Auxiliary).normals(m * m));
    let q = g.qr().q();
    let rotated = ModelInstance::from_operators(inst.operators.iter().map(|a| &q * a).collect(), 0.0, 4).unwrap();
    let robs = ObservationSet::new(obs.looks.iter().map(|y| &q * y).collect());
    let a = sufficient_statistic(&inst, &obs).unwrap();
    let b = sufficient_statistic(&rotated, &robs).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn ascent_output_is_in_class(seed in 0u64..10_000, k in 1usize..4) {
        let n = 6;
        let stream = RandomStream::new(seed, 0, 0, Role::Signal);
        let truth = sample_signal_class(&stream, n, 3, 1.0, 2.0).unwrap();
        let (inst, obs) = generate_instance(seed, &InstanceSpec::new(3, n, 4, 0.4, false), &truth).unwrap();
        let cfg = OptimizerConfig { max_iters: 20, ..OptimizerConfig::default() };
        let out = mle_projected_ascent(&inst, &obs, k, 1.0, 2.0, &cfg).unwrap();
        prop_assert!(out.signal.pieces() <= k);
        prop_assert!(out.signal.values().iter().all(|v| (1.0..=2.0).contains(v)));
        prop_assert!(out.log_likelihood.is_finite());
    }
}

use std::collections::HashMap;

use ergokit::coupling::{
    build_product_chain, exact_tail, product_ergodicity, sample_pair_paths, simulate_coupling, tail_std_error,
    verify_coupling_lemma, MeetMode, MARGINAL_TOLERANCE,
};
use ergokit::random::{random_ergodic, random_irreducible, random_positive};
use ergokit::stationary::stationary_linear;
use ergokit::{Distribution, ErgodicityReport, StochasticMatrix};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn product_of_stationary_is_stationary(n in 1usize..6, seed in any::<u64>()) {
        let p = random_irreducible(n, 0.4, &mut rng(seed)).unwrap();
        let pi = stationary_linear(&p).unwrap().pi;
        let q = build_product_chain(&p).unwrap();
        prop_assert!(q.marginal_defect() <= MARGINAL_TOLERANCE);
        let outer: Vec<f64> = (0..n * n).map(|r| pi.get(r / n) * pi.get(r % n)).collect();
        let outer = Distribution::new(q.matrix().space().clone(), outer).unwrap();
        prop_assert!(q.matrix().stationarity_residual(&outer).unwrap() <= 1e-12);
    }

    #[test]
    fn product_ergodic_iff_base_ergodic(n in 1usize..6, density in 0.0f64..0.5, seed in any::<u64>()) {
        let p = random_irreducible(n, density, &mut rng(seed)).unwrap();
        prop_assert_eq!(product_ergodicity(&p), ErgodicityReport::analyze(&p).is_ergodic());
    }

    #[test]
    fn stuck_paths_follow_y_then_x(n in 2usize..5, seed in any::<u64>(), at in any::<bool>()) {
        let p = random_positive(n, &mut rng(seed)).unwrap();
        let mode = if at { MeetMode::AtState(0) } else { MeetMode::Anywhere };
        for run in sample_pair_paths(&p, (0, 1), 12, mode, 200, seed).unwrap() {
            match run.tau {
                Some(t) => {
                    prop_assert!(run.z[..=t] == run.y[..=t]);
                    prop_assert!(run.z[t..] == run.x[t..]);
                }
                None => prop_assert_eq!(&run.z, &run.y),
            }
        }
    }
}

fn path_probability(p: &StochasticMatrix, path: &[usize]) -> f64 {
    path.windows(2).map(|w| p.get(w[0], w[1])).product()
}

fn all_paths(n: usize, start: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![start]];
    for _ in 0..k {
        out = out
            .into_iter()
            .flat_map(|p| (0..n).map(move |s| { let mut q = p.clone(); q.push(s); q }))
            .collect();
    }
    out
}

// Goodness of fit of the empirical path law against the exact law of the
// chain started at `start`.
fn chi_square_p_value(p: &StochasticMatrix, start: usize, paths: &[&Vec<usize>]) -> f64 {
    let k = paths[0].len() - 1;
    let mut counts: HashMap<&[usize], u64> = HashMap::new();
    for path in paths {
        *counts.entry(path.as_slice()).or_default() += 1;
    }
    let total = paths.len() as f64;
    let mut stat = 0.0;
    let mut cells = 0;
    for path in all_paths(p.n(), start, k) {
        let prob = path_probability(p, &path);
        let observed = counts.get(path.as_slice()).copied().unwrap_or(0) as f64;
        if prob == 0.0 {
            assert_eq!(observed, 0.0, "impossible path {path:?} observed");
            continue;
        }
        let expected = prob * total;
        stat += (observed - expected).powi(2) / expected;
        cells += 1;
    }
    1.0 - ChiSquared::new((cells - 1) as f64).unwrap().cdf(stat)
}

#[test]
fn sticking_preserves_the_law_of_y() {
    let chains = [
        StochasticMatrix::from_rows(&[vec![0.8, 0.2], vec![0.3, 0.7]]).unwrap(),
        StochasticMatrix::from_rows(&[vec![0.5, 0.3, 0.2], vec![0.1, 0.6, 0.3], vec![0.4, 0.4, 0.2]]).unwrap(),
        StochasticMatrix::from_rows(&[vec![0.0, 0.7, 0.3], vec![0.5, 0.0, 0.5], vec![0.6, 0.4, 0.0]]).unwrap(),
    ];
    for (c, p) in chains.iter().enumerate() {
        for k in 1..=4 {
            for mode in [MeetMode::Anywhere, MeetMode::AtState(1)] {
                let runs = sample_pair_paths(p, (0, 1), k, mode, 100_000, 1000 + c as u64).unwrap();
                let z: Vec<&Vec<usize>> = runs.iter().map(|r| &r.z).collect();
                let y: Vec<&Vec<usize>> = runs.iter().map(|r| &r.y).collect();
                let pz = chi_square_p_value(p, 1, &z);
                let py = chi_square_p_value(p, 1, &y);
                assert!(pz >= 1e-3, "chain {c}, k={k}, {mode:?}: Z p-value {pz}");
                assert!(py >= 1e-3, "chain {c}, k={k}, {mode:?}: Y p-value {py}");
            }
        }
    }
}

#[test]
fn simulated_tail_matches_exact_absorption() {
    for seed in 0..4u64 {
        let p = random_ergodic(4, 0.4, &mut rng(seed)).unwrap();
        for mode in [MeetMode::Anywhere, MeetMode::AtState(2)] {
            let trace = simulate_coupling(&p, (0, 1), mode, 50_000, None, seed).unwrap();
            let x0 = Distribution::point_mass(p.space().clone(), 0).unwrap();
            let exact = exact_tail(&p, &x0, 1, mode, 15).unwrap();
            for (i, e) in exact.iter().enumerate() {
                let s = trace.survivors(i as u64);
                let se = tail_std_error(s, trace.trials);
                assert!((trace.tail(i as u64) - e).abs() <= 4.0 * se, "seed {seed} {mode:?} i={i}");
            }
        }
    }
}

#[test]
fn coupling_lemma_with_exact_tail() {
    // the lemma itself, with both sides exact
    for seed in 0..10u64 {
        let p = random_ergodic(5, 0.3, &mut rng(seed)).unwrap();
        let pi = stationary_linear(&p).unwrap().pi;
        let tail = exact_tail(&p, &pi, 2, MeetMode::Anywhere, 30).unwrap();
        let mut row = Distribution::point_mass(p.space().clone(), 2).unwrap();
        for t in tail {
            let tv = ergokit::tv_distance(&pi, &row).unwrap().value();
            assert!(tv <= t + 1e-12);
            row = p.evolve(&row, 1).unwrap();
        }
    }
}

#[test]
fn lemma_table_is_reproducible() {
    let p = random_positive(3, &mut rng(5)).unwrap();
    let pi = stationary_linear(&p).unwrap().pi;
    let a = verify_coupling_lemma(&p, &pi, 0, 10, 20_000, 9).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let b = pool.install(|| verify_coupling_lemma(&p, &pi, 0, 10, 20_000, 9).unwrap());
    assert_eq!(a, b);
    assert!(a.passed());
    let tails: Vec<f64> = a.rows.iter().map(|r| r.tail).collect();
    assert!(tails.windows(2).all(|w| w[1] <= w[0]));
}

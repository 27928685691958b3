use ergokit::random::{random_ergodic, random_irreducible, random_periodic, random_positive};
use ergokit::stationary::{
    balance_defect, enumerate_arborescences, monte_carlo_return, return_time_table, stationary_by_return_time,
    stationary_by_trees, stationary_linear, tree_weights, TreeMode, ENUMERATION_CAP,
};
use ergokit::{Error, StochasticMatrix};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn irreducible(n: usize, seed: u64) -> StochasticMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match seed % 3 {
        0 => random_irreducible(n, 0.3, &mut rng).unwrap(),
        1 => random_ergodic(n, 0.2, &mut rng).unwrap(),
        _ if n >= 2 && n % 2 == 0 => random_periodic(n, 2, 0.5, &mut rng).unwrap(),
        _ => random_positive(n, &mut rng).unwrap(),
    }
}

// Expected visits before returning to z, by propagating taboo mass for
// `depth` steps instead of solving the linear system.
fn truncated_visits(p: &StochasticMatrix, z: usize, depth: usize) -> Vec<f64> {
    let n = p.n();
    let mut visits = vec![0.0; n];
    visits[z] = 1.0;
    let mut mass: Vec<f64> = p.row(z).to_vec();
    for _ in 0..depth {
        mass[z] = 0.0;
        if mass.iter().sum::<f64>() < 1e-300 {
            break;
        }
        visits.iter_mut().zip(&mass).for_each(|(v, m)| *v += m);
        let mut next = vec![0.0; n];
        for (x, &m) in mass.iter().enumerate() {
            for (y, nx) in next.iter_mut().enumerate() {
                *nx += m * p.get(x, y);
            }
        }
        mass = next;
    }
    visits
}

// Cesàro average of the rows of P^t, valid for periodic chains too.
fn cesaro(p: &StochasticMatrix, depth: usize) -> Vec<f64> {
    let n = p.n();
    let mut row = vec![0.0; n];
    row[0] = 1.0;
    let mut acc = vec![0.0; n];
    for _ in 0..depth {
        acc.iter_mut().zip(&row).for_each(|(a, r)| *a += r);
        row = p.matrix().left_mul(&row);
    }
    acc.into_iter().map(|a| a / depth as f64).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn visits_match_truncated_series(n in 1usize..7, seed in any::<u64>()) {
        let p = irreducible(n, seed);
        let table = return_time_table(&p, 0).unwrap();
        let oracle = truncated_visits(&p, 0, 10_000);
        for (a, b) in table.visits.iter().zip(&oracle) {
            prop_assert!((a - b).abs() <= 1e-8 * b.max(1.0), "{} vs {}", a, b);
        }
    }

    #[test]
    fn linear_matches_cesaro_average(n in 1usize..7, seed in any::<u64>()) {
        let p = irreducible(n, seed);
        let pi = stationary_linear(&p).unwrap().pi;
        let oracle = cesaro(&p, 10_000);
        // Cesàro error decays like 1/depth
        for (a, b) in pi.probs().iter().zip(&oracle) {
            prop_assert!((a - b).abs() <= 1e-3);
        }
    }

    #[test]
    fn determinant_matches_enumeration(n in 1usize..8, seed in any::<u64>()) {
        let p = irreducible(n, seed);
        let (det, _) = tree_weights(&p, TreeMode::Determinant, ENUMERATION_CAP).unwrap();
        let (en, counts) = tree_weights(&p, TreeMode::Enumeration, ENUMERATION_CAP).unwrap();
        prop_assert!(counts.unwrap().iter().all(|&c| c >= 1));
        for (a, b) in det.iter().zip(&en) {
            prop_assert!((a - b).abs() <= 1e-10 * b.abs(), "{} vs {}", a, b);
        }
        prop_assert!(balance_defect(&p, &en).1 <= 1e-9);
    }

    #[test]
    fn arborescences_are_well_formed(n in 1usize..6, seed in any::<u64>()) {
        let p = irreducible(n, seed);
        for root in 0..n {
            for a in enumerate_arborescences(&p, root).unwrap() {
                prop_assert!(a.parent[root].is_none());
                let mut w = 1.0;
                for (x, y) in a.edges() {
                    prop_assert!(p.get(x, y) > 0.0);
                    w *= p.get(x, y);
                }
                prop_assert!((w - a.weight).abs() <= 1e-15);
                // every vertex reaches the root
                for start in 0..n {
                    let mut v = start;
                    for _ in 0..n {
                        if let Some(u) = a.parent[v] { v = u; }
                    }
                    prop_assert_eq!(v, root);
                }
            }
        }
    }

    #[test]
    fn return_time_identity(n in 1usize..8, seed in any::<u64>()) {
        let p = irreducible(n, seed);
        let r = stationary_by_return_time(&p).unwrap();
        let lin = stationary_linear(&p).unwrap();
        prop_assert!(r.pi.max_abs_diff(&lin.pi).unwrap() <= 1e-10);
        for x in 0..n {
            let e = return_time_table(&p, x).unwrap().expected_return;
            prop_assert!((lin.pi.get(x) * e - 1.0).abs() <= 1e-8);
        }
    }
}

#[test]
fn complete_digraph_arborescence_count() {
    // rooted spanning arborescences of the complete digraph on n vertices: n^(n-2)
    for n in 2..=6usize {
        let p = random_positive(n, &mut ChaCha8Rng::seed_from_u64(n as u64)).unwrap();
        let (_, counts) = tree_weights(&p, TreeMode::Enumeration, ENUMERATION_CAP).unwrap();
        assert!(counts.unwrap().iter().all(|&c| c == n.pow(n as u32 - 2)));
    }
}

#[test]
fn enumeration_cap_is_enforced() {
    let p = random_positive(9, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert!(matches!(stationary_by_trees(&p, TreeMode::Enumeration), Err(Error::TooLarge { n: 9, cap: 8 })));
    assert!(stationary_by_trees(&p, TreeMode::Determinant).is_ok());
}

#[test]
fn monte_carlo_return_times() {
    for seed in 0..5u64 {
        let p = irreducible(4, seed);
        let exact = return_time_table(&p, 1).unwrap().expected_return;
        let est = monte_carlo_return(&p, 1, 100_000, 77 + seed).unwrap();
        assert!((est.mean - exact).abs() <= 3.0 * est.std_error, "seed {seed}: {} vs {exact}", est.mean);
    }
}

//! Random chains for property tests and corpus runs.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::chain::StochasticMatrix;
use crate::error::{Error, Result};

fn normalized_rows(weights: Vec<Vec<f64>>) -> Result<StochasticMatrix> {
    let rows: Vec<Vec<f64>> = weights
        .into_iter()
        .map(|r| {
            let s: f64 = r.iter().sum();
            r.into_iter().map(|w| w / s).collect()
        })
        .collect();
    StochasticMatrix::from_rows(&rows)
}

/// Every entry drawn from `(0, 1]` before row normalization.
pub fn random_positive<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<StochasticMatrix> {
    if n == 0 {
        return Err(Error::EmptyStateSpace);
    }
    normalized_rows((0..n).map(|_| (0..n).map(|_| 1.0 - rng.random::<f64>()).collect()).collect())
}

/// A random Hamiltonian cycle plus each other edge with probability `density`,
/// weights drawn from `[0.1, 1)`. Irreducible, possibly periodic.
pub fn random_irreducible<R: Rng + ?Sized>(n: usize, density: f64, rng: &mut R) -> Result<StochasticMatrix> {
    if n == 0 {
        return Err(Error::EmptyStateSpace);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut w = vec![vec![0.0; n]; n];
    for i in 0..n {
        w[order[i]][order[(i + 1) % n]] = rng.random_range(0.1..1.0);
    }
    for row in w.iter_mut() {
        for v in row.iter_mut() {
            if *v == 0.0 && rng.random::<f64>() < density {
                *v = rng.random_range(0.1..1.0);
            }
        }
    }
    normalized_rows(w)
}

/// `random_irreducible` with a guaranteed self-loop, hence aperiodic.
pub fn random_ergodic<R: Rng + ?Sized>(n: usize, density: f64, rng: &mut R) -> Result<StochasticMatrix> {
    let base = random_irreducible(n, density, rng)?;
    let mut w = base.to_rows();
    let s = rng.random_range(0..n);
    if w[s][s] == 0.0 {
        w[s][s] = rng.random_range(0.1..1.0);
    }
    normalized_rows(w)
}

/// Irreducible chain whose states split into `d` cyclic classes, every edge
/// leading from class `c` to class `c + 1 (mod d)`. Needs `d ≥ 2` dividing `n`.
pub fn random_periodic<R: Rng + ?Sized>(n: usize, d: usize, density: f64, rng: &mut R) -> Result<StochasticMatrix> {
    if d < 2 || n % d != 0 {
        return Err(Error::InvalidParameter(format!("period {d} must be at least 2 and divide {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut class = vec![0; n];
    for (pos, &s) in order.iter().enumerate() {
        class[s] = pos % d;
    }
    let mut w = vec![vec![0.0; n]; n];
    for i in 0..n {
        w[order[i]][order[(i + 1) % n]] = rng.random_range(0.1..1.0);
    }
    for x in 0..n {
        for y in 0..n {
            if w[x][y] == 0.0 && class[y] == (class[x] + 1) % d && rng.random::<f64>() < density {
                w[x][y] = rng.random_range(0.1..1.0);
            }
        }
    }
    normalized_rows(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structure::ErgodicityReport;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn families_have_their_structure() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in 1..=7 {
            assert!(random_positive(n, &mut rng).unwrap().is_positive());
            assert!(ErgodicityReport::analyze(&random_irreducible(n, 0.2, &mut rng).unwrap()).irreducible);
            assert!(ErgodicityReport::analyze(&random_ergodic(n, 0.2, &mut rng).unwrap()).is_ergodic());
        }
        for (n, d) in [(2, 2), (4, 2), (6, 3), (6, 2)] {
            let r = ErgodicityReport::analyze(&random_periodic(n, d, 0.5, &mut rng).unwrap());
            assert!(r.irreducible && !r.aperiodic);
            assert!(r.periods.values().all(|p| p.unwrap() % d as u64 == 0));
        }
        assert!(random_periodic(5, 2, 0.5, &mut rng).is_err());
    }
}

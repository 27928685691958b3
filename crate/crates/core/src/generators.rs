//! Built-in chain families: lazy hypercube walks, random-to-top shuffles,
//! cycles, two-state chains and PageRank-style damped link graphs.

use crate::chain::{StateSpace, StochasticMatrix};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const MAX_HYPERCUBE_DIM: u32 = 12;
pub const MAX_DECK: usize = 5;

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

fn build(labels: Vec<String>, entries: Matrix) -> Result<StochasticMatrix> {
    let space = StateSpace::new(labels)?;
    StochasticMatrix::new(space, &entries.to_rows())
}

/// Lazy walk on `{0,1}^d`: hold with probability ½, otherwise flip a uniformly
/// chosen coordinate.
pub fn lazy_hypercube(d: u32) -> Result<StochasticMatrix> {
    if d == 0 || d > MAX_HYPERCUBE_DIM {
        return Err(invalid(format!("hypercube dimension must be in 1..={MAX_HYPERCUBE_DIM}, got {d}")));
    }
    let n = 1usize << d;
    let step = 1.0 / (2.0 * d as f64);
    let mut m = Matrix::zeros(n, n);
    for x in 0..n {
        m[(x, x)] = 0.5;
        for i in 0..d {
            m[(x, x ^ (1 << i))] = step;
        }
    }
    let labels = (0..n).map(|x| format!("{:0width$b}", x, width = d as usize)).collect();
    build(labels, m)
}

fn permutations(k: usize) -> Vec<Vec<u8>> {
    fn go(prefix: &mut Vec<u8>, rest: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
        if rest.is_empty() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..rest.len() {
            let c = rest.remove(i);
            prefix.push(c);
            go(prefix, rest, out);
            prefix.pop();
            rest.insert(i, c);
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::new(), &mut (1..=k as u8).collect(), &mut out);
    out
}

/// Card shuffle on a `k`-card deck: pick a card uniformly at random and place
/// it on top. States are deck orders, listed top card first.
pub fn top_to_random(k: usize) -> Result<StochasticMatrix> {
    if k == 0 || k > MAX_DECK {
        return Err(invalid(format!("deck size must be in 1..={MAX_DECK}, got {k}")));
    }
    let perms = permutations(k);
    let index: std::collections::HashMap<&[u8], usize> =
        perms.iter().enumerate().map(|(i, p)| (p.as_slice(), i)).collect();
    let n = perms.len();
    let mut m = Matrix::zeros(n, n);
    for (from, deck) in perms.iter().enumerate() {
        for pos in 0..k {
            let mut next = deck.clone();
            let card = next.remove(pos);
            next.insert(0, card);
            m[(from, index[next.as_slice()])] += 1.0 / k as f64;
        }
    }
    let labels = perms
        .iter()
        .map(|p| p.iter().map(|c| char::from(b'0' + c)).collect())
        .collect();
    build(labels, m)
}

/// Deterministic cycle `0 -> 1 -> ... -> L-1 -> 0`.
pub fn cycle(len: usize) -> Result<StochasticMatrix> {
    if len < 2 {
        return Err(invalid(format!("cycle length must be at least 2, got {len}")));
    }
    let mut m = Matrix::zeros(len, len);
    for i in 0..len {
        m[(i, (i + 1) % len)] = 1.0;
    }
    build((0..len).map(|i| i.to_string()).collect(), m)
}

/// `[[1−p, p], [q, 1−q]]`.
pub fn two_state(p: f64, q: f64) -> Result<StochasticMatrix> {
    if !(p > 0.0 && p <= 1.0 && q > 0.0 && q <= 1.0) {
        return Err(invalid(format!("two_state needs 0 < p, q <= 1, got p={p}, q={q}")));
    }
    StochasticMatrix::from_rows(&[vec![1.0 - p, p], vec![q, 1.0 - q]])
}

/// The periodic two-state chain `[[0,1],[1,0]]`.
pub fn flip() -> Result<StochasticMatrix> {
    StochasticMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]])
}

/// Every row uniform over `n` states.
pub fn uniform(n: usize) -> Result<StochasticMatrix> {
    if n == 0 {
        return Err(invalid("uniform chain needs at least one state"));
    }
    StochasticMatrix::from_rows(&vec![vec![1.0 / n as f64; n]; n])
}

/// Damped random surfer on a directed multigraph. Nodes are ordered by first
/// appearance in `edges`; a page with `k` of its `d` out-links pointing at
/// another gets weight `k/d`; pages without out-links jump uniformly.
pub fn pagerank<S: AsRef<str>>(edges: &[(S, S)], damping: f64) -> Result<StochasticMatrix> {
    if !(0.0..1.0).contains(&damping) {
        return Err(invalid(format!("damping must lie in [0, 1), got {damping}")));
    }
    let mut labels: Vec<String> = Vec::new();
    let mut lookup = std::collections::HashMap::new();
    let mut node = |name: &str, labels: &mut Vec<String>| -> usize {
        *lookup.entry(name.to_string()).or_insert_with(|| {
            labels.push(name.to_string());
            labels.len() - 1
        })
    };
    let pairs: Vec<(usize, usize)> = edges
        .iter()
        .map(|(a, b)| {
            let a = node(a.as_ref(), &mut labels);
            (a, node(b.as_ref(), &mut labels))
        })
        .collect();
    let n = labels.len();
    if n == 0 {
        return Err(invalid("edge list is empty"));
    }
    let mut links = Matrix::zeros(n, n);
    for &(a, b) in &pairs {
        links[(a, b)] += 1.0;
    }
    let teleport = (1.0 - damping) / n as f64;
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        let out: f64 = links.row(i).iter().sum();
        for j in 0..n {
            let follow = if out > 0.0 { links[(i, j)] / out } else { 1.0 / n as f64 };
            m[(i, j)] = damping * follow + teleport;
        }
    }
    build(labels, m)
}

/// Parses a whitespace-separated edge list (`from to` per line, `#` comments).
pub fn parse_edge_list(text: &str) -> Result<Vec<(String, String)>> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            let mut parts = l.split_whitespace();
            match (parts.next(), parts.next(), parts.next()) {
                (Some(a), Some(b), None) => Ok((a.to_string(), b.to_string())),
                _ => Err(Error::Parse(format!("line {}: expected `from to`", i + 1))),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structure::{primitivity_exponent, ErgodicityReport};

    fn exact_rows(p: &StochasticMatrix) -> bool {
        (0..p.n()).all(|i| (p.row(i).iter().sum::<f64>() - 1.0).abs() <= 1e-15)
    }

    #[test]
    fn cycle_has_period_length() {
        let c = cycle(3).unwrap();
        let r = ErgodicityReport::analyze(&c);
        assert!(r.irreducible);
        assert!(r.periods.values().all(|p| *p == Some(3)));
        assert!(cycle(1).is_err());
    }

    #[test]
    fn hypercube_dimension_one_is_uniform() {
        let p = lazy_hypercube(1).unwrap();
        assert_eq!(p.to_rows(), vec![vec![0.5, 0.5], vec![0.5, 0.5]]);
    }

    #[test]
    fn hypercube_rows() {
        for d in 1..=6 {
            let p = lazy_hypercube(d).unwrap();
            assert!(exact_rows(&p));
            assert_eq!(p.get(0, 0), 0.5);
            assert_eq!(p.get(0, 1), 1.0 / (2.0 * d as f64));
        }
        assert!(lazy_hypercube(0).is_err());
        assert!(lazy_hypercube(13).is_err());
    }

    #[test]
    fn top_to_random_three_cards() {
        let p = top_to_random(3).unwrap();
        assert_eq!(p.n(), 6);
        // Each of the 3 picks gives a distinct deck, each with mass 1/3.
        for i in 0..6 {
            let nz: Vec<f64> = p.row(i).iter().copied().filter(|&v| v > 0.0).collect();
            assert_eq!(nz.len(), 3);
            assert!(nz.iter().all(|&v| v == 1.0 / 3.0));
        }
        assert!(ErgodicityReport::analyze(&p).is_ergodic());
        // picking the top card keeps the deck in place
        let i = p.space().index_of("123").unwrap();
        assert_eq!(p.get(i, i), 1.0 / 3.0);
        let j = p.space().index_of("312").unwrap();
        assert_eq!(p.get(i, j), 1.0 / 3.0);
    }

    #[test]
    fn top_to_random_is_ergodic_for_all_decks() {
        for k in 2..=5 {
            let p = top_to_random(k).unwrap();
            assert!(ErgodicityReport::analyze(&p).is_ergodic(), "k={k}");
            assert!(exact_rows(&p));
        }
    }

    #[test]
    fn pagerank_is_positive_with_damping() {
        let edges = parse_edge_list("a b\nb c\nc a\na c # two links out of a\nd a\n").unwrap();
        let p = pagerank(&edges, 0.85).unwrap();
        assert!(p.is_positive());
        assert_eq!(primitivity_exponent(&p).unwrap(), 1);
        let a = p.space().index_of("a").unwrap();
        let b = p.space().index_of("b").unwrap();
        assert!((p.get(a, b) - (0.85 * 0.5 + 0.15 / 4.0)).abs() < 1e-15);
        // d has no in-links but links out; a dangling node would get a uniform row
        let dangling = pagerank(&[("x", "y")], 0.5).unwrap();
        assert_eq!(dangling.row(1), &[0.5, 0.5]);
        assert!(pagerank(&edges, 1.0).is_err());
        assert!(parse_edge_list("a b c").is_err());
    }

    #[test]
    fn two_state_params() {
        assert!(two_state(0.0, 0.5).is_err());
        assert!(two_state(0.2, 1.5).is_err());
        assert_eq!(two_state(1.0, 1.0).unwrap(), flip().unwrap());
    }
}

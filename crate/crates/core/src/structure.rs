//! Structural analysis of the transition graph: strongly connected
//! components, periods and the primitivity exponent.

use indexmap::IndexMap;
use serde::Serialize;

use crate::chain::{StateSpace, StochasticMatrix};
use crate::error::{Error, Result};

/// Directed graph with an edge `i -> j` exactly when `P(i,j) > 0`.
#[derive(Debug, Clone)]
pub struct TransitionGraph {
    space: StateSpace,
    adjacency: Vec<Vec<usize>>,
}

impl TransitionGraph {
    /// `adjacency[u]` must be sorted.
    pub(crate) fn from_adjacency(space: StateSpace, adjacency: Vec<Vec<usize>>) -> Self {
        debug_assert_eq!(space.len(), adjacency.len());
        Self { space, adjacency }
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn n(&self) -> usize {
        self.adjacency.len()
    }

    pub fn successors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adjacency[u].binary_search(&v).is_ok()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum()
    }
}

pub fn build_graph(p: &StochasticMatrix) -> TransitionGraph {
    let adjacency = (0..p.n())
        .map(|i| p.row(i).iter().enumerate().filter(|(_, &v)| v > 0.0).map(|(j, _)| j).collect())
        .collect();
    TransitionGraph { space: p.space().clone(), adjacency }
}

/// Strongly connected components in reverse topological order (sinks first).
pub fn strongly_connected_components(g: &TransitionGraph) -> Vec<Vec<usize>> {
    const UNVISITED: usize = usize::MAX;
    let n = g.n();
    let mut index = vec![UNVISITED; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut sccs = Vec::new();
    let mut next = 0;
    // (vertex, position in its successor list)
    let mut call: Vec<(usize, usize)> = Vec::new();

    for root in 0..n {
        if index[root] != UNVISITED {
            continue;
        }
        call.push((root, 0));
        index[root] = next;
        low[root] = next;
        next += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(&mut (v, ref mut pos)) = call.last_mut() {
            if let Some(&w) = g.adjacency[v].get(*pos) {
                *pos += 1;
                if index[w] == UNVISITED {
                    index[w] = next;
                    low[w] = next;
                    next += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                let mut comp = Vec::new();
                loop {
                    let w = stack.pop().expect("tarjan stack underflow");
                    on_stack[w] = false;
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                comp.sort_unstable();
                sccs.push(comp);
            }
        }
    }
    sccs
}

/// Irreducibility verdict together with the component decomposition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Irreducibility {
    pub irreducible: bool,
    pub sccs: Vec<Vec<usize>>,
}

pub fn is_irreducible(g: &TransitionGraph) -> Irreducibility {
    let sccs = strongly_connected_components(g);
    Irreducibility { irreducible: sccs.len() == 1, sccs }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Period of the component `members` (sorted), via BFS levels from its first
/// vertex: the gcd of `level(u) + 1 − level(v)` over internal edges.
fn component_period(g: &TransitionGraph, members: &[usize]) -> Option<u64> {
    let n = g.n();
    let mut inside = vec![false; n];
    members.iter().for_each(|&v| inside[v] = true);
    let mut level = vec![u64::MAX; n];
    let source = members[0];
    level[source] = 0;
    let mut queue = std::collections::VecDeque::from([source]);
    let mut period = 0;
    let mut internal_edges = false;
    while let Some(u) = queue.pop_front() {
        for &v in g.successors(u) {
            if !inside[v] {
                continue;
            }
            internal_edges = true;
            if level[v] == u64::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            } else {
                period = gcd(period, (level[u] + 1).abs_diff(level[v]));
            }
        }
    }
    internal_edges.then_some(period)
}

/// gcd of the lengths of closed walks through `state`.
pub fn period_of(g: &TransitionGraph, state: usize) -> Result<u64> {
    g.space.check_index(state)?;
    let comp = strongly_connected_components(g)
        .into_iter()
        .find(|c| c.binary_search(&state).is_ok())
        .expect("every vertex lies in a component");
    component_period(g, &comp).ok_or_else(|| Error::NoClosedWalk(g.space.label(state).to_string()))
}

/// Square boolean matrix with bit-packed rows.
#[derive(Clone, PartialEq, Eq)]
struct BitMatrix {
    n: usize,
    words: usize,
    bits: Vec<u64>,
}

impl BitMatrix {
    fn from_graph(g: &TransitionGraph) -> Self {
        let n = g.n();
        let words = n.div_ceil(64);
        let mut bits = vec![0u64; n * words];
        for u in 0..n {
            for &v in g.successors(u) {
                bits[u * words + v / 64] |= 1 << (v % 64);
            }
        }
        Self { n, words, bits }
    }

    fn row(&self, i: usize) -> &[u64] {
        &self.bits[i * self.words..(i + 1) * self.words]
    }

    fn product(&self, other: &Self) -> Self {
        let mut out = vec![0u64; self.bits.len()];
        for i in 0..self.n {
            let dst = &mut out[i * self.words..(i + 1) * self.words];
            for (w, &word) in self.row(i).iter().enumerate() {
                let mut word = word;
                while word != 0 {
                    let k = w * 64 + word.trailing_zeros() as usize;
                    word &= word - 1;
                    for (d, s) in dst.iter_mut().zip(other.row(k)) {
                        *d |= s;
                    }
                }
            }
        }
        Self { n: self.n, words: self.words, bits: out }
    }

    fn is_full(&self) -> bool {
        let tail = self.n % 64;
        let last_mask = if tail == 0 { u64::MAX } else { (1u64 << tail) - 1 };
        (0..self.n).all(|i| {
            let row = self.row(i);
            row[..self.words - 1].iter().all(|&w| w == u64::MAX) && row[self.words - 1] == last_mask
        })
    }
}

/// Wielandt's bound on the primitivity exponent of an `n`-state chain.
pub fn wielandt_bound(n: usize) -> u64 {
    let n = n as u64;
    (n - 1) * (n - 1) + 1
}

/// Minimal `m ≥ 1` with `P^m` entrywise positive.
pub fn primitivity_exponent(p: &StochasticMatrix) -> Result<u64> {
    let g = build_graph(p);
    let report = ErgodicityReport::from_graph(&g);
    if !report.irreducible {
        return Err(Error::NotErgodic("chain is reducible".into()));
    }
    if !report.aperiodic {
        return Err(Error::NotErgodic("chain is periodic".into()));
    }
    Ok(report.primitivity_exponent.expect("ergodic chains are primitive"))
}

fn boolean_exponent(g: &TransitionGraph) -> Option<u64> {
    let a = BitMatrix::from_graph(g);
    let mut power = a.clone();
    for m in 1..=wielandt_bound(g.n()) {
        if power.is_full() {
            return Some(m);
        }
        power = power.product(&a);
    }
    None
}

/// Irreducibility and periodicity verdicts for a chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ErgodicityReport {
    pub irreducible: bool,
    pub aperiodic: bool,
    /// Per-state period; `None` for states on no closed walk.
    pub periods: IndexMap<String, Option<u64>>,
    pub primitivity_exponent: Option<u64>,
    /// Components in reverse topological order.
    pub sccs: Vec<Vec<usize>>,
    space: StateSpace,
}

impl Serialize for ErgodicityReport {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_json().serialize(s)
    }
}

impl ErgodicityReport {
    pub fn analyze(p: &StochasticMatrix) -> Self {
        Self::from_graph(&build_graph(p))
    }

    pub fn from_graph(g: &TransitionGraph) -> Self {
        let Irreducibility { irreducible, sccs } = is_irreducible(g);
        let mut period_by_state = vec![None; g.n()];
        for comp in &sccs {
            let period = component_period(g, comp);
            comp.iter().for_each(|&v| period_by_state[v] = period);
        }
        let aperiodic = period_by_state.iter().all(|p| *p == Some(1));
        let primitivity_exponent =
            if irreducible && aperiodic { boolean_exponent(g) } else { None };
        let periods =
            g.space.labels().iter().cloned().zip(period_by_state).collect::<IndexMap<_, _>>();
        Self {
            irreducible,
            aperiodic,
            periods,
            primitivity_exponent,
            sccs,
            space: g.space.clone(),
        }
    }

    pub fn is_ergodic(&self) -> bool {
        self.irreducible && self.aperiodic
    }

    /// Components as state labels.
    pub fn labelled_sccs(&self) -> Vec<Vec<String>> {
        self.sccs
            .iter()
            .map(|c| c.iter().map(|&v| self.space.label(v).to_string()).collect())
            .collect()
    }

    /// `{"irreducible", "aperiodic", "periods", "primitivity_exponent", "sccs"}`.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "irreducible": self.irreducible,
            "aperiodic": self.aperiodic,
            "periods": self.periods,
            "primitivity_exponent": self.primitivity_exponent,
            "sccs": self.labelled_sccs(),
        })
    }
}
